// Copyright 2026 the ising-rg-spde authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Numerical laboratory for the regularized stochastic-quantization SPDE of the
//! 1D Ising renormalization.
//!
//! The crate is organized around the pieces of the model:
//!
//! * [`kernel`] — Dirichlet heat-kernel family `ρ̃`, noise covariance `𝒦`,
//!   spectral data of the covariance operators, Gram matrices and the
//!   Gersgorin eigenvalue floor.
//! * [`drift`] — the mollified sign drift `b = U_{ε,δ} + (1−γ)x` with exact
//!   piecewise branches and Gauss quadrature inside the transition bands.
//! * [`solver`] — spectral Galerkin / semi-implicit Euler–Maruyama integration
//!   of the field SPDE and the coupled gradient SPDE with shared Brownian
//!   increments.
//! * [`malliavin`] — the operator flows `A(t)`, `M̂(t)`, `𝒜`, `𝒜⁻¹`, the
//!   `J(s)` exponential bound and a Monte-Carlo verification of the
//!   integration-by-parts identity.
//! * [`functional`] — ensemble estimators and inequality verdicts: moments,
//!   entropy, log-Sobolev, Poincaré, covariance bound, partition function.
//! * [`rg`] — renormalization schedules, the log-Sobolev constant `C(T)` and
//!   the lattice correlation-decay driver.
//! * [`ising`] — exact 1D Ising references: transfer matrix, block-3
//!   decimation, discrete sign dynamics.

pub mod drift;
pub mod error;
pub mod functional;
pub mod ising;
pub mod kernel;
pub mod malliavin;
pub mod quad;
pub mod rg;
pub mod rng;
pub mod solver;

pub use drift::DriftParams;
pub use error::{Error, Result};
pub use functional::{CylindricalObservable, EstimateCi, Verdict};
pub use kernel::{GramMatrix, KernelParams};
pub use rg::{RgSchedule, ScheduleVariant};
pub use solver::{GradientField, ModelParams, SolverConfig, SpectralField, Trajectory};
