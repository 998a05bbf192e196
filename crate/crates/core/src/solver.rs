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

//! Spectral Galerkin time integration of the field SPDE
//!
//! ```text
//! dX = K/(4M²) ΔX dt + 2K X dt + b(X) dt + dW^ρ,   X(0,·) = X(1,·) = 0
//! ```
//!
//! and of the coupled gradient SPDE for `v = ∂ₓX` with shared Brownian
//! increments.
//!
//! The field lives on the sine basis `e_k = √2 sin(kπx)`, the gradient on
//! `√2 cos(kπx)`. Each step is semi-implicit Euler–Maruyama: the stiff
//! Laplacian is treated implicitly per mode, drift and noise explicitly:
//!
//! ```text
//! a_k ← [a_k + dt (2K a_k + ⟨b(X), e_k⟩) + e^{-k²π²ρ} ΔB^k] / (1 + dt K k²π²/(4M²))
//! ```
//!
//! The nonlinear projection uses collocation at `Q = 4N` uniform interior
//! nodes with trapezoid weights. Because `b(X(x))` extends to an odd periodic
//! C^∞ function, the trapezoid sums are spectrally accurate and `4N` nodes
//! suppress aliasing; for `k, m ≤ N` the discrete sine orthogonality is exact,
//! so in the linear regime every mode is an exact discrete Ornstein–Uhlenbeck
//! recursion.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::drift::{self, DriftParams};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;

/// All scalar parameters of the field equation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelParams {
    /// Coupling `K ≥ 0`.
    pub coupling: f64,
    /// Mass coupling `γ > 1`.
    pub gamma: f64,
    /// Drift regularization `ε ∈ (0, 1]`.
    pub epsilon: f64,
    /// Mollifier radius `δ ∈ (0, 1]`.
    pub delta: f64,
    /// Noise smoothing `ρ > 0`.
    pub rho: f64,
    /// Half-width `M` of the original interval `(-M, M)`.
    pub half_width: f64,
    /// Terminal time `T`.
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(
        coupling: f64,
        gamma: f64,
        epsilon: f64,
        delta: f64,
        rho: f64,
        half_width: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !coupling.is_finite() || coupling < 0.0 {
            return Err(Error::InvalidParameter {
                name: "K",
                reason: "must be nonnegative and finite",
                value: coupling,
            });
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "M",
                reason: "must be positive and finite",
                value: half_width,
            });
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "must be positive and finite",
                value: horizon,
            });
        }
        let mp = ModelParams {
            coupling,
            gamma,
            epsilon,
            delta,
            rho,
            half_width,
            horizon,
        };
        // Delegate range checks on (ε, δ, γ) and ρ.
        mp.drift_params()?;
        mp.kernel_params()?;
        Ok(mp)
    }

    pub fn drift_params(&self) -> Result<DriftParams> {
        DriftParams::new(self.epsilon, self.delta, self.gamma)
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        KernelParams::new(self.rho)
    }

    /// Laplacian coefficient `K/(4M²)` of the scaled equation.
    pub fn laplacian_coeff(&self) -> f64 {
        self.coupling / (4.0 * self.half_width * self.half_width)
    }

    /// Drift restoring rate in the linear zone: `γ − 1 + ε − 2K`.
    pub fn linear_rate(&self) -> f64 {
        self.gamma - 1.0 + self.epsilon - 2.0 * self.coupling
    }
}

/// Discretization controls.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    /// Number of sine modes `N`.
    pub n_modes: usize,
    /// Time step.
    pub dt: f64,
    /// Diagnostics switch: integrate with the drift `b` removed.
    pub drift_enabled: bool,
}

impl SolverConfig {
    pub const DEFAULT_MODES: usize = 32;
    pub const DEFAULT_DT: f64 = 1e-3;

    pub fn new(n_modes: usize, dt: f64) -> Self {
        SolverConfig {
            n_modes,
            dt,
            drift_enabled: true,
        }
    }

    /// Stability guard `1e-2 · min(1, 4M²/(K N² π²))`.
    pub fn stability_guard(mp: &ModelParams, n_modes: usize) -> f64 {
        let nf = n_modes as f64;
        let lap = mp.coupling * nf * nf * PI * PI / (4.0 * mp.half_width * mp.half_width);
        let cap = if lap > 0.0 { (1.0_f64).min(1.0 / lap) } else { 1.0 };
        1e-2 * cap
    }

    pub fn validate(&self, mp: &ModelParams) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::InvalidParameter {
                name: "n_modes",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive and finite",
                value: self.dt,
            });
        }
        let guard = Self::stability_guard(mp, self.n_modes);
        if self.dt > guard * (1.0 + 1e-12) {
            return Err(Error::UnstableTimeStep {
                dt: self.dt,
                guard,
            });
        }
        Ok(())
    }

    pub fn steps(&self, horizon: f64) -> usize {
        (horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Field snapshot as sine-mode coefficients: `X(x) = Σ a_k √2 sin(kπx)`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralField {
    pub sine_coeffs: Vec<f64>,
    pub time: f64,
}

impl SpectralField {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.sine_coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = (i + 1) as f64;
                a * std::f64::consts::SQRT_2 * (k * PI * x).sin()
            })
            .sum()
    }

    /// `(‖X‖_{L²}, ‖∂ₓX‖_{L²})` by Parseval.
    pub fn norms(&self) -> (f64, f64) {
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for (i, a) in self.sine_coeffs.iter().enumerate() {
            let k = (i + 1) as f64;
            l2 += a * a;
            h1 += k * PI * a * (k * PI * a);
        }
        (l2.sqrt(), h1.sqrt())
    }
}

/// Gradient snapshot as cosine-mode coefficients: `v(x) = Σ c_k √2 cos(kπx)`.
#[derive(Debug, Clone, Serialize)]
pub struct GradientField {
    pub cos_coeffs: Vec<f64>,
    pub time: f64,
}

impl GradientField {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.cos_coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = (i + 1) as f64;
                c * std::f64::consts::SQRT_2 * (k * PI * x).cos()
            })
            .sum()
    }

    pub fn norms(&self) -> (f64, f64) {
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for (i, c) in self.cos_coeffs.iter().enumerate() {
            let k = (i + 1) as f64;
            l2 += c * c;
            h1 += k * PI * c * (k * PI * c);
        }
        (l2.sqrt(), h1.sqrt())
    }
}

/// A stored trajectory with its per-step Brownian mode increments.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub fields: Vec<SpectralField>,
    /// `increments[i]` are the `ΔB^k` consumed by step `i`.
    pub increments: Vec<Vec<f64>>,
    pub seed: u64,
    pub dt: f64,
}

impl Trajectory {
    pub fn terminal(&self) -> &SpectralField {
        self.fields.last().expect("trajectory has at least one field")
    }
}

/// Gradient trajectory produced by integrating the gradient SPDE along a
/// stored field trajectory.
#[derive(Debug, Clone)]
pub struct GradientTrajectory {
    pub fields: Vec<GradientField>,
}

/// Project a closed-form initial condition onto the first `n_modes` sine
/// modes by collocation.
pub fn project_initial<F: Fn(f64) -> f64>(f: F, n_modes: usize) -> Vec<f64> {
    let q = 4 * n_modes;
    let h = 1.0 / (q + 1) as f64;
    let mut coeffs = vec![0.0; n_modes];
    for (i, c) in coeffs.iter_mut().enumerate() {
        let k = (i + 1) as f64;
        let mut sum = 0.0;
        for node in 1..=q {
            let x = node as f64 * h;
            sum += f(x) * std::f64::consts::SQRT_2 * (k * PI * x).sin();
        }
        *c = sum * h;
    }
    coeffs
}

/// Single-path integrator with reusable collocation tables.
///
/// Drives one trajectory step by step; callers can inspect the state, the
/// field values at the interior collocation nodes, and the increments the
/// last step consumed. Memory is O(N·Q), independent of the step count.
pub struct PathSim {
    dp: DriftParams,
    coupling: f64,
    lap_coeff: f64,
    dt: f64,
    drift_enabled: bool,
    n_modes: usize,
    n_nodes: usize,
    /// `sin_table[k * n_nodes + q] = √2 sin((k+1)π x_q)`, interior nodes.
    sin_table: Vec<f64>,
    node_weight: f64,
    /// Noise amplitudes `e^{-k²π²ρ}`.
    sigma: Vec<f64>,
    /// Implicit denominators `1 + dt·K k²π²/(4M²)`.
    denom: Vec<f64>,
    coeffs: Vec<f64>,
    node_values: Vec<f64>,
    projection: Vec<f64>,
    last_db: Vec<f64>,
    step_idx: usize,
    time: f64,
}

impl PathSim {
    pub fn new(mp: &ModelParams, cfg: &SolverConfig, u0: &[f64]) -> Result<Self> {
        let dp = mp.drift_params()?;
        Self::with_drift(mp, cfg, u0, dp)
    }

    /// Build with an already-constructed `DriftParams` (clones share the
    /// cached band tables, so ensemble runners build them once).
    pub fn with_drift(
        mp: &ModelParams,
        cfg: &SolverConfig,
        u0: &[f64],
        dp: DriftParams,
    ) -> Result<Self> {
        cfg.validate(mp)?;
        if u0.len() != cfg.n_modes {
            return Err(Error::domain(format!(
                "initial condition has {} coefficients, expected {}",
                u0.len(),
                cfg.n_modes
            )));
        }
        for &a in u0 {
            if !a.is_finite() {
                return Err(Error::NonFinite { name: "u0", value: a });
            }
        }
        let n = cfg.n_modes;
        let q = 4 * n;
        let h = 1.0 / (q + 1) as f64;
        let mut sin_table = vec![0.0; n * q];
        for k in 0..n {
            for node in 0..q {
                let x = (node + 1) as f64 * h;
                sin_table[k * q + node] =
                    std::f64::consts::SQRT_2 * ((k + 1) as f64 * PI * x).sin();
            }
        }
        let sigma = crate::kernel::mode_weights(n, mp.rho);
        let lap = mp.laplacian_coeff();
        let denom: Vec<f64> = (1..=n)
            .map(|k| {
                let kf = k as f64;
                1.0 + cfg.dt * lap * kf * kf * PI * PI
            })
            .collect();
        Ok(PathSim {
            dp,
            coupling: mp.coupling,
            lap_coeff: lap,
            dt: cfg.dt,
            drift_enabled: cfg.drift_enabled,
            n_modes: n,
            n_nodes: q,
            sin_table,
            node_weight: h,
            sigma,
            denom,
            coeffs: u0.to_vec(),
            node_values: vec![0.0; q],
            projection: vec![0.0; n],
            last_db: vec![0.0; n],
            step_idx: 0,
            time: 0.0,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> usize {
        self.step_idx
    }

    pub fn last_increments(&self) -> &[f64] {
        &self.last_db
    }

    pub fn drift_params(&self) -> &DriftParams {
        &self.dp
    }

    /// Interior collocation nodes used by the nonlinear projection.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.node_weight;
        (1..=self.n_nodes).map(move |q| q as f64 * h)
    }

    /// Current field values at the interior collocation nodes.
    ///
    /// Refreshes the internal buffer; cheap relative to a step.
    pub fn node_values(&mut self) -> &[f64] {
        self.refresh_node_values();
        &self.node_values
    }

    fn refresh_node_values(&mut self) {
        let q = self.n_nodes;
        self.node_values.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.n_modes {
            let a = self.coeffs[k];
            if a == 0.0 {
                continue;
            }
            let row = &self.sin_table[k * q..(k + 1) * q];
            for (val, s) in self.node_values.iter_mut().zip(row.iter()) {
                *val += a * s;
            }
        }
    }

    /// Evaluate the current field at the interior collocation nodes into a
    /// caller-owned buffer of length `4N`.
    pub fn eval_nodes_into(&self, out: &mut [f64]) {
        let q = self.n_nodes;
        assert_eq!(out.len(), q);
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.n_modes {
            let a = self.coeffs[k];
            if a == 0.0 {
                continue;
            }
            let row = &self.sin_table[k * q..(k + 1) * q];
            for (val, s) in out.iter_mut().zip(row.iter()) {
                *val += a * s;
            }
        }
    }

    /// Sine projection `⟨v, e_k⟩` of node values `v` for `k = 1..=N`, using
    /// the solver's own collocation rule.
    pub fn sine_projection_into(&self, values: &[f64], out: &mut [f64]) {
        let q = self.n_nodes;
        assert_eq!(values.len(), q);
        assert_eq!(out.len(), self.n_modes);
        for k in 0..self.n_modes {
            let row = &self.sin_table[k * q..(k + 1) * q];
            let mut sum = 0.0;
            for (v, s) in values.iter().zip(row.iter()) {
                sum += v * s;
            }
            out[k] = sum * self.node_weight;
        }
    }

    /// Values of the basis mode `e_k = √2 sin(kπ·)` at the interior nodes
    /// (`k` is 1-based, `k ≤ N`).
    pub fn mode_row(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.n_modes);
        let q = self.n_nodes;
        &self.sin_table[(k - 1) * q..k * q]
    }

    /// Squared `L²` norm of the spatial gradient of the current state.
    pub fn grad_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = (i + 1) as f64;
                (k * PI * a) * (k * PI * a)
            })
            .sum()
    }

    /// Advance one step, drawing mode increments from `rng`.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let sqrt_dt = self.dt.sqrt();
        for db in self.last_db.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *db = sqrt_dt * z;
        }
        self.advance_with_increments_internal()
    }

    /// Advance one step with externally supplied increments `ΔB^k`.
    pub fn advance_with_increments(&mut self, db: &[f64]) -> Result<()> {
        if db.len() != self.n_modes {
            return Err(Error::domain("increment vector length mismatch"));
        }
        self.last_db.copy_from_slice(db);
        self.advance_with_increments_internal()
    }

    fn advance_with_increments_internal(&mut self) -> Result<()> {
        let q = self.n_nodes;
        if self.drift_enabled {
            self.refresh_node_values();
            // Pointwise drift, then projection onto each sine mode.
            for v in self.node_values.iter_mut() {
                *v = drift::b(*v, &self.dp);
            }
            for k in 0..self.n_modes {
                let row = &self.sin_table[k * q..(k + 1) * q];
                let mut sum = 0.0;
                for (bv, s) in self.node_values.iter().zip(row.iter()) {
                    sum += bv * s;
                }
                self.projection[k] = sum * self.node_weight;
            }
        } else {
            self.projection.iter_mut().for_each(|p| *p = 0.0);
        }
        for k in 0..self.n_modes {
            let a = self.coeffs[k];
            let explicit =
                a + self.dt * (2.0 * self.coupling * a + self.projection[k])
                    + self.sigma[k] * self.last_db[k];
            self.coeffs[k] = explicit / self.denom[k];
        }
        self.step_idx += 1;
        self.time = self.step_idx as f64 * self.dt;
        for &a in &self.coeffs {
            if !a.is_finite() {
                return Err(Error::BlowUp {
                    step: self.step_idx,
                    time: self.time,
                });
            }
        }
        Ok(())
    }

    pub fn field(&self) -> SpectralField {
        SpectralField {
            sine_coeffs: self.coeffs.clone(),
            time: self.time,
        }
    }

    pub fn laplacian_coeff(&self) -> f64 {
        self.lap_coeff
    }
}

/// Integrate one trajectory, retaining every snapshot and all increments.
pub fn simulate(
    mp: &ModelParams,
    cfg: &SolverConfig,
    u0: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let steps = cfg.steps(mp.horizon);
    let mut sim = PathSim::new(mp, cfg, u0)?;
    let mut rng = crate::rng::replica_rng(seed, 0);
    let mut fields = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    fields.push(sim.field());
    for _ in 0..steps {
        sim.advance(&mut rng)?;
        increments.push(sim.last_increments().to_vec());
        fields.push(sim.field());
    }
    Ok(Trajectory {
        fields,
        increments,
        seed,
        dt: cfg.dt,
    })
}

/// Integrate the gradient SPDE along a stored trajectory, reusing its
/// Brownian increments.
///
/// The gradient noise mode `k` is `√2 kπ e^{-k²π²ρ} cos(kπx) ΔB^k` with the
/// same `ΔB^k` the field consumed; with `v0 = ∂ₓu0` the output is the
/// spatial derivative of the stored field (exactly so in the linear regime,
/// to O(dt) otherwise).
pub fn simulate_gradient(
    mp: &ModelParams,
    cfg: &SolverConfig,
    traj: &Trajectory,
    v0: &[f64],
) -> Result<GradientTrajectory> {
    cfg.validate(mp)?;
    let n = cfg.n_modes;
    if v0.len() != n {
        return Err(Error::domain(format!(
            "gradient initial condition has {} coefficients, expected {}",
            v0.len(),
            n
        )));
    }
    if traj.increments.len() + 1 != traj.fields.len() {
        return Err(Error::MissingIncrements);
    }
    for inc in &traj.increments {
        if inc.len() != n {
            return Err(Error::MissingIncrements);
        }
    }
    let dp = mp.drift_params()?;
    let lap = mp.laplacian_coeff();
    let dt = cfg.dt;
    let q = 4 * n;
    let h = 1.0 / (q + 1) as f64;
    // Cosine table on nodes 0..=Q+1 (endpoints carry half trapezoid weight).
    let n_nodes = q + 2;
    let mut cos_table = vec![0.0; n * n_nodes];
    let mut sin_table = vec![0.0; n * n_nodes];
    for k in 0..n {
        for node in 0..n_nodes {
            let x = node as f64 * h;
            cos_table[k * n_nodes + node] =
                std::f64::consts::SQRT_2 * ((k + 1) as f64 * PI * x).cos();
            sin_table[k * n_nodes + node] =
                std::f64::consts::SQRT_2 * ((k + 1) as f64 * PI * x).sin();
        }
    }
    let sigma = crate::kernel::mode_weights(n, mp.rho);
    let denom: Vec<f64> = (1..=n)
        .map(|k| {
            let kf = k as f64;
            1.0 + dt * lap * kf * kf * PI * PI
        })
        .collect();

    let mut c = v0.to_vec();
    let mut fields = Vec::with_capacity(traj.fields.len());
    fields.push(GradientField {
        cos_coeffs: c.clone(),
        time: 0.0,
    });
    let mut x_nodes = vec![0.0; n_nodes];
    let mut v_nodes = vec![0.0; n_nodes];
    for (i, db) in traj.increments.iter().enumerate() {
        let a = &traj.fields[i].sine_coeffs;
        x_nodes.iter_mut().for_each(|v| *v = 0.0);
        v_nodes.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n {
            let (ak, ck) = (a[k], c[k]);
            let srow = &sin_table[k * n_nodes..(k + 1) * n_nodes];
            let crow = &cos_table[k * n_nodes..(k + 1) * n_nodes];
            for node in 0..n_nodes {
                x_nodes[node] += ak * srow[node];
                v_nodes[node] += ck * crow[node];
            }
        }
        // Pointwise b'(X)v, then cosine projection with trapezoid weights.
        for node in 0..n_nodes {
            v_nodes[node] *= drift::b_prime(x_nodes[node], &dp);
        }
        for k in 0..n {
            let crow = &cos_table[k * n_nodes..(k + 1) * n_nodes];
            let mut sum = 0.5 * (v_nodes[0] * crow[0] + v_nodes[n_nodes - 1] * crow[n_nodes - 1]);
            for node in 1..n_nodes - 1 {
                sum += v_nodes[node] * crow[node];
            }
            let proj = sum * h;
            let kpi = (k + 1) as f64 * PI;
            let explicit = c[k] + dt * (2.0 * mp.coupling * c[k] + proj) + kpi * sigma[k] * db[k];
            c[k] = explicit / denom[k];
        }
        for &v in &c {
            if !v.is_finite() {
                return Err(Error::BlowUp {
                    step: i + 1,
                    time: (i + 1) as f64 * dt,
                });
            }
        }
        fields.push(GradientField {
            cos_coeffs: c.clone(),
            time: (i + 1) as f64 * dt,
        });
    }
    Ok(GradientTrajectory { fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::trapezoid_unit;
    use crate::rng;

    fn mp_linear() -> ModelParams {
        // ρ = 0.5 leaves almost no noise, so paths started near 0.1·sin(πx)
        // never reach the transition band and the dynamics is exactly linear.
        ModelParams::new(0.25, 5.0, 0.1, 0.1, 0.5, 1.0, 1.0).unwrap()
    }

    fn mp_ou() -> ModelParams {
        // ρ = 0.02 keeps real noise in all four tested modes while γ = 5
        // still confines paths to the linear zone up to invisible excursions.
        ModelParams::new(0.25, 5.0, 0.1, 0.1, 0.02, 1.0, 1.0).unwrap()
    }

    /// Exact OU moments for the continuous per-mode dynamics
    /// da = μ a dt + σ dB.
    fn ou_mean(a0: f64, mu: f64, t: f64) -> f64 {
        a0 * (mu * t).exp()
    }
    fn ou_var(sigma: f64, mu: f64, t: f64) -> f64 {
        if mu.abs() < 1e-14 {
            sigma * sigma * t
        } else {
            sigma * sigma * ((2.0 * mu * t).exp() - 1.0) / (2.0 * mu)
        }
    }

    #[test]
    fn norms_single_mode_and_zero() {
        let f = SpectralField {
            sine_coeffs: vec![1.0, 0.0],
            time: 0.0,
        };
        let (l2, h1) = f.norms();
        assert!((l2 - 1.0).abs() < 1e-15);
        assert!((h1 - PI).abs() < 1e-12);
        let z = SpectralField {
            sine_coeffs: vec![0.0; 4],
            time: 0.0,
        };
        assert_eq!(z.norms(), (0.0, 0.0));
    }

    #[test]
    fn norms_match_quadrature() {
        let f = SpectralField {
            sine_coeffs: vec![0.3, -0.2, 0.11, 0.07, -0.05],
            time: 0.0,
        };
        let l2_quad = trapezoid_unit(|x| f.evaluate(x) * f.evaluate(x), 4096);
        let (l2, _) = f.norms();
        assert!((l2 * l2 - l2_quad).abs() < 1e-10);
    }

    #[test]
    fn evaluate_boundary_and_midpoint() {
        let f = SpectralField {
            sine_coeffs: vec![0.7],
            time: 0.0,
        };
        assert!(f.evaluate(0.0).abs() < 1e-15);
        assert!(f.evaluate(1.0).abs() < 1e-12);
        assert!((f.evaluate(0.5) - 0.7 * std::f64::consts::SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn stability_guard_rejects_large_dt() {
        let mp = mp_linear();
        let cfg = SolverConfig::new(8, 1e-2);
        assert!(matches!(
            cfg.validate(&mp),
            Err(Error::UnstableTimeStep { .. })
        ));
    }

    #[test]
    fn seed_determinism() {
        let mp = mp_linear();
        let cfg = SolverConfig::new(4, 1e-4);
        let u0 = project_initial(|x| 0.1 * (PI * x).sin(), 4);
        let t1 = simulate(&mp, &cfg, &u0, 42).unwrap();
        let t2 = simulate(&mp, &cfg, &u0, 42).unwrap();
        for (a, b) in t1.fields.iter().zip(t2.fields.iter()) {
            assert_eq!(a.sine_coeffs, b.sine_coeffs);
        }
    }

    #[test]
    fn driftless_mode_is_martingale() {
        // b disabled, K = 0: a_1 is a pure scaled Brownian motion.
        let mp = ModelParams::new(0.0, 5.0, 0.1, 0.1, 0.5, 1.0, 0.25).unwrap();
        let mut cfg = SolverConfig::new(2, 1e-3);
        cfg.drift_enabled = false;
        let a0 = 0.4;
        let replicas = 10_000;
        let steps = cfg.steps(mp.horizon);
        let out = rng::run_replicas(replicas, 2024, |_, rng| {
            let mut sim = PathSim::new(&mp, &cfg, &[a0, 0.0]).unwrap();
            for _ in 0..steps {
                sim.advance(rng)?;
            }
            Ok(sim.coeffs()[0])
        })
        .unwrap();
        let (mean, se) = rng::mean_stderr(&out);
        assert!(
            (mean - a0).abs() <= 3.0 * se,
            "martingale mean {mean} vs {a0} (se {se})"
        );
        // Variance should be e^{-2π²ρ}·t.
        let sigma = (-PI * PI * mp.rho).exp();
        let expect_var = sigma * sigma * mp.horizon;
        let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (replicas as f64 - 1.0);
        assert!((var / expect_var - 1.0).abs() < 0.05);
    }

    #[test]
    fn linear_regime_matches_ou_oracle() {
        let mp = mp_ou();
        let cfg = SolverConfig::new(4, 2e-4);
        let u0 = vec![0.05, 0.03, 0.0, 0.01];
        let replicas = 10_000;
        let steps = cfg.steps(0.5);
        let out = rng::run_replicas(replicas, 7, |_, rng| {
            let mut sim = PathSim::new(&mp, &cfg, &u0).unwrap();
            for _ in 0..steps {
                sim.advance(rng)?;
            }
            Ok(sim.coeffs().to_vec())
        })
        .unwrap();
        let sigma = crate::kernel::mode_weights(cfg.n_modes, mp.rho);
        let lap = mp.laplacian_coeff();
        let slope = 1.0 - mp.gamma - mp.epsilon;
        for k in 0..cfg.n_modes {
            let kf = (k + 1) as f64;
            let mu = -lap * kf * kf * PI * PI + 2.0 * mp.coupling + slope;
            let samples: Vec<f64> = out.iter().map(|c| c[k]).collect();
            let (mean, se) = rng::mean_stderr(&samples);
            let m_exact = ou_mean(u0[k], mu, 0.5);
            assert!(
                (mean - m_exact).abs() <= 3.0 * se + 1e-12,
                "mode {k}: mean {mean} vs {m_exact} (se {se})"
            );
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (replicas as f64 - 1.0);
            let v_exact = ou_var(sigma[k], mu, 0.5);
            assert!(
                (var / v_exact - 1.0).abs() < 0.05,
                "mode {k}: var {var} vs {v_exact}"
            );
        }
    }

    #[test]
    fn gradient_matches_termwise_derivative_in_linear_regime() {
        let mp = mp_linear();
        let cfg = SolverConfig::new(6, 2e-4);
        let u0 = project_initial(|x| 0.1 * (PI * x).sin() + 0.02 * (2.0 * PI * x).sin(), 6);
        let traj = simulate(&mp, &cfg, &u0, 99).unwrap();
        let v0: Vec<f64> = u0
            .iter()
            .enumerate()
            .map(|(i, a)| (i + 1) as f64 * PI * a)
            .collect();
        let grad = simulate_gradient(&mp, &cfg, &traj, &v0).unwrap();
        for (f, g) in traj.fields.iter().zip(grad.fields.iter()) {
            for k in 0..cfg.n_modes {
                let expect = (k + 1) as f64 * PI * f.sine_coeffs[k];
                let got = g.cos_coeffs[k];
                let scale = expect.abs().max(1e-3);
                assert!(
                    (got - expect).abs() / scale < 1e-8,
                    "t={}: mode {k}: {got} vs {expect}",
                    f.time
                );
            }
        }
    }

    #[test]
    fn gradient_zero_solution_without_noise() {
        // Enormous rho kills all mode weights, so the noise is exactly zero;
        // with v0 = 0 and b' < 0 the gradient stays identically zero.
        let mp = ModelParams::new(0.1, 3.0, 0.2, 0.1, 1e4, 1.0, 0.2).unwrap();
        let cfg = SolverConfig::new(4, 1e-3);
        let u0 = vec![0.05, 0.0, 0.0, 0.0];
        let traj = simulate(&mp, &cfg, &u0, 5).unwrap();
        let grad = simulate_gradient(&mp, &cfg, &traj, &[0.0; 4]).unwrap();
        for g in &grad.fields {
            assert!(g.cos_coeffs.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn gradient_noise_variance() {
        // Cosine-mode-k increment variance is k²π² e^{-2k²π²ρ} dt.
        let mp = ModelParams::new(0.0, 5.0, 0.1, 0.1, 0.05, 1.0, 1.0).unwrap();
        let dt: f64 = 1e-3;
        let sigma = crate::kernel::mode_weights(3, mp.rho);
        let draws = 200_000;
        let mut r = rng::replica_rng(3, 0);
        for k in 0..3 {
            let kpi = (k + 1) as f64 * PI;
            let mut sq = 0.0;
            for _ in 0..draws {
                let z: f64 = rand::Rng::sample(&mut r, rand_distr::StandardNormal);
                let inc = kpi * sigma[k] * dt.sqrt() * z;
                sq += inc * inc;
            }
            let var = sq / draws as f64;
            let expect = kpi * kpi * sigma[k] * sigma[k] * dt;
            let se = expect * (2.0 / draws as f64).sqrt();
            assert!((var - expect).abs() < 3.0 * se);
        }
    }

    #[test]
    fn nonlinear_gradient_gap_first_order_in_dt() {
        // Mildly nonlinear regime; same Brownian path at dt and dt/2 via
        // increment refinement. The gap between the gradient equation and the
        // termwise derivative of the field should halve with dt.
        let mp = ModelParams::new(0.05, 1.5, 0.4, 0.3, 0.02, 1.0, 0.25).unwrap();
        let n = 6;
        let fine_cfg = SolverConfig::new(n, 5e-4);
        let coarse_cfg = SolverConfig::new(n, 1e-3);
        let u0 = project_initial(|x| 0.8 * (PI * x).sin(), n);
        let v0: Vec<f64> = u0
            .iter()
            .enumerate()
            .map(|(i, a)| (i + 1) as f64 * PI * a)
            .collect();

        let gap = |cfg: &SolverConfig, increments: &[Vec<f64>]| -> f64 {
            let mut mp_run = mp;
            mp_run.horizon = 0.25;
            let steps = cfg.steps(mp_run.horizon);
            assert_eq!(increments.len(), steps);
            let mut sim = PathSim::new(&mp_run, cfg, &u0).unwrap();
            let mut fields = vec![sim.field()];
            for db in increments {
                sim.advance_with_increments(db).unwrap();
                fields.push(sim.field());
            }
            let traj = Trajectory {
                fields,
                increments: increments.to_vec(),
                seed: 0,
                dt: cfg.dt,
            };
            let grad = simulate_gradient(&mp_run, cfg, &traj, &v0).unwrap();
            let term = traj.terminal();
            let g = grad.fields.last().unwrap();
            let mut err = 0.0;
            for k in 0..n {
                let d = g.cos_coeffs[k] - (k + 1) as f64 * PI * term.sine_coeffs[k];
                err += d * d;
            }
            err.sqrt()
        };

        // One Brownian path sampled at the fine resolution.
        let fine_steps = fine_cfg.steps(0.25);
        let mut r = rng::replica_rng(31, 0);
        let fine_inc: Vec<Vec<f64>> = (0..fine_steps)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let z: f64 = rand::Rng::sample(&mut r, rand_distr::StandardNormal);
                        fine_cfg.dt.sqrt() * z
                    })
                    .collect()
            })
            .collect();
        let coarse_inc: Vec<Vec<f64>> = fine_inc
            .chunks(2)
            .map(|pair| (0..n).map(|k| pair[0][k] + pair[1][k]).collect())
            .collect();

        let gap_fine = gap(&fine_cfg, &fine_inc);
        let gap_coarse = gap(&coarse_cfg, &coarse_inc);
        let ratio = gap_coarse / gap_fine;
        assert!(
            (1.4..=3.0).contains(&ratio),
            "expected ~2 (first order), got {ratio} ({gap_coarse} / {gap_fine})"
        );
    }

    #[test]
    fn blow_up_reports_first_bad_step() {
        // Stiff drift with a time step that passes the Laplacian guard but
        // violates drift stability: the state grows until it overflows.
        let mp = ModelParams::new(0.0, 5000.0, 0.5, 0.5, 0.5, 1.0, 10.0).unwrap();
        let cfg = SolverConfig::new(2, 5e-3);
        let err = simulate(&mp, &cfg, &[0.5, 0.0], 1).unwrap_err();
        match err {
            Error::BlowUp { step, .. } => assert!(step > 0),
            other => panic!("expected blow-up, got {other}"),
        }
    }

    #[test]
    fn project_initial_recovers_sine_modes() {
        let coeffs = project_initial(|x| 0.1 * (PI * x).sin(), 8);
        assert!((coeffs[0] - 0.1 / std::f64::consts::SQRT_2).abs() < 1e-12);
        for &c in &coeffs[1..] {
            assert!(c.abs() < 1e-12);
        }
    }
}
