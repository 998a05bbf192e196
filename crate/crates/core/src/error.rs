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

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    #[error("non-finite input `{name}` = {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("series did not converge within {max_terms} terms (tol {tol:e})")]
    SeriesDivergence { max_terms: usize, tol: f64 },

    #[error("trajectory blew up: first non-finite state at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("time step {dt:e} exceeds stability guard {guard:e}")]
    UnstableTimeStep { dt: f64, guard: f64 },

    #[error("trajectory does not retain Brownian increments")]
    MissingIncrements,

    #[error("operator flow failure: {0}")]
    OperatorFlow(String),

    #[error("ensemble too small: {got} replicas, need at least {need}")]
    EnsembleTooSmall { got: usize, need: usize },

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("{0}")]
    Domain(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}
