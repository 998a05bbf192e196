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

//! Shared fixtures for the benchmark suite.

use ising_rg_spde::solver::project_initial;
use ising_rg_spde::ModelParams;

/// Mid-size parameter set used across benches.
pub fn bench_params() -> ModelParams {
    ModelParams::new(0.1, 3.0, 0.25, 0.25, 0.05, 1.0, 1.0).expect("valid bench params")
}

/// Smooth low-mode initial condition.
pub fn bench_initial(n_modes: usize) -> Vec<f64> {
    project_initial(
        |x| 0.1 * (std::f64::consts::PI * x).sin() + 0.03 * (2.0 * std::f64::consts::PI * x).sin(),
        n_modes,
    )
}
