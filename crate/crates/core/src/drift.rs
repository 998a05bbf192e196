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

//! The mollified drift family.
//!
//! `g_ε` is a piecewise-linear increasing regularization of `sgn`, and
//! `U_{ε,δ} = −J̃^δ ∗ g_ε^{-1}` is its mollified negative inverse. Outside the
//! transition bands `(±1∓δ, ±1±δ)` the convolution collapses to closed
//! forms; inside a band it is evaluated with a 64-point Gauss–Legendre rule
//! split at the kink of `g_ε^{-1}`. Band values sit on a Chebyshev
//! interpolant of those quadratures (built once per parameter set), so the
//! solver's hot loop never re-integrates; the interpolant reproduces the
//! direct quadrature to ~1e-12. The drift of the field equation is
//! `b(x) = U_{ε,δ}(x) + (1−γ)x`, so `b′` is globally pinched between
//! `1−γ−1/ε` and `1−γ−ε`.
//!
//! `U` is odd and `U′` even; the mirrored band is evaluated through
//! `U(−x) = −U(x)`, which is exact because `g_ε^{-1}` is odd and `J̃^δ` even.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, GaussRule};

const BAND_QUADRATURE_POINTS: usize = 64;
const BAND_CHEBYSHEV_POINTS: usize = 64;

/// Chebyshev interpolant on a band `[lo, hi]`, evaluated by Clenshaw
/// recursion.
#[derive(Debug, Clone)]
struct BandInterpolant {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl BandInterpolant {
    /// Interpolate `f` at the Chebyshev points of `[lo, hi]`.
    fn build<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Self {
        use std::f64::consts::PI as FPI;
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let theta = FPI * (j as f64 + 0.5) / n as f64;
                let x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * theta.cos();
                f(x)
            })
            .collect();
        let mut coeffs = vec![0.0; n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut sum = 0.0;
            for (j, v) in values.iter().enumerate() {
                sum += v * (FPI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
            }
            *c = 2.0 * sum / n as f64;
        }
        coeffs[0] *= 0.5;
        BandInterpolant { lo, hi, coeffs }
    }

    fn eval(&self, x: f64) -> f64 {
        let u = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let u2 = 2.0 * u;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + u2 * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + u * b1 - b2
    }
}

/// Parameters of the mollified drift.
///
/// Construction integrates the mollifier and fits the band interpolants
/// (~1 ms); clones share the cached tables, so per-path copies are free.
#[derive(Debug, Clone)]
pub struct DriftParams {
    /// Regularization slope `ε ∈ (0, 1]`.
    pub epsilon: f64,
    /// Mollifier radius `δ ∈ (0, 1]`.
    pub delta: f64,
    /// Coupling `γ > 1`.
    pub gamma: f64,
    /// Mollifier normalizer `Ĵ` with `∫ Ĵ e^{-1/(1-x²)} dx = 1`.
    pub j_hat: f64,
    tables: Arc<DriftTables>,
}

#[derive(Debug)]
struct DriftTables {
    rule: GaussRule,
    u_band: BandInterpolant,
    du_band: BandInterpolant,
}

/// The unnormalized bump `e^{-1/(1-x²)}` on `(-1, 1)`, zero outside.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

impl DriftParams {
    pub fn new(epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon > 1.0 {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "must lie in (0, 1]",
                value: epsilon,
            });
        }
        if !delta.is_finite() || delta <= 0.0 || delta > 1.0 {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: "must lie in (0, 1]",
                value: delta,
            });
        }
        if !gamma.is_finite() || gamma <= 1.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "must exceed 1",
                value: gamma,
            });
        }
        let mass = adaptive_simpson(bump, -1.0, 1.0, 1e-14);
        let placeholder = BandInterpolant {
            lo: 0.0,
            hi: 1.0,
            coeffs: vec![0.0],
        };
        let mut dp = DriftParams {
            epsilon,
            delta,
            gamma,
            j_hat: 1.0 / mass,
            tables: Arc::new(DriftTables {
                rule: GaussRule::new(BAND_QUADRATURE_POINTS),
                u_band: placeholder.clone(),
                du_band: placeholder,
            }),
        };
        let (lo, hi) = (1.0 - delta, 1.0 + delta);
        let u_band =
            BandInterpolant::build(|x| dp.u_band_quadrature(x), lo, hi, BAND_CHEBYSHEV_POINTS);
        // The mollifier-mass profile is C^∞ but flat at the band edges, so
        // its Chebyshev coefficients decay slower; use a denser interpolant.
        let du_band =
            BandInterpolant::build(|x| dp.du_band_quadrature(x), lo, hi, 4 * BAND_CHEBYSHEV_POINTS);
        dp.tables = Arc::new(DriftTables {
            rule: GaussRule::new(BAND_QUADRATURE_POINTS),
            u_band,
            du_band,
        });
        Ok(dp)
    }

    /// Direct 64-point Gauss–Legendre evaluation of `U` inside the positive
    /// transition band, split at the kink of `g_ε^{-1}`.
    fn u_band_quadrature(&self, x: f64) -> f64 {
        let e = self.epsilon;
        let d = self.delta;
        let kink = x - 1.0;
        let affine = self
            .tables
            .rule
            .integrate(|y| self.mollifier(y) * ((x - y) / e + e - 1.0 / e), -d, kink);
        let linear = self
            .tables
            .rule
            .integrate(|y| self.mollifier(y) * e * (x - y), kink, d);
        -(affine + linear)
    }

    /// Direct quadrature of `U′` inside the positive band via the mollifier
    /// mass `δ₁(x)`.
    fn du_band_quadrature(&self, x: f64) -> f64 {
        let e = self.epsilon;
        let delta1 = self.mollifier_mass_below(x - 1.0);
        -e * (1.0 - delta1) - delta1 / e
    }

    /// Scaled mollifier `J̃^δ(y) = J̃(y/δ)/δ`.
    pub fn mollifier(&self, y: f64) -> f64 {
        self.j_hat / self.delta * bump(y / self.delta)
    }

    /// Mollifier mass below `t`: `∫_{-δ}^{t} J̃^δ(y) dy`, clamped to `[0, 1]`
    /// so quadrature roundoff cannot push `U′` outside `[-1/ε, -ε]`.
    fn mollifier_mass_below(&self, t: f64) -> f64 {
        if t <= -self.delta {
            0.0
        } else if t >= self.delta {
            1.0
        } else {
            self.tables
                .rule
                .integrate(|y| self.mollifier(y), -self.delta, t)
                .clamp(0.0, 1.0)
        }
    }
}

/// Piecewise-linear regularized sign `g_ε`.
pub fn g_eps(x: f64, dp: &DriftParams) -> f64 {
    let e = dp.epsilon;
    if x >= e {
        e * x + 1.0 - e * e
    } else if x > -e {
        x / e
    } else {
        e * x - 1.0 + e * e
    }
}

/// Inverse of `g_ε`.
pub fn g_eps_inv(x: f64, dp: &DriftParams) -> f64 {
    let e = dp.epsilon;
    if x >= 1.0 {
        x / e + e - 1.0 / e
    } else if x > -1.0 {
        e * x
    } else {
        x / e - e + 1.0 / e
    }
}

/// Mollified potential derivative `U_{ε,δ} = −J̃^δ ∗ g_ε^{-1}`.
pub fn u(x: f64, dp: &DriftParams) -> f64 {
    if x < 0.0 {
        return -u_nonneg(-x, dp);
    }
    u_nonneg(x, dp)
}

fn u_nonneg(x: f64, dp: &DriftParams) -> f64 {
    let e = dp.epsilon;
    let d = dp.delta;
    if x <= 1.0 - d {
        // Linear branch convolved with a symmetric unit-mass bump.
        -e * x
    } else if x >= 1.0 + d {
        -(x / e + e - 1.0 / e)
    } else {
        dp.tables.u_band.eval(x)
    }
}

/// Explicit derivative `U′_{ε,δ}`, using the band attenuation functions
/// `δ₁`, `δ₂` (mollifier mass past the kink); `U′` is even, so the mirrored
/// band reuses the positive one.
pub fn u_prime(x: f64, dp: &DriftParams) -> f64 {
    let e = dp.epsilon;
    let d = dp.delta;
    let ax = x.abs();
    if ax >= 1.0 + d {
        -1.0 / e
    } else if ax <= 1.0 - d {
        -e
    } else {
        dp.tables.du_band.eval(ax).clamp(-1.0 / e, -e)
    }
}

/// SPDE drift `b(x) = U_{ε,δ}(x) + (1−γ)x`.
pub fn b(x: f64, dp: &DriftParams) -> f64 {
    u(x, dp) + (1.0 - dp.gamma) * x
}

/// `b′(x) = U′_{ε,δ}(x) + (1−γ) ∈ [1−γ−1/ε, 1−γ−ε]`.
pub fn b_prime(x: f64, dp: &DriftParams) -> f64 {
    u_prime(x, dp) + (1.0 - dp.gamma)
}
