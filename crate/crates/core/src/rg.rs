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

//! Renormalization schedules, the log-Sobolev constant `C(T)` and its
//! large-`T` limit, and the lattice correlation-decay driver.
//!
//! The continuum schedule maps the terminal time to parameters as
//! `K = T^{-κ}`, `ε = δ = ρ = 1/T`, `γ = n²γ*`; the lattice variant
//! additionally sets `γ*(T) = T` and `M(T) = T^{1/3}`, with lattice sites
//! `l < k` mapped to `x = (site + M)/(2M)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{self, exp_factor};
use crate::kernel;
use crate::rng;
use crate::solver::{ModelParams, PathSim, SolverConfig};

/// Which renormalization relation drives the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScheduleVariant {
    /// `γ = n²γ*` with fixed `γ* > 1`, `M = 1`.
    Continuum,
    /// `γ*(T) = T` and `M(T) = T^{1/3}`.
    Lattice,
}

/// Map `T ↦ ModelParams`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RgSchedule {
    pub kappa: f64,
    pub gamma_star: f64,
    /// Number of cylindrical points `n` entering `γ = n²γ*`.
    pub n_points: usize,
    pub variant: ScheduleVariant,
    /// Use `K = 1/(1 + T^κ)` instead of `T^{-κ}` (equivalent large-`T`
    /// behaviour without the `K = 1` edge at `T = 1`).
    pub shifted_k: bool,
}

impl RgSchedule {
    pub fn new(
        kappa: f64,
        gamma_star: f64,
        n_points: usize,
        variant: ScheduleVariant,
    ) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: "must be positive",
                value: kappa,
            });
        }
        if variant == ScheduleVariant::Continuum && (!gamma_star.is_finite() || gamma_star <= 1.0)
        {
            return Err(Error::InvalidParameter {
                name: "gamma_star",
                reason: "must exceed 1",
                value: gamma_star,
            });
        }
        if n_points == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        Ok(RgSchedule {
            kappa,
            gamma_star,
            n_points,
            variant,
            shifted_k: false,
        })
    }

    pub fn shifted(mut self) -> Self {
        self.shifted_k = true;
        self
    }

    pub fn coupling_at(&self, t: f64) -> f64 {
        if self.shifted_k {
            1.0 / (1.0 + t.powf(self.kappa))
        } else {
            t.powf(-self.kappa)
        }
    }

    /// Effective `γ*` at time `t` (`t` itself for the lattice variant).
    pub fn gamma_star_at(&self, t: f64) -> f64 {
        match self.variant {
            ScheduleVariant::Continuum => self.gamma_star,
            ScheduleVariant::Lattice => t,
        }
    }

    /// Half-width `M` at time `t`.
    pub fn half_width_at(&self, t: f64) -> f64 {
        match self.variant {
            ScheduleVariant::Continuum => 1.0,
            ScheduleVariant::Lattice => t.cbrt(),
        }
    }

    /// Full parameter set at terminal time `T ≥ 1`.
    ///
    /// `T = 1` sits on the schedule boundary (`ε = δ = ρ = 1`) and is
    /// accepted; anything below is rejected.
    pub fn params_at(&self, t: f64) -> Result<ModelParams> {
        if !t.is_finite() || t < 1.0 {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "schedule needs T ≥ 1",
                value: t,
            });
        }
        let n2 = (self.n_points * self.n_points) as f64;
        ModelParams::new(
            self.coupling_at(t),
            n2 * self.gamma_star_at(t),
            1.0 / t,
            1.0 / t,
            1.0 / t,
            self.half_width_at(t),
            t,
        )
    }

    /// Invert the schedule from the smoothing parameter: `T = 1/ρ`.
    pub fn time_from_rho(&self, rho: f64) -> f64 {
        1.0 / rho
    }

    /// The log-Sobolev constant `C(T)` under this schedule, both denominator
    /// readings, and the limit `2/(γ*−1)`.
    pub fn lsi_constant_c(&self, t: f64, max_c_hat: f64) -> Result<CReport> {
        if t < 1.0 {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "schedule needs T ≥ 1",
                value: t,
            });
        }
        let sqrt8pi = (8.0 * PI).sqrt();
        if t <= sqrt8pi * max_c_hat {
            return Err(Error::domain(format!(
                "C(T) needs T > √(8π)·maxĈ = {}, got T = {t}",
                sqrt8pi * max_c_hat
            )));
        }
        let n2 = (self.n_points * self.n_points) as f64;
        let gs = self.gamma_star_at(t);
        // cT = T − n²γ*T − 1 + 4KT with the schedule's K(T).
        let exponent = t - n2 * gs * t - 1.0 + 4.0 * self.coupling_at(t) * t;
        let numer = t * n2 * (exponent.exp() - 1.0);
        let denom_paper = n2 * t - n2 * gs * t - 1.0 + 4.0 * self.coupling_at(t) * t;
        let denom_ineq = exponent;
        let hat_ratio = (t + sqrt8pi * max_c_hat) / (t - sqrt8pi * max_c_hat);
        let c_paper = 2.0 * (numer / denom_paper) * hat_ratio;
        let c_ineq = 2.0 * (numer / denom_ineq) * hat_ratio;
        let limit = 2.0 / (gs - 1.0);
        Ok(CReport {
            t,
            c_paper,
            c_ineq,
            limit,
            gap_paper: (c_paper - limit).abs(),
            gap_ineq: (c_ineq - limit).abs(),
        })
    }
}

/// `C(T)` evaluated both ways (the displayed denominator carries an extra
/// `n²` on its leading term relative to the inequality line; they agree for
/// `n = 1`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CReport {
    pub t: f64,
    pub c_paper: f64,
    pub c_ineq: f64,
    pub limit: f64,
    pub gap_paper: f64,
    pub gap_ineq: f64,
}

/// Squared-covariance bound
/// `((e^{cT}−1)/c)² · 𝒦(x₁,x₁)𝒦(x₂,x₂)/ĉ(ρ)²` with `ĉ` the two-point Gram
/// floor (`n = 1` per cylindrical point, so `n⁴ = 1`).
pub fn correlation_bound(mp: &ModelParams, x1: f64, x2: f64) -> Result<f64> {
    if x1 == x2 {
        return Err(Error::domain("bound needs two distinct points"));
    }
    let kp = mp.kernel_params()?;
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let gram = kernel::gram(&[lo, hi], &kp)?;
    let floor = gram.gersgorin_floor;
    if floor <= 0.0 {
        return Err(Error::domain("two-point Gram floor is nonpositive"));
    }
    let c = 1.0 - mp.gamma - mp.epsilon + 4.0 * mp.coupling;
    let ef = exp_factor(c, mp.horizon);
    Ok(ef * ef * gram.entries[(0, 0)] * gram.entries[(1, 1)] / (floor * floor))
}

/// Time step for a schedule row: the Laplacian guard capped by drift
/// stiffness (`γ` grows along the flow while only the Laplacian is
/// implicit).
pub fn schedule_dt(mp: &ModelParams, n_modes: usize) -> f64 {
    let guard = SolverConfig::stability_guard(mp, n_modes);
    let stiffness = mp.gamma - 1.0 + mp.epsilon + 2.0 * mp.coupling;
    if stiffness > 0.0 {
        guard.min(0.3 / stiffness)
    } else {
        guard
    }
}

/// One row of the lattice correlation-decay table.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationRow {
    pub t: f64,
    pub coupling: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    pub half_width: f64,
    pub x1: f64,
    pub x2: f64,
    pub cov: f64,
    pub cov_stderr: f64,
    pub cov_sq: f64,
    pub cov_sq_stderr: f64,
    /// Squared-covariance bound; the sequence must tend to 0 along the flow.
    pub bound: f64,
    /// `C(T)` (displayed-denominator variant); NaN where the `Ĉ` factor is
    /// outside its domain.
    pub c_t: f64,
    pub n_modes: usize,
    pub dt: f64,
    pub replicas: usize,
    /// Present when the row was skipped, with the reason.
    pub skipped: Option<String>,
}

/// Simulate the lattice flow: for each `T`, map sites `l < k` into `(0,1)`,
/// integrate the field to time `T` under `params_at(T)`, and compare the
/// Monte-Carlo covariance against the bound.
pub fn correlation_flow(
    schedule: &RgSchedule,
    site_l: i64,
    site_k: i64,
    t_grid: &[f64],
    n_modes: usize,
    replicas: usize,
    master_seed: u64,
) -> Result<Vec<CorrelationRow>> {
    if site_l >= site_k {
        return Err(Error::domain("lattice sites must satisfy l < k"));
    }
    if schedule.variant != ScheduleVariant::Lattice {
        return Err(Error::domain("correlation flow needs the lattice schedule"));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for (row_idx, &t) in t_grid.iter().enumerate() {
        let mp = schedule.params_at(t)?;
        let m = mp.half_width;
        if (site_l.abs() as f64) >= m || (site_k.abs() as f64) >= m {
            rows.push(CorrelationRow {
                t,
                coupling: mp.coupling,
                gamma: mp.gamma,
                epsilon: mp.epsilon,
                delta: mp.delta,
                rho: mp.rho,
                half_width: m,
                x1: f64::NAN,
                x2: f64::NAN,
                cov: f64::NAN,
                cov_stderr: f64::NAN,
                cov_sq: f64::NAN,
                cov_sq_stderr: f64::NAN,
                bound: f64::NAN,
                c_t: f64::NAN,
                n_modes,
                dt: f64::NAN,
                replicas: 0,
                skipped: Some(format!(
                    "sites ({site_l}, {site_k}) outside (-{m:.4}, {m:.4})"
                )),
            });
            continue;
        }
        let x1 = (site_l as f64 + m) / (2.0 * m);
        let x2 = (site_k as f64 + m) / (2.0 * m);
        let dt = schedule_dt(&mp, n_modes);
        let cfg = SolverConfig::new(n_modes, dt);
        let steps = cfg.steps(mp.horizon);
        let u0 = crate::solver::project_initial(|x| 0.1 * (PI * x).sin(), n_modes);
        let dp = mp.drift_params()?;
        let pairs: Vec<(f64, f64)> = rng::run_replicas(
            replicas,
            master_seed.wrapping_add(row_idx as u64),
            |_, rng| {
                let mut sim = PathSim::with_drift(&mp, &cfg, &u0, dp.clone())?;
                for _ in 0..steps {
                    sim.advance(rng)?;
                }
                let f = sim.field();
                Ok((f.evaluate(x1), f.evaluate(x2)))
            },
        )?;
        let (cov, cov_stderr) = functional::covariance_with_stderr(&pairs)?;
        let bound = correlation_bound(&mp, x1, x2)?;
        let (_, c_hat) = kernel::point_constants(&[x1.min(x2), x1.max(x2)])?;
        let max_hat = c_hat.iter().cloned().fold(0.0_f64, f64::max);
        let c_t = schedule
            .lsi_constant_c(t, max_hat)
            .map(|r| r.c_paper)
            .unwrap_or(f64::NAN);
        rows.push(CorrelationRow {
            t,
            coupling: mp.coupling,
            gamma: mp.gamma,
            epsilon: mp.epsilon,
            delta: mp.delta,
            rho: mp.rho,
            half_width: m,
            x1,
            x2,
            cov,
            cov_stderr,
            cov_sq: cov * cov,
            cov_sq_stderr: 2.0 * cov.abs() * cov_stderr,
            bound,
            c_t,
            n_modes,
            dt,
            replicas,
            skipped: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_at_continuum_example() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Continuum).unwrap();
        let mp = s.params_at(4.0).unwrap();
        assert_eq!(mp.coupling, 0.25);
        assert_eq!(mp.epsilon, 0.25);
        assert_eq!(mp.delta, 0.25);
        assert_eq!(mp.rho, 0.25);
        assert_eq!(mp.gamma, 2.0);
        assert_eq!(mp.half_width, 1.0);
        assert_eq!(mp.horizon, 4.0);
    }

    #[test]
    fn params_at_lattice_example() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Lattice).unwrap();
        let mp = s.params_at(8.0).unwrap();
        assert_eq!(mp.half_width, 2.0);
        assert_eq!(mp.gamma, 8.0);
        let s2 = RgSchedule::new(1.0, 2.0, 2, ScheduleVariant::Lattice).unwrap();
        assert_eq!(s2.params_at(8.0).unwrap().gamma, 32.0);
    }

    #[test]
    fn params_monotone_and_invertible() {
        let s = RgSchedule::new(0.5, 3.0, 1, ScheduleVariant::Continuum).unwrap();
        let mut prev = s.params_at(1.5).unwrap();
        for &t in &[2.0, 4.0, 10.0, 100.0] {
            let mp = s.params_at(t).unwrap();
            assert!(mp.coupling < prev.coupling);
            assert!(mp.epsilon < prev.epsilon);
            assert!(mp.delta < prev.delta);
            assert!(mp.rho < prev.rho);
            // Round-trip T from ρ = 1/T.
            assert!((s.time_from_rho(mp.rho) - t).abs() < 1e-9 * t);
            prev = mp;
        }
        assert!(s.params_at(0.5).is_err());
    }

    #[test]
    fn shifted_coupling_avoids_unit_edge() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Continuum)
            .unwrap()
            .shifted();
        assert_eq!(s.coupling_at(1.0), 0.5);
        let mp = s.params_at(1.0).unwrap();
        assert_eq!(mp.epsilon, 1.0);
        assert_eq!(mp.delta, 1.0);
        assert!(mp.gamma - 2.0 * mp.coupling > 0.0);
    }

    #[test]
    fn lsi_constant_values_and_example_band() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Continuum).unwrap();
        // Direct formula arithmetic at T = 50, maxĈ = 1: the e^{cT} factor is
        // numerically 0, so C = 2·(50/47)·(50+√8π)/(50−√8π).
        let r = s.lsi_constant_c(50.0, 1.0).unwrap();
        let sqrt8pi = (8.0 * PI).sqrt();
        let expect = 2.0 * (50.0 / 47.0) * (50.0 + sqrt8pi) / (50.0 - sqrt8pi);
        assert!(
            (r.c_paper - expect).abs() < 1e-12,
            "{} vs {expect}",
            r.c_paper
        );
        // n = 1: both denominator variants agree.
        assert_eq!(r.c_paper, r.c_ineq);
        assert_eq!(r.limit, 2.0);
        // With a small Ĉ input the value sits within 10% of the limit.
        let r = s.lsi_constant_c(50.0, 0.1).unwrap();
        assert!((r.c_paper - 2.0).abs() / 2.0 < 0.10, "{}", r.c_paper);
        // Domain error when the Ĉ factor denominator closes.
        assert!(s.lsi_constant_c(4.0, 1.0).is_err());
    }

    #[test]
    fn lsi_constant_limits() {
        for &gs in &[2.0, 3.0, 5.0] {
            let s = RgSchedule::new(1.0, gs, 1, ScheduleVariant::Continuum).unwrap();
            let r = s.lsi_constant_c(100.0, 0.1).unwrap();
            assert_eq!(r.limit, 2.0 / (gs - 1.0));
            assert!(
                r.gap_paper / r.limit < 0.05,
                "γ*={gs}: C(100) = {} vs {}",
                r.c_paper,
                r.limit
            );
        }
        // γ* = 3 limit value.
        let s = RgSchedule::new(1.0, 3.0, 1, ScheduleVariant::Continuum).unwrap();
        assert_eq!(s.lsi_constant_c(100.0, 0.1).unwrap().limit, 1.0);
    }

    #[test]
    fn lsi_constant_finite_positive_on_grid() {
        let s = RgSchedule::new(0.5, 2.5, 1, ScheduleVariant::Continuum).unwrap();
        for j in 4..12 {
            let t = (2.0_f64).powi(j);
            let r = s.lsi_constant_c(t, 1.0).unwrap();
            assert!(r.c_paper.is_finite() && r.c_paper > 0.0, "T={t}: {r:?}");
        }
    }

    #[test]
    fn correlation_bound_sequence_collapses() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Lattice).unwrap();
        let mut prev = f64::INFINITY;
        let mut first = None;
        let mut last = None;
        for &t in &[10.0, 100.0, 1000.0] {
            let mp = s.params_at(t).unwrap();
            let m = mp.half_width;
            let x1 = (-1.0 + m) / (2.0 * m);
            let x2 = (1.0 + m) / (2.0 * m);
            let b = correlation_bound(&mp, x1, x2).unwrap();
            assert!(b > 0.0 && b < prev, "bound not decreasing at T={t}: {b}");
            prev = b;
            if first.is_none() {
                first = Some(b);
            }
            last = Some(b);
        }
        let ratio = last.unwrap() / first.unwrap();
        assert!(ratio < 1e-6, "decade ratio {ratio}");
    }

    #[test]
    fn correlation_flow_rejects_degenerate_sites() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Lattice).unwrap();
        assert!(correlation_flow(&s, 1, 1, &[10.0], 8, 10, 1).is_err());
        assert!(correlation_flow(&s, 2, 1, &[10.0], 8, 10, 1).is_err());
    }

    #[test]
    fn correlation_flow_smoke_and_site_range() {
        let s = RgSchedule::new(1.0, 2.0, 1, ScheduleVariant::Lattice).unwrap();
        // At T = 10, M ≈ 2.154: site 3 is out of range and the row is
        // skipped with a diagnostic; sites ±1 produce a live row.
        let rows = correlation_flow(&s, -3, 3, &[10.0], 8, 16, 7).unwrap();
        assert!(rows[0].skipped.is_some());
        let rows = correlation_flow(&s, -1, 1, &[10.0], 8, 64, 7).unwrap();
        let row = &rows[0];
        assert!(row.skipped.is_none());
        assert!(row.bound > 0.0);
        assert!(row.cov.is_finite());
        assert!(
            row.cov_sq <= row.bound + 3.0 * row.cov_sq_stderr,
            "cov² {} vs bound {}",
            row.cov_sq,
            row.bound
        );
    }
}
