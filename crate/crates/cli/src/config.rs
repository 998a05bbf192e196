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

//! Run configuration: a line-based `key = value` file overlaid with command
//! line flags. Unknown keys are hard errors; every numeric field is
//! validated against module preconditions before dispatch.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ising_rg_spde::{ModelParams, RgSchedule, ScheduleVariant};

/// The closed set of recognized configuration keys.
const KNOWN_KEYS: &[&str] = &[
    "command",
    "seed",
    "replicas",
    "modes",
    "dt",
    "T",
    "out",
    "format",
    "threads",
    "schedule",
    "shifted_k",
    "K",
    "gamma",
    "epsilon",
    "delta",
    "rho",
    "M",
    "kappa",
    "gamma_star",
    "n",
    "points",
    "observable",
    "x1",
    "x2",
    "site_l",
    "site_k",
    "t_grid",
    "times",
    "max_c_hat",
    "u0_amplitude",
    "ising_n",
    "ising_k",
    "ising_gamma",
    "sweeps",
    "burn_in",
    "ibp_mode",
    "ibp_profile",
    "ibp_observable",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    KernelCheck,
    DriftCheck,
    Simulate,
    Moments,
    Lsi,
    Poincare,
    IbpCheck,
    RgFlow,
    Partition,
    Ising,
    Correlations,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "kernel-check" => Command::KernelCheck,
            "drift-check" => Command::DriftCheck,
            "simulate" => Command::Simulate,
            "moments" => Command::Moments,
            "lsi" => Command::Lsi,
            "poincare" => Command::Poincare,
            "ibp-check" => Command::IbpCheck,
            "rg-flow" => Command::RgFlow,
            "partition" => Command::Partition,
            "ising" => Command::Ising,
            "correlations" => Command::Correlations,
            other => bail!(
                "unknown command `{other}` (expected one of kernel-check, drift-check, \
                 simulate, moments, lsi, poincare, ibp-check, rg-flow, partition, ising, \
                 correlations)"
            ),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::DriftCheck => "drift-check",
            Command::Simulate => "simulate",
            Command::Moments => "moments",
            Command::Lsi => "lsi",
            Command::Poincare => "poincare",
            Command::IbpCheck => "ibp-check",
            Command::RgFlow => "rg-flow",
            Command::Partition => "partition",
            Command::Ising => "ising",
            Command::Correlations => "correlations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Csv,
    Json,
}

/// Fully validated run configuration. `raw` preserves the resolved
/// key-value view for the manifest echo (bit-for-bit reruns).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub replicas: usize,
    pub modes: usize,
    pub dt: f64,
    pub horizon: f64,
    pub out: String,
    pub format: OutFormat,
    pub threads: Option<usize>,
    pub schedule_variant: ScheduleVariant,
    pub shifted_k: bool,
    pub coupling: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    pub half_width: f64,
    pub kappa: f64,
    pub gamma_star: f64,
    pub rg_n: usize,
    pub points: Vec<f64>,
    pub observable: String,
    pub x1: f64,
    pub x2: f64,
    pub site_l: i64,
    pub site_k: i64,
    pub t_grid: Vec<f64>,
    pub times: Vec<f64>,
    pub max_c_hat: f64,
    pub u0_amplitude: f64,
    pub ising_n: usize,
    pub ising_k: f64,
    pub ising_gamma: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub ibp_mode: usize,
    pub ibp_profile: String,
    pub ibp_observable: String,
    pub raw: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.coupling,
            self.gamma,
            self.epsilon,
            self.delta,
            self.rho,
            self.half_width,
            self.horizon,
        )
        .map_err(|e| anyhow!("{e}"))
    }

    pub fn schedule(&self) -> Result<RgSchedule> {
        let mut s = RgSchedule::new(self.kappa, self.gamma_star, self.rg_n, self.schedule_variant)
            .map_err(|e| anyhow!("{e}"))?;
        if self.shifted_k {
            s = s.shifted();
        }
        Ok(s)
    }
}

/// Parse a `key = value` file into a map. Blank lines and `#` comments are
/// allowed; everything else must be `key = value`.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{line}`", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn get_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| anyhow!("{key} must be a number, got `{v}`")),
    }
}

fn get_usize(map: &BTreeMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| anyhow!("{key} must be a nonnegative integer, got `{v}`")),
    }
}

fn get_i64(map: &BTreeMap<String, String>, key: &str, default: i64) -> Result<i64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<i64>()
            .map_err(|_| anyhow!("{key} must be an integer, got `{v}`")),
    }
}

fn get_bool(map: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => match v.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(anyhow!("{key} must be true/false, got `{other}`")),
        },
    }
}

fn get_list(map: &BTreeMap<String, String>, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match map.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("{key} must be a comma-separated number list, got `{v}`"))
            })
            .collect(),
    }
}

/// Build the validated configuration from the merged key map.
pub fn resolve(map: BTreeMap<String, String>) -> Result<RunConfig> {
    for key in map.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("unknown configuration key `{key}`");
        }
    }
    let command = Command::parse(
        map.get("command")
            .ok_or_else(|| anyhow!("missing `command` (set --command or a config file entry)"))?,
    )?;
    let seed = get_usize(&map, "seed", 20_260_810)? as u64;
    let replicas = get_usize(&map, "replicas", default_replicas(command))?;
    let modes = get_usize(&map, "modes", 16)?;
    let coupling = get_f64(&map, "K", 0.05)?;
    let gamma = get_f64(&map, "gamma", 2.5)?;
    let epsilon = get_f64(&map, "epsilon", 0.25)?;
    let delta = get_f64(&map, "delta", 0.25)?;
    let rho = get_f64(&map, "rho", 0.05)?;
    let half_width = get_f64(&map, "M", 1.0)?;
    let horizon = get_f64(&map, "T", 1.0)?;
    let dt = get_f64(&map, "dt", 2e-4)?;

    // Range validation with the module error messages.
    if gamma <= 1.0 {
        bail!("gamma must exceed 1, got {gamma}");
    }
    if !(0.0..=1.0).contains(&epsilon) || epsilon == 0.0 {
        bail!("epsilon must lie in (0, 1], got {epsilon}");
    }
    if !(0.0..=1.0).contains(&delta) || delta == 0.0 {
        bail!("delta must lie in (0, 1], got {delta}");
    }
    if rho <= 0.0 {
        bail!("rho must be positive, got {rho}");
    }
    if coupling < 0.0 {
        bail!("K must be nonnegative, got {coupling}");
    }
    if half_width <= 0.0 {
        bail!("M must be positive, got {half_width}");
    }
    if horizon <= 0.0 {
        bail!("T must be positive, got {horizon}");
    }
    if dt <= 0.0 {
        bail!("dt must be positive, got {dt}");
    }
    if modes == 0 {
        bail!("modes must be at least 1");
    }

    let format = match map.get("format").map(|s| s.as_str()).unwrap_or("csv") {
        "csv" => OutFormat::Csv,
        "json" => OutFormat::Json,
        other => bail!("format must be csv or json, got `{other}`"),
    };
    let schedule_variant = match map.get("schedule").map(|s| s.as_str()).unwrap_or("ronrel") {
        "ronrel" => ScheduleVariant::Continuum,
        "renrela" => ScheduleVariant::Lattice,
        other => bail!("schedule must be ronrel or renrela, got `{other}`"),
    };
    let kappa = get_f64(&map, "kappa", 1.0)?;
    if kappa <= 0.0 {
        bail!("kappa must be positive, got {kappa}");
    }
    let gamma_star = get_f64(&map, "gamma_star", 2.0)?;
    if schedule_variant == ScheduleVariant::Continuum && gamma_star <= 1.0 {
        bail!("gamma_star must exceed 1, got {gamma_star}");
    }
    let rg_n = get_usize(&map, "n", 1)?;
    if rg_n == 0 {
        bail!("n must be at least 1");
    }
    let points = get_list(&map, "points", &[0.3, 0.7])?;
    for &p in &points {
        if !(0.0 < p && p < 1.0) {
            bail!("points must be interior to (0, 1), got {p}");
        }
    }
    let x1 = get_f64(&map, "x1", 0.35)?;
    let x2 = get_f64(&map, "x2", 0.65)?;
    let threads = match map.get("threads") {
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|_| anyhow!("threads must be an integer, got `{v}`"))?,
        ),
        None => std::env::var("ISING_RG_SPDE_THREADS")
            .ok()
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| anyhow!("ISING_RG_SPDE_THREADS must be an integer, got `{v}`"))
            })
            .transpose()?,
    };
    let out = map
        .get("out")
        .cloned()
        .unwrap_or_else(|| format!("{}-report", command.name()));

    let cfg = RunConfig {
        command,
        seed,
        replicas,
        modes,
        dt,
        horizon,
        out,
        format,
        threads,
        schedule_variant,
        shifted_k: get_bool(&map, "shifted_k", false)?,
        coupling,
        gamma,
        epsilon,
        delta,
        rho,
        half_width,
        kappa,
        gamma_star,
        rg_n,
        points,
        observable: map
            .get("observable")
            .cloned()
            .unwrap_or_else(|| "linear".into()),
        x1,
        x2,
        site_l: get_i64(&map, "site_l", -1)?,
        site_k: get_i64(&map, "site_k", 1)?,
        t_grid: get_list(&map, "t_grid", &[10.0, 100.0, 1000.0])?,
        times: get_list(&map, "times", &[0.25, 0.5, 1.0])?,
        max_c_hat: get_f64(&map, "max_c_hat", 0.1)?,
        u0_amplitude: get_f64(&map, "u0_amplitude", 0.1)?,
        ising_n: get_usize(&map, "ising_n", 6)?,
        ising_k: get_f64(&map, "ising_k", 0.5)?,
        ising_gamma: get_f64(&map, "ising_gamma", 0.8)?,
        sweeps: get_usize(&map, "sweeps", 200_000)?,
        burn_in: get_usize(&map, "burn_in", 1_000)?,
        ibp_mode: get_usize(&map, "ibp_mode", 1)?,
        ibp_profile: map
            .get("ibp_profile")
            .cloned()
            .unwrap_or_else(|| "ramp".into()),
        ibp_observable: map
            .get("ibp_observable")
            .cloned()
            .unwrap_or_else(|| "identity".into()),
        raw: map,
    };
    Ok(cfg)
}

fn default_replicas(command: Command) -> usize {
    match command {
        Command::Simulate => 1,
        Command::IbpCheck => 20_000,
        Command::RgFlow => 64,
        Command::Moments | Command::Partition => 2_000,
        Command::Lsi | Command::Poincare => 4_000,
        _ => 1_000,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_of(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        let err = resolve(map_of(&[("command", "lsi"), ("frobnicate", "1")])).unwrap_err();
        assert!(err.to_string().contains("unknown configuration key"));
        let err = resolve(map_of(&[("command", "lsi"), ("gamma", "0.5")])).unwrap_err();
        assert!(err.to_string().contains("gamma must exceed 1"));
        let err = resolve(map_of(&[("command", "lsi"), ("epsilon", "1.5")])).unwrap_err();
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = resolve(map_of(&[("command", "kernel-check")])).unwrap();
        assert_eq!(cfg.command, Command::KernelCheck);
        assert_eq!(cfg.modes, 16);
        assert!(cfg.model_params().is_ok());
    }

    #[test]
    fn lists_parse() {
        let cfg = resolve(map_of(&[
            ("command", "rg-flow"),
            ("t_grid", "10, 20,40"),
        ]))
        .unwrap();
        assert_eq!(cfg.t_grid, vec![10.0, 20.0, 40.0]);
    }
}
