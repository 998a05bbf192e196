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

//! Report emission: CSV tables with full-precision scientific floats and the
//! JSON run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use ising_rg_spde::rng::{MIX_GAMMA, MIX_MUL1, MIX_MUL2};

/// Full-precision scientific notation (17 significant digits) so CSV output
/// re-verifies bit-for-bit.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// A CSV table accumulated in memory and written in one shot.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "CSV row arity mismatch");
        self.rows.push(row);
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        buf.push_str(&self.header.join(","));
        buf.push('\n');
        for row in &self.rows {
            buf.push_str(&row.join(","));
            buf.push('\n');
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        f.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Write as `<stem>.csv` or `<stem>.json` (array of column-keyed
    /// objects; values keep their full-precision string form).
    pub fn write(&self, stem: &str, json: bool) -> Result<PathBuf> {
        if json {
            let path = PathBuf::from(format!("{stem}.json"));
            let rows: Vec<BTreeMap<&str, &str>> = self
                .rows
                .iter()
                .map(|row| {
                    self.header
                        .iter()
                        .map(|h| h.as_str())
                        .zip(row.iter().map(|v| v.as_str()))
                        .collect()
                })
                .collect();
            std::fs::write(&path, serde_json::to_string_pretty(&rows)?)?;
            Ok(path)
        } else {
            let path = PathBuf::from(format!("{stem}.csv"));
            self.write_to(&path)?;
            Ok(path)
        }
    }
}

/// One named pass/fail entry for the manifest verdict list.
#[derive(Debug, Clone, Serialize)]
pub struct VerdictEntry {
    pub name: String,
    pub outcome: String,
    pub asserted: bool,
}

impl VerdictEntry {
    pub fn pass(name: impl Into<String>) -> Self {
        VerdictEntry {
            name: name.into(),
            outcome: "pass".into(),
            asserted: true,
        }
    }

    pub fn fail(name: impl Into<String>) -> Self {
        VerdictEntry {
            name: name.into(),
            outcome: "fail".into(),
            asserted: true,
        }
    }

    pub fn info(name: impl Into<String>, outcome: impl Into<String>) -> Self {
        VerdictEntry {
            name: name.into(),
            outcome: outcome.into(),
            asserted: false,
        }
    }

    pub fn from_flag(name: impl Into<String>, ok: bool) -> Self {
        if ok {
            Self::pass(name)
        } else {
            Self::fail(name)
        }
    }
}

#[derive(Debug, Serialize)]
struct RngConstants {
    mix_gamma: String,
    mix_mul1: String,
    mix_mul2: String,
    stream: &'static str,
}

/// The JSON run manifest: version, echoed config, seed, wall time, verdicts.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub verdicts: Vec<VerdictEntry>,
    rng_constants: RngConstants,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(
        command: &str,
        config: BTreeMap<String, String>,
        seed: u64,
        wall_time_s: f64,
        verdicts: Vec<VerdictEntry>,
        outputs: Vec<String>,
    ) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            wall_time_s,
            verdicts,
            rng_constants: RngConstants {
                mix_gamma: format!("{MIX_GAMMA:#018x}"),
                mix_mul1: format!("{MIX_MUL1:#018x}"),
                mix_mul2: format!("{MIX_MUL2:#018x}"),
                stream: "chacha8(seed_from_u64(splitmix_finalize(master + (i+1)*gamma)))",
            },
            outputs,
        }
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json.as_bytes())
            .with_context(|| format!("cannot write manifest {}", path.display()))?;
        Ok(())
    }
}

pub fn manifest_path(out: &str) -> PathBuf {
    PathBuf::from(format!("{out}.manifest.json"))
}

pub fn all_passed(verdicts: &[VerdictEntry]) -> bool {
    verdicts
        .iter()
        .filter(|v| v.asserted)
        .all(|v| v.outcome == "pass")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_is_full_precision() {
        let x = 0.1 + 0.2;
        let s = fmt_float(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(fmt_float(f64::NAN), "nan");
    }

    #[test]
    fn verdict_gating() {
        let vs = vec![
            VerdictEntry::pass("a"),
            VerdictEntry::info("b", "hypothesis_unmet"),
        ];
        assert!(all_passed(&vs));
        let vs = vec![VerdictEntry::pass("a"), VerdictEntry::fail("c")];
        assert!(!all_passed(&vs));
    }
}
