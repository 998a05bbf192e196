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

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ising-rg-spde"))
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).expect("output file missing")
}

#[test]
fn rejects_out_of_range_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "command = lsi\ngamma = 0.5\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gamma must exceed 1"), "stderr: {stderr}");
}

#[test]
fn rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "command = lsi\nwibble = 3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key `wibble`"));
}

#[test]
fn empty_file_plus_flags_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "").unwrap();
    let out_path = dir.path().join("kc");
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--command", "kernel-check", "--seed", "11"])
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_path.with_extension("csv").exists());
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "command = simulate\nmodes = 4\ndt = 1e-2\nT = 0.02\nreplicas = 1\n",
    )
    .unwrap();
    let out_path = dir.path().join("sim");
    // dt = 1e-2 exceeds the stability guard; the flag override fixes it.
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--dt", "1e-3", "--seed", "5"])
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("sim.manifest.json"))).unwrap();
    let dt: f64 = manifest["config"]["dt"].as_str().unwrap().parse().unwrap();
    assert_eq!(dt, 1e-3);
}

#[test]
fn blow_up_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("boom");
    let cfg = dir.path().join("stiff.cfg");
    // Huge gamma with a dt inside the Laplacian guard but far outside drift
    // stability: the state overflows and the run must abort with the step.
    std::fs::write(
        &cfg,
        "command = simulate\nmodes = 2\ndt = 5e-3\nT = 10\ngamma = 5000\nK = 0\nrho = 0.5\nu0_amplitude = 0.5\n",
    )
    .unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("blew up"), "stderr: {stderr}");
    assert!(stderr.contains("step"), "stderr: {stderr}");
}

#[test]
fn kernel_check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("kc");
    let out = bin()
        .args(["--command", "kernel-check"])
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = read(out_path.with_extension("csv"));
    assert!(csv.lines().count() > 5);
    assert!(!csv.contains(",fail"));
}

#[test]
fn identical_config_and_seed_reproduce_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--command",
        "simulate",
        "--modes",
        "6",
        "--dt",
        "1e-3",
        "--T",
        "0.1",
        "--replicas",
        "4",
        "--seed",
        "99",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_path in [&a, &b] {
        let out = bin().args(args).arg("--out").arg(out_path).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let csv_a = read(a.with_extension("csv"));
    let csv_b = read(b.with_extension("csv"));
    assert_eq!(csv_a, csv_b);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--command",
        "moments",
        "--modes",
        "6",
        "--dt",
        "5e-4",
        "--T",
        "0.25",
        "--replicas",
        "200",
        "--seed",
        "31",
    ];
    let single = dir.path().join("t1");
    let eight = dir.path().join("t8");
    let out = bin()
        .args(args)
        .args(["--threads", "1"])
        .arg("--out")
        .arg(&single)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin()
        .args(args)
        .args(["--threads", "8"])
        .arg("--out")
        .arg(&eight)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(single.with_extension("csv")), read(eight.with_extension("csv")));
}

#[test]
fn env_var_thread_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("env");
    let out = bin()
        .env("ISING_RG_SPDE_THREADS", "2")
        .args(["--command", "kernel-check"])
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn manifest_roundtrip_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = bin()
        .args([
            "--command",
            "simulate",
            "--modes",
            "5",
            "--dt",
            "1e-3",
            "--T",
            "0.05",
            "--replicas",
            "3",
            "--seed",
            "123",
        ])
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    // Rebuild a config file from the manifest's echoed key-value map.
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("first.manifest.json"))).unwrap();
    let mut lines = String::new();
    for (k, v) in manifest["config"].as_object().unwrap() {
        if k == "out" {
            continue;
        }
        lines.push_str(&format!("{k} = {}\n", v.as_str().unwrap()));
    }
    let cfg = dir.path().join("echo.cfg");
    std::fs::write(&cfg, lines).unwrap();
    let second = dir.path().join("second");
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        read(first.with_extension("csv")),
        read(second.with_extension("csv"))
    );
}

#[test]
fn json_format_emits_json_table() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("kj");
    let out = bin()
        .args(["--command", "kernel-check", "--format", "json"])
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&read(out_path.with_extension("json"))).unwrap();
    assert!(rows.as_array().unwrap().len() > 5);
}
