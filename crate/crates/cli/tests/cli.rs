use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const DEVICE: &str = r#""device": {
    "qubit_freqs_ghz": [5.890, 5.031],
    "couplings_ghz": [0.100, 0.071],
    "tc_max_freq_ghz": 7.445
  }"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lctpulse")).args(args).output().unwrap()
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn short_lct_config() -> String {
    format!(
        r#"{{
  {DEVICE},
  "lct": {{
    "lambda": 29730.0,
    "eta": 1e-6,
    "dt_ns": 0.02,
    "t_max_ns": 60,
    "initial": "100",
    "target": "010"
  }},
  "filter": {{ "cutoff_ghz": 0.4, "lambda2": 300, "eta": 0.0 }}
}}"#
    )
}

#[test]
fn filter_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &short_lct_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run_in("filter", &cfg, out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = manifest(&a)["outputs"].as_array().unwrap().clone();
    assert!(files.len() >= 10);
    for f in &files {
        let name = f.as_str().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["outputs"], mb["outputs"]);
}

#[test]
fn manifest_lists_every_output_and_hashes_the_config() {
    let tmp = TempDir::new().unwrap();
    let text = short_lct_config();
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    assert!(run_in("lct", &cfg, &out, &[]).status.success());
    let m = manifest(&out);
    let expected: String =
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(m["config_hash"].as_str().unwrap(), expected);
    assert_eq!(m["command"][0], "lct");
    assert!(m["wall_time"].as_f64().unwrap() >= 0.0);

    let mut listed: Vec<String> =
        m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    listed.sort();
    let mut present: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    present.sort();
    assert_eq!(listed, present);
    for name in ["waveform.csv", "flux.csv", "trajectory.csv", "spectrum.csv", "summary.json"] {
        assert!(listed.iter().any(|n| n == name), "{name} missing");
    }
}

#[test]
fn waveform_csv_has_uniform_time_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &short_lct_config());
    let out = tmp.path().join("out");
    assert!(run_in("lct", &cfg, &out, &[]).status.success());
    let text = fs::read_to_string(out.join("waveform.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t_ns,delta_omega_ghz");
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let mut it = l.split(',').map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 3000);
    for (k, (t, dw)) in rows.iter().enumerate() {
        assert!((t - 0.02 * k as f64).abs() < 1e-9);
        assert!(*dw <= 0.0 && *dw >= -7.445);
    }
}

#[test]
fn malformed_config_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{{ {DEVICE}, \"lct\": {{ \"lamda\": 1 }} }}"));
    let o = run_in("lct", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lct"));

    let cfg = write_config(tmp.path(), "{ \"device\": ");
    assert_eq!(run_in("spectrum", &cfg, &tmp.path().join("out"), &[]).status.code(), Some(1));

    let missing = tmp.path().join("absent.json");
    assert_eq!(run_in("spectrum", &missing, &tmp.path().join("out"), &[]).status.code(), Some(1));
}

#[test]
fn unknown_state_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &short_lct_config().replace("\"target\": \"010\"", "\"target\": \"0100\""),
    );
    assert_eq!(run_in("lct", &cfg, &tmp.path().join("out"), &[]).status.code(), Some(1));
}

#[test]
fn failed_scan_exits_with_two_and_still_writes_manifest() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        r#"{{
  {DEVICE},
  "lct": {{
    "lambda_scan": {{ "start": 12500, "count": 2 }},
    "eta": 1e-6, "dt_ns": 0.02, "t_max_ns": 20,
    "initial": "100", "target": "010"
  }}
}}"#
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = run_in("lct", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["outputs"], serde_json::json!(["scan.json"]));
    let scan: Value = serde_json::from_str(&fs::read_to_string(out.join("scan.json")).unwrap()).unwrap();
    let rows = scan.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["passes"] == false));
}

#[test]
fn single_point_sweep_has_no_crossings() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{{ {DEVICE} }}"));
    let out = tmp.path().join("out");
    let o = run_in("spectrum", &cfg, &out, &["--range", "-1.0", "-1.0", "--steps", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2);
    let crossings: Value =
        serde_json::from_str(&fs::read_to_string(out.join("crossings.json")).unwrap()).unwrap();
    assert_eq!(crossings, serde_json::json!([]));
}

#[test]
fn default_sweep_finds_both_crossings() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{{ {DEVICE} }}"));
    let out = tmp.path().join("out");
    assert!(run_in("spectrum", &cfg, &out, &[]).status.success());
    let crossings: Value =
        serde_json::from_str(&fs::read_to_string(out.join("crossings.json")).unwrap()).unwrap();
    let at: Vec<f64> = crossings
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["delta_omega_ghz"].as_f64().unwrap())
        .collect();
    // Resonances of each qubit with the detuned coupler.
    for expected in [5.890 - 7.445, 5.031 - 7.445] {
        assert!(at.iter().any(|x| (x - expected).abs() < 0.02), "{at:?}");
    }
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 602);
    assert_eq!(sweep.lines().next().unwrap().split(',').count(), 9);
}

#[test]
fn decoupled_device_has_zero_couplings() {
    let tmp = TempDir::new().unwrap();
    let body = r#"{ "device": {
        "qubit_freqs_ghz": [5.890, 5.031],
        "couplings_ghz": [0.0, 0.0],
        "tc_max_freq_ghz": 7.445 } }"#;
    let cfg = write_config(tmp.path(), body);
    let out = tmp.path().join("out");
    let o = run_in("spectrum", &cfg, &out, &["--range", "-1.0", "0.0", "--steps", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("couplings.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 4);
    for line in lines {
        for v in line.split(',').skip(1) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{line}");
        }
    }
}

#[test]
fn seed_section_selects_alternate_settings() {
    let tmp = TempDir::new().unwrap();
    let body = short_lct_config().replace(
        "\"filter\"",
        r#""quick": { "lambda": 29730.0, "eta": 1e-6, "dt_ns": 0.05, "t_max_ns": 10,
                     "initial": "100", "target": "010" },
  "filter""#,
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    assert!(run_in("lct", &cfg, &out, &["--seed-section", "quick"]).status.success());
    let rows = fs::read_to_string(out.join("waveform.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 200);

    let o = run_in("lct", &cfg, &out, &["--seed-section", "absent"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn truncate_rejects_missing_pulse_file() {
    let tmp = TempDir::new().unwrap();
    let body = short_lct_config().replace(
        "\"filter\"",
        r#""truncation": { "sigma_ns": 2.0 },
  "filter""#,
    );
    let cfg = write_config(tmp.path(), &body);
    let pulse = tmp.path().join("nope.csv");
    let o = run_in("truncate", &cfg, &tmp.path().join("out"), &["--pulse", pulse.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
