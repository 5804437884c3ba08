use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ppfpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppfpf")).args(args).output().expect("binary runs")
}

fn error_of(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("stderr error is JSON")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
preset = "fig2_ou"
seed = 3
steps = 50
particles = 30
[oracle]
points = 201
[ppfpf.gain]
kernel = "gaussian"
epsilon = 10.0
lambda = 1e-7
max_centers = 15
"#;

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = ppfpf(&["run", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("schema_version,run,seed,filter,status,mse"));
    for (line, label) in lines[1..].iter().zip(["BPF", "EKSPF", "ADF", "ppFPF"]) {
        assert!(line.starts_with(&format!("1,0,9,{label},ok,")), "{line}");
    }
    for f in ["bpf", "ekspf", "adf", "ppfpf", "oracle", "truth"] {
        assert!(out.join(format!("trajectories/{f}.csv")).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
}

#[test]
fn oracle_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    let res = ppfpf(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(out.join("trajectories/oracle.csv").exists());
    assert!(!out.join("trajectories/ppfpf.csv").exists());
}

#[test]
fn missing_seed_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "preset = \"fig2_ou\"\n");
    let res = ppfpf(&["run", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let err = error_of(&res);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn unknown_filter_and_key_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "preset = \"fig2_ou\"\nseed = 1\nfilters = [\"kf\"]\n");
    let err = error_of(&ppfpf(&["run", "--config", &cfg]));
    assert!(err["error"]["message"].as_str().unwrap().contains("bpf, ekspf, adf, ppfpf"));
    let cfg = write_config(dir.path(), "preset = \"fig2_ou\"\nseed = 1\nparticle = 5\n");
    let err = error_of(&ppfpf(&["run", "--config", &cfg]));
    assert_eq!(err["error"]["kind"], "parse");
}

#[test]
fn missing_file_is_io_error() {
    let res = ppfpf(&["run", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(error_of(&res)["error"]["kind"], "io");
}

#[test]
fn usage_errors_are_json() {
    let res = ppfpf(&["run"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_of(&res)["error"]["kind"], "usage");
}

#[test]
fn presets_parse_back() {
    let res = ppfpf(&["presets"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let chunks: Vec<&str> = text.split("# --- ").skip(1).collect();
    assert_eq!(chunks.len(), 3);
    for chunk in chunks {
        let body = chunk.split_once('\n').unwrap().1;
        assert!(ppfpf::harness::parse_config_str(body).is_ok(), "{body}");
    }
}

#[test]
fn config_reference_prints_schema() {
    let res = ppfpf(&["config-reference"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("[ppfpf.gain]") && text.contains("seed"));
}
