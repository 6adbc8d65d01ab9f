use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_temper-lab"))
}

fn dir(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn run_with(kind: &str, config: Option<&str>, out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = bin();
    cmd.arg(kind).arg("--out").arg(out).args(extra);
    if let Some(text) = config {
        let p = out.with_extension("json");
        std::fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(kind: &str, config: Option<&str>, out: &Path, extra: &[&str]) -> Output {
    run_with(kind, config, out, extra, &[])
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn fig2_outputs_and_manifest_hashes() {
    let out = dir("fig2");
    let o = run("reproduce-fig2", None, &out, &["--svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["kind"], "reproduce-fig2");
    assert_eq!(m["parameters"]["alpha_pi"], 0.01);
    assert_eq!(m["parameters"]["alpha_nu"], 1.0);
    for f in m["files"].as_array().unwrap() {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    let csv = std::fs::read_to_string(out.join("fig2.csv")).unwrap();
    assert!(csv.starts_with("t,G_optimal,G_linear,G_vanilla\n"));
    assert_eq!(csv.lines().count(), 42);
    let svg = std::fs::read_to_string(out.join("fig2.svg")).unwrap();
    assert_eq!(svg, include_str!("golden/fig2.svg"));
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let out = dir("bad");
    let o = run("probe", Some(r#"{"schema_version":1,"params":{"ms":[10],"lamdas":[0.5]}}"#), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("params") && err.contains("lamdas"), "{err}");

    let o = run("lower-unimodal", None, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "stochastic kinds need a seed");

    let o = run("no-such-kind", None, &out, &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = run("sample", Some(r#"{"schema_version":1,"seed":1,"params":{"h":0.3,"snapshot_times":[0.5]}}"#), &out, &[]);
    assert_eq!(o.status.code(), Some(2), "snapshot times must be multiples of h");
}

#[test]
fn guard_violation_exits_4() {
    let out = dir("guard");
    let cfg = r#"{"schema_version":1,"params":{"n_particles":10,"h":0.5,"snapshot_times":[1],"policy":"guarded",
        "schedule":{"kind":"linear","horizon":1}}}"#;
    let o = run("sample", Some(cfg), &out, &["--seed", "1"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn explosion_exits_3() {
    let out = dir("explode");
    let cfg = r#"{"schema_version":1,"params":{"n_particles":10,"h":0.5,"snapshot_times":[500],
        "target":{"family":"gaussian","mean":[0],"var":0.01},"schedule":{"kind":"vanilla","horizon":500}}}"#;
    let o = run("sample", Some(cfg), &out, &["--seed", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sample"));
}

#[test]
fn seeded_runs_are_reproducible_across_thread_caps() {
    let cfg = r#"{"schema_version":1,"seed":9,"params":{"n_particles":2000,"h":0.01,"snapshot_times":[0.5,1],
        "schedule":{"kind":"linear","horizon":1}}}"#;
    let (a, b) = (dir("rep_a"), dir("rep_b"));
    assert!(run_with("sample", Some(cfg), &a, &[], &[("TEMPER_LAB_THREADS", "1")]).status.success());
    assert!(run_with("sample", Some(cfg), &b, &[], &[("TEMPER_LAB_THREADS", "3")]).status.success());
    assert_eq!(manifest(&a)["files"], manifest(&b)["files"]);
    assert_eq!(manifest(&a)["seed"], 9);

    let c = dir("rep_c");
    assert!(run("sample", Some(cfg), &c, &["--seed", "10"]).status.success());
    assert_ne!(manifest(&a)["files"], manifest(&c)["files"]);
}

#[test]
fn print_defaults_is_a_valid_config() {
    let o = bin().args(["bounds-sweep", "--print-defaults"]).output().unwrap();
    assert!(o.status.success());
    let out = dir("defaults");
    let text = String::from_utf8(o.stdout).unwrap();
    let o = run("bounds-sweep", Some(&text), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("continuous_bound.csv").exists() && out.join("discrete_bound.csv").exists());
}
