use std::path::Path;
use std::process::{Command, Output};

use ram_dpm::data::{read_dataset, read_draws, read_json};
use ram_dpm::pipeline::{BenchReport, EstimateReport};
use ram_dpm::simulate::SimulationSidecar;
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ram-dpm"));
    c.env("RAM_DPM_THREADS", "1");
    c
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn tiny_model() -> Value {
    json!({"K": 9, "conditional": "merged", "H": 8, "n_iter": 500, "n_burn": 100, "thin": 5, "mc_draws": 200, "seed": 3})
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn simulate_fit_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = write_config(
        d,
        "sim.json",
        &json!({"model": tiny_model(), "scenario": {"id": "s2", "n": 200}}),
    );
    let out = run("simulate", &sim, d, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let side: SimulationSidecar = read_json(&d.join("sidecar.json")).unwrap();
    assert!(side.theta_true.is_finite());
    let ds = read_dataset(&d.join("data.csv"), 9).unwrap();
    assert_eq!(ds.len(), 200);

    let fit_cfg =
        json!({"data": "data.csv", "draws": "draws.json", "model": tiny_model(), "extrapolation": {"kind": "pm"}});
    let cfg = write_config(d, "fit.json", &fit_cfg);
    let out = run("fit", &cfg, d, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let draws = read_draws(&d.join("draws.json")).unwrap();
    assert_eq!(draws.len(), 80);

    let out = run("estimate", &cfg, d, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pm: EstimateReport = read_json(&d.join("estimate.json")).unwrap();
    assert!(pm.theta_mean.is_finite() && pm.ci_low <= pm.ci_high);
    assert_eq!(pm.gof.len(), 6);
    assert!(pm.gof.iter().all(|c| c.observed_mean.is_some()));

    // Same draws, completers only: only the K+1 handling differs.
    let mut none_cfg = fit_cfg.clone();
    none_cfg["extrapolation"] = json!({"kind": "none"});
    let cfg_none = write_config(d, "none.json", &none_cfg);
    let none_dir = d.join("none");
    let out = run("estimate", &cfg_none, &none_dir, &[]);
    assert!(out.status.success());
    let none: EstimateReport = read_json(&none_dir.join("estimate.json")).unwrap();
    assert_eq!(none.gof, pm.gof);
    assert_eq!(none.prior_kind, "none");
    assert_ne!(none.theta_mean, pm.theta_mean);

    let out = run("gof", &cfg, d, &[]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(d.join("gof.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn commands_are_deterministic_given_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = write_config(
        d,
        "sim.json",
        &json!({"model": tiny_model(), "scenario": {"id": "s3", "n": 120}}),
    );
    assert!(run("simulate", &sim, d, &["--seed", "11"]).status.success());
    let cfg = write_config(
        d,
        "fit.json",
        &json!({"data": "data.csv", "draws": "draws.json", "model": tiny_model()}),
    );
    for sub in ["a", "b"] {
        let o = d.join(sub);
        assert!(run("fit", &cfg, &o, &[]).status.success());
    }
    let a = std::fs::read(d.join("a/draws.json")).unwrap();
    let b = std::fs::read(d.join("b/draws.json")).unwrap();
    assert_eq!(a, b);
    // A different seed changes the chain.
    assert!(run("fit", &cfg, &d.join("c"), &["--seed", "99"]).status.success());
    assert_ne!(a, std::fs::read(d.join("c/draws.json")).unwrap());
}

#[test]
fn draws_file_round_trip_reproduces_theta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = write_config(
        d,
        "sim.json",
        &json!({"model": tiny_model(), "scenario": {"id": "s2", "n": 150}}),
    );
    assert!(run("simulate", &sim, d, &[]).status.success());
    let cfg_v = json!({"data": "data.csv", "draws": "draws.json", "model": tiny_model(), "extrapolation": {"kind": "tri2", "P": 20}});
    let cfg_p = write_config(d, "fit.json", &cfg_v);
    assert!(run("fit", &cfg_p, d, &[]).status.success());
    let cfg = ram_dpm::config::parse_config(&cfg_p).unwrap();
    let draws = read_draws(&d.join("draws.json")).unwrap();
    let (a, _) = ram_dpm::pipeline::estimate_from_draws(&cfg, &draws).unwrap();
    let text = serde_json::to_string(&draws).unwrap();
    let back: Vec<ram_dpm::model::PosteriorDraw> = serde_json::from_str(&text).unwrap();
    let (b, _) = ram_dpm::pipeline::estimate_from_draws(&cfg, &back).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bench_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "bench.json",
        &json!({
            "model": {"H": 5, "n_iter": 200, "n_burn": 100, "thin": 10, "mc_draws": 50},
            "scenario": {"id": "s6", "n": 120},
            "bench": {"n_reps": 2, "base_seed": 5, "priors": [{"kind": "none"}, {"kind": "unif", "P": 20}]}
        }),
    );
    let out = run("bench", &cfg, d, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: BenchReport = read_json(&d.join("bench.json")).unwrap();
    assert_eq!(rep.reports.len(), 2);
    assert_eq!(rep.table[1].prior, "unif_20");
    let csv = std::fs::read_to_string(d.join("bench.csv")).unwrap();
    assert!(csv.starts_with("prior,bias,mse,coverage,ci_length"));
}

#[test]
fn unknown_keys_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &json!({"modle": {}, "model": {"iters": 5}}));
    let out = run("fit", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"], "config");
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("modle") && msg.contains("model.iters"), "{msg}");
}

#[test]
fn missing_inputs_and_bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({}));
    assert_eq!(run("fit", &cfg, dir.path(), &[]).status.code(), Some(1));
    let cfg = write_config(dir.path(), "c2.json", &json!({"data": "nope.csv"}));
    let out = run("fit", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "io");
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numeric_failures_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Every completer in arm 1 has the same outcome.
    let mut text = String::from("y,r,x_cat,x_cont,z\n");
    for i in 0..40 {
        let z = i % 2;
        let y = if z == 1 { 5.0 } else { f64::from(i) };
        text.push_str(&format!("{y},1,1,{},{z}\n", f64::from(i) * 0.1));
    }
    std::fs::write(d.join("data.csv"), text).unwrap();
    let cfg = write_config(d, "c.json", &json!({"data": "data.csv", "model": tiny_model()}));
    let out = run("fit", &cfg, d, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "degenerate");
}
