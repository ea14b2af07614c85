use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccpo::harness::{RunConfig, RunManifest};
use ccpo::io::read_json;
use ccpo::stats::{ecdf, residual, EcdfSummary};
use ccpo::surrogate::EpisodeDataset;
use ccpo::tuner::TunerState;

fn ccpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccpo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// S = 16, K = 5, three design points and two BO iterations.
fn mini_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::ode_low_penalty();
    cfg.train.rollouts = 16;
    cfg.train.max_epochs = 5;
    cfg.tuner.design_points = 3;
    cfg.tuner.max_iterations = 2;
    cfg.tuner.acquisition_starts = 64;
    cfg.pretrain.episodes = 4;
    cfg.pretrain.epochs = 20;
    cfg.eval_rollouts = 16;
    cfg.out_dir = dir.join("run");
    let path = dir.join("mini.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_exits_with_usage_code() {
    let out = ccpo(&["train", "--config", "/nonexistent/ccpo.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ccpo.json"));
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"seed\": 1,\n  oops\n}").unwrap();
    let out = ccpo(&["train", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(ccpo(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn single_epoch_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config(dir.path());
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        ok(ccpo(&["train", "--config", s(&cfg), "--epochs", "1", "--out", s(&out)]));
        fs::read(out.join("train_report.csv")).unwrap()
    };
    let a = read("a");
    let b = read("b");
    assert_eq!(a, b);
    let rows = String::from_utf8(a).unwrap().lines().count();
    assert_eq!(rows, 2, "header plus one epoch");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config(dir.path());
    let read = |sub: &str, threads: &str| {
        let out = dir.path().join(sub);
        ok(ccpo(&["train", "--config", s(&cfg), "--out", s(&out), "--threads", threads]));
        fs::read(out.join("train_report.csv")).unwrap()
    };
    assert_eq!(read("one", "1"), read("four", "4"));
}

fn strip_times(mut m: RunManifest) -> RunManifest {
    m.wall_seconds.clear();
    m
}

#[test]
fn tune_pipeline_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(ccpo(&["tune", "--config", s(&cfg), "--out", s(&a)]));
    ok(ccpo(&["tune", "--config", s(&cfg), "--out", s(&b)]));

    let ma: RunManifest = read_json(a.join("manifest.json")).unwrap();
    let mb: RunManifest = read_json(b.join("manifest.json")).unwrap();
    assert!(ma.nominal.is_some() && ma.tuned.is_some());
    assert_eq!(strip_times(ma.clone()), strip_times(mb));
    for f in ["tuner_state.json", "tuner_iterations.csv", "policy_tuned.json", "policy_nominal.json", "train_report.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let state: TunerState = read_json(a.join("tuner_state.json")).unwrap();
    let alpha = RunConfig::ode_low_penalty().tuner.alpha;
    for r in &state.records {
        assert_eq!(r.residual, residual(r.summary.f_lb, alpha));
        assert!(r.gamma.iter().all(|g| (0.0..=3.0).contains(g)));
    }

    // cut the run back to the first BO iteration and resume it
    let mut partial = state.clone();
    partial.records.truncate(partial.design.len() + 1);
    partial.iteration = 1;
    partial.converged = false;
    partial.exhausted = false;
    fs::write(b.join("tuner_state.json"), serde_json::to_string(&partial).unwrap()).unwrap();
    fs::remove_file(b.join("manifest.json")).unwrap();
    ok(ccpo(&["tune", "--resume", s(&b)]));
    let resumed: TunerState = read_json(b.join("tuner_state.json")).unwrap();
    assert_eq!(resumed, state);
    let mr: RunManifest = read_json(b.join("manifest.json")).unwrap();
    assert_eq!(mr.tuned, ma.tuned);
    assert_eq!(mr.nominal, ma.nominal);
}

#[test]
fn tolerance_met_at_first_iteration_stops() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config(dir.path());
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_ccpo"))
        .args(["tune", "--config", s(&cfg), "--out", s(&out)])
        .env("CCPO_TUNER__TOL", "1.0")
        .env("CCPO_TUNER__MAX_ITERATIONS", "5")
        .output()
        .unwrap();
    ok(o);
    let m: RunManifest = read_json(out.join("manifest.json")).unwrap();
    assert_eq!(m.bo_iterations, Some(1));
}

#[test]
fn eval_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini_config(dir.path());
    let out = dir.path().join("run");
    ok(ccpo(&["train", "--config", s(&cfg), "--epochs", "2", "--out", s(&out)]));
    let policy = out.join("policy_nominal.json");
    ok(ccpo(&["eval", "--config", s(&cfg), "--out", s(&out), "--policy", s(&policy), "--rollouts", "40"]));

    let summary: EcdfSummary = read_json(out.join("eval_summary.json")).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("eval_c_values.csv")).unwrap();
    let c: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(c.len(), 40);
    assert_eq!(summary.f_s, ecdf(&c));
    assert_eq!(summary, EcdfSummary::from_c_values(&c, summary.epsilon).unwrap());

    let mut rdr = csv::Reader::from_path(out.join("eval_percentiles.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    for g in ["g1", "g2"] {
        let n = rows.iter().filter(|r| &r[0] == g).count();
        assert_eq!(n, 12, "{g}");
    }
    for r in &rows {
        let (lo, mid, hi): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(lo <= mid && mid <= hi);
    }
}

#[test]
fn gendata_and_refit_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sur");
    let out_s = s(&out);
    let o = ok(ccpo(&["gendata", "--preset", "surrogate", "--out", out_s]));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("96 transitions"));
    let data = EpisodeDataset::load(&out.join("dataset.csv"), 12).unwrap();
    assert_eq!(data.transitions.len(), 96);

    ok(ccpo(&["fit-surrogate", "--preset", "surrogate", "--out", out_s]));
    let first = fs::read(out.join("surrogate.json")).unwrap();
    ok(ccpo(&["fit-surrogate", "--preset", "surrogate", "--out", out_s]));
    assert_eq!(first, fs::read(out.join("surrogate.json")).unwrap());
}
