use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn survsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survsel"))
        .args(args)
        .env_remove("SURVSEL_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = survsel(args);
    assert!(
        out.status.success(),
        "survsel {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small dataset with an age column and one strong covariate.
fn write_data(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    let mut text = String::from("time,status,age,g1,g2,g3,g4,g5\n");
    let mut state: u64 = 12345;
    let mut unif = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    for _ in 0..80 {
        let x: Vec<f64> = (0..6).map(|_| unif() * 2.0 - 1.0).collect();
        let hazard = (2.0 * x[1]).exp();
        let t = -unif().ln() / hazard;
        let c = -unif().ln() * 3.0;
        let status = u8::from(t <= c);
        let row: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
        text.push_str(&format!("{:.6},{status},{}\n", t.min(c), row.join(",")));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn without_wall_time(text: &str) -> String {
    text.lines().filter(|l| !l.contains("wall_time_seconds")).collect::<Vec<_>>().join("\n")
}

#[test]
fn select_reports_fixed_covariates_with_inclusion_one() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("sel.json");
    ok(&[
        "select",
        data.to_str().unwrap(),
        "--fixed-cols",
        "age",
        "--tau",
        "0.25",
        "--r",
        "1",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let age = report["inclusion"].as_array().unwrap().iter().find(|c| c["name"] == "age").unwrap();
    assert_eq!(age["probability"], 1.0);
    assert_eq!(age["fixed"], true);
    assert_eq!(report["tau"]["tuned"], false);
    assert_eq!(report["tau"]["tau"], 0.25);
    assert!(report["hppm"]["names"].as_array().unwrap().iter().any(|n| n == "g1"));
    assert!(report["hppm"]["names"].as_array().unwrap().iter().any(|n| n == "age"));
    assert_eq!(report["header"]["seed"], 7);
    assert_eq!(report["header"]["config_sha256"].as_str().unwrap().len(), 64);
    assert!(report["top_models"].as_array().unwrap().len() <= 50);
    assert!(report["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    let coefs = report["hppm_coefficients"].as_array().unwrap();
    assert_eq!(coefs.len(), report["hppm"]["indices"].as_array().unwrap().len());
}

#[test]
fn select_is_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let run = |threads: &str| {
        let out = ok(&["--threads", threads, "select", data.to_str().unwrap(), "--seed", "3", "--chains", "3"]);
        without_wall_time(&String::from_utf8(out.stdout).unwrap())
    };
    let one = run("1");
    assert_eq!(one, run("1"));
    assert_eq!(one, run("4"));
}

#[test]
fn tune_emits_overlap_curve() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let out = ok(&["tune", data.to_str().unwrap(), "--alpha", "0.8", "--reps", "60", "--seed", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# survsel ") && lines[0].contains("seed=5"));
    assert!(lines[1].starts_with("# tau="));
    assert_eq!(lines[2], "tau,overlap");
    assert_eq!(lines.len(), 3 + 40);
    let tau: f64 = lines[1]
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("tau="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(tau > 0.0 && tau <= 0.64);
}

#[test]
fn simulate_writes_rows_plus_aggregate() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    ok(&[
        "simulate",
        "--case",
        "1",
        "--reps",
        "5",
        "--n",
        "200",
        "--p",
        "100",
        "--tau",
        "0.25",
        "--iters",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#'));
    assert!(lines[1].starts_with("rep,"));
    assert_eq!(lines.len(), 2 + 5 + 1);
    assert!(lines[7].starts_with("mean,"));
    let aggregate: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(aggregate["aggregate"]["reps"], 5);
}

#[test]
fn evaluate_has_one_column_per_fold_plus_mean() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let curves = dir.path().join("curves.csv");
    let out = ok(&[
        "evaluate",
        data.to_str().unwrap(),
        "--folds",
        "5",
        "--mode",
        "bma",
        "--t-grid",
        "0.1:0.6:4",
        "--tau",
        "0.25",
        "--iters",
        "5",
        "--curves",
        curves.to_str().unwrap(),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "t,fold_0,fold_1,fold_2,fold_3,fold_4,mean");
    assert_eq!(lines.len(), 2 + 4);
    for line in &lines[2..] {
        assert_eq!(line.split(',').count(), 7);
    }
    let curve_text = std::fs::read_to_string(&curves).unwrap();
    assert!(curve_text.lines().nth(1) == Some("subject,time,survival"));
}

#[test]
fn predict_writes_survival_curves_per_subject() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let subjects = dir.path().join("rows.csv");
    std::fs::write(&subjects, "g5,g4,g3,g2,g1,age\n0,0,0,0,1,0\n0,0,0,0,-1,0\n").unwrap();
    let out = ok(&["predict", data.to_str().unwrap(), "--mode", "hppm", "--subjects", subjects.to_str().unwrap(), "--tau", "0.25"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut high = Vec::new();
    let mut low = Vec::new();
    for line in text.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let s: f64 = f[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&s));
        if f[0] == "0" {
            high.push(s);
        } else {
            low.push(s);
        }
    }
    assert_eq!(high.len(), low.len());
    assert!(high.windows(2).all(|w| w[1] <= w[0]));
    // subject 0 has the larger hazard
    assert!(high.iter().zip(&low).all(|(h, l)| h <= l));
}

#[test]
fn config_file_sets_prior() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let config = dir.path().join("prior.toml");
    std::fs::write(&config, "[prior]\nfamily = \"pmom\"\ntau = 0.3\nr = 1\n[modelprior]\na = 1\nb = 4\n").unwrap();
    let out = ok(&["select", data.to_str().unwrap(), "--config", config.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["prior"]["family"], "pMOM");
    assert_eq!(report["config"]["prior"]["b"], 4.0);
    assert_eq!(report["tau"]["tau"], 0.3);
    // flags win over the file
    let out = ok(&["select", data.to_str().unwrap(), "--config", config.to_str().unwrap(), "--tau", "0.5"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["tau"]["tau"], 0.5);
}

#[test]
fn validation_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    let missing = survsel(&["select", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation");

    let bad_col = survsel(&["select", data.to_str().unwrap(), "--fixed-cols", "weight"]);
    assert_eq!(bad_col.status.code(), Some(2));

    let bad_temps = survsel(&["select", data.to_str().unwrap(), "--temps", "1:3:4", "--tau", "0.25"]);
    assert_eq!(bad_temps.status.code(), Some(2));

    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[prior]\nscale = 2\n").unwrap();
    let bad_config = survsel(&["select", data.to_str().unwrap(), "--config", config.to_str().unwrap()]);
    assert_eq!(bad_config.status.code(), Some(2));

    let pmom_untuned = survsel(&["select", data.to_str().unwrap(), "--family", "pmom"]);
    assert_eq!(pmom_untuned.status.code(), Some(2));
}
