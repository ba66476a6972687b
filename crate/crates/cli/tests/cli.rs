use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gaplm_cli::data::{load_csv, write_csv, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

fn gaplm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaplm")).args(args).env_remove("GAPLM_SEED").output().expect("run gaplm")
}

fn lines(out: &Output) -> Vec<Value> {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad line {l}: {e}")))
        .collect()
}

fn records<'a>(v: &'a [Value], kind: &str) -> Vec<&'a Value> {
    v.iter().filter(|r| r["record"] == kind).collect()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn key_set(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Example-1-shaped logistic data: y, x1, x2 uniform, x3..x5 normal.
fn example1_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::new(); 6];
    for _ in 0..n {
        let x1: f64 = rng.random();
        let x2: f64 = rng.random();
        let z: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let eta =
            (2.0 * std::f64::consts::PI * x1).sin() + 5.0 * x2.powi(4) + 3.0 * x2 * x2 - 2.0 + 2.0 * z[0] + 1.5 * z[1]
                - 0.9 * z[2];
        cols[0].push(f64::from(rng.random::<f64>() < sigmoid(eta)));
        cols[1].push(x1);
        cols[2].push(x2);
        for k in 0..3 {
            cols[3 + k].push(z[k]);
        }
    }
    let names = ["y", "x1", "x2", "x3", "x4", "x5"].map(String::from).to_vec();
    let path = dir.join("ex1.csv");
    write_csv(&path, &Table { names, columns: cols }).unwrap();
    path
}

/// Logistic data with 18 covariates, the first six nonlinear.
fn silhouette_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = [0.6, -0.5, 0.4, 0.0, 0.0, 0.3, 0.0, -0.3, 0.0, 0.0, 0.2, 0.0];
    let mut cols = vec![Vec::new(); 19];
    for _ in 0..n {
        let x: Vec<f64> = (0..18).map(|_| rng.sample(StandardNormal)).collect();
        let mut eta = 0.8 * x[0].sin() * 1.5 + 0.5 * (x[1] * x[1] - 1.0) - 0.7 * x[2].tanh()
            + 0.4 * x[3]
            + 0.3 * (x[4].abs() - 0.8)
            - 0.2 * x[5];
        for (k, b) in beta.iter().enumerate() {
            eta += b * x[6 + k];
        }
        cols[0].push(f64::from(rng.random::<f64>() < sigmoid(eta)));
        for (j, v) in x.into_iter().enumerate() {
            cols[1 + j].push(v);
        }
    }
    let mut names = vec!["y".to_string()];
    names.extend((1..=18).map(|j| format!("x{j}")));
    let path = dir.join("silhouette.csv");
    write_csv(&path, &Table { names, columns: cols }).unwrap();
    path
}

#[test]
fn csv_round_trip_keeps_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cols: Vec<Vec<f64>> =
        (0..3).map(|_| (0..50).map(|_| rng.sample::<f64, _>(StandardNormal) * 1e3).collect()).collect();
    cols[2][0] = 1.0 / 3.0;
    cols[2][1] = -5e-324;
    cols[2][2] = 1.0e300;
    let t = Table { names: vec!["a".into(), "b".into(), "c".into()], columns: cols };
    let p = dir.path().join("t.csv");
    write_csv(&p, &t).unwrap();
    let back = load_csv(&p).unwrap();
    assert_eq!(back.names, t.names);
    for (a, b) in back.columns.iter().zip(&t.columns) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn missing_cell_is_a_data_error_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("na.csv");
    std::fs::write(&p, "y,x\n1,0.5\n0,NA\n1,0.7\n").unwrap();
    let out = gaplm(&["average", "--input", p.to_str().unwrap(), "--response", "y", "--param", "x"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row(s) 2"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 40, 1);
    let input = p.to_str().unwrap();
    assert_eq!(gaplm(&["average", "--input", input]).status.code(), Some(2));
    assert_eq!(gaplm(&["average", "--input", input, "--response", "y", "--param", "nope"]).status.code(), Some(2));
    assert_eq!(
        gaplm(&["average", "--input", input, "--response", "y", "--nonparam", "x1", "--param", "x1"]).status.code(),
        Some(2)
    );
    assert_eq!(gaplm(&["average", "--input", input, "--response", "y", "--method", "lasso"]).status.code(), Some(2));
    assert_eq!(gaplm(&["simulate", "--example", "ex9"]).status.code(), Some(2));
}

#[test]
fn bad_response_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "y,x\n2,0.5\n0,0.1\n1,0.7\n0,0.2\n1,0.9\n").unwrap();
    let out = gaplm(&["average", "--input", p.to_str().unwrap(), "--response", "y", "--param", "x", "--method", "aic"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn single_candidate_gets_unit_weight() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 60, 2);
    let v = lines(&gaplm(&[
        "average",
        "--input",
        p.to_str().unwrap(),
        "--response",
        "y",
        "--param",
        "x3",
        "--method",
        "cv,saic",
    ]));
    let w = records(&v, "weights");
    assert_eq!(w.len(), 2);
    for r in w {
        assert_eq!(r["weights"].as_array().unwrap().len(), 1);
        assert_eq!(r["weights"][0].as_f64(), Some(1.0));
    }
    let imp = records(&v, "importance");
    assert!(imp.iter().all(|r| r["variable"] == "x3" && r["v"].as_f64() == Some(1.0)));
}

#[test]
fn average_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 100, 3);
    let csv_dir = dir.path().join("tables");
    let out = gaplm(&[
        "average",
        "--input",
        p.to_str().unwrap(),
        "--response",
        "y",
        "--nonparam",
        "x1,x2",
        "--param",
        "x3,x4,x5",
        "--method",
        "cv",
        "--fold-size",
        "5",
        "--knot-rule",
        "ceil_n_fifth",
        "--placement",
        "quantile",
        "--csv-dir",
        csv_dir.to_str().unwrap(),
    ]);
    let v = lines(&out);
    let schema = [
        (
            "run",
            key_set(&[
                "record",
                "command",
                "n",
                "p",
                "family",
                "phi",
                "methods",
                "fold_size",
                "knots",
                "degree",
                "placement",
                "standardized",
                "screened",
                "n_candidates",
                "seed",
            ]),
        ),
        ("candidate", key_set(&["record", "index", "nonparam", "param", "dim", "loglik", "converged"])),
        ("weights", key_set(&["record", "method", "weights", "criterion"])),
        ("importance", key_set(&["record", "method", "variable", "rank", "v"])),
        ("warning", key_set(&["record", "message"])),
    ];
    for r in &v {
        let kind = r["record"].as_str().unwrap();
        let expected = &schema.iter().find(|(k, _)| *k == kind).unwrap_or_else(|| panic!("unknown record {kind}")).1;
        assert_eq!(&keys(r), expected);
    }
    let run = records(&v, "run")[0];
    assert_eq!(run["n_candidates"], 31);
    assert_eq!(run["knots"], 3);
    assert_eq!(records(&v, "candidate").len(), 31);
    let w: Vec<f64> =
        records(&v, "weights")[0]["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(w.len(), 31);
    assert!(w.iter().all(|&x| x >= 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    assert_eq!(records(&v, "importance").len(), 5);
    for f in ["candidates.csv", "weights.csv", "importance.csv"] {
        assert!(csv_dir.join(f).exists());
    }
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("e-1") || text.contains("e0"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 60, 4);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("input={}\nresponse=y\nparam=x3,x4\nmethod=cv\nfold_size=10\nseed=99\n", p.display()))
        .unwrap();
    let v = lines(&gaplm(&["average", "--config", cfg.to_str().unwrap()]));
    assert_eq!(records(&v, "run")[0]["fold_size"], 10);
    assert_eq!(records(&v, "run")[0]["seed"], 99);
    let v = lines(&gaplm(&["average", "--config", cfg.to_str().unwrap(), "--fold-size", "5"]));
    assert_eq!(records(&v, "run")[0]["fold_size"], 5);
    assert_eq!(records(&v, "weights")[0]["method"], "CV-5");
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 40, 5);
    let out = Command::new(env!("CARGO_BIN_EXE_gaplm"))
        .args(["screen", "--input", p.to_str().unwrap(), "--response", "y"])
        .env("GAPLM_SEED", "4242")
        .output()
        .unwrap();
    assert_eq!(records(&lines(&out), "run")[0]["seed"], 4242);
}

#[test]
fn screen_ranks_signal_first() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 200;
    let x: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|i| x[1][i] * x[1][i] + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    write_csv(
        &p,
        &Table {
            names: vec!["y".into(), "a".into(), "b".into(), "c".into()],
            columns: vec![y, x[0].clone(), x[1].clone(), x[2].clone()],
        },
    )
    .unwrap();
    let v = lines(&gaplm(&["screen", "--input", p.to_str().unwrap(), "--response", "y"]));
    let s = records(&v, "screen");
    assert_eq!(s.len(), 3);
    assert_eq!(s[0]["variable"], "b");
    assert_eq!(s[0]["rank"], 1);
    assert!(s.iter().all(|r| keys(r) == key_set(&["record", "rank", "variable", "dcorr2"])));
}

#[test]
fn importance_lists_ranked_variables() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 150, 7);
    let v = lines(&gaplm(&[
        "importance",
        "--input",
        p.to_str().unwrap(),
        "--response",
        "y",
        "--nonparam",
        "x1,x2",
        "--param",
        "x3,x4,x5",
        "--method",
        "cv-10,sbic",
    ]));
    assert!(records(&v, "weights").is_empty());
    let imp = records(&v, "importance");
    assert_eq!(imp.len(), 10);
    for chunk in imp.chunks(5) {
        let vs: Vec<f64> = chunk.iter().map(|r| r["v"].as_f64().unwrap()).collect();
        assert!(vs.windows(2).all(|w| w[0] >= w[1]));
        assert!(vs.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn predict_reproduces_exact_linear_fit() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let xs: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x).collect();
    write_csv(&train, &Table { names: vec!["y".into(), "x".into()], columns: vec![ys, xs] }).unwrap();
    let model = dir.path().join("model.json");
    let v = lines(&gaplm(&[
        "average",
        "--input",
        train.to_str().unwrap(),
        "--response",
        "y",
        "--param",
        "x",
        "--family",
        "gaussian",
        "--method",
        "aic",
        "--standardize",
        "--save-model",
        model.to_str().unwrap(),
    ]));
    assert_eq!(records(&v, "run")[0]["standardized"], true);
    let newx = dir.path().join("new.csv");
    std::fs::write(&newx, "x\n-1\n0.5\n10\n").unwrap();
    let pred = dir.path().join("pred.csv");
    let out = gaplm(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        newx.to_str().unwrap(),
        "--output",
        pred.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = load_csv(&pred).unwrap();
    assert_eq!(t.names, vec!["row", "eta", "mu"]);
    for (i, x) in [-1.0, 0.5, 10.0].iter().enumerate() {
        assert!((t.columns[1][i] - (1.0 + 2.0 * x)).abs() < 1e-8);
        assert_eq!(t.columns[1][i], t.columns[2][i]);
    }
    let missing = dir.path().join("missing.csv");
    std::fs::write(&missing, "z\n1\n").unwrap();
    let out = gaplm(&["predict", "--model", model.to_str().unwrap(), "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn saved_model_predictions_match_in_sample_average() {
    let dir = tempfile::tempdir().unwrap();
    let p = example1_csv(dir.path(), 120, 8);
    let model = dir.path().join("m.json");
    lines(&gaplm(&[
        "average",
        "--input",
        p.to_str().unwrap(),
        "--response",
        "y",
        "--nonparam",
        "x1,x2",
        "--param",
        "x3,x4,x5",
        "--method",
        "cv",
        "--save-model",
        model.to_str().unwrap(),
    ]));
    let m = gaplm_cli::run::load_model(&model).unwrap();
    assert_eq!(m.candidates.len(), 31);
    let table = load_csv(&p).unwrap();
    let (eta, mu) = gaplm_cli::run::predict(&m, &table).unwrap();
    assert_eq!(eta.len(), 120);
    assert!(mu.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let again = gaplm_cli::run::load_model(&model).unwrap();
    assert_eq!(gaplm_cli::run::predict(&again, &table).unwrap().0, eta);
}

#[test]
fn simulate_output_is_thread_count_independent() {
    let base = [
        "simulate",
        "--example",
        "ex1",
        "--n",
        "60",
        "--reps",
        "3",
        "--fold-sizes",
        "5",
        "--format",
        "csv",
        "--seed",
        "17",
    ];
    let one = gaplm(&[&base[..], &["--threads", "1"]].concat());
    let two = gaplm(&[&base[..], &["--threads", "3"]].concat());
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, two.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "method,mean,se,mean_w_cor");
    assert_eq!(rows.len(), 6);
    let table =
        gaplm(&["simulate", "--example", "gaussian-inclusion", "--n", "60", "--reps", "2", "--methods", "cv-5"]);
    assert!(String::from_utf8(table.stdout).unwrap().contains("CV-5"));
}

#[test]
fn holdout_cv_beats_smoothed_criteria_on_paired_splits() {
    let dir = tempfile::tempdir().unwrap();
    let p = silhouette_csv(dir.path(), 429, 9);
    let v = lines(&gaplm(&[
        "average",
        "--input",
        p.to_str().unwrap(),
        "--response",
        "y",
        "--nonparam",
        "x1,x2,x3,x4,x5,x6",
        "--param",
        "x7,x8,x9,x10,x11,x12,x13,x14,x15,x16,x17,x18",
        "--method",
        "saic,sbic,cv-5",
        "--standardize",
        "--train-fraction",
        "0.34965",
        "--resplits",
        "60",
        "--seed",
        "20240917",
    ]));
    let run = records(&v, "run")[0];
    assert_eq!(run["screened"], true);
    let holdout = records(&v, "holdout");
    assert_eq!(holdout.len(), 180);
    assert!(holdout.iter().all(|r| r["n_train"] == 150 && r["n_test"] == 279));
    let mean =
        |m: &str| records(&v, "holdout_summary").iter().find(|r| r["method"] == m).unwrap()["mean"].as_f64().unwrap();
    let (cv, saic, sbic) = (mean("CV-5"), mean("SAIC"), mean("SBIC"));
    assert!(cv < saic && cv < sbic, "CV-5 {cv} SAIC {saic} SBIC {sbic}");
}
