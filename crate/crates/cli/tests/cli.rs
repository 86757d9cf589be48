use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_svylasso"));
    c.env_remove("SVYLASSO_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// 200 rows: outcome `y`, weight `w`, binary `x1..x4` and continuous `z`.
/// Only `x1` (slope 2) and `x2` (slope -1.5) matter.
fn write_data(dir: &Path, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("y,w,x1,x2,x3,x4,z\n");
    for _ in 0..200 {
        let x: Vec<u8> = (0..4).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let z: f64 = rng.gen_range(-1.0..1.0);
        let eta = -0.3 + 2.0 * f64::from(x[0]) - 1.5 * f64::from(x[1]);
        let y = u8::from(rng.gen_bool(logistic(eta)));
        let w: f64 = rng.gen_range(0.5..2.5);
        text.push_str(&format!("{y},{w},{},{},{},{},{z}\n", x[0], x[1], x[2], x[3]));
    }
    let p = dir.join("data.csv");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let names: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        for (c, v) in rec.unwrap().iter().enumerate() {
            cols[c].push(v.parse::<f64>().unwrap());
        }
    }
    (names, cols)
}

/// Weighted logit score `n⁻¹ Σ w̃ᵢ (yᵢ − Λ(xᵢ'θ)) xᵢ` with weights scaled to sum to n.
fn score_oracle(y: &[f64], w: &[f64], x: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let scale = n / w.iter().sum::<f64>();
    let mut s = vec![0.0; theta.len()];
    for i in 0..y.len() {
        let eta: f64 = theta[0] + (1..theta.len()).map(|j| theta[j] * x[j - 1][i]).sum::<f64>();
        let r = w[i] * scale * (y[i] - logistic(eta)) / n;
        s[0] += r;
        for j in 1..theta.len() {
            s[j] += r * x[j - 1][i];
        }
    }
    s
}

fn coefficients(fit: &Value) -> Vec<(String, f64)> {
    fit["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["name"].as_str().unwrap().to_string(), c["estimate"].as_f64().unwrap()))
        .collect()
}

#[test]
fn fit_json_reloads_and_satisfies_kkt() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 1);
    let out = dir.path().join("fit.json");
    let o = run(&["fit", "--data", data.to_str().unwrap(), "--outcome", "y", "--weights", "w", "--lambda", "0.03", "--out", out.to_str().unwrap()]);
    stdout(&o);
    let text = std::fs::read_to_string(&out).unwrap();
    let fit: Value = serde_json::from_str(&text).unwrap();
    // a write-read cycle of the loaded document is lossless
    let again: Value = serde_json::from_str(&serde_json::to_string(&fit).unwrap()).unwrap();
    assert_eq!(again, fit);
    let coefs = coefficients(&fit);
    let names: Vec<&str> = coefs.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["(Intercept)", "x1", "x2", "x3", "x4", "z"]);
    let active: Vec<&str> = fit["active"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let expected: Vec<&str> = coefs.iter().skip(1).filter(|(_, v)| *v != 0.0).map(|(n, _)| n.as_str()).collect();
    assert_eq!(active, expected);
    assert!(active.contains(&"x1") && active.contains(&"x2"));

    // KKT from an independent score computation on the reloaded estimates
    let (cn, cols) = read_columns(&data);
    let col = |n: &str| cols[cn.iter().position(|c| c == n).unwrap()].clone();
    let x: Vec<Vec<f64>> = names[1..].iter().map(|n| col(n)).collect();
    let theta: Vec<f64> = coefs.iter().map(|(_, v)| *v).collect();
    let s = score_oracle(&col("y"), &col("w"), &x, &theta);
    let lam = 0.03;
    assert!(s[0].abs() < 1e-6);
    for j in 1..theta.len() {
        if theta[j] != 0.0 {
            assert!((s[j] - lam * theta[j].signum()).abs() < 1e-6, "active {j}: {}", s[j]);
        } else {
            assert!(s[j].abs() <= lam * (1.0 + 1e-6), "inactive {j}: {}", s[j]);
        }
    }
    assert_eq!(fit["kkt"]["violated"], Value::Bool(false));
}

#[test]
fn empty_covariate_list_gives_weighted_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 2);
    let o = run(&["fit", "--data", data.to_str().unwrap(), "--outcome", "y", "--weights", "w", "--covariates", ""]);
    let fit: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let coefs = coefficients(&fit);
    assert_eq!(coefs.len(), 1);
    let (cn, cols) = read_columns(&data);
    let y = &cols[cn.iter().position(|c| c == "y").unwrap()];
    let w = &cols[cn.iter().position(|c| c == "w").unwrap()];
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
    assert!((coefs[0].1 - (ybar / (1.0 - ybar)).ln()).abs() < 1e-7);
}

#[test]
fn omitted_weights_match_unit_weight_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("y,one,a,b\n");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..150 {
        let a = u8::from(rng.gen_bool(0.5));
        let b: f64 = rng.gen_range(-1.0..1.0);
        let y = u8::from(rng.gen_bool(logistic(f64::from(a) - 0.5 + b)));
        text.push_str(&format!("{y},1,{a},{b}\n"));
    }
    let data = dir.path().join("d.csv");
    std::fs::write(&data, text).unwrap();
    let d = data.to_str().unwrap();
    let a = run(&["fit", "--data", d, "--outcome", "y", "--covariates", "a,b", "--lambda", "0.01"]);
    let b = run(&["fit", "--data", d, "--outcome", "y", "--covariates", "a,b", "--weights", "one", "--lambda", "0.01"]);
    let fa: Value = serde_json::from_str(&stdout(&a)).unwrap();
    let fb: Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(fa["coefficients"], fb["coefficients"]);
}

fn infer_table(data: &Path, extra: &[&str]) -> Vec<Vec<String>> {
    let mut args = vec!["infer", "--data", data.to_str().unwrap(), "--outcome", "y", "--weights", "w"];
    args.extend_from_slice(extra);
    let text = stdout(&run(&args));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn coefficient_table_layout_and_strong_signal() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 4);
    let t = infer_table(&data, &["--lambda", "0.02"]);
    assert_eq!(t[0], ["variable", "GLM", "Lasso", "DB", "SI", "p_tsvy", "p_DB", "p_Calpha", "p_SI"]);
    assert_eq!(t.len(), 1 + 6);
    assert_eq!(t[1][0], "(Intercept)");
    // SI is never computed for the intercept
    assert_eq!(t[1][4], "-");
    for row in &t[1..] {
        let lasso: f64 = row[2].parse().unwrap();
        if lasso == 0.0 {
            assert_eq!(row[4], "-", "{row:?}");
            assert_eq!(row[8], "-", "{row:?}");
        }
    }
    let x1 = t.iter().find(|r| r[0] == "x1").unwrap();
    for k in 5..8 {
        assert!(x1[k].parse::<f64>().unwrap() < 0.01, "{x1:?}");
    }
}

#[test]
fn unrequested_methods_are_dashes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 5);
    let t = infer_table(&data, &["--lambda", "0.02", "--methods", "db"]);
    for row in &t[1..] {
        assert_ne!(row[3], "-");
        assert_ne!(row[6], "-");
        for k in [4, 5, 7, 8] {
            assert_eq!(row[k], "-", "{row:?}");
        }
    }
}

#[test]
fn ame_table_covers_binary_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 6);
    let t = infer_table(&data, &["--lambda", "0.02", "--ame", "--methods", "db,ca,si,si2,tsvy"]);
    assert_eq!(t[0], ["variable", "GLM", "DB", "SI", "p_tsvy", "p_DB", "p_Calpha", "p_SI", "p_SI2"]);
    let vars: Vec<&str> = t[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(vars, ["x1", "x2", "x3", "x4"]);
    let x1 = &t[1];
    assert!(x1[1].parse::<f64>().unwrap() > 0.2);
    for k in 4..7 {
        assert!(x1[k].parse::<f64>().unwrap() < 0.01, "{x1:?}");
    }
}

#[test]
fn wider_level_gives_narrower_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 7);
    let d = data.to_str().unwrap();
    let get = |level: &str| -> Value {
        let o = run(&["infer", "--data", d, "--outcome", "y", "--weights", "w", "--lambda", "0.02", "--format", "json", "--level", level]);
        serde_json::from_str(&stdout(&o)).unwrap()
    };
    let (a, b) = (get("0.05"), get("0.5"));
    let mut compared = 0;
    for (ra, rb) in a["rows"].as_array().unwrap().iter().zip(b["rows"].as_array().unwrap()) {
        for (ta, tb) in ra["tests"].as_array().unwrap().iter().zip(rb["tests"].as_array().unwrap()) {
            let (Some(la), Some(ha)) = (ta["ci"][0].as_f64(), ta["ci"][1].as_f64()) else { continue };
            let (lb, hb) = (tb["ci"][0].as_f64().unwrap(), tb["ci"][1].as_f64().unwrap());
            assert!(la <= lb && hb <= ha, "{ta} vs {tb}");
            assert!(hb - lb < ha - la);
            compared += 1;
        }
    }
    assert!(compared >= 6);
}

#[test]
fn csv_table_is_lossless_against_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 8);
    let t = infer_table(&data, &["--lambda", "0.02"]);
    let o = run(&["infer", "--data", data.to_str().unwrap(), "--outcome", "y", "--weights", "w", "--lambda", "0.02", "--format", "json"]);
    let j: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for (row, jr) in t[1..].iter().zip(j["rows"].as_array().unwrap()) {
        for (k, key) in [(1, "glm"), (2, "lasso"), (3, "db")] {
            let v: f64 = row[k].parse().unwrap();
            assert_eq!(v, jr[key].as_f64().unwrap());
            let back: f64 = format!("{v:.14e}").parse().unwrap();
            assert!((back - v).abs() <= 1e-14 * v.abs());
        }
        let p_db: f64 = row[6].parse().unwrap();
        let jp = jr["tests"].as_array().unwrap().iter().find(|t| t["method"] == "DB").unwrap()["p_value"].as_f64().unwrap();
        assert_eq!(p_db, jp);
    }
}

#[test]
fn exit_codes_separate_user_and_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 9);
    let d = data.to_str().unwrap();
    let o = run(&["fit", "--data", d, "--outcome", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,x\n1,0.5\n0,oops\n").unwrap();
    let o = run(&["fit", "--data", bad.to_str().unwrap(), "--outcome", "y"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("data row 2") && msg.contains("`x`"), "{msg}");
    // perfectly separated data have no unpenalized maximizer
    let sep = dir.path().join("sep.csv");
    std::fs::write(&sep, "y,x\n1,1\n1,1\n0,0\n0,0\n1,1\n0,0\n").unwrap();
    let o = run(&["fit", "--data", sep.to_str().unwrap(), "--outcome", "y", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.status.success() == false);
    let o = run(&["infer", "--data", d, "--outcome", "y", "--level", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 10);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("data = {:?}\noutcome = \"y\"\nweights = \"w\"\nlambda = 0.5\n", data)).unwrap();
    let c = cfg.to_str().unwrap();
    let a: Value = serde_json::from_str(&stdout(&run(&["fit", "--config", c]))).unwrap();
    assert_eq!(a["lambda"].as_f64(), Some(0.5));
    let b: Value = serde_json::from_str(&stdout(&run(&["fit", "--config", c, "--lambda", "0.01"]))).unwrap();
    assert_eq!(b["lambda"].as_f64(), Some(0.01));
    std::fs::write(&cfg, "outcome = \"y\"\nlamda = 0.5\n").unwrap();
    let o = run(&["fit", "--config", c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
}

#[test]
fn simulate_smoke_run_is_fast_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str| -> PathBuf {
        let out = dir.path().join(name);
        let start = std::time::Instant::now();
        let o = run(&["simulate", "--out", out.to_str().unwrap(), "--p-grid", "2", "--replications", "10", "--seed", "11", "--quiet"]);
        stdout(&o);
        assert!(start.elapsed().as_secs() < 60);
        out
    };
    let (a, b) = (go("a"), go("b"));
    for f in ["rejection_wide.csv", "rejection_long.csv", "rejection.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let wide = std::fs::read_to_string(a.join("rejection_wide.csv")).unwrap();
    assert!(wide.starts_with("hypothesis,test,p=2\n"));
    assert_eq!(wide.lines().count(), 10);
}

#[test]
fn shipped_configs_parse_and_run_small() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["table1.toml", "table2.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = root.join(name);
        let o = run(&[
            "simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
            "--p-grid", "2", "--replications", "2", "--cv-grid-size", "20", "--quiet",
        ]);
        stdout(&o);
        let json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rejection.json")).unwrap()).unwrap();
        assert_eq!(json["config"]["replications"], 2);
    }
}

#[test]
fn thread_variable_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["simulate", "--out", dir.path().to_str().unwrap(), "--replications", "1", "--p-grid", "2"])
        .env("SVYLASSO_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
