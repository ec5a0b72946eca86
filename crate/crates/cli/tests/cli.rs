use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparsevar"));
    c.env_remove("SPARSEVAR_THREADS");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

/// A two-series VAR(1) model file with the given coefficients.
fn model(dir: &Path, b: Value, sigma: Value, history: Value) -> PathBuf {
    let path = dir.join("model.json");
    write_json(
        &path,
        &json!({
            "format_version": 1,
            "structure": "Basic",
            "k": 2, "m": 0, "p": 1, "s": 0,
            "lambda": 0.1, "alpha": 0.0,
            "labels": ["a", "b"],
            "coefficients": b,
            "sigma_u": sigma,
            "scaling": null,
            "history": history,
            "refit": "none"
        }),
    );
    path
}

#[test]
fn cv_writes_report_and_artifacts() {
    let out = scratch("cv");
    ok(bin()
        .arg("cv")
        .arg("--data")
        .arg(data("var3.csv"))
        .arg("--config")
        .arg(data("var3_config.json"))
        .arg("--out")
        .arg(&out));
    for f in ["report.json", "coefficients.csv", "model.json", "sparsity.svg", "lambda_curve.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    // 150 rows split at 50 and 100
    assert_eq!(report["cv_targets"], json!([50, 100]));
    assert_eq!(report["oos_targets"], json!([100, 150]));
    assert_eq!(report["penalty"], "Basic");
    let points = report["curves"][0]["points"].as_array().unwrap();
    assert_eq!(points.len(), 10);
    let idx = report["optimal_index"].as_u64().unwrap() as usize;
    assert_eq!(report["optimal_lambda"], points[idx]["lambda"]);
    assert_eq!(report["in_sample_msfe"], points[idx]["msfe"]);
    for key in ["mean", "random_walk", "aic", "bic"] {
        assert!(report["benchmarks"][key].as_f64().unwrap() > 0.0);
    }

    let coefs = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let header = coefs.lines().next().unwrap();
    assert!(header.starts_with("response,intercept,y1.l1"), "{header}");
    assert_eq!(coefs.lines().count(), 4);

    // the stored model forecasts directly
    let fc = ok(bin()
        .arg("predict")
        .arg("--model")
        .arg(out.join("model.json"))
        .args(["--n-ahead", "3"]));
    assert_eq!(csv_rows(&fc).len(), 3);
}

#[test]
fn predict_zero_model_returns_intercepts() {
    let dir = scratch("predict_zero");
    let m = model(
        &dir,
        json!([[1.5, 0.0, 0.0], [-2.0, 0.0, 0.0]]),
        json!([[1.0, 0.0], [0.0, 1.0]]),
        json!([[10.0, 20.0]]),
    );
    let text = ok(bin().arg("predict").arg("--model").arg(&m).args(["--n-ahead", "4"]));
    assert!(text.starts_with("h,a,b\n"));
    for row in csv_rows(&text) {
        assert_eq!(row, vec![1.5, -2.0]);
    }
}

#[test]
fn predict_iterates_var1() {
    let dir = scratch("predict_var1");
    let m = model(
        &dir,
        json!([[1.0, 0.5, 0.0], [0.0, 0.25, -0.5]]),
        json!([[1.0, 0.0], [0.0, 1.0]]),
        json!([[0.0, 0.0], [2.0, 4.0]]),
    );
    let rows = csv_rows(&ok(bin().arg("predict").arg("--model").arg(&m).args(["--n-ahead", "3"])));
    let mut y = [2.0, 4.0];
    for row in rows {
        y = [1.0 + 0.5 * y[0], 0.25 * y[0] - 0.5 * y[1]];
        assert!((row[0] - y[0]).abs() < 1e-12 && (row[1] - y[1]).abs() < 1e-12);
    }
}

#[test]
fn irf_of_diagonal_var1() {
    let dir = scratch("irf");
    let m = model(
        &dir,
        json!([[0.0, 0.8, 0.0], [0.0, 0.0, -0.5]]),
        json!([[4.0, 0.0], [0.0, 1.0]]),
        json!([[0.0, 0.0]]),
    );
    let rows = csv_rows(&ok(bin()
        .arg("irf")
        .arg("--model")
        .arg(&m)
        .args(["--shock", "a", "--periods", "5"])));
    // Cholesky factor of diag(4, 1) has 2 in the shocked position
    for (h, row) in rows.iter().enumerate() {
        assert!((row[0] - 2.0 * 0.8f64.powi(h as i32)).abs() < 1e-12);
        assert_eq!(row[1], 0.0);
    }
    let unit = csv_rows(&ok(bin()
        .arg("irf")
        .arg("--model")
        .arg(&m)
        .args(["--shock", "0", "--periods", "2", "--unit-diagonal", "--size", "3"])));
    assert!((unit[0][0] - 3.0).abs() < 1e-12);
}

#[test]
fn simulate_is_reproducible() {
    let run_sim = |seed: &str| {
        ok(bin()
            .arg("simulate")
            .arg("--spec")
            .arg(data("var3_spec.json"))
            .args(["--seed", seed, "--t", "40"]))
    };
    let a = run_sim("5");
    assert_eq!(a, run_sim("5"));
    assert_ne!(a, run_sim("6"));
    assert!(a.starts_with("t,y1,y2,y3\n"));
    assert_eq!(a.lines().count(), 41);
}

#[test]
fn fit_writes_one_model_per_lambda() {
    let out = scratch("fit");
    ok(bin()
        .arg("fit")
        .arg("--data")
        .arg(data("var3.csv"))
        .arg("--config")
        .arg(data("var3_config.json"))
        .args(["--lambda", "1e6, 0.05"])
        .arg("--out")
        .arg(&out));
    let heavy: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("model_1.json")).unwrap()).unwrap();
    // a huge penalty leaves only the intercepts
    for row in heavy["coefficients"].as_array().unwrap() {
        assert!(row.as_array().unwrap()[1..].iter().all(|v| v.as_f64() == Some(0.0)));
    }
    assert!(out.join("coefficients_2.csv").is_file());
}

#[test]
fn benchmark_and_refit_run_on_example_data() {
    let text = ok(bin()
        .arg("benchmark")
        .arg("--data")
        .arg(data("var3.csv"))
        .args(["--pmax", "4", "--criterion", "bic"]));
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["ic_table"].as_array().unwrap().len(), 5);
    assert!(doc["p"].as_u64().unwrap() >= 1);

    let out = scratch("refit");
    ok(bin()
        .arg("fit")
        .arg("--data")
        .arg(data("var3.csv"))
        .arg("--config")
        .arg(data("var3_config.json"))
        .args(["--lambda", "0.05"])
        .arg("--out")
        .arg(&out));
    let before: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("model_1.json")).unwrap()).unwrap();
    for method in ["rls", "wls", "ifgls"] {
        let text = ok(bin()
            .arg("refit")
            .arg("--model")
            .arg(out.join("model_1.json"))
            .arg("--data")
            .arg(data("var3.csv"))
            .args(["--method", method]));
        let after: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(after["refit"], method);
        // zeros stay zero
        let (b0, b1) = (before["coefficients"].as_array().unwrap(), after["coefficients"].as_array().unwrap());
        for (r0, r1) in b0.iter().zip(b1) {
            for (x0, x1) in r0.as_array().unwrap().iter().zip(r1.as_array().unwrap()) {
                if x0.as_f64() == Some(0.0) {
                    assert_eq!(x1.as_f64(), Some(0.0));
                }
            }
        }
    }
}

fn expect_exit(cmd: &mut Command, code: i32, tag: &str) {
    let out = run(cmd);
    assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with(&format!("error[{tag}]")), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    expect_exit(bin().args(["cv", "--data", "missing.csv", "--config"]).arg(data("var3_config.json")).args(["--out", "x"]), 3, "data");
    expect_exit(bin().args(["predict", "--bogus"]), 2, "usage");
    expect_exit(bin().args(["simulate", "--spec"]).arg(data("var3_spec.json")).args(["--seed", "x", "--t", "5"]), 2, "usage");

    let cfg = dir.join("bad.json");
    write_json(&cfg, &json!({"format_version": 1, "p": 2, "penalty": "Basic", "lambda_typo": 3}));
    expect_exit(
        bin().arg("cv").arg("--data").arg(data("var3.csv")).arg("--config").arg(&cfg).arg("--out").arg(dir.join("o")),
        2,
        "usage",
    );
    write_json(&cfg, &json!({"format_version": 9, "p": 2, "penalty": "Basic"}));
    expect_exit(
        bin().arg("cv").arg("--data").arg(data("var3.csv")).arg("--config").arg(&cfg).arg("--out").arg(dir.join("o")),
        2,
        "usage",
    );

    let spec = dir.join("explosive.json");
    write_json(&spec, &json!({"phi": [[1.2]], "sigma": [[1.0]]}));
    expect_exit(bin().arg("simulate").arg("--spec").arg(&spec).args(["--seed", "1", "--t", "5"]), 4, "numerical");

    let csv = dir.join("ragged.csv");
    std::fs::write(&csv, "a,b\n1,2\n3\n").unwrap();
    expect_exit(bin().arg("benchmark").arg("--data").arg(&csv).args(["--pmax", "1", "--criterion", "aic"]), 3, "data");

    expect_exit(
        bin().env("SPARSEVAR_THREADS", "zero").arg("simulate").arg("--spec").arg(data("var3_spec.json")).args(["--seed", "1", "--t", "5"]),
        2,
        "usage",
    );
    assert!(run(bin().arg("--help")).status.success());
    assert!(run(bin().arg("--version")).status.success());
}

#[test]
fn thread_settings_do_not_change_output() {
    let base = scratch("threads");
    let mut outputs = Vec::new();
    for (i, (flag, env)) in [("1", None), ("3", None), ("1", Some("2"))].into_iter().enumerate() {
        let out = base.join(i.to_string());
        let mut cmd = bin();
        if let Some(e) = env {
            cmd.env("SPARSEVAR_THREADS", e);
        }
        ok(cmd
            .args(["--threads", flag, "cv"])
            .arg("--data")
            .arg(data("var3.csv"))
            .arg("--config")
            .arg(data("var3_config.json"))
            .arg("--out")
            .arg(&out));
        outputs.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}
