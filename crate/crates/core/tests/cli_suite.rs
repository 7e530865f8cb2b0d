use std::fs;
use std::path::Path;
use std::process::Command;

use fracspec::cli::*;
use serde_json::json;

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn decay_config(rel_tol: f64) -> serde_json::Value {
    json!({
        "grid": { "d": 1, "n": 256, "L": 2.0 * std::f64::consts::PI },
        "phi": { "function": { "family": "power", "gamma": 1.0 } },
        "operator": { "experiments": [{
            "experiment": "decay", "kind": "P", "alpha": 0.8,
            "norm": { "norm": "lp", "r": 2.0 }, "source": { "p": 2.0, "a": 0.0 },
            "data": { "kind": "gaussian", "width": 0.35 },
            "times": { "lo": 0.1, "hi": 1000.0, "samples": 9 },
            "rel_tol": rel_tol
        }]},
        "output": { "id": "decay" }
    })
}

fn solve_config(amplitude: f64) -> serde_json::Value {
    json!({
        "grid": { "d": 1, "n": 512, "L": 16.0 * std::f64::consts::PI },
        "phi": { "function": { "family": "power", "gamma": 1.0 } },
        "solver": { "experiments": [{
            "experiment": "solve",
            "problem": { "alpha": 0.6, "p": 2.0, "r": 4.0, "p0": 3.0, "kappa": 2.0, "T": 1.0, "M": 4,
                         "data": { "kind": "gaussian", "width": 1.0 }, "amplitude": amplitude },
            "residual": false
        }]},
        "output": { "id": "solve" }
    })
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracspec"))
}

#[test]
fn empty_experiment_list_writes_only_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "empty.json", &json!({ "output": { "id": "nothing" } }));
    let out = tmp.path().join("out");
    let m = run_suite(&cfg, &SuiteOptions { out: Some(out.clone()) }).unwrap();
    assert_eq!(m.exit_code(), EXIT_OK);
    assert!(m.results.is_empty());
    let entries: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec![MANIFEST_FILE]);
}

#[test]
fn laplace_suite_writes_a_residual_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "lap.json",
        &json!({ "mlf": { "experiments": [{ "experiment": "laplace_check", "alphas": [0.5], "s": [2.0, 5.0] }] },
                 "output": { "id": "lap" } }),
    );
    let m = run_suite(&cfg, &SuiteOptions { out: Some(tmp.path().join("o")) }).unwrap();
    assert_eq!(m.exit_code(), EXIT_OK);
    let mut r = csv::Reader::from_path(tmp.path().join("o").join(&m.results[0].files[0])).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "residual").unwrap();
    let residuals: Vec<f64> = r.records().map(|rec| rec.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(residuals.len(), 16);
    assert!(residuals.iter().all(|&x| x < 1e-6));
}

#[test]
fn malformed_json_exits_with_the_parse_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{\n  \"output\": { \"id\": \"x\", }\n}").unwrap();
    let err = run_suite(&cfg, &SuiteOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_SCHEMA);
    assert!(err.to_string().contains("line 2 column"), "{err}");
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_SCHEMA));
}

#[test]
fn unknown_keys_and_invalid_parameters_are_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let mut c = solve_config(0.01);
    c["solver"]["experiments"][0]["problem"]["speed"] = json!(3);
    let err = run_suite(&write_config(tmp.path(), "a.json", &c), &SuiteOptions { out: Some(out.clone()) }).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_SCHEMA);
    assert!(err.to_string().contains("speed"), "{err}");
    let mut c = solve_config(0.01);
    c["solver"]["experiments"][0]["problem"]["p0"] = json!(5.0);
    let err = run_suite(&write_config(tmp.path(), "b.json", &c), &SuiteOptions { out: Some(out.clone()) }).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_SCHEMA);
    assert!(err.to_string().contains("solver.experiments[0]"), "{err}");
    let mut c = solve_config(0.01);
    c.as_object_mut().unwrap().remove("grid");
    let err = run_suite(&write_config(tmp.path(), "c.json", &c), &SuiteOptions { out: Some(out.clone()) }).unwrap_err();
    assert!(err.to_string().contains("grid"), "{err}");
    assert!(!out.exists());
}

#[test]
fn failed_checks_exit_with_the_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.json", &decay_config(1e-12));
    let m = run_suite(&cfg, &SuiteOptions { out: Some(tmp.path().join("o")) }).unwrap();
    assert_eq!(m.results[0].status, Status::Failed);
    assert_eq!(m.exit_code(), EXIT_NUMERIC);
    let out = bin().args(["op", "decay", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("b")).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_NUMERIC));
}

#[test]
fn divergence_is_flagged_with_a_zero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", &solve_config(30.0));
    let out = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let m = ExperimentManifest::read(&tmp.path().join("o")).unwrap();
    assert!(m.diverged);
    assert_eq!(m.results[0].status, Status::Diverged);
}

#[test]
fn subcommands_select_their_section() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = decay_config(0.15);
    c["mlf"] = json!({ "experiments": [{ "experiment": "eval", "points": [{ "alpha": 1.0, "beta": 1.0, "z": [1.0, 0.0] }] }] });
    let cfg = write_config(tmp.path(), "mixed.json", &c);
    let out = tmp.path().join("o");
    let code = run_cli(["fracspec", "op", "bound-probe", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(ExperimentManifest::read(&out).unwrap().results.is_empty());
    let code = run_cli(["fracspec", "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let names: Vec<String> = ExperimentManifest::read(&out).unwrap().results.into_iter().map(|r| r.name).collect();
    assert_eq!(names, ["mlf-00-eval", "operator-00-decay"]);
    assert_eq!(run_cli(["fracspec", "op", "nonsense"]), EXIT_SCHEMA);
}

#[test]
fn manifest_rerun_reproduces_outputs_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = solve_config(0.01);
    c["operator"] = decay_config(0.15)["operator"].clone();
    c["grid"] = json!({ "d": 1, "n": 512, "L": 16.0 * std::f64::consts::PI });
    let cfg = write_config(tmp.path(), "r.json", &c);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = run_suite(&cfg, &SuiteOptions { out: Some(a.clone()) }).unwrap();
    let second = run_suite(&a.join(MANIFEST_FILE), &SuiteOptions { out: Some(b.clone()) }).unwrap();
    assert_eq!(first.config, second.config);
    let files: Vec<&String> = first.results.iter().flat_map(|r| r.files.iter()).collect();
    assert!(files.iter().any(|f| f.ends_with(".bin")));
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn plotdata_has_a_stable_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let err = emit_plotdata(tmp.path()).unwrap_err();
    assert!(matches!(&err, CliError::MissingResults { expected, .. } if expected == &vec![MANIFEST_FILE.to_string()]));
    let cfg = write_config(tmp.path(), "d.json", &decay_config(0.15));
    let out = tmp.path().join("o");
    run_suite(&cfg, &SuiteOptions { out: Some(out.clone()) }).unwrap();
    let written = emit_plotdata(&out).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["operator-00-decay_loglog.csv", "operator-00-decay_fit.json"]);
    let mut r = csv::Reader::from_path(&written[0]).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["log10_t", "log10_norm"]);
    assert_eq!(r.records().count(), 9);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&written[1]).unwrap()).unwrap();
    for key in ["slope_hat", "slope_theory", "intercept_log10", "window_log10_t", "rel_err", "pass"] {
        assert!(!meta[key].is_null(), "{key}");
    }
    let before: Vec<Vec<u8>> = written.iter().map(|p| fs::read(p).unwrap()).collect();
    let again = emit_plotdata(&out).unwrap();
    let after: Vec<Vec<u8>> = again.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
    fs::remove_file(out.join("operator-00-decay.csv")).unwrap();
    let err = emit_plotdata(&out).unwrap_err().to_string();
    assert!(err.contains("operator-00-decay.csv"), "{err}");
}

#[test]
fn environment_overrides_output_dir_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "e.json", &json!({ "output": { "id": "env", "dir": "from-config" } }));
    let out = bin()
        .current_dir(tmp.path())
        .env(ENV_OUT, tmp.path().join("from-env"))
        .env(ENV_THREADS, "1")
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let m = ExperimentManifest::read(&tmp.path().join("from-env")).unwrap();
    assert_eq!(m.threads, 1);
    assert!(!tmp.path().join("from-config").exists());
    let out = bin().env(ENV_THREADS, "-4").args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_SCHEMA));
}

#[test]
fn mlf_eval_prints_real_and_imaginary_parts() {
    let out = bin().args(["mlf", "eval", "--alpha", "1", "--beta", "1", "--re", "-1", "--im", "0"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parts: Vec<f64> = text.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert!((parts[0] - (-1f64).exp()).abs() < 1e-15);
    assert_eq!(parts[1], 0.0);
}
