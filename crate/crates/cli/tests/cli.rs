use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mesoperm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mesoperm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn record(out: &Path, experiment: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{experiment}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Turns the echoed JSON config into a TOML config file.
fn config_file(config: &Value, path: &Path) {
    let mut table = config.as_object().unwrap().clone();
    table.remove("out");
    std::fs::write(path, toml::to_string(&table).unwrap()).unwrap();
}

#[test]
fn psi_identities_pass_with_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = mesoperm(&["psi-identities"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS psi_s3")));
    let rec = record(dir.path(), "psi-identities");
    for key in ["experiment", "config", "reports", "library_version", "elapsed_seconds"] {
        assert!(rec.get(key).is_some(), "{key}");
    }
    assert_eq!(rec["config"]["seed"], 20240601);
    for r in rec["reports"].as_array().unwrap() {
        for key in ["name", "observed", "reference", "distance", "threshold", "verdict"] {
            assert!(r.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn oracle_and_function_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mesoperm(&["oracle-check"], dir.path()).status.code(), Some(0));
    let out = mesoperm(&["check-functions", "--fn", "bump_c2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["clt", "--fn", "nope"][..],
        &["limit", "--fn", "gauss"],
        &["clt", "--fn", "gauss_zero"],
        &["clt", "--delta", "2.0", "--replicates", "20"],
        &["clt", "--n", "10", "--delta", "0.01", "--replicates", "20"],
        &["check-functions", "--fn", "cauchy_slow"],
        &["oracle-check", "--n", "12"],
    ] {
        let out = mesoperm(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let cfg = dir.path().join("wrong.toml");
    std::fs::write(&cfg, "experiment = \"limit\"\n").unwrap();
    let out = mesoperm(&["clt", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = mesoperm(&["clt", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_tolerance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, "tol = 1e-300\n").unwrap();
    let out = mesoperm(&["oracle-check", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn failing_verdict_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "experiment = \"coupling\"\nbaseline = 1e-6\nn = [50, 100]\nreplicates = 200\n").unwrap();
    let out = mesoperm(&["coupling", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let rec = record(dir.path(), "coupling");
    assert_eq!(rec["reports"][0]["verdict"], false);
    assert_eq!(rec["config"]["baseline"], 1e-6);
}

#[test]
fn runs_reconstruct_from_their_json() {
    let first = tempfile::tempdir().unwrap();
    let args = ["clt", "--n", "400,800", "--replicates", "30", "--seed", "11", "--theta", "1.5", "--gnuplot"];
    let out = mesoperm(&args, first.path());
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    let files = csv_files(first.path());
    assert_eq!(files.len(), 3);
    for (_, text) in &files {
        assert!(text.starts_with("replicate,seed,value_re,value_im\n"));
        assert_eq!(text.lines().count(), 31);
    }
    let gp = std::fs::read_to_string(first.path().join("clt.gp")).unwrap();
    assert!(gp.contains(&files[0].0));

    let rec = record(first.path(), "clt");
    let second = tempfile::tempdir().unwrap();
    let cfg = second.path().join("echo.toml");
    config_file(&rec["config"], &cfg);
    let out = mesoperm(&["clt", "--config", cfg.to_str().unwrap()], second.path());
    assert!(matches!(out.status.code(), Some(0 | 1)));
    assert_eq!(csv_files(second.path()), files);
    let again = record(second.path(), "clt");
    assert_eq!(again["reports"], rec["reports"]);
}

#[test]
fn thread_count_does_not_change_results() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    let args = ["limit", "--n", "2000", "--replicates", "60", "--seed", "5"];
    let a = mesoperm(&[&args[..], &["--threads", "1"]].concat(), one.path());
    let b = mesoperm(&[&args[..], &["--threads", "3"]].concat(), many.path());
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(csv_files(one.path()), csv_files(many.path()));
}
