use std::process::{Command, Output};

fn prefmobo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefmobo")).args(args).env("RUST_LOG", "off").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_identical_csv_for_identical_flags() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        let o = prefmobo(&[
            "run", "--benchmark", "schaffer2", "--method", "proposed", "--iters", "3", "--seeds", "1..2",
            "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,seed,regret,w_error,incumbent,selected_index"));
    // iterations 0..=3 for two seeds
    assert_eq!(lines.count(), 8);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["benchmark"], "schaffer2");
    assert_eq!(manifest["config"]["seeds"], serde_json::json!([1, 2]));
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    assert!(manifest["runs"][0]["truth"].is_object());
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let o = prefmobo(&["run", "--benchmark", "fonseca", "--method", "random", "--iters", "2", "--seeds", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("4")));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"benchmark": "schaffer1", "method": "random", "iterations": 5, "seeds": [7]}"#).unwrap();
    let out = dir.path().join("r.csv");
    let o = prefmobo(&["run", "--config", cfg.to_str().unwrap(), "--iters", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["iterations"], 2);
    assert_eq!(m["config"]["benchmark"], "schaffer1");
    assert_eq!(m["config"]["seeds"], serde_json::json!([7]));
}

#[test]
fn unknown_benchmark_exits_two_naming_valid_ones() {
    let o = prefmobo(&["run", "--benchmark", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for b in ["dtlz1", "dtlz3", "kursawe", "schaffer1", "schaffer2", "fonseca", "poloni"] {
        assert!(err.contains(b), "{err}");
    }
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(prefmobo(&["run", "--benchmark", "kursawe", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(prefmobo(&["run", "--benchmark", "kursawe", "--method", "magic"]).status.code(), Some(2));
    assert_eq!(prefmobo(&["run", "--benchmark", "kursawe", "--iters", "0"]).status.code(), Some(2));
    assert_eq!(prefmobo(&["run", "--benchmark", "kursawe", "--seeds", "5..1"]).status.code(), Some(2));
    assert_eq!(prefmobo(&["run", "--benchmark", "kursawe", "--alpha", "-1"]).status.code(), Some(2));
    assert_eq!(prefmobo(&["run"]).status.code(), Some(2));
    assert_eq!(prefmobo(&[]).status.code(), Some(2));
    assert_eq!(prefmobo(&["run", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let o = prefmobo(&[
        "run", "--benchmark", "fonseca", "--method", "random", "--iters", "1", "--seeds", "1",
        "--out", "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_file_pair_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = prefmobo(&[
        "sweep", "--benchmark", "fonseca", "--methods", "random,mobo-rs", "--iters", "2", "--seeds", "1..2",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for m in ["random", "mobo-rs"] {
        assert!(dir.path().join(format!("fonseca_{m}.csv")).exists());
        assert!(dir.path().join(format!("fonseca_{m}.manifest.json")).exists());
    }
    // the sweep result for a method equals a standalone run of it
    let single = prefmobo(&["run", "--benchmark", "fonseca", "--method", "mobo-rs", "--iters", "2", "--seeds", "1..2"]);
    assert_eq!(single.stdout, std::fs::read(dir.path().join("fonseca_mobo-rs.csv")).unwrap());
}

#[test]
fn diag_passes() {
    let o = prefmobo(&["diag"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.lines().filter(|l| l.starts_with("[PASS]")).count() >= 5, "{out}");
    assert!(!out.contains("[FAIL]"));
}

#[test]
fn help_documents_every_flag() {
    let cases: [(&str, &[&str]); 4] = [
        ("run", &["--config", "--benchmark", "--method", "--iters", "--seeds", "--sigma-pc", "--sigma-ir", "--alpha", "--mc-samples", "--out"]),
        ("sweep", &["--methods", "--benchmark", "--seeds", "--out"]),
        ("diag", &["--seed"]),
        ("serve", &["--listen", "--data-dir", "127.0.0.1:8080"]),
    ];
    for (sub, flags) in cases {
        let o = prefmobo(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8(o.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
    }
    assert_eq!(prefmobo(&["--help"]).status.code(), Some(0));
}

#[test]
fn serve_rejects_bad_listen_address() {
    let o = prefmobo(&["serve", "--listen", "not-an-address"]);
    assert_eq!(o.status.code(), Some(1));
}
