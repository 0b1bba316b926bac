use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hdcop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdcop"))
        .args(args)
        .env_remove("HDCOP_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Deterministic sample: columns a, b share a factor; c, d, e are noise.
fn write_sample(dir: &Path, n: usize) -> PathBuf {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut text = String::from("a,b,c,d,e\n");
    for _ in 0..n {
        let z = next();
        let row = [z + 0.3 * next(), z + 0.3 * next(), next(), next(), next()];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let path = dir.join("sample.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn pairs_lists_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_sample(dir.path(), 80);
    let o = hdcop(&["--output", "csv", "pairs", "--header", f.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 10);
    assert!(lines[1].starts_with("a:b,1,2,"), "{}", lines[1]);
}

#[test]
fn ties_are_a_data_error_naming_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("tied.csv");
    std::fs::write(&f, "x,y,z\n1,0.5,3\n2,0.5,1\n3,0.7,2\n4,0.1,5\n").unwrap();
    let o = hdcop(&["pairs", "--header", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("`y`"), "{}", stderr(&o));
    let o = hdcop(&["pairs", "--header", "--jitter", "4", f.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(hdcop(&["pairs", "/definitely/not/here.csv"]).status.code(), Some(2));
    assert_eq!(hdcop(&["maxtest", "--measure", "gini", "x.csv"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let f = write_sample(dir.path(), 50);
    let o = hdcop(&["stepdown", "--header", "--boot", "20", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn maxtest_json_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_sample(dir.path(), 200);
    let o = hdcop(&[
        "--output",
        "json",
        "maxtest",
        "--header",
        "--measure",
        "tau",
        f.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "maxtest");
    let r = &v["result"];
    assert_eq!(r["gamma"], "tau");
    assert_eq!(r["reject"], true);
    assert_eq!(r["argmax_names"], serde_json::json!(["a", "b"]));
    let p = r["p_value"].as_f64().unwrap();
    assert!((0.0..0.05).contains(&p));
}

#[test]
fn stepdown_is_reproducible_with_seed_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_sample(dir.path(), 120);
    let path = f.to_str().unwrap();
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_hdcop"))
            .args(["--output", "json", "stepdown", "--header", "--boot", "300", path])
            .env("HDCOP_SEED", seed)
            .output()
            .unwrap()
    };
    let a = run("7");
    let b = run("7");
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["result"]["seed"], 7);
    assert_eq!(v["result"]["rejected"], serde_json::json!([[0, 1]]));
    let flag = hdcop(&[
        "--output", "json", "stepdown", "--header", "--boot", "300", "--seed", "7", path,
    ]);
    assert_eq!(flag.stdout, a.stdout);
}

#[test]
fn moebius_csv_table() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_sample(dir.path(), 60);
    let o = hdcop(&["--output", "csv", "moebius", "--header", f.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("pair,l,m,S\n"), "{text}");
    assert_eq!(text.lines().count(), 11);
    let tty = hdcop(&["moebius", "--header", f.to_str().unwrap()]);
    assert!(stdout(&tty).contains("max S"));
}

#[test]
fn moebius_needs_three_columns() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("two.csv");
    std::fs::write(&f, "1,4\n2,3\n3,1\n4,2\n").unwrap();
    assert_eq!(hdcop(&["moebius", f.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn harness_run_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let log = dir.path().join("log.jsonl");
    std::fs::write(
        &cfg,
        r#"{"kind": "null_calibration", "model": {"family": "independence"},
            "grid": [{"n": 40, "d": 5}], "reps": 10, "seed": 3}"#,
    )
    .unwrap();
    let o = hdcop(&[
        "--output",
        "json",
        "harness",
        "run",
        cfg.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 11);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["cells"][0]["reps"], 10);
    let s = hdcop(&["--output", "json", "harness", "summarize", log.to_str().unwrap()]);
    let w: serde_json::Value = serde_json::from_slice(&s.stdout).unwrap();
    assert_eq!(v["result"]["cells"], w["result"]["cells"]);

    std::fs::write(
        &cfg,
        r#"{"kind": "null_calibration", "model": {"family": "independence"}, "grid": [], "reps": 0}"#,
    )
    .unwrap();
    assert_eq!(hdcop(&["harness", "run", cfg.to_str().unwrap()]).status.code(), Some(2));
}
