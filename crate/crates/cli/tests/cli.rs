use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use mimi_core::offline::{load_episodes, CorrelationReport, DeltaSweep};
use mimi_core::optimizer::{interface_log_name, load_manifest, load_run};

fn mimi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimi"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mimi(&["train", "--env", "cursor", "--out", "x", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Usage"));
    assert_eq!(mimi(&["dance"]).status.code(), Some(2));
    assert_eq!(mimi(&[]).status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let out = mimi(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for sub in ["simulate", "score", "sweep", "train", "serve", "oracle"] {
        assert!(text(&out.stdout).contains(sub), "{sub} missing from help");
    }
}

#[test]
fn runtime_errors_exit_one_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimi(&["score", "--in", path(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("error: "));

    let out = mimi(&["simulate", "--env", "cursor", "--theta", "0.1,0.2", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1), "wrong theta length");

    let out = mimi(&["train", "--env", "cursor", "--delta", "1,2", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1), "train takes one delta");

    let out = mimi(&["train", "--env", "cursor", "--budget", "2"]);
    assert_eq!(out.status.code(), Some(1), "missing --out");
}

#[test]
fn oracle_self_test() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimi(&["oracle", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("100 random joints"), "{stdout}");
    assert!(stdout.trim_end().ends_with("ok"));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert!(record["max_gap"].as_f64().unwrap() < 1e-9);
}

#[test]
fn simulate_writes_a_loadable_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimi(&[
        "simulate", "--env", "lander", "--theta", "1,0,0,0,0,1,0,0", "--episodes", "3", "--seed", "4", "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let eps = load_episodes(&dir.path().join("episodes.jsonl")).unwrap();
    assert_eq!(eps.len(), 3);
    assert!(eps.iter().all(|e| e.meta.env_id == "lander" && e.meta.seed == 4));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 3);
    assert_eq!(summary["theta"].as_array().unwrap().len(), 8);
}

#[test]
fn train_then_score_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = mimi(&[
        "train",
        "--env",
        "cursor",
        "--budget",
        "6",
        "--episodes-per-interface",
        "4",
        "--estimator-steps",
        "100",
        "--seed",
        "3",
        "--out",
        path(&run),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("best interface"));

    let manifest = load_manifest(&run).unwrap();
    assert_eq!(manifest.interfaces.len(), 6);
    assert_eq!((manifest.seed, manifest.random_phase), (3, 5));
    for i in 0..6 {
        assert_eq!(load_episodes(&run.join(interface_log_name(i))).unwrap().len(), 4);
    }
    assert_eq!(load_run(&run).unwrap().iterations.len(), 6);

    let out = mimi(&["score", "--in", path(&run), "--seeds", "2", "--estimator-steps", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("rho="));
    let report: CorrelationReport =
        serde_json::from_str(&std::fs::read_to_string(run.join("correlation_delta1.json")).unwrap()).unwrap();
    assert_eq!(report.group_count, 6);
    assert!((-1.0..=1.0).contains(&report.rho));
    assert!(run.join("correlation_delta1.txt").exists());

    let reports = dir.path().join("reports");
    let out = mimi(&[
        "sweep",
        "--in",
        path(&run),
        "--delta",
        "1,3,T",
        "--seeds",
        "2",
        "--estimator-steps",
        "100",
        "--out",
        path(&reports),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let sweep: DeltaSweep =
        serde_json::from_str(&std::fs::read_to_string(reports.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.reports.len(), 3);
    assert_eq!(sweep.reports[2].delta, usize::MAX);
    assert!(std::fs::read_to_string(reports.join("sweep.txt")).unwrap().contains('T'));
}

#[test]
fn serve_binary_accepts_a_client() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_mimi"))
        .args([
            "serve",
            "--env",
            "cursor",
            "--budget",
            "1",
            "--random-phase",
            "1",
            "--episodes-per-interface",
            "1",
            "--tick-hz",
            "200",
            "--estimator-steps",
            "50",
            "--out",
            path(dir.path()),
        ])
        .env("MIMI_BIND", "127.0.0.1:0")
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.strip_prefix("listening on ws://").expect(&first).to_string();

    let stream = std::net::TcpStream::connect(&addr).unwrap();
    let (mut ws, _) = tungstenite::client(format!("ws://{addr}/"), stream).unwrap();
    let hello = r#"{"kind":"hello","seq":1,"payload":{"env":"cursor"}}"#;
    ws.send(tungstenite::Message::text(hello)).unwrap();
    let mut seq = 1;
    let mut run_end = false;
    while let Ok(msg) = ws.read() {
        let tungstenite::Message::Text(t) = msg else { continue };
        let v: serde_json::Value = serde_json::from_str(&t).unwrap();
        match v["kind"].as_str().unwrap() {
            "state_update" => {
                seq += 1;
                let p = &v["payload"];
                let cmd = serde_json::json!({
                    "kind": "command",
                    "seq": seq,
                    "payload": {"episode": p["episode"], "t": p["t"], "command": [0.0, 0.0]},
                });
                ws.send(tungstenite::Message::text(cmd.to_string())).unwrap();
            }
            "run_end" => run_end = true,
            _ => {}
        }
    }
    assert!(run_end);
    assert!(child.wait().unwrap().success());
    let rest: Vec<String> = lines.map_while(Result::ok).collect();
    assert!(rest.iter().any(|l| l.starts_with("session complete")), "{rest:?}");
    assert_eq!(load_manifest(dir.path()).unwrap().interfaces.len(), 1);
}
