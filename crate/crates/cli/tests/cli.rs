use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use kbqa_gateway::AskResponse;
use kbqa_testkit::fixture;

const QUESTION: &str = "What is the length of the film starring Keanu Reeves";

fn kbqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbqa")).args(args).output().unwrap()
}

fn mini() -> String {
    fixture("filmdb-mini.toml").display().to_string()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn ask_locally() {
    let d = mini();
    let out = kbqa(&["--descriptor", &d, "ask", "--dataset", "filmdb-mini", QUESTION]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("stage: Exact"), "{stdout}");
    assert!(stdout.contains("136") && stdout.contains("101"), "{stdout}");

    let out = kbqa(&["--json", "--descriptor", &d, "ask", "--dataset", "filmdb-mini", "--trace", QUESTION]);
    assert_eq!(out.status.code(), Some(0));
    let response: AskResponse = serde_json::from_slice(&out.stdout).unwrap();
    assert!(response.verified);
    assert!(response.trace.is_some());
}

#[test]
fn unknown_dataset_exits_2() {
    let d = mini();
    let out = kbqa(&["--descriptor", &d, "ask", "--dataset", "nope", QUESTION]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("DATASET_NOT_FOUND"), "{}", text(&out.stderr));

    let out = kbqa(&["--descriptor", &d, "stats", "--dataset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_and_listing() {
    let d = mini();
    let out = kbqa(&["--descriptor", &d, "stats", "--dataset", "filmdb-mini"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines, ["Dataset\tTriples\tEntities\tPredicates", "filmdb-mini\t8\t5\t3"]);

    let m = fixture("filmdb-mutated.toml").display().to_string();
    let out = kbqa(&["--descriptor", &d, "--descriptor", &m, "datasets"]);
    assert_eq!(text(&out.stdout).lines().count(), 3);
}

#[test]
fn duplicate_load_is_reported() {
    let d = mini();
    let out = kbqa(&["load", &d]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout).trim(), "loaded filmdb-mini");
    let out = kbqa(&["load", &d, &d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("DUPLICATE_ID"));
}

#[test]
fn config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kbqa.toml");
    std::fs::write(&path, format!("datasets = [{:?}]\n", mini())).unwrap();
    let config = path.display().to_string();
    let out = kbqa(&["--config", &config, "stats", "--dataset", "filmdb-mini"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));

    std::fs::write(&path, "bind = \"127.0.0.1:0\"\nbogus = true\n").unwrap();
    let out = kbqa(&["--config", &config, "datasets"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("bogus"), "{}", text(&out.stderr));
}

#[test]
fn serve_and_ask_through_endpoint() {
    let d = mini();
    let mut child = Command::new(env!("CARGO_BIN_EXE_kbqa"))
        .args(["--descriptor", &d, "serve", "--bind", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    let started = Instant::now();
    while !line.contains("listening on") {
        line.clear();
        if stderr.read_line(&mut line).unwrap() == 0 || started.elapsed() > Duration::from_secs(20) {
            let _ = child.kill();
            panic!("server did not start: {line}");
        }
    }
    let url = line.split_whitespace().nth(2).unwrap().to_string();

    let health: serde_json::Value = ureq::get(format!("{url}/health")).call().unwrap().into_body().read_json().unwrap();
    assert_eq!(health["status"], "ok");

    let out = kbqa(&["--endpoint", &url, "ask", "--dataset", "filmdb-mini", QUESTION]);
    let remote_ok = out.status.code() == Some(0) && text(&out.stdout).contains("stage: Exact");
    let out2 = kbqa(&["--endpoint", &url, "stats", "--dataset", "filmdb-mini"]);
    let remote_stats = text(&out2.stdout);
    let out3 = kbqa(&["--endpoint", &url, "load", &d]);
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(remote_ok, "{} {}", text(&out.stdout), text(&out.stderr));
    assert!(remote_stats.contains("filmdb-mini\t8\t5\t3"), "{remote_stats}");
    assert_eq!(out3.status.code(), Some(2));
    assert!(text(&out3.stderr).contains("DUPLICATE_ID"));
}
