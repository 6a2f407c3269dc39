use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::io::Write;

use epiassim::coupling::RunConfig;

fn epiassim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epiassim")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn single_error_line(o: &Output, code: i32) -> String {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with("error kind="), "{err}");
    assert!(lines[0].contains(&format!("code={code}")), "{err}");
    lines[0].to_string()
}

#[test]
fn version_reports_build_metadata() {
    let o = epiassim(&["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
    assert!(text.contains("commit:") && text.contains("target:"));
}

#[test]
fn help_documents_exit_codes() {
    let o = epiassim(&["--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for code in ["2  usage", "3  invalid", "4  I/O", "5  numerical"] {
        assert!(text.contains(code), "{code}");
    }
}

#[test]
fn missing_observation_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = epiassim(&["filter", "--obs", "missing.ndjson", "--output-dir", dir.path().to_str().unwrap()]);
    let line = single_error_line(&o, 4);
    assert!(line.contains("missing.ndjson"), "{line}");
}

#[test]
fn usage_errors_exit_2() {
    single_error_line(&epiassim(&["netgen", "--bogus"]), 2);
    single_error_line(&epiassim(&["frobnicate"]), 2);
}

#[test]
fn bad_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[smc]\nn_particles = 1\n[network]\ncomplete = 10\n").unwrap();
    single_error_line(&epiassim(&["couple", "--config", cfg.to_str().unwrap()]), 3);

    let obs = dir.path().join("obs.ndjson");
    std::fs::write(&obs, "{\"day\":2,\"infected_proportion\":0.1}\n{\"day\":1,\"infected_proportion\":0.1}\n").unwrap();
    let out = dir.path().join("out");
    let line = single_error_line(
        &epiassim(&["filter", "--obs", obs.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]),
        3,
    );
    assert!(line.contains("day 1"), "{line}");
}

#[test]
fn infeasible_network_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = epiassim(&[
        "netgen", "--nodes", "400", "--mean-degree", "1.2", "--clustering", "1.0",
        "--output-dir", dir.path().to_str().unwrap(),
    ]);
    single_error_line(&o, 5);
}

#[test]
fn ode_writes_daily_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let o = epiassim(&["ode", "--beta", "0.5", "--gamma", "0.1", "--i0", "0.002", "--days", "50", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("ode_baseline.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "day,s,i,r");
    assert_eq!(lines.len(), 52);
    assert!(String::from_utf8(o.stdout).unwrap().contains("R0 5"));
}

#[test]
fn stdin_feed_matches_file_replay() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.ndjson");
    let text: String = (1..=30)
        .map(|d| format!("{{\"day\":{d},\"infected_count\":{},\"population\":2000}}\n", 4 + d * d))
        .collect();
    std::fs::write(&obs, &text).unwrap();
    let from_file = dir.path().join("file");
    let from_pipe = dir.path().join("pipe");
    let common = ["--particles", "1024", "--seed", "3"];

    let o = epiassim(&[&["filter", "--obs", obs.to_str().unwrap(), "--output-dir", from_file.to_str().unwrap()], &common[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));

    let mut child = Command::new(env!("CARGO_BIN_EXE_epiassim"))
        .args([&["filter", "--obs", "-", "--output-dir", from_pipe.to_str().unwrap()], &common[..]].concat())
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(text.as_bytes()).unwrap();
    assert!(child.wait().unwrap().success());

    for name in ["report.json", "curves.csv", "params.ndjson"] {
        assert_eq!(
            std::fs::read(from_file.join(name)).unwrap(),
            std::fs::read(from_pipe.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn scanbench_writes_timings() {
    let dir = tempfile::tempdir().unwrap();
    let o = epiassim(&["scanbench", "--sizes", "64,4096", "--reps", "3", "--workers", "2", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("scanbench.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("size,workers,median_ns,p95_ns"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap().validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
