use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use marvin_gateway::record::read_log;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn marvin(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_marvin"));
    cmd.args(args).env_remove("MARVIN_CONFIG");
    if let Some(c) = config {
        cmd.env("MARVIN_CONFIG", c);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn help_scenario() -> String {
    scenarios().join("help_timeout.scn").display().to_string()
}

#[test]
fn passing_run_exits_zero_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let scn = help_scenario();
    let o = marvin(
        &[
            "run",
            "--scenario",
            &scn,
            "--seed",
            "4",
            "--headless",
            "--record",
            log.to_str().unwrap(),
        ],
        None,
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("[PASS] help dispatched"), "{stdout}");
    let contents = read_log(std::io::BufReader::new(std::fs::File::open(&log).unwrap())).unwrap();
    assert_eq!(contents.header.seed, Some(4));
    assert!(!contents.messages.is_empty());
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(scenarios().join("two_room.world"), dir.path().join("two_room.world")).unwrap();
    let text = std::fs::read_to_string(help_scenario())
        .unwrap()
        .replace("within = [11.0, 14.0]", "within = [1.0, 2.0]");
    let scn = dir.path().join("late.scn");
    std::fs::write(&scn, text).unwrap();
    let o = marvin(&["run", "--scenario", scn.to_str().unwrap(), "--headless"], None);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn config_from_environment_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("marvin.toml");
    // a shorter confirmation window moves the dispatch out of the asserted range
    std::fs::write(&cfg, "[task]\nhelp_timeout = 4.0\n").unwrap();
    let scn = help_scenario();
    let o = marvin(&["run", "--scenario", &scn, "--headless"], Some(&cfg));
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));

    std::fs::write(&cfg, "[task]\nhelp_timeout = \"soon\"\n").unwrap();
    let o = marvin(&["run", "--scenario", &scn, "--headless"], Some(&cfg));
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_and_parse_errors_exit_two() {
    assert_eq!(code(&marvin(&["run"], None)), 2);
    assert_eq!(code(&marvin(&["launch"], None)), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "MARVINSCN v1\nname = \n").unwrap();
    let o = marvin(&["run", "--scenario", bad.to_str().unwrap(), "--headless"], None);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&bad, "MARVINSCN v9\nname = \"x\"\n").unwrap();
    let o = marvin(&["run", "--scenario", bad.to_str().unwrap(), "--headless"], None);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn busy_port_fails_at_startup() {
    let taken = std::net::TcpListener::bind("0.0.0.0:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let scn = help_scenario();
    let o = marvin(&["run", "--scenario", &scn, "--port", &port, "--rate", "100"], None);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

#[test]
fn replay_serves_log_and_refuses_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let scn = help_scenario();
    let o = marvin(
        &[
            "run",
            "--scenario",
            &scn,
            "--headless",
            "--record",
            log.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0);

    let o = marvin(
        &["replay", log.to_str().unwrap(), "--port", "0", "--speed", "1000"],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("replayed"));

    let text = std::fs::read_to_string(&log)
        .unwrap()
        .replacen("\"version\":1", "\"version\":2", 1);
    let old = dir.path().join("v2.jsonl");
    std::fs::write(&old, text).unwrap();
    let o = marvin(&["replay", old.to_str().unwrap(), "--port", "0"], None);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn map_convert_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let world = scenarios().join("two_room.world");
    let (a, w, b) = (
        dir.path().join("a.map"),
        dir.path().join("b.world"),
        dir.path().join("b.map"),
    );
    for (input, output, to) in [(&world, &a, "map"), (&a, &w, "world"), (&w, &b, "map")] {
        let o = marvin(
            &[
                "map-convert",
                input.to_str().unwrap(),
                output.to_str().unwrap(),
                "--to",
                to,
            ],
            None,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"hello").unwrap();
    let o = marvin(&["map-convert", junk.to_str().unwrap(), a.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
}
