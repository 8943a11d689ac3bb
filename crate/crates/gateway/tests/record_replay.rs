use std::path::PathBuf;

use marvin_core::config::MarvinConfig;
use marvin_core::messages::{marvin_bus, topics};
use marvin_gateway::record::{read_log, replay, LogHeader, LOG_VERSION};
use marvin_gateway::wire::from_envelope;
use marvin_gateway::{run_scenario, GatewayError};

fn recorded() -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/help_timeout.scn");
    run_scenario(path, 3, MarvinConfig::default()).unwrap().log
}

#[test]
fn header_names_run() {
    let log = read_log(recorded().as_slice()).unwrap();
    assert_eq!(log.header, LogHeader::new(Some("help_timeout"), Some(3)));
    assert!(!log.truncated);
    assert!(log.messages.iter().any(|m| m.topic == topics::TELEMETRY));
}

#[test]
fn replay_reproduces_messages_with_original_stamps() {
    let log = read_log(recorded().as_slice()).unwrap();
    let bus = marvin_bus();
    let sub = bus.subscribe_all(1 << 20);
    let report = replay(&log, &bus, None).unwrap();
    assert_eq!(report.published, log.messages.len());
    let got: Vec<_> = sub.drain().iter().map(|e| from_envelope(e).unwrap()).collect();
    assert_eq!(got, log.messages);
    assert_eq!(report.last_stamp, log.messages.last().map(|m| m.stamp));
}

#[test]
fn other_versions_are_refused() {
    let bytes = recorded();
    let text = String::from_utf8(bytes).unwrap();
    let (_, body) = text.split_once('\n').unwrap();
    let mut header = LogHeader::new(Some("help_timeout"), Some(3));
    header.version = LOG_VERSION + 1;
    let forged = format!("{}\n{body}", serde_json::to_string(&header).unwrap());
    let err = read_log(forged.as_bytes()).unwrap_err();
    assert!(matches!(err, GatewayError::Version { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);

    header.version = LOG_VERSION;
    header.format = "something-else".into();
    let forged = format!("{}\n{body}", serde_json::to_string(&header).unwrap());
    assert!(matches!(read_log(forged.as_bytes()), Err(GatewayError::Version { .. })));
}

#[test]
fn truncated_tail_stops_at_last_full_line() {
    let bytes = recorded();
    let full = read_log(bytes.as_slice()).unwrap();
    // cut part-way through the final line
    let last_start = bytes[..bytes.len() - 1].iter().rposition(|b| *b == b'\n').unwrap() + 1;
    let cut = &bytes[..last_start + (bytes.len() - last_start) / 2];
    let log = read_log(cut).unwrap();
    assert!(log.truncated);
    assert_eq!(log.messages, full.messages[..full.messages.len() - 1]);

    let bus = marvin_bus();
    let report = replay(&log, &bus, None).unwrap();
    assert_eq!(report.published, full.messages.len() - 1);
}

#[test]
fn corrupt_middle_line_is_a_parse_error() {
    let text = String::from_utf8(recorded()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "{\"topic\": 17}";
    let broken = lines.join("\n") + "\n";
    match read_log(broken.as_bytes()) {
        Err(GatewayError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_log_is_rejected() {
    assert!(matches!(read_log(&b""[..]), Err(GatewayError::Parse { .. })));
}
