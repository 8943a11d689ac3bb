use std::path::Path;

use marvin_core::config::MarvinConfig;
use marvin_gateway::scenario::{Check, Scenario, ScenarioRunner};
use marvin_gateway::GatewayError;

const ROOM: &str = r#"MARVINSCN v1
name = "room"
horizon = 3.0
world_inline = """
MARVINWORLD v1
resolution 0.1
origin 0 0
cells_per_char 1
---
##########
#........#
#........#
#........#
#........#
##########
"""

[robot]
start = [0.5, 0.3, 0.0]

[poi.dock]
x = 0.5
y = 0.3
"#;

fn with(extra: &str) -> Result<Scenario, GatewayError> {
    Scenario::parse(&format!("{ROOM}\n{extra}"), Path::new("."))
}

#[test]
fn inline_world_and_defaults() {
    let sc = with("").unwrap();
    assert_eq!(sc.name, "room");
    assert_eq!((sc.grid.width, sc.grid.height), (10, 6));
    assert!(sc.assertions.is_empty() && sc.injections.is_empty());
}

#[test]
fn count_assertion_counts_every_match() {
    let sc = with(
        r#"
[[command]]
at = 0.5
topic = "lights"
payload = { on = true }
"#,
    );
    // lights are internal, so a scenario cannot inject them either
    assert!(matches!(sc, Err(GatewayError::Parse { .. })));

    let sc = with(
        r#"
[[command]]
at = 0.5
topic = "estop"
payload = { latch = true }

[[command]]
at = 1.0
topic = "estop"
payload = { latch = false }

[[assert]]
kind = "count"
topic = "estop"
count = 2

[[assert]]
kind = "count"
topic = "estop"
match = { latch = true }
count = 1
"#,
    )
    .unwrap();
    assert!(matches!(sc.assertions[0].check, Check::Count { count: 2, .. }));
    let mut r = ScenarioRunner::new(sc, 0, MarvinConfig::default()).unwrap();
    r.run_to_end().unwrap();
    let result = r.finish().unwrap();
    assert!(result.passed(), "{:?}", result.outcomes);
    assert_eq!(result.exit_code(), 0);
}

#[test]
fn failing_assertion_sets_exit_code() {
    let sc = with(
        r#"
[[assert]]
kind = "event"
topic = "fall"
"#,
    )
    .unwrap();
    let mut r = ScenarioRunner::new(sc, 0, MarvinConfig::default()).unwrap();
    r.run_to_end().unwrap();
    let result = r.finish().unwrap();
    assert!(!result.passed());
    assert_eq!(result.exit_code(), 1);
}

#[test]
fn parse_errors_carry_lines() {
    let err = Scenario::parse("MARVINSCN v2\n", Path::new(".")).unwrap_err();
    assert!(matches!(err, GatewayError::Parse { line: 1, .. }));
    assert_eq!(err.exit_code(), 2);

    let err = with("[[assert]]\nkind = \"near_poi\"\npoi = \"attic\"\ntolerance = 0.1\n").unwrap_err();
    assert!(err.to_string().contains("attic"), "{err}");

    let err = with("[[assert]]\nkind = \"teleport\"\n").unwrap_err();
    assert!(matches!(err, GatewayError::Parse { .. }));
}
