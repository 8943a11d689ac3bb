//! Service boundary for the Marvin stack: wire protocol, WebSocket bridge,
//! scenario runner and JSON-lines record/replay.

pub mod error;
pub mod record;
pub mod scenario;
pub mod server;
pub mod wire;

pub use error::GatewayError;
pub use scenario::{run_scenario, Scenario, ScenarioResult, ScenarioRunner};
pub use wire::WireMessage;
