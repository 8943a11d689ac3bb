//! JSON wire form of bus messages.

use marvin_core::bus::{Envelope, Payload};
use marvin_core::messages::{Message, REGISTRY};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub topic: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub stamp: f64,
    pub payload: Value,
}

/// Registered payload kind of `topic`.
pub fn topic_kind(topic: &str) -> Option<&'static str> {
    REGISTRY.iter().find(|(t, _)| *t == topic).map(|(_, k)| *k)
}

pub fn encode(topic: &str, stamp: f64, msg: &Message) -> Result<WireMessage, GatewayError> {
    let mut tagged = serde_json::to_value(msg)?;
    let payload = tagged
        .get_mut("payload")
        .map(Value::take)
        .ok_or_else(|| GatewayError::Schema(format!("{} has no payload", msg.kind())))?;
    if !payload.is_object() {
        return Err(GatewayError::Schema(format!("{} payload is not an object", msg.kind())));
    }
    Ok(WireMessage {
        topic: topic.to_string(),
        kind: msg.kind().to_string(),
        stamp,
        payload,
    })
}

pub fn from_envelope(env: &Envelope<Message>) -> Result<WireMessage, GatewayError> {
    encode(&env.topic, env.stamp, &env.payload)
}

/// Validates topic, type and payload against the registry.
pub fn decode(w: &WireMessage) -> Result<Message, GatewayError> {
    let expected = topic_kind(&w.topic).ok_or_else(|| GatewayError::UnknownTopic(w.topic.clone()))?;
    if w.kind != expected {
        return Err(GatewayError::Schema(format!(
            "topic `{}` carries `{expected}`, got `{}`",
            w.topic, w.kind
        )));
    }
    if !w.stamp.is_finite() {
        return Err(GatewayError::Schema("stamp must be finite".into()));
    }
    let tagged = serde_json::json!({ "type": w.kind, "payload": w.payload });
    serde_json::from_value(tagged).map_err(|e| GatewayError::Schema(format!("`{}` payload: {e}", w.kind)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use marvin_core::bus::{ActionKind, ActionRequest, RequestSource};
    use marvin_core::messages::{topics, EStopCommand};

    #[test]
    fn action_round_trip() {
        let req = ActionRequest::new(ActionKind::NavigateTo { poi: "kitchen".into() }, RequestSource::Manual).unwrap();
        let msg = Message::ActionRequest(req);
        let w = encode(topics::ACTIONS, 1.5, &msg).unwrap();
        assert_eq!(w.kind, "action_request");
        assert_eq!(w.payload["kind"]["task"], "navigate_to");
        let text = serde_json::to_string(&w).unwrap();
        let back: WireMessage = serde_json::from_str(&text).unwrap();
        assert_eq!(decode(&back).unwrap(), msg);
    }

    #[test]
    fn wrong_type_for_topic() {
        let w = encode(topics::ESTOP, 0.0, &Message::EstopCommand(EStopCommand { latch: true })).unwrap();
        let forged = WireMessage {
            topic: topics::TELEMETRY.into(),
            ..w.clone()
        };
        assert!(matches!(decode(&forged), Err(GatewayError::Schema(_))));
        let unknown = WireMessage {
            topic: "nope".into(),
            ..w
        };
        assert!(matches!(decode(&unknown), Err(GatewayError::UnknownTopic(_))));
    }

    #[test]
    fn malformed_payload() {
        let w = WireMessage {
            topic: topics::ESTOP.into(),
            kind: "estop_command".into(),
            stamp: 0.0,
            payload: serde_json::json!({ "latch": "yes" }),
        };
        assert!(matches!(decode(&w), Err(GatewayError::Schema(_))));
    }
}
