use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use marvin_core::bus::Payload;
use marvin_core::kinematics::{ChassisParams, Pose2D, Twist2D};
use marvin_core::lowlayer::{DeviceState, LowLayer, LowLayerConfig};
use marvin_core::messages::{marvin_bus, topics, LightsCommand, Message, Telemetry};
use marvin_core::taskmgr::TaskState;
use marvin_gateway::server::{serve, Gateway};
use marvin_gateway::GatewayError;
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as Ws;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn connect(gw: &Gateway) -> Client {
    let url = format!("ws://127.0.0.1:{}/", gw.local_addr().port());
    connect_async(url).await.unwrap().0
}

async fn send(c: &mut Client, v: Value) {
    c.send(Ws::text(v.to_string())).await.unwrap();
}

async fn next_json(c: &mut Client) -> Value {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(5), c.next())
            .await
            .expect("reply in time")
            .expect("open")
            .unwrap();
        if let Ws::Text(t) = frame {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

fn telemetry() -> Message {
    let low = LowLayer::new(
        LowLayerConfig::default(),
        ChassisParams::default(),
        DeviceState::default(),
    );
    Message::Telemetry(Box::new(Telemetry {
        pose: Pose2D::new(1.0, 2.0, 0.5),
        twist: Twist2D::ZERO,
        command: Twist2D::new(0.25, 0.0, 0.0),
        low_layer: low.telemetry(),
        estop: false,
        task: TaskState::default(),
    }))
}

#[tokio::test]
async fn subscribed_topics_are_forwarded() {
    let bus = marvin_bus();
    let gw = serve(bus.clone(), 0).await.unwrap();
    let mut c = connect(&gw).await;
    send(&mut c, json!({ "op": "subscribe", "topics": [topics::TELEMETRY] })).await;
    assert_eq!(next_json(&mut c).await["op"], "ack");

    let sim = bus.publisher("sim");
    bus.set_clock(4.0);
    // not subscribed, so never forwarded
    sim.publish(topics::LIGHTS, Message::LightsCommand(LightsCommand { on: true }))
        .unwrap();
    sim.publish(topics::TELEMETRY, telemetry()).unwrap();
    let frame = next_json(&mut c).await;
    assert_eq!(frame["topic"], topics::TELEMETRY);
    assert_eq!(frame["type"], "telemetry");
    assert_eq!(frame["stamp"], 4.0);
    assert_eq!(frame["payload"]["command"]["vx"], 0.25);
    gw.shutdown().await;
}

#[tokio::test]
async fn command_publish_reaches_bus() {
    let bus = marvin_bus();
    let sub = bus.subscribe(topics::ESTOP).unwrap();
    let gw = serve(bus.clone(), 0).await.unwrap();
    let mut c = connect(&gw).await;
    send(
        &mut c,
        json!({ "op": "publish", "topic": topics::ESTOP, "type": "estop_command", "payload": { "latch": true } }),
    )
    .await;
    let ack = next_json(&mut c).await;
    assert_eq!(ack["op"], "ack", "{ack}");
    let got = sub.drain();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].payload.kind(), "estop_command");
    gw.shutdown().await;
}

#[tokio::test]
async fn internal_topics_cannot_be_forged() {
    let bus = marvin_bus();
    let sub = bus.subscribe(topics::TELEMETRY).unwrap();
    let gw = serve(bus.clone(), 0).await.unwrap();
    let mut c = connect(&gw).await;
    let forged = serde_json::to_value(telemetry()).unwrap();
    send(
        &mut c,
        json!({ "op": "publish", "topic": topics::TELEMETRY, "type": "telemetry", "payload": forged["payload"] }),
    )
    .await;
    let reply = next_json(&mut c).await;
    assert_eq!(reply["op"], "error");
    assert_eq!(reply["error"], "not_command");
    send(
        &mut c,
        json!({ "op": "publish", "topic": "made/up", "type": "x", "payload": {} }),
    )
    .await;
    assert_eq!(next_json(&mut c).await["error"], "unknown_topic");
    assert!(sub.drain().is_empty());
    gw.shutdown().await;
}

#[tokio::test]
async fn schema_errors_keep_connection_open() {
    let bus = marvin_bus();
    let gw = serve(bus.clone(), 0).await.unwrap();
    let mut c = connect(&gw).await;
    c.send(Ws::text("not json")).await.unwrap();
    assert_eq!(next_json(&mut c).await["error"], "schema");
    send(
        &mut c,
        json!({ "op": "publish", "topic": topics::ESTOP, "type": "estop_command", "payload": { "latch": "yes" } }),
    )
    .await;
    assert_eq!(next_json(&mut c).await["error"], "schema");
    send(
        &mut c,
        json!({ "op": "publish", "topic": topics::ESTOP, "type": "lights_command", "payload": { "on": true } }),
    )
    .await;
    assert_eq!(next_json(&mut c).await["error"], "schema");
    send(&mut c, json!({ "op": "subscribe", "topics": ["nope"] })).await;
    assert_eq!(next_json(&mut c).await["error"], "unknown_topic");
    // still usable afterwards
    send(&mut c, json!({ "op": "registry" })).await;
    let reg = next_json(&mut c).await;
    assert_eq!(reg["op"], "registry");
    assert_eq!(
        reg["topics"].as_array().unwrap().len(),
        marvin_core::messages::REGISTRY.len()
    );
    gw.shutdown().await;
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let bus = marvin_bus();
    let first = serve(bus.clone(), 0).await.unwrap();
    let port = first.local_addr().port();
    match serve(bus, port).await {
        Err(GatewayError::Bind { port: p, .. }) => assert_eq!(p, port),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("second bind on {port} succeeded"),
    }
    first.shutdown().await;
}
