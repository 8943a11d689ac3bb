//! JSON-over-WebSocket bridge between clients and the bus.
//!
//! Client requests (one JSON object per text frame):
//!
//! - `{"op": "subscribe", "topics": ["telemetry", ...]}`
//! - `{"op": "unsubscribe", "topics": [...]}`
//! - `{"op": "publish", "topic": ..., "type": ..., "payload": {...}}` (command topics only)
//! - `{"op": "registry"}`
//!
//! Server frames are wire messages for subscribed topics, plus
//! `{"op": "ack", ...}`, `{"op": "registry", ...}` and `{"op": "error", ...}` replies.
//! Errors never close the connection.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use marvin_core::bus::{Bus, Publisher};
use marvin_core::messages::{is_command_topic, Message, COMMAND_TOPICS, REGISTRY};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};
use tokio::task::JoinHandle;

use crate::error::GatewayError;
use crate::wire::{decode, from_envelope, topic_kind, WireMessage};

/// Frames buffered per client before the slowest ones start losing the oldest.
const FANOUT_DEPTH: usize = 4096;
const POLL_PERIOD: Duration = Duration::from_millis(2);

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request {
    Subscribe {
        topics: Vec<String>,
    },
    Unsubscribe {
        topics: Vec<String>,
    },
    Publish {
        topic: String,
        #[serde(rename = "type")]
        kind: String,
        payload: Value,
    },
    Registry,
}

struct Shared {
    publisher: std::sync::Mutex<Publisher<Message>>,
    fanout: broadcast::Sender<Arc<(String, String)>>,
}

/// A running gateway; dropping the handle does not stop it, [`Gateway::shutdown`] does.
pub struct Gateway {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    server: JoinHandle<()>,
    pump: JoinHandle<()>,
}

impl Gateway {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.pump.abort();
        let _ = self.server.await;
    }

    /// Runs until the server task ends.
    pub async fn wait(self) {
        let _ = self.server.await;
    }
}

/// Binds `port` on all interfaces (0 picks a free port) and starts serving `bus`.
pub async fn serve(bus: Bus<Message>, port: u16) -> Result<Gateway, GatewayError> {
    let listener = TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|source| GatewayError::Bind { port, source })?;
    let addr = listener.local_addr()?;
    let (fanout, _) = broadcast::channel(FANOUT_DEPTH);
    let shared = Arc::new(Shared {
        publisher: std::sync::Mutex::new(bus.publisher("gateway")),
        fanout: fanout.clone(),
    });
    let sub = bus.subscribe_all(1 << 16);
    let pump = tokio::spawn(async move {
        let mut tick = tokio::time::interval(POLL_PERIOD);
        loop {
            tick.tick().await;
            for env in sub.drain() {
                if let Ok(w) = from_envelope(&env) {
                    if let Ok(text) = serde_json::to_string(&w) {
                        let _ = fanout.send(Arc::new((w.topic, text)));
                    }
                }
            }
        }
    });
    let app = Router::new().route("/", get(upgrade)).with_state(shared);
    let (stop, stopped) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await;
    });
    Ok(Gateway {
        addr,
        stop: Some(stop),
        server,
        pump,
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

fn error_reply(kind: &str, detail: impl std::fmt::Display) -> String {
    json!({ "op": "error", "error": kind, "detail": detail.to_string() }).to_string()
}

fn registry_reply() -> String {
    let topics: Vec<Value> = REGISTRY
        .iter()
        .map(|(t, k)| json!({ "topic": t, "type": k, "command": is_command_topic(t) }))
        .collect();
    json!({ "op": "registry", "topics": topics }).to_string()
}

/// Handles one request; returns the reply frame, if any.
fn handle(text: &str, subscribed: &mut BTreeSet<String>, shared: &Shared) -> Option<String> {
    let req: Request = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => return Some(error_reply("schema", e)),
    };
    match req {
        Request::Subscribe { topics } => {
            if let Some(bad) = topics.iter().find(|t| topic_kind(t).is_none()) {
                return Some(error_reply("unknown_topic", bad));
            }
            subscribed.extend(topics.iter().cloned());
            Some(json!({ "op": "ack", "subscribed": subscribed.iter().collect::<Vec<_>>() }).to_string())
        }
        Request::Unsubscribe { topics } => {
            for t in &topics {
                subscribed.remove(t);
            }
            Some(json!({ "op": "ack", "subscribed": subscribed.iter().collect::<Vec<_>>() }).to_string())
        }
        Request::Registry => Some(registry_reply()),
        Request::Publish { topic, kind, payload } => {
            if !is_command_topic(&topic) {
                let kind = if topic_kind(&topic).is_some() {
                    "not_command"
                } else {
                    "unknown_topic"
                };
                return Some(error_reply(
                    kind,
                    format!("`{topic}` is not one of {}", COMMAND_TOPICS.join(", ")),
                ));
            }
            let wire = WireMessage {
                topic: topic.clone(),
                kind,
                stamp: 0.0,
                payload,
            };
            let msg = match decode(&wire) {
                Ok(m) => m,
                Err(e) => return Some(error_reply("schema", e)),
            };
            let published = shared.publisher.lock().unwrap().publish(&topic, msg);
            Some(match published {
                Ok(seq) => json!({ "op": "ack", "topic": topic, "seq": seq }).to_string(),
                Err(e) => error_reply("schema", e),
            })
        }
    }
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let (mut tx, mut rx) = socket.split();
    let mut feed = shared.fanout.subscribe();
    let mut subscribed: BTreeSet<String> = BTreeSet::new();
    loop {
        tokio::select! {
            incoming = rx.next() => {
                let text = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t.to_string(),
                    Some(Ok(WsMessage::Binary(b))) => String::from_utf8_lossy(&b).into_owned(),
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                if let Some(reply) = handle(&text, &mut subscribed, &shared) {
                    if tx.send(WsMessage::Text(reply.into())).await.is_err() {
                        break;
                    }
                }
            }
            frame = feed.recv() => {
                match frame {
                    Ok(item) => {
                        if subscribed.contains(&item.0)
                            && tx.send(WsMessage::Text(item.1.clone().into())).await.is_err()
                        {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }
}
