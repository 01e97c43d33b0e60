//! Session wire protocol: one JSON object per text frame,
//! `{"kind": ..., "seq": ..., "payload": {...}}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Hello,
    StateUpdate,
    Command,
    EpisodeEnd,
    InterfaceSwap,
    RunEnd,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: MessageKind, seq: u64, payload: impl Serialize) -> Self {
        Self {
            kind,
            seq,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_value(self.payload.clone()).map_err(|e| format!("bad {:?} payload: {e}", self.kind))
    }
}

/// Client → server greeting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub env: String,
}

/// Server → client reply to a hello.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloAck {
    pub env: String,
    pub tick_hz: f64,
    pub budget: usize,
    pub episodes_per_interface: usize,
    pub state_dim: usize,
    pub command_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub interface: usize,
    pub episode: u64,
    pub t: usize,
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub episode: u64,
    pub t: usize,
    pub command: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub interface: usize,
    pub episode: u64,
    pub steps: usize,
    /// Terminal state of the episode.
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSwap {
    pub interface: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEnd {
    pub interfaces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}
