//! Newline-delimited JSON protocol between the simulator and live clients.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Snapshot;
use crate::plant::HandInput;
use crate::shape::ShapePreset;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Hello,
    SetMode(i64),
    SetPreset(ShapePreset),
    SetHand(HandInput),
    Reset,
    Subscribe(f64),
    Unsubscribe,
}

/// A parsed client message with its optional correlation id.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Option<Value>,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ParseError,
    UnknownType,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    pub code: ErrorCode,
    #[serde(default)]
    pub message: String,
}

impl Rejection {
    pub fn new(id: Option<Value>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            id,
            code,
            message: message.into(),
        }
    }
}

/// Acknowledgement. Echoes the payload of the command it answers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ack {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<ShapePreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack(Ack),
    Error(Rejection),
    Snapshot(Snapshot),
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[derive(Deserialize)]
struct ModeField {
    mode: i64,
}

#[derive(Deserialize)]
struct RateField {
    rate_hz: f64,
}

pub fn parse_request(line: &str) -> Result<Request, Rejection> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Rejection::new(None, ErrorCode::ParseError, e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(Rejection::new(None, ErrorCode::ParseError, "message must be a JSON object"));
    };
    let id = map.get("id").cloned();
    let reject = |code, message: String| Rejection::new(id.clone(), code, message);
    let kind = match map.get("type") {
        Some(Value::String(kind)) => kind.as_str(),
        Some(other) => return Err(reject(ErrorCode::UnknownType, format!("type must be a string, got {other}"))),
        None => return Err(reject(ErrorCode::UnknownType, "missing type".into())),
    };
    let fields = |err: serde_json::Error| reject(ErrorCode::ParseError, err.to_string());
    let command = match kind {
        "hello" => Command::Hello,
        "set_mode" => Command::SetMode(ModeField::deserialize(&value).map_err(fields)?.mode),
        "set_preset" => {
            let preset = match map.get("preset") {
                Some(Value::String(name)) => name
                    .parse::<ShapePreset>()
                    .map_err(|e| reject(ErrorCode::OutOfRange, e.to_string()))?,
                Some(Value::Number(n)) if n.as_i64().is_some() => ShapePreset::from_id(n.as_i64().unwrap())
                    .map_err(|e| reject(ErrorCode::OutOfRange, e.to_string()))?,
                _ => return Err(reject(ErrorCode::ParseError, "preset must be a name or id".into())),
            };
            Command::SetPreset(preset)
        }
        "set_hand" => {
            let hand = HandInput::deserialize(&value).map_err(fields)?;
            hand.validate()
                .map_err(|e| reject(ErrorCode::OutOfRange, e.to_string()))?;
            Command::SetHand(hand)
        }
        "reset" => Command::Reset,
        "subscribe" => Command::Subscribe(RateField::deserialize(&value).map_err(fields)?.rate_hz),
        "unsubscribe" => Command::Unsubscribe,
        other => return Err(reject(ErrorCode::UnknownType, format!("unknown message type `{other}`"))),
    };
    Ok(Request { id, command })
}
