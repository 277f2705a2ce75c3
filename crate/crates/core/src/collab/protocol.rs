use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::state::SessionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NoSuchSession,
    NotInSession,
    BadPath,
    BadValue,
    BadMessage,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NoSuchSession => "no_such_session",
            ErrorCode::NotInSession => "not_in_session",
            ErrorCode::BadPath => "bad_path",
            ErrorCode::BadValue => "bad_value",
            ErrorCode::BadMessage => "bad_message",
        }
    }
}

/// Every message on the session channel, in either direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProtocolMessage {
    CreateSession,
    SessionCreated { session_id: String, version: u64 },
    Join { session_id: String },
    Snapshot { state: SessionState, version: u64 },
    Update { path: String, value: Value },
    State { path: String, value: Value, version: u64 },
    Error { code: ErrorCode, message: String },
    Ping,
    Pong,
    Leave,
}

impl ProtocolMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ProtocolMessage::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol message serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Client-side copy of a session state, folded from server messages.
#[derive(Debug, Clone, Default)]
pub struct Replica {
    pub session_id: Option<String>,
    pub state: Option<SessionState>,
}

impl Replica {
    /// Folds one server message. Errors on a version gap or a state message
    /// that does not replay.
    pub fn observe(&mut self, msg: &ProtocolMessage) -> Result<(), String> {
        match msg {
            ProtocolMessage::SessionCreated { session_id, .. } => {
                self.session_id = Some(session_id.clone());
            }
            ProtocolMessage::Snapshot { state, version } => {
                if state.version != *version {
                    return Err(format!("snapshot version {version} != state version {}", state.version));
                }
                self.state = Some(state.clone());
            }
            ProtocolMessage::State { path, value, version } => {
                let state = self.state.as_mut().ok_or("state message before snapshot")?;
                if *version != state.version + 1 {
                    return Err(format!("version jumped from {} to {version}", state.version));
                }
                state.apply_update(path, value, None).map_err(|e| e.message)?;
            }
            _ => {}
        }
        Ok(())
    }
}
