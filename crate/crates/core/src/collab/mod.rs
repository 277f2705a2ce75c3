//! Shared view sessions: the replicated state, its wire protocol and a
//! transport-independent hub.

mod hub;
mod protocol;
mod state;

pub use hub::{HubConfig, MemberId, Outgoing, SessionHub, SESSION_ID_LEN};
pub use protocol::{ErrorCode, ProtocolMessage, Replica};
pub use state::{
    Camera, DisplayMode, SessionState, UpdateError, ViewState, Visibility, MAX_VIEWS,
    ORIENTATION_TOLERANCE,
};
