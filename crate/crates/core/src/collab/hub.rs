use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::{ErrorCode, ProtocolMessage};
use super::state::SessionState;
use crate::model::ScenarioCatalog;

pub type MemberId = u64;

pub const SESSION_ID_LEN: usize = 6;
const SESSION_ID_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HubConfig {
    pub ping_interval: Duration,
    /// A member is dropped once this many pings in a row went unanswered.
    pub max_missed_pings: u32,
    /// How long an empty session survives before it is destroyed.
    pub empty_session_ttl: Duration,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            ping_interval: Duration::from_secs(15),
            max_missed_pings: 2,
            empty_session_ttl: Duration::from_secs(60),
        }
    }
}

/// Work for the transport after a hub call.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Send(MemberId, ProtocolMessage),
    Close(MemberId),
}

#[derive(Debug)]
struct Member {
    session: Option<String>,
    last_ping: Duration,
    missed: u32,
}

#[derive(Debug)]
struct Session {
    state: SessionState,
    members: BTreeSet<MemberId>,
    emptied_at: Option<Duration>,
}

/// Transport-independent session server.
///
/// Time is passed in by the caller as a monotonic offset, so the hub is
/// deterministic given its seed and the sequence of calls. Every call runs to
/// completion, which gives each session a single apply order.
#[derive(Debug)]
pub struct SessionHub {
    config: HubConfig,
    catalog: Option<Arc<ScenarioCatalog>>,
    rng: ChaCha8Rng,
    sessions: HashMap<String, Session>,
    members: BTreeMap<MemberId, Member>,
    next_member: MemberId,
    outbox: Vec<Outgoing>,
}

impl SessionHub {
    pub fn new(config: HubConfig, catalog: Option<Arc<ScenarioCatalog>>, seed: u64) -> Self {
        SessionHub {
            config,
            catalog,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sessions: HashMap::new(),
            members: BTreeMap::new(),
            next_member: 1,
            outbox: Vec::new(),
        }
    }

    pub fn config(&self) -> &HubConfig {
        &self.config
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn session_state(&self, id: &str) -> Option<&SessionState> {
        self.sessions.get(id).map(|s| &s.state)
    }

    pub fn session_of(&self, member: MemberId) -> Option<&str> {
        self.members.get(&member)?.session.as_deref()
    }

    /// Takes everything queued for the transport since the last drain.
    pub fn drain(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    pub fn connect(&mut self, now: Duration) -> MemberId {
        let id = self.next_member;
        self.next_member += 1;
        self.members.insert(
            id,
            Member {
                session: None,
                last_ping: now,
                missed: 0,
            },
        );
        id
    }

    /// Connection closed by the peer.
    pub fn disconnect(&mut self, member: MemberId, now: Duration) {
        self.leave(member, now);
        self.members.remove(&member);
    }

    /// Parses and handles one text frame.
    pub fn handle_text(&mut self, member: MemberId, text: &str, now: Duration) {
        match ProtocolMessage::from_json(text) {
            Ok(msg) => self.handle(member, msg, now),
            Err(e) => {
                self.touch(member);
                self.send(member, ProtocolMessage::error(ErrorCode::BadMessage, e.to_string()));
            }
        }
    }

    /// Answers a frame the transport could not turn into a message.
    pub fn reject(&mut self, member: MemberId, code: ErrorCode, message: &str) {
        if self.members.contains_key(&member) {
            self.touch(member);
            self.send(member, ProtocolMessage::error(code, message));
        }
    }

    pub fn handle(&mut self, member: MemberId, msg: ProtocolMessage, now: Duration) {
        if !self.members.contains_key(&member) {
            return;
        }
        self.touch(member);
        match msg {
            ProtocolMessage::CreateSession => self.create(member, now),
            ProtocolMessage::Join { session_id } => self.join(member, &session_id, now),
            ProtocolMessage::Update { path, value } => self.update(member, &path, &value),
            ProtocolMessage::Leave => self.leave(member, now),
            ProtocolMessage::Ping => self.send(member, ProtocolMessage::Pong),
            ProtocolMessage::Pong => {}
            other => {
                let kind = serde_json::to_value(&other).ok().and_then(|v| v["type"].as_str().map(String::from));
                self.send(
                    member,
                    ProtocolMessage::error(
                        ErrorCode::BadMessage,
                        format!("'{}' is sent by the server only", kind.unwrap_or_default()),
                    ),
                );
            }
        }
    }

    /// Heartbeats and expiry. Call periodically.
    pub fn tick(&mut self, now: Duration) {
        let due: Vec<MemberId> = self
            .members
            .iter()
            .filter(|(_, m)| now.saturating_sub(m.last_ping) >= self.config.ping_interval)
            .map(|(id, _)| *id)
            .collect();
        for id in due {
            let member = self.members.get_mut(&id).expect("member listed above");
            if member.missed >= self.config.max_missed_pings {
                self.disconnect(id, now);
                self.outbox.push(Outgoing::Close(id));
            } else {
                member.missed += 1;
                member.last_ping = now;
                self.send(id, ProtocolMessage::Ping);
            }
        }
        let ttl = self.config.empty_session_ttl;
        self.sessions
            .retain(|_, s| s.emptied_at.is_none_or(|t| now.saturating_sub(t) < ttl));
    }

    /// Drops every member as if each had left, then closes all connections.
    pub fn shutdown(&mut self, now: Duration) {
        let ids: Vec<MemberId> = self.members.keys().copied().collect();
        for id in ids {
            self.disconnect(id, now);
            self.outbox.push(Outgoing::Close(id));
        }
        self.sessions.clear();
    }

    fn touch(&mut self, member: MemberId) {
        if let Some(m) = self.members.get_mut(&member) {
            m.missed = 0;
        }
    }

    fn send(&mut self, member: MemberId, msg: ProtocolMessage) {
        self.outbox.push(Outgoing::Send(member, msg));
    }

    fn new_session_id(&mut self) -> String {
        loop {
            let id: String = (0..SESSION_ID_LEN)
                .map(|_| SESSION_ID_ALPHABET[self.rng.random_range(0..SESSION_ID_ALPHABET.len())] as char)
                .collect();
            if !self.sessions.contains_key(&id) {
                return id;
            }
        }
    }

    fn snapshot(&self, id: &str) -> ProtocolMessage {
        let state = self.sessions[id].state.clone();
        ProtocolMessage::Snapshot {
            version: state.version,
            state,
        }
    }

    fn create(&mut self, member: MemberId, now: Duration) {
        self.leave(member, now);
        let id = self.new_session_id();
        self.sessions.insert(
            id.clone(),
            Session {
                state: SessionState::new(self.catalog.as_deref()),
                members: BTreeSet::from([member]),
                emptied_at: None,
            },
        );
        self.members.get_mut(&member).expect("checked by caller").session = Some(id.clone());
        tracing::debug!(session = %id, member, "session created");
        self.send(
            member,
            ProtocolMessage::SessionCreated {
                session_id: id.clone(),
                version: 0,
            },
        );
        let snap = self.snapshot(&id);
        self.send(member, snap);
    }

    fn join(&mut self, member: MemberId, id: &str, now: Duration) {
        if !self.sessions.contains_key(id) {
            self.send(
                member,
                ProtocolMessage::error(ErrorCode::NoSuchSession, format!("no session '{id}'")),
            );
            return;
        }
        if self.session_of(member) != Some(id) {
            self.leave(member, now);
        }
        let session = self.sessions.get_mut(id).expect("checked above");
        session.members.insert(member);
        session.emptied_at = None;
        self.members.get_mut(&member).expect("checked by caller").session = Some(id.to_string());
        let snap = self.snapshot(id);
        self.send(member, snap);
    }

    fn update(&mut self, member: MemberId, path: &str, value: &serde_json::Value) {
        let Some(id) = self.session_of(member).map(String::from) else {
            self.send(
                member,
                ProtocolMessage::error(ErrorCode::NotInSession, "join or create a session first"),
            );
            return;
        };
        let session = self.sessions.get_mut(&id).expect("member sessions are live");
        match session.state.apply_update(path, value, self.catalog.as_deref()) {
            Ok(stored) => {
                let msg = ProtocolMessage::State {
                    path: path.to_string(),
                    value: stored,
                    version: session.state.version,
                };
                for m in &session.members {
                    self.outbox.push(Outgoing::Send(*m, msg.clone()));
                }
            }
            Err(e) => self.send(member, ProtocolMessage::error(e.code, e.message)),
        }
    }

    fn leave(&mut self, member: MemberId, now: Duration) {
        let Some(id) = self.members.get_mut(&member).and_then(|m| m.session.take()) else {
            return;
        };
        if let Some(session) = self.sessions.get_mut(&id) {
            session.members.remove(&member);
            if session.members.is_empty() {
                session.emptied_at = Some(now);
            }
        }
    }
}
