//! `/ws`: WebSocket transport for the session hub.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use futures::{SinkExt, StreamExt};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;

use plastiscope_core::collab::{ErrorCode, HubConfig, MemberId, Outgoing, SessionHub, SessionState};
use plastiscope_core::ScenarioCatalog;

use crate::AppState;

/// Close code sent when the server drops a member or shuts down.
pub const CLOSE_GOING_AWAY: u16 = 1001;

struct Inner {
    hub: SessionHub,
    conns: HashMap<MemberId, mpsc::UnboundedSender<Message>>,
}

/// The session hub plus one outgoing queue per connection. A single lock
/// serializes every hub call, so all members observe one update order.
pub struct CollabHub {
    inner: Mutex<Inner>,
    start: Instant,
    tick_every: Duration,
}

impl CollabHub {
    pub fn new(config: HubConfig, catalog: Option<Arc<ScenarioCatalog>>, seed: u64) -> Self {
        let tick_every = (config.ping_interval / 4).clamp(Duration::from_millis(10), Duration::from_secs(1));
        CollabHub {
            inner: Mutex::new(Inner {
                hub: SessionHub::new(config, catalog, seed),
                conns: HashMap::new(),
            }),
            start: Instant::now(),
            tick_every,
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn with(&self, f: impl FnOnce(&mut SessionHub, Duration)) {
        let mut inner = self.lock();
        f(&mut inner.hub, self.start.elapsed());
        for out in inner.hub.drain() {
            match out {
                Outgoing::Send(member, msg) => {
                    if let Some(tx) = inner.conns.get(&member) {
                        let _ = tx.send(Message::Text(msg.to_json().into()));
                    }
                }
                Outgoing::Close(member) => {
                    if let Some(tx) = inner.conns.remove(&member) {
                        let _ = tx.send(Message::Close(Some(CloseFrame {
                            code: CLOSE_GOING_AWAY,
                            reason: "closed by server".into(),
                        })));
                    }
                }
            }
        }
    }

    fn register(&self, tx: mpsc::UnboundedSender<Message>) -> MemberId {
        let mut inner = self.lock();
        let id = inner.hub.connect(self.start.elapsed());
        inner.conns.insert(id, tx);
        id
    }

    fn disconnect(&self, member: MemberId) {
        self.with(|hub, now| hub.disconnect(member, now));
        self.lock().conns.remove(&member);
    }

    pub fn session_count(&self) -> usize {
        self.lock().hub.session_count()
    }

    pub fn session_state(&self, id: &str) -> Option<SessionState> {
        self.lock().hub.session_state(id).cloned()
    }

    pub fn connection_count(&self) -> usize {
        self.lock().conns.len()
    }

    pub fn tick(&self) {
        self.with(|hub, now| hub.tick(now));
    }

    pub fn shutdown(&self) {
        self.with(|hub, now| hub.shutdown(now));
    }

    pub fn spawn_heartbeat(self: &Arc<Self>) -> JoinHandle<()> {
        let hub = Arc::downgrade(self);
        let every = self.tick_every;
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(every);
            loop {
                interval.tick().await;
                match hub.upgrade() {
                    Some(hub) => hub.tick(),
                    None => break,
                }
            }
        })
    }
}

pub async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| serve_socket(socket, state.collab, state.shutdown))
}

async fn serve_socket(socket: WebSocket, hub: Arc<CollabHub>, mut shutdown: watch::Receiver<bool>) {
    let (tx, mut rx) = mpsc::unbounded_channel();
    let member = hub.register(tx);
    tracing::debug!(member, "socket connected");
    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            let last = matches!(msg, Message::Close(_));
            if sink.send(msg).await.is_err() || last {
                break;
            }
        }
    });
    if !*shutdown.borrow() {
        loop {
            tokio::select! {
                msg = stream.next() => match msg {
                    Some(Ok(Message::Text(text))) => hub.with(|h, now| h.handle_text(member, &text, now)),
                    Some(Ok(Message::Binary(_))) => hub.with(|h, _| {
                        h.reject(member, ErrorCode::BadMessage, "messages must be JSON text frames")
                    }),
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => {}
                },
                _ = shutdown.changed() => break,
            }
        }
    }
    hub.disconnect(member);
    let _ = writer.await;
    tracing::debug!(member, "socket closed");
}
