//! Randomized runs of the session hub with simulated members that fold the
//! messages they receive.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use plastiscope_core::collab::{
    ErrorCode, HubConfig, MemberId, Outgoing, ProtocolMessage, Replica, SessionHub,
};

const T0: Duration = Duration::ZERO;

struct Sim {
    hub: SessionHub,
    replicas: BTreeMap<MemberId, Replica>,
    last_version: BTreeMap<MemberId, u64>,
    errors: Vec<ErrorCode>,
}

impl Sim {
    fn new(seed: u64) -> Sim {
        Sim {
            hub: SessionHub::new(HubConfig::default(), None, seed),
            replicas: BTreeMap::new(),
            last_version: BTreeMap::new(),
            errors: Vec::new(),
        }
    }

    fn connect(&mut self) -> MemberId {
        let m = self.hub.connect(T0);
        self.replicas.insert(m, Replica::default());
        m
    }

    fn send(&mut self, m: MemberId, msg: ProtocolMessage) {
        self.hub.handle(m, msg, T0);
        for out in self.hub.drain() {
            let Outgoing::Send(to, msg) = out else { continue };
            match &msg {
                ProtocolMessage::Error { code, .. } => self.errors.push(*code),
                ProtocolMessage::Snapshot { version, .. } => {
                    self.last_version.insert(to, *version);
                }
                ProtocolMessage::State { version, .. } => {
                    let last = self.last_version.insert(to, *version).unwrap();
                    assert_eq!(*version, last + 1, "member {to} saw a gap");
                }
                _ => {}
            }
            let r = self.replicas.get_mut(&to).unwrap();
            r.observe(&msg).unwrap();
            if let Some(s) = &r.state {
                assert!(!s.sync_cameras || s.cameras_synced(), "camera closure broken");
                s.check().unwrap();
            }
        }
    }

    fn canonical(&self, m: MemberId) -> String {
        self.replicas[&m].state.as_ref().unwrap().canonical_json()
    }
}

fn random_update(rng: &mut ChaCha8Rng) -> (String, Value) {
    let view = rng.random_range(0..9);
    match rng.random_range(0..12) {
        0..=3 => (
            format!("views.{view}.camera"),
            json!({
                "position": [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()],
                "orientation": [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)],
                "target": [0.0, 0.0, 0.0],
            }),
        ),
        4 => ("sync_cameras".into(), json!(rng.random_bool(0.5))),
        5 => ("view_count".into(), json!(rng.random_range(0..10))),
        6 => (format!("views.{view}.timestep"), json!(rng.random_range(0..100))),
        7 => ("chart_source_view".into(), json!(rng.random_range(0..8))),
        8 => (format!("views.{view}.visibility"), json!(["neurons", "connections", "both", "all"].choose(rng).unwrap())),
        9 => (format!("views.{view}.near_clip"), json!(rng.random_range(-1.0..200.0))),
        10 => (format!("views.{view}.diff"), json!({"scenario": "injury", "timestep": 3})),
        _ => (format!("views.{view}.unknown"), json!(1)),
    }
}

#[test]
fn random_runs_converge() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sim = Sim::new(seed);
        let members: Vec<MemberId> = (0..3).map(|_| sim.connect()).collect();
        sim.send(members[0], ProtocolMessage::CreateSession);
        let id = sim.replicas[&members[0]].session_id.clone().unwrap();
        for m in &members[1..] {
            sim.send(*m, ProtocolMessage::Join { session_id: id.clone() });
        }
        let mut late = None;
        for i in 0..300 {
            if i == 150 {
                let m = sim.connect();
                sim.send(m, ProtocolMessage::Join { session_id: id.clone() });
                late = Some(m);
            }
            let (path, value) = random_update(&mut rng);
            let m = *members.choose(&mut rng).unwrap();
            sim.send(m, ProtocolMessage::Update { path, value });
        }
        let server = sim.hub.session_state(&id).unwrap().clone();
        let applied = server.version as usize;
        assert_eq!(applied + sim.errors.len(), 300, "every update is applied or rejected");
        assert!(sim.errors.iter().all(|c| matches!(c, ErrorCode::BadPath | ErrorCode::BadValue)));
        for m in members.iter().chain(late.as_ref()) {
            assert_eq!(sim.canonical(*m), server.canonical_json(), "seed {seed} member {m}");
        }
    }
}

#[test]
fn join_leave_rejoin_gives_the_same_snapshot() {
    let mut sim = Sim::new(1);
    let a = sim.connect();
    let b = sim.connect();
    sim.send(a, ProtocolMessage::CreateSession);
    let id = sim.replicas[&a].session_id.clone().unwrap();
    sim.send(a, ProtocolMessage::Update { path: "view_count".into(), value: json!(2) });
    sim.send(b, ProtocolMessage::Join { session_id: id.clone() });
    let first = sim.canonical(b);
    sim.send(b, ProtocolMessage::Leave);
    sim.send(b, ProtocolMessage::Join { session_id: id.clone() });
    assert_eq!(sim.canonical(b), first);
}

#[test]
fn sync_then_camera_on_another_view() {
    let mut sim = Sim::new(2);
    let a = sim.connect();
    sim.send(a, ProtocolMessage::CreateSession);
    sim.send(a, ProtocolMessage::Update { path: "view_count".into(), value: json!(3) });
    sim.send(a, ProtocolMessage::Update { path: "sync_cameras".into(), value: json!(true) });
    sim.send(
        a,
        ProtocolMessage::Update {
            path: "views.1.camera".into(),
            value: json!({"position": [9, 9, 9], "orientation": [0, 1, 0, 0], "target": [1, 1, 1]}),
        },
    );
    let s = sim.replicas[&a].state.clone().unwrap();
    assert!(s.cameras_synced());
    assert_eq!(s.views[2].camera.position, [9.0, 9.0, 9.0]);
    assert_eq!(s.version, 3);
}

#[test]
fn disconnect_is_silent_for_others() {
    let mut sim = Sim::new(3);
    let a = sim.connect();
    let b = sim.connect();
    sim.send(a, ProtocolMessage::CreateSession);
    let id = sim.replicas[&a].session_id.clone().unwrap();
    sim.send(b, ProtocolMessage::Join { session_id: id.clone() });
    let before = sim.hub.session_state(&id).unwrap().clone();
    sim.hub.disconnect(b, T0);
    assert!(sim.hub.drain().is_empty());
    assert_eq!(sim.hub.session_state(&id).unwrap(), &before);
}
