use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::ErrorCode;
use crate::model::{FrameKey, NeuronProperty, Scenario, ScenarioCatalog};
use crate::stats::RangeMode;

pub const MAX_VIEWS: usize = 8;

/// Quaternions further than this from unit length are renormalized.
pub const ORIENTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Neurons,
    Connections,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayMode {
    #[default]
    DynamicRadius,
    Displaced,
}

/// Orientation is an `[x, y, z, w]` quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
    pub target: [f64; 3],
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            position: [0.0, 0.0, 300.0],
            orientation: [0.0, 0.0, 0.0, 1.0],
            target: [0.0, 0.0, 0.0],
        }
    }
}

impl Camera {
    fn canonicalize(&mut self) -> Result<(), String> {
        let all = self.position.iter().chain(&self.orientation).chain(&self.target);
        if all.clone().any(|x| !x.is_finite()) {
            return Err("camera components must be finite".into());
        }
        let norm = self.orientation.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err("orientation quaternion has zero length".into());
        }
        if (norm - 1.0).abs() > ORIENTATION_TOLERANCE {
            self.orientation.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(())
    }
}

/// What one 3D view shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewState {
    pub scenario: Scenario,
    pub timestep: u32,
    pub visibility: Visibility,
    pub display_mode: DisplayMode,
    pub color_property: NeuronProperty,
    pub range_mode: RangeMode,
    /// Frame subtracted from this view's frame, if any.
    pub diff: Option<FrameKey>,
    pub near_clip: f64,
    pub camera: Camera,
}

impl Default for ViewState {
    fn default() -> Self {
        ViewState {
            scenario: Scenario::Learning,
            timestep: 0,
            visibility: Visibility::default(),
            display_mode: DisplayMode::default(),
            color_property: NeuronProperty::Calcium,
            range_mode: RangeMode::Global,
            diff: None,
            near_clip: 0.1,
            camera: Camera::default(),
        }
    }
}

impl ViewState {
    /// Default view, moved onto the catalog's first frame if the default frame
    /// does not exist there.
    pub fn default_for(catalog: Option<&ScenarioCatalog>) -> Self {
        let mut view = ViewState::default();
        if let Some(cat) = catalog {
            let key = FrameKey {
                scenario: view.scenario,
                timestep: view.timestep,
            };
            if !cat.contains(key) {
                if let Some(entry) = cat.scenarios.iter().find(|e| !e.timesteps.is_empty()) {
                    view.scenario = entry.id;
                    view.timestep = entry.timesteps[0];
                }
            }
        }
        view
    }

    fn canonicalize(&mut self, catalog: Option<&ScenarioCatalog>) -> Result<(), String> {
        if !(self.near_clip.is_finite() && self.near_clip >= 0.0) {
            return Err(format!("near_clip {} must be finite and >= 0", self.near_clip));
        }
        self.camera.canonicalize()?;
        if let Some(cat) = catalog {
            let key = FrameKey {
                scenario: self.scenario,
                timestep: self.timestep,
            };
            if !cat.contains(key) {
                return Err(format!("frame {key} is not in the catalog"));
            }
            if let Some(other) = self.diff {
                if !cat.contains(other) {
                    return Err(format!("diff frame {other} is not in the catalog"));
                }
            }
        }
        Ok(())
    }
}

/// Rejected update; the state is left untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateError {
    pub code: ErrorCode,
    pub message: String,
}

fn bad_path(path: &str) -> UpdateError {
    UpdateError {
        code: ErrorCode::BadPath,
        message: format!("no writable field at '{path}'"),
    }
}

fn bad_value(message: impl Into<String>) -> UpdateError {
    UpdateError {
        code: ErrorCode::BadValue,
        message: message.into(),
    }
}

fn parse<T: DeserializeOwned>(value: &Value) -> Result<T, UpdateError> {
    T::deserialize(value).map_err(|e| bad_value(e.to_string()))
}

/// The view configuration shared by every member of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    pub view_count: usize,
    pub views: Vec<ViewState>,
    pub sync_cameras: bool,
    /// View the 2D chart page follows.
    pub chart_source_view: usize,
    pub version: u64,
}

impl Default for SessionState {
    fn default() -> Self {
        SessionState::new(None)
    }
}

impl SessionState {
    pub fn new(catalog: Option<&ScenarioCatalog>) -> Self {
        SessionState {
            view_count: 1,
            views: vec![ViewState::default_for(catalog)],
            sync_cameras: false,
            chart_source_view: 0,
            version: 0,
        }
    }

    /// Compact JSON with fixed field order; equal states give equal bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("session state serializes")
    }

    pub fn cameras_synced(&self) -> bool {
        self.views.windows(2).all(|w| w[0].camera == w[1].camera)
    }

    /// Structural invariants that hold after every successful update.
    pub fn check(&self) -> Result<(), String> {
        if !(1..=MAX_VIEWS).contains(&self.view_count) {
            return Err(format!("view_count {} outside 1..={MAX_VIEWS}", self.view_count));
        }
        if self.views.len() != self.view_count {
            return Err(format!("{} views for view_count {}", self.views.len(), self.view_count));
        }
        if self.chart_source_view >= self.view_count {
            return Err(format!("chart_source_view {} out of range", self.chart_source_view));
        }
        if self.sync_cameras && !self.cameras_synced() {
            return Err("cameras differ while synchronized".into());
        }
        Ok(())
    }

    /// Applies one path update, bumps the version and returns the value as
    /// stored (after normalization). Replaying the returned value on a copy of
    /// the previous state reproduces this state exactly.
    pub fn apply_update(
        &mut self,
        path: &str,
        value: &Value,
        catalog: Option<&ScenarioCatalog>,
    ) -> Result<Value, UpdateError> {
        let mut next = self.clone();
        next.write(path, value, catalog)?;
        next.version += 1;
        let stored = next.read(path).ok_or_else(|| bad_path(path))?;
        *self = next;
        Ok(stored)
    }

    /// Current value at `path`, or `None` if the path does not resolve.
    pub fn read(&self, path: &str) -> Option<Value> {
        let pointer: String = path.split('.').map(|seg| format!("/{seg}")).collect();
        serde_json::to_value(self).ok()?.pointer(&pointer).cloned()
    }

    fn write(&mut self, path: &str, value: &Value, catalog: Option<&ScenarioCatalog>) -> Result<(), UpdateError> {
        let segs: Vec<&str> = path.split('.').collect();
        match segs.as_slice() {
            ["view_count"] => {
                let count: usize = parse(value)?;
                if !(1..=MAX_VIEWS).contains(&count) {
                    return Err(bad_value(format!("view_count {count} outside 1..={MAX_VIEWS}")));
                }
                let template = self.views[0].clone();
                self.views.resize(count, template);
                self.view_count = count;
                if self.chart_source_view >= count {
                    self.chart_source_view = 0;
                }
            }
            ["sync_cameras"] => {
                self.sync_cameras = parse(value)?;
                if self.sync_cameras {
                    let camera = self.views[0].camera;
                    self.views.iter_mut().for_each(|v| v.camera = camera);
                }
            }
            ["chart_source_view"] => {
                let idx: usize = parse(value)?;
                if idx >= self.view_count {
                    return Err(bad_value(format!("chart_source_view {idx} >= view_count {}", self.view_count)));
                }
                self.chart_source_view = idx;
            }
            ["views", idx, rest @ ..] => {
                let i = idx
                    .parse::<usize>()
                    .ok()
                    .filter(|i| *i < self.view_count && idx.len() == i.to_string().len())
                    .ok_or_else(|| bad_path(path))?;
                let view = &mut self.views[i];
                match rest {
                    [] => *view = parse(value)?,
                    ["scenario"] => view.scenario = parse(value)?,
                    ["timestep"] => view.timestep = parse(value)?,
                    ["visibility"] => view.visibility = parse(value)?,
                    ["display_mode"] => view.display_mode = parse(value)?,
                    ["color_property"] => view.color_property = parse(value)?,
                    ["range_mode"] => view.range_mode = parse(value)?,
                    ["diff"] => view.diff = parse(value)?,
                    ["near_clip"] => view.near_clip = parse(value)?,
                    ["camera"] => view.camera = parse(value)?,
                    ["camera", "position"] => view.camera.position = parse(value)?,
                    ["camera", "orientation"] => view.camera.orientation = parse(value)?,
                    ["camera", "target"] => view.camera.target = parse(value)?,
                    _ => return Err(bad_path(path)),
                }
                view.canonicalize(catalog).map_err(bad_value)?;
                if self.sync_cameras {
                    let camera = self.views[i].camera;
                    self.views.iter_mut().for_each(|v| v.camera = camera);
                }
            }
            _ => return Err(bad_path(path)),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenarioEntry;
    use serde_json::json;
    use std::collections::BTreeMap;

    fn catalog() -> ScenarioCatalog {
        ScenarioCatalog {
            scenarios: vec![
                ScenarioEntry {
                    id: Scenario::Learning,
                    name: "Learning".into(),
                    timesteps: (0..10).collect(),
                },
                ScenarioEntry {
                    id: Scenario::Injury,
                    name: "Injury".into(),
                    timesteps: vec![0, 5],
                },
            ],
            neuron_count: 10,
            area_table: vec!["a".into()],
            global_ranges: BTreeMap::new(),
        }
    }

    #[test]
    fn defaults() {
        let s = SessionState::default();
        assert_eq!(s.view_count, 1);
        assert_eq!(s.views[0].scenario, Scenario::Learning);
        assert_eq!(s.views[0].timestep, 0);
        assert_eq!(s.views[0].color_property, NeuronProperty::Calcium);
        assert_eq!(s.views[0].range_mode, RangeMode::Global);
        assert!(!s.sync_cameras);
        assert_eq!(s.version, 0);
        s.check().unwrap();
    }

    #[test]
    fn timestep_update_bumps_version() {
        let cat = catalog();
        let mut s = SessionState::new(Some(&cat));
        let stored = s.apply_update("views.0.timestep", &json!(7), Some(&cat)).unwrap();
        assert_eq!(stored, json!(7));
        assert_eq!((s.views[0].timestep, s.version), (7, 1));
    }

    #[test]
    fn rejected_updates_leave_state_alone() {
        let cat = catalog();
        let mut s = SessionState::new(Some(&cat));
        let before = s.clone();
        let cases = [
            ("views.1.timestep", json!(1), ErrorCode::BadPath),
            ("views.0.nope", json!(1), ErrorCode::BadPath),
            ("version", json!(9), ErrorCode::BadPath),
            ("views.00.timestep", json!(1), ErrorCode::BadPath),
            ("", json!(1), ErrorCode::BadPath),
            ("views.0.timestep", json!(99), ErrorCode::BadValue),
            ("views.0.timestep", json!("x"), ErrorCode::BadValue),
            ("views.0.timestep", json!(-1), ErrorCode::BadValue),
            ("views.0.near_clip", json!(-0.5), ErrorCode::BadValue),
            ("views.0.scenario", json!("calcium_targets"), ErrorCode::BadValue),
            ("views.0.diff", json!({"scenario": "injury", "timestep": 3}), ErrorCode::BadValue),
            ("views.0.camera.orientation", json!([0, 0, 0, 0]), ErrorCode::BadValue),
            ("view_count", json!(9), ErrorCode::BadValue),
            ("view_count", json!(0), ErrorCode::BadValue),
            ("chart_source_view", json!(1), ErrorCode::BadValue),
            ("views.0", json!({"scenario": "learning"}), ErrorCode::BadValue),
        ];
        for (path, value, code) in cases {
            let err = s.apply_update(path, &value, Some(&cat)).unwrap_err();
            assert_eq!(err.code, code, "{path} = {value}");
            assert_eq!(s, before);
        }
    }

    #[test]
    fn scenario_switch_needs_existing_frame() {
        let cat = catalog();
        let mut s = SessionState::new(Some(&cat));
        s.apply_update("views.0.scenario", &json!("injury"), Some(&cat)).unwrap();
        s.apply_update("views.0.timestep", &json!(5), Some(&cat)).unwrap();
        assert!(s.apply_update("views.0.scenario", &json!("learning"), Some(&cat)).is_ok());
        assert!(s.apply_update("views.0.timestep", &json!(7), Some(&cat)).is_ok());
        assert!(s.apply_update("views.0.scenario", &json!("injury"), Some(&cat)).is_err());
    }

    #[test]
    fn sync_copies_view_zero_camera() {
        let mut s = SessionState::default();
        s.apply_update("view_count", &json!(3), None).unwrap();
        s.apply_update("views.2.camera.position", &json!([1, 2, 3]), None).unwrap();
        assert!(!s.cameras_synced());
        s.apply_update("sync_cameras", &json!(true), None).unwrap();
        assert!(s.cameras_synced());
        assert_eq!(s.views[2].camera.position, [0.0, 0.0, 300.0]);
        s.apply_update("views.1.camera", &json!({"position": [5, 5, 5], "orientation": [0, 0, 0, 2], "target": [0, 0, 0]}), None)
            .unwrap();
        assert!(s.cameras_synced());
        assert_eq!(s.views[0].camera.orientation, [0.0, 0.0, 0.0, 1.0]);
        s.check().unwrap();
    }

    #[test]
    fn stored_value_replays_exactly() {
        let mut a = SessionState::default();
        let q = json!([0.3, 0.1, -0.2, 0.9]);
        let stored = a.apply_update("views.0.camera.orientation", &q, None).unwrap();
        let mut b = SessionState::default();
        b.apply_update("views.0.camera.orientation", &stored, None).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
        let norm: f64 = a.views[0].camera.orientation.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= ORIENTATION_TOLERANCE);
    }

    #[test]
    fn replay_survives_json_text() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a = SessionState::default();
            let stored = a.apply_update("views.0.camera.orientation", &json!(q), None).unwrap();
            let wire: Value = serde_json::from_str(&serde_json::to_string(&stored).unwrap()).unwrap();
            let mut b = SessionState::default();
            b.apply_update("views.0.camera.orientation", &wire, None).unwrap();
            assert_eq!(a.canonical_json(), b.canonical_json());
        }
    }

    #[test]
    fn shrinking_views_resets_chart_source() {
        let mut s = SessionState::default();
        s.apply_update("view_count", &json!(4), None).unwrap();
        s.apply_update("chart_source_view", &json!(3), None).unwrap();
        s.apply_update("view_count", &json!(2), None).unwrap();
        assert_eq!(s.chart_source_view, 0);
        assert_eq!(s.views.len(), 2);
        s.check().unwrap();
    }

    #[test]
    fn whole_view_replace() {
        let mut s = SessionState::default();
        let mut v = ViewState::default();
        v.visibility = Visibility::Connections;
        v.display_mode = DisplayMode::Displaced;
        v.diff = Some(FrameKey {
            scenario: Scenario::Injury,
            timestep: 0,
        });
        let stored = s.apply_update("views.0", &serde_json::to_value(&v).unwrap(), None).unwrap();
        assert_eq!(s.views[0], v);
        assert_eq!(stored["visibility"], json!("connections"));
    }
}
