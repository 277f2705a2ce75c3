//! Domain types shared by the pipeline, the statistics code and the services.
//!
//! Everything here is plain data: frames are immutable once built and can be
//! shared across threads freely.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neurons generated per measured location.
pub const CLUSTER_SIZE: u32 = 10;

/// Trailing window (in output steps) for `fired_fraction`.
pub const FIRED_WINDOW: usize = 100;

/// One simulation condition of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoInitialConnectivity,
    Learning,
    Injury,
    CalciumTargets,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::NoInitialConnectivity,
        Scenario::Learning,
        Scenario::Injury,
        Scenario::CalciumTargets,
    ];

    /// Identifier used for directory names, URLs and JSON.
    pub fn slug(self) -> &'static str {
        match self {
            Scenario::NoInitialConnectivity => "no_initial_connectivity",
            Scenario::Learning => "learning",
            Scenario::Injury => "injury",
            Scenario::CalciumTargets => "calcium_targets",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Scenario::NoInitialConnectivity => "No initial connectivity",
            Scenario::Learning => "Learning",
            Scenario::Injury => "Injury",
            Scenario::CalciumTargets => "Per-neuron calcium targets",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Scenario> {
        Scenario::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.slug() == s)
            .ok_or_else(|| Error::NotFound(format!("unknown scenario '{s}'")))
    }
}

/// The nine per-neuron properties a view can be colored by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronProperty {
    Area,
    Calcium,
    CalciumTargetDelta,
    Fired,
    FiredFraction,
    GrownAxons,
    GrownDendrites,
    SynapsesOut,
    SynapsesIn,
}

impl NeuronProperty {
    pub const ALL: [NeuronProperty; 9] = [
        NeuronProperty::Area,
        NeuronProperty::Calcium,
        NeuronProperty::CalciumTargetDelta,
        NeuronProperty::Fired,
        NeuronProperty::FiredFraction,
        NeuronProperty::GrownAxons,
        NeuronProperty::GrownDendrites,
        NeuronProperty::SynapsesOut,
        NeuronProperty::SynapsesIn,
    ];

    /// Properties stored as frame columns (everything except `area`, which is static).
    pub const COLUMNS: [NeuronProperty; 8] = [
        NeuronProperty::Calcium,
        NeuronProperty::CalciumTargetDelta,
        NeuronProperty::Fired,
        NeuronProperty::FiredFraction,
        NeuronProperty::GrownAxons,
        NeuronProperty::GrownDendrites,
        NeuronProperty::SynapsesOut,
        NeuronProperty::SynapsesIn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NeuronProperty::Area => "area",
            NeuronProperty::Calcium => "calcium",
            NeuronProperty::CalciumTargetDelta => "calcium_target_delta",
            NeuronProperty::Fired => "fired",
            NeuronProperty::FiredFraction => "fired_fraction",
            NeuronProperty::GrownAxons => "grown_axons",
            NeuronProperty::GrownDendrites => "grown_dendrites",
            NeuronProperty::SynapsesOut => "synapses_out",
            NeuronProperty::SynapsesIn => "synapses_in",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<NeuronProperty> {
        NeuronProperty::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for NeuronProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NeuronProperty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NeuronProperty::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown neuron property '{s}'")))
    }
}

/// Immutable identity of one neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronStatic {
    pub neuron_id: u32,
    /// Millimeters.
    pub position: [f32; 3],
    pub cluster_id: u32,
    pub cluster_slot: u8,
    pub area_id: u16,
}

/// Static neuron table plus the area name table it indexes into.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Statics {
    pub neurons: Vec<NeuronStatic>,
    pub areas: Vec<String>,
}

impl Statics {
    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn area_count(&self) -> usize {
        self.areas.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.neurons.len() / CLUSTER_SIZE as usize
    }

    pub fn area_of(&self, neuron: usize) -> Result<u16> {
        self.neurons
            .get(neuron)
            .map(|n| n.area_id)
            .ok_or(Error::OutOfBounds {
                index: neuron,
                len: self.neurons.len(),
            })
    }

    /// Mean of all neuron positions.
    pub fn centroid(&self) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        for n in &self.neurons {
            for (s, p) in sum.iter_mut().zip(n.position) {
                *s += p as f64;
            }
        }
        let count = self.neurons.len().max(1) as f64;
        sum.map(|s| s / count)
    }

    /// Largest pairwise distance between two neurons of the same cluster.
    pub fn max_cluster_spread(&self) -> f64 {
        self.neurons
            .chunks(CLUSTER_SIZE as usize)
            .map(|cluster| {
                let mut widest = 0.0f64;
                for (i, a) in cluster.iter().enumerate() {
                    for b in &cluster[i + 1..] {
                        widest = widest.max(distance(a.position, b.position));
                    }
                }
                widest
            })
            .fold(0.0, f64::max)
    }

    /// Checks the id, cluster and area invariants of the table.
    pub fn validate(&self) -> Result<()> {
        if self.neurons.len() % CLUSTER_SIZE as usize != 0 {
            return Err(Error::Validation(format!(
                "{} neurons is not a whole number of {CLUSTER_SIZE}-neuron clusters",
                self.neurons.len()
            )));
        }
        for (i, n) in self.neurons.iter().enumerate() {
            if n.neuron_id as usize != i {
                return Err(Error::Validation(format!(
                    "neuron at row {i} has id {}",
                    n.neuron_id
                )));
            }
            if n.neuron_id != n.cluster_id * CLUSTER_SIZE + n.cluster_slot as u32 {
                return Err(Error::Validation(format!(
                    "neuron {} has cluster {} slot {}",
                    n.neuron_id, n.cluster_id, n.cluster_slot
                )));
            }
            if n.area_id as usize >= self.areas.len() {
                return Err(Error::Validation(format!(
                    "neuron {} references area {} of {}",
                    n.neuron_id,
                    n.area_id,
                    self.areas.len()
                )));
            }
        }
        for cluster in self.neurons.chunks(CLUSTER_SIZE as usize) {
            let area = cluster[0].area_id;
            if let Some(odd) = cluster.iter().find(|n| n.area_id != area) {
                return Err(Error::Validation(format!(
                    "cluster {} mixes areas {} and {}",
                    odd.cluster_id, area, odd.area_id
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn distance(a: [f32; 3], b: [f32; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Dense per-neuron columns of one frame, ordered by neuron id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameColumns {
    pub calcium: Vec<f32>,
    /// Signed: calcium minus target.
    pub calcium_target_delta: Vec<f32>,
    pub fired: Vec<bool>,
    pub fired_fraction: Vec<f32>,
    pub grown_axons: Vec<f32>,
    pub grown_dendrites: Vec<f32>,
    pub synapses_out: Vec<u32>,
    pub synapses_in: Vec<u32>,
}

/// Borrowed view of a single column.
#[derive(Debug, Clone, Copy)]
pub enum ColumnRef<'a> {
    F32(&'a [f32]),
    U32(&'a [u32]),
    Bool(&'a [bool]),
}

impl ColumnRef<'_> {
    pub fn len(&self) -> usize {
        match self {
            ColumnRef::F32(c) => c.len(),
            ColumnRef::U32(c) => c.len(),
            ColumnRef::Bool(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        match self {
            ColumnRef::F32(c) => c.get(i).map(|v| *v as f64),
            ColumnRef::U32(c) => c.get(i).map(|v| *v as f64),
            ColumnRef::Bool(c) => c.get(i).map(|v| if *v { 1.0 } else { 0.0 }),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            ColumnRef::F32(c) => c.iter().map(|v| *v as f64).collect(),
            ColumnRef::U32(c) => c.iter().map(|v| *v as f64).collect(),
            ColumnRef::Bool(c) => c.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect(),
        }
    }
}

impl FrameColumns {
    pub fn with_capacity(n: usize) -> Self {
        FrameColumns {
            calcium: Vec::with_capacity(n),
            calcium_target_delta: Vec::with_capacity(n),
            fired: Vec::with_capacity(n),
            fired_fraction: Vec::with_capacity(n),
            grown_axons: Vec::with_capacity(n),
            grown_dendrites: Vec::with_capacity(n),
            synapses_out: Vec::with_capacity(n),
            synapses_in: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.calcium.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calcium.is_empty()
    }

    /// `None` for [`NeuronProperty::Area`], which lives in [`Statics`].
    pub fn column(&self, property: NeuronProperty) -> Option<ColumnRef<'_>> {
        Some(match property {
            NeuronProperty::Area => return None,
            NeuronProperty::Calcium => ColumnRef::F32(&self.calcium),
            NeuronProperty::CalciumTargetDelta => ColumnRef::F32(&self.calcium_target_delta),
            NeuronProperty::Fired => ColumnRef::Bool(&self.fired),
            NeuronProperty::FiredFraction => ColumnRef::F32(&self.fired_fraction),
            NeuronProperty::GrownAxons => ColumnRef::F32(&self.grown_axons),
            NeuronProperty::GrownDendrites => ColumnRef::F32(&self.grown_dendrites),
            NeuronProperty::SynapsesOut => ColumnRef::U32(&self.synapses_out),
            NeuronProperty::SynapsesIn => ColumnRef::U32(&self.synapses_in),
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for p in NeuronProperty::COLUMNS {
            let len = self.column(p).map(|c| c.len()).unwrap_or(0);
            if len != n {
                return Err(Error::Validation(format!(
                    "column {p} has {len} entries, expected {n}"
                )));
            }
        }
        if let Some(i) = self
            .fired_fraction
            .iter()
            .position(|f| !(0.0..=1.0).contains(f))
        {
            return Err(Error::Validation(format!(
                "fired_fraction[{i}] = {} outside [0, 1]",
                self.fired_fraction[i]
            )));
        }
        Ok(())
    }
}

/// Dense `A x A` synapse counts; entry `(s, t)` counts synapses from area `s` to area `t`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AreaConnectivity {
    area_count: usize,
    counts: Vec<u32>,
}

impl AreaConnectivity {
    pub fn zeros(area_count: usize) -> Self {
        AreaConnectivity {
            area_count,
            counts: vec![0; area_count * area_count],
        }
    }

    /// Builds a matrix from `(src, dst, count)` triplets; repeated pairs add up.
    pub fn from_triplets(
        area_count: usize,
        triplets: impl IntoIterator<Item = (u16, u16, u32)>,
    ) -> Result<Self> {
        let mut m = AreaConnectivity::zeros(area_count);
        for (s, t, c) in triplets {
            if s as usize >= area_count || t as usize >= area_count {
                return Err(Error::Validation(format!(
                    "area pair ({s}, {t}) outside {area_count} areas"
                )));
            }
            m.add(s as usize, t as usize, c);
        }
        Ok(m)
    }

    pub fn area_count(&self) -> usize {
        self.area_count
    }

    pub fn get(&self, src: usize, dst: usize) -> u32 {
        self.counts[src * self.area_count + dst]
    }

    pub(crate) fn add(&mut self, src: usize, dst: usize, count: u32) {
        self.counts[src * self.area_count + dst] += count;
    }

    /// Row-major dense counts.
    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| *c as u64).sum()
    }

    /// Non-zero entries in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = (u16, u16, u32)> + '_ {
        let a = self.area_count;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0)
            .map(move |(i, c)| ((i / a) as u16, (i % a) as u16, *c))
    }
}

/// Whether the network file for a frame was present at ingest time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityStatus {
    #[default]
    Present,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameKey {
    pub scenario: Scenario,
    pub timestep: u32,
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.scenario, self.timestep)
    }
}

/// All per-neuron properties and the area connectivity at one output step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepFrame {
    pub scenario: Scenario,
    pub timestep: u32,
    pub columns: FrameColumns,
    pub connectivity: AreaConnectivity,
    pub connectivity_status: ConnectivityStatus,
}

impl TimestepFrame {
    pub fn key(&self) -> FrameKey {
        FrameKey {
            scenario: self.scenario,
            timestep: self.timestep,
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.columns.len()
    }

    pub fn area_count(&self) -> usize {
        self.connectivity.area_count()
    }

    /// Value of `property` for neuron `i`; `area` comes from the static table.
    pub fn property_value(
        &self,
        statics: &Statics,
        property: NeuronProperty,
        i: usize,
    ) -> Result<f64> {
        let n = self.neuron_count();
        if i >= n {
            return Err(Error::OutOfBounds { index: i, len: n });
        }
        match self.columns.column(property) {
            Some(col) => col.get(i).ok_or(Error::OutOfBounds {
                index: i,
                len: col.len(),
            }),
            None => statics.area_of(i).map(f64::from),
        }
    }

    /// Whole column widened to `f64`.
    pub fn values(&self, statics: &Statics, property: NeuronProperty) -> Vec<f64> {
        match self.columns.column(property) {
            Some(col) => col.to_f64(),
            None => statics.neurons.iter().map(|n| n.area_id as f64).collect(),
        }
    }
}

/// Signed per-neuron deltas of every column property.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffColumns {
    pub calcium: Vec<f32>,
    pub calcium_target_delta: Vec<f32>,
    pub fired: Vec<i8>,
    pub fired_fraction: Vec<f32>,
    pub grown_axons: Vec<f32>,
    pub grown_dendrites: Vec<f32>,
    pub synapses_out: Vec<i64>,
    pub synapses_in: Vec<i64>,
}

impl DiffColumns {
    pub fn len(&self) -> usize {
        self.calcium.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calcium.is_empty()
    }

    /// Deltas widened to `f64`. `area` never changes between frames of one
    /// dataset, so its delta is all zeros.
    pub fn values(&self, property: NeuronProperty) -> Vec<f64> {
        fn widen<T: Copy + Into<f64>>(v: &[T]) -> Vec<f64> {
            v.iter().map(|x| (*x).into()).collect()
        }
        match property {
            NeuronProperty::Area => vec![0.0; self.len()],
            NeuronProperty::Calcium => widen(&self.calcium),
            NeuronProperty::CalciumTargetDelta => widen(&self.calcium_target_delta),
            NeuronProperty::Fired => widen(&self.fired),
            NeuronProperty::FiredFraction => widen(&self.fired_fraction),
            NeuronProperty::GrownAxons => widen(&self.grown_axons),
            NeuronProperty::GrownDendrites => widen(&self.grown_dendrites),
            NeuronProperty::SynapsesOut => self.synapses_out.iter().map(|v| *v as f64).collect(),
            NeuronProperty::SynapsesIn => self.synapses_in.iter().map(|v| *v as f64).collect(),
        }
    }
}

/// How a connection count changed between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionChange {
    Gained,
    Lost,
    Unchanged,
}

impl ConnectionChange {
    pub fn classify(delta: i64) -> Self {
        match delta.signum() {
            1 => ConnectionChange::Gained,
            -1 => ConnectionChange::Lost,
            _ => ConnectionChange::Unchanged,
        }
    }
}

/// `other - base`, per neuron and per area pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffFrame {
    pub base: FrameKey,
    pub other: FrameKey,
    pub column_deltas: DiffColumns,
    area_count: usize,
    connectivity_delta: Vec<i64>,
}

impl DiffFrame {
    pub(crate) fn new(
        base: FrameKey,
        other: FrameKey,
        column_deltas: DiffColumns,
        area_count: usize,
        connectivity_delta: Vec<i64>,
    ) -> Self {
        debug_assert_eq!(connectivity_delta.len(), area_count * area_count);
        DiffFrame {
            base,
            other,
            column_deltas,
            area_count,
            connectivity_delta,
        }
    }

    pub fn area_count(&self) -> usize {
        self.area_count
    }

    pub fn connectivity_delta(&self, src: usize, dst: usize) -> i64 {
        self.connectivity_delta[src * self.area_count + dst]
    }

    /// Row-major dense deltas.
    pub fn connectivity_deltas(&self) -> &[i64] {
        &self.connectivity_delta
    }

    pub fn connection_change(&self, src: usize, dst: usize) -> ConnectionChange {
        ConnectionChange::classify(self.connectivity_delta(src, dst))
    }

    /// Non-zero connectivity deltas in row-major order.
    pub fn nonzero_connectivity(&self) -> impl Iterator<Item = (u16, u16, i64)> + '_ {
        let a = self.area_count;
        self.connectivity_delta
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0)
            .map(move |(i, d)| ((i / a) as u16, (i % a) as u16, *d))
    }
}

/// Closed interval used for color normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyRange {
    pub min: f64,
    pub max: f64,
}

impl PropertyRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if min <= max {
            Ok(PropertyRange { min, max })
        } else {
            Err(Error::Domain(format!("range min {min} exceeds max {max}")))
        }
    }

    pub fn contains(&self, other: &PropertyRange) -> bool {
        self.min <= other.min && other.max <= self.max
    }

    pub fn union(&self, other: &PropertyRange) -> PropertyRange {
        PropertyRange {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: Scenario,
    pub name: String,
    pub timesteps: Vec<u32>,
}

/// Index of everything a store holds; serialized as `catalog.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioCatalog {
    pub scenarios: Vec<ScenarioEntry>,
    pub neuron_count: u32,
    pub area_table: Vec<String>,
    pub global_ranges: BTreeMap<Scenario, BTreeMap<NeuronProperty, PropertyRange>>,
}

impl ScenarioCatalog {
    pub fn scenario(&self, id: Scenario) -> Option<&ScenarioEntry> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn contains(&self, key: FrameKey) -> bool {
        self.scenario(key.scenario)
            .is_some_and(|s| s.timesteps.binary_search(&key.timestep).is_ok())
    }

    pub fn global_range(&self, scenario: Scenario, property: NeuronProperty) -> Option<PropertyRange> {
        self.global_ranges
            .get(&scenario)
            .and_then(|m| m.get(&property))
            .copied()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::Validation(format!("duplicate scenario {}", s.id)));
            }
            if s.timesteps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!(
                    "timesteps of {} are not strictly ascending",
                    s.id
                )));
            }
        }
        for ranges in self.global_ranges.values() {
            if let Some((p, r)) = ranges.iter().find(|(_, r)| !(r.min <= r.max)) {
                return Err(Error::Validation(format!(
                    "range for {p} is inverted ({}, {})",
                    r.min, r.max
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_statics() -> Statics {
        let neurons = (0..20u32)
            .map(|id| NeuronStatic {
                neuron_id: id,
                position: [id as f32, 0.0, 0.0],
                cluster_id: id / 10,
                cluster_slot: (id % 10) as u8,
                area_id: (id / 10) as u16,
            })
            .collect();
        Statics {
            neurons,
            areas: vec!["a".into(), "b".into()],
        }
    }

    fn frame_with(n: usize) -> TimestepFrame {
        let mut columns = FrameColumns::with_capacity(n);
        for i in 0..n {
            columns.calcium.push(i as f32 / 10.0);
            columns.calcium_target_delta.push(0.0);
            columns.fired.push(i % 2 == 1);
            columns.fired_fraction.push(0.5);
            columns.grown_axons.push(1.0);
            columns.grown_dendrites.push(2.0);
            columns.synapses_out.push(i as u32);
            columns.synapses_in.push(3);
        }
        TimestepFrame {
            scenario: Scenario::Learning,
            timestep: 0,
            columns,
            connectivity: AreaConnectivity::zeros(2),
            connectivity_status: ConnectivityStatus::Present,
        }
    }

    #[test]
    fn nine_properties_map_to_columns() {
        assert_eq!(NeuronProperty::ALL.len(), 9);
        let frame = frame_with(4);
        for p in NeuronProperty::ALL {
            assert_eq!(frame.columns.column(p).is_none(), p == NeuronProperty::Area);
            assert_eq!(p.name().parse::<NeuronProperty>().unwrap(), p);
            assert_eq!(NeuronProperty::from_code(p.code()), Some(p));
        }
    }

    #[test]
    fn property_lookup() {
        let statics = tiny_statics();
        let mut frame = frame_with(20);
        frame.columns.calcium[3] = 0.7;
        assert_eq!(
            frame.property_value(&statics, NeuronProperty::Calcium, 3).unwrap(),
            0.7f32 as f64
        );
        assert_eq!(frame.property_value(&statics, NeuronProperty::Fired, 2).unwrap(), 0.0);
        assert_eq!(frame.property_value(&statics, NeuronProperty::Fired, 3).unwrap(), 1.0);
        assert_eq!(frame.property_value(&statics, NeuronProperty::Area, 15).unwrap(), 1.0);
        assert!(matches!(
            frame.property_value(&statics, NeuronProperty::Calcium, 20),
            Err(Error::OutOfBounds { index: 20, len: 20 })
        ));
    }

    #[test]
    fn statics_invariants() {
        let mut statics = tiny_statics();
        statics.validate().unwrap();
        assert_eq!(statics.cluster_count(), 2);
        statics.neurons[12].area_id = 0;
        assert!(statics.validate().is_err());
    }

    #[test]
    fn scenario_slugs_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.slug().parse::<Scenario>().unwrap(), s);
            assert_eq!(Scenario::from_code(s.code()), Some(s));
        }
        assert!("healthy".parse::<Scenario>().is_err());
    }

    #[test]
    fn connectivity_triplets() {
        let m = AreaConnectivity::from_triplets(3, [(0, 1, 2), (2, 2, 1), (0, 1, 1)]).unwrap();
        assert_eq!(m.get(0, 1), 3);
        assert_eq!(m.total(), 4);
        assert_eq!(m.nonzero().collect::<Vec<_>>(), vec![(0, 1, 3), (2, 2, 1)]);
        assert!(AreaConnectivity::from_triplets(2, [(0, 2, 1)]).is_err());
    }

    #[test]
    fn range_rejects_inverted() {
        assert!(PropertyRange::new(1.0, 0.0).is_err());
        let r = PropertyRange::new(0.0, 0.0).unwrap();
        assert!(r.contains(&r));
    }

    #[test]
    fn catalog_json_uses_string_keys() {
        let mut cat = ScenarioCatalog::default();
        cat.global_ranges
            .entry(Scenario::Injury)
            .or_default()
            .insert(NeuronProperty::Calcium, PropertyRange { min: 0.0, max: 1.0 });
        let json = serde_json::to_string(&cat).unwrap();
        assert!(json.contains("\"injury\":{\"calcium\":{\"min\":0.0,\"max\":1.0}}"));
        let back: ScenarioCatalog = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cat);
    }
}
