//! Area-to-area connectivity, property ranges and frame diffs.

use crate::error::{Error, Result};
use crate::model::{
    AreaConnectivity, DiffColumns, DiffFrame, NeuronProperty, PropertyRange, Statics,
    TimestepFrame,
};

/// Streams synapses into an area matrix without keeping the synapse list.
#[derive(Debug)]
pub struct ConnectivityAccumulator<'a> {
    statics: &'a Statics,
    matrix: AreaConnectivity,
    rows: usize,
}

impl<'a> ConnectivityAccumulator<'a> {
    pub fn new(statics: &'a Statics) -> Self {
        ConnectivityAccumulator {
            statics,
            matrix: AreaConnectivity::zeros(statics.area_count()),
            rows: 0,
        }
    }

    /// Adds one synapse. Self-loops within an area land on the diagonal.
    pub fn push(&mut self, target_id: u32, source_id: u32) -> Result<()> {
        let row = self.rows;
        let n = self.statics.len();
        let area = |id: u32| {
            self.statics
                .neurons
                .get(id as usize)
                .map(|s| s.area_id as usize)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "synapse row {row}: neuron id {id} out of range for {n} neurons"
                    ))
                })
        };
        let dst = area(target_id)?;
        let src = area(source_id)?;
        self.matrix.add(src, dst, 1);
        self.rows += 1;
        Ok(())
    }

    pub fn synapse_count(&self) -> usize {
        self.rows
    }

    pub fn finish(self) -> AreaConnectivity {
        self.matrix
    }
}

/// Counts synapses per `(source area, target area)`. Weights are ignored.
pub fn aggregate_connectivity(
    synapses: &[(u32, u32)],
    statics: &Statics,
) -> Result<AreaConnectivity> {
    let mut acc = ConnectivityAccumulator::new(statics);
    for &(target, source) in synapses {
        acc.push(target, source)?;
    }
    Ok(acc.finish())
}

fn min_max(values: impl IntoIterator<Item = f64>) -> Option<PropertyRange> {
    values.into_iter().fold(None, |acc, v| {
        Some(match acc {
            None => PropertyRange { min: v, max: v },
            Some(r) => PropertyRange {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        })
    })
}

/// Exact min/max of one column of one frame.
pub fn local_range(frame: &TimestepFrame, property: NeuronProperty) -> Result<PropertyRange> {
    let column = frame.columns.column(property).ok_or_else(|| {
        Error::Domain("area is categorical; ranges are defined for column properties".into())
    })?;
    min_max((0..column.len()).filter_map(|i| column.get(i)))
        .ok_or_else(|| Error::Domain(format!("{property} column is empty")))
}

/// Min of mins and max of maxes over all frames of a scenario.
pub fn global_range<'a>(
    frames: impl IntoIterator<Item = &'a TimestepFrame>,
    property: NeuronProperty,
) -> Result<PropertyRange> {
    let mut acc: Option<PropertyRange> = None;
    for frame in frames {
        let local = local_range(frame, property)?;
        acc = Some(acc.map_or(local, |r| r.union(&local)));
    }
    acc.ok_or_else(|| Error::Domain("global range over zero frames".into()))
}

/// Range of the static area ids.
pub fn area_range(statics: &Statics) -> Result<PropertyRange> {
    min_max(statics.neurons.iter().map(|n| n.area_id as f64))
        .ok_or_else(|| Error::Domain("no neurons".into()))
}

/// Running union of local ranges, for building global ranges one frame at a time.
#[derive(Debug, Clone, Default)]
pub struct RangeAccumulator {
    ranges: [Option<PropertyRange>; 8],
}

impl RangeAccumulator {
    pub fn push(&mut self, frame: &TimestepFrame) -> Result<()> {
        for (slot, p) in self.ranges.iter_mut().zip(NeuronProperty::COLUMNS) {
            let local = local_range(frame, p)?;
            *slot = Some(slot.map_or(local, |r| r.union(&local)));
        }
        Ok(())
    }

    pub fn get(&self, property: NeuronProperty) -> Option<PropertyRange> {
        let idx = NeuronProperty::COLUMNS.iter().position(|p| *p == property)?;
        self.ranges[idx]
    }
}

/// `other - base` for every column and every area pair.
pub fn diff_frames(base: &TimestepFrame, other: &TimestepFrame) -> Result<DiffFrame> {
    let n = base.neuron_count();
    let a = base.area_count();
    if other.neuron_count() != n || other.area_count() != a {
        return Err(Error::Validation(format!(
            "cannot diff {} ({n} neurons, {a} areas) against {} ({} neurons, {} areas)",
            base.key(),
            other.key(),
            other.neuron_count(),
            other.area_count()
        )));
    }
    let b = &base.columns;
    let o = &other.columns;
    let sub_f32 = |x: &[f32], y: &[f32]| -> Vec<f32> { x.iter().zip(y).map(|(p, q)| q - p).collect() };
    let sub_u32 = |x: &[u32], y: &[u32]| -> Vec<i64> {
        x.iter().zip(y).map(|(p, q)| *q as i64 - *p as i64).collect()
    };
    let deltas = DiffColumns {
        calcium: sub_f32(&b.calcium, &o.calcium),
        calcium_target_delta: sub_f32(&b.calcium_target_delta, &o.calcium_target_delta),
        fired: b
            .fired
            .iter()
            .zip(&o.fired)
            .map(|(p, q)| *q as i8 - *p as i8)
            .collect(),
        fired_fraction: sub_f32(&b.fired_fraction, &o.fired_fraction),
        grown_axons: sub_f32(&b.grown_axons, &o.grown_axons),
        grown_dendrites: sub_f32(&b.grown_dendrites, &o.grown_dendrites),
        synapses_out: sub_u32(&b.synapses_out, &o.synapses_out),
        synapses_in: sub_u32(&b.synapses_in, &o.synapses_in),
    };
    let connectivity = sub_u32(base.connectivity.as_slice(), other.connectivity.as_slice());
    Ok(DiffFrame::new(base.key(), other.key(), deltas, a, connectivity))
}

/// Symmetric `(-m, m)` with `m = max |delta|`, so an unchanged value sits at the midpoint.
pub fn diff_color_scale(deltas: &[f64]) -> PropertyRange {
    let m = deltas
        .iter()
        .filter(|d| d.is_finite())
        .fold(0.0f64, |m, d| m.max(d.abs()));
    // 0.0 - m keeps the all-zero case at +0.0 instead of -0.0
    PropertyRange { min: 0.0 - m, max: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConnectivityStatus, FrameColumns, NeuronStatic, Scenario};

    fn statics(areas: &[u16]) -> Statics {
        let neurons = areas
            .iter()
            .enumerate()
            .flat_map(|(c, &area)| {
                (0..10u32).map(move |slot| NeuronStatic {
                    neuron_id: c as u32 * 10 + slot,
                    position: [0.0; 3],
                    cluster_id: c as u32,
                    cluster_slot: slot as u8,
                    area_id: area,
                })
            })
            .collect();
        let area_count = areas.iter().max().map_or(0, |m| *m as usize + 1);
        Statics {
            neurons,
            areas: (0..area_count).map(|a| format!("area_{a}")).collect(),
        }
    }

    fn frame(calcium: Vec<f32>, area_count: usize) -> TimestepFrame {
        let n = calcium.len();
        TimestepFrame {
            scenario: Scenario::Learning,
            timestep: 0,
            columns: FrameColumns {
                calcium,
                calcium_target_delta: vec![0.0; n],
                fired: vec![false; n],
                fired_fraction: vec![0.0; n],
                grown_axons: vec![0.0; n],
                grown_dendrites: vec![0.0; n],
                synapses_out: vec![0; n],
                synapses_in: vec![0; n],
            },
            connectivity: AreaConnectivity::zeros(area_count),
            connectivity_status: ConnectivityStatus::Present,
        }
    }

    #[test]
    fn empty_synapse_list() {
        let s = statics(&[0, 1]);
        let m = aggregate_connectivity(&[], &s).unwrap();
        assert_eq!(m.total(), 0);
        assert_eq!(m.area_count(), 2);
    }

    #[test]
    fn single_bucket() {
        let s = statics(&[0, 1]);
        // targets in area 1 (ids 10..20), sources in area 0
        let m = aggregate_connectivity(&[(10, 0), (11, 1), (19, 9)], &s).unwrap();
        assert_eq!(m.get(0, 1), 3);
        assert_eq!(m.total(), 3);
        assert_eq!(m.nonzero().count(), 1);
    }

    #[test]
    fn self_loops_stay_on_diagonal() {
        let s = statics(&[0, 1]);
        let m = aggregate_connectivity(&[(1, 2)], &s).unwrap();
        assert_eq!(m.get(0, 0), 1);
    }

    #[test]
    fn out_of_range_id_names_row() {
        let s = statics(&[0]);
        let err = aggregate_connectivity(&[(1, 2), (3, 10)], &s).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn local_range_cases() {
        let f = frame(vec![0.2, 0.9, 0.5], 1);
        let r = local_range(&f, NeuronProperty::Calcium).unwrap();
        assert_eq!((r.min, r.max), (0.2f32 as f64, 0.9f32 as f64));
        let r = local_range(&f, NeuronProperty::Fired).unwrap();
        assert_eq!((r.min, r.max), (0.0, 0.0));
        assert!(local_range(&f, NeuronProperty::Area).is_err());
        assert!(local_range(&frame(vec![], 1), NeuronProperty::Calcium).is_err());
    }

    #[test]
    fn global_range_cases() {
        let a = frame(vec![0.0, 1.0], 1);
        let b = frame(vec![2.0, 3.0], 1);
        let r = global_range([&a, &b], NeuronProperty::Calcium).unwrap();
        assert_eq!((r.min, r.max), (0.0, 3.0));
        assert_eq!(
            global_range([&a], NeuronProperty::Calcium).unwrap(),
            local_range(&a, NeuronProperty::Calcium).unwrap()
        );
        assert!(global_range([], NeuronProperty::Calcium).is_err());
    }

    #[test]
    fn diff_gained_connections() {
        let mut base = frame(vec![1.0, 2.0], 2);
        let mut other = base.clone();
        base.connectivity.add(0, 1, 5);
        other.connectivity.add(0, 1, 8);
        other.columns.calcium[1] = 1.5;
        let d = diff_frames(&base, &other).unwrap();
        assert_eq!(d.connectivity_delta(0, 1), 3);
        assert_eq!(d.connection_change(0, 1), crate::model::ConnectionChange::Gained);
        assert_eq!(d.column_deltas.calcium, vec![0.0, -0.5]);

        let back = diff_frames(&other, &base).unwrap();
        assert_eq!(back.connection_change(0, 1), crate::model::ConnectionChange::Lost);
    }

    #[test]
    fn diff_shape_mismatch() {
        let a = frame(vec![1.0, 2.0], 2);
        let b = frame(vec![1.0], 2);
        assert!(diff_frames(&a, &b).is_err());
        let c = frame(vec![1.0, 2.0], 3);
        assert!(diff_frames(&a, &c).is_err());
    }

    #[test]
    fn color_scale_is_symmetric() {
        let r = diff_color_scale(&[-2.0, 1.0]);
        assert_eq!((r.min, r.max), (-2.0, 2.0));
        let r = diff_color_scale(&[0.0, 0.0]);
        assert_eq!((r.min, r.max), (0.0, 0.0));
        assert!(r.min.is_sign_positive());
    }
}
