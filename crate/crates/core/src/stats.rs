//! Statistics behind the 2D chart page: histogram, per-area box plots and a
//! parallel-coordinates extract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NeuronProperty, PropertyRange, Statics, TimestepFrame};

pub const DEFAULT_BIN_COUNT: usize = 20;
pub const DEFAULT_PARALLEL_CAP: usize = 10_000;

/// Multiplier on the interquartile range that places the whisker fences.
pub const WHISKER_IQR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub property: NeuronProperty,
    pub range: PropertyRange,
    pub bin_count: usize,
    pub counts: Vec<u64>,
}

impl HistogramStats {
    /// Lower edge of bin `i`; `bin_edge(bin_count)` is the range max.
    pub fn bin_edge(&self, i: usize) -> f64 {
        bin_edge(&self.range, self.bin_count, i)
    }
}

fn bin_edge(range: &PropertyRange, bins: usize, i: usize) -> f64 {
    if i >= bins {
        return range.max;
    }
    range.min + (range.max - range.min) * (i as f64 / bins as f64)
}

/// Bins `values` over `range`.
///
/// Bins are half-open `[lo, hi)` except the last, which also takes the range
/// max. Values outside the range clamp into the end bins and non-finite values
/// are skipped. A degenerate range puts everything in the last bin.
pub fn histogram(
    property: NeuronProperty,
    values: &[f64],
    range: PropertyRange,
    bin_count: usize,
) -> Result<HistogramStats> {
    if bin_count == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    if !(range.min <= range.max) {
        return Err(Error::Domain(format!(
            "histogram range ({}, {}) is inverted",
            range.min, range.max
        )));
    }
    let mut counts = vec![0u64; bin_count];
    let last = bin_count - 1;
    let width = (range.max - range.min) / bin_count as f64;
    for &v in values.iter().filter(|v| v.is_finite()) {
        let idx = if range.min == range.max {
            last
        } else {
            // first guess from arithmetic, then settle against the exact edges
            let mut idx = ((v - range.min) / width).floor().clamp(0.0, last as f64) as usize;
            while idx > 0 && v < bin_edge(&range, bin_count, idx) {
                idx -= 1;
            }
            while idx < last && v >= bin_edge(&range, bin_count, idx + 1) {
                idx += 1;
            }
            idx
        };
        counts[idx] += 1;
    }
    Ok(HistogramStats {
        property,
        range,
        bin_count,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub area_id: u16,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    /// `min <= whisker_low <= q1 <= median <= q3 <= whisker_high <= max`
    pub fn is_ordered(&self) -> bool {
        self.min <= self.whisker_low
            && self.whisker_low <= self.q1
            && self.q1 <= self.median
            && self.median <= self.q3
            && self.q3 <= self.whisker_high
            && self.whisker_high <= self.max
    }
}

/// Type-7 quantile of already sorted data: linear interpolation at `h = (n - 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let lo_v = sorted[lo];
    lo_v + (h - lo as f64) * (sorted[hi] - lo_v)
}

/// Box summary of one group of values. `None` for an empty group.
pub fn box_stats(area_id: u16, values: &[f64]) -> Option<BoxStats> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let low_fence = q1 - WHISKER_IQR * iqr;
    let high_fence = q3 + WHISKER_IQR * iqr;

    // Whiskers reach the most extreme value inside the fences, but never retreat
    // inside the box (possible when interpolated quartiles sit between a far
    // outlier and its neighbour).
    let inside_low = sorted.iter().copied().find(|v| *v >= low_fence);
    let inside_high = sorted.iter().rev().copied().find(|v| *v <= high_fence);
    let whisker_low = inside_low.map_or(q1, |v| v.min(q1));
    let whisker_high = inside_high.map_or(q3, |v| v.max(q3));
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < low_fence || *v > high_fence)
        .collect();

    Some(BoxStats {
        area_id,
        count: sorted.len(),
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Box summary per area in area-id order; areas with no neurons are omitted.
pub fn box_stats_by_area(values: &[f64], statics: &Statics) -> Vec<BoxStats> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); statics.area_count()];
    for (n, v) in statics.neurons.iter().zip(values) {
        groups[n.area_id as usize].push(*v);
    }
    groups
        .iter()
        .enumerate()
        .filter_map(|(area, vals)| box_stats(area as u16, vals))
        .collect()
}

/// Axes of the parallel-coordinates chart, in display order.
pub const PARALLEL_AXES: [NeuronProperty; 5] = [
    NeuronProperty::Area,
    NeuronProperty::Calcium,
    NeuronProperty::FiredFraction,
    NeuronProperty::GrownAxons,
    NeuronProperty::GrownDendrites,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelCoordsExtract {
    pub axes: [NeuronProperty; 5],
    pub stride: usize,
    pub neuron_ids: Vec<u32>,
    pub rows: Vec<[f64; 5]>,
}

/// Stride that keeps at most `cap` rows out of `n`.
pub fn parallel_stride(n: usize, cap: usize) -> usize {
    if n <= cap {
        1
    } else {
        n.div_ceil(cap)
    }
}

/// Every `stride`-th neuron's values on the five fixed axes.
pub fn parallel_coords(
    frame: &TimestepFrame,
    statics: &Statics,
    cap: usize,
) -> Result<ParallelCoordsExtract> {
    if cap == 0 {
        return Err(Error::Domain("parallel coordinates cap must be at least 1".into()));
    }
    let n = frame.neuron_count();
    let stride = parallel_stride(n, cap);
    let mut neuron_ids = Vec::with_capacity(n / stride + 1);
    let mut rows = Vec::with_capacity(n / stride + 1);
    for i in (0..n).step_by(stride) {
        let mut row = [0.0; 5];
        for (slot, p) in row.iter_mut().zip(PARALLEL_AXES) {
            *slot = frame.property_value(statics, p, i)?;
        }
        neuron_ids.push(i as u32);
        rows.push(row);
    }
    Ok(ParallelCoordsExtract {
        axes: PARALLEL_AXES,
        stride,
        neuron_ids,
        rows,
    })
}

/// Which extent colors (and bins) a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    #[default]
    Global,
    Local,
}

/// Everything the chart page shows for one frame and property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub histogram: HistogramStats,
    pub boxes: Vec<BoxStats>,
    pub parallel: ParallelCoordsExtract,
}

/// Computes all three chart datasets with the histogram spanning `range`.
pub fn frame_stats(
    frame: &TimestepFrame,
    statics: &Statics,
    property: NeuronProperty,
    range: PropertyRange,
    bin_count: usize,
    parallel_cap: usize,
) -> Result<FrameStats> {
    let values = frame.values(statics, property);
    Ok(FrameStats {
        histogram: histogram(property, &values, range, bin_count)?,
        boxes: box_stats_by_area(&values, statics),
        parallel: parallel_coords(frame, statics, parallel_cap)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(values: &[f64], min: f64, max: f64, bins: usize) -> Vec<u64> {
        histogram(NeuronProperty::Calcium, values, PropertyRange { min, max }, bins)
            .unwrap()
            .counts
    }

    #[test]
    fn histogram_edge_rule() {
        assert_eq!(counts(&[0.0, 0.5, 1.0], 0.0, 1.0, 2), vec![1, 2]);
    }

    #[test]
    fn histogram_degenerate_range() {
        assert_eq!(counts(&[3.0, 3.0, 3.0], 3.0, 3.0, 4), vec![0, 0, 0, 3]);
    }

    #[test]
    fn histogram_clamps_and_skips_nan() {
        assert_eq!(counts(&[-5.0, 0.1, 9.0, f64::NAN], 0.0, 1.0, 2), vec![2, 1]);
    }

    #[test]
    fn histogram_zero_bins() {
        let err = histogram(NeuronProperty::Calcium, &[1.0], PropertyRange { min: 0.0, max: 1.0 }, 0);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn quartiles_one_to_nine() {
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let b = box_stats(0, &v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.0, 5.0, 7.0));
        assert!(b.outliers.is_empty());
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 9.0));
    }

    #[test]
    fn single_value_box() {
        let b = box_stats(2, &[4.5]).unwrap();
        for v in [b.min, b.q1, b.median, b.q3, b.max, b.whisker_low, b.whisker_high] {
            assert_eq!(v, 4.5);
        }
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn far_value_is_outlier() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let b = box_stats(0, &v).unwrap();
        // h = 9 * 0.25 = 2.25 -> 3.25; h = 6.75 -> 7.75
        assert_eq!((b.q1, b.q3), (3.25, 7.75));
        assert_eq!(b.q3 - b.q1, 4.5);
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 9.0);
        assert!(b.is_ordered());
    }

    #[test]
    fn whisker_never_enters_box() {
        // q1 interpolates between the outlier 0 and 100
        let b = box_stats(0, &[0.0, 100.0, 100.0, 100.0]).unwrap();
        assert_eq!(b.q1, 75.0);
        assert_eq!(b.outliers, vec![0.0]);
        assert_eq!(b.whisker_low, 75.0);
        assert!(b.is_ordered());
    }

    #[test]
    fn empty_group_has_no_box() {
        assert!(box_stats(0, &[]).is_none());
    }

    #[test]
    fn stride_arithmetic() {
        assert_eq!(parallel_stride(100, 1000), 1);
        assert_eq!(parallel_stride(50_000, 10_000), 5);
        assert_eq!(parallel_stride(50_001, 10_000), 6);
        assert_eq!(parallel_stride(7, 1), 7);
    }
}
