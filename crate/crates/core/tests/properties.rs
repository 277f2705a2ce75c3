use proptest::prelude::*;

use plastiscope_core::aggregate::{diff_color_scale, diff_frames, global_range, local_range};
use plastiscope_core::stats::{box_stats, histogram, parallel_stride};
use plastiscope_core::store::FrameStore;
use plastiscope_core::{
    AreaConnectivity, ConnectivityStatus, FrameColumns, NeuronProperty, PropertyRange, Scenario,
    TimestepFrame,
};

const N: usize = 12;
const AREAS: usize = 3;

fn frame_strategy(timestep: u32) -> impl Strategy<Value = TimestepFrame> {
    (
        proptest::collection::vec((0f32..1.0, -1f32..1.0, any::<bool>(), 0f32..1.0, 0f32..5.0, 0f32..5.0, 0u32..40, 0u32..40), N),
        proptest::collection::vec(0u32..50, AREAS * AREAS),
        any::<bool>(),
    )
        .prop_map(move |(rows, conn, missing)| {
            let mut c = FrameColumns::with_capacity(N);
            for (ca, delta, fired, frac, ax, de, so, si) in rows {
                c.calcium.push(ca);
                c.calcium_target_delta.push(delta);
                c.fired.push(fired);
                c.fired_fraction.push(frac);
                c.grown_axons.push(ax);
                c.grown_dendrites.push(de);
                c.synapses_out.push(so);
                c.synapses_in.push(si);
            }
            let triplets = conn
                .iter()
                .enumerate()
                .map(|(i, v)| ((i / AREAS) as u16, (i % AREAS) as u16, *v));
            TimestepFrame {
                scenario: Scenario::Learning,
                timestep,
                columns: c,
                connectivity: AreaConnectivity::from_triplets(AREAS, triplets).unwrap(),
                connectivity_status: if missing {
                    ConnectivityStatus::Missing
                } else {
                    ConnectivityStatus::Present
                },
            }
        })
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    // interpolate between order statistics at 1-based rank 1 + (n - 1) p
    let rank = 1.0 + (sorted.len() - 1) as f64 * p;
    let below = rank.floor();
    let frac = rank - below;
    let lo = sorted[below as usize - 1];
    let hi = sorted[(rank.ceil() as usize - 1).min(sorted.len() - 1)];
    lo + frac * (hi - lo)
}

proptest! {
    #[test]
    fn diff_is_antisymmetric(a in frame_strategy(1), b in frame_strategy(2)) {
        let ab = diff_frames(&a, &b).unwrap();
        let ba = diff_frames(&b, &a).unwrap();
        let aa = diff_frames(&a, &a).unwrap();
        for p in NeuronProperty::ALL {
            let x = ab.column_deltas.values(p);
            let y = ba.column_deltas.values(p);
            prop_assert!(x.iter().zip(&y).all(|(u, v)| *u == -*v));
            prop_assert!(aa.column_deltas.values(p).iter().all(|v| *v == 0.0));
            let s = diff_color_scale(&x);
            prop_assert_eq!(s.min, -s.max);
            prop_assert!(x.iter().all(|v| s.min <= *v && *v <= s.max));
        }
        for s in 0..AREAS {
            for t in 0..AREAS {
                let want = b.connectivity.get(s, t) as i64 - a.connectivity.get(s, t) as i64;
                prop_assert_eq!(ab.connectivity_delta(s, t), want);
                prop_assert_eq!(ba.connectivity_delta(s, t), -want);
            }
        }
    }

    #[test]
    fn local_ranges_sit_inside_the_global_range(frames in proptest::collection::vec(frame_strategy(0), 1..6)) {
        for p in NeuronProperty::COLUMNS {
            let global = global_range(frames.iter(), p).unwrap();
            for f in &frames {
                prop_assert!(global.contains(&local_range(f, p).unwrap()));
            }
        }
    }

    #[test]
    fn histogram_keeps_every_value(
        values in proptest::collection::vec(-1e6f64..1e6, 1..300),
        bins in 1usize..50,
        pad in 0f64..10.0,
    ) {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - pad;
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
        let h = histogram(NeuronProperty::Calcium, &values, PropertyRange { min: lo, max: hi }, bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), values.len() as u64);
        // each value lands in the bin whose edges bracket it
        for v in &values {
            let i = (0..bins).find(|i| *v >= h.bin_edge(*i) && (*v < h.bin_edge(i + 1) || i + 1 == bins)).unwrap();
            prop_assert!(h.counts[i] > 0);
        }
    }

    #[test]
    fn quartiles_match_type7(values in proptest::collection::vec(-1e3f64..1e3, 1..200)) {
        let b = box_stats(0, &values).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, p) in [(b.q1, 0.25), (b.median, 0.5), (b.q3, 0.75)] {
            prop_assert!((got - type7(&sorted, p)).abs() <= 1e-9 * got.abs().max(1.0));
        }
        prop_assert!(b.is_ordered());
        let fence = 1.5 * (b.q3 - b.q1);
        for o in &b.outliers {
            prop_assert!(*o < b.q1 - fence || *o > b.q3 + fence);
        }
        prop_assert_eq!(b.count, values.len());
    }

    #[test]
    fn stride_caps_rows(n in 0usize..200_000, cap in 1usize..20_000) {
        let stride = parallel_stride(n, cap);
        prop_assert!(n.div_ceil(stride) <= cap.max(1));
        if n <= cap {
            prop_assert_eq!(stride, 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn store_round_trips(frame in frame_strategy(7)) {
        let dir = tempfile::tempdir().unwrap();
        let store = FrameStore::new(dir.path());
        let loc = store.write_frame(&frame).unwrap();
        prop_assert!(loc.stored_bytes().unwrap() > 0);
        prop_assert_eq!(store.read_frame(frame.key()).unwrap(), frame);
    }
}
