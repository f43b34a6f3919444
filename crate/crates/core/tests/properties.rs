use std::sync::OnceLock;

use proptest::prelude::*;
use scalpview_core::dsp::{laplacian, plv, BandpassSpec, StreamingFilter};
use scalpview_core::inverse::{compute_kernel, random_lead_field, Regularization};
use scalpview_core::montage::geodesic_distance;
use scalpview_core::pipelines::{
    render, Baseline, Engine, EngineConfig, FeatureFrame, Features, PipelineKind, QuantityStats,
};
use scalpview_core::topomap::{ColorPolicy, Interpolator};
use scalpview_core::{Montage, SampleBlock};

fn montage() -> &'static Montage {
    static M: OnceLock<Montage> = OnceLock::new();
    M.get_or_init(Montage::standard)
}

fn grid() -> &'static Interpolator {
    static G: OnceLock<Interpolator> = OnceLock::new();
    G.get_or_init(|| Interpolator::new(montage(), 48, 48).unwrap())
}

fn signal(len: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..32)
        .map(|c| {
            (0..len)
                .map(|i| {
                    let k = (i as u64 * 2654435761 + c as u64 * 40503 + seed) % 10007;
                    k as f64 / 100.0 - 50.0 + 20.0 * ((i + c) as f64 * 0.31).sin()
                })
                .collect()
        })
        .collect()
}

fn cuts(len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..len, 0..12).prop_map(move |mut v| {
        v.sort_unstable();
        v.dedup();
        v.push(len);
        v
    })
}

fn partition(block: &SampleBlock, ends: &[usize]) -> Vec<SampleBlock> {
    let mut start = 0;
    ends.iter()
        .map(|&end| {
            let b = block.slice(start, end);
            start = end;
            b
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filter_output_ignores_block_boundaries(ends in cuts(900), seed in 0u64..1000) {
        let block = SampleBlock::new(0.0, 256.0, signal(900, seed)).unwrap();
        let spec = BandpassSpec::new(3.0, 26.0, 4, 256.0).unwrap();
        let whole = StreamingFilter::from_spec(spec, 32).unwrap().process_block(&block).unwrap();
        let mut f = StreamingFilter::from_spec(spec, 32).unwrap();
        let mut pieces = vec![Vec::new(); 32];
        for b in partition(&block, &ends) {
            for (acc, ch) in pieces.iter_mut().zip(f.process_block(&b).unwrap().channels) {
                acc.extend(ch);
            }
        }
        prop_assert_eq!(pieces, whole.channels);
    }

    #[test]
    fn engine_frames_ignore_block_boundaries(ends in cuts(700), seed in 0u64..1000) {
        let block = SampleBlock::new(3.0, 256.0, signal(700, seed)).unwrap();
        let run = |blocks: Vec<SampleBlock>| -> Vec<FeatureFrame> {
            let mut e = Engine::new(montage(), 256.0, EngineConfig::default()).unwrap();
            blocks.iter().flat_map(|b| e.push_block(b).unwrap().frames).collect()
        };
        let whole = run(vec![block.clone()]);
        prop_assert_eq!(whole.len(), 27);
        prop_assert_eq!(run(partition(&block, &ends)), whole);
    }

    #[test]
    fn plv_is_bounded_and_shift_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..300),
        shift in -20.0f64..20.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let p = plv(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
        prop_assert!((plv(&a2, &b2).unwrap() - p).abs() < 1e-9);
        prop_assert!((plv(&b, &a).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_linear_and_bounded(
        x in prop::collection::vec(-100.0f64..100.0, 32),
        y in prop::collection::vec(-100.0f64..100.0, 32),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let g = grid();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fc) = (g.interpolate(&x).unwrap(), g.interpolate(&y).unwrap(), g.interpolate(&combo).unwrap());
        let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for p in 0..fc.values.len() {
            prop_assert!((fc.values[p] - (a * fx.values[p] + b * fy.values[p])).abs() < 1e-9);
            if fx.mask[p] {
                prop_assert!(fx.values[p] >= lo - 1e-9 && fx.values[p] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn nearest_partition_matches_brute_force(col in 0usize..48, row in 0usize..48) {
        let g = grid();
        let p = row * 48 + col;
        let dir = scalpview_core::topomap::pixel_direction(col, row, 48, 48);
        prop_assert_eq!(dir.is_some(), g.mask()[p]);
        if let Some(d) = dir {
            let best = montage()
                .electrodes()
                .iter()
                .enumerate()
                .min_by(|a, b| geodesic_distance(d, a.1.pos).total_cmp(&geodesic_distance(d, b.1.pos)))
                .unwrap()
                .0;
            prop_assert_eq!(g.nearest_electrode(p), Some(best));
        }
    }

    #[test]
    fn laplacian_ignores_common_offset(x in prop::collection::vec(-100.0f64..100.0, 32), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for center in ["C3", "Cz", "C4"] {
            let d = laplacian(&x, center, montage()).unwrap() - laplacian(&shifted, center, montage()).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn rendered_values_stay_in_range(
        wide in prop::collection::vec(0.0f64..1e4, 32),
        motor in prop::collection::vec(0.0f64..1e4, 3),
        alpha in prop::collection::vec(0.0f64..1e4, 8),
        plv_value in -0.5f64..1.5,
        mean in 0.0f64..1e3,
        std in 1e-9f64..1e3,
    ) {
        let stats = |n: usize| QuantityStats { mean: vec![mean; n], std: vec![std; n] };
        let baseline = Baseline {
            wide: stats(32), motor: stats(3), alpha: stats(8), plv: None, sources: None, sample_count: 30,
        };
        let features = Features { wide, motor, alpha, plv: Some(plv_value), sources: None };
        let frame = FeatureFrame {
            t: 1.0, sample_index: 256, features: features.clone(), delayed: Some((0.5, features)),
            blink: false, blink_onsets: vec![],
        };
        for kind in PipelineKind::ALL {
            let out = render(kind, &frame, &baseline, montage()).unwrap();
            prop_assert_eq!(out.values.len(), 32);
            prop_assert!(out.values.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
            prop_assert_eq!(out.highlight, kind.highlight_labels(montage()));
            if kind == PipelineKind::Meditation {
                for l in ["AFz", "Pz"] {
                    prop_assert!((0.0..=1.0).contains(&out.values[montage().index_of(l).unwrap()]));
                }
            }
        }
    }

    #[test]
    fn colors_saturate_with_gain(x in -1.0f64..1.0, gain in 0.01f64..8.0) {
        let p = ColorPolicy::signed(gain).unwrap();
        prop_assert_eq!(p.highlight_map.lookup(gain * x), p.highlight_map.lookup((gain * x).clamp(-1.0, 1.0)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_sources_are_localized(seed in 0u64..10_000, voxel in 0usize..120, amp in 0.01f64..100.0) {
        let lead = random_lead_field(32, 120, seed);
        let kernel = compute_kernel(&lead, Regularization::Fixed(0.0)).unwrap();
        let x: Vec<f64> = lead.matrix().column(voxel).iter().map(|g| amp * g + 3.0).collect();
        let s = kernel.power(&x).unwrap();
        let best = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(best, voxel);
    }
}
