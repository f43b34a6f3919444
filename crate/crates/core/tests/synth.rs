use std::f64::consts::{PI, TAU};

use scalpview_core::montage::geodesic_distance;
use scalpview_core::recording::{load_recording, write_recording};
use scalpview_core::synth::{generate, EventKind, Scenario};
use scalpview_core::Montage;

const FS: f64 = 256.0;

/// Mean power per DFT bin over `[lo, hi]` Hz, by direct summation.
fn band_power(x: &[f64], lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    let mut bins = 0;
    for k in 1..n / 2 {
        let f = k as f64 * FS / n as f64;
        if f < lo || f > hi {
            continue;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let w = TAU * (k * i) as f64 / n as f64;
            re += v * w.cos();
            im -= v * w.sin();
        }
        total += (re * re + im * im) / n as f64;
        bins += 1;
    }
    total / bins as f64
}

/// Analytic-signal phase by zeroing negative and out-of-band bins of a direct DFT.
fn oracle_phase(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = x.len();
    let spectrum: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let f = k as f64 * FS / n as f64;
            if k == 0 || k >= n / 2 || f < lo || f > hi {
                return (0.0, 0.0);
            }
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| {
                let w = TAU * (k * i) as f64 / n as f64;
                (re + v * w.cos(), im - v * w.sin())
            })
        })
        .collect();
    (0..n)
        .map(|i| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, (a, b)) in spectrum.iter().enumerate() {
                let w = TAU * (k * i) as f64 / n as f64;
                re += a * w.cos() - b * w.sin();
                im += a * w.sin() + b * w.cos();
            }
            im.atan2(re)
        })
        .collect()
}

fn oracle_plv(a: &[f64], b: &[f64]) -> f64 {
    let (pa, pb) = (oracle_phase(a, 7.0, 28.0), oracle_phase(b, 7.0, 28.0));
    let n = a.len();
    let (s, e) = (n / 4, 3 * n / 4);
    let (re, im) = (s..e).fold((0.0, 0.0), |(re, im), i| (re + (pa[i] - pb[i]).cos(), im + (pa[i] - pb[i]).sin()));
    (re * re + im * im).sqrt() / (e - s) as f64
}

fn seg(x: &[f64], a: f64, b: f64) -> &[f64] {
    &x[(a * FS) as usize..(b * FS) as usize]
}

#[test]
fn eyes_closed_doubles_occipital_alpha() {
    let m = Montage::standard();
    let s = Scenario::new(20.0, FS, 31).with_event(EventKind::EyesClosed, 10.0, 18.0);
    let out = generate(&s, &m).unwrap();
    let oz = &out.samples.channels[m.index_of("Oz").unwrap()];
    let closed = band_power(seg(oz, 12.0, 16.0), 8.0, 12.0);
    let open = band_power(seg(oz, 2.0, 6.0), 8.0, 12.0);
    assert!(closed >= 2.0 * open, "{closed} vs {open}");
}

#[test]
fn locked_and_unlocked_meditation_separate() {
    let m = Montage::standard();
    let s = Scenario::new(24.0, FS, 5)
        .with_event(EventKind::MeditationLock, 2.0, 11.0)
        .with_event(EventKind::MeditationUnlock, 13.0, 22.0);
    let out = generate(&s, &m).unwrap();
    let afz = &out.samples.channels[m.index_of("AFz").unwrap()];
    let pz = &out.samples.channels[m.index_of("Pz").unwrap()];
    let mean_plv = |a: f64| {
        let starts: Vec<f64> = (0..7).map(|k| a + k as f64).collect();
        starts.iter().map(|&t| oracle_plv(seg(afz, t, t + 1.0), seg(pz, t, t + 1.0))).sum::<f64>() / starts.len() as f64
    };
    let (locked, unlocked) = (mean_plv(3.0), mean_plv(14.0));
    assert!(locked - unlocked >= 0.5, "{locked} vs {unlocked}");
    assert!(locked >= 0.8 && unlocked <= 0.3, "{locked} vs {unlocked}");
}

#[test]
fn background_is_pink() {
    let m = Montage::standard();
    let out = generate(&Scenario::new(10.0, FS, 17), &m).unwrap();
    // far from every generator
    for label in ["T7", "T8", "F7", "F8"] {
        let x = &out.samples.channels[m.index_of(label).unwrap()];
        // periodogram averaged over five 2 s segments, fitted on log-log axes over 2–60 Hz
        let pts: Vec<(f64, f64)> = (4..=120)
            .map(|k| {
                let f = k as f64 * 0.5;
                let p: f64 = (0..5).map(|j| band_power(seg(x, 2.0 * j as f64, 2.0 * j as f64 + 2.0), f, f)).sum();
                (f.ln(), p.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
        assert!((0.8..=1.2).contains(&-slope), "{label}: exponent {}", -slope);
    }
}

#[test]
fn events_stay_local() {
    let m = Montage::standard();
    let cases = [
        (EventKind::MoveRightHand, &["C3"][..], (16.0, 24.0)),
        (EventKind::EyesClosed, &["Oz"], (8.0, 12.0)),
        (EventKind::MeditationLock, &["AFz", "Pz"], (7.0, 28.0)),
        (EventKind::MeditationUnlock, &["AFz", "Pz"], (7.0, 28.0)),
        (EventKind::Blink, &["Fp1", "Fp2"], (1.0, 10.0)),
    ];
    for (kind, foci, (lo, hi)) in cases {
        let base = Scenario::new(8.0, FS, 3);
        let end = if kind == EventKind::Blink { 3.3 } else { 7.0 };
        let with = base.clone().with_event(kind, 3.0, end);
        let (a, b) = (generate(&base, &m).unwrap(), generate(&with, &m).unwrap());
        let foci: Vec<[f64; 3]> = foci.iter().map(|l| m.electrode(l).unwrap().pos).collect();
        for (i, e) in m.electrodes().iter().enumerate() {
            if foci.iter().any(|&f| geodesic_distance(e.pos, f) <= PI / 2.0) {
                continue;
            }
            let p0 = band_power(seg(&a.samples.channels[i], 3.0, 7.0), lo, hi);
            let p1 = band_power(seg(&b.samples.channels[i], 3.0, 7.0), lo, hi);
            assert!((p1 / p0 - 1.0).abs() < 0.1, "{kind:?} changed {} by {}", e.name, p1 / p0);
        }
    }
}

#[test]
fn recording_round_trip() {
    let m = Montage::standard();
    let s = Scenario::demo();
    let out = generate(&s, &m).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.csv");
    write_recording(&path, &out.samples, &m, Some(&out.truth)).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    let labels: Vec<&str> = std::iter::once("time").chain(m.labels()).collect();
    assert_eq!(header, labels.join(","));
    let rec = load_recording(&path, &m).unwrap();
    assert_eq!(rec.samples.fs, s.fs);
    assert_eq!(rec.markers.unwrap().events.len(), s.events.len());
    for (x, y) in rec.samples.channels.iter().flatten().zip(out.samples.channels.iter().flatten()) {
        assert_eq!(*x as f32, *y as f32);
    }
}

#[test]
fn bundled_demo_file_matches_the_builtin() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/demo.json");
    let s = Scenario::load(std::path::Path::new(path)).unwrap();
    assert_eq!(s, Scenario::demo());
}

#[test]
fn schema_lists_every_event_kind() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/scenario.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let kinds: Vec<EventKind> = serde_json::from_value(schema["$defs"]["event"]["properties"]["kind"]["enum"].clone()).unwrap();
    assert_eq!(kinds.len(), 7);
    for k in kinds {
        let s = Scenario::new(2.0, 256.0, 1).with_event(k, 0.5, 1.0);
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}
