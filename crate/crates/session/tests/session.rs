use proptest::prelude::*;

use scalpview::protocol::{CalibrationPhase, ControlMessage, Frame, ServerMessage, Trace};
use scalpview::session::{frame_blocks, Session, SessionConfig, TRACE_DECIMATION, TRACE_RATE_HZ};
use scalpview_core::inverse::{compute_kernel, spherical_lead_field, Regularization};
use scalpview_core::pipelines::PipelineKind;
use scalpview_core::synth::{generate, EventKind, Scenario, Span};
use scalpview_core::topomap::{colorize, ColorPolicy};
use scalpview_core::{Montage, SampleBlock};

fn recording(duration: f64, seed: u64) -> SampleBlock {
    let mut s = Scenario::new(duration, 256.0, seed);
    if duration >= 12.0 {
        s = s.with_event(EventKind::EyesClosed, 8.0, 12.0);
    }
    generate(&s, &Montage::standard()).unwrap().samples
}

fn auto(span: Span) -> SessionConfig {
    SessionConfig {
        auto_calibration: Some(span),
        grid: 64,
        ..SessionConfig::default()
    }
}

fn frames(msgs: &[ServerMessage]) -> Vec<&Frame> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::Frame(f) => Some(f),
            _ => None,
        })
        .collect()
}

fn traces(msgs: &[ServerMessage]) -> Vec<&Trace> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::Trace(t) => Some(t),
            _ => None,
        })
        .collect()
}

fn run(session: &mut Session, blocks: &[SampleBlock]) -> Vec<ServerMessage> {
    blocks.iter().flat_map(|b| session.process_block(b).unwrap()).collect()
}

#[test]
fn sixty_seconds_give_six_hundred_frames() {
    let m = Montage::standard();
    let rec = recording(60.0, 1);
    let mut s = Session::new(&m, rec.fs, SessionConfig::default()).unwrap();
    let out = run(&mut s, &rec.chunks(100).collect::<Vec<_>>());
    let n = frames(&out).len();
    assert!((599..=601).contains(&n), "{n} frames");
    assert_eq!(s.frames_emitted(), n as u64);
}

#[test]
fn select_takes_effect_on_the_next_frame() {
    let m = Montage::standard();
    let rec = recording(20.0, 2);
    let blocks = frame_blocks(&rec, 10.0);
    let mut s = Session::new(&m, rec.fs, auto(Span { t_start: 0.0, t_end: 6.0 })).unwrap();
    run(&mut s, &blocks[..100]);
    assert_eq!(s.calibration(), CalibrationPhase::Ready);
    s.apply(&ControlMessage::SelectPipeline {
        pipeline: PipelineKind::Vision,
    })
    .unwrap();
    let out = s.process_block(&blocks[100]).unwrap();
    let f = frames(&out)[0];
    assert_eq!(f.pipeline, PipelineKind::Vision);
    assert_eq!(f.highlight, PipelineKind::Vision.highlight_labels(&m));
    assert!(f.ready);
    assert_eq!(f.electrode_values.len(), 32);
}

#[test]
fn gain_is_passed_through_and_leaves_the_grid_alone() {
    let m = Montage::standard();
    let rec = recording(12.0, 3);
    let blocks = frame_blocks(&rec, 10.0);
    let span = Span { t_start: 0.0, t_end: 5.0 };
    let mut a = Session::new(&m, rec.fs, auto(span)).unwrap();
    let mut b = Session::new(&m, rec.fs, auto(span)).unwrap();
    b.apply(&ControlMessage::SetGain { gain: 2.0 }).unwrap();
    assert!(b.apply(&ControlMessage::SetGain { gain: 9.0 }).is_err());
    let (oa, ob) = (run(&mut a, &blocks), run(&mut b, &blocks));
    let (fa, fb) = (frames(&oa), frames(&ob));
    let (x, y) = (fa.last().unwrap(), fb.last().unwrap());
    assert_eq!(y.gain, 2.0);
    assert_eq!(x.grid, y.grid);
    // doubling the gain colours the field as doubled values would at unit gain
    let interp = scalpview_core::topomap::Interpolator::new(&m, 64, 64).unwrap();
    let field = interp.interpolate(&y.electrode_values).unwrap();
    let mut doubled = field.clone();
    doubled.values.iter_mut().for_each(|v| *v *= 2.0);
    let lit: Vec<&str> = y.highlight.iter().map(String::as_str).collect();
    assert_eq!(
        colorize(&field, &lit, &m, &ColorPolicy::signed(2.0).unwrap()).unwrap(),
        colorize(&doubled, &lit, &m, &ColorPolicy::signed(1.0).unwrap()).unwrap()
    );
}

#[test]
fn calibration_state_machine() {
    let m = Montage::standard();
    let rec = recording(12.0, 4);
    let blocks = frame_blocks(&rec, 10.0);
    let mut s = Session::new(&m, rec.fs, SessionConfig::default()).unwrap();
    assert!(s.apply(&ControlMessage::EndCalibration).is_err());
    let out = run(&mut s, &blocks[..10]);
    assert!(frames(&out).iter().all(|f| f.calibration == CalibrationPhase::Idle && !f.ready));

    s.apply(&ControlMessage::StartCalibration).unwrap();
    let out = run(&mut s, &blocks[10..20]);
    for f in frames(&out) {
        assert_eq!(f.calibration, CalibrationPhase::Calibrating);
        assert!(!f.ready && f.electrode_values.iter().all(|&v| v == 0.0));
    }
    // one second is too short; the session keeps calibrating
    assert!(s.apply(&ControlMessage::EndCalibration).is_err());
    assert_eq!(s.calibration(), CalibrationPhase::Calibrating);

    run(&mut s, &blocks[20..50]);
    s.apply(&ControlMessage::EndCalibration).unwrap();
    assert_eq!(s.calibration(), CalibrationPhase::Ready);
    let out = run(&mut s, &blocks[50..60]);
    assert!(frames(&out).iter().all(|f| f.calibration == CalibrationPhase::Ready && f.ready));
}

#[test]
fn traces_run_at_twenty_hertz() {
    let m = Montage::standard();
    let rec = recording(10.0, 5);
    let mut s = Session::new(&m, rec.fs, SessionConfig::default()).unwrap();
    let out = run(&mut s, &rec.chunks(37).collect::<Vec<_>>());
    let tr = traces(&out);
    assert_eq!(tr.len(), (10.0 * TRACE_RATE_HZ) as usize);
    let total: usize = tr.iter().map(|t| t.channels[0].len()).sum();
    assert_eq!(total, rec.len() / TRACE_DECIMATION);
    assert!(tr.iter().all(|t| t.filter.is_none() && t.channels.len() == 32 && t.fs == 128.0));
    // traces tile the decimated stream without gaps, each within one point of 50 ms
    for w in tr.windows(2) {
        let span = w[0].channels[0].len() as f64 / w[0].fs;
        assert!((w[1].t - w[0].t - span).abs() < 1e-9);
        assert!((span - 1.0 / TRACE_RATE_HZ).abs() <= 1.0 / w[0].fs);
    }
    // raw traces are decimated box averages of the input
    let first = (rec.channels[3][0] + rec.channels[3][1]) / 2.0;
    assert_eq!(tr[0].channels[3][0], first as f32);
}

#[test]
fn filtered_traces_follow_the_active_pipeline() {
    let m = Montage::standard();
    let rec = recording(4.0, 6);
    let mut s = Session::new(&m, rec.fs, SessionConfig::default()).unwrap();
    s.apply(&ControlMessage::SelectPipeline {
        pipeline: PipelineKind::Motor,
    })
    .unwrap();
    let out = run(&mut s, &frame_blocks(&rec, 10.0));
    assert!(traces(&out).iter().all(|t| t.filter == Some(PipelineKind::Motor)));
    s.apply(&ControlMessage::ToggleTraces { enabled: false }).unwrap();
    assert!(traces(&s.process_block(&rec.slice(0, 512)).unwrap()).is_empty());
}

#[test]
fn sources_need_a_kernel() {
    let m = Montage::standard();
    let rec = recording(8.0, 7);
    let mut plain = Session::new(&m, rec.fs, SessionConfig::default()).unwrap();
    assert!(plain.apply(&ControlMessage::ToggleSources { enabled: true }).is_err());

    let lead = spherical_lead_field(&m, 200).unwrap();
    let kernel = compute_kernel(&lead, Regularization::Auto).unwrap();
    let mut s = Session::new(&m, rec.fs, auto(Span { t_start: 0.0, t_end: 4.0 }))
        .unwrap()
        .with_kernel(kernel, lead.voxel_positions())
        .unwrap();
    match s.hello() {
        ServerMessage::Hello(h) => {
            assert!(h.lead_field.available);
            assert_eq!(h.lead_field.positions.len(), 200);
        }
        _ => unreachable!(),
    }
    let blocks = frame_blocks(&rec, 10.0);
    assert!(frames(&run(&mut s, &blocks[..10])).iter().all(|f| f.sources.is_none()));
    s.apply(&ControlMessage::ToggleSources { enabled: true }).unwrap();
    let out = run(&mut s, &blocks[10..]);
    let fs = frames(&out);
    assert!(fs.iter().all(|f| f.sources.as_ref().is_some_and(|v| v.len() == 200)));
    assert!(fs.iter().flat_map(|f| f.sources.as_ref().unwrap()).all(|v| v.is_finite()));
}

#[test]
fn hello_describes_the_session() {
    let m = Montage::standard();
    let s = Session::new(&m, 256.0, SessionConfig::default()).unwrap();
    let json = s.hello().to_json();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["type"], "hello");
    assert_eq!(v["version"], 1);
    assert_eq!(v["montage"].as_array().unwrap().len(), 32);
    assert_eq!(v["decimation"], TRACE_DECIMATION);
    assert_eq!(v["frameRateHz"], 10.0);
    assert_eq!(v["pipelines"], serde_json::json!(["raw", "motor", "vision", "meditation"]));
    assert_eq!(v["leadField"]["available"], false);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // The pipeline stamped on each frame is the last selection applied before it.
    #[test]
    fn frames_follow_the_last_selection(
        cuts in prop::collection::vec(1usize..200, 10..40),
        picks in prop::collection::vec(prop::option::of(0usize..4), 10..40),
    ) {
        let m = Montage::standard();
        let rec = recording(16.0, 8);
        let mut s = Session::new(&m, rec.fs, auto(Span { t_start: 0.0, t_end: 4.0 })).unwrap();
        let mut at = 0;
        let mut expected = PipelineKind::Raw;
        for (cut, pick) in cuts.iter().zip(picks.iter().cycle()) {
            if let Some(k) = pick {
                expected = PipelineKind::ALL[*k];
                s.apply(&ControlMessage::SelectPipeline { pipeline: expected }).unwrap();
            }
            let end = (at + cut).min(rec.len());
            for f in frames(&s.process_block(&rec.slice(at, end)).unwrap()) {
                prop_assert_eq!(f.pipeline, expected);
                prop_assert_eq!(&f.highlight, &expected.highlight_labels(&m));
            }
            at = end;
        }
    }
}
