//! End-to-end propagation on synthetic scenes with analytic flows.

mod common;

use common::synthetic::{self, OCCLUSION_FRAMES, OCCLUSION_REAPPEAR, TRANSLATING_FRAMES};
use flowseg::eval::{boundary_f, default_tolerance, jaccard};
use flowseg::media_io::{LambdaMode, RunConfig};
use flowseg::pipeline::{segment_sequence, SequenceSpec};

fn fixed(lambda: f64) -> RunConfig {
    RunConfig { lambda_mode: LambdaMode::Fixed(lambda), ..RunConfig::default() }
}

#[test]
fn translating_square_is_tracked() {
    let scene = synthetic::translating_square();
    let seq = scene.sequence(TRANSLATING_FRAMES);
    let run = segment_sequence(&seq, &RunConfig::default()).unwrap();
    assert_eq!(run.masks.len(), TRANSLATING_FRAMES);
    assert_eq!(run.masks[0], seq.annotation);
    let tol = default_tolerance(seq.annotation.dims());
    for (t, truth) in scene.truths(TRANSLATING_FRAMES).iter().enumerate().skip(1) {
        assert!(jaccard(&run.masks[t], truth, 1).unwrap() >= 0.95, "frame {t}");
        assert!(boundary_f(&run.masks[t], truth, 1, tol).unwrap() >= 0.90, "frame {t}");
    }
}

#[test]
fn truncated_run_is_a_prefix_of_the_full_run() {
    let scene = synthetic::translating_square();
    let seq = scene.sequence(6);
    let config = fixed(10.0);
    let full = segment_sequence(&seq, &config).unwrap();
    for k in 2..6 {
        let part = segment_sequence(&seq.truncated(k).unwrap(), &config).unwrap();
        assert_eq!(part.masks[..], full.masks[..k], "prefix of length {k}");
    }
}

#[test]
fn removing_retrieval_never_helps_after_occlusion() {
    let scene = synthetic::occlusion();
    let seq = scene.sequence(OCCLUSION_FRAMES);
    let truths = scene.truths(OCCLUSION_FRAMES);
    let with = segment_sequence(&seq, &fixed(20.0)).unwrap();
    let without = segment_sequence(&seq, &RunConfig { lor_enabled: false, ..fixed(20.0) }).unwrap();
    for t in OCCLUSION_REAPPEAR..OCCLUSION_FRAMES {
        let a = jaccard(&with.masks[t], &truths[t], 1).unwrap();
        let b = jaccard(&without.masks[t], &truths[t], 1).unwrap();
        assert!(b <= a, "frame {t}: without {b} > with {a}");
    }
    assert!(with.steps[OCCLUSION_REAPPEAR - 1].retrieved > 0);
    assert!(without.steps.iter().all(|s| s.retrieved == 0));
}

#[test]
fn sequence_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synthetic::translating_square();
    let path = synthetic::write_scene(&scene, 4, dir.path(), "lambda_mode = fixed(10)\n");
    let spec = SequenceSpec::from_file(&path).unwrap();
    assert_eq!(spec.name, "scene");
    assert_eq!(spec.frames.len(), 4);
    assert_eq!(spec.config.lambda_mode, LambdaMode::Fixed(10.0));

    let loaded = spec.load().unwrap();
    let in_memory = scene.sequence(4);
    assert_eq!(loaded.annotation, in_memory.annotation);
    assert_eq!(loaded.backward, in_memory.backward);
    let from_disk = segment_sequence(&loaded, &spec.config).unwrap();
    let direct = segment_sequence(&in_memory, &spec.config).unwrap();
    assert_eq!(from_disk.masks, direct.masks);
}

#[test]
fn missing_flow_file_is_a_sequence_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = synthetic::write_scene(&synthetic::translating_square(), 3, dir.path(), "");
    std::fs::remove_file(dir.path().join("bw_001.flo")).unwrap();
    let err = SequenceSpec::from_file(&path).unwrap_err();
    assert!(matches!(err, flowseg::Error::SequenceInconsistency(_)), "{err}");
}
