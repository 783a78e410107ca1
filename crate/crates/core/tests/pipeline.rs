use dploc::localizer::{DetectionConfig, DetectionMode};
use dploc::pipeline::{evaluate, localize, run_trial, EvalConfig, MicPair, PipelineConfig};
use dploc::scene::{synth_scene, SceneSpec};
use dploc::signal::AudioClip;
use dploc::Error;

fn anechoic(direction: f64, seed: u64) -> SceneSpec {
    let mut spec = SceneSpec::new(&[direction], seed);
    spec.room.t60_s = 0.0;
    spec.snr_db = None;
    spec.duration_s = 2.0;
    spec.sources[0].offset_s = 2.0;
    spec
}

#[test]
fn one_source_anechoic_detected_exactly() {
    for (direction, seed) in [(-55.0, 1), (0.0, 2), (35.0, 3), (80.0, 4)] {
        let scene = synth_scene(&anechoic(direction, seed)).unwrap();
        let pair = MicPair::from_steering(0, 1, &scene.steering).unwrap();
        let mut cfg = PipelineConfig::for_t60(0.0);
        cfg.detection = DetectionConfig {
            mode: DetectionMode::SemiBlind,
            sources: 1,
            ..DetectionConfig::default()
        };
        let out = localize(&scene.mixture, &[pair], &cfg, Some(&[direction])).unwrap();
        assert_eq!(out.result.detected(), vec![direction]);
        let m = out.result.score.unwrap().metrics;
        assert_eq!((m.successes, m.mae_deg), (1, Some(0.0)));
    }
}

#[test]
fn wrong_sample_rate_rejected() {
    let scene = synth_scene(&anechoic(10.0, 5)).unwrap();
    let pair = MicPair::from_steering(0, 1, &scene.steering).unwrap();
    let clip = AudioClip::new(
        vec![
            scene.mixture.channel(0).to_vec(),
            scene.mixture.channel(1).to_vec(),
        ],
        8_000,
    )
    .unwrap();
    let err = localize(&clip, &[pair], &PipelineConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::SampleRate { got: 8_000, .. }), "{err}");
}

#[test]
fn silent_input_has_no_features() {
    let scene = synth_scene(&anechoic(10.0, 5)).unwrap();
    let pair = MicPair::from_steering(0, 1, &scene.steering).unwrap();
    let clip = AudioClip::new(vec![vec![0.0; 24_000]; 2], 16_000).unwrap();
    let err = localize(&clip, &[pair], &PipelineConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::NoFeatures));
    assert_eq!(err.to_string(), "no reliable DP-RTF features");
}

#[test]
fn invalid_pair_rejected() {
    let scene = synth_scene(&anechoic(10.0, 5)).unwrap();
    let pair = MicPair::from_steering(0, 2, &scene.steering).unwrap();
    assert!(localize(&scene.mixture, &[pair], &PipelineConfig::default(), None).is_err());
}

fn small_eval(trials: usize) -> EvalConfig {
    EvalConfig {
        trials,
        seed: 40,
        duration_s: 2.0,
        snr_db: Some(20.0),
        ..EvalConfig::default()
    }
}

#[test]
fn single_trial_aggregate_equals_trial() {
    let eval = small_eval(1);
    let cfg = PipelineConfig::default();
    let report = evaluate(&eval, &cfg).unwrap();
    let trial = run_trial(0, &eval, &cfg).unwrap();
    assert_eq!(report.trials, vec![trial.clone()]);
    for (row, mode) in [
        (&report.blind, DetectionMode::Blind),
        (&report.semi_blind, DetectionMode::SemiBlind),
    ] {
        let m = trial.score(mode).metrics;
        assert_eq!(row.md_rate, m.md_rate);
        assert_eq!(row.fa_rate, m.fa_rate);
        assert_eq!(row.outlier_rate, m.outlier_rate);
        assert_eq!(row.mae_deg, m.mae_deg);
    }
}

#[test]
fn evaluation_is_deterministic_and_bounded() {
    let eval = small_eval(4);
    let cfg = PipelineConfig::default();
    let a = evaluate(&eval, &cfg).unwrap();
    let b = evaluate(&eval, &cfg).unwrap();
    assert_eq!(a, b);
    for t in &a.trials {
        assert_eq!(t.seed, eval.seed + t.trial as u64);
        let semi = t.score(DetectionMode::SemiBlind).metrics;
        let blind = t.score(DetectionMode::Blind).metrics;
        assert!(semi.detections <= eval.sources);
        // Every semi-blind false alarm is paired with a missed source.
        let semi_fa = semi.detections - semi.successes;
        let blind_fa = blind.detections - blind.successes;
        assert!(semi_fa <= blind_fa + (semi.truths - semi.successes));
        assert!(semi_fa <= semi.truths - semi.successes);
    }
}
