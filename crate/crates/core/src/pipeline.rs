//! End-to-end composition: spectrograms, features, likelihood matrix,
//! weight estimation, peak picking, and batch evaluation over simulated trials.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgmm::{build_prob_matrix, predict_features, CandidateGrid, CgmmConfig, SteeringTable};
use crate::error::{Error, Result};
use crate::features::{extract_features, CtfConfig, FeatureSet};
use crate::localizer::{
    localize_weights, DetectionConfig, DetectionMode, LocalizationResult, Score,
};
use crate::scalar::{to_f64, Real};
use crate::scene::{random_directions, synth_scene, RoomConfig, SceneSpec, MIN_SEPARATION_DEG};
use crate::signal::{stft_clip, AudioClip, StftConfig};
use crate::solver::{ep_mle, write_trace_csv, EpMleReport, SolverConfig};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub ctf: CtfConfig,
    pub cgmm: CgmmConfig,
    pub solver: SolverConfig,
    pub detection: DetectionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_t60(0.3)
    }
}

impl PipelineConfig {
    /// Defaults with the CTF length derived from the reverberation time.
    pub fn for_t60(t60_s: f64) -> Self {
        let stft = StftConfig::default();
        Self {
            ctf: CtfConfig::for_t60(t60_s, stft.hop as f64 / SAMPLE_RATE as f64),
            stft,
            cgmm: CgmmConfig::default(),
            solver: SolverConfig::default(),
            detection: DetectionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.ctf.validate()?;
        self.cgmm.validate()?;
        self.solver.validate()?;
        self.detection.validate()
    }
}

/// A microphone pair: channel indices of the reference (A) and target (B)
/// microphones and the predicted features of its candidate directions.
#[derive(Debug, Clone)]
pub struct MicPair<T> {
    pub a: usize,
    pub b: usize,
    pub grid: CandidateGrid<T>,
}

impl<T: Real> MicPair<T> {
    pub fn from_steering(a: usize, b: usize, table: &SteeringTable) -> Result<Self> {
        Ok(Self {
            a,
            b,
            grid: predict_features(table)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LocalizeOutput<T> {
    pub directions: Vec<f64>,
    pub features: Vec<FeatureSet<T>>,
    pub report: EpMleReport<T>,
    pub result: LocalizationResult,
}

impl<T: Real> LocalizeOutput<T> {
    pub fn weights(&self) -> Vec<f64> {
        self.report
            .alpha
            .as_slice()
            .iter()
            .map(|&a| to_f64(a))
            .collect()
    }

    pub fn observation_count(&self) -> usize {
        self.features.iter().map(FeatureSet::len).sum()
    }

    /// Re-runs peak picking on the same weights with another detection config.
    pub fn detect(&self, cfg: &DetectionConfig, truth: Option<&[f64]>) -> LocalizationResult {
        localize_weights(self.report.alpha.as_slice(), &self.directions, truth, cfg)
    }
}

/// Features of every pair, stacked likelihoods, EP-MLE weights and detection.
pub fn localize<T: Real>(
    clip: &AudioClip<T>,
    pairs: &[MicPair<T>],
    cfg: &PipelineConfig,
    truth: Option<&[f64]>,
) -> Result<LocalizeOutput<T>> {
    cfg.validate()?;
    if clip.sample_rate() != SAMPLE_RATE {
        return Err(Error::SampleRate {
            got: clip.sample_rate(),
            expected: SAMPLE_RATE,
        });
    }
    let Some(first) = pairs.first() else {
        return Err(Error::Config("no microphone pair given".into()));
    };
    for p in pairs {
        let n = clip.channel_count();
        if p.a >= n || p.b >= n || p.a == p.b {
            return Err(Error::Config(format!(
                "pair ({}, {}) invalid for {n} channels",
                p.a, p.b
            )));
        }
    }
    let specs = stft_clip(clip, &cfg.stft)?;
    let features = pairs
        .iter()
        .map(|p| extract_features(&specs[p.a], &specs[p.b], &cfg.ctf))
        .collect::<Result<Vec<_>>>()?;
    if features.iter().all(FeatureSet::is_empty) {
        return Err(Error::NoFeatures);
    }
    let stacked: Vec<_> = features
        .iter()
        .zip(pairs)
        .map(|(f, p)| (f, &p.grid))
        .collect();
    let g = build_prob_matrix(&stacked, &cfg.cgmm)?;
    let report = ep_mle(&g, &cfg.solver)?;
    let directions = first.grid.directions().to_vec();
    let result = localize_weights(report.alpha.as_slice(), &directions, truth, &cfg.detection);
    Ok(LocalizeOutput {
        directions,
        features,
        report,
        result,
    })
}

/// Result document written as `result.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultDocument<'a, C: Serialize> {
    pub config: &'a C,
    pub directions_deg: &'a [f64],
    pub weights: Vec<f64>,
    pub basic_weights: Vec<f64>,
    pub result: &'a LocalizationResult,
    pub observations: Vec<usize>,
    pub objective: Vec<f64>,
    pub ccp_iterations: usize,
    pub pdipm_iterations: usize,
}

pub fn write_weights_csv(directions: &[f64], weights: &[f64], mut out: impl Write) -> Result<()> {
    writeln!(out, "azimuth_deg,alpha")?;
    for (d, a) in directions.iter().zip(weights) {
        writeln!(out, "{d},{a:.12e}")?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Writes `weights.csv`, `result.json` and `trace.csv`, plus `features.csv`
/// (first pair) or `features_<i>.csv` when `dump_features` is set.
pub fn write_localize_outputs<T: Real, C: Serialize>(
    dir: impl AsRef<Path>,
    out: &LocalizeOutput<T>,
    config: &C,
    dump_features: bool,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let weights = out.weights();
    write_weights_csv(&out.directions, &weights, create(&dir.join("weights.csv"))?)?;
    let doc = ResultDocument {
        config,
        directions_deg: &out.directions,
        weights,
        basic_weights: out
            .report
            .basic
            .as_slice()
            .iter()
            .map(|&a| to_f64(a))
            .collect(),
        result: &out.result,
        observations: out.features.iter().map(FeatureSet::len).collect(),
        objective: out.report.objective.iter().map(|&v| to_f64(v)).collect(),
        ccp_iterations: out.report.ccp_iterations,
        pdipm_iterations: out.report.pdipm_iterations,
    };
    let mut f = create(&dir.join("result.json"))?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f)?;
    write_trace_csv(&out.report.trace, create(&dir.join("trace.csv"))?)?;
    if dump_features {
        for (i, set) in out.features.iter().enumerate() {
            let name = if i == 0 {
                "features.csv".to_string()
            } else {
                format!("features_{i}.csv")
            };
            set.write_csv(create(&dir.join(name))?)?;
        }
    }
    Ok(())
}

/// Batch evaluation over seeded simulated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub trials: usize,
    pub seed: u64,
    pub sources: usize,
    pub snr_db: Option<f64>,
    pub duration_s: f64,
    pub room: RoomConfig,
    pub grid: Vec<f64>,
    pub noise_direction_deg: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let spec = SceneSpec::new(&[], 0);
        Self {
            trials: 20,
            seed: 0,
            sources: 2,
            snr_db: spec.snr_db,
            duration_s: spec.duration_s,
            room: spec.room,
            grid: spec.grid,
            noise_direction_deg: spec.noise_direction_deg,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trial count must be >= 1".into()));
        }
        if self.sources == 0 {
            return Err(Error::Config("source count must be >= 1".into()));
        }
        Ok(())
    }

    /// Scene of trial `index`, seeded with `seed + index`.
    pub fn scene_spec(&self, index: usize) -> Result<SceneSpec> {
        let seed = self.seed.wrapping_add(index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let directions = random_directions(&self.grid, self.sources, MIN_SEPARATION_DEG, &mut rng)?;
        let mut spec = SceneSpec::new(&directions, seed);
        spec.grid = self.grid.clone();
        spec.room = self.room;
        spec.snr_db = self.snr_db;
        spec.duration_s = self.duration_s;
        for s in &mut spec.sources {
            s.offset_s = self.duration_s;
        }
        spec.noise_direction_deg = self.noise_direction_deg;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub truth_deg: Vec<f64>,
    pub blind: LocalizationResult,
    pub semi_blind: LocalizationResult,
    pub observations: usize,
    /// Pipeline error; the trial then counts as missing every source.
    pub error: Option<String>,
}

impl TrialOutcome {
    pub fn result(&self, mode: DetectionMode) -> &LocalizationResult {
        match mode {
            DetectionMode::Blind => &self.blind,
            DetectionMode::SemiBlind => &self.semi_blind,
        }
    }

    pub fn score(&self, mode: DetectionMode) -> &Score {
        self.result(mode)
            .score
            .as_ref()
            .expect("trials always carry a truth")
    }
}

fn failed_result(mode: DetectionMode, truth: &[f64], cfg: &DetectionConfig) -> LocalizationResult {
    let cfg = DetectionConfig { mode, ..*cfg };
    LocalizationResult {
        mode,
        selection: crate::localizer::PeakSelection {
            peaks: Vec::new(),
            degenerate: true,
            short: mode == DetectionMode::SemiBlind,
        },
        score: Some(crate::localizer::match_and_score(&[], truth, &cfg)),
    }
}

/// Simulates and localizes one trial; blind and semi-blind detection share
/// the same weight estimate.
pub fn run_trial(index: usize, eval: &EvalConfig, cfg: &PipelineConfig) -> Result<TrialOutcome> {
    let spec = eval.scene_spec(index)?;
    let truth: Vec<f64> = spec.sources.iter().map(|s| s.direction_deg).collect();
    let blind_cfg = DetectionConfig {
        mode: DetectionMode::Blind,
        ..cfg.detection
    };
    let semi_cfg = DetectionConfig {
        mode: DetectionMode::SemiBlind,
        sources: eval.sources,
        ..cfg.detection
    };
    let scene = synth_scene(&spec)?;
    let pair = MicPair::<f64>::from_steering(0, 1, &scene.steering)?;
    let outcome = localize(&scene.mixture, &[pair], cfg, Some(&truth));
    Ok(match outcome {
        Ok(out) => TrialOutcome {
            trial: index,
            seed: spec.seed,
            blind: out.detect(&blind_cfg, Some(&truth)),
            semi_blind: out.detect(&semi_cfg, Some(&truth)),
            observations: out.observation_count(),
            truth_deg: truth,
            error: None,
        },
        Err(e) => TrialOutcome {
            trial: index,
            seed: spec.seed,
            blind: failed_result(DetectionMode::Blind, &truth, &blind_cfg),
            semi_blind: failed_result(DetectionMode::SemiBlind, &truth, &semi_cfg),
            observations: 0,
            truth_deg: truth,
            error: Some(e.to_string()),
        },
    })
}

/// Pooled metrics of one detection mode over all trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub mode: DetectionMode,
    pub trials: usize,
    pub truths: usize,
    pub detections: usize,
    pub successes: usize,
    pub md_rate: f64,
    pub fa_rate: f64,
    pub outlier_rate: f64,
    pub mae_deg: Option<f64>,
    pub failed_trials: usize,
}

impl SummaryRow {
    pub fn aggregate(mode: DetectionMode, trials: &[TrialOutcome]) -> Self {
        let (mut truths, mut detections, mut successes, mut err) = (0, 0, 0, 0.0);
        for t in trials {
            let m = t.score(mode).metrics;
            truths += m.truths;
            detections += m.detections;
            successes += m.successes;
            err += m.error_sum_deg;
        }
        let misses = truths - successes;
        Self {
            mode,
            trials: trials.len(),
            truths,
            detections,
            successes,
            md_rate: if truths == 0 {
                0.0
            } else {
                misses as f64 / truths as f64
            },
            fa_rate: if detections == 0 {
                0.0
            } else {
                (detections - successes) as f64 / detections as f64
            },
            outlier_rate: if truths == 0 {
                0.0
            } else {
                misses as f64 / truths as f64
            },
            mae_deg: (successes > 0).then(|| err / successes as f64),
            failed_trials: trials.iter().filter(|t| t.error.is_some()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub trials: Vec<TrialOutcome>,
    pub blind: SummaryRow,
    pub semi_blind: SummaryRow,
}

/// Runs all trials in parallel; the report is independent of scheduling.
pub fn evaluate(eval: &EvalConfig, cfg: &PipelineConfig) -> Result<EvalReport> {
    eval.validate()?;
    cfg.validate()?;
    let trials = (0..eval.trials)
        .into_par_iter()
        .map(|i| run_trial(i, eval, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        blind: SummaryRow::aggregate(DetectionMode::Blind, &trials),
        semi_blind: SummaryRow::aggregate(DetectionMode::SemiBlind, &trials),
        trials,
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per detection mode, metrics in percent and degrees.
pub fn write_summary_csv(
    report: &EvalReport,
    eval: &EvalConfig,
    mut out: impl Write,
) -> Result<()> {
    writeln!(
        out,
        "mode,sources,snr_db,t60_s,drr_db,trials,failed_trials,md_pct,fa_pct,mae_deg,outlier_pct"
    )?;
    for row in [&report.blind, &report.semi_blind] {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.mode,
            eval.sources,
            eval.snr_db.map_or("inf".into(), |s| s.to_string()),
            eval.room.t60_s,
            eval.room.drr_db,
            row.trials,
            row.failed_trials,
            pct(row.md_rate),
            pct(row.fa_rate),
            row.mae_deg.map_or(String::new(), |m| format!("{m:.3}")),
            pct(row.outlier_rate),
        )?;
    }
    Ok(())
}

/// One row per trial and detection mode.
pub fn write_trials_csv(report: &EvalReport, mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "trial,seed,mode,truth_deg,detected_deg,observations,md,fa,mae_deg,outlier,error"
    )?;
    for t in &report.trials {
        for mode in [DetectionMode::Blind, DetectionMode::SemiBlind] {
            let r = t.result(mode);
            let m = t.score(mode).metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                mode,
                join(&t.truth_deg),
                join(&r.detected()),
                t.observations,
                m.md_rate,
                m.fa_rate,
                m.mae_deg.map_or(String::new(), |v| v.to_string()),
                m.outlier_rate,
                t.error.as_deref().unwrap_or("").replace(',', ";"),
            )?;
        }
    }
    Ok(())
}

/// Summary document written as `result.json` by batch evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EvalDocument<'a, C: Serialize> {
    pub config: &'a C,
    pub blind: &'a SummaryRow,
    pub semi_blind: &'a SummaryRow,
    pub trials: &'a [TrialOutcome],
}

/// Writes `summary.csv`, `trials.csv` and `result.json`.
pub fn write_eval_outputs<C: Serialize>(
    dir: impl AsRef<Path>,
    report: &EvalReport,
    eval: &EvalConfig,
    config: &C,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_summary_csv(report, eval, create(&dir.join("summary.csv"))?)?;
    write_trials_csv(report, create(&dir.join("trials.csv"))?)?;
    let doc = EvalDocument {
        config,
        blind: &report.blind,
        semi_blind: &report.semi_blind,
        trials: &report.trials,
    };
    let mut f = create(&dir.join("result.json"))?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f)?;
    Ok(())
}
