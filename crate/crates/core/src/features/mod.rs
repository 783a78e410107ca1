//! Direct-path relative transfer function (DP-RTF) features.
//!
//! For every bin up to the configured maximum frequency, stacked cross-relation
//! equations of a short frame region are solved in the least-squares sense,
//! once with the channels in order and once swapped. Regions whose two
//! estimates agree are taken as dominated by a single source and yield one
//! normalized observation.

mod consistency;
mod lsq;
mod psd;
mod subtract;
mod system;

use std::io::Write;
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use consistency::{consistency_test, fused_estimate, normalize_feature};
pub use lsq::{solve_least_squares, LsqFailure};
pub use psd::{estimate_psd_track, first_psd_frame, PsdFrame, PsdTrack};
pub use subtract::{spectral_subtract, CleanTrack, NoiseProfile};
pub use system::{build_local_system, solve_dp_rtf, LocalSystem};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::signal::Spectrogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfConfig {
    /// CTF length `Q` in frames.
    pub ctf_len: usize,
    /// Frames averaged per PSD estimate, `D`.
    pub psd_frames: usize,
    /// Equations per local system, `O`.
    pub system_rows: usize,
    /// Consistency threshold `d_T`.
    pub consistency_threshold: f64,
    pub high_power_ratio: f64,
    pub noise_quantile: f64,
    pub subtraction_floor: f64,
    /// Minimum fraction of high-power frames in a region.
    pub admission_fraction: f64,
    /// LS solves above this condition estimate are rejected.
    pub max_condition: f64,
    pub max_freq_hz: f64,
    /// Anchor spacing in frames; `None` means `system_rows`.
    pub anchor_stride: Option<usize>,
}

impl Default for CtfConfig {
    fn default() -> Self {
        Self::for_t60(0.3, 0.008)
    }
}

impl CtfConfig {
    /// `Q = floor(T60 / 6 / hop)` (at least 1) and `O = ceil(3.5 Q)`.
    pub fn for_t60(t60_s: f64, hop_s: f64) -> Self {
        let ctf_len = ((t60_s / 6.0 / hop_s + 1e-9).floor() as usize).max(1);
        Self {
            ctf_len,
            psd_frames: 15,
            system_rows: (3.5 * ctf_len as f64).ceil() as usize,
            consistency_threshold: 0.85,
            high_power_ratio: 3.0,
            noise_quantile: 0.2,
            subtraction_floor: 0.01,
            admission_fraction: 0.8,
            max_condition: 1e8,
            max_freq_hz: 4000.0,
            anchor_stride: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.ctf_len == 0 {
            return fail("CTF length must be >= 1".into());
        }
        if self.psd_frames < 2 {
            return fail(format!("PSD frames {} < 2", self.psd_frames));
        }
        if self.system_rows < 2 * self.ctf_len - 1 {
            return fail(format!(
                "system rows {} < 2Q - 1 = {}",
                self.system_rows,
                2 * self.ctf_len - 1
            ));
        }
        if !(self.consistency_threshold > 0.0 && self.consistency_threshold <= 1.0) {
            return fail(format!("d_T {} outside (0, 1]", self.consistency_threshold));
        }
        if !(self.high_power_ratio > 1.0) {
            return fail(format!("high-power ratio {} <= 1", self.high_power_ratio));
        }
        for (name, v) in [
            ("noise quantile", self.noise_quantile),
            ("subtraction floor", self.subtraction_floor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("{name} {v} outside (0, 1)"));
            }
        }
        if !(self.admission_fraction > 0.0 && self.admission_fraction <= 1.0) {
            return fail(format!(
                "admission fraction {} outside (0, 1]",
                self.admission_fraction
            ));
        }
        if self.anchor_stride == Some(0) {
            return fail("anchor stride must be >= 1".into());
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.anchor_stride.unwrap_or(self.system_rows)
    }

    /// Frames spanned by one local estimate, `O + Q + D - 2`.
    pub fn span(&self) -> usize {
        self.system_rows + self.ctf_len + self.psd_frames - 2
    }
}

/// Why a region produced no observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    OutOfRange,
    LowPower { fraction: f64 },
    RankDeficient { condition: f64 },
    NonFinite,
    ZeroSwap,
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEstimate<T> {
    /// First CTF ratio with channel B regressed on A.
    pub forward: Complex<T>,
    /// First CTF ratio with the channels swapped.
    pub swapped: Complex<T>,
    pub similarity: T,
}

/// Outcome of the full estimation chain at one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEstimate<T> {
    pub frame: usize,
    pub bin: usize,
    pub outcome: Result<PairEstimate<T>, Rejection>,
}

impl<T: Real> BinEstimate<T> {
    pub fn similarity(&self) -> Option<T> {
        self.outcome.as_ref().ok().map(|e| e.similarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DpRtfObservation<T> {
    pub frame: usize,
    pub bin: usize,
    pub value: Complex<T>,
    pub similarity: T,
}

/// Observations that passed the consistency test, sorted by `(bin, frame)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet<T> {
    pub observations: Vec<DpRtfObservation<T>>,
}

impl<T: Real> FeatureSet<T> {
    pub fn from_estimates(estimates: &[BinEstimate<T>], threshold: f64) -> Self {
        let d_t = lit::<T>(threshold);
        let observations = estimates
            .iter()
            .filter_map(|e| match e.outcome {
                Ok(est) if est.similarity >= d_t => Some(DpRtfObservation {
                    frame: e.frame,
                    bin: e.bin,
                    value: normalize_feature(fused_estimate(est.forward, est.swapped)),
                    similarity: est.similarity,
                }),
                _ => None,
            })
            .collect();
        Self { observations }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Frames retained at `bin`.
    pub fn frames_at(&self, bin: usize) -> Vec<usize> {
        self.observations
            .iter()
            .filter(|o| o.bin == bin)
            .map(|o| o.frame)
            .collect()
    }

    /// Columns `k, p, re, im, d`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "k,p,re,im,d")?;
        for o in &self.observations {
            writeln!(
                out,
                "{},{},{:.12e},{:.12e},{:.12e}",
                o.bin,
                o.frame,
                to_f64(o.value.re),
                to_f64(o.value.im),
                to_f64(o.similarity)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Bins `1..` whose center frequency is at most `max_freq_hz`.
pub fn analysis_bins<T: Real>(spec: &Spectrogram<T>, max_freq_hz: f64) -> Vec<usize> {
    (1..spec.bins())
        .take_while(|&k| spec.bin_frequency(k) <= max_freq_hz + 1e-9)
        .collect()
}

fn track_for<T: Real>(
    reference: &[Complex<T>],
    target: &[Complex<T>],
    cfg: &CtfConfig,
    bin: usize,
) -> Option<CleanTrack<T>> {
    estimate_psd_track(reference, target, cfg.ctf_len, cfg.psd_frames, bin)
        .ok()
        .map(|t| spectral_subtract(&t, cfg))
}

fn first_entry<T: Real>(
    track: &CleanTrack<T>,
    anchor: usize,
    cfg: &CtfConfig,
) -> Result<Complex<T>, Rejection> {
    let sys = build_local_system(track, anchor, cfg)?;
    solve_dp_rtf(&sys).map(|g| g[0])
}

fn analyze_bin<T: Real>(
    spec_a: &Spectrogram<T>,
    spec_b: &Spectrogram<T>,
    cfg: &CtfConfig,
    bin: usize,
) -> Vec<BinEstimate<T>> {
    let a = spec_a.bin_track(bin);
    let b = spec_b.bin_track(bin);
    let (Some(fwd), Some(swp)) = (track_for(&a, &b, cfg, bin), track_for(&b, &a, cfg, bin)) else {
        return Vec::new();
    };
    let first_anchor = fwd.psd.first_frame + cfg.system_rows - 1;
    (first_anchor..fwd.psd.end_frame())
        .step_by(cfg.stride())
        .map(|anchor| {
            let outcome = first_entry(&fwd, anchor, cfg).and_then(|forward| {
                let swapped = first_entry(&swp, anchor, cfg)?;
                let similarity = consistency_test(forward, swapped)?;
                Ok(PairEstimate {
                    forward,
                    swapped,
                    similarity,
                })
            });
            BinEstimate {
                frame: anchor,
                bin,
                outcome,
            }
        })
        .collect()
}

/// Runs the forward and swapped estimation chain at every admissible anchor,
/// returning all outcomes sorted by `(bin, frame)`.
pub fn analyze<T: Real>(
    spec_a: &Spectrogram<T>,
    spec_b: &Spectrogram<T>,
    cfg: &CtfConfig,
) -> Result<Vec<BinEstimate<T>>> {
    cfg.validate()?;
    if spec_a.frames() != spec_b.frames() || spec_a.bins() != spec_b.bins() {
        return Err(Error::Config("spectrogram shapes differ".into()));
    }
    let bins = analysis_bins(spec_a, cfg.max_freq_hz);
    let per_bin: Vec<Vec<BinEstimate<T>>> = bins
        .par_iter()
        .map(|&k| analyze_bin(spec_a, spec_b, cfg, k))
        .collect();
    Ok(per_bin.into_iter().flatten().collect())
}

/// Consistency-tested, normalized DP-RTF observations of channel B relative to A.
pub fn extract_features<T: Real>(
    spec_a: &Spectrogram<T>,
    spec_b: &Spectrogram<T>,
    cfg: &CtfConfig,
) -> Result<FeatureSet<T>> {
    let estimates = analyze(spec_a, spec_b, cfg)?;
    Ok(FeatureSet::from_estimates(
        &estimates,
        cfg.consistency_threshold,
    ))
}
