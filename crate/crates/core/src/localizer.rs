//! Peak picking on the weight profile and scoring against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    /// Source count unknown; keep every peak above the weight threshold.
    Blind,
    /// Source count known; keep the `I` largest peaks.
    SemiBlind,
}

impl std::str::FromStr for DetectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blind" => Ok(Self::Blind),
            "semi-blind" | "semiblind" => Ok(Self::SemiBlind),
            other => Err(Error::Config(format!("unknown detection mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for DetectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Blind => "blind",
            Self::SemiBlind => "semi-blind",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub mode: DetectionMode,
    /// `α_T`, used in blind mode.
    pub weight_threshold: f64,
    /// `I`, used in semi-blind mode.
    pub sources: usize,
    pub success_threshold_deg: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            mode: DetectionMode::SemiBlind,
            weight_threshold: 0.05,
            sources: 2,
            success_threshold_deg: 15.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_threshold > 0.0 && self.weight_threshold < 1.0) {
            return Err(Error::Config(format!(
                "weight threshold {} outside (0, 1)",
                self.weight_threshold
            )));
        }
        if self.sources == 0 {
            return Err(Error::Config("source count must be >= 1".into()));
        }
        if !(self.success_threshold_deg > 0.0) {
            return Err(Error::Config(format!(
                "success threshold {} must be > 0",
                self.success_threshold_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub azimuth_deg: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSelection {
    /// Sorted by azimuth.
    pub peaks: Vec<Peak>,
    /// The profile is flat: no local maximum exists.
    pub degenerate: bool,
    /// Semi-blind mode found fewer than `I` local maxima.
    pub short: bool,
}

/// Leftmost indices of the local maxima of `values`.
///
/// A maximal run of equal values is a peak when every neighbor of the run is
/// strictly lower; endpoints only have one neighbor. A constant profile has
/// no peaks.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && values[end] == values[start] {
            end += 1;
        }
        let v = values[start];
        let left = (start > 0).then(|| values[start - 1]);
        let right = (end < values.len()).then(|| values[end]);
        let has_neighbor = left.is_some() || right.is_some();
        if has_neighbor && left.is_none_or(|l| l < v) && right.is_none_or(|r| r < v) {
            out.push(start);
        }
        start = end;
    }
    out
}

/// Picks detected directions from a weight profile over `grid`.
///
/// # Panics
/// If `alpha` and `grid` differ in length.
pub fn select_peaks<T: Real>(alpha: &[T], grid: &[f64], cfg: &DetectionConfig) -> PeakSelection {
    assert_eq!(
        alpha.len(),
        grid.len(),
        "weight profile and grid differ in length"
    );
    let values: Vec<f64> = alpha.iter().map(|&a| to_f64(a)).collect();
    let maxima = local_maxima(&values);
    let degenerate = maxima.is_empty();
    let mut peaks: Vec<Peak> = maxima
        .into_iter()
        .map(|index| Peak {
            index,
            azimuth_deg: grid[index],
            weight: values[index],
        })
        .collect();
    let mut short = false;
    match cfg.mode {
        DetectionMode::Blind => peaks.retain(|p| p.weight > cfg.weight_threshold),
        DetectionMode::SemiBlind => {
            peaks.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.index.cmp(&b.index)));
            short = peaks.len() < cfg.sources;
            peaks.truncate(cfg.sources);
            peaks.sort_by_key(|p| p.index);
        }
    }
    PeakSelection {
        peaks,
        degenerate,
        short,
    }
}

/// Minimum-cost one-to-one matching of size `min(|detected|, |truth|)` under
/// absolute azimuth difference. Returns `(detected index, truth index)` pairs
/// sorted by truth index, and the total cost.
pub fn optimal_assignment(detected: &[f64], truth: &[f64]) -> (Vec<(usize, usize)>, f64) {
    let n_t = truth.len();
    assert!(n_t < 24, "too many truth directions for exact assignment");
    let target = detected.len().min(n_t);
    let states = 1usize << n_t;
    // dp[i][mask]: best cost of matching exactly the truths in `mask` using
    // the first `i` detections.
    let mut dp = vec![vec![f64::INFINITY; states]];
    dp[0][0] = 0.0;
    for &d in detected {
        let prev = dp.last().expect("initialized");
        let mut next = prev.clone();
        for (mask, &cost) in prev.iter().enumerate() {
            if !cost.is_finite() {
                continue;
            }
            for (t, &tv) in truth.iter().enumerate() {
                if mask & (1 << t) == 0 {
                    let m = mask | (1 << t);
                    next[m] = next[m].min(cost + (d - tv).abs());
                }
            }
        }
        dp.push(next);
    }
    let last = &dp[detected.len()];
    let best = (0..states)
        .filter(|m| m.count_ones() as usize == target)
        .min_by(|&a, &b| last[a].total_cmp(&last[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    let cost = last[best];
    let mut pairs = Vec::with_capacity(target);
    let mut mask = best;
    for i in (0..detected.len()).rev() {
        if dp[i][mask] == dp[i + 1][mask] {
            continue;
        }
        let t = (0..n_t)
            .find(|&t| {
                mask & (1 << t) != 0
                    && dp[i][mask & !(1 << t)] + (detected[i] - truth[t]).abs() == dp[i + 1][mask]
            })
            .expect("dp state is reachable");
        pairs.push((i, t));
        mask &= !(1 << t);
    }
    pairs.sort_by_key(|&(_, t)| t);
    (pairs, cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceMatch {
    pub truth_deg: f64,
    pub detected_deg: f64,
    pub error_deg: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub truths: usize,
    pub detections: usize,
    pub successes: usize,
    pub md_rate: f64,
    pub fa_rate: f64,
    pub outlier_rate: f64,
    /// Mean absolute error over successful sources; `None` without successes.
    pub mae_deg: Option<f64>,
    pub error_sum_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub truth_deg: Vec<f64>,
    pub matches: Vec<SourceMatch>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub mode: DetectionMode,
    pub selection: PeakSelection,
    pub score: Option<Score>,
}

impl LocalizationResult {
    pub fn detected(&self) -> Vec<f64> {
        self.selection.peaks.iter().map(|p| p.azimuth_deg).collect()
    }
}

/// Matches detections to the true directions and computes MD, FA, MAE and
/// outlier rates.
///
/// # Panics
/// If `truth` is empty.
pub fn match_and_score(detected: &[Peak], truth: &[f64], cfg: &DetectionConfig) -> Score {
    assert!(
        !truth.is_empty(),
        "scoring needs at least one true direction"
    );
    let az: Vec<f64> = detected.iter().map(|p| p.azimuth_deg).collect();
    let (pairs, _) = optimal_assignment(&az, truth);
    let matches: Vec<SourceMatch> = pairs
        .iter()
        .map(|&(d, t)| {
            let error_deg = (az[d] - truth[t]).abs();
            SourceMatch {
                truth_deg: truth[t],
                detected_deg: az[d],
                error_deg,
                success: error_deg <= cfg.success_threshold_deg,
            }
        })
        .collect();
    let successes = matches.iter().filter(|m| m.success).count();
    let error_sum_deg: f64 = matches
        .iter()
        .filter(|m| m.success)
        .map(|m| m.error_deg)
        .sum();
    let truths = truth.len();
    let detections = detected.len();
    let failures = truths - successes;
    let metrics = Metrics {
        truths,
        detections,
        successes,
        md_rate: failures as f64 / truths as f64,
        fa_rate: if detections == 0 {
            0.0
        } else {
            (detections - successes) as f64 / detections as f64
        },
        outlier_rate: failures as f64 / truths as f64,
        mae_deg: (successes > 0).then(|| error_sum_deg / successes as f64),
        error_sum_deg,
    };
    Score {
        truth_deg: truth.to_vec(),
        matches,
        metrics,
    }
}

/// Peak selection followed by scoring when the true directions are known.
pub fn localize_weights<T: Real>(
    alpha: &[T],
    grid: &[f64],
    truth: Option<&[f64]>,
    cfg: &DetectionConfig,
) -> LocalizationResult {
    let selection = select_peaks(alpha, grid, cfg);
    let score = truth
        .filter(|t| !t.is_empty())
        .map(|t| match_and_score(&selection.peaks, t, cfg));
    LocalizationResult {
        mode: cfg.mode,
        selection,
        score,
    }
}
