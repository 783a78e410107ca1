use num_complex::Complex;

use super::lsq::{solve_least_squares, LsqFailure};
use super::{CleanTrack, CtfConfig, Rejection};
use crate::scalar::Real;

/// Stacked cross-relation equations of the high-power frames among the `O`
/// frames ending at `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSystem<T> {
    /// Frame index of each row.
    pub frames: Vec<usize>,
    /// Subtracted auto-PSDs, one per row.
    pub rhs: Vec<T>,
    /// Row-major `rows x cols` matrix of subtracted cross-PSD vectors.
    pub design: Vec<Complex<T>>,
    pub rows: usize,
    pub cols: usize,
    pub anchor: usize,
    pub bin: usize,
    pub max_condition: f64,
}

impl<T: Real> LocalSystem<T> {
    pub fn row_frame(&self, r: usize) -> usize {
        self.frames[r]
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex<T> {
        self.design[r * self.cols + c]
    }
}

/// Assembles the local system at `(anchor, bin)`, or rejects the region when
/// it is out of range or lacks high-power coverage.
pub fn build_local_system<T: Real>(
    track: &CleanTrack<T>,
    anchor: usize,
    cfg: &CtfConfig,
) -> Result<LocalSystem<T>, Rejection> {
    let rows = cfg.system_rows;
    let first_row = (anchor + 1)
        .checked_sub(rows)
        .ok_or(Rejection::OutOfRange)?;
    if first_row < track.psd.first_frame || anchor >= track.psd.end_frame() {
        return Err(Rejection::OutOfRange);
    }
    // The full span reaches back Q + D - 2 frames before the first row; only
    // frames carrying a PSD estimate can be classified.
    let span_start = first_row
        .saturating_sub(cfg.ctf_len + cfg.psd_frames - 2)
        .max(track.psd.first_frame);
    let span = anchor + 1 - span_start;
    let covered = (span_start..=anchor)
        .filter(|&p| track.is_high_power(p))
        .count();
    let fraction = covered as f64 / span as f64;
    if fraction < cfg.admission_fraction {
        return Err(Rejection::LowPower { fraction });
    }

    // Floored low-power frames no longer satisfy the cross-relation, so they
    // count toward admission but never enter the system.
    let frames: Vec<usize> = (first_row..=anchor)
        .filter(|&p| track.is_high_power(p))
        .collect();
    let cols = 2 * cfg.ctf_len - 1;
    if frames.is_empty() || frames.len() < cols.min(rows) {
        return Err(Rejection::LowPower { fraction });
    }
    let mut rhs = Vec::with_capacity(frames.len());
    let mut design = Vec::with_capacity(frames.len() * cols);
    for &p in &frames {
        let f = track.psd.frame(p).ok_or(Rejection::OutOfRange)?;
        debug_assert_eq!(f.cross.len(), cols);
        rhs.push(f.auto);
        design.extend_from_slice(&f.cross);
    }
    Ok(LocalSystem {
        rows: frames.len(),
        frames,
        rhs,
        design,
        cols,
        anchor,
        bin: track.psd.bin,
        max_condition: cfg.max_condition,
    })
}

/// Least-squares CTF ratio vector; entry 0 is the DP-RTF estimate.
pub fn solve_dp_rtf<T: Real>(sys: &LocalSystem<T>) -> Result<Vec<Complex<T>>, Rejection> {
    let rhs: Vec<Complex<T>> = sys
        .rhs
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    solve_least_squares(&sys.design, sys.rows, sys.cols, &rhs, sys.max_condition).map_err(|e| {
        match e {
            LsqFailure::RankDeficient { condition } => Rejection::RankDeficient { condition },
            LsqFailure::Underdetermined | LsqFailure::NonFinite => Rejection::NonFinite,
        }
    })
}
