use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};

/// Auto-PSD of the target channel and the cross-PSD vector between the
/// regressor `z = [x_p .. x_{p-Q+1}, y_{p-1} .. y_{p-Q+1}]` and `y_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFrame<T> {
    pub auto: T,
    pub cross: Vec<Complex<T>>,
}

/// PSD estimates of one frequency bin, for frames `first_frame..first_frame + frames.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTrack<T> {
    pub bin: usize,
    pub first_frame: usize,
    pub frames: Vec<PsdFrame<T>>,
}

impl<T: Real> PsdTrack<T> {
    pub fn frame(&self, p: usize) -> Option<&PsdFrame<T>> {
        p.checked_sub(self.first_frame)
            .and_then(|i| self.frames.get(i))
    }

    /// One past the last frame index with an estimate.
    pub fn end_frame(&self) -> usize {
        self.first_frame + self.frames.len()
    }
}

/// Earliest frame with a full lookback of `Q - 1` lags plus `D - 1` averaging frames.
pub fn first_psd_frame(ctf_len: usize, psd_frames: usize) -> usize {
    ctf_len + psd_frames - 2
}

/// Sliding D-frame PSD averages for one bin; `x` is the reference
/// channel track and `y` the target channel track.
pub fn estimate_psd_track<T: Real>(
    x: &[Complex<T>],
    y: &[Complex<T>],
    ctf_len: usize,
    psd_frames: usize,
    bin: usize,
) -> Result<PsdTrack<T>> {
    assert_eq!(x.len(), y.len());
    assert!(ctf_len >= 1 && psd_frames >= 1);
    let first = first_psd_frame(ctf_len, psd_frames);
    if x.len() <= first {
        return Err(Error::TooFewFrames {
            frames: x.len(),
            needed: first + 1,
        });
    }
    let width = 2 * ctf_len - 1;
    let regressor = |p: usize, j: usize| -> Complex<T> {
        if j < ctf_len {
            x[p - j]
        } else {
            y[p - (j - ctf_len + 1)]
        }
    };
    let zero = Complex::new(T::zero(), T::zero());
    let inv_d = T::one() / from_usize::<T>(psd_frames);

    // Per-frame products, then D-frame window sums. Each window is summed
    // afresh: running add/subtract leaves rounding residue over silence.
    let lo = ctf_len - 1;
    let mut auto_raw = Vec::with_capacity(x.len() - lo);
    let mut cross_raw = Vec::with_capacity(x.len() - lo);
    for p in lo..x.len() {
        let yc = y[p].conj();
        auto_raw.push(y[p].norm_sqr());
        cross_raw.push((0..width).map(|j| regressor(p, j) * yc).collect::<Vec<_>>());
    }

    let frames = (psd_frames..=auto_raw.len())
        .map(|end| {
            let start = end - psd_frames;
            let auto: T = auto_raw[start..end].iter().copied().sum();
            let mut cross = vec![zero; width];
            for row in &cross_raw[start..end] {
                for (acc, v) in cross.iter_mut().zip(row) {
                    *acc += *v;
                }
            }
            PsdFrame {
                auto: auto * inv_d,
                cross: cross.into_iter().map(|c| c * inv_d).collect(),
            }
        })
        .collect();
    Ok(PsdTrack {
        bin,
        first_frame: first,
        frames,
    })
}
