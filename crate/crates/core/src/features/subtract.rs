use num_complex::Complex;

use super::{CtfConfig, PsdTrack};
use crate::scalar::{from_usize, lit, Real};

/// Stationary noise estimate of one bin: mean PSDs over the quietest frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile<T> {
    pub auto: T,
    pub cross: Vec<Complex<T>>,
}

/// Noise-subtracted PSD track together with its high-speech-power frame set.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanTrack<T> {
    pub psd: PsdTrack<T>,
    pub noise: NoiseProfile<T>,
    /// Per-frame membership, aligned with `psd.frames`.
    pub high_power: Vec<bool>,
}

impl<T: Real> CleanTrack<T> {
    /// Treats every frame as high-power with a zero noise profile.
    pub fn without_subtraction(psd: PsdTrack<T>) -> Self {
        let width = psd.frames.first().map_or(0, |f| f.cross.len());
        Self {
            high_power: vec![true; psd.frames.len()],
            noise: NoiseProfile {
                auto: T::zero(),
                cross: vec![Complex::new(T::zero(), T::zero()); width],
            },
            psd,
        }
    }

    pub fn is_high_power(&self, p: usize) -> bool {
        p.checked_sub(self.psd.first_frame)
            .and_then(|i| self.high_power.get(i))
            .copied()
            .unwrap_or(false)
    }

    pub fn high_power_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.high_power
            .iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(i, _)| i + self.psd.first_frame)
    }
}

/// Inter-frame spectral subtraction with a quantile noise floor.
pub fn spectral_subtract<T: Real>(track: &PsdTrack<T>, cfg: &CtfConfig) -> CleanTrack<T> {
    let n = track.frames.len();
    let width = track.frames.first().map_or(0, |f| f.cross.len());
    let zero = Complex::new(T::zero(), T::zero());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        track.frames[a]
            .auto
            .partial_cmp(&track.frames[b].auto)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let quiet = ((cfg.noise_quantile * n as f64).ceil() as usize).clamp(1.min(n), n);
    let mut noise = NoiseProfile {
        auto: T::zero(),
        cross: vec![zero; width],
    };
    if quiet > 0 {
        let inv = T::one() / from_usize::<T>(quiet);
        for &i in &order[..quiet] {
            noise.auto += track.frames[i].auto;
            for (acc, v) in noise.cross.iter_mut().zip(&track.frames[i].cross) {
                *acc += *v;
            }
        }
        noise.auto *= inv;
        noise.cross.iter_mut().for_each(|c| *c = *c * inv);
    }

    let floor = lit::<T>(cfg.subtraction_floor) * noise.auto;
    let threshold = lit::<T>(cfg.high_power_ratio) * noise.auto;
    let mut high_power = Vec::with_capacity(n);
    let frames = track
        .frames
        .iter()
        .map(|f| {
            let auto = (f.auto - noise.auto).max(floor);
            high_power.push(auto > threshold);
            super::PsdFrame {
                auto,
                cross: f
                    .cross
                    .iter()
                    .zip(&noise.cross)
                    .map(|(c, nz)| c - nz)
                    .collect(),
            }
        })
        .collect();

    CleanTrack {
        psd: PsdTrack {
            bin: track.bin,
            first_frame: track.first_frame,
            frames,
        },
        noise,
        high_power,
    }
}
