use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients<T: Real>(self, len: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); len],
            Window::Hann => {
                let n = from_usize::<T>(len);
                (0..len)
                    .map(|i| {
                        let phase = T::TAU() * from_usize::<T>(i) / n;
                        lit::<T>(0.5) - lit::<T>(0.5) * phase.cos()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 256,
            hop: 128,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_len.is_power_of_two() {
            return Err(Error::Config(format!(
                "frame length {} is not a power of two",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::Config(format!(
                "frame shift {} outside (0, {}]",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    /// One-sided bin count `N/2 + 1`.
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            (samples - self.frame_len) / self.hop + 1
        }
    }
}

/// One-sided STFT coefficients, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    data: Vec<Complex<T>>,
    frames: usize,
    bins: usize,
    config: StftConfig,
    sample_rate: u32,
}

impl<T: Real> Spectrogram<T> {
    /// Wraps precomputed coefficients; `data.len()` must equal `frames * bins`.
    pub fn from_raw(
        data: Vec<Complex<T>>,
        frames: usize,
        bins: usize,
        config: StftConfig,
        sample_rate: u32,
    ) -> Self {
        assert_eq!(data.len(), frames * bins, "coefficient grid shape");
        Self {
            data,
            frames,
            bins,
            config,
            sample_rate,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize) -> Complex<T> {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex<T>] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    /// Coefficients of one bin across all frames.
    pub fn bin_track(&self, bin: usize) -> Vec<Complex<T>> {
        (0..self.frames).map(|p| self.get(p, bin)).collect()
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * f64::from(self.sample_rate) / self.config.frame_len as f64
    }

    /// Time-domain energy of the windowed frame, recovered from the one-sided spectrum.
    pub fn frame_energy(&self, frame: usize) -> T {
        let n = self.config.frame_len;
        let inv_n = T::one() / from_usize::<T>(n);
        self.frame(frame)
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = if k == 0 || k == n / 2 {
                    inv_n
                } else {
                    inv_n + inv_n
                };
                w * c.norm_sqr()
            })
            .sum()
    }
}

/// Windowed one-sided DFT of every full frame; frame `p` starts at sample `p * hop`.
pub fn stft<T: Real>(signal: &[T], cfg: &StftConfig, sample_rate: u32) -> Result<Spectrogram<T>> {
    cfg.validate()?;
    let n = cfg.frame_len;
    if signal.len() < n {
        return Err(Error::TooShort {
            samples: signal.len(),
            frame: n,
        });
    }
    let frames = cfg.frame_count(signal.len());
    let bins = cfg.bins();
    let window = cfg.window.coefficients::<T>(n);
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);

    let mut data = vec![Complex::new(T::zero(), T::zero()); frames * bins];
    data.par_chunks_mut(bins).enumerate().for_each(|(p, out)| {
        let start = p * cfg.hop;
        let mut buf: Vec<Complex<T>> = signal[start..start + n]
            .iter()
            .zip(&window)
            .map(|(&x, &w)| Complex::new(x * w, T::zero()))
            .collect();
        fft.process(&mut buf);
        out.copy_from_slice(&buf[..bins]);
    });
    Ok(Spectrogram {
        data,
        frames,
        bins,
        config: *cfg,
        sample_rate,
    })
}

pub fn stft_clip<T: Real>(clip: &AudioClip<T>, cfg: &StftConfig) -> Result<Vec<Spectrogram<T>>> {
    clip.channels()
        .par_iter()
        .map(|ch| stft(ch, cfg, clip.sample_rate()))
        .collect()
}
