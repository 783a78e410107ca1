//! Synthetic two-microphone scenes with known source directions.
//!
//! Each direction gets a far-field direct path (fractional delay between the
//! microphones) followed by an exponentially decaying noise tail. Sources are
//! harmonic-plus-noise bursts with speech-like on/off structure.

use std::path::Path;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cgmm::{SteeringRecord, SteeringTable};
use crate::error::{Error, Result};
use crate::signal::{write_wav, AudioClip};

/// Minimum angular separation between simultaneous sources, in degrees.
pub const MIN_SEPARATION_DEG: f64 = 15.0;

// Half-width of the windowed-sinc fractional delay kernel, in samples.
const KERNEL_HALF_WIDTH: usize = 24;
// RMS of every source over its active interval.
const SOURCE_RMS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub spacing_m: f64,
    pub speed_of_sound: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            spacing_m: 0.18,
            speed_of_sound: 343.0,
        }
    }
}

impl ArrayGeometry {
    /// Arrival delay of channel B relative to channel A, in seconds.
    pub fn delay_s(&self, direction_deg: f64) -> f64 {
        self.spacing_m * direction_deg.to_radians().sin() / self.speed_of_sound
    }

    // Sample index of the direct path at broadside.
    fn base_delay(&self, sample_rate: u32) -> usize {
        let half = 0.5 * self.spacing_m / self.speed_of_sound * sample_rate as f64;
        (KERNEL_HALF_WIDTH + half.ceil() as usize + 1).max(32)
    }
}

/// Room and rendering parameters shared by every filter of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub t60_s: f64,
    pub drr_db: f64,
    /// Gap between the direct path and the start of the tail.
    pub tail_onset_ms: f64,
    pub sample_rate: u32,
    pub geometry: ArrayGeometry,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            t60_s: 0.3,
            drr_db: 0.5,
            tail_onset_ms: 2.5,
            sample_rate: 16_000,
            geometry: ArrayGeometry::default(),
        }
    }
}

/// Two-channel impulse response of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    /// Direct path only.
    pub direct: [Vec<f64>; 2],
    /// Direct path plus tail.
    pub full: [Vec<f64>; 2],
    /// Sample index of the broadside direct path.
    pub base_delay: usize,
}

// Hann-windowed sinc centered at `center`.
fn fractional_delay(len: usize, center: f64) -> Vec<f64> {
    let w = KERNEL_HALF_WIDTH as f64;
    (0..len)
        .map(|n| {
            let x = n as f64 - center;
            if x.abs() >= w {
                return 0.0;
            }
            let sinc = if x == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            sinc * 0.5 * (1.0 + (std::f64::consts::PI * x / w).cos())
        })
        .collect()
}

/// Direct-path pair for `direction_deg`, symmetric about the base delay so
/// broadside is an exact impulse on both channels.
pub fn direct_path(
    direction_deg: f64,
    geometry: &ArrayGeometry,
    sample_rate: u32,
) -> [Vec<f64>; 2] {
    let n0 = geometry.base_delay(sample_rate);
    let half = 0.5 * geometry.delay_s(direction_deg) * sample_rate as f64;
    let len = 2 * n0 + 1;
    [
        fractional_delay(len, n0 as f64 - half),
        fractional_delay(len, n0 as f64 + half),
    ]
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Direct path plus a seeded exponential tail scaled to the requested
/// direct-to-reverberant ratio on each channel. `t60_s == 0` gives the direct
/// path alone.
pub fn gen_filters(direction_deg: f64, room: &RoomConfig, seed: u64) -> Result<FilterPair> {
    if !(room.t60_s >= 0.0) || !room.drr_db.is_finite() || !(room.tail_onset_ms >= 0.0) {
        return Err(Error::Scene(format!(
            "invalid room: T60 {} s, DRR {} dB, onset {} ms",
            room.t60_s, room.drr_db, room.tail_onset_ms
        )));
    }
    let fs = room.sample_rate as f64;
    let direct = direct_path(direction_deg, &room.geometry, room.sample_rate);
    let base_delay = room.geometry.base_delay(room.sample_rate);
    if room.t60_s == 0.0 {
        return Ok(FilterPair {
            full: direct.clone(),
            direct,
            base_delay,
        });
    }
    let onset = base_delay + (room.tail_onset_ms * 1e-3 * fs).round() as usize;
    let tail_len = (room.t60_s * fs).ceil() as usize;
    let len = (onset + tail_len).max(direct[0].len());
    let decay = -3.0 * std::f64::consts::LN_10 / (room.t60_s * fs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drr = 10f64.powf(room.drr_db / 10.0);
    let full = direct.clone().map(|d| {
        let tail: Vec<f64> = (0..tail_len)
            .map(|n| rng.sample::<f64, _>(StandardNormal) * (decay * n as f64).exp())
            .collect();
        let gain = (energy(&d) / drr / energy(&tail)).sqrt();
        let mut h = d;
        h.resize(len, 0.0);
        for (n, t) in tail.iter().enumerate() {
            h[onset + n] += gain * t;
        }
        h
    });
    Ok(FilterPair {
        direct,
        full,
        base_delay,
    })
}

/// Linear convolution truncated to `x.len()` samples.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex<f64>> = v.iter().map(|&r| Complex::new(r, 0.0)).collect();
        b.resize(n, Complex::new(0.0, 0.0));
        b
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    a.iter().take(x.len()).map(|c| c.re / n as f64).collect()
}

/// Harmonic bursts with random pitch, glide and spectral shape, separated by
/// pauses, plus a breath-noise component.
pub fn speech_surrogate(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let ramp = (0.01 * fs) as usize;
    let mut start = (rng.random_range(0.0..0.1) * fs) as usize;
    while start < len {
        let dur = (rng.random_range(0.05..0.3) * fs) as usize;
        let gap = (rng.random_range(0.05..0.3) * fs) as usize;
        let end = (start + dur).min(len);
        let f0: f64 = rng.random_range(100.0..300.0);
        let glide: f64 = rng.random_range(-0.15..0.15);
        let vib_rate = rng.random_range(3.0..7.0);
        let vib_depth = rng.random_range(0.0..0.02);
        let level = rng.random_range(0.5..1.0);
        let ceiling = (0.45 * fs).min(5000.0);
        let harmonics = ((ceiling / (f0 * (1.0 + glide.max(0.0)))).floor() as usize).max(1);
        let amps: Vec<f64> = (1..=harmonics)
            .map(|h| rng.random_range(0.2..1.0) / (h as f64).powf(0.8))
            .collect();
        let mut phases: Vec<f64> = (0..harmonics)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let seg = end - start;
        for i in 0..seg {
            let t = i as f64 / fs;
            let frac = i as f64 / seg.max(1) as f64;
            let f = f0
                * (1.0 + glide * frac)
                * (1.0 + vib_depth * (std::f64::consts::TAU * vib_rate * t).sin());
            let env = {
                let a = (i.min(seg - 1 - i) as f64 / ramp.max(1) as f64).min(1.0);
                0.5 - 0.5 * (std::f64::consts::PI * a).cos()
            };
            let mut v = 0.0;
            for (h, (amp, ph)) in amps.iter().zip(phases.iter_mut()).enumerate() {
                v += amp * ph.sin();
                *ph += std::f64::consts::TAU * f * (h + 1) as f64 / fs;
            }
            let breath: f64 = rng.sample(StandardNormal);
            out[start + i] = level * env * (v + 0.05 * breath);
        }
        start = end + gap;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub direction_deg: f64,
    pub onset_s: f64,
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub grid: Vec<f64>,
    pub sources: Vec<SourceSpec>,
    pub room: RoomConfig,
    /// `None` means no noise.
    pub snr_db: Option<f64>,
    pub duration_s: f64,
    pub seed: u64,
    pub noise_direction_deg: f64,
    /// DFT length used for the steering table.
    pub frame_len: usize,
}

/// `-90, -85, …, 90`.
pub fn default_grid() -> Vec<f64> {
    (0..37).map(|i| -90.0 + 5.0 * i as f64).collect()
}

impl SceneSpec {
    /// Sources active for the whole duration, default room and grid.
    pub fn new(directions: &[f64], seed: u64) -> Self {
        let duration_s = 3.0;
        Self {
            grid: default_grid(),
            sources: directions
                .iter()
                .map(|&d| SourceSpec {
                    direction_deg: d,
                    onset_s: 0.0,
                    offset_s: duration_s,
                })
                .collect(),
            room: RoomConfig::default(),
            snr_db: Some(20.0),
            duration_s,
            seed,
            noise_direction_deg: 120.0,
            frame_len: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scene(m));
        if !(self.duration_s > 0.0) {
            return fail(format!("duration {} s must be > 0", self.duration_s));
        }
        if self.grid.len() < 2 || self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return fail("grid needs >= 2 strictly increasing directions".into());
        }
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return fail(format!("frame length {} must be even", self.frame_len));
        }
        if self.room.sample_rate == 0 {
            return fail("sample rate must be > 0".into());
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return fail(format!("SNR {snr} dB is not finite"));
            }
        }
        for s in &self.sources {
            if !self.grid.iter().any(|g| (g - s.direction_deg).abs() < 1e-9) {
                return fail(format!(
                    "source direction {} is not on the grid",
                    s.direction_deg
                ));
            }
            if !(s.onset_s >= 0.0 && s.offset_s >= s.onset_s) {
                return fail(format!(
                    "bad activity interval [{}, {}]",
                    s.onset_s, s.offset_s
                ));
            }
        }
        for (i, a) in self.sources.iter().enumerate() {
            for b in &self.sources[i + 1..] {
                let sep = (a.direction_deg - b.direction_deg).abs();
                if sep < MIN_SEPARATION_DEG - 1e-9 {
                    return fail(format!(
                        "sources at {} and {} are closer than {MIN_SEPARATION_DEG} degrees",
                        a.direction_deg, b.direction_deg
                    ));
                }
            }
        }
        if self.direct_len() > self.frame_len {
            return fail("direct path longer than the steering DFT".into());
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        (self.duration_s * self.room.sample_rate as f64).round() as usize
    }

    fn direct_len(&self) -> usize {
        2 * self.room.geometry.base_delay(self.room.sample_rate) + 1
    }

    /// Steering table over the grid, from the DFT of the direct-path filters.
    pub fn steering_table(&self) -> SteeringTable {
        steering_table(&self.grid, &self.room, self.frame_len)
    }

    /// DP-RTF `B/A` of the direct path for bins `0..=N/2`.
    pub fn true_dp_rtf(&self, direction_deg: f64) -> Vec<Complex<f64>> {
        let [a, b] = direct_spectra(direction_deg, &self.room, self.frame_len);
        a.iter().zip(&b).map(|(a, b)| b / a).collect()
    }
}

fn direct_spectra(
    direction_deg: f64,
    room: &RoomConfig,
    frame_len: usize,
) -> [Vec<Complex<f64>>; 2] {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    direct_path(direction_deg, &room.geometry, room.sample_rate).map(|h| {
        let mut buf: Vec<Complex<f64>> = h
            .iter()
            .take(frame_len)
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        buf.resize(frame_len, Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        buf.truncate(frame_len / 2 + 1);
        buf
    })
}

/// One record per grid direction and bin `0..=frame_len/2`.
pub fn steering_table(grid: &[f64], room: &RoomConfig, frame_len: usize) -> SteeringTable {
    let mut records = Vec::with_capacity(grid.len() * (frame_len / 2 + 1));
    for &d in grid {
        let [a, b] = direct_spectra(d, room, frame_len);
        for (k, (a, b)) in a.iter().zip(&b).enumerate() {
            records.push(SteeringRecord {
                direction_deg: d,
                k,
                re_a: a.re,
                im_a: a.im,
                re_b: b.re,
                im_b: b.im,
            });
        }
    }
    SteeringTable::new("ab", records)
}

/// Ground truth written next to a simulated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub spec: SceneSpec,
    pub directions_deg: Vec<f64>,
    /// `None` when there is no noise or no source energy.
    pub realized_snr_db: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub mixture: AudioClip<f64>,
    /// Reverberant image of each source at both microphones.
    pub images: Vec<[Vec<f64>; 2]>,
    pub noise: [Vec<f64>; 2],
    pub steering: SteeringTable,
}

impl SyntheticScene {
    pub fn directions(&self) -> Vec<f64> {
        self.spec.sources.iter().map(|s| s.direction_deg).collect()
    }

    pub fn speech_energy(&self) -> f64 {
        let n = self.mixture.len();
        (0..2)
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let v: f64 = self.images.iter().map(|img| img[c][i]).sum();
                        v * v
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn realized_snr_db(&self) -> Option<f64> {
        let en = energy(&self.noise[0]) + energy(&self.noise[1]);
        let es = self.speech_energy();
        (en > 0.0 && es > 0.0).then(|| 10.0 * (es / en).log10())
    }

    pub fn truth(&self) -> SceneTruth {
        SceneTruth {
            spec: self.spec.clone(),
            directions_deg: self.directions(),
            realized_snr_db: self.realized_snr_db(),
        }
    }

    /// Writes `mixture.wav`, `truth.json` and `steering.csv` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_wav(&self.mixture, dir.join("mixture.wav"))?;
        let f = std::fs::File::create(dir.join("truth.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &self.truth())?;
        self.steering.save_csv(dir.join("steering.csv"))
    }
}

/// Renders the scene described by `spec`. Identical specs give bitwise
/// identical output.
pub fn synth_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let fs = spec.room.sample_rate;
    let n = spec.samples();
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut images = Vec::with_capacity(spec.sources.len());
    for src in &spec.sources {
        let filter_seed: u64 = master.random();
        let mut sig_rng = ChaCha8Rng::seed_from_u64(master.random());
        let on = ((src.onset_s * fs as f64).round() as usize).min(n);
        let off = ((src.offset_s * fs as f64).round() as usize).min(n);
        let mut dry = vec![0.0; n];
        if off > on {
            let burst = speech_surrogate(off - on, fs, &mut sig_rng);
            let rms = (energy(&burst) / burst.len() as f64).sqrt();
            if rms > 0.0 {
                for (d, b) in dry[on..off].iter_mut().zip(&burst) {
                    *d = b * SOURCE_RMS / rms;
                }
            }
        }
        let filters = gen_filters(src.direction_deg, &spec.room, filter_seed)?;
        images.push(filters.full.map(|h| fft_convolve(&dry, &h)));
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(master.random());
    let noise_filter_seed: u64 = master.random();
    let mut mixture = vec![vec![0.0; n]; 2];
    for img in &images {
        for c in 0..2 {
            for (m, v) in mixture[c].iter_mut().zip(&img[c]) {
                *m += v;
            }
        }
    }
    let speech_energy: f64 = mixture.iter().map(|c| energy(c)).sum();
    let mut noise = [vec![0.0; n], vec![0.0; n]];
    if let Some(snr) = spec.snr_db {
        let white = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| rng.sample(StandardNormal)).collect()
        };
        let src = white(&mut noise_rng);
        let filters = gen_filters(spec.noise_direction_deg, &spec.room, noise_filter_seed)?;
        let directional = filters.full.map(|h| fft_convolve(&src, &h));
        let diffuse = [white(&mut noise_rng), white(&mut noise_rng)];
        let e_dir = energy(&directional[0]) + energy(&directional[1]);
        let e_dif = energy(&diffuse[0]) + energy(&diffuse[1]);
        let reference = if speech_energy > 0.0 {
            speech_energy
        } else {
            2.0 * n as f64 * SOURCE_RMS * SOURCE_RMS
        };
        let target = reference / 10f64.powf(snr / 10.0);
        if e_dir > 0.0 && e_dif > 0.0 {
            let g_dir = (0.5 * target / e_dir).sqrt();
            let g_dif = (0.5 * target / e_dif).sqrt();
            for c in 0..2 {
                for i in 0..n {
                    noise[c][i] = g_dir * directional[c][i] + g_dif * diffuse[c][i];
                }
            }
            // The two components are only nearly orthogonal; rescale the sum.
            let g = (target / (energy(&noise[0]) + energy(&noise[1]))).sqrt();
            for c in noise.iter_mut() {
                for v in c.iter_mut() {
                    *v *= g;
                }
            }
        }
    }
    for c in 0..2 {
        for (m, v) in mixture[c].iter_mut().zip(&noise[c]) {
            *m += v;
        }
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        mixture: AudioClip::new(mixture, fs)?,
        images,
        noise,
        steering: spec.steering_table(),
    })
}

/// Draws `count` distinct grid directions that are pairwise at least
/// `min_sep_deg` apart.
pub fn random_directions(
    grid: &[f64],
    count: usize,
    min_sep_deg: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    for _ in 0..10_000 {
        let mut picked: Vec<f64> = Vec::with_capacity(count);
        for _ in 0..count {
            let d = grid[rng.random_range(0..grid.len())];
            if picked.iter().all(|p| (p - d).abs() >= min_sep_deg - 1e-9) {
                picked.push(d);
            }
        }
        if picked.len() == count {
            picked.sort_by(f64::total_cmp);
            return Ok(picked);
        }
    }
    Err(Error::Scene(format!(
        "cannot place {count} sources {min_sep_deg} degrees apart on the grid"
    )))
}
