use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Multichannel recording with equal-length channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    channels: Vec<Vec<T>>,
    sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn new(channels: Vec<Vec<T>>, sample_rate: u32) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::TooFewChannels(channels.len()));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if let Some(other) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch(len, other.len()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, idx: usize) -> &[T] {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<T>> {
        self.channels
    }
}

fn read_channels<T: Real>(path: &Path) -> Result<(Vec<Vec<T>>, u32)> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let n_ch = usize::from(spec.channels);
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::Input {
                path: path.to_path_buf(),
                msg: format!("unsupported encoding {fmt:?}/{bits} bits"),
            })
        }
    };
    let frames = interleaved.len() / n_ch.max(1);
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(lit(v));
        }
    }
    Ok((channels, spec.sample_rate))
}

/// Reads a multichannel WAV file (PCM 8/16/24/32-bit or float32), scaled to [-1, 1].
pub fn load_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioClip<T>> {
    let (channels, rate) = read_channels(path.as_ref())?;
    AudioClip::new(channels, rate)
}

/// Reads either one multichannel file or a list of mono files stacked as channels.
pub fn load_wav_files<T: Real, P: AsRef<Path>>(paths: &[P]) -> Result<AudioClip<T>> {
    match paths {
        [] => Err(Error::TooFewChannels(0)),
        [single] => load_wav(single),
        many => {
            let mut channels = Vec::new();
            let mut rate = None;
            for p in many {
                let (chs, r) = read_channels::<T>(p.as_ref())?;
                if *rate.get_or_insert(r) != r {
                    return Err(Error::Input {
                        path: p.as_ref().to_path_buf(),
                        msg: format!("sample rate {r} differs from first file"),
                    });
                }
                channels.extend(chs);
            }
            AudioClip::new(channels, rate.unwrap_or(0))
        }
    }
}

/// Writes the clip as 32-bit float WAV.
pub fn write_wav<T: Real>(clip: &AudioClip<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: clip.channel_count() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for n in 0..clip.len() {
        for ch in clip.channels() {
            writer.write_sample(to_f64(ch[n]) as f32).map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)
}
