//! Audio ingestion and short-time Fourier analysis.

mod audio;
mod stft;

pub use audio::{load_wav, load_wav_files, write_wav, AudioClip};
pub use stft::{stft, stft_clip, Spectrogram, StftConfig, Window};
