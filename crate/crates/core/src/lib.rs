//! Audio anti-spoofing toolkit: STFT, augmentation (including frequency
//! masking), duration handling, detection metrics, score fusion and a small
//! linear countermeasure for desk-scale experiments.

pub mod audio;
pub mod augment;
pub mod desk;
pub mod duration;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod stft;

pub use audio::{read_wav, write_wav, Waveform};
pub use error::{Error, Result};
pub use stft::{istft, stft, Spectrogram, StftParams, Window};
