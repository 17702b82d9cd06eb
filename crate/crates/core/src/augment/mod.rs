//! Waveform augmentations for countermeasure training.
//!
//! [`freqmask`] removes everything above a randomly chosen cutoff in the STFT
//! domain, reproducing the high-frequency band gaps seen in codec-processed
//! evaluation audio. The remaining operators are the conventional companions
//! (filters, additive noise, reverberation, tempo and pitch changes), and
//! [`policy`] composes them with per-step application probabilities.

mod filter;
mod mix;
pub mod policy;
mod vocoder;

use rand::Rng;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::stft::{istft, stft, StftParams};

pub use filter::{high_pass, low_pass, Biquad};
pub use mix::{add_noise, convolve_rir, linear_convolve};
pub use policy::{apply_policy, AugmentOp, AugmentPolicy, AugmentStep, Category, NoiseBank};
pub use vocoder::{pitch_shift, resample_linear, time_stretch};

/// Cutoffs (Hz) a band gap is drawn from.
pub const DEFAULT_THRESHOLDS_HZ: [f64; 4] = [4000.0, 5000.0, 6000.0, 7000.0];

fn validate_thresholds(x: &Waveform, thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::invalid("thresholds", "empty threshold set"));
    }
    let mut max = 0.0f64;
    for &t in thresholds {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::invalid("thresholds", format!("{t} Hz is not a positive frequency")));
        }
        max = max.max(t);
    }
    if (x.sample_rate as f64) < 2.0 * max {
        return Err(Error::invalid(
            "thresholds",
            format!(
                "{max} Hz needs a sample rate of at least {} Hz, got {}",
                2.0 * max,
                x.sample_rate
            ),
        ));
    }
    Ok(())
}

/// Band-gap augmentation: zero all STFT rows above a cutoff drawn uniformly
/// from `thresholds`, then resynthesise. Output length equals input length.
pub fn freqmask<R: Rng + ?Sized>(
    x: &Waveform,
    thresholds: &[f64],
    params: &StftParams,
    rng: &mut R,
) -> Result<Waveform> {
    validate_thresholds(x, thresholds)?;
    let cutoff = thresholds[rng.gen_range(0..thresholds.len())];
    freqmask_at(x, cutoff, params)
}

/// [`freqmask`] with the cutoff fixed. Bins exactly at `cutoff_hz` are kept.
pub fn freqmask_at(x: &Waveform, cutoff_hz: f64, params: &StftParams) -> Result<Waveform> {
    validate_thresholds(x, &[cutoff_hz])?;
    let mut spec = stft(x, params)?;
    spec.zero_above(cutoff_hz);
    istft(&spec)
}
