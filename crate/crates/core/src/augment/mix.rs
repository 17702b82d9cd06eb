use realfft::num_complex::Complex64;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::stft::{forward_plan, inverse_plan};

/// Products of lengths below this use the direct sum.
const DIRECT_CONVOLUTION_LIMIT: usize = 1 << 16;

/// Mix `noise` into `x` at `snr_db`.
///
/// The noise is looped or truncated to `x.len()`. If the mixture would clip,
/// the whole mixture is scaled so its peak is 1.
pub fn add_noise(x: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    x.require_non_empty()?;
    noise.require_non_empty()?;
    x.require_same_rate(noise)?;
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", format!("{snr_db} is not finite")));
    }
    let signal_power = x.power();
    if signal_power == 0.0 {
        return Err(Error::SilentInput("input"));
    }
    let looped: Vec<f64> = noise.samples.iter().copied().cycle().take(x.len()).collect();
    let noise_power = looped.iter().map(|v| v * v).sum::<f64>() / looped.len() as f64;
    if noise_power == 0.0 {
        return Err(Error::SilentInput("noise"));
    }
    let gain = (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut mixed: Vec<f64> = x
        .samples
        .iter()
        .zip(&looped)
        .map(|(s, n)| s + gain * n)
        .collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        mixed.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(x.with_samples(mixed))
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn linear_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().saturating_mul(b.len()) <= DIRECT_CONVOLUTION_LIMIT {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &h) in b.iter().enumerate() {
                out[i + j] += x * h;
            }
        }
        return out;
    }

    let n = out_len.next_power_of_two();
    let fwd = forward_plan(n);
    let spectrum = |src: &[f64]| {
        let mut buf = fwd.make_input_vec();
        buf[..src.len()].copy_from_slice(src);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("plan-sized buffers");
        out
    };
    let sa = spectrum(a);
    let sb = spectrum(b);
    let mut product: Vec<Complex64> = sa.iter().zip(&sb).map(|(x, y)| x * y).collect();
    let last = product.len() - 1;
    product[0].im = 0.0;
    product[last].im = 0.0;
    let inv = inverse_plan(n);
    let mut out = inv.make_output_vec();
    inv.process(&mut product, &mut out).expect("plan-sized buffers");
    out.truncate(out_len);
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Reverberate `x` with a room impulse response; the result is truncated to
/// `x.len()` and rescaled to the input RMS.
pub fn convolve_rir(x: &Waveform, rir: &Waveform) -> Result<Waveform> {
    x.require_non_empty()?;
    rir.require_non_empty()?;
    x.require_same_rate(rir)?;
    if rir.samples.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("rir", "impulse response is all zeros"));
    }
    let mut wet = linear_convolve(&x.samples, &rir.samples);
    wet.truncate(x.len());
    let in_rms = x.rms();
    let out_rms = (wet.iter().map(|v| v * v).sum::<f64>() / wet.len() as f64).sqrt();
    if out_rms > 0.0 {
        let gain = in_rms / out_rms;
        wet.iter_mut().for_each(|v| *v *= gain);
    }
    Ok(x.with_samples(wet))
}
