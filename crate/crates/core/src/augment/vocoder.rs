use std::f64::consts::PI;

use ndarray::Array2;
use realfft::num_complex::Complex64;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::stft::{istft, stft, Spectrogram, StftParams};

/// Phase-vocoder time stretch. `rate > 1` speeds up; output has
/// `round(len / rate)` samples and the same pitch.
pub fn time_stretch(x: &Waveform, rate: f64) -> Result<Waveform> {
    if !(0.5..=2.0).contains(&rate) {
        return Err(Error::invalid("rate", format!("{rate} is outside [0.5, 2.0]")));
    }
    let params = StftParams::default();
    let spec = stft(x, &params)?;
    let out_len = (x.len() as f64 / rate).round() as usize;
    let stretched = phase_vocoder(&spec, rate, out_len)?;
    istft(&stretched)
}

fn phase_vocoder(spec: &Spectrogram, rate: f64, out_len: usize) -> Result<Spectrogram> {
    let params = spec.params;
    let n_bins = spec.n_bins();
    let n_in = spec.n_frames();
    let n_out = params.n_frames(out_len);
    let zero = Complex64::new(0.0, 0.0);
    let column = |t: usize, k: usize| if t < n_in { spec.bins[[k, t]] } else { zero };

    // Expected phase advance per hop for each bin center.
    let advance: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * params.hop_length as f64 * k as f64 / params.n_fft as f64)
        .collect();
    let mut phase: Vec<f64> = (0..n_bins).map(|k| spec.bins[[k, 0]].arg()).collect();
    let mut out = Array2::zeros((n_bins, n_out));

    for j in 0..n_out {
        let step = j as f64 * rate;
        let t = step.floor() as usize;
        let alpha = step - t as f64;
        for k in 0..n_bins {
            let c0 = column(t, k);
            let c1 = column(t + 1, k);
            let mag = (1.0 - alpha) * c0.norm() + alpha * c1.norm();
            out[[k, j]] = Complex64::from_polar(mag, phase[k]);
            let mut dphase = c1.arg() - c0.arg() - advance[k];
            dphase -= 2.0 * PI * (dphase / (2.0 * PI)).round();
            phase[k] += advance[k] + dphase;
        }
    }

    let mut stretched = Spectrogram::new(out, params, spec.sample_rate)?;
    stretched.signal_len = out_len;
    Ok(stretched)
}

/// Linear-interpolation resampling to exactly `out_len` samples.
pub fn resample_linear(samples: &[f64], out_len: usize) -> Vec<f64> {
    if samples.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let ratio = samples.len() as f64 / out_len as f64;
    let last = samples.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = (pos.floor() as usize).min(last);
            let frac = pos - k as f64;
            let next = samples[(k + 1).min(last)];
            samples[k] + frac * (next - samples[k])
        })
        .collect()
}

/// Shift pitch by `semitones` keeping the sample count: stretch the length by
/// `2^(semitones / 12)`, then resample back linearly.
pub fn pitch_shift(x: &Waveform, semitones: f64) -> Result<Waveform> {
    if !(-12.0..=12.0).contains(&semitones) {
        return Err(Error::invalid(
            "semitones",
            format!("{semitones} is outside [-12, 12]"),
        ));
    }
    let factor = 2f64.powf(semitones / 12.0);
    let stretched = time_stretch(x, 1.0 / factor)?;
    Ok(x.with_samples(resample_linear(&stretched.samples, x.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SR: u32 = 16000;

    fn sine(freq: f64, seconds: f64) -> Waveform {
        let len = (seconds * SR as f64) as usize;
        let samples = (0..len)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / SR as f64).sin())
            .collect();
        Waveform::new(samples, SR).unwrap()
    }

    fn dominant_hz(x: &Waveform) -> f64 {
        let s = stft(x, &StftParams::default()).unwrap();
        s.dominant_bin() as f64 * SR as f64 / 1024.0
    }

    fn rel_rms(a: &[f64], b: &[f64]) -> f64 {
        let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (err / b.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    #[test]
    fn unit_rate_is_identity() {
        let x = sine(440.0, 1.0);
        let mut y = x.clone();
        for (i, v) in y.samples.iter_mut().enumerate() {
            *v += 0.1 * (2.0 * PI * 2500.0 * i as f64 / SR as f64).cos();
        }
        let z = time_stretch(&y, 1.0).unwrap();
        assert_eq!(z.len(), y.len());
        assert!(rel_rms(&z.samples, &y.samples) < 1e-3);
    }

    #[test]
    fn stretch_length_and_pitch() {
        let x = sine(1000.0, 4.0);
        let y = time_stretch(&x, 2.0).unwrap();
        assert_eq!(y.len(), 32000);
        assert!((dominant_hz(&y) - dominant_hz(&x)).abs() <= SR as f64 / 1024.0);
        assert_eq!(dominant_hz(&x), 1000.0);

        let x = sine(1000.0, 2.0);
        let y = time_stretch(&x, 0.5).unwrap();
        assert_eq!(y.len(), 64000);
        assert!((dominant_hz(&y) - 1000.0).abs() <= SR as f64 / 1024.0);

        let y = time_stretch(&sine(300.0, 1.0), 1.3).unwrap();
        assert_eq!(y.len(), (16000.0f64 / 1.3).round() as usize);
    }

    #[test]
    fn stretch_rejects_bad_rate() {
        let x = sine(1000.0, 1.0);
        assert!(time_stretch(&x, 0.4).is_err());
        assert!(time_stretch(&x, 2.1).is_err());
    }

    #[test]
    fn octave_shifts() {
        let up = pitch_shift(&sine(440.0, 2.0), 12.0).unwrap();
        assert_eq!(up.len(), 32000);
        let f = dominant_hz(&up);
        assert!((f / 880.0 - 1.0).abs() <= 0.02, "{f}");

        let down = pitch_shift(&sine(880.0, 2.0), -12.0).unwrap();
        let f = dominant_hz(&down);
        assert!((f / 440.0 - 1.0).abs() <= 0.02, "{f}");
    }

    #[test]
    fn zero_semitones_is_near_identity() {
        let x = sine(523.0, 1.0);
        let y = pitch_shift(&x, 0.0).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(rel_rms(&y.samples, &x.samples) < 1e-3);
        assert!(pitch_shift(&x, 12.5).is_err());
    }

    #[test]
    fn resample_endpoints() {
        let v = resample_linear(&[0.0, 1.0, 2.0, 3.0], 8);
        assert_eq!(v, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]);
        assert_eq!(resample_linear(&[1.0, 2.0], 2), vec![1.0, 2.0]);
    }
}
