use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Normalised biquad, `a0 = 1`. Processed in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    fn check_cutoff(cutoff_hz: f64, sample_rate: u32) -> Result<f64> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::invalid(
                "cutoff",
                format!("{cutoff_hz} Hz is outside (0, {nyquist})"),
            ));
        }
        Ok(2.0 * PI * cutoff_hz / sample_rate as f64)
    }

    /// Second-order Butterworth low-pass (Q = 1/√2).
    pub fn butterworth_low_pass(cutoff_hz: f64, sample_rate: u32) -> Result<Self> {
        let w0 = Self::check_cutoff(cutoff_hz, sample_rate)?;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        let b1 = 1.0 - cos;
        Ok(Self::from_raw(
            [b1 / 2.0, b1, b1 / 2.0],
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        ))
    }

    /// Second-order Butterworth high-pass (Q = 1/√2).
    pub fn butterworth_high_pass(cutoff_hz: f64, sample_rate: u32) -> Result<Self> {
        let w0 = Self::check_cutoff(cutoff_hz, sample_rate)?;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        let b1 = 1.0 + cos;
        Ok(Self::from_raw(
            [b1 / 2.0, -b1, b1 / 2.0],
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        ))
    }

    /// Causal single pass from zero state.
    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        input
            .iter()
            .map(|&x| {
                let y = b0 * x + z1;
                z1 = b1 * x - a1 * y + z2;
                z2 = b2 * x - a2 * y;
                y
            })
            .collect()
    }
}

pub fn low_pass(x: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let filter = Biquad::butterworth_low_pass(cutoff_hz, x.sample_rate)?;
    Ok(x.with_samples(filter.process(&x.samples)))
}

pub fn high_pass(x: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let filter = Biquad::butterworth_high_pass(cutoff_hz, x.sample_rate)?;
    Ok(x.with_samples(filter.process(&x.samples)))
}
