//! Centered short-time Fourier transform and its overlap-add inverse.
//!
//! Frames are centered: the signal is reflection-padded by `n_fft / 2` on both
//! sides, so a signal of `len` samples yields `len / hop + 1` frames. The inverse
//! divides the overlap-added synthesis frames by the summed squared window, which
//! reconstructs the input exactly whenever that sum is nonzero everywhere.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Window-square sums below this are treated as unrecoverable.
pub const MIN_WINDOW_SQUARE_SUM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann.
    #[default]
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / nf;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop_length: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop_length: 256,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    pub fn new(n_fft: usize, hop_length: usize, window: Window) -> Result<Self> {
        let params = Self {
            n_fft,
            hop_length,
            window,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_power_of_two() {
            return Err(Error::invalid(
                "n_fft",
                format!("{} is not a power of two >= 2", self.n_fft),
            ));
        }
        if self.hop_length == 0 || self.hop_length > self.n_fft {
            return Err(Error::invalid(
                "hop_length",
                format!("{} must be in 1..={}", self.hop_length, self.n_fft),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a centered STFT of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        len / self.hop_length + 1
    }
}

/// One-sided complex STFT, bins × frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub params: StftParams,
    pub sample_rate: u32,
    /// Length of the signal the inverse transform should produce.
    pub signal_len: usize,
}

impl Spectrogram {
    /// Wrap a bins × frames matrix; the inverse will produce `hop * (frames - 1)` samples.
    pub fn new(bins: Array2<Complex64>, params: StftParams, sample_rate: u32) -> Result<Self> {
        params.validate()?;
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if bins.nrows() != params.n_bins() {
            return Err(Error::Shape(format!(
                "{} rows, expected n_fft/2 + 1 = {}",
                bins.nrows(),
                params.n_bins()
            )));
        }
        if bins.ncols() == 0 {
            return Err(Error::Shape("spectrogram has no frames".into()));
        }
        let signal_len = params.hop_length * (bins.ncols() - 1);
        Ok(Self {
            bins,
            params,
            sample_rate,
            signal_len,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        bin_frequencies(self.sample_rate, self.params.n_fft)
    }

    /// Zero every row whose bin-center frequency is strictly above `cutoff_hz`.
    pub fn zero_above(&mut self, cutoff_hz: f64) {
        for (k, f) in self.frequencies().into_iter().enumerate() {
            if f > cutoff_hz {
                self.bins.row_mut(k).fill(Complex64::new(0.0, 0.0));
            }
        }
    }

    /// Sum of |S|² over all frames for bins with center frequency in `(lo_hz, hi_hz]`.
    pub fn band_energy(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.frequencies()
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > lo_hz && f <= hi_hz)
            .map(|(k, _)| self.bins.row(k).iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Energy above `cutoff_hz`, see [`Spectrogram::band_energy`].
    pub fn energy_above(&self, cutoff_hz: f64) -> f64 {
        self.band_energy(cutoff_hz, f64::INFINITY)
    }

    /// Total spectral energy scaled back to time-domain units.
    ///
    /// One-sided bins are doubled except DC and Nyquist, each frame is divided by
    /// `n_fft` (Parseval), and the sum is divided by the overlap gain
    /// `Σ w² / hop`. For a signal that is silent within `n_fft` samples of either
    /// end this equals `Σ x²` exactly.
    pub fn time_domain_energy(&self) -> f64 {
        let n = self.params.n_fft;
        let last = self.n_bins() - 1;
        let mut total = 0.0;
        for (k, row) in self.bins.rows().into_iter().enumerate() {
            let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
            total += weight * row.iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        let window_energy: f64 = self
            .params
            .window
            .coefficients(n)
            .iter()
            .map(|w| w * w)
            .sum();
        total / n as f64 / (window_energy / self.params.hop_length as f64)
    }

    /// Peak-magnitude bin of the frame-averaged magnitude spectrum.
    pub fn dominant_bin(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, row) in self.bins.rows().into_iter().enumerate() {
            let m: f64 = row.iter().map(|c| c.norm()).sum();
            if m > best.1 {
                best = (k, m);
            }
        }
        best.0
    }
}

/// Lower end of the image dB range; 0 dB is a full-scale sine on a bin center.
pub const IMAGE_FLOOR_DB: f64 = -80.0;

/// 8-bit grayscale log-magnitude image, row 0 = highest frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Map `[IMAGE_FLOOR_DB, 0]` dB linearly onto `[0, 255]`; silence is black.
    pub fn from_spectrogram(spec: &Spectrogram) -> Self {
        let (height, width) = (spec.n_bins(), spec.n_frames());
        let window_sum: f64 = spec.params.window.coefficients(spec.params.n_fft).iter().sum();
        let full_scale = window_sum / 2.0;
        let mut pixels = Vec::with_capacity(width * height);
        for k in (0..height).rev() {
            for t in 0..width {
                let mag = spec.bins[[k, t]].norm() / full_scale;
                let level = if mag > 0.0 {
                    ((20.0 * mag.log10() - IMAGE_FLOOR_DB) / -IMAGE_FLOOR_DB).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                pixels.push((level * 255.0).round() as u8);
            }
        }
        Self { width, height, pixels }
    }

    /// Binary portable graymap (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

/// Bin-center frequencies `k * sample_rate / n_fft`, `k = 0..=n_fft/2`.
pub fn fft_frequencies(sample_rate: u32, n_fft: usize) -> Result<Vec<f64>> {
    if sample_rate == 0 {
        return Err(Error::invalid("sample_rate", "must be positive"));
    }
    if n_fft < 2 || !n_fft.is_power_of_two() {
        return Err(Error::invalid(
            "n_fft",
            format!("{n_fft} is not a power of two >= 2"),
        ));
    }
    Ok(bin_frequencies(sample_rate, n_fft))
}

fn bin_frequencies(sample_rate: u32, n_fft: usize) -> Vec<f64> {
    let sr = sample_rate as f64;
    (0..=n_fft / 2).map(|k| k as f64 * sr / n_fft as f64).collect()
}

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let len = x.len();
    let mut out = Vec::with_capacity(len + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|j| x[len - 2 - j]));
    out
}

pub fn stft(x: &Waveform, params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let n = params.n_fft;
    if x.len() < n {
        return Err(Error::InputTooShort {
            needed: n,
            got: x.len(),
        });
    }
    let window = params.window.coefficients(n);
    let padded = reflect_pad(&x.samples, n / 2);
    let n_frames = params.n_frames(x.len());

    let plan = forward_plan(n);
    let mut frame = plan.make_input_vec();
    let mut spectrum = plan.make_output_vec();
    let mut scratch = plan.make_scratch_vec();
    let mut bins = Array2::zeros((params.n_bins(), n_frames));

    for t in 0..n_frames {
        let start = t * params.hop_length;
        for (dst, (s, w)) in frame
            .iter_mut()
            .zip(padded[start..start + n].iter().zip(&window))
        {
            *dst = s * w;
        }
        plan.process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
            .expect("buffer sizes come from the plan");
        bins.column_mut(t).assign(&ndarray::ArrayView1::from(&spectrum[..]));
    }

    Ok(Spectrogram {
        bins,
        params: *params,
        sample_rate: x.sample_rate,
        signal_len: x.len(),
    })
}

pub fn istft(spec: &Spectrogram) -> Result<Waveform> {
    let params = spec.params;
    params.validate()?;
    let n = params.n_fft;
    let hop = params.hop_length;
    if spec.n_bins() != params.n_bins() {
        return Err(Error::Shape(format!(
            "{} rows, expected n_fft/2 + 1 = {}",
            spec.n_bins(),
            params.n_bins()
        )));
    }
    let n_frames = spec.n_frames();
    let window = params.window.coefficients(n);
    let total = n + hop * n_frames.saturating_sub(1);
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];

    let plan = inverse_plan(n);
    let mut spectrum = plan.make_input_vec();
    let mut frame = plan.make_output_vec();
    let mut scratch = plan.make_scratch_vec();
    let last = spectrum.len() - 1;
    let scale = 1.0 / n as f64;

    for t in 0..n_frames {
        for (dst, src) in spectrum.iter_mut().zip(spec.bins.column(t).iter()) {
            *dst = *src;
        }
        // A real signal has purely real DC and Nyquist bins.
        spectrum[0].im = 0.0;
        spectrum[last].im = 0.0;
        plan.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .expect("buffer sizes come from the plan");
        let start = t * hop;
        for i in 0..n {
            out[start + i] += frame[i] * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let pad = n / 2;
    let mut samples = Vec::with_capacity(spec.signal_len);
    for i in 0..spec.signal_len {
        let j = pad + i;
        let w = norm.get(j).copied().unwrap_or(0.0);
        if w < MIN_WINDOW_SQUARE_SUM {
            return Err(Error::Reconstruction { index: i, value: w });
        }
        samples.push(out[j] / w);
    }
    Waveform::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, sr: u32, len: usize) -> Waveform {
        let samples = (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    /// Direct O(n²) DFT of one frame, independent of the FFT path.
    fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
        v.into_iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
            .0
    }

    #[test]
    fn frequencies_closed_form() {
        let f = fft_frequencies(16000, 1024).unwrap();
        assert_eq!(f.len(), 513);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 15.625);
        assert_eq!(f[2], 31.25);
        assert_eq!(*f.last().unwrap(), 8000.0);
        assert_eq!(fft_frequencies(16000, 4).unwrap(), vec![0.0, 4000.0, 8000.0]);
        for sr in [8000, 16000, 22050, 44100] {
            for n in [2, 64, 512, 2048] {
                let f = fft_frequencies(sr, n).unwrap();
                assert_eq!(*f.last().unwrap(), sr as f64 / 2.0);
                assert!(f.windows(2).all(|w| w[1] > w[0]));
            }
        }
        assert!(fft_frequencies(16000, 1000).is_err());
    }

    #[test]
    fn zeros_give_zero_bins() {
        let x = Waveform::silence(16000, 16000).unwrap();
        let s = stft(&x, &StftParams::default()).unwrap();
        assert_eq!(s.n_frames(), 16000 / 256 + 1);
        assert!(s.bins.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let sr = 16000;
        let x = sine(1000.0, sr, 16000);
        let params = StftParams::default();
        let s = stft(&x, &params).unwrap();
        let expected = (1000.0f64 * 1024.0 / 16000.0).round() as usize;
        assert_eq!(expected, 64);

        // Cross-check one interior frame against a brute-force DFT.
        let t = 10;
        let start = t * params.hop_length - params.n_fft / 2;
        let window = Window::Hann.coefficients(params.n_fft);
        let frame: Vec<f64> = (0..params.n_fft)
            .map(|i| x.samples[start + i] * window[i])
            .collect();
        let dft = dft_magnitudes(&frame);
        assert_eq!(argmax(dft.iter().copied()), expected);
        for (k, m) in dft.iter().enumerate() {
            assert!((s.bins[[k, t]].norm() - m).abs() < 1e-8 * (1.0 + m));
        }

        // Interior frames: those whose window lies inside the signal.
        let interior = 2..s.n_frames() - 2;
        for t in interior {
            assert_eq!(argmax(s.bins.column(t).iter().map(|c| c.norm())), expected);
        }
    }

    #[test]
    fn round_trip_reconstructs() {
        let x = sine(440.0, 16000, 5000);
        let mut noisy = x.clone();
        for (i, s) in noisy.samples.iter_mut().enumerate() {
            *s += ((i * 7919) % 101) as f64 / 500.0 - 0.1;
        }
        let y = istft(&stft(&noisy, &StftParams::default()).unwrap()).unwrap();
        assert_eq!(y.len(), noisy.len());
        let err: f64 = y
            .samples
            .iter()
            .zip(&noisy.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let rel = (err / noisy.samples.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert!(rel < 1e-6, "relative rms error {rel}");
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let params = StftParams::default();
        let bins = Array2::zeros((params.n_bins(), 12));
        let spec = Spectrogram::new(bins, params, 16000).unwrap();
        let y = istft(&spec).unwrap();
        assert_eq!(y.len(), 11 * 256);
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dc_only_spectrogram_matches_hand_overlap_add() {
        // Three frames, n_fft = 8, hop = 2, DC value c per frame.
        let params = StftParams::new(8, 2, Window::Hann).unwrap();
        let values = [4.0, 8.0, 4.0];
        let mut bins = Array2::zeros((5, 3));
        for (t, v) in values.iter().enumerate() {
            bins[[0, t]] = Complex64::new(*v, 0.0);
        }
        let spec = Spectrogram::new(bins, params, 8).unwrap();
        let y = istft(&spec).unwrap();

        // Each inverse frame is the constant c/8; overlap-add with w, divide by Σw².
        let w = Window::Hann.coefficients(8);
        let mut num = [0.0; 12];
        let mut den = [0.0; 12];
        for (t, v) in values.iter().enumerate() {
            for i in 0..8 {
                num[2 * t + i] += v / 8.0 * w[i];
                den[2 * t + i] += w[i] * w[i];
            }
        }
        assert_eq!(y.len(), 4);
        for i in 0..4 {
            let expected = num[4 + i] / den[4 + i];
            assert!((y.samples[i] - expected).abs() < 1e-12);
            assert!(y.samples[i] > 0.0);
        }
    }

    #[test]
    fn degenerate_normalization_is_an_error() {
        // Hann with hop = n_fft has zero window-square sum at frame boundaries.
        let params = StftParams::new(16, 16, Window::Hann).unwrap();
        let x = sine(100.0, 1000, 64);
        let s = stft(&x, &params).unwrap();
        assert!(matches!(istft(&s), Err(Error::Reconstruction { .. })));
    }

    #[test]
    fn parameter_errors() {
        let x = Waveform::silence(100, 16000).unwrap();
        assert!(matches!(
            stft(&x, &StftParams::default()),
            Err(Error::InputTooShort { needed: 1024, got: 100 })
        ));
        let bad = StftParams {
            n_fft: 1000,
            ..StftParams::default()
        };
        let y = Waveform::silence(4000, 16000).unwrap();
        assert!(matches!(
            stft(&y, &bad),
            Err(Error::InvalidParameter { name: "n_fft", .. })
        ));
        assert!(StftParams::new(64, 128, Window::Hann).is_err());
    }

    #[test]
    fn gray_image_layout_and_levels() {
        let params = StftParams::new(8, 2, Window::Hann).unwrap();
        let silent = stft(&Waveform::silence(16, 8000).unwrap(), &params).unwrap();
        let img = GrayImage::from_spectrogram(&silent);
        assert_eq!((img.width, img.height), (9, 5));
        assert!(img.pixels.iter().all(|&p| p == 0));
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n9 5\n255\n"));
        assert_eq!(pgm.len(), 11 + 45);

        // Full-scale sine at bin 64 lights the matching row at 255.
        let x = Waveform::new(
            (0..16000).map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin()).collect(),
            16000,
        )
        .unwrap();
        let img = GrayImage::from_spectrogram(&stft(&x, &StftParams::default()).unwrap());
        assert_eq!(img.row(512 - 64)[20], 255);
        assert!(img.row(0)[20] < 64);
    }
}
