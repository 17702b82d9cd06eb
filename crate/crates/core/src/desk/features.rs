use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::stft::{fft_frequencies, stft, StftParams};

/// Per-frame band energies are clamped here, in dB.
pub const LOG_FLOOR_DB: f64 = -80.0;

/// Subband log-energy statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub n_bands: usize,
    /// Lowest band edge; the highest is Nyquist.
    pub min_hz: f64,
    pub stft: StftParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_bands: 16,
            min_hz: 50.0,
            stft: StftParams::default(),
        }
    }
}

impl FeatureConfig {
    /// Feature dimension: a mean and a variance per band.
    pub fn dim(&self) -> usize {
        2 * self.n_bands
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.n_bands == 0 {
            return Err(Error::invalid("n_bands", "must be at least 1"));
        }
        if !(self.min_hz > 0.0 && self.min_hz.is_finite()) {
            return Err(Error::invalid("min_hz", format!("{} must be positive", self.min_hz)));
        }
        Ok(())
    }

    /// `n_bands + 1` log-spaced edges from `min_hz` to Nyquist.
    pub fn band_edges(&self, sample_rate: u32) -> Result<Vec<f64>> {
        self.validate()?;
        let nyquist = sample_rate as f64 / 2.0;
        if self.min_hz >= nyquist {
            return Err(Error::invalid(
                "min_hz",
                format!("{} is not below Nyquist ({nyquist} Hz)", self.min_hz),
            ));
        }
        let ratio = (nyquist / self.min_hz).ln() / self.n_bands as f64;
        let mut edges: Vec<f64> = (0..=self.n_bands)
            .map(|i| self.min_hz * (ratio * i as f64).exp())
            .collect();
        edges[self.n_bands] = nyquist;
        Ok(edges)
    }

    /// STFT bin ranges for each band: bins with `lo <= f < hi`, the last
    /// band also taking Nyquist.
    pub fn band_bins(&self, sample_rate: u32) -> Result<Vec<Range<usize>>> {
        let edges = self.band_edges(sample_rate)?;
        let freqs = fft_frequencies(sample_rate, self.stft.n_fft)?;
        let last = self.n_bands - 1;
        (0..self.n_bands)
            .map(|b| {
                let (lo, hi) = (edges[b], edges[b + 1]);
                let start = freqs.partition_point(|&f| f < lo);
                let end = if b == last {
                    freqs.len()
                } else {
                    freqs.partition_point(|&f| f < hi)
                };
                if start >= end {
                    Err(Error::invalid(
                        "n_bands",
                        format!("band {b} ({lo:.1}-{hi:.1} Hz) holds no STFT bin; use fewer bands or a longer n_fft"),
                    ))
                } else {
                    Ok(start..end)
                }
            })
            .collect()
    }
}

/// Per-band mean and variance of per-frame log energy, means first.
///
/// Band energy is the mean bin power scaled so a full-scale sine centred on
/// a bin reads 0 dB.
pub fn extract_features(x: &Waveform, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    if x.len() < cfg.stft.n_fft {
        return Err(Error::InputTooShort {
            needed: cfg.stft.n_fft,
            got: x.len(),
        });
    }
    let bands = cfg.band_bins(x.sample_rate)?;
    let spec = stft(x, &cfg.stft)?;
    let window_sum: f64 = cfg.stft.window.coefficients(cfg.stft.n_fft).iter().sum();
    let full_scale = (window_sum / 2.0).powi(2);

    let n_frames = spec.n_frames();
    let mut sum = vec![0.0; bands.len()];
    let mut sum_sq = vec![0.0; bands.len()];
    for t in 0..n_frames {
        let column = spec.bins.column(t);
        for (b, range) in bands.iter().enumerate() {
            let power: f64 = range.clone().map(|k| column[k].norm_sqr()).sum::<f64>()
                / range.len() as f64;
            let db = if power > 0.0 {
                (10.0 * (power / full_scale).log10()).max(LOG_FLOOR_DB)
            } else {
                LOG_FLOOR_DB
            };
            sum[b] += db;
            sum_sq[b] += db * db;
        }
    }
    let n = n_frames as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let vars = sum_sq
        .iter()
        .zip(&means)
        .map(|(sq, m)| (sq / n - m * m).max(0.0));
    Ok(means.iter().copied().chain(vars).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, amp: f64, len: usize) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let f = extract_features(&Waveform::silence(8000, 16000).unwrap(), &FeatureConfig::default()).unwrap();
        assert_eq!(f.len(), 32);
        assert!(f[..16].iter().all(|&m| m == LOG_FLOOR_DB));
        assert!(f[16..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_band_has_the_largest_mean() {
        let cfg = FeatureConfig::default();
        let edges = cfg.band_edges(16000).unwrap();
        let expected = edges.windows(2).position(|e| e[0] <= 1000.0 && 1000.0 < e[1]).unwrap();
        let f = extract_features(&sine(1000.0, 0.5, 16000), &cfg).unwrap();
        let best = (0..16).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
        assert_eq!(best, expected);
    }

    #[test]
    fn full_scale_bin_centred_sine_reads_zero_db() {
        let params = StftParams::default();
        let spec = stft(&sine(1000.0, 1.0, 16000), &params).unwrap();
        let w: f64 = params.window.coefficients(1024).iter().sum();
        let peak = spec.bins[[64, 10]].norm_sqr() / (w / 2.0).powi(2);
        assert!((10.0 * peak.log10()).abs() < 1e-6);
    }

    #[test]
    fn edges_are_log_spaced() {
        let e = FeatureConfig::default().band_edges(16000).unwrap();
        assert_eq!(e.len(), 17);
        assert_eq!(e[0], 50.0);
        assert_eq!(e[16], 8000.0);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        let r0 = e[1] / e[0];
        assert!(e.windows(2).all(|w| (w[1] / w[0] - r0).abs() < 1e-9));
    }

    #[test]
    fn bands_partition_bins() {
        let bands = FeatureConfig::default().band_bins(16000).unwrap();
        assert!(bands.windows(2).all(|w| w[0].end == w[1].start));
        assert_eq!(bands.last().unwrap().end, 513);
        assert!(bands.iter().all(|r| !r.is_empty()));
    }

    #[test]
    fn errors() {
        let cfg = FeatureConfig::default();
        assert!(matches!(
            extract_features(&sine(100.0, 0.1, 1000), &cfg),
            Err(Error::InputTooShort { needed: 1024, got: 1000 })
        ));
        let crowded = FeatureConfig { n_bands: 64, ..Default::default() };
        assert!(crowded.band_bins(16000).is_err());
        assert!(FeatureConfig { n_bands: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn halving_amplitude_lowers_means_by_6db() {
        let cfg = FeatureConfig::default();
        let mut x = sine(440.0, 0.3, 16000);
        // Broadband component keeps every band well above the floor.
        let mut state = 1u64;
        for v in &mut x.samples {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v += 0.5 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
        }
        let y = x.with_samples(x.samples.iter().map(|v| 0.5 * v).collect());
        let fx = extract_features(&x, &cfg).unwrap();
        let fy = extract_features(&y, &cfg).unwrap();
        let shift = 20.0 * 0.5f64.log10();
        for b in 0..16 {
            assert!((fy[b] - fx[b] - shift).abs() < 1e-9, "band {b}: {} vs {shift}", fy[b] - fx[b]);
            assert!((fy[16 + b] - fx[16 + b]).abs() < 1e-7);
        }
    }

    #[test]
    fn dimension_is_twice_the_band_count() {
        for n in [1, 4, 12, 16] {
            let cfg = FeatureConfig { n_bands: n, ..Default::default() };
            assert_eq!(extract_features(&sine(300.0, 0.2, 4096), &cfg).unwrap().len(), cfg.dim());
        }
    }
}
