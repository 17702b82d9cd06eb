use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::UtteranceSource;
use crate::audio::{write_wav, Waveform};
use crate::augment::{freqmask, DEFAULT_THRESHOLDS_HZ};
use crate::duration::{Manifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::metrics::Label;
use crate::stft::StftParams;

/// Mixed into the seed for the gapped variant's threshold draws.
const GAP_SEED_SALT: u64 = 0x6761_7070_6564_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Freqmask every utterance at a random threshold.
    pub gapped: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            seed: 0,
            sample_rate: 16000,
            min_duration_s: 2.0,
            max_duration_s: 12.0,
            gapped: false,
        }
    }
}

/// Everything drawn for one utterance before rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtterancePlan {
    pub label: Label,
    pub duration_s: f64,
    pub f0_hz: f64,
    pub n_harmonics: usize,
    /// Spoof artifact frequency, `None` for bona fide.
    pub artifact_hz: Option<f64>,
    /// Freqmask cutoff for the gapped variant.
    pub gap_hz: Option<f64>,
}

/// Deterministic synthetic corpus rendered on demand.
///
/// Even indices are bona fide, odd indices spoof. Bona fide utterances are
/// a few harmonics of a random F0 under a slow amplitude envelope plus pink
/// noise; spoofs add a steady tone between 5 and 7.5 kHz at -20 dBFS.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub cfg: SynthConfig,
}

pub const ARTIFACT_BAND_HZ: (f64, f64) = (5000.0, 7500.0);
pub const ARTIFACT_AMPLITUDE: f64 = 0.1;
pub const NOISE_RMS: f64 = 0.031_622_776_601_683_79;

impl SynthCorpus {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        if cfg.n_per_class == 0 {
            return Err(Error::invalid("n_per_class", "must be at least 1"));
        }
        if !(cfg.min_duration_s > 0.0 && cfg.min_duration_s <= cfg.max_duration_s) {
            return Err(Error::invalid(
                "duration",
                format!("[{}, {}] s is not a valid range", cfg.min_duration_s, cfg.max_duration_s),
            ));
        }
        if (cfg.sample_rate as f64) < 2.0 * ARTIFACT_BAND_HZ.1 + 500.0 {
            return Err(Error::invalid(
                "sample_rate",
                format!("{} Hz cannot carry the 7.5 kHz artifact", cfg.sample_rate),
            ));
        }
        Ok(Self { cfg })
    }

    pub fn utt_id(&self, i: usize) -> String {
        let prefix = if self.cfg.gapped { "gap" } else { "syn" };
        format!("{prefix}{:03}_{i:05}", self.cfg.seed % 1000)
    }

    fn rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(i as u64);
        rng
    }

    pub fn plan(&self, i: usize) -> UtterancePlan {
        self.draw_plan(i, &mut self.rng(i))
    }

    fn draw_plan(&self, i: usize, rng: &mut ChaCha8Rng) -> UtterancePlan {
        let label = if i.is_multiple_of(2) { Label::Bonafide } else { Label::Spoof };
        let duration_s = rng.gen_range(self.cfg.min_duration_s..=self.cfg.max_duration_s);
        let f0_hz = rng.gen_range(80.0..=300.0);
        let n_harmonics = rng.gen_range(3..=5);
        let artifact = rng.gen_range(ARTIFACT_BAND_HZ.0..=ARTIFACT_BAND_HZ.1);
        let gap = DEFAULT_THRESHOLDS_HZ[rng.gen_range(0..DEFAULT_THRESHOLDS_HZ.len())];
        UtterancePlan {
            label,
            duration_s,
            f0_hz,
            n_harmonics,
            artifact_hz: (label == Label::Spoof).then_some(artifact),
            gap_hz: self.cfg.gapped.then_some(gap),
        }
    }

    /// Render utterance `i`.
    pub fn render(&self, i: usize) -> Result<Waveform> {
        let mut rng = self.rng(i);
        let plan = self.draw_plan(i, &mut rng);
        let sr = self.cfg.sample_rate as f64;
        let len = (plan.duration_s * sr).round() as usize;

        let amp = rng.gen_range(0.08..=0.16);
        let env_hz = rng.gen_range(2.0..=6.0);
        let env_phase = rng.gen_range(0.0..2.0 * PI);
        let mut samples = vec![0.0; len];
        for h in 1..=plan.n_harmonics {
            let freq = plan.f0_hz * h as f64;
            add_tone(&mut samples, freq, amp / h as f64, rng.gen_range(0.0..2.0 * PI), sr);
        }
        let mut env = vec![0.6; len];
        add_tone(&mut env, env_hz, 0.4, env_phase, sr);
        for (s, e) in samples.iter_mut().zip(&env) {
            *s *= e;
        }

        let pink = pink_noise(len, &mut rng);
        let rms = (pink.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms > 0.0 {
            for (s, p) in samples.iter_mut().zip(&pink) {
                *s += p * NOISE_RMS / rms;
            }
        }
        if let Some(freq) = plan.artifact_hz {
            add_tone(&mut samples, freq, ARTIFACT_AMPLITUDE, rng.gen_range(0.0..2.0 * PI), sr);
        }
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.99 {
            samples.iter_mut().for_each(|v| *v *= 0.99 / peak);
        }
        let wav = Waveform::new(samples, self.cfg.sample_rate)?;
        match plan.gap_hz {
            Some(cutoff) => {
                let mut gap_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ GAP_SEED_SALT);
                gap_rng.set_stream(i as u64);
                // Single-threshold draw reproduces the planned cutoff.
                freqmask(&wav, &[cutoff], &StftParams::default(), &mut gap_rng)
            }
            None => Ok(wav),
        }
    }

    /// Write every utterance as `<utt_id>.wav` plus `manifest.tsv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Manifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut records = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let wav = self.render(i)?;
            let id = self.utt_id(i);
            let name = format!("{id}.wav");
            write_wav(dir.join(&name), &wav)?;
            records.push(ManifestRecord {
                utt_id: id,
                path: name,
                label: Some(self.plan(i).label),
                duration_s: Some(wav.duration_s()),
            });
        }
        let manifest = Manifest::new(records, dir)?;
        std::fs::write(dir.join("manifest.tsv"), manifest.to_tsv())?;
        Ok(manifest)
    }
}

impl UtteranceSource for SynthCorpus {
    fn len(&self) -> usize {
        2 * self.cfg.n_per_class
    }

    fn utt_id(&self, i: usize) -> String {
        SynthCorpus::utt_id(self, i)
    }

    fn label(&self, i: usize) -> Option<Label> {
        Some(self.plan(i).label)
    }

    fn load(&self, i: usize) -> Result<Waveform> {
        self.render(i)
    }
}

/// Generate a corpus on disk.
pub fn synth_corpus(cfg: SynthConfig, dir: impl AsRef<Path>) -> Result<Manifest> {
    SynthCorpus::new(cfg)?.write(dir)
}

/// Add `amp * cos(2π f n / sr + phase)` by complex rotation, renormalised
/// periodically to stop amplitude drift.
fn add_tone(samples: &mut [f64], freq: f64, amp: f64, phase: f64, sr: f64) {
    let step = 2.0 * PI * freq / sr;
    let (sin_s, cos_s) = step.sin_cos();
    let (mut im, mut re) = phase.sin_cos();
    for (n, s) in samples.iter_mut().enumerate() {
        *s += amp * re;
        let r = re * cos_s - im * sin_s;
        im = re * sin_s + im * cos_s;
        re = r;
        if n % 4096 == 4095 {
            let norm = re.hypot(im);
            re /= norm;
            im /= norm;
        }
    }
}

/// Paul Kellet's refined pink-noise filter over uniform white noise.
fn pink_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..len)
        .map(|_| {
            let white = 2.0 * rng.gen::<f64>() - 1.0;
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let out = b[..6].iter().sum::<f64>() + b[6] + white * 0.5362;
            b[6] = white * 0.115926;
            out
        })
        .collect()
}
