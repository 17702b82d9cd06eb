//! Probabilistic augmentation chains.
//!
//! A policy is an ordered list of steps, each applied with its own probability.
//! For one utterance all coin flips are drawn first, in step order, and the
//! parameters of the steps that fired are drawn afterwards from the same
//! generator. Steps with probability exactly 0 or 1 consume no coin.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    add_noise, convolve_rir, freqmask, high_pass, low_pass, pitch_shift, time_stretch,
    DEFAULT_THRESHOLDS_HZ,
};
use crate::audio::{read_wav, Waveform};
use crate::error::{Error, Result};
use crate::stft::StftParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Noise,
    Music,
    Rir,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Noise => "noise",
            Category::Music => "music",
            Category::Rir => "rir",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "noise" => Ok(Category::Noise),
            "music" => Ok(Category::Music),
            "rir" => Ok(Category::Rir),
            other => Err(format!("unknown category `{other}` (expected noise, music or rir)")),
        }
    }
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS_HZ.to_vec()
}
fn default_min_snr() -> f64 {
    5.0
}
fn default_max_snr() -> f64 {
    20.0
}
fn default_noise_category() -> Category {
    Category::Noise
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentOp {
    Freqmask {
        #[serde(default = "default_thresholds")]
        thresholds_hz: Vec<f64>,
    },
    LowPass {
        min_cutoff_hz: f64,
        max_cutoff_hz: f64,
    },
    HighPass {
        min_cutoff_hz: f64,
        max_cutoff_hz: f64,
    },
    /// Additive noise or music from the bank.
    Noise {
        #[serde(default = "default_noise_category")]
        category: Category,
        #[serde(default = "default_min_snr")]
        min_snr_db: f64,
        #[serde(default = "default_max_snr")]
        max_snr_db: f64,
    },
    /// Convolution with an impulse response from the bank.
    Reverb,
    TimeStretch {
        min_rate: f64,
        max_rate: f64,
    },
    PitchShift {
        min_semitones: f64,
        max_semitones: f64,
    },
}

fn check_range(name: &'static str, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::invalid(name, format!("[{lo}, {hi}] is not a valid range")));
    }
    Ok(())
}

fn draw<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

impl AugmentOp {
    pub fn freqmask() -> Self {
        AugmentOp::Freqmask {
            thresholds_hz: default_thresholds(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AugmentOp::Freqmask { .. } => "freqmask",
            AugmentOp::LowPass { .. } => "low_pass",
            AugmentOp::HighPass { .. } => "high_pass",
            AugmentOp::Noise { .. } => "noise",
            AugmentOp::Reverb => "reverb",
            AugmentOp::TimeStretch { .. } => "time_stretch",
            AugmentOp::PitchShift { .. } => "pitch_shift",
        }
    }

    /// Bank category this op samples from, if any.
    pub fn bank_category(&self) -> Option<Category> {
        match self {
            AugmentOp::Noise { category, .. } => Some(*category),
            AugmentOp::Reverb => Some(Category::Rir),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AugmentOp::Freqmask { thresholds_hz } => {
                if thresholds_hz.is_empty() {
                    return Err(Error::invalid("thresholds_hz", "empty threshold set"));
                }
                Ok(())
            }
            AugmentOp::LowPass {
                min_cutoff_hz,
                max_cutoff_hz,
            }
            | AugmentOp::HighPass {
                min_cutoff_hz,
                max_cutoff_hz,
            } => {
                check_range("cutoff_hz", *min_cutoff_hz, *max_cutoff_hz)?;
                if *min_cutoff_hz <= 0.0 {
                    return Err(Error::invalid("cutoff_hz", "must be positive"));
                }
                Ok(())
            }
            AugmentOp::Noise {
                category,
                min_snr_db,
                max_snr_db,
            } => {
                if *category == Category::Rir {
                    return Err(Error::invalid("category", "additive noise cannot use rir entries"));
                }
                check_range("snr_db", *min_snr_db, *max_snr_db)
            }
            AugmentOp::Reverb => Ok(()),
            AugmentOp::TimeStretch { min_rate, max_rate } => {
                check_range("rate", *min_rate, *max_rate)?;
                if *min_rate < 0.5 || *max_rate > 2.0 {
                    return Err(Error::invalid("rate", "must lie within [0.5, 2.0]"));
                }
                Ok(())
            }
            AugmentOp::PitchShift {
                min_semitones,
                max_semitones,
            } => {
                check_range("semitones", *min_semitones, *max_semitones)?;
                if *min_semitones < -12.0 || *max_semitones > 12.0 {
                    return Err(Error::invalid("semitones", "must lie within [-12, 12]"));
                }
                Ok(())
            }
        }
    }

    pub fn apply<R: Rng + ?Sized>(
        &self,
        x: &Waveform,
        bank: &NoiseBank,
        stft: &StftParams,
        rng: &mut R,
    ) -> Result<Waveform> {
        match self {
            AugmentOp::Freqmask { thresholds_hz } => freqmask(x, thresholds_hz, stft, rng),
            AugmentOp::LowPass {
                min_cutoff_hz,
                max_cutoff_hz,
            } => low_pass(x, draw(rng, *min_cutoff_hz, *max_cutoff_hz)),
            AugmentOp::HighPass {
                min_cutoff_hz,
                max_cutoff_hz,
            } => high_pass(x, draw(rng, *min_cutoff_hz, *max_cutoff_hz)),
            AugmentOp::Noise {
                category,
                min_snr_db,
                max_snr_db,
            } => {
                let noise = bank.pick(*category, rng)?;
                let snr = draw(rng, *min_snr_db, *max_snr_db);
                add_noise(x, noise, snr)
            }
            AugmentOp::Reverb => {
                let rir = bank.pick(Category::Rir, rng)?;
                convolve_rir(x, rir)
            }
            AugmentOp::TimeStretch { min_rate, max_rate } => {
                time_stretch(x, draw(rng, *min_rate, *max_rate))
            }
            AugmentOp::PitchShift {
                min_semitones,
                max_semitones,
            } => pitch_shift(x, draw(rng, *min_semitones, *max_semitones)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentStep {
    pub probability: f64,
    #[serde(flatten)]
    pub op: AugmentOp,
}

impl AugmentStep {
    pub fn new(op: AugmentOp, probability: f64) -> Self {
        Self { probability, op }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stft: StftParams,
    #[serde(default)]
    pub steps: Vec<AugmentStep>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::empty(0)
    }
}

impl AugmentPolicy {
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            stft: StftParams::default(),
            steps: Vec::new(),
        }
    }

    pub fn new(seed: u64, steps: Vec<AugmentStep>) -> Self {
        Self {
            seed,
            stft: StftParams::default(),
            steps,
        }
    }

    /// Single-step band-gap policy with application probability `p`.
    pub fn freqmask(seed: u64, p: f64) -> Self {
        Self::new(seed, vec![AugmentStep::new(AugmentOp::freqmask(), p)])
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let policy: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        for step in &self.steps {
            if !(0.0..=1.0).contains(&step.probability) {
                return Err(Error::invalid(
                    "probability",
                    format!("{} for step `{}` is outside [0, 1]", step.probability, step.op.name()),
                ));
            }
            step.op.validate()?;
        }
        Ok(())
    }

    /// Every category referenced by some step must be non-empty in `bank`.
    pub fn check_bank(&self, bank: &NoiseBank) -> Result<()> {
        for step in &self.steps {
            if let Some(cat) = step.op.bank_category() {
                if bank.count(cat) == 0 {
                    return Err(Error::Config(format!(
                        "step `{}` needs `{}` entries but the noise bank has none",
                        step.op.name(),
                        cat.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Generator for one utterance. `stream` is the utterance index, `epoch`
    /// separates training passes; distinct pairs give independent streams.
    pub fn rng(&self, epoch: u64, stream: u64) -> ChaCha8Rng {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(stream);
        rng
    }

    /// Draw the coin for every step.
    pub fn draw_coins<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        self.steps
            .iter()
            .map(|s| {
                if s.probability <= 0.0 {
                    false
                } else if s.probability >= 1.0 {
                    true
                } else {
                    rng.gen::<f64>() < s.probability
                }
            })
            .collect()
    }

    /// Apply the steps whose coin came up, in listed order.
    pub fn apply_fired<R: Rng + ?Sized>(
        &self,
        x: &Waveform,
        fired: &[bool],
        bank: &NoiseBank,
        rng: &mut R,
    ) -> Result<Waveform> {
        let mut out = x.clone();
        for (step, _) in self.steps.iter().zip(fired).filter(|(_, &f)| f) {
            out = step.op.apply(&out, bank, &self.stft, rng)?;
        }
        Ok(out)
    }
}

/// Apply `policy` to one utterance using generator stream `stream`.
pub fn apply_policy(
    x: &Waveform,
    policy: &AugmentPolicy,
    bank: &NoiseBank,
    stream: u64,
) -> Result<Waveform> {
    policy.validate()?;
    policy.check_bank(bank)?;
    let mut rng = policy.rng(0, stream);
    let fired = policy.draw_coins(&mut rng);
    policy.apply_fired(x, &fired, bank, &mut rng)
}

/// Noise, music and impulse-response recordings for additive and
/// convolutional augmentation.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    entries: Vec<(Waveform, Category)>,
}

impl NoiseBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, wav: Waveform, category: Category) -> Result<()> {
        wav.require_non_empty()?;
        if let Some((first, _)) = self.entries.first() {
            first.require_same_rate(&wav)?;
        }
        self.entries.push((wav, category));
        Ok(())
    }

    pub fn sample_rate(&self) -> Option<u32> {
        self.entries.first().map(|(w, _)| w.sample_rate)
    }

    pub fn count(&self, category: Category) -> usize {
        self.entries.iter().filter(|(_, c)| *c == category).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Uniform pick within `category`.
    pub fn pick<R: Rng + ?Sized>(&self, category: Category, rng: &mut R) -> Result<&Waveform> {
        let n = self.count(category);
        if n == 0 {
            return Err(Error::Config(format!(
                "noise bank has no `{}` entries",
                category.as_str()
            )));
        }
        let k = rng.gen_range(0..n);
        Ok(self
            .entries
            .iter()
            .filter(|(_, c)| *c == category)
            .nth(k)
            .map(|(w, _)| w)
            .expect("k < count"))
    }

    /// Load a `<path>\t<category>` manifest. Relative paths resolve against the
    /// manifest's directory; blank and `#` lines are skipped.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut bank = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(path, i + 1, "expected `<path>\\t<category>`"));
            }
            let category: Category = fields[1]
                .trim()
                .parse()
                .map_err(|e: String| Error::parse(path, i + 1, e))?;
            let wav = read_wav(base.join(fields[0]))?;
            bank.push(wav, category)?;
        }
        Ok(bank)
    }
}
