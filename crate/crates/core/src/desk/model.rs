use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureConfig};
use super::UtteranceSource;
use crate::audio::Waveform;
use crate::augment::{AugmentPolicy, NoiseBank};
use crate::error::{Error, Result};
use crate::metrics::{Label, ScoreSet};

pub const MODEL_MAGIC: &[u8; 4] = b"BGDM";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub lr_halving_period: usize,
    pub bonafide_weight: f64,
    pub spoof_weight: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 5e-4,
            epochs: 20,
            lr_halving_period: 2,
            bonafide_weight: 10.0,
            spoof_weight: 1.0,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid("lr0", format!("{} must be positive", self.lr0)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.lr_halving_period == 0 {
            return Err(Error::invalid("lr_halving_period", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        for (name, w) in [("bonafide_weight", self.bonafide_weight), ("spoof_weight", self.spoof_weight)] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(name, format!("{w} must be positive")));
            }
        }
        Ok(())
    }

    /// Step size for zero-based `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.lr_halving_period) as i32;
        self.lr0 * 0.5f64.powi(halvings)
    }

    pub fn class_weight(&self, label: Label) -> f64 {
        match label {
            Label::Bonafide => self.bonafide_weight,
            Label::Spoof => self.spoof_weight,
        }
    }
}

/// Linear scorer: `w · features + b` is the bona fide logit.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl DeskModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn logit(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.w.len() {
            return Err(Error::Shape(format!(
                "feature dimension {} does not match model dimension {}",
                features.len(),
                self.w.len()
            )));
        }
        Ok(self.b + self.w.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
    }

    pub fn score(&self, x: &Waveform, fcfg: &FeatureConfig) -> Result<f64> {
        self.logit(&extract_features(x, fcfg)?)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&[MODEL_VERSION])?;
        out.write_all(&(self.w.len() as u32).to_le_bytes())?;
        for w in &self.w {
            out.write_all(&w.to_le_bytes())?;
        }
        out.write_all(&self.b.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::Format { field: "magic", reason: "file too short".into() })?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format { field: "magic", reason: format!("{magic:?} is not a model file") });
        }
        let mut version = [0u8; 1];
        input.read_exact(&mut version)?;
        if version[0] != MODEL_VERSION {
            return Err(Error::Format {
                field: "version",
                reason: format!("unsupported version {} (expected {MODEL_VERSION})", version[0]),
            });
        }
        let mut word = [0u8; 8];
        let mut dim = [0u8; 4];
        input.read_exact(&mut dim)?;
        let dim = u32::from_le_bytes(dim) as usize;
        let mut read_f64 = |field: &'static str| -> Result<f64> {
            input
                .read_exact(&mut word)
                .map_err(|_| Error::Format { field, reason: "truncated".into() })?;
            let v = f64::from_le_bytes(word);
            if !v.is_finite() {
                return Err(Error::Format { field, reason: format!("{v} is not finite") });
            }
            Ok(v)
        };
        let w = (0..dim).map(|_| read_f64("w")).collect::<Result<Vec<_>>>()?;
        let b = read_f64("b")?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format { field: "b", reason: format!("{} trailing bytes", rest.len()) });
        }
        Ok(Self { w, b })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Class-weighted mean logistic cross-entropy and its gradient
/// `(loss, dL/dw, dL/db)`. Bona fide is the positive class.
pub fn weighted_ce(
    model: &DeskModel,
    features: &[&[f64]],
    labels: &[Label],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>, f64)> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; model.dim()];
    let mut grad_b = 0.0;
    let mut total = 0.0;
    for (x, &label) in features.iter().zip(labels) {
        let c = cfg.class_weight(label);
        let z = model.logit(x)?;
        let y = if label == Label::Bonafide { 1.0 } else { 0.0 };
        loss += c * (softplus(z) - y * z);
        let r = c * (sigmoid(z) - y);
        for (g, xi) in grad_w.iter_mut().zip(x.iter()) {
            *g += r * xi;
        }
        grad_b += r;
        total += c;
    }
    grad_w.iter_mut().for_each(|g| *g /= total);
    Ok((loss / total, grad_w, grad_b / total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss on the clean training features after each epoch.
    pub epoch_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub best_epoch: usize,
    /// Utterances augmented in each epoch.
    pub augmented: Vec<usize>,
}

fn labels_of<S: UtteranceSource + ?Sized>(source: &S) -> Result<Vec<Label>> {
    let mut labels = Vec::with_capacity(source.len());
    let mut missing = Vec::new();
    for i in 0..source.len() {
        match source.label(i) {
            Some(l) => labels.push(l),
            None => missing.push(source.utt_id(i)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingLabels(missing));
    }
    if !labels.contains(&Label::Bonafide) {
        return Err(Error::MissingClass("bonafide"));
    }
    if !labels.contains(&Label::Spoof) {
        return Err(Error::MissingClass("spoof"));
    }
    Ok(labels)
}

/// Feature standardisation learned on the clean training set.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let dim = rows[0].len();
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-12 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    /// Express a model on standardised features in raw feature units.
    fn fold(&self, model: &DeskModel) -> DeskModel {
        let w: Vec<f64> = model.w.iter().zip(&self.scale).map(|(v, s)| v / s).collect();
        let b = model.b - w.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        DeskModel { w, b }
    }
}

/// Mini-batch gradient descent on the weighted cross-entropy.
///
/// Each epoch the policy is drawn per utterance (stream = utterance index);
/// utterances with no step firing reuse their cached clean features. The
/// returned model is the epoch-end snapshot with the lowest loss on the
/// clean training features.
pub fn train<S: UtteranceSource + ?Sized>(
    source: &S,
    policy: &AugmentPolicy,
    bank: &NoiseBank,
    fcfg: &FeatureConfig,
    tcfg: &TrainConfig,
) -> Result<(DeskModel, TrainReport)> {
    tcfg.validate()?;
    fcfg.validate()?;
    policy.validate()?;
    policy.check_bank(bank)?;
    let labels = labels_of(source)?;

    let mut raw = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        raw.push(extract_features(&source.load(i)?, fcfg)?);
    }
    let std = Standardizer::fit(&raw);
    let clean: Vec<Vec<f64>> = raw.iter().map(|r| std.apply(r)).collect();
    let clean_refs: Vec<&[f64]> = clean.iter().map(Vec::as_slice).collect();

    let mut model = DeskModel::zeros(fcfg.dim());
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(tcfg.epochs),
        learning_rates: Vec::with_capacity(tcfg.epochs),
        best_epoch: 0,
        augmented: Vec::with_capacity(tcfg.epochs),
    };
    let mut order: Vec<usize> = (0..source.len()).collect();

    for epoch in 0..tcfg.epochs {
        let lr = tcfg.lr(epoch);
        let mut epoch_rows: Vec<Option<Vec<f64>>> = vec![None; source.len()];
        let mut augmented = 0;
        if !policy.steps.is_empty() {
            for (i, row) in epoch_rows.iter_mut().enumerate() {
                let mut rng = policy.rng(epoch as u64, i as u64);
                let fired = policy.draw_coins(&mut rng);
                if fired.iter().any(|&f| f) {
                    let x = policy.apply_fired(&source.load(i)?, &fired, bank, &mut rng)?;
                    *row = Some(std.apply(&extract_features(&x, fcfg)?));
                    augmented += 1;
                }
            }
        }

        let mut shuffle = ChaCha8Rng::seed_from_u64(tcfg.seed);
        shuffle.set_stream(epoch as u64);
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(tcfg.batch_size) {
            let rows: Vec<&[f64]> = chunk
                .iter()
                .map(|&i| epoch_rows[i].as_deref().unwrap_or(&clean[i]))
                .collect();
            let ys: Vec<Label> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, gw, gb) = weighted_ce(&model, &rows, &ys, tcfg)?;
            for (w, g) in model.w.iter_mut().zip(&gw) {
                *w -= lr * g;
            }
            model.b -= lr * gb;
        }

        let (loss, _, _) = weighted_ce(&model, &clean_refs, &labels, tcfg)?;
        log::debug!("epoch {epoch}: lr {lr:.3e}, loss {loss:.6}, augmented {augmented}");
        report.epoch_losses.push(loss);
        report.learning_rates.push(lr);
        report.augmented.push(augmented);
        if loss < best.0 {
            best = (loss, model.clone(), epoch);
        }
    }
    report.best_epoch = best.2;
    Ok((std.fold(&best.1), report))
}

/// Score every utterance of `source`, in source order.
pub fn score_trials<S: UtteranceSource + ?Sized>(
    model: &DeskModel,
    source: &S,
    fcfg: &FeatureConfig,
) -> Result<ScoreSet> {
    if model.dim() != fcfg.dim() {
        return Err(Error::Shape(format!(
            "model dimension {} does not match feature dimension {}",
            model.dim(),
            fcfg.dim()
        )));
    }
    let mut entries = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        entries.push((source.utt_id(i), model.score(&source.load(i)?, fcfg)?));
    }
    ScoreSet::new(entries)
}
