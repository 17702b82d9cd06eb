use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bandgap::augment::AugmentPolicy;
use bandgap::desk::{FeatureConfig, SynthConfig, TrainConfig};
use bandgap::metrics::DcfConfig;
use bandgap::StftParams;
use serde::Deserialize;

/// Default locations for artifacts; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub train_manifest: Option<PathBuf>,
    pub eval_manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub noise_bank: Option<PathBuf>,
}

/// One declarative run description.
///
/// `seed` and `[stft]` apply everywhere: they are copied into the augment,
/// train and synth sections, which must not set their own.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub stft: StftParams,
    pub features: FeatureSection,
    pub train: TrainConfig,
    pub dcf: Option<DcfConfig>,
    pub augment: AugmentPolicy,
    pub synth: SynthConfig,
    pub paths: Paths,
}

/// Feature options without STFT parameters, which come from `[stft]`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub n_bands: usize,
    pub min_hz: f64,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self { n_bands: f.n_bands, min_hz: f.min_hz }
    }
}

impl RunConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).with_context(|| format!("invalid config {}", source.display()))?;
        if cfg.augment.seed != 0 || cfg.train.seed != 0 || cfg.synth.seed != 0 {
            bail!("{}: set `seed` at the top level only", source.display());
        }
        if cfg.augment.stft != StftParams::default() {
            bail!("{}: set STFT parameters in [stft], not [augment]", source.display());
        }
        if let Some(base) = source.parent() {
            cfg.resolve_paths(base);
        }
        cfg.propagate();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, path)
    }

    /// Config from `path` if given, otherwise defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => {
                let mut cfg = Self::default();
                cfg.propagate();
                Ok(cfg)
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.train_manifest,
            &mut p.eval_manifest,
            &mut p.model,
            &mut p.scores,
            &mut p.noise_bank,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    fn propagate(&mut self) {
        self.augment.seed = self.seed;
        self.augment.stft = self.stft;
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.feature_config().validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        if let Some(d) = &self.dcf {
            d.validate()?;
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            n_bands: self.features.n_bands,
            min_hz: self.features.min_hz,
            stft: self.stft,
        }
    }
}
