//! Desk-scale countermeasure: synthetic corpus, subband-energy features and
//! a class-weighted linear classifier.

mod corpus;
mod features;
mod model;

pub use corpus::{
    synth_corpus, SynthConfig, SynthCorpus, UtterancePlan, ARTIFACT_AMPLITUDE, ARTIFACT_BAND_HZ,
    NOISE_RMS,
};
pub use features::{extract_features, FeatureConfig, LOG_FLOOR_DB};
pub use model::{
    score_trials, train, weighted_ce, DeskModel, TrainConfig, TrainReport, MODEL_MAGIC,
    MODEL_VERSION,
};

use crate::audio::{read_wav, Waveform};
use crate::duration::Manifest;
use crate::error::Result;
use crate::metrics::{Label, TrialLabels};

/// Indexed collection of utterances for training and scoring.
pub trait UtteranceSource {
    fn len(&self) -> usize;
    fn utt_id(&self, i: usize) -> String;
    /// `None` when the label is unknown.
    fn label(&self, i: usize) -> Option<Label>;
    fn load(&self, i: usize) -> Result<Waveform>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ground truth for every labelled utterance.
    fn trial_labels(&self) -> Result<TrialLabels> {
        TrialLabels::new((0..self.len()).filter_map(|i| self.label(i).map(|l| (self.utt_id(i), l))))
    }
}

impl UtteranceSource for Manifest {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn utt_id(&self, i: usize) -> String {
        self.records[i].utt_id.clone()
    }

    fn label(&self, i: usize) -> Option<Label> {
        self.records[i].label
    }

    fn load(&self, i: usize) -> Result<Waveform> {
        read_wav(self.resolve(&self.records[i]))
    }
}

/// In-memory utterances, mainly for tests and small experiments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemorySource {
    pub items: Vec<(String, Option<Label>, Waveform)>,
}

impl UtteranceSource for MemorySource {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn utt_id(&self, i: usize) -> String {
        self.items[i].0.clone()
    }

    fn label(&self, i: usize) -> Option<Label> {
        self.items[i].1
    }

    fn load(&self, i: usize) -> Result<Waveform> {
        Ok(self.items[i].2.clone())
    }
}
