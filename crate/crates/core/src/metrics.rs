//! Detection metrics: EER, minDCF, actDCF and Cllr.
//!
//! Scores follow the "higher is more bona fide" convention. At threshold `t`
//! a trial is accepted as bona fide when `score >= t`, so
//! `Pmiss(t) = #{bona fide < t} / N_bona` and `Pfa(t) = #{spoof >= t} / N_spoof`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(format!("unknown label `{other}` (expected bonafide or spoof)")),
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').map(str::trim).collect()))
        }
    })
}

/// Per-trial scores in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    entries: Vec<(String, f64)>,
}

impl ScoreSet {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, score) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            if !score.is_finite() {
                return Err(Error::invalid("score", format!("{score} for `{id}` is not finite")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    pub fn to_map(&self) -> HashMap<&str, f64> {
        self.entries.iter().map(|(id, s)| (id.as_str(), *s)).collect()
    }

    /// Apply `f` to every score.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.entries.iter().map(|(id, s)| (id.clone(), f(*s))).collect())
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (line, fields) in data_lines(text) {
            if fields.len() != 2 {
                return Err(Error::parse(source, line, "expected `utt_id<TAB>score`"));
            }
            let score = fields[1]
                .parse::<f64>()
                .map_err(|e| Error::parse(source, line, format!("score `{}`: {e}", fields[1])))?;
            entries.push((fields[0].to_string(), score));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// TSV with shortest round-trip float formatting.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, s) in &self.entries {
            let _ = writeln!(out, "{id}\t{s}");
        }
        out
    }
}

/// Ground truth keyed by utterance id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialLabels {
    map: HashMap<String, Label>,
}

impl TrialLabels {
    pub fn new(pairs: impl IntoIterator<Item = (String, Label)>) -> Result<Self> {
        let mut map = HashMap::new();
        for (id, label) in pairs {
            if map.insert(id.clone(), label).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { map })
    }

    pub fn get(&self, id: &str) -> Option<Label> {
        self.map.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line, fields) in data_lines(text) {
            if fields.len() != 2 {
                return Err(Error::parse(source, line, "expected `utt_id<TAB>label`"));
            }
            let label = fields[1]
                .parse::<Label>()
                .map_err(|e| Error::parse(source, line, e))?;
            pairs.push((fields[0].to_string(), label));
        }
        Self::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }
}

/// Detection cost parameters. There are deliberately no defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcfConfig {
    /// Prior of the bona fide (target) class.
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl DcfConfig {
    pub fn new(p_target: f64, c_miss: f64, c_fa: f64) -> Result<Self> {
        let cfg = Self {
            p_target,
            c_miss,
            c_fa,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::invalid("p_target", format!("{} is outside (0, 1)", self.p_target)));
        }
        if !(self.c_miss > 0.0 && self.c_miss.is_finite()) {
            return Err(Error::invalid("c_miss", format!("{} must be positive", self.c_miss)));
        }
        if !(self.c_fa > 0.0 && self.c_fa.is_finite()) {
            return Err(Error::invalid("c_fa", format!("{} must be positive", self.c_fa)));
        }
        Ok(())
    }

    fn miss_weight(&self) -> f64 {
        self.c_miss * self.p_target
    }

    fn fa_weight(&self) -> f64 {
        self.c_fa * (1.0 - self.p_target)
    }

    /// Cost of the better trivial system (accept all or reject all).
    pub fn normalizer(&self) -> f64 {
        self.miss_weight().min(self.fa_weight())
    }

    /// Normalised cost at an operating point.
    pub fn cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        (self.miss_weight() * p_miss + self.fa_weight() * p_fa) / self.normalizer()
    }

    /// Bayes decision threshold for calibrated natural-log LLRs.
    pub fn bayes_threshold(&self) -> f64 {
        (self.fa_weight() / self.miss_weight()).ln()
    }
}

/// Scores split by class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub bonafide: Vec<f64>,
    pub spoof: Vec<f64>,
}

impl ClassScores {
    pub fn new(bonafide: Vec<f64>, spoof: Vec<f64>) -> Result<Self> {
        if bonafide.is_empty() {
            return Err(Error::MissingClass("bonafide"));
        }
        if spoof.is_empty() {
            return Err(Error::MissingClass("spoof"));
        }
        if let Some(s) = bonafide.iter().chain(&spoof).find(|s| !s.is_finite()) {
            return Err(Error::invalid("score", format!("{s} is not finite")));
        }
        Ok(Self { bonafide, spoof })
    }

    /// Pair scores with labels; every scored trial must be labelled.
    pub fn from_sets(scores: &ScoreSet, labels: &TrialLabels) -> Result<Self> {
        let mut bonafide = Vec::new();
        let mut spoof = Vec::new();
        let mut missing = Vec::new();
        for (id, s) in scores.entries() {
            match labels.get(id) {
                Some(Label::Bonafide) => bonafide.push(*s),
                Some(Label::Spoof) => spoof.push(*s),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
        Self::new(bonafide, spoof)
    }

    /// `(Pmiss, Pfa)` at an arbitrary threshold.
    pub fn rates_at(&self, threshold: f64) -> (f64, f64) {
        let misses = self.bonafide.iter().filter(|&&s| s < threshold).count();
        let false_alarms = self.spoof.iter().filter(|&&s| s >= threshold).count();
        (
            misses as f64 / self.bonafide.len() as f64,
            false_alarms as f64 / self.spoof.len() as f64,
        )
    }

    /// Every distinct operating point, ordered by increasing threshold.
    ///
    /// The first point accepts everything (threshold −∞), the last rejects
    /// everything (+∞); interior thresholds sit midway between adjacent
    /// distinct scores.
    pub fn operating_points(&self) -> Vec<OperatingPoint> {
        let mut bona = self.bonafide.clone();
        let mut spoof = self.spoof.clone();
        bona.sort_by(f64::total_cmp);
        spoof.sort_by(f64::total_cmp);
        let mut distinct: Vec<f64> = bona.iter().chain(&spoof).copied().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();

        let nb = bona.len() as f64;
        let ns = spoof.len() as f64;
        let (mut ib, mut is) = (0usize, 0usize);
        let mut points = Vec::with_capacity(distinct.len() + 1);
        for (k, &u) in distinct.iter().enumerate() {
            // Accept scores >= u.
            while ib < bona.len() && bona[ib] < u {
                ib += 1;
            }
            while is < spoof.len() && spoof[is] < u {
                is += 1;
            }
            let threshold = if k == 0 {
                f64::NEG_INFINITY
            } else {
                0.5 * (distinct[k - 1] + u)
            };
            points.push(OperatingPoint {
                threshold,
                p_miss: ib as f64 / nb,
                p_fa: (spoof.len() - is) as f64 / ns,
            });
        }
        points.push(OperatingPoint {
            threshold: f64::INFINITY,
            p_miss: 1.0,
            p_fa: 0.0,
        });
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate by linear interpolation between the two adjacent
/// operating points where `Pmiss − Pfa` turns non-negative. Capped at 0.5.
pub fn eer_from(scores: &ClassScores) -> Eer {
    let points = scores.operating_points();
    let diff = |p: &OperatingPoint| p.p_miss - p.p_fa;
    let i = points
        .iter()
        .position(|p| diff(p) >= 0.0)
        .expect("the reject-all point has Pmiss - Pfa = 1");
    let hi = points[i];
    let (eer, threshold) = if diff(&hi) == 0.0 || i == 0 {
        (hi.p_miss, hi.threshold)
    } else {
        let lo = points[i - 1];
        let alpha = -diff(&lo) / (diff(&hi) - diff(&lo));
        let eer = lo.p_miss + alpha * (hi.p_miss - lo.p_miss);
        let threshold = if hi.threshold.is_finite() && lo.threshold.is_finite() {
            lo.threshold + alpha * (hi.threshold - lo.threshold)
        } else if hi.threshold.is_finite() {
            hi.threshold
        } else {
            lo.threshold
        };
        (eer, threshold)
    };
    Eer {
        eer: eer.min(0.5),
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinDcf {
    pub min_dcf: f64,
    pub threshold: f64,
}

/// Normalised DCF minimised over all operating points.
pub fn min_dcf_from(scores: &ClassScores, cfg: &DcfConfig) -> MinDcf {
    scores
        .operating_points()
        .iter()
        .map(|p| MinDcf {
            min_dcf: cfg.cost(p.p_miss, p.p_fa),
            threshold: p.threshold,
        })
        .fold(
            MinDcf {
                min_dcf: f64::INFINITY,
                threshold: f64::NAN,
            },
            |best, m| if m.min_dcf < best.min_dcf { m } else { best },
        )
}

/// Normalised DCF at the Bayes threshold, treating scores as LLRs.
pub fn act_dcf_from(scores: &ClassScores, cfg: &DcfConfig) -> f64 {
    let (p_miss, p_fa) = scores.rates_at(cfg.bayes_threshold());
    cfg.cost(p_miss, p_fa)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Log-likelihood-ratio cost in bits.
pub fn cllr_from(scores: &ClassScores) -> f64 {
    let mean = |v: &[f64], sign: f64| {
        v.iter().map(|&s| softplus(sign * s)).sum::<f64>() / v.len() as f64
    };
    0.5 * (mean(&scores.bonafide, -1.0) + mean(&scores.spoof, 1.0)) / std::f64::consts::LN_2
}

pub fn eer(scores: &ScoreSet, labels: &TrialLabels) -> Result<Eer> {
    Ok(eer_from(&ClassScores::from_sets(scores, labels)?))
}

pub fn min_dcf(scores: &ScoreSet, labels: &TrialLabels, cfg: &DcfConfig) -> Result<MinDcf> {
    cfg.validate()?;
    Ok(min_dcf_from(&ClassScores::from_sets(scores, labels)?, cfg))
}

pub fn act_dcf(scores: &ScoreSet, labels: &TrialLabels, cfg: &DcfConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(act_dcf_from(&ClassScores::from_sets(scores, labels)?, cfg))
}

pub fn cllr(scores: &ScoreSet, labels: &TrialLabels) -> Result<f64> {
    Ok(cllr_from(&ClassScores::from_sets(scores, labels)?))
}

/// All four metrics, reported in ranking order: minDCF, actDCF, Cllr, EER.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub min_dcf: f64,
    pub min_dcf_threshold: f64,
    pub act_dcf: f64,
    pub cllr: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

impl MetricReport {
    pub fn compute(scores: &ScoreSet, labels: &TrialLabels, cfg: &DcfConfig) -> Result<Self> {
        cfg.validate()?;
        let split = ClassScores::from_sets(scores, labels)?;
        let m = min_dcf_from(&split, cfg);
        let e = eer_from(&split);
        Ok(Self {
            min_dcf: m.min_dcf,
            min_dcf_threshold: m.threshold,
            act_dcf: act_dcf_from(&split, cfg),
            cllr: cllr_from(&split),
            eer: e.eer,
            eer_threshold: e.threshold,
            n_bonafide: split.bonafide.len(),
            n_spoof: split.spoof.len(),
        })
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "min_dcf={}\nact_dcf={}\ncllr={}\neer={}\nmin_dcf_threshold={}\neer_threshold={}\nn_bonafide={}\nn_spoof={}\n",
            self.min_dcf,
            self.act_dcf,
            self.cllr,
            self.eer,
            self.min_dcf_threshold,
            self.eer_threshold,
            self.n_bonafide,
            self.n_spoof
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "trials   {} bonafide / {} spoof\nminDCF   {:.4}\nactDCF   {:.4}\nCllr     {:.4}\nEER      {:.2}%\n",
            self.n_bonafide,
            self.n_spoof,
            self.min_dcf,
            self.act_dcf,
            self.cllr,
            100.0 * self.eer
        )
    }
}
