//! Weighted score-level fusion.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{eer_from, min_dcf_from, ClassScores, DcfConfig, ScoreSet, TrialLabels};

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
pub const MAX_GRID_SYSTEMS: usize = 5;

/// Ordered `(system_id, weight)` pairs with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSpec {
    systems: Vec<(String, f64)>,
}

impl FusionSpec {
    pub fn new(systems: Vec<(String, f64)>) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::Config("fusion spec lists no systems".into()));
        }
        let mut seen = HashSet::new();
        for (id, w) in &systems {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Config(format!("weight {w} for `{id}` must be finite and >= 0")));
            }
        }
        let sum: f64 = systems.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!("fusion weights sum to {sum}, expected 1")));
        }
        Ok(Self { systems })
    }

    /// Equal weights over `ids`.
    pub fn uniform<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let w = 1.0 / ids.len().max(1) as f64;
        Self::new(ids.into_iter().map(|id| (id, w)).collect())
    }

    /// Named presets. `paper-7way` weights systems `cm1..cm7` as
    /// 0.3, 0.2 and 0.1 for the remaining five.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-7way" => {
                let weights = [0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1];
                Self::new(
                    weights
                        .iter()
                        .enumerate()
                        .map(|(i, &w)| (format!("cm{}", i + 1), w))
                        .collect(),
                )
            }
            "temporal-4way" => Self::uniform((1..=4).map(|i| format!("cm{i}"))),
            other => Err(Error::Config(format!(
                "unknown fusion preset `{other}` (known: paper-7way, temporal-4way)"
            ))),
        }
    }

    pub fn systems(&self) -> &[(String, f64)] {
        &self.systems
    }

    pub fn weights(&self) -> Vec<f64> {
        self.systems.iter().map(|(_, w)| *w).collect()
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut systems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::parse(source, i + 1, "expected `system_id<TAB>weight`"));
            }
            let w = fields[1]
                .parse::<f64>()
                .map_err(|e| Error::parse(source, i + 1, format!("weight `{}`: {e}", fields[1])))?;
            systems.push((fields[0].to_string(), w));
        }
        Self::new(systems)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, w) in &self.systems {
            let _ = writeln!(out, "{id}\t{w}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuseOptions {
    /// Standardise each system's scores to zero mean, unit variance first.
    pub z_norm: bool,
}

fn z_normalize(set: &ScoreSet, id: &str) -> Result<ScoreSet> {
    let n = set.len() as f64;
    let mean = set.scores().sum::<f64>() / n;
    let var = set.scores().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::invalid("z_norm", format!("system `{id}` has constant scores")));
    }
    let sd = var.sqrt();
    set.map_scores(|s| (s - mean) / sd)
}

fn check_trials(first_id: &str, first: &ScoreSet, id: &str, other: &ScoreSet) -> Result<()> {
    let a: HashSet<&str> = first.ids().collect();
    let b: HashSet<&str> = other.ids().collect();
    if a != b {
        let diff: BTreeSet<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
        log::debug!("trial sets of `{first_id}` and `{id}` differ");
        return Err(Error::TrialMismatch(diff.into_iter().collect()));
    }
    Ok(())
}

/// Per-trial weighted sum; output order follows the first system.
pub fn fuse(
    score_sets: &HashMap<String, ScoreSet>,
    spec: &FusionSpec,
    opts: FuseOptions,
) -> Result<ScoreSet> {
    let mut sets = Vec::with_capacity(spec.systems.len());
    for (id, _) in &spec.systems {
        let set = score_sets
            .get(id)
            .ok_or_else(|| Error::Config(format!("no scores supplied for system `{id}`")))?;
        if set.is_empty() {
            return Err(Error::Empty("score set"));
        }
        sets.push(if opts.z_norm { z_normalize(set, id)? } else { set.clone() });
    }
    let (first_id, _) = &spec.systems[0];
    for ((id, _), set) in spec.systems.iter().zip(&sets).skip(1) {
        check_trials(first_id, &sets[0], id, set)?;
    }

    let maps: Vec<HashMap<&str, f64>> = sets.iter().map(|s| s.to_map()).collect();
    let weights = spec.weights();
    // s0 + Σ w_i (s_i − s0): equal inputs come back bit-exact.
    let fused = sets[0]
        .entries()
        .iter()
        .map(|(id, s0)| {
            let delta: f64 = maps
                .iter()
                .zip(&weights)
                .skip(1)
                .map(|(m, w)| w * (m[id.as_str()] - s0))
                .sum();
            (id.clone(), s0 + delta)
        })
        .collect();
    ScoreSet::new(fused)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Eer,
    MinDcf,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "eer" => Ok(Objective::Eer),
            "min_dcf" | "mindcf" => Ok(Objective::MinDcf),
            other => Err(format!("unknown objective `{other}` (expected eer or min_dcf)")),
        }
    }
}

/// All compositions of `total` into `parts` non-negative integers, in
/// lexicographically descending order.
pub fn simplex_grid(parts: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=total).rev() {
            prefix.push(k);
            rec(parts - 1, total - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(parts, total, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub spec: FusionSpec,
    pub objective: f64,
}

/// Exhaustive search over the simplex grid with spacing `step`.
///
/// Ties keep the first grid point visited; the grid is walked from the
/// heaviest weight on the first system downwards, so identical systems
/// resolve to `(1, 0, ...)`.
pub fn grid_search_weights(
    systems: &[(String, ScoreSet)],
    labels: &TrialLabels,
    objective: Objective,
    step: f64,
    dcf: Option<&DcfConfig>,
) -> Result<GridResult> {
    if systems.is_empty() {
        return Err(Error::Config("grid search needs at least one system".into()));
    }
    if systems.len() > MAX_GRID_SYSTEMS {
        return Err(Error::Config(format!(
            "grid search over {} systems is too large (limit {MAX_GRID_SYSTEMS}); \
             pre-select systems or fuse in stages",
            systems.len()
        )));
    }
    let divisions = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || (divisions * step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("step", format!("{step} does not divide 1 evenly")));
    }
    let dcf = match (objective, dcf) {
        (Objective::MinDcf, None) => {
            return Err(Error::Config("min_dcf objective needs a DCF configuration".into()))
        }
        (_, d) => d.copied(),
    };
    if let Some(d) = &dcf {
        d.validate()?;
    }

    let map: HashMap<String, ScoreSet> = systems.iter().cloned().collect();
    if map.len() != systems.len() {
        return Err(Error::Config("duplicate system ids in grid search".into()));
    }
    let n = divisions as usize;
    let mut best: Option<GridResult> = None;
    for point in simplex_grid(systems.len(), n) {
        let spec = FusionSpec::new(
            systems
                .iter()
                .zip(&point)
                .map(|((id, _), &k)| (id.clone(), k as f64 / n as f64))
                .collect(),
        )?;
        let fused = fuse(&map, &spec, FuseOptions::default())?;
        let split = ClassScores::from_sets(&fused, labels)?;
        let value = match objective {
            Objective::Eer => eer_from(&split).eer,
            Objective::MinDcf => min_dcf_from(&split, dcf.as_ref().expect("checked above")).min_dcf,
        };
        if best.as_ref().is_none_or(|b| value < b.objective) {
            best = Some(GridResult {
                spec,
                objective: value,
            });
        }
    }
    Ok(best.expect("grid has at least one point"))
}
