//! Fixed- and variable-length duration handling and corpus duration statistics.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3};

use crate::audio::{wav_duration_s, Waveform};
use crate::error::{Error, Result};
use crate::metrics::Label;

/// Manifest and header durations further apart than this are reported.
pub const DURATION_MISMATCH_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub path: String,
    /// `None` for `unknown`.
    pub label: Option<Label>,
    pub duration_s: Option<f64>,
}

/// Utterance list: TSV `utt_id  path  label  [duration_s]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn label_str(label: Option<Label>) -> &'static str {
    match label {
        Some(l) => l.as_str(),
        None => "unknown",
    }
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            records,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::DuplicateId(r.utt_id.clone()));
            }
            if let Some(d) = r.duration_s {
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::invalid("duration_s", format!("{d} for `{}`", r.utt_id)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        self.base_dir.join(&record.path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::parse(
                    source,
                    i + 1,
                    format!("expected 3 or 4 tab-separated columns, found {}", fields.len()),
                ));
            }
            let label = match fields[2] {
                "unknown" => None,
                other => Some(
                    other
                        .parse::<Label>()
                        .map_err(|e| Error::parse(source, i + 1, e))?,
                ),
            };
            let duration_s = match fields.get(3) {
                None | Some(&"") => None,
                Some(d) => Some(
                    d.parse::<f64>()
                        .map_err(|e| Error::parse(source, i + 1, format!("duration `{d}`: {e}")))?,
                ),
            };
            records.push(ManifestRecord {
                utt_id: fields[0].to_string(),
                path: fields[1].to_string(),
                label,
                duration_s,
            });
        }
        let base = source.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(records, base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = write!(out, "{}\t{}\t{}", r.utt_id, r.path, label_str(r.label));
            if let Some(d) = r.duration_s {
                let _ = write!(out, "\t{d}");
            }
            out.push('\n');
        }
        out
    }

    /// Durations in record order, taken from the WAV header when the manifest
    /// omits them. Manifest values are checked against existing files and a
    /// disagreement above [`DURATION_MISMATCH_S`] is logged.
    pub fn durations(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                let path = self.resolve(r);
                match r.duration_s {
                    Some(d) => {
                        if path.is_file() {
                            let header = wav_duration_s(&path)?;
                            if (header - d).abs() > DURATION_MISMATCH_S {
                                log::warn!(
                                    "{}: manifest duration {d:.3} s, header {header:.3} s",
                                    r.utt_id
                                );
                            }
                        }
                        Ok(d)
                    }
                    None => wav_duration_s(&path),
                }
            })
            .collect()
    }
}

/// Repeat-pad or truncate to exactly `round(target_s * sample_rate)` samples.
///
/// Longer inputs keep their first samples; shorter ones are tiled end to end.
pub fn pad_or_truncate(x: &Waveform, target_s: f64) -> Result<Waveform> {
    if !(target_s > 0.0 && target_s.is_finite()) {
        return Err(Error::invalid("target_s", format!("{target_s} must be positive")));
    }
    x.require_non_empty()?;
    let target = (target_s * x.sample_rate as f64).round() as usize;
    let samples = x.samples.iter().copied().cycle().take(target).collect();
    Ok(x.with_samples(samples))
}

/// One utterance's frame-level features, L frames × D dims.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub utt_id: String,
    pub frames: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    /// B × L_max × D, zero beyond each sequence's length.
    pub data: Array3<f64>,
    pub lengths: Vec<usize>,
    pub utt_ids: Vec<String>,
}

/// Zero-pad sequences to the longest one in the batch.
pub fn batch_pad(seqs: &[FeatureSequence]) -> Result<PaddedBatch> {
    let first = seqs.first().ok_or(Error::Empty("batch"))?;
    let dim = first.frames.ncols();
    for s in seqs {
        if s.frames.ncols() != dim {
            return Err(Error::Shape(format!(
                "`{}` has {} feature dims, batch has {dim}",
                s.utt_id,
                s.frames.ncols()
            )));
        }
        if s.frames.nrows() == 0 {
            return Err(Error::Shape(format!("`{}` has no frames", s.utt_id)));
        }
    }
    let max_len = seqs.iter().map(|s| s.frames.nrows()).max().unwrap_or(0);
    let mut data = Array3::zeros((seqs.len(), max_len, dim));
    for (b, s) in seqs.iter().enumerate() {
        data.slice_mut(s![b, ..s.frames.nrows(), ..]).assign(&s.frames);
    }
    Ok(PaddedBatch {
        data,
        lengths: seqs.iter().map(|s| s.frames.nrows()).collect(),
        utt_ids: seqs.iter().map(|s| s.utt_id.clone()).collect(),
    })
}

/// Inverse of [`batch_pad`].
pub fn unpad(batch: &PaddedBatch) -> Vec<FeatureSequence> {
    batch
        .lengths
        .iter()
        .zip(&batch.utt_ids)
        .enumerate()
        .map(|(b, (&len, id))| FeatureSequence {
            utt_id: id.clone(),
            frames: batch.data.slice(s![b, ..len, ..]).to_owned(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width_s: f64,
    /// Left edge of each bin.
    pub bin_starts: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_s,count\n");
        for (start, count) in self.bin_starts.iter().zip(&self.counts) {
            let _ = writeln!(out, "{start},{count}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationStats {
    pub count: usize,
    pub min_s: f64,
    pub mean_s: f64,
    pub max_s: f64,
    pub histogram: Histogram,
}

impl DurationStats {
    pub fn from_durations(durations: &[f64], bin_width_s: f64) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::Empty("manifest"));
        }
        if !(bin_width_s > 0.0 && bin_width_s.is_finite()) {
            return Err(Error::invalid("bin_width_s", format!("{bin_width_s} must be positive")));
        }
        let min_s = durations.iter().copied().fold(f64::INFINITY, f64::min);
        let max_s = durations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean_s = durations.iter().sum::<f64>() / durations.len() as f64;

        let first = (min_s / bin_width_s).floor() as i64;
        let last = (max_s / bin_width_s).floor() as i64;
        let n_bins = (last - first + 1) as usize;
        let mut counts = vec![0; n_bins];
        for &d in durations {
            let idx = ((d / bin_width_s).floor() as i64 - first) as usize;
            counts[idx] += 1;
        }
        let bin_starts = (first..=last).map(|k| k as f64 * bin_width_s).collect();
        Ok(Self {
            count: durations.len(),
            min_s,
            mean_s,
            max_s,
            histogram: Histogram {
                bin_width_s,
                bin_starts,
                counts,
            },
        })
    }

    pub fn report(&self) -> String {
        format!(
            "utterances={}\nmin_s={:.2}\nmean_s={:.2}\nmax_s={:.2}\n",
            self.count, self.min_s, self.mean_s, self.max_s
        )
    }
}

pub fn duration_stats(manifest: &Manifest, bin_width_s: f64) -> Result<DurationStats> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    DurationStats::from_durations(&manifest.durations()?, bin_width_s)
}
