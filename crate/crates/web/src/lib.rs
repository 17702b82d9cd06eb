//! WebAssembly bindings behind `www/index.html`.
//!
//! The functions take and return plain numbers and strings so the page needs
//! no bundler. Everything is also callable natively, which is how the tests
//! exercise it.

use std::collections::HashMap;

use bandgap::augment::{freqmask_at, low_pass};
use bandgap::desk::{SynthConfig, SynthCorpus};
use bandgap::fusion::{fuse, FuseOptions, FusionSpec};
use bandgap::metrics::{
    act_dcf_from, cllr_from, eer_from, min_dcf_from, ClassScores, DcfConfig, ScoreSet,
};
use bandgap::stft::GrayImage;
use bandgap::{stft, StftParams, Waveform};
use wasm_bindgen::prelude::*;

/// Gray spectrogram image, highest frequency in row 0.
#[wasm_bindgen]
pub struct Picture {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    above_db: f64,
}

#[wasm_bindgen]
impl Picture {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// One byte per pixel, row-major.
    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }

    /// Energy above the cutoff after processing, relative to before (dB).
    #[wasm_bindgen(getter)]
    pub fn above_db(&self) -> f64 {
        self.above_db
    }
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn utterance(seed: u64, spoof: bool) -> Result<Waveform, bandgap::Error> {
    let corpus = SynthCorpus::new(SynthConfig {
        n_per_class: 1,
        seed,
        min_duration_s: 2.0,
        max_duration_s: 3.0,
        ..SynthConfig::default()
    })?;
    corpus.render(usize::from(spoof))
}

pub fn spectrogram_native(
    seed: u64,
    spoof: bool,
    mode: &str,
    cutoff_hz: f64,
) -> Result<Picture, bandgap::Error> {
    let params = StftParams::default();
    let x = utterance(seed, spoof)?;
    let y = match mode {
        "none" => x.clone(),
        "freqmask" => freqmask_at(&x, cutoff_hz, &params)?,
        "low_pass" => low_pass(&x, cutoff_hz)?,
        other => {
            return Err(bandgap::Error::Config(format!(
                "unknown mode `{other}`; expected none, freqmask or low_pass"
            )))
        }
    };
    let before = stft(&x, &params)?.energy_above(cutoff_hz);
    let spec = stft(&y, &params)?;
    let after = spec.energy_above(cutoff_hz);
    let img = GrayImage::from_spectrogram(&spec);
    Ok(Picture {
        width: img.width,
        height: img.height,
        pixels: img.pixels,
        above_db: 10.0 * (after.max(1e-300) / before.max(1e-300)).log10(),
    })
}

/// Spectrogram of a synthetic utterance after `mode` (`none`, `freqmask`
/// or `low_pass`) at `cutoff_hz`.
#[wasm_bindgen]
pub fn spectrogram(seed: u32, spoof: bool, mode: &str, cutoff_hz: f64) -> Result<Picture, JsError> {
    spectrogram_native(u64::from(seed), spoof, mode, cutoff_hz).map_err(js)
}

/// Numbers separated by whitespace or commas.
pub fn parse_scores(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("not a finite number: `{t}`"))
        })
        .collect()
}

pub fn evaluate_native(
    bonafide: &str,
    spoof: &str,
    p_target: f64,
    c_miss: f64,
    c_fa: f64,
) -> Result<String, String> {
    let dcf = DcfConfig::new(p_target, c_miss, c_fa).map_err(|e| e.to_string())?;
    let scores = ClassScores::new(parse_scores(bonafide)?, parse_scores(spoof)?)
        .map_err(|e| e.to_string())?;
    Ok(report(&scores, &dcf))
}

fn report(scores: &ClassScores, dcf: &DcfConfig) -> String {
    let eer = eer_from(scores);
    let min = min_dcf_from(scores, dcf);
    format!(
        "min_dcf={:.6}\nact_dcf={:.6}\ncllr={:.6}\neer={:.6}\neer_threshold={:.6}\n",
        min.min_dcf,
        act_dcf_from(scores, dcf),
        cllr_from(scores),
        eer.eer,
        eer.threshold
    )
}

/// minDCF, actDCF, Cllr and EER for two pasted score lists.
#[wasm_bindgen]
pub fn evaluate(
    bonafide: &str,
    spoof: &str,
    p_target: f64,
    c_miss: f64,
    c_fa: f64,
) -> Result<String, JsError> {
    evaluate_native(bonafide, spoof, p_target, c_miss, c_fa).map_err(|e| JsError::new(&e))
}

fn as_set(bonafide: &[f64], spoof: &[f64]) -> Result<ScoreSet, bandgap::Error> {
    let entries = bonafide
        .iter()
        .enumerate()
        .map(|(i, &s)| (format!("b{i}"), s))
        .chain(spoof.iter().enumerate().map(|(i, &s)| (format!("s{i}"), s)));
    ScoreSet::new(entries.collect())
}

pub fn fuse_native(
    a: (&str, &str),
    b: (&str, &str),
    weight_b: f64,
    dcf: (f64, f64, f64),
) -> Result<String, String> {
    let (ab, asp) = (parse_scores(a.0)?, parse_scores(a.1)?);
    let (bb, bsp) = (parse_scores(b.0)?, parse_scores(b.1)?);
    if ab.len() != bb.len() || asp.len() != bsp.len() {
        return Err("both systems must score the same number of trials per class".into());
    }
    let run = || -> Result<String, bandgap::Error> {
        let dcf = DcfConfig::new(dcf.0, dcf.1, dcf.2)?;
        let spec = FusionSpec::new(vec![
            ("a".to_string(), 1.0 - weight_b),
            ("b".to_string(), weight_b),
        ])?;
        let systems: HashMap<String, ScoreSet> =
            [("a".to_string(), as_set(&ab, &asp)?), ("b".to_string(), as_set(&bb, &bsp)?)]
                .into_iter()
                .collect();
        let fused = fuse(&systems, &spec, FuseOptions::default())?;
        let fused = fused.to_map();
        let bona = (0..ab.len()).map(|i| fused[format!("b{i}").as_str()]).collect();
        let spoof = (0..asp.len()).map(|i| fused[format!("s{i}").as_str()]).collect();
        Ok(report(&ClassScores::new(bona, spoof)?, &dcf))
    };
    run().map_err(|e| e.to_string())
}

/// Fuse two systems as `(1 - w) * a + w * b` and evaluate the result.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn fuse_two(
    a_bonafide: &str,
    a_spoof: &str,
    b_bonafide: &str,
    b_spoof: &str,
    weight_b: f64,
    p_target: f64,
    c_miss: f64,
    c_fa: f64,
) -> Result<String, JsError> {
    fuse_native(
        (a_bonafide, a_spoof),
        (b_bonafide, b_spoof),
        weight_b,
        (p_target, c_miss, c_fa),
    )
    .map_err(|e| JsError::new(&e))
}
