//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashMap;
use std::time::Instant;

use bandgap::augment::{freqmask, freqmask_at, low_pass, AugmentPolicy, NoiseBank, DEFAULT_THRESHOLDS_HZ};
use bandgap::desk::{
    extract_features, train, weighted_ce, DeskModel, FeatureConfig, SynthConfig, SynthCorpus,
    TrainConfig, UtteranceSource,
};
use bandgap::duration::{pad_or_truncate, DurationStats};
use bandgap::fusion::{fuse, FuseOptions, FusionSpec};
use bandgap::metrics::{
    act_dcf_from, cllr_from, eer_from, min_dcf_from, ClassScores, DcfConfig, Label, ScoreSet,
};
use bandgap::stft::{istft, stft, Spectrogram, StftParams};
use bandgap::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Mean power of the content above `cutoff_hz`, in dB relative to a
/// full-scale sine.
fn above_dbfs(spec: &Spectrogram, cutoff_hz: f64) -> f64 {
    let p = spec.params;
    let w2: f64 = p.window.coefficients(p.n_fft).iter().map(|w| w * w).sum();
    let energy = 2.0 * spec.energy_above(cutoff_hz) / p.n_fft as f64 / (w2 / p.hop_length as f64);
    10.0 * (energy / spec.signal_len as f64 / 0.5).log10()
}

fn test_utterances(n: usize, seed: u64) -> Vec<Waveform> {
    let corpus = SynthCorpus::new(SynthConfig {
        n_per_class: n.div_ceil(2),
        seed,
        min_duration_s: 1.0,
        max_duration_s: 4.0,
        ..Default::default()
    })
    .unwrap();
    (0..n).map(|i| corpus.render(i).unwrap()).collect()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn band_kill() -> Outcome {
    let start = Instant::now();
    let params = StftParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut drops = Vec::new();
    for x in test_utterances(100, 71) {
        let mut draw = rng.clone();
        let cutoff = DEFAULT_THRESHOLDS_HZ[draw.gen_range(0..DEFAULT_THRESHOLDS_HZ.len())];
        let y = freqmask(&x, &DEFAULT_THRESHOLDS_HZ, &params, &mut rng).unwrap();
        let before = stft(&x, &params).unwrap().energy_above(cutoff);
        let after = stft(&y, &params).unwrap().energy_above(cutoff);
        drops.push(10.0 * (after / before).log10());
    }
    let secs = start.elapsed().as_secs_f64();
    drops.sort_by(f64::total_cmp);
    let worst = drops[drops.len() - 1];
    let failing = drops.iter().filter(|&&d| d > -60.0).count();
    outcome(
        worst <= -60.0 && secs < 30.0,
        format!(
            "attenuation dB best {:.1} median {:.1} worst {:.1}; {failing}/100 above -60 dB; {secs:.1} s",
            drops[0],
            percentile(&drops, 0.5),
            worst
        ),
    )
}

fn freqmask_beats_low_pass() -> Outcome {
    let params = StftParams::default();
    let cutoff = 4000.0;
    let (mut tested, mut counter) = (0, Vec::new());
    let mut margins = Vec::new();
    for (i, x) in test_utterances(100, 72).iter().enumerate() {
        if above_dbfs(&stft(x, &params).unwrap(), cutoff) <= -40.0 {
            continue;
        }
        tested += 1;
        let fm = above_dbfs(&stft(&freqmask_at(x, cutoff, &params).unwrap(), &params).unwrap(), cutoff);
        let lp = above_dbfs(&stft(&low_pass(x, cutoff).unwrap(), &params).unwrap(), cutoff);
        margins.push(lp - fm);
        if fm >= lp {
            counter.push(i);
        }
    }
    margins.sort_by(f64::total_cmp);
    let smallest = margins.first().copied().unwrap_or(f64::NAN);
    outcome(
        counter.is_empty() && tested > 0,
        format!(
            "{tested} utterances above -40 dBFS; low-pass residual exceeds freqmask by >= {smallest:.1} dB; counterexamples {counter:?}"
        ),
    )
}

/// Brute-force sweep over a uniform threshold grid.
fn sweep_oracle(bona: &[f64], spoof: &[f64], cfg: &DcfConfig, points: usize) -> (f64, f64) {
    let lo = bona.iter().chain(spoof).fold(f64::INFINITY, |m, &v| m.min(v)) - 1.0;
    let hi = bona.iter().chain(spoof).fold(f64::NEG_INFINITY, |m, &v| m.max(v)) + 1.0;
    let mut curve: Vec<(f64, f64)> = Vec::new();
    for k in 0..points {
        let t = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        let pm = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
        let pf = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
        if curve.last() != Some(&(pm, pf)) {
            curve.push((pm, pf));
        }
    }
    let min_dcf = curve
        .iter()
        .map(|&(pm, pf)| cfg.cost(pm, pf))
        .fold(f64::INFINITY, f64::min);
    let i = curve.iter().position(|(pm, pf)| pm - pf >= 0.0).unwrap();
    let (pm1, pf1) = curve[i];
    let eer = if pm1 == pf1 || i == 0 {
        pm1
    } else {
        let (pm0, pf0) = curve[i - 1];
        let (d0, d1) = (pm0 - pf0, pm1 - pf1);
        pm0 + (-d0 / (d1 - d0)) * (pm1 - pm0)
    };
    (eer.min(0.5), min_dcf)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let cfg = DcfConfig::new(0.05, 1.0, 10.0).unwrap();
    let (mut max_eer, mut max_dcf, mut max_cllr) = (0.0f64, 0.0f64, 0.0f64);
    let mut act_below_min = 0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=20);
        let n_bona = rng.gen_range(1..n);
        // Scores on a 0.01 lattice so the grid resolves every gap.
        let mut draw = |m: usize, shift: f64| -> Vec<f64> {
            (0..m).map(|_| (rng.gen_range(-300..=300) as f64 / 100.0) + shift).collect()
        };
        let bona = draw(n_bona, 0.5);
        let spoof = draw(n - n_bona, -0.5);
        let split = ClassScores::new(bona.clone(), spoof.clone()).unwrap();
        let (eer_o, dcf_o) = sweep_oracle(&bona, &spoof, &cfg, 1_000_000);
        max_eer = max_eer.max((eer_from(&split).eer - eer_o).abs());
        let m = min_dcf_from(&split, &cfg).min_dcf;
        max_dcf = max_dcf.max((m - dcf_o).abs());
        let direct = 0.5
            * (bona.iter().map(|s| (1.0 + (-s).exp()).log2()).sum::<f64>() / bona.len() as f64
                + spoof.iter().map(|s| (1.0 + s.exp()).log2()).sum::<f64>() / spoof.len() as f64);
        max_cllr = max_cllr.max((cllr_from(&split) - direct).abs());
        if act_dcf_from(&split, &cfg) < m {
            act_below_min += 1;
        }
    }
    outcome(
        max_eer <= 1e-9 && max_dcf <= 1e-9 && max_cllr <= 1e-12 && act_below_min == 0,
        format!(
            "max |dEER| {max_eer:.1e}, max |dminDCF| {max_dcf:.1e}, max |dCllr| {max_cllr:.1e}, actDCF < minDCF on {act_below_min}/50"
        ),
    )
}

fn cllr_anchor() -> Outcome {
    let split = ClassScores::new(vec![0.0; 7], vec![0.0; 5]).unwrap();
    let c = cllr_from(&split);
    outcome((c - 1.0).abs() <= 1e-12, format!("Cllr(all-zero LLRs) = {c:.15}"))
}

fn fusion_preset() -> Outcome {
    let spec = FusionSpec::preset("paper-7way").unwrap();
    let weights = spec.weights();
    let weights_ok = weights == [0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_err = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..60);
        let sets: HashMap<String, ScoreSet> = spec
            .systems()
            .iter()
            .map(|(id, _)| {
                let v = (0..n).map(|t| (format!("t{t}"), rng.gen_range(-10.0..10.0))).collect();
                (id.clone(), ScoreSet::new(v).unwrap())
            })
            .collect();
        let fused = fuse(&sets, &spec, FuseOptions::default()).unwrap();
        for (t, (_, v)) in fused.entries().iter().enumerate() {
            let oracle: f64 = spec
                .systems()
                .iter()
                .map(|(id, w)| w * sets[id].entries()[t].1)
                .sum();
            max_err = max_err.max((v - oracle).abs());
        }
    }
    outcome(
        weights_ok && max_err <= 1e-12,
        format!("weights {weights:?}; max |fused - oracle| {max_err:.1e}"),
    )
}

fn training_recipe() -> Outcome {
    let cfg = TrainConfig::default();
    let schedule_ok = (0..20).all(|e| cfg.lr(e) == 5e-4 * 0.5f64.powi((e / 2) as i32));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = rng.gen_range(2..10);
        let n = rng.gen_range(2..16);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { Label::Bonafide } else { Label::Spoof })
            .collect();
        let model = DeskModel {
            w: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            b: rng.gen_range(-1.0..1.0),
        };
        let (_, gw, gb) = weighted_ce(&model, &refs, &labels, &cfg).unwrap();
        let loss = |m: &DeskModel| weighted_ce(m, &refs, &labels, &cfg).unwrap().0;
        let h = 1e-6;
        for j in 0..=dim {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            if j < dim {
                plus.w[j] += h;
                minus.w[j] -= h;
            } else {
                plus.b += h;
                minus.b -= h;
            }
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = if j < dim { gw[j] } else { gb };
            worst = worst.max((numeric - analytic).abs() / analytic.abs().max(1e-3));
        }
    }
    outcome(
        schedule_ok && worst < 1e-5,
        format!(
            "lr sequence exact: {schedule_ok} (epoch 5 = {:e}); worst gradient relative error {worst:.1e}",
            cfg.lr(5)
        ),
    )
}

fn directional() -> Outcome {
    let start = Instant::now();
    let fcfg = FeatureConfig::default();
    let bank = NoiseBank::new();
    let seeds = 5u64;
    let (mut sum_none, mut sum_fm) = (0.0, 0.0);
    for seed in 0..seeds {
        let train_set = SynthCorpus::new(SynthConfig { n_per_class: 500, seed, ..Default::default() }).unwrap();
        let eval_set = SynthCorpus::new(SynthConfig {
            n_per_class: 500,
            seed: 10_000 + seed,
            gapped: true,
            ..Default::default()
        })
        .unwrap();
        let eval_features: Vec<(Label, Vec<f64>)> = (0..eval_set.len())
            .map(|i| {
                let x = eval_set.render(i).unwrap();
                (eval_set.label(i).unwrap(), extract_features(&x, &fcfg).unwrap())
            })
            .collect();
        let tcfg = TrainConfig { seed, ..Default::default() };
        let mut eers = [0.0; 2];
        for (k, policy) in [AugmentPolicy::empty(seed), AugmentPolicy::freqmask(seed, 0.3)].iter().enumerate() {
            let (model, _) = train(&train_set, policy, &bank, &fcfg, &tcfg).unwrap();
            let (mut bona, mut spoof) = (Vec::new(), Vec::new());
            for (label, f) in &eval_features {
                let s = model.logit(f).unwrap();
                match label {
                    Label::Bonafide => bona.push(s),
                    Label::Spoof => spoof.push(s),
                }
            }
            eers[k] = eer_from(&ClassScores::new(bona, spoof).unwrap()).eer;
        }
        println!("    seed {seed}: gapped EER none {:.4}, freqmask(0.3) {:.4}", eers[0], eers[1]);
        sum_none += eers[0];
        sum_fm += eers[1];
    }
    let (none, fm) = (sum_none / seeds as f64, sum_fm / seeds as f64);
    outcome(
        fm < none,
        format!(
            "mean gapped EER none {none:.4}, freqmask(0.3) {fm:.4}; {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn duration_tooling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut bad = 0;
    for _ in 0..1000 {
        let sr = [8000u32, 16000, 22050, 44100][rng.gen_range(0..4)];
        let len = rng.gen_range(1..20_000);
        let target_s = rng.gen_range(0.001..2.0);
        let x = Waveform::new((0..len).map(|i| (i % 97) as f64 / 97.0).collect(), sr).unwrap();
        let y = pad_or_truncate(&x, target_s).unwrap();
        let want = (target_s * sr as f64).round() as usize;
        let tiled = y.samples.iter().enumerate().all(|(i, &v)| v == x.samples[i % len]);
        if y.len() != want || !tiled {
            bad += 1;
        }
    }
    let stats = DurationStats::from_durations(&[2.61, 11.92, 28.91], 1.0).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 5e-3;
    let stats_ok = close(stats.min_s, 2.61) && close(stats.mean_s, 14.48) && close(stats.max_s, 28.91);
    outcome(
        bad == 0 && stats_ok,
        format!(
            "length contract violations {bad}/1000; stats min {:.2} mean {:.2} max {:.2}",
            stats.min_s, stats.mean_s, stats.max_s
        ),
    )
}

fn stft_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    let params = StftParams::default();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = (rng.gen_range(0.2..5.0) * 16000.0) as usize;
        let x = Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap();
        let y = istft(&stft(&x, &params).unwrap()).unwrap();
        let err: f64 = x.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let rel = (err / x.samples.iter().map(|v| v * v).sum::<f64>()).sqrt();
        worst = worst.max(if y.len() == x.len() { rel } else { f64::INFINITY });
    }
    outcome(worst < 1e-6, format!("worst relative RMS error {worst:.2e}"))
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("freqmask_band_kill", band_kill),
        ("freqmask_vs_low_pass", freqmask_beats_low_pass),
        ("metric_oracle_equivalence", metric_oracles),
        ("cllr_calibration_anchor", cllr_anchor),
        ("fusion_preset", fusion_preset),
        ("training_recipe", training_recipe),
        ("directional_augmentation", directional),
        ("duration_tooling", duration_tooling),
        ("stft_round_trip", stft_round_trip),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
