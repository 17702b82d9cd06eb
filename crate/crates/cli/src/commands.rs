use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bandgap::augment::{AugmentPolicy, NoiseBank};
use bandgap::desk::{self, DeskModel, SynthCorpus, UtteranceSource};
use bandgap::duration::{duration_stats, Manifest, ManifestRecord};
use bandgap::fusion::{self, FuseOptions, FusionSpec, Objective};
use bandgap::metrics::{DcfConfig, MetricReport, ScoreSet, TrialLabels};
use bandgap::stft::GrayImage;
use bandgap::{read_wav, stft, write_wav};
use log::{info, warn};
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::config::RunConfig;
use crate::{
    AugmentArgs, Cli, Command, EvalArgs, FuseArgs, ScoreArgs, SpectrogramArgs, StatsArgs,
    SynthArgs, TrainArgs,
};

/// Dispatch one subcommand. Returns the number of items that failed.
pub fn run(cli: Cli) -> Result<usize> {
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("cannot start worker pool")?;
    pool.install(|| match cli.command {
        Command::Augment(a) => augment(&cfg, a),
        Command::Eval(a) => eval(&cfg, a),
        Command::Fuse(a) => fuse(&cfg, a),
        Command::Stats(a) => stats(a),
        Command::Spectrogram(a) => spectrogram(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Score(a) => score(&cfg, a),
        Command::Synth(a) => synth(&cfg, a),
    })
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| anyhow!("no {what} given on the command line or in [paths]"))
}

fn load_bank(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<NoiseBank> {
    match flag.or_else(|| cfg.paths.noise_bank.clone()) {
        Some(p) => NoiseBank::from_manifest(&p)
            .with_context(|| format!("cannot load noise bank {}", p.display())),
        None => Ok(NoiseBank::new()),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// (path relative to the input root, absolute path), sorted by the former.
fn augment_inputs(input: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if input.is_dir() {
        let mut files = Vec::new();
        for entry in WalkDir::new(input).follow_links(true) {
            let entry = entry?;
            let is_wav = entry
                .path()
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if entry.file_type().is_file() && is_wav {
                let rel = entry.path().strip_prefix(input)?.to_path_buf();
                files.push((rel, entry.path().to_path_buf()));
            }
        }
        files.sort();
        Ok(files)
    } else {
        let m = Manifest::load(input)?;
        let mut files: Vec<_> = m
            .records
            .iter()
            .map(|r| (PathBuf::from(&r.path), m.resolve(r)))
            .collect();
        files.sort();
        if files.iter().any(|(rel, _)| rel.is_absolute()) {
            bail!("manifest {} lists absolute paths; augment needs relative ones", input.display());
        }
        Ok(files)
    }
}

fn augment(cfg: &RunConfig, args: AugmentArgs) -> Result<usize> {
    let policy = match &args.policy {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read policy {}", p.display()))?;
            AugmentPolicy::from_toml_str(&text)?
        }
        None => cfg.augment.clone(),
    };
    policy.validate()?;
    let bank = load_bank(args.noise_bank, cfg)?;
    policy.check_bank(&bank)?;
    let files = augment_inputs(&args.input)?;
    info!("augmenting {} file(s) into {}", files.len(), args.out.display());

    let results: Vec<Result<()>> = files
        .par_iter()
        .enumerate()
        .map(|(i, (rel, src))| {
            let dst = args.out.join(rel);
            if let Some(dir) = dst.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut rng = policy.rng(args.epoch, i as u64);
            let fired = policy.draw_coins(&mut rng);
            if !fired.contains(&true) {
                // Nothing to do: keep the original bytes.
                std::fs::copy(src, &dst)?;
                return Ok(());
            }
            let x = read_wav(src)?;
            let y = policy.apply_fired(&x, &fired, &bank, &mut rng)?;
            write_wav(&dst, &y)?;
            Ok(())
        })
        .collect();

    let mut failed = 0;
    for ((_, src), r) in files.iter().zip(&results) {
        if let Err(e) = r {
            warn!("{}: {e:#}", src.display());
            failed += 1;
        }
    }
    println!("processed={}", files.len() - failed);
    println!("failed={failed}");
    Ok(failed)
}

fn eval(cfg: &RunConfig, args: EvalArgs) -> Result<usize> {
    let dcf = match (args.p_target, args.c_miss, args.c_fa) {
        (Some(p), Some(m), Some(f)) => DcfConfig::new(p, m, f)?,
        (None, None, None) => cfg.dcf.ok_or_else(|| {
            anyhow!("DCF parameters are required: pass --p-target, --c-miss and --c-fa or set [dcf]")
        })?,
        _ => bail!("--p-target, --c-miss and --c-fa must be given together"),
    };
    let scores = ScoreSet::load(&args.scores)?;
    let labels = TrialLabels::load(&args.key)?;
    let report = MetricReport::compute(&scores, &labels, &dcf)?;
    if args.text {
        print!("{}", report.to_text());
    } else {
        print!("{}", report.to_key_value());
    }
    Ok(0)
}

fn parse_score_arg(arg: &str) -> Result<(String, PathBuf)> {
    let (id, path) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("--scores expects ID=PATH, got `{arg}`"))?;
    if id.is_empty() || path.is_empty() {
        bail!("--scores expects ID=PATH, got `{arg}`");
    }
    Ok((id.to_string(), PathBuf::from(path)))
}

fn fuse(cfg: &RunConfig, args: FuseArgs) -> Result<usize> {
    let mut systems = Vec::with_capacity(args.scores.len());
    for arg in &args.scores {
        let (id, path) = parse_score_arg(arg)?;
        if systems.iter().any(|(s, _): &(String, ScoreSet)| *s == id) {
            bail!("system `{id}` given twice");
        }
        let set = ScoreSet::load(&path)
            .with_context(|| format!("cannot load scores for `{id}`"))?;
        systems.push((id, set));
    }

    if let Some(objective) = &args.search {
        let objective: Objective = objective.parse().map_err(|e: String| anyhow!(e))?;
        let key = args.key.as_ref().expect("clap enforces --key");
        let labels = TrialLabels::load(key)?;
        let result =
            fusion::grid_search_weights(&systems, &labels, objective, args.step, cfg.dcf.as_ref())?;
        info!("best {objective:?} = {:.6}", result.objective);
        write_output(args.out.as_deref(), &result.spec.to_tsv())?;
        return Ok(0);
    }

    let spec = match (&args.spec, &args.preset) {
        (Some(p), _) => FusionSpec::load(p)?,
        (None, Some(name)) => FusionSpec::preset(name)?,
        (None, None) => {
            let ids: Vec<String> = systems.iter().map(|(s, _)| s.clone()).collect();
            FusionSpec::uniform(&ids)?
        }
    };
    let map: HashMap<String, ScoreSet> = systems.into_iter().collect();
    let fused = fusion::fuse(&map, &spec, FuseOptions { z_norm: args.z_norm })?;
    write_output(args.out.as_deref(), &fused.to_tsv())?;
    Ok(0)
}

fn stats(args: StatsArgs) -> Result<usize> {
    let m = Manifest::load(&args.manifest)?;
    let s = duration_stats(&m, args.bin_width)?;
    print!("{}", s.report());
    if let Some(p) = &args.histogram {
        write_output(Some(p), &s.histogram.to_csv())?;
    }
    Ok(0)
}

fn spectrogram(cfg: &RunConfig, args: SpectrogramArgs) -> Result<usize> {
    let x = read_wav(&args.input)?;
    let spec = stft(&x, &cfg.stft)?;
    let img = GrayImage::from_spectrogram(&spec);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&args.out, img.to_pgm())
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("width={}", img.width);
    println!("height={}", img.height);
    Ok(0)
}

fn train(cfg: &RunConfig, args: TrainArgs) -> Result<usize> {
    let manifest_path = required(args.manifest, &cfg.paths.train_manifest, "training manifest")?;
    let model_path = required(args.model, &cfg.paths.model, "model path")?;
    let manifest = Manifest::load(&manifest_path)?;
    let bank = load_bank(args.noise_bank, cfg)?;
    let fcfg = cfg.feature_config();
    info!(
        "training on {} utterance(s), {} epoch(s)",
        manifest.len(),
        cfg.train.epochs
    );
    let (model, report) = desk::train(&manifest, &cfg.augment, &bank, &fcfg, &cfg.train)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        info!(
            "epoch {e}: lr {:.3e} augmented {} loss {loss:.6}",
            report.learning_rates[e], report.augmented[e]
        );
    }
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&model_path)?;
    println!("best_epoch={}", report.best_epoch);
    println!("loss={:.6}", report.epoch_losses[report.best_epoch]);
    println!("model={}", model_path.display());
    Ok(0)
}

fn score(cfg: &RunConfig, args: ScoreArgs) -> Result<usize> {
    let manifest_path = required(args.manifest, &cfg.paths.eval_manifest, "manifest to score")?;
    let model_path = required(args.model, &cfg.paths.model, "model path")?;
    let out = args.out.or_else(|| cfg.paths.scores.clone());
    let manifest = Manifest::load(&manifest_path)?;
    let model = DeskModel::load(&model_path)?;
    let fcfg = cfg.feature_config();
    if model.dim() != fcfg.dim() {
        bail!(
            "model dimension {} does not match the configured feature dimension {}",
            model.dim(),
            fcfg.dim()
        );
    }

    let results: Vec<Result<f64>> = (0..manifest.len())
        .into_par_iter()
        .map(|i| Ok(model.score(&manifest.load(i)?, &fcfg)?))
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => entries.push((manifest.utt_id(i), s)),
            Err(e) => {
                warn!("{}: {e:#}", manifest.utt_id(i));
                failed += 1;
            }
        }
    }
    let set = ScoreSet::new(entries)?;
    write_output(out.as_deref(), &set.to_tsv())?;
    Ok(failed)
}

fn synth(cfg: &RunConfig, args: SynthArgs) -> Result<usize> {
    let mut sc = cfg.synth;
    if let Some(n) = args.n_per_class {
        sc.n_per_class = n;
    }
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    sc.gapped |= args.gapped;
    let corpus = SynthCorpus::new(sc)?;
    std::fs::create_dir_all(&args.out)?;

    let records: Vec<ManifestRecord> = (0..corpus.len())
        .into_par_iter()
        .map(|i| {
            let wav = corpus.render(i)?;
            let id = corpus.utt_id(i);
            let name = format!("{id}.wav");
            write_wav(args.out.join(&name), &wav)?;
            Ok(ManifestRecord {
                utt_id: id,
                path: name,
                label: Some(corpus.plan(i).label),
                duration_s: Some(wav.duration_s()),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest::new(records, &args.out)?;
    std::fs::write(args.out.join("manifest.tsv"), manifest.to_tsv())?;
    println!("utterances={}", manifest.len());
    println!("manifest={}", args.out.join("manifest.tsv").display());
    Ok(0)
}
