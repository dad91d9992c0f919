//! Command-line entry point: synth, split, train, calibrate, evaluate, infer,
//! baseline and attribute.
//!
//! Artifacts live under `output_dir`:
//!
//! ```text
//! splits/run_R.split
//! <experiment>/run_R/{model.ckpt, history.json, calibration_<strategy>.json, scores_<strategy>.json}
//! report.json, report.txt
//! baseline/{sweep.json, sweep.txt, report.json, report.txt}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::attribution::{black_baseline, encoder_functional, integrated_gradients, output_difference, render_attribution};
use crate::baseline::{baseline_decide, parameter_sweep};
use crate::catalog::{clip_rectified_frames, scan_dataset, ClipRecord, DatasetKind, RoiConfig};
use crate::config::ExperimentConfig;
use crate::decision::{calibrate_classifier, calibrate_threshold, cumulative_score, decide_cumulative, video_score, CalibrationResult, Strategy};
use crate::encoder::{clip_probabilities, eval_input, train, train_classifier, EncoderModel, TrainData, TrainMode};
use crate::metrics::{aggregate_runs, dummy_rows, format_table, ClipOutcome, DatasetTag, ReportRow, RunResult, Verdict};
use crate::nn::Architecture;
use crate::raster::resize_bilinear;
use crate::splitter::{generate_splits, SplitPlan};
use crate::synthcam::generate_dataset;
use crate::triplets::augment::{AugConfig, INPUT_SIZE};
use crate::triplets::ClipFrames;

#[derive(Debug, Parser)]
#[command(name = "holoverify", version, about = "Hologram presence verification for identity-document video clips")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.max_epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Dataset root (config `dataset.root`, then $HOLOVERIFY_DATASET).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory (config `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Contrastive,
    Classifier,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset into the dataset root.
    Synth,
    /// Write identity-disjoint split files for every run.
    Split {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Train one run's encoder and save the selected checkpoint.
    Train {
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value = "contrastive")]
        experiment: String,
        #[arg(long)]
        arch: Option<Architecture>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Train on original clips only.
        #[arg(long)]
        originals_only: bool,
        #[arg(long)]
        no_augmentation: bool,
        /// Save the initial weights without training.
        #[arg(long)]
        untrained: bool,
    },
    /// Calibrate decision thresholds on the validation set.
    Calibrate {
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value = "contrastive")]
        experiment: String,
    },
    /// Evaluate experiments over runs and write the results report.
    Evaluate {
        #[arg(long = "experiment", default_value = "contrastive")]
        experiments: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Decide a single clip of the dataset.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        clip: String,
    },
    /// Handcrafted baseline: per-run evaluation, or the parameter sweep.
    Baseline {
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Integrated-gradients attribution for one ROI image.
    Attribute {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
}

/// Provenance stamped into every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub experiment: String,
    pub run: usize,
    pub calibration: CalibrationResult,
}

/// Parses `argv` (program name first) and runs the command; returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    hash: String,
}

impl Ctx {
    fn provenance(&self) -> Provenance {
        Provenance { seed: self.cfg.seed, config_hash: self.hash.clone() }
    }

    fn out(&self) -> &Path {
        &self.cfg.output_dir
    }

    fn run_dir(&self, experiment: &str, run: usize) -> PathBuf {
        self.out().join(experiment).join(format!("run_{run}"))
    }

    fn catalog(&self) -> anyhow::Result<Vec<ClipRecord>> {
        let root = self.cfg.dataset_root();
        let clips = scan_dataset(&root, self.cfg.dataset.kind)?;
        if clips.is_empty() {
            bail!("no clips found under {}", root.display());
        }
        Ok(clips)
    }

    fn rois(&self) -> anyhow::Result<RoiConfig> {
        Ok(RoiConfig::load(&self.cfg.roi_file())?)
    }

    fn split(&self, run: usize) -> anyhow::Result<SplitPlan> {
        let path = self.out().join("splits").join(SplitPlan::file_name(run));
        SplitPlan::load(&path).with_context(|| format!("run `split` first ({})", path.display()))
    }

    fn load(&self, clips: &[&ClipRecord], rois: &RoiConfig) -> anyhow::Result<Vec<ClipFrames>> {
        Ok(ClipFrames::load_all(clips, rois, self.cfg.dataset.target_fps)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<EncoderModel> {
    if !path.exists() {
        bail!("checkpoint not found: {}", path.display());
    }
    Ok(EncoderModel::load(path)?)
}

fn calibration_path(dir: &Path, strategy: Strategy) -> PathBuf {
    dir.join(format!("calibration_{}.json", strategy.as_str()))
}

fn strategies_for(model: &EncoderModel) -> &'static [Strategy] {
    if model.head.is_some() {
        &[Strategy::Whole]
    } else {
        &[Strategy::Whole, Strategy::Cumulative]
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(d) = cli.dataset {
        cfg.dataset.root = Some(d);
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::Train { arch, epochs, batch_size, mode, originals_only, no_augmentation, .. } = &cli.command {
        let t = &mut cfg.train;
        if let Some(a) = arch {
            t.architecture = *a;
        }
        if let Some(e) = epochs {
            t.max_epochs = *e;
        }
        if let Some(b) = batch_size {
            t.batch_size = *b;
        }
        if let Some(m) = mode {
            t.mode = match m {
                ModeArg::Contrastive => TrainMode::Contrastive,
                ModeArg::Classifier => TrainMode::Classifier,
            };
        }
        if *originals_only {
            t.train_data = TrainData::OriginalsOnly;
        }
        if *no_augmentation {
            t.augmentation = AugConfig::disabled();
        }
    }
    cfg.validate()?;
    let ctx = Ctx { hash: cfg.hash(), cfg };
    match cli.command {
        Command::Synth => synth(&ctx),
        Command::Split { runs } => split(&ctx, runs.unwrap_or(ctx.cfg.n_runs)),
        Command::Train { run, experiment, untrained, .. } => train_run(&ctx, run, &experiment, untrained),
        Command::Calibrate { run, experiment } => calibrate(&ctx, run, &experiment),
        Command::Evaluate { experiments, runs } => evaluate(&ctx, &experiments, runs.unwrap_or(ctx.cfg.n_runs)),
        Command::Infer { checkpoint, calibration, clip } => infer(&ctx, &checkpoint, &calibration, &clip),
        Command::Baseline { sweep, runs } => {
            if sweep {
                baseline_sweep(&ctx)
            } else {
                baseline_eval(&ctx, runs.unwrap_or(ctx.cfg.n_runs))
            }
        }
        Command::Attribute { checkpoint, image, out, steps } => attribute(&ctx, &checkpoint, &image, &out, steps),
    }
}

fn synth(ctx: &Ctx) -> anyhow::Result<()> {
    if ctx.cfg.dataset.kind != DatasetKind::Synthetic {
        bail!("synth needs dataset.kind = synthetic");
    }
    let root = ctx.cfg.dataset_root();
    let n = generate_dataset(&ctx.cfg.synth, &root, ctx.cfg.seed)?;
    println!("wrote {n} clips to {}", root.display());
    Ok(())
}

fn split(ctx: &Ctx, runs: usize) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let dir = ctx.out().join("splits");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for plan in generate_splits(&catalog, runs, ctx.cfg.seed)? {
        let p = plan.partition(&catalog);
        println!(
            "run {}: train {}, validation {}, test {} + {} photo replacement",
            plan.run_id,
            p.train.len(),
            p.validation.len(),
            p.test_vanilla.len(),
            p.test_photo_replacement.len()
        );
        plan.save(&dir.join(SplitPlan::file_name(plan.run_id)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    experiment: &'a str,
    run: usize,
    best_epoch: usize,
    history: &'a [crate::encoder::EpochRecord],
}

fn train_run(ctx: &Ctx, run: usize, experiment: &str, untrained: bool) -> anyhow::Result<()> {
    let tcfg = ctx.cfg.train_config();
    let dir = ctx.run_dir(experiment, run);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join("config.toml"), &format!("# config_hash = {}\n{}", ctx.hash, ctx.cfg.to_toml()))?;
    let (mut model, history, best_epoch) = if untrained {
        (tcfg.initial_model()?, Vec::new(), 0)
    } else {
        let catalog = ctx.catalog()?;
        let rois = ctx.rois()?;
        let p = ctx.split(run)?.partition(&catalog);
        let tr = ctx.load(&p.train, &rois)?;
        let va = ctx.load(&p.validation, &rois)?;
        info!("run {run}: {} train clips, {} validation clips", tr.len(), va.len());
        let o = match tcfg.mode {
            TrainMode::Contrastive => train(&tr, &va, &tcfg)?,
            TrainMode::Classifier => train_classifier(&tr, &va, &tcfg)?,
        };
        (o.model, o.history, o.best_epoch)
    };
    model.config_hash = ctx.hash.clone();
    model.seed = ctx.cfg.seed;
    model.save(&dir.join("model.ckpt"))?;
    let file = HistoryFile { provenance: ctx.provenance(), experiment, run, best_epoch, history: &history };
    write_json(&dir.join("history.json"), &file)?;
    println!("saved {} (best epoch {best_epoch})", dir.join("model.ckpt").display());
    Ok(())
}

/// Per-clip scores under one strategy; classifier models score by mean attack probability.
fn clip_scores(model: &EncoderModel, clips: &[ClipFrames], strategy: Strategy, min_buffer: usize) -> anyhow::Result<Vec<f64>> {
    if model.head.is_some() {
        return Ok(clip_probabilities(model, clips)?);
    }
    clips
        .iter()
        .map(|c| {
            let seq = model.embed_clip(c)?;
            Ok(match strategy {
                Strategy::Whole => video_score(&seq)?,
                Strategy::Cumulative => cumulative_score(&seq, min_buffer)?,
            })
        })
        .collect()
}

fn calibrate(ctx: &Ctx, run: usize, experiment: &str) -> anyhow::Result<()> {
    let dir = ctx.run_dir(experiment, run);
    let model = load_model(&dir.join("model.ckpt"))?;
    let catalog = ctx.catalog()?;
    let rois = ctx.rois()?;
    let p = ctx.split(run)?.partition(&catalog);
    let va = ctx.load(&p.validation, &rois)?;
    for &strategy in strategies_for(&model) {
        let scores = clip_scores(&model, &va, strategy, ctx.cfg.decision.min_buffer)?;
        let scored: Vec<_> = scores.into_iter().zip(va.iter().map(|c| c.label)).collect();
        let mut calibration = if model.head.is_some() {
            calibrate_classifier(&scored)?
        } else {
            calibrate_threshold(&scored, strategy)?
        };
        calibration.min_buffer = ctx.cfg.decision.min_buffer;
        println!(
            "{experiment} run {run} {}: threshold {:.6}, validation F {:.3}",
            strategy.as_str(),
            calibration.threshold,
            calibration.validation_fscore
        );
        let file = CalibrationFile { provenance: ctx.provenance(), experiment: experiment.to_string(), run, calibration };
        write_json(&calibration_path(&dir, strategy), &file)?;
    }
    Ok(())
}

/// Verdicts of a model on labelled clips under a calibration.
fn decide_clips(model: &EncoderModel, clips: &[ClipFrames], cal: &CalibrationResult) -> anyhow::Result<Vec<ClipOutcome>> {
    if model.head.is_some() {
        let probs = clip_probabilities(model, clips)?;
        return Ok(clips
            .iter()
            .zip(probs)
            .map(|(c, p)| ClipOutcome { clip_id: c.clip_id.clone(), verdict: cal.verdict(p), label: c.label, score: p })
            .collect());
    }
    clips
        .iter()
        .map(|c| {
            let seq = model.embed_clip(c)?;
            let (verdict, score) = match cal.strategy {
                Strategy::Whole => {
                    let s = video_score(&seq)?;
                    (cal.verdict(s), s)
                }
                Strategy::Cumulative => {
                    let d = decide_cumulative(seq.vectors, cal, cal.min_buffer)?;
                    (d.verdict, d.score)
                }
            };
            Ok(ClipOutcome { clip_id: c.clip_id.clone(), verdict, label: c.label, score })
        })
        .collect()
}

/// Test sets of one run, tagged by the report column they feed.
fn test_sets(ctx: &Ctx, run: usize, catalog: &[ClipRecord], rois: &RoiConfig, midv: &Option<(Vec<ClipRecord>, RoiConfig)>) -> anyhow::Result<Vec<(DatasetTag, Vec<ClipFrames>)>> {
    let p = ctx.split(run)?.partition(catalog);
    let mut sets = vec![(DatasetTag::HoloVanilla, ctx.load(&p.test_vanilla, rois)?)];
    if !p.test_photo_replacement.is_empty() {
        sets.push((DatasetTag::HoloPhotoReplacement, ctx.load(&p.test_photo_replacement, rois)?));
    }
    if let Some((clips, r)) = midv {
        let refs: Vec<&ClipRecord> = clips.iter().collect();
        sets.push((DatasetTag::Midv2020Clips, ctx.load(&refs, r)?));
    }
    Ok(sets)
}

fn midv2020(ctx: &Ctx) -> anyhow::Result<Option<(Vec<ClipRecord>, RoiConfig)>> {
    let Some(root) = &ctx.cfg.dataset.midv2020_root else { return Ok(None) };
    let clips = scan_dataset(root, DatasetKind::Midv2020)?;
    let rois = RoiConfig::load(&root.join("roi.toml"))?;
    Ok(Some((clips, rois)))
}

#[derive(Serialize)]
struct Report<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    n_runs: usize,
    rows: &'a [ReportRow],
    runs: BTreeMap<String, &'a [RunResult]>,
}

fn write_report(ctx: &Ctx, dir: &Path, title: &str, results: &BTreeMap<(String, String), Vec<RunResult>>, n_runs: usize) -> anyhow::Result<String> {
    let mut rows = dummy_rows();
    for ((method, strategy), runs) in results {
        rows.push(ReportRow::from_aggregate(method, strategy, &aggregate_runs(runs)));
    }
    let header = format!("# seed = {}, config_hash = {}, runs = {n_runs}\n", ctx.cfg.seed, ctx.hash);
    let text = header + &format_table(title, &rows);
    let runs = results.iter().map(|((m, s), r)| (format!("{m}/{s}"), r.as_slice())).collect();
    write_json(&dir.join("report.json"), &Report { provenance: ctx.provenance(), n_runs, rows: &rows, runs })?;
    write_text(&dir.join("report.txt"), &text)?;
    Ok(text)
}

fn evaluate(ctx: &Ctx, experiments: &[String], n_runs: usize) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let rois = ctx.rois()?;
    let midv = midv2020(ctx)?;
    let mut results: BTreeMap<(String, String), Vec<RunResult>> = BTreeMap::new();
    for run in 0..n_runs {
        let models = experiments
            .iter()
            .map(|e| Ok((e, load_model(&ctx.run_dir(e, run).join("model.ckpt"))?)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let sets = test_sets(ctx, run, &catalog, &rois, &midv)?;
        for (experiment, model) in &models {
            let dir = ctx.run_dir(experiment, run);
            for &strategy in strategies_for(model) {
                let cal_path = calibration_path(&dir, strategy);
                if !cal_path.exists() {
                    bail!("calibration not found: {} (run `calibrate`)", cal_path.display());
                }
                let cal: CalibrationFile = read_json(&cal_path)?;
                let mut dump = Vec::new();
                for (tag, clips) in &sets {
                    let outcome = RunResult { run_id: run, dataset_tag: *tag, clips: decide_clips(model, clips, &cal.calibration)? };
                    dump.push(outcome.clone());
                    results.entry(((*experiment).clone(), strategy.as_str().to_string())).or_default().push(outcome);
                }
                write_json(&dir.join(format!("scores_{}.json", strategy.as_str())), &dump)?;
            }
            info!("evaluated {experiment} run {run}");
        }
    }
    let text = write_report(ctx, ctx.out(), &format!("Results over {n_runs} run(s), mean ± std (%)"), &results, n_runs)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct InferOutput<'a> {
    clip_id: &'a str,
    verdict: Verdict,
    score: f64,
    stop_index: Option<usize>,
    strategy: Strategy,
    #[serde(flatten)]
    provenance: Provenance,
}

fn infer(ctx: &Ctx, checkpoint: &Path, calibration: &Path, clip_id: &str) -> anyhow::Result<()> {
    let model = load_model(checkpoint)?;
    let cal: CalibrationFile = read_json(calibration)?;
    let catalog = ctx.catalog()?;
    let record = catalog
        .iter()
        .find(|c| c.clip_id == clip_id)
        .with_context(|| format!("clip '{clip_id}' not found in {}", ctx.cfg.dataset_root().display()))?;
    let clip = ClipFrames::load(record, &ctx.rois()?, ctx.cfg.dataset.target_fps)?;
    let c = &cal.calibration;
    let (verdict, score, stop_index) = if model.head.is_some() {
        let p = clip_probabilities(&model, std::slice::from_ref(&clip))?[0];
        (c.verdict(p), p, None)
    } else {
        let seq = model.embed_clip(&clip)?;
        match c.strategy {
            Strategy::Whole => {
                let s = video_score(&seq)?;
                (c.verdict(s), s, None)
            }
            Strategy::Cumulative => {
                let d = decide_cumulative(seq.vectors, c, c.min_buffer)?;
                (d.verdict, d.score, Some(d.stop_index))
            }
        }
    };
    let out = InferOutput { clip_id, verdict, score, stop_index, strategy: c.strategy, provenance: Provenance { seed: model.seed, config_hash: model.config_hash.clone() } };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn baseline_sweep(ctx: &Ctx) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let grid = &ctx.cfg.sweep;
    let table = parameter_sweep(&catalog, grid, ctx.cfg.dataset.target_fps)?;
    let dir = ctx.out().join("baseline");
    #[derive(Serialize)]
    struct SweepFile<'a> {
        #[serde(flatten)]
        provenance: Provenance,
        grid: &'a crate::baseline::SweepGrid,
        table: &'a crate::baseline::SweepTable,
    }
    write_json(&dir.join("sweep.json"), &SweepFile { provenance: ctx.provenance(), grid, table: &table })?;
    let text = format!(
        "# seed = {}, config_hash = {}\nROC AUC, {} mode, {} clips\n{}",
        ctx.cfg.seed,
        ctx.hash,
        grid.strategy.as_str(),
        catalog.len(),
        table.format(grid)
    );
    write_text(&dir.join("sweep.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn baseline_eval(ctx: &Ctx, n_runs: usize) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let params = ctx.cfg.baseline;
    let fps = ctx.cfg.dataset.target_fps;
    let mut results: BTreeMap<(String, String), Vec<RunResult>> = BTreeMap::new();
    for run in 0..n_runs {
        let p = ctx.split(run)?.partition(&catalog);
        let mut sets = vec![(DatasetTag::HoloVanilla, p.test_vanilla)];
        if !p.test_photo_replacement.is_empty() {
            sets.push((DatasetTag::HoloPhotoReplacement, p.test_photo_replacement));
        }
        for (tag, clips) in sets {
            let mut per_strategy: BTreeMap<Strategy, Vec<ClipOutcome>> = BTreeMap::new();
            for c in clips {
                let frames = clip_rectified_frames(c, params.working_size, fps)?;
                for strategy in [Strategy::Whole, Strategy::Cumulative] {
                    let d = baseline_decide(&frames, &params, strategy)?;
                    per_strategy.entry(strategy).or_default().push(ClipOutcome {
                        clip_id: c.clip_id.clone(),
                        verdict: d.verdict,
                        label: c.label,
                        score: d.score,
                    });
                }
            }
            for (strategy, clips) in per_strategy {
                results
                    .entry(("baseline (no tracking)".into(), strategy.as_str().into()))
                    .or_default()
                    .push(RunResult { run_id: run, dataset_tag: tag, clips });
            }
        }
    }
    let text = write_report(ctx, &ctx.out().join("baseline"), &format!("Baseline over {n_runs} run(s), mean ± std (%)"), &results, n_runs)?;
    print!("{text}");
    Ok(())
}

fn attribute(ctx: &Ctx, checkpoint: &Path, image: &Path, out: &Path, steps: Option<usize>) -> anyhow::Result<()> {
    let model = load_model(checkpoint)?;
    let img = image::open(image).with_context(|| format!("reading {}", image.display()))?.to_rgb8();
    let x = eval_input(&resize_bilinear(&img, 256, 256));
    let base = black_baseline(INPUT_SIZE, INPUT_SIZE, &AugConfig::disabled());
    let f = encoder_functional(&model, ctx.cfg.attribution.target)?;
    let steps = steps.unwrap_or(ctx.cfg.attribution.steps);
    let map = integrated_gradients(&f, &x, &base, steps)?;
    let display = resize_bilinear(&img, INPUT_SIZE as u32, INPUT_SIZE as u32);
    let rendered = render_attribution(&map, &display)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    rendered.save(out).with_context(|| format!("writing {}", out.display()))?;
    let total: f64 = map.data.iter().map(|&v| v as f64).sum();
    let diff = output_difference(&f, &x, &base)?;
    println!("wrote {}; sum of attributions {total:.6}, F(x) - F(baseline) {diff:.6}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run_command(["holoverify", "--bogus"]), 2);
        assert_eq!(run_command(["holoverify", "frobnicate"]), 2);
        assert_eq!(run_command(["holoverify", "--help"]), 0);
    }

    #[test]
    fn bad_override_exits_with_one() {
        assert_eq!(run_command(["holoverify", "--set", "n_runs=0", "split"]), 1);
    }
}
