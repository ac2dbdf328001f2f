use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use impedscope_core::classifier::ModelKind;
use impedscope_core::metrics::MetricReport;
use impedscope_core::synth::{geometric_factors, generate_sample, sample_slots};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{check_masks, ExperimentConfig, Resources};
use crate::error::ValidationError;
use crate::pipeline::{load_prepared, predict_saved, with_workers, Experiment, Prepared, Winner};
use crate::{io, model_io, report};

#[derive(Debug, Parser)]
#[command(name = "impedscope", version, about = "Impedance-spectroscopy lesion classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; overrides the config. Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Cole-model cohort.
    Synth(Common),
    /// Filter and average raw frames, apply the completeness gate.
    Preprocess(Common),
    /// Mask registry operations.
    Masks {
        #[command(subcommand)]
        action: MasksAction,
    },
    /// PCA frequency ranking and the AUC-vs-f_T sweep.
    RankFreqs(Common),
    /// Fit the `train` pipeline on the whole dataset and save the model.
    Train(Common),
    /// Baseline, both sweeps and combination tuning.
    Tune(Common),
    /// Fresh cross-validation of configured pipelines, or scoring of a saved model.
    Evaluate(Common),
    /// The complete schedule, from baseline to final evaluation.
    Report(Common),
}

#[derive(Debug, Subcommand)]
pub enum MasksAction {
    /// Check every mask against its expected cardinality.
    Validate(Common),
}

fn load_config(c: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn start(c: &Common, command: &str, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let mut shown = cfg.clone();
    shown.workers = None;
    report::write_json(
        &c.out.join("run.json"),
        &RunInfo {
            command,
            seed: c.seed,
            config: &shown,
        },
    )
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(c) => synth(&c),
        Command::Preprocess(c) => preprocess(&c),
        Command::Masks {
            action: MasksAction::Validate(c),
        } => masks_validate(&c),
        Command::RankFreqs(c) => rank_freqs(&c),
        Command::Train(c) => train(&c),
        Command::Tune(c) => tune(&c),
        Command::Evaluate(c) => evaluate(&c),
        Command::Report(c) => full_report(&c),
    }
}

fn synth(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let cohort = cfg
        .cohort
        .as_ref()
        .ok_or_else(|| ValidationError::new("config has no `cohort` section"))?
        .to_spec()?;
    let res = cfg.resources()?;
    let grid = cfg.frequency_grid.grid()?;
    cohort.validate(&grid)?;
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let factors = geometric_factors(&res.universe, &res.array, cohort.geometric_modulation)?;
    let slots = sample_slots(&cohort);
    let entries = with_workers(cfg.workers, || {
        slots
            .par_iter()
            .map(|slot| {
                let s = generate_sample(&cohort, &grid, &factors, &res.vocabulary, slot, c.seed)?;
                io::write_sample(&c.out, &s)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })??;
    let n = entries.len();
    let path = io::write_manifest(&c.out, &grid, &cfg.geometry, res.universe.len(), entries)?;
    println!(
        "wrote {n} samples from {} patients ({} patterns x {} frequencies) to {}",
        cohort.n_patients(),
        res.universe.len(),
        grid.len(),
        path.display()
    );
    Ok(())
}

fn prepared(cfg: &ExperimentConfig) -> anyhow::Result<(Resources, Prepared)> {
    let res = cfg.resources()?;
    let p = with_workers(cfg.workers, || load_prepared(cfg, &res))??;
    Ok((res, p))
}

fn preprocess(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let (_, p) = prepared(&cfg)?;
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    with_workers(cfg.workers, || io::save_dataset(&c.out, &p.dataset, &p.manifest.geometry))??;
    report::write_completeness(&c.out.join("completeness.csv"), &p.status)?;
    let kept = p.status.iter().filter(|s| s.retained).count();
    println!(
        "kept {kept} of {} samples at completeness threshold {}",
        p.status.len(),
        cfg.filter.completeness_threshold
    );
    Ok(())
}

fn masks_validate(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let array = cfg.array()?;
    let universe = impedscope_core::PatternUniverse::enumerate_all(&array);
    let checks = match cfg.mask_definitions()? {
        Some(defs) => check_masks(&defs, &array, &universe)?,
        None => vec![crate::config::MaskCheck {
            name: "All".into(),
            expected: Some(universe.len()),
            found: universe.len(),
            mean_ii_mm: None,
            mean_vv_mm: None,
            ok: true,
        }],
    };
    start(c, "masks validate", &cfg)?;
    report::write_mask_table(&c.out, &checks)?;
    println!("{:<16} {:>8} {:>8} {:>8} {:>8}  status", "mask", "expected", "found", "II mm", "VV mm");
    for m in &checks {
        let mm = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<16} {:>8} {:>8} {:>8} {:>8}  {}",
            m.name,
            m.expected.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
            m.found,
            mm(m.mean_ii_mm),
            mm(m.mean_vv_mm),
            if m.ok { "ok" } else { "MISMATCH" }
        );
    }
    let bad: Vec<String> = checks
        .iter()
        .filter(|m| !m.ok)
        .map(|m| format!("{} (expected {}, found {})", m.name, m.expected.unwrap_or(0), m.found))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(ValidationError::new(format!("mask cardinality mismatch: {}", bad.join(", "))).into())
    }
}

fn rank_freqs(c: &Common) -> anyhow::Result<()> {
    let mut cfg = load_config(c)?;
    cfg.families = vec![ModelKind::Svm];
    let (res, p) = prepared(&cfg)?;
    start(c, "rank-freqs", &cfg)?;
    let exp = Experiment::new(&cfg, &res, &p.dataset, c.seed)?;
    let (ranking, baseline, sweep) = with_workers(cfg.workers, || -> anyhow::Result<_> {
        let ranking = exp.frequency_ranking(cfg.trials.frequency)?;
        let baseline = exp.baseline()?;
        let sweep = exp.frequency_sweep(Some(&baseline))?;
        Ok((ranking, baseline, sweep))
    })??;
    report::write_rankings(&c.out, &ranking, &p.dataset.grid)?;
    report::write_stage(&c.out, &baseline)?;
    report::write_stage(&c.out, &sweep)?;
    let top: Vec<String> = ranking.composite.iter().take(5).map(|f| (f + 1).to_string()).collect();
    println!("composite ranking (top 5): {}", top.join(", "));
    let best: Vec<String> = sweep.best_candidates().iter().map(|c| c.label.clone()).collect();
    println!("best f_T: {}", best.join(", "));
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    label: String,
    mask: &'a str,
    mask_size: usize,
    /// 1-based.
    frequencies: Vec<usize>,
    n_input: usize,
    classes: &'a [String],
    converged: bool,
    training: MetricReport,
}

fn train(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let pipeline = cfg
        .train
        .as_ref()
        .ok_or_else(|| ValidationError::new("config has no `train` section"))?;
    let (res, p) = prepared(&cfg)?;
    start(c, "train", &cfg)?;
    let exp = Experiment::new(&cfg, &res, &p.dataset, c.seed)?;
    let cand = exp.candidate_from(pipeline)?;
    let saved = with_workers(cfg.workers, || exp.train(&cand))??;
    model_io::save(&c.out.join("model.bin"), &saved)?;
    let probs = predict_saved(&saved, &exp.view.samples)?;
    let training = MetricReport::from_probabilities(&probs, saved.pipeline.class_names.len(), &exp.view.classes)?;
    let pl = &saved.pipeline;
    report::write_json(
        &c.out.join("train.json"),
        &TrainSummary {
            label: cand.label.clone(),
            mask: &pl.mask_name,
            mask_size: pl.mask_indices.len(),
            frequencies: pl.frequencies.iter().map(|f| f + 1).collect(),
            n_input: pl.n_features,
            classes: &pl.class_names,
            converged: pl.converged,
            training,
        },
    )?;
    println!("trained {} on {} samples ({} inputs)", cand.label, exp.view.len(), pl.n_features);
    Ok(())
}

fn tune(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let (res, p) = prepared(&cfg)?;
    start(c, "tune", &cfg)?;
    let exp = Experiment::new(&cfg, &res, &p.dataset, c.seed)?;
    with_workers(cfg.workers, || -> anyhow::Result<()> {
        let baseline = exp.baseline()?;
        report::write_stage(&c.out, &baseline)?;
        let ranking = exp.frequency_ranking(cfg.trials.frequency)?;
        report::write_rankings(&c.out, &ranking, &p.dataset.grid)?;
        let freq = exp.frequency_sweep(Some(&baseline))?;
        report::write_stage(&c.out, &freq)?;
        let iivv = exp.iivv_sweep(Some(&baseline))?;
        report::write_iivv(&c.out, &iivv)?;
        let tuning = exp.tuning(&freq, &iivv.masks, Some(&baseline))?;
        report::write_tuning(&c.out, &tuning)?;
        for w in &tuning.winners {
            println!("{}: {} (mean {})", w.family.name(), w.label, report::opt(w.mean));
        }
        Ok(())
    })?
}

fn sample_keys(exp: &Experiment) -> Vec<(String, String)> {
    exp.view
        .samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.patient_id.clone()))
        .collect()
}

fn evaluate(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let (res, p) = prepared(&cfg)?;
    start(c, "evaluate", &cfg)?;
    let exp = Experiment::new(&cfg, &res, &p.dataset, c.seed)?;
    let mut candidates = cfg
        .evaluate
        .pipelines
        .iter()
        .map(|pc| exp.candidate_from(pc))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(path) = &cfg.evaluate.from_tuning {
        let path = cfg.resolve_path(path);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let winners: Vec<Winner> =
            serde_json::from_str(&text).map_err(|e| ValidationError::new(format!("{}: {e}", path.display())))?;
        candidates.extend(winners.iter().map(Experiment::winner_candidate));
    }
    if candidates.is_empty() && cfg.evaluate.model.is_none() {
        return Err(ValidationError::new("`evaluate` needs pipelines, from_tuning or model").into());
    }
    if !candidates.is_empty() {
        let finals = with_workers(cfg.workers, || {
            candidates
                .iter()
                .map(|cand| exp.final_evaluation(cand))
                .collect::<anyhow::Result<Vec<_>>>()
        })??;
        report::write_finals(&c.out, &finals, &sample_keys(&exp), &exp.view.classes)?;
        for f in &finals {
            println!("{}: auc {} accuracy {} f1 {}", f.label, report::opt(f.auc_micro), f.accuracy, f.f1);
        }
    }
    if let Some(path) = &cfg.evaluate.model {
        score_model(&cfg.resolve_path(path), &exp, &c.out)?;
    }
    Ok(())
}

fn score_model(path: &Path, exp: &Experiment, out: &Path) -> anyhow::Result<()> {
    let saved = model_io::load(path)?;
    if saved.pipeline.task != exp.cfg.task {
        return Err(ValidationError::new(format!(
            "model was trained for task {}, config selects task {}",
            saved.pipeline.task, exp.cfg.task
        ))
        .into());
    }
    let probs = predict_saved(&saved, &exp.view.samples)?;
    let k = saved.pipeline.class_names.len();
    let metrics = MetricReport::from_probabilities(&probs, k, &exp.view.classes)?;
    report::write_json(&out.join("model_metrics.json"), &metrics)?;
    let mut header = vec!["sample_id".to_string(), "patient_id".into(), "true_class".into()];
    header.extend(saved.pipeline.class_names.iter().map(|c| format!("p_{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = exp
        .view
        .samples
        .iter()
        .zip(&exp.view.classes)
        .zip(probs.chunks(k))
        .map(|((s, &y), p)| {
            let mut r = vec![s.sample_id.clone(), s.patient_id.clone(), saved.pipeline.class_names[y].clone()];
            r.extend(p.iter().map(|v| report::num(*v)));
            r
        })
        .collect();
    report::write_csv(&out.join("model_predictions.csv"), &header, &rows)?;
    println!("scored saved model on {} samples: auc {}", exp.view.len(), report::opt(metrics.auc_micro));
    Ok(())
}

fn full_report(c: &Common) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let (res, p) = prepared(&cfg)?;
    start(c, "report", &cfg)?;
    report::write_completeness(&c.out.join("completeness.csv"), &p.status)?;
    let exp = Experiment::new(&cfg, &res, &p.dataset, c.seed)?;
    let full = with_workers(cfg.workers, || exp.run_all())??;
    report::write_full(&c.out, &full, &p.dataset.grid, &sample_keys(&exp), &exp.view.classes)?;
    for f in &full.finals {
        println!("{}: auc {} accuracy {} f1 {}", f.label, report::opt(f.auc_micro), f.accuracy, f.f1);
    }
    Ok(())
}
