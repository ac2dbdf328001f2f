//! The optimization schedule: baseline, frequency sweep, IIVV sweep,
//! combination tuning and final evaluation.
//!
//! Work is split into (candidate group, trial, fold) items run on the rayon
//! pool; results are collected in item order, so output never depends on the
//! number of workers. Every cross-validation stage draws trial `t` from the
//! seed path `cv/t`, so two stages evaluating the same pipeline produce the
//! same numbers.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use impedscope_core::classifier::{self, HyperParams, Matrix, ModelKind};
use impedscope_core::cv::{
    fold_frequency_importance, fold_splits, plan_for, prepare_fold, score_fold, FoldOutcome, FoldSplit, FrequencyChoice, MaskChoice,
    PipelineSpec, TrialOutcome, ZThresholdSpec,
};
use impedscope_core::dataset::{Dataset, SampleRecord, TaskView};
use impedscope_core::folds::FoldPlan;
use impedscope_core::metrics::{roc_auc, Metric, MetricReport, RocCurve};
use impedscope_core::preprocess::{apply_completeness_gate, assemble_features, clean_sample};
use impedscope_core::ranking::{FrequencyRanking, PcaImportance};
use impedscope_core::rng::SeedPath;
use impedscope_core::stats::{paired_t_test, t_confidence_interval, ConfidenceInterval, TTest};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CiOver, ExperimentConfig, FrequencyRef, MaskRef, PipelineConfig, Resources, ZThresholdMode};
use crate::error::ValidationError;
use crate::io::{self, Manifest};
use crate::model_io::{FeaturePipeline, SavedModel};

pub const CI_LEVEL: f64 = 0.95;

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?.install(f))
}

/// Manifest path from a dataset reference that may name the directory.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(io::MANIFEST)
    } else {
        p.to_path_buf()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStatus {
    pub sample_id: String,
    pub patient_id: String,
    pub pathology: String,
    pub category: &'static str,
    pub completeness: f64,
    pub retained: bool,
}

/// Cleaned, completeness-gated dataset plus per-sample bookkeeping.
pub struct Prepared {
    pub manifest: Manifest,
    pub dataset: Dataset,
    pub status: Vec<SampleStatus>,
}

/// Loads the configured dataset, filters and averages raw samples (cleaned
/// ones pass through), and applies the completeness gate.
pub fn load_prepared(cfg: &ExperimentConfig, res: &Resources) -> anyhow::Result<Prepared> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| ValidationError::new("config has no `dataset`"))?;
    let path = manifest_path(&cfg.resolve_path(path));
    let filter = cfg.filter.clone();
    let (manifest, dataset) = io::load_dataset_with(&path, &res.vocabulary, |s| {
        if s.is_cleaned() {
            Ok(s)
        } else {
            Ok(clean_sample(&s, &filter)?)
        }
    })?;
    if manifest.n_patterns != res.universe.len() {
        return Err(ValidationError::new(format!(
            "dataset has {} patterns per frame but geometry `{}` has {}",
            manifest.n_patterns,
            cfg.geometry,
            res.universe.len()
        ))
        .into());
    }
    let Dataset { grid, n_patterns, samples } = dataset;
    let all: Vec<(String, String, String, &'static str, f64)> = samples
        .iter()
        .map(|s| {
            (
                s.sample_id.clone(),
                s.patient_id.clone(),
                s.label.raw_pathology.clone(),
                s.label.category.name(),
                s.completeness,
            )
        })
        .collect();
    let (kept, removed) = apply_completeness_gate(samples, cfg.filter.completeness_threshold);
    let status = all
        .into_iter()
        .map(|(sample_id, patient_id, pathology, category, completeness)| SampleStatus {
            retained: !removed.contains(&sample_id),
            sample_id,
            patient_id,
            pathology,
            category,
            completeness,
        })
        .collect();
    Ok(Prepared {
        manifest,
        dataset: Dataset::new(grid, n_patterns, kept)?,
        status,
    })
}

/// Metrics of one fold, kept compact so large grids stay cheap to hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub auc_micro: Option<f64>,
    pub auc_macro: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
}

impl FoldScores {
    pub fn from_report(r: &MetricReport) -> Self {
        FoldScores {
            auc_micro: r.auc_micro,
            auc_macro: r.auc_macro,
            accuracy: r.accuracy,
            f1: r.f1,
        }
    }

    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::AucMicro => self.auc_micro,
            Metric::AucMacro => self.auc_macro,
            Metric::Accuracy => Some(self.accuracy),
            Metric::F1 => Some(self.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub trial: usize,
    pub fold: usize,
    pub scores: FoldScores,
    pub n_input: usize,
    pub mask_size: usize,
    /// 1-based.
    pub frequencies: Vec<usize>,
    pub threshold_ohm: Option<f64>,
    pub converged: bool,
}

/// One pipeline evaluated in a stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub mask: MaskChoice,
    pub frequencies: FrequencyChoice,
    pub params: HyperParams,
}

impl Candidate {
    pub fn f_t(&self) -> Option<usize> {
        match &self.frequencies {
            FrequencyChoice::Top(f) => Some(*f),
            _ => None,
        }
    }
}

pub fn frequency_label(f: &FrequencyChoice) -> String {
    match f {
        FrequencyChoice::All => "all".into(),
        FrequencyChoice::Top(n) => format!("top {n}"),
        FrequencyChoice::Fixed(v) => {
            let list: Vec<String> = v.iter().map(|i| (i + 1).to_string()).collect();
            format!("fixed {}", list.join(" "))
        }
    }
}

pub fn params_label(p: &HyperParams) -> String {
    match p {
        HyperParams::Svm(s) => format!("svm kernel={} C={}", s.kernel.name(), s.c),
        HyperParams::RandomForest(r) => format!(
            "random_forest trees={} depth={} features={}",
            r.n_trees, r.max_depth, r.max_features
        ),
        HyperParams::Logistic(l) => format!("logistic C={} max_iter={}", l.c, l.max_iter),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub index: usize,
    pub label: String,
    pub family: ModelKind,
    pub params: HyperParams,
    pub mask: String,
    pub frequencies: String,
    pub f_t: Option<usize>,
    pub n_input_min: usize,
    pub n_input_max: usize,
    /// `[trial][fold]` values of the stage metric; `None` where undefined.
    pub fold_values: Vec<Vec<Option<f64>>>,
    pub trial_means: Vec<Option<f64>>,
    pub summary: Option<ConfidenceInterval>,
    pub vs_baseline: Option<TTest>,
    pub all_converged: bool,
    #[serde(skip)]
    pub records: Vec<FoldRecord>,
    #[serde(skip)]
    pub candidate: Candidate,
}

impl CandidateResult {
    pub fn mean(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageResult {
    pub stage: String,
    pub metric: Metric,
    pub n_trials: usize,
    pub n_folds: usize,
    pub candidates: Vec<CandidateResult>,
    /// Candidate indices by descending mean, ties to the lower index.
    pub ranking: Vec<usize>,
    /// Leading entries of `ranking` carried forward.
    pub best: Vec<usize>,
}

impl StageResult {
    pub fn best_candidates(&self) -> Vec<&CandidateResult> {
        self.best.iter().map(|&i| &self.candidates[i]).collect()
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Candidates by descending mean; undefined means last; ties to lower index.
pub fn rank_candidates(c: &[CandidateResult]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| match (c[a].mean(), c[b].mean()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

/// Paired t-test over the (trial, fold) cells where both values exist.
pub fn paired_vs(values: &[Vec<Option<f64>>], reference: &[Vec<Option<f64>>]) -> Option<TTest> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (row, ref_row) in values.iter().zip(reference) {
        for (x, y) in row.iter().zip(ref_row) {
            if let (Some(x), Some(y)) = (x, y) {
                a.push(*x);
                b.push(*y);
            }
        }
    }
    if a.len() < 2 {
        return None;
    }
    paired_t_test(&a, &b).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IivvResult {
    /// Every z-threshold candidate; `best` holds the winner.
    pub zthreshold: StageResult,
    /// Registry masks plus the best z-threshold mask.
    pub masks: StageResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub family: ModelKind,
    pub candidate: usize,
    pub label: String,
    pub params: HyperParams,
    pub mask: MaskChoice,
    pub frequencies: FrequencyChoice,
    pub mean: Option<f64>,
    pub n_input_min: usize,
    pub n_input_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    pub f_t: Vec<usize>,
    pub masks: Vec<String>,
    pub grid: StageResult,
    pub winners: Vec<Winner>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalTrial {
    pub trial: usize,
    pub plan: FoldPlan,
    pub pooled: MetricReport,
    pub folds: Vec<FoldRecord>,
    #[serde(skip)]
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalReport {
    pub label: String,
    pub family: ModelKind,
    pub params: HyperParams,
    pub mask: String,
    pub frequencies: String,
    pub class_names: Vec<String>,
    pub trials: Vec<FinalTrial>,
    /// Mean over trials of the pooled metrics.
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc_micro: Option<f64>,
    pub auc_macro: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullReport {
    pub baseline: StageResult,
    pub rankings: FrequencyRanking,
    pub frequency_sweep: StageResult,
    pub iivv: IivvResult,
    pub tuning: TuningResult,
    pub finals: Vec<FinalReport>,
}

pub struct Experiment<'a> {
    pub cfg: &'a ExperimentConfig,
    pub res: &'a Resources,
    pub view: TaskView<'a>,
    pub n_freq: usize,
    pub seed: u64,
    pca: Mutex<Vec<Vec<PcaImportance>>>,
}

impl<'a> Experiment<'a> {
    pub fn new(cfg: &'a ExperimentConfig, res: &'a Resources, dataset: &'a Dataset, seed: u64) -> anyhow::Result<Self> {
        let view = TaskView::new(dataset, cfg.task_spec()?);
        let counts = view.class_counts();
        let names = view.task.class_names();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(ValidationError::new(format!("task {} class `{}` has no samples", cfg.task, names[c])).into());
        }
        let n_patients = view.patient_ids().len();
        if n_patients < cfg.n_folds {
            return Err(impedscope_core::Error::TooFewPatients {
                needed: cfg.n_folds,
                found: n_patients,
            }
            .into());
        }
        if dataset.n_patterns != res.universe.len() {
            return Err(ValidationError::new("dataset and geometry disagree on the number of patterns").into());
        }
        let exp = Experiment {
            cfg,
            res,
            view,
            n_freq: dataset.grid.len(),
            seed,
            pca: Mutex::new(Vec::new()),
        };
        exp.check_sweeps()?;
        Ok(exp)
    }

    /// Config checks that need the dataset, done before any training.
    fn check_sweeps(&self) -> anyhow::Result<()> {
        let (lo, hi) = self.f_t_range();
        if lo == 0 || hi > self.n_freq || lo > hi {
            return Err(ValidationError::new(format!("f_T range {lo}..={hi} outside 1..={}", self.n_freq)).into());
        }
        let named = self.sweep_masks()?;
        let z = &self.cfg.iivv_sweep.zthreshold;
        if named.is_empty() && z.candidates().is_empty() {
            return Err(ValidationError::new("IIVV sweep has no candidate masks").into());
        }
        if z.frequency > self.n_freq {
            return Err(ValidationError::new("z-threshold frequency outside the grid").into());
        }
        self.all_mask()?;
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.view.task.class_names().into_iter().map(String::from).collect()
    }

    fn f_t_range(&self) -> (usize, usize) {
        match self.cfg.frequency_sweep.f_t {
            Some([lo, hi]) => (lo, hi),
            None => (1, self.n_freq),
        }
    }

    fn all_mask(&self) -> anyhow::Result<MaskChoice> {
        let m = self
            .res
            .masks
            .iter()
            .find(|m| m.len() == self.res.universe.len())
            .ok_or_else(|| ValidationError::new("mask registry has no full-universe mask"))?;
        Ok(MaskChoice::Fixed(m.clone()))
    }

    fn sweep_masks(&self) -> anyhow::Result<Vec<MaskChoice>> {
        match &self.cfg.iivv_sweep.masks {
            None => Ok(self.res.masks.iter().cloned().map(MaskChoice::Fixed).collect()),
            Some(names) => names
                .iter()
                .map(|n| Ok(MaskChoice::Fixed(self.res.mask(n)?.clone())))
                .collect(),
        }
    }

    /// Z-threshold candidate as a mask choice; in global mode it is resolved
    /// on every sample up front.
    fn zthreshold_choice(&self, z: ZThresholdSpec) -> anyhow::Result<MaskChoice> {
        Ok(match self.cfg.iivv_sweep.zthreshold.mode {
            ZThresholdMode::PerFold => MaskChoice::ZThreshold(z),
            ZThresholdMode::Global => {
                let (mut mask, t) = z.resolve(&self.view.samples)?;
                mask.name = format!("{} ({t:.3} ohm)", z.label());
                MaskChoice::Fixed(mask)
            }
        })
    }

    pub fn resolve_mask(&self, m: &MaskRef) -> anyhow::Result<MaskChoice> {
        match m {
            MaskRef::Named(n) => Ok(MaskChoice::Fixed(self.res.mask(n)?.clone())),
            MaskRef::ZThreshold { side, quantile, frequency } => {
                if *frequency == 0 || *frequency > self.n_freq || !(0.0..=1.0).contains(quantile) {
                    return Err(ValidationError::new("z-threshold mask needs a 1-based frequency and a quantile in [0, 1]").into());
                }
                self.zthreshold_choice(ZThresholdSpec {
                    side: *side,
                    quantile: *quantile,
                    frequency: frequency - 1,
                })
            }
        }
    }

    pub fn resolve_frequencies(&self, f: &FrequencyRef) -> anyhow::Result<FrequencyChoice> {
        Ok(match f {
            FrequencyRef::All => FrequencyChoice::All,
            FrequencyRef::Top(n) => {
                if *n == 0 || *n > self.n_freq {
                    return Err(ValidationError::new(format!("f_T = {n} outside 1..={}", self.n_freq)).into());
                }
                FrequencyChoice::Top(*n)
            }
            FrequencyRef::Fixed(v) => {
                if v.is_empty() || v.iter().any(|&i| i == 0 || i > self.n_freq) {
                    return Err(ValidationError::new("fixed frequencies must be 1-based grid indices").into());
                }
                let mut z: Vec<usize> = v.iter().map(|i| i - 1).collect();
                z.sort_unstable();
                z.dedup();
                FrequencyChoice::Fixed(z)
            }
        })
    }

    pub fn candidate_from(&self, p: &PipelineConfig) -> anyhow::Result<Candidate> {
        p.params.validate().map_err(|e| ValidationError::new(e.to_string()))?;
        let mask = self.resolve_mask(&p.mask)?;
        let frequencies = self.resolve_frequencies(&p.frequencies)?;
        Ok(Candidate {
            label: format!("{} | {} | {}", params_label(&p.params), frequency_label(&frequencies), mask.name()),
            mask,
            frequencies,
            params: p.params.clone(),
        })
    }

    fn spec(&self, c: &Candidate) -> PipelineSpec {
        PipelineSpec {
            mask: c.mask.clone(),
            frequencies: c.frequencies.clone(),
            params: c.params.clone(),
            normalization: self.cfg.normalization,
            pca_observations: self.cfg.pca.observations,
            pca_components: self.cfg.pca.components,
        }
    }

    fn trial_seed(&self, stream: &str, trial: usize) -> SeedPath {
        SeedPath::root(self.seed).child(stream).index(trial as u64)
    }

    pub fn trial_splits(&self, stream: &str, trial: usize) -> anyhow::Result<(FoldPlan, Vec<FoldSplit>)> {
        let plan = plan_for(&self.view, self.cfg.n_folds, self.trial_seed(stream, trial))?;
        let splits = fold_splits(&self.view, &plan)?;
        Ok((plan, splits))
    }

    /// Training-split PCA importances of the shared CV trials, `[trial][fold]`.
    pub fn pca_table(&self, n_trials: usize) -> anyhow::Result<Vec<Vec<PcaImportance>>> {
        let have = self.pca.lock().expect("pca cache").len();
        if have < n_trials {
            let extra = (have..n_trials)
                .into_par_iter()
                .map(|t| {
                    let (_, splits) = self.trial_splits("cv", t)?;
                    splits
                        .par_iter()
                        .map(|s| Ok(fold_frequency_importance(&self.view, s, self.cfg.pca.observations, self.cfg.pca.components)?))
                        .collect::<anyhow::Result<Vec<_>>>()
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let mut cache = self.pca.lock().expect("pca cache");
            if cache.len() == have {
                cache.extend(extra);
            }
        }
        Ok(self.pca.lock().expect("pca cache")[..n_trials].to_vec())
    }

    /// Composite frequency ranking over every fold of `n_trials` CV trials.
    pub fn frequency_ranking(&self, n_trials: usize) -> anyhow::Result<FrequencyRanking> {
        let table = self.pca_table(n_trials)?;
        let scores = table.into_iter().flatten().map(|p| p.scores).collect();
        Ok(FrequencyRanking::from_fold_scores(scores)?)
    }

    /// Evaluates candidates over `n_trials` x `n_folds` of the shared CV
    /// trials. Candidates sharing mask and frequencies reuse one feature
    /// matrix per fold. Returns `[candidate]` fold records in (trial, fold)
    /// order.
    pub fn evaluate_candidates(&self, candidates: &[Candidate], n_trials: usize) -> anyhow::Result<Vec<Vec<FoldRecord>>> {
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, c) in candidates.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|(g, _)| candidates[*g].mask == c.mask && candidates[*g].frequencies == c.frequencies)
            {
                Some((_, members)) => members.push(i),
                None => groups.push((i, vec![i])),
            }
        }
        let needs_pca = candidates.iter().any(|c| matches!(c.frequencies, FrequencyChoice::Top(_)));
        let pca = if needs_pca { Some(self.pca_table(n_trials)?) } else { None };
        let splits = (0..n_trials)
            .map(|t| Ok(self.trial_splits("cv", t)?.1))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let n_folds = self.cfg.n_folds;
        let items: Vec<(usize, usize, usize)> = (0..groups.len())
            .flat_map(|g| (0..n_trials).flat_map(move |t| (0..n_folds).map(move |f| (g, t, f))))
            .collect();
        let results = items
            .par_iter()
            .map(|&(g, t, f)| {
                let (head, members) = &groups[g];
                let spec = self.spec(&candidates[*head]);
                let importance = pca.as_ref().map(|p| &p[t][f]);
                let prepared = prepare_fold(&self.view, &splits[t][f], &spec, importance)?;
                members
                    .iter()
                    .map(|&m| {
                        let out = score_fold(&prepared, &candidates[m].params, self.trial_seed("cv", t))?;
                        Ok((m, record(t, &out)))
                    })
                    .collect::<anyhow::Result<Vec<_>>>()
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut per: Vec<Vec<FoldRecord>> = vec![Vec::new(); candidates.len()];
        for batch in results {
            for (m, r) in batch {
                per[m].push(r);
            }
        }
        for p in per.iter_mut() {
            p.sort_by_key(|r| (r.trial, r.fold));
        }
        Ok(per)
    }

    fn summarize(
        &self,
        stage: &str,
        candidates: Vec<Candidate>,
        records: Vec<Vec<FoldRecord>>,
        metric: Metric,
        n_trials: usize,
        reference: Option<&[Vec<Option<f64>>]>,
    ) -> StageResult {
        let n_folds = self.cfg.n_folds;
        let results: Vec<CandidateResult> = candidates
            .into_iter()
            .zip(records)
            .enumerate()
            .map(|(index, (candidate, records))| {
                let mut fold_values = vec![vec![None; n_folds]; n_trials];
                for r in &records {
                    fold_values[r.trial][r.fold] = r.scores.get(metric);
                }
                let trial_means: Vec<Option<f64>> = fold_values
                    .iter()
                    .map(|row| mean(&row.iter().flatten().copied().collect::<Vec<_>>()))
                    .collect();
                let pool: Vec<f64> = match self.cfg.ci_over {
                    CiOver::Trials => trial_means.iter().flatten().copied().collect(),
                    CiOver::Folds => fold_values.iter().flatten().flatten().copied().collect(),
                };
                let summary = t_confidence_interval(&pool, CI_LEVEL).ok();
                let vs_baseline = reference.and_then(|r| paired_vs(&fold_values, r));
                CandidateResult {
                    index,
                    label: candidate.label.clone(),
                    family: candidate.params.kind(),
                    params: candidate.params.clone(),
                    mask: candidate.mask.name(),
                    frequencies: frequency_label(&candidate.frequencies),
                    f_t: candidate.f_t(),
                    n_input_min: records.iter().map(|r| r.n_input).min().unwrap_or(0),
                    n_input_max: records.iter().map(|r| r.n_input).max().unwrap_or(0),
                    fold_values,
                    trial_means,
                    summary,
                    vs_baseline,
                    all_converged: records.iter().all(|r| r.converged),
                    records,
                    candidate,
                }
            })
            .collect();
        let ranking = rank_candidates(&results);
        let best = ranking.iter().copied().take(self.cfg.best_k).collect();
        StageResult {
            stage: stage.into(),
            metric,
            n_trials,
            n_folds,
            candidates: results,
            ranking,
            best,
        }
    }

    fn run_stage(&self, stage: &str, candidates: Vec<Candidate>, metric: Metric, n_trials: usize, reference: Option<&[Vec<Option<f64>>]>) -> anyhow::Result<StageResult> {
        let records = self.evaluate_candidates(&candidates, n_trials)?;
        Ok(self.summarize(stage, candidates, records, metric, n_trials, reference))
    }

    /// Default-hyperparameter models on all patterns and frequencies.
    pub fn baseline(&self) -> anyhow::Result<StageResult> {
        let all = self.all_mask()?;
        let candidates = self
            .cfg
            .families
            .iter()
            .map(|&k| {
                let params = self.cfg.baseline.params(k);
                Candidate {
                    label: params_label(&params),
                    mask: all.clone(),
                    frequencies: FrequencyChoice::All,
                    params,
                }
            })
            .collect();
        self.run_stage("baseline", candidates, self.cfg.stage_metric.reporting(), self.cfg.trials.baseline, None)
    }

    /// Fold values of the baseline SVM, the reference for the sweeps' t-tests.
    fn svm_reference(baseline: &StageResult) -> Option<&[Vec<Option<f64>>]> {
        baseline
            .candidates
            .iter()
            .find(|c| c.family == ModelKind::Svm)
            .map(|c| c.fold_values.as_slice())
    }

    /// Baseline SVM on the top f_T frequencies of each fold's PCA ranking.
    pub fn frequency_sweep(&self, baseline: Option<&StageResult>) -> anyhow::Result<StageResult> {
        let all = self.all_mask()?;
        let params = self.cfg.baseline.params(ModelKind::Svm);
        let (lo, hi) = self.f_t_range();
        let candidates = (lo..=hi)
            .map(|f| Candidate {
                label: format!("f_T={f}"),
                mask: all.clone(),
                frequencies: FrequencyChoice::Top(f),
                params: params.clone(),
            })
            .collect();
        self.run_stage(
            "frequency_sweep",
            candidates,
            self.cfg.stage_metric.reporting(),
            self.cfg.trials.frequency,
            baseline.and_then(Self::svm_reference),
        )
    }

    /// Baseline SVM on every registry mask and every z-threshold candidate at
    /// all frequencies.
    pub fn iivv_sweep(&self, baseline: Option<&StageResult>) -> anyhow::Result<IivvResult> {
        let params = self.cfg.baseline.params(ModelKind::Svm);
        let make = |mask: MaskChoice| Candidate {
            label: mask.name(),
            mask,
            frequencies: FrequencyChoice::All,
            params: params.clone(),
        };
        let named: Vec<Candidate> = self.sweep_masks()?.into_iter().map(make).collect();
        let z: Vec<Candidate> = self
            .cfg
            .iivv_sweep
            .zthreshold
            .candidates()
            .into_iter()
            .map(|z| Ok(make(self.zthreshold_choice(z)?)))
            .collect::<anyhow::Result<_>>()?;
        let n_named = named.len();
        let mut all = named;
        all.extend(z);
        let metric = self.cfg.stage_metric.reporting();
        let n_trials = self.cfg.trials.iivv;
        let reference = baseline.and_then(Self::svm_reference);
        let mut records = self.evaluate_candidates(&all, n_trials)?;
        let z_records = records.split_off(n_named);
        let z_candidates = all.split_off(n_named);
        let zthreshold = self.summarize("zthreshold_sweep", z_candidates, z_records, metric, n_trials, reference);
        let (mut cands, mut recs) = (all, records);
        if let Some(&b) = zthreshold.ranking.first() {
            let best = &zthreshold.candidates[b];
            cands.push(best.candidate.clone());
            recs.push(best.records.clone());
        }
        let masks = self.summarize("iivv_sweep", cands, recs, metric, n_trials, reference);
        Ok(IivvResult { zthreshold, masks })
    }

    /// Grid search over every (best f_T, best mask) combination and family.
    pub fn tuning(&self, freq: &StageResult, iivv: &StageResult, baseline: Option<&StageResult>) -> anyhow::Result<TuningResult> {
        let f_ts: Vec<usize> = freq.best_candidates().iter().filter_map(|c| c.f_t).collect();
        let masks: Vec<MaskChoice> = iivv.best_candidates().iter().map(|c| c.candidate.mask.clone()).collect();
        let mut candidates = Vec::new();
        for &f_t in &f_ts {
            for mask in &masks {
                for &family in &self.cfg.families {
                    for params in self.cfg.grids.points(family) {
                        candidates.push(Candidate {
                            label: format!("{} | f_T={f_t} | {}", params_label(&params), mask.name()),
                            mask: mask.clone(),
                            frequencies: FrequencyChoice::Top(f_t),
                            params,
                        });
                    }
                }
            }
        }
        let metric = self.cfg.stage_metric.tuning();
        let n_trials = self.cfg.trials.tuning;
        let records = self.evaluate_candidates(&candidates, n_trials)?;
        let mut grid = self.summarize("tuning", candidates, records, metric, n_trials, None);
        if let Some(b) = baseline {
            for c in grid.candidates.iter_mut() {
                if let Some(base) = b.candidates.iter().find(|x| x.family == c.family) {
                    let reference: Vec<Vec<Option<f64>>> = base
                        .records
                        .chunk_by(|a, b| a.trial == b.trial)
                        .map(|rows| rows.iter().map(|r| r.scores.get(metric)).collect())
                        .collect();
                    c.vs_baseline = paired_vs(&c.fold_values, &reference);
                }
            }
        }
        let winners = self
            .cfg
            .families
            .iter()
            .filter_map(|&family| {
                grid.ranking.iter().find(|&&i| grid.candidates[i].family == family).map(|&i| {
                    let c = &grid.candidates[i];
                    Winner {
                        family,
                        candidate: i,
                        label: c.label.clone(),
                        params: c.params.clone(),
                        mask: c.candidate.mask.clone(),
                        frequencies: c.candidate.frequencies.clone(),
                        mean: c.mean(),
                        n_input_min: c.n_input_min,
                        n_input_max: c.n_input_max,
                    }
                })
            })
            .collect();
        Ok(TuningResult {
            f_t: f_ts,
            masks: masks.iter().map(|m| m.name()).collect(),
            grid,
            winners,
        })
    }

    /// Fresh cross-validation with pooled out-of-fold predictions.
    pub fn final_evaluation(&self, c: &Candidate) -> anyhow::Result<FinalReport> {
        let spec = self.spec(c);
        let n_trials = self.cfg.trials.final_;
        let trials = (0..n_trials)
            .map(|t| {
                let (plan, splits) = self.trial_splits("final", t)?;
                let seed = self.trial_seed("final", t);
                let folds = splits
                    .par_iter()
                    .map(|s| {
                        let prepared = prepare_fold(&self.view, s, &spec, None)?;
                        Ok(score_fold(&prepared, &spec.params, seed)?)
                    })
                    .collect::<anyhow::Result<Vec<FoldOutcome>>>()?;
                let outcome = TrialOutcome::assemble(&self.view, plan.clone(), folds)?;
                Ok(FinalTrial {
                    trial: t,
                    plan,
                    pooled: outcome.pooled.clone(),
                    folds: outcome.folds.iter().map(|f| record(t, f)).collect(),
                    outcome,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let avg = |f: &dyn Fn(&MetricReport) -> f64| trials.iter().map(|t| f(&t.pooled)).sum::<f64>() / n_trials as f64;
        let avg_opt = |f: &dyn Fn(&MetricReport) -> Option<f64>| {
            let v: Vec<f64> = trials.iter().filter_map(|t| f(&t.pooled)).collect();
            if v.len() == trials.len() {
                mean(&v)
            } else {
                None
            }
        };
        Ok(FinalReport {
            label: c.label.clone(),
            family: c.params.kind(),
            params: c.params.clone(),
            mask: c.mask.name(),
            frequencies: frequency_label(&c.frequencies),
            class_names: self.class_names(),
            accuracy: avg(&|r| r.accuracy),
            f1: avg(&|r| r.f1),
            precision: avg(&|r| r.precision),
            recall: avg(&|r| r.recall),
            auc_micro: avg_opt(&|r| r.auc_micro),
            auc_macro: avg_opt(&|r| r.auc_macro),
            trials,
        })
    }

    pub fn winner_candidate(w: &Winner) -> Candidate {
        Candidate {
            label: w.label.clone(),
            mask: w.mask.clone(),
            frequencies: w.frequencies.clone(),
            params: w.params.clone(),
        }
    }

    /// The whole schedule.
    pub fn run_all(&self) -> anyhow::Result<FullReport> {
        let baseline = self.baseline()?;
        let rankings = self.frequency_ranking(self.cfg.trials.frequency)?;
        let frequency_sweep = self.frequency_sweep(Some(&baseline))?;
        let iivv = self.iivv_sweep(Some(&baseline))?;
        let tuning = self.tuning(&frequency_sweep, &iivv.masks, Some(&baseline))?;
        let finals = tuning
            .winners
            .iter()
            .map(|w| self.final_evaluation(&Self::winner_candidate(w)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(FullReport {
            baseline,
            rankings,
            frequency_sweep,
            iivv,
            tuning,
            finals,
        })
    }

    /// Fits one pipeline on every sample of the task.
    pub fn train(&self, c: &Candidate) -> anyhow::Result<SavedModel> {
        let all: Vec<usize> = (0..self.view.len()).collect();
        let split = FoldSplit {
            fold: 0,
            train: all.clone(),
            test: all,
        };
        let spec = self.spec(c);
        let prepared = prepare_fold(&self.view, &split, &spec, None)?;
        let seed = SeedPath::root(self.seed).child("train").value();
        let n_input = prepared.x_train.n_cols();
        let model = classifier::fit(
            &Matrix::new(&prepared.x_train.data, prepared.x_train.n_rows, n_input)?,
            &prepared.y_train,
            prepared.n_classes,
            &c.params,
            seed,
        )?;
        let mask_indices = match &c.mask {
            MaskChoice::Fixed(m) => m.indices.clone(),
            MaskChoice::ZThreshold(z) => z.resolve(&self.view.samples)?.0.indices,
        };
        let pipeline = FeaturePipeline {
            task: self.cfg.task,
            class_names: self.class_names(),
            mask_name: c.mask.name(),
            mask_indices,
            frequencies: prepared.frequencies.clone(),
            normalization: prepared.normalizer.mode,
            means: prepared.normalizer.means.clone(),
            stds: prepared.normalizer.stds.clone(),
            params: c.params.clone(),
            present: model.present.clone(),
            n_features: model.n_features,
            seed,
            converged: model.converged,
        };
        Ok(SavedModel { pipeline, model })
    }
}

fn record(trial: usize, o: &FoldOutcome) -> FoldRecord {
    FoldRecord {
        trial,
        fold: o.fold,
        scores: FoldScores::from_report(&o.report),
        n_input: o.n_input,
        mask_size: o.mask_size,
        frequencies: o.frequencies.iter().map(|f| f + 1).collect(),
        threshold_ohm: o.threshold_ohm,
        converged: o.converged,
    }
}

/// Applies a saved model to cleaned samples; returns row-major class
/// probabilities.
pub fn predict_saved(saved: &SavedModel, samples: &[&SampleRecord]) -> anyhow::Result<Vec<f64>> {
    let p = &saved.pipeline;
    let mask = impedscope_core::geometry::MaskSet::from_indices(p.mask_name.clone(), p.mask_indices.clone());
    let mut x = assemble_features(samples, &mask, &p.frequencies)?;
    p.normalizer().apply(&mut x);
    Ok(saved.model.predict_proba(&Matrix::new(&x.data, x.n_rows, x.n_cols())?)?)
}

/// ROC curves of pooled probabilities: micro average first, then one
/// one-vs-rest curve per class (`None` where the class is absent or alone).
pub fn roc_curves(probs: &[f64], n_classes: usize, y: &[usize]) -> Vec<(String, Option<RocCurve>)> {
    let mut out = vec![("micro".to_string(), impedscope_core::metrics::micro_roc(probs, n_classes, y).ok())];
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.chunks(n_classes).map(|r| r[c]).collect();
        let truth: Vec<bool> = y.iter().map(|&k| k == c).collect();
        out.push((format!("class{c}"), roc_auc(&scores, &truth).ok()));
    }
    out
}
