//! Per-fold pipeline for patient-grouped cross-validation. Everything that
//! is fitted (frequency ranking, z-threshold mask, z-score parameters,
//! classifier) sees training rows only.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, HyperParams, Matrix};
use crate::dataset::{SampleRecord, TaskView};
use crate::folds::{make_lopgo_folds, FoldPlan};
use crate::geometry::{build_zthreshold_mask, MaskSet, ThresholdSide};
use crate::metrics::{Metric, MetricReport};
use crate::preprocess::{assemble_features, FeatureMatrix, NormalizationMode, Normalizer};
use crate::ranking::{build_observations, pca_frequency_importance, rank_by_score, select_top_frequencies, PcaImportance, PcaObservations};
use crate::rng::SeedPath;
use crate::{math, Error, Result};

/// Train/test rows (indices into a [`TaskView`]) of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn fold_splits(view: &TaskView, plan: &FoldPlan) -> Result<Vec<FoldSplit>> {
    let patients: Vec<&str> = view.samples.iter().map(|s| s.patient_id.as_str()).collect();
    (0..plan.n_folds)
        .map(|fold| {
            let (train, test) = plan.split(&patients, fold)?;
            Ok(FoldSplit { fold, train, test })
        })
        .collect()
}

/// Seeded fold plan over the view's patients.
pub fn plan_for(view: &TaskView, n_folds: usize, seed: SeedPath) -> Result<FoldPlan> {
    make_lopgo_folds(&view.patient_ids(), n_folds, seed.child("folds").value())
}

fn rows<'a>(view: &TaskView<'a>, idx: &[usize]) -> Vec<&'a SampleRecord> {
    idx.iter().map(|&i| view.samples[i]).collect()
}

/// PCA importance fitted on the training rows of a split.
pub fn fold_frequency_importance(
    view: &TaskView,
    split: &FoldSplit,
    mode: PcaObservations,
    n_components: usize,
) -> Result<PcaImportance> {
    let train = rows(view, &split.train);
    let (obs, n_obs) = build_observations(&train, mode)?;
    let n_freq = train[0].cleaned()?.n_freq();
    pca_frequency_importance(&obs, n_obs, n_freq, n_components)
}

/// Mean `|Z|` of every pattern at `frequency` over valid entries of
/// `samples`; NaN where a pattern is never valid.
pub fn pattern_mean_magnitude(samples: &[&SampleRecord], frequency: usize) -> Result<Vec<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples for pattern means".into()))?
        .cleaned()?;
    let n = first.n_patterns();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for s in samples {
        let f = s.cleaned()?;
        for p in 0..n {
            if f.is_valid(p) {
                let z = f.get(p, frequency);
                sum[p] += math::hypot(z.re, z.im);
                count[p] += 1;
            }
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect())
}

/// Linear-interpolated quantile of the non-NaN values.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument("quantile of empty data or q outside [0, 1]".into()));
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = math::floor_usize(pos);
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Impedance-threshold mask whose threshold is a quantile of the training
/// pattern means at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZThresholdSpec {
    pub side: ThresholdSide,
    pub quantile: f64,
    /// Zero-based frequency index used for the pattern means.
    #[serde(default)]
    pub frequency: usize,
}

impl ZThresholdSpec {
    pub fn label(&self) -> String {
        let side = match self.side {
            ThresholdSide::Below => "below",
            ThresholdSide::Above => "above",
        };
        format!("z-threshold {side} q{:.2}", self.quantile)
    }

    /// Returns the mask and the resolved threshold in ohms.
    pub fn resolve(&self, samples: &[&SampleRecord]) -> Result<(MaskSet, f64)> {
        let means = pattern_mean_magnitude(samples, self.frequency)?;
        let threshold = quantile(&means, self.quantile)?;
        let mut mask = build_zthreshold_mask(&means, threshold, self.side);
        mask.name = self.label();
        if mask.is_empty() {
            return Err(Error::EmptyMask(mask.name));
        }
        Ok((mask, threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskChoice {
    Fixed(MaskSet),
    /// Resolved on each fold's training rows.
    ZThreshold(ZThresholdSpec),
}

impl MaskChoice {
    pub fn name(&self) -> String {
        match self {
            MaskChoice::Fixed(m) => m.name.clone(),
            MaskChoice::ZThreshold(z) => z.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyChoice {
    All,
    /// Top `f_t` of each fold's own PCA ranking.
    Top(usize),
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub mask: MaskChoice,
    pub frequencies: FrequencyChoice,
    pub params: HyperParams,
    #[serde(default)]
    pub normalization: NormalizationMode,
    #[serde(default)]
    pub pca_observations: PcaObservations,
    #[serde(default = "default_components")]
    pub pca_components: usize,
}

fn default_components() -> usize {
    crate::ranking::DEFAULT_COMPONENTS
}

impl PipelineSpec {
    pub fn new(mask: MaskChoice, frequencies: FrequencyChoice, params: HyperParams) -> Self {
        PipelineSpec {
            mask,
            frequencies,
            params,
            normalization: NormalizationMode::default(),
            pca_observations: PcaObservations::default(),
            pca_components: default_components(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Zero-based, ascending.
    pub frequencies: Vec<usize>,
    pub mask_size: usize,
    pub n_input: usize,
    /// Resolved z-threshold in ohms, when the mask is threshold based.
    pub threshold_ohm: Option<f64>,
    pub pca: Option<PcaImportance>,
    /// Row-major `test_rows x n_classes`.
    pub probabilities: Vec<f64>,
    pub converged: bool,
    pub report: MetricReport,
}

/// Normalized features of one fold, ready for any classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFold {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub frequencies: Vec<usize>,
    pub mask_size: usize,
    pub threshold_ohm: Option<f64>,
    pub pca: Option<PcaImportance>,
    pub x_train: FeatureMatrix,
    pub x_test: FeatureMatrix,
    /// Z-score parameters fitted on the training rows.
    pub normalizer: Normalizer,
    pub y_train: Vec<usize>,
    pub y_test: Vec<usize>,
    pub n_classes: usize,
}

/// Resolves the mask and frequency subset on the split's training rows and
/// builds z-scored train/test matrices. `spec.params` is not used.
/// `importance` may carry a precomputed PCA result for this split.
pub fn prepare_fold(
    view: &TaskView,
    split: &FoldSplit,
    spec: &PipelineSpec,
    importance: Option<&PcaImportance>,
) -> Result<PreparedFold> {
    let train = rows(view, &split.train);
    let test = rows(view, &split.test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(format!("fold {} has an empty side", split.fold)));
    }
    let n_freq = train[0].cleaned()?.n_freq();
    let (mask, threshold_ohm) = match &spec.mask {
        MaskChoice::Fixed(m) => (m.clone(), None),
        MaskChoice::ZThreshold(z) => {
            let (m, t) = z.resolve(&train)?;
            (m, Some(t))
        }
    };
    let mut pca = None;
    let frequencies = match &spec.frequencies {
        FrequencyChoice::All => (0..n_freq).collect(),
        FrequencyChoice::Fixed(f) => f.clone(),
        FrequencyChoice::Top(f_t) => {
            let imp = match importance {
                Some(imp) => imp.clone(),
                None => fold_frequency_importance(view, split, spec.pca_observations, spec.pca_components)?,
            };
            let top = select_top_frequencies(&rank_by_score(&imp.scores), *f_t)?;
            pca = Some(imp);
            top
        }
    };
    let mut x_train = assemble_features(&train, &mask, &frequencies)?;
    let mut x_test = assemble_features(&test, &mask, &frequencies)?;
    let norm = Normalizer::fit(&x_train, spec.normalization)?;
    norm.apply(&mut x_train);
    norm.apply(&mut x_test);
    Ok(PreparedFold {
        fold: split.fold,
        train_rows: split.train.clone(),
        test_rows: split.test.clone(),
        frequencies,
        mask_size: mask.len(),
        threshold_ohm,
        pca,
        x_train,
        x_test,
        normalizer: norm,
        y_train: split.train.iter().map(|&i| view.classes[i]).collect(),
        y_test: split.test.iter().map(|&i| view.classes[i]).collect(),
        n_classes: view.task.n_classes(),
    })
}

/// Fits `params` on the prepared training rows and scores the test rows.
pub fn score_fold(prepared: &PreparedFold, params: &HyperParams, seed: SeedPath) -> Result<FoldOutcome> {
    let p = prepared;
    let n_input = p.x_train.n_cols();
    let model = classifier::fit(
        &Matrix::new(&p.x_train.data, p.x_train.n_rows, n_input)?,
        &p.y_train,
        p.n_classes,
        params,
        seed.child("model").index(p.fold as u64).value(),
    )?;
    let probabilities = model.predict_proba(&Matrix::new(&p.x_test.data, p.x_test.n_rows, n_input)?)?;
    let report = MetricReport::from_probabilities(&probabilities, p.n_classes, &p.y_test)?;
    Ok(FoldOutcome {
        fold: p.fold,
        train_rows: p.train_rows.clone(),
        test_rows: p.test_rows.clone(),
        frequencies: p.frequencies.clone(),
        mask_size: p.mask_size,
        n_input,
        threshold_ohm: p.threshold_ohm,
        pca: p.pca.clone(),
        probabilities,
        converged: model.converged,
        report,
    })
}

/// Fits the pipeline on the split's training rows and scores its test rows.
pub fn evaluate_fold(
    view: &TaskView,
    split: &FoldSplit,
    spec: &PipelineSpec,
    importance: Option<&PcaImportance>,
    seed: SeedPath,
) -> Result<FoldOutcome> {
    score_fold(&prepare_fold(view, split, spec, importance)?, &spec.params, seed)
}

/// One complete cross-validation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    /// Out-of-fold probabilities in view row order.
    pub pooled_probabilities: Vec<f64>,
    pub pooled: MetricReport,
}

impl TrialOutcome {
    pub fn assemble(view: &TaskView, plan: FoldPlan, folds: Vec<FoldOutcome>) -> Result<Self> {
        let k = view.task.n_classes();
        let mut pooled_probabilities = vec![f64::NAN; view.len() * k];
        for f in &folds {
            for (j, &r) in f.test_rows.iter().enumerate() {
                pooled_probabilities[r * k..(r + 1) * k].copy_from_slice(&f.probabilities[j * k..(j + 1) * k]);
            }
        }
        if pooled_probabilities.iter().any(|p| p.is_nan()) {
            return Err(Error::InvalidArgument("folds do not cover every row".into()));
        }
        let pooled = MetricReport::from_probabilities(&pooled_probabilities, k, &view.classes)?;
        Ok(TrialOutcome {
            plan,
            folds,
            pooled_probabilities,
            pooled,
        })
    }

    /// Mean of the metric over folds where it is defined.
    pub fn fold_mean(&self, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self.folds.iter().filter_map(|f| f.report.metric(metric)).collect();
        if v.is_empty() {
            None
        } else {
            Some(math::mean(&v))
        }
    }
}

/// Plans folds from `seed` and evaluates every fold sequentially.
pub fn run_trial(view: &TaskView, spec: &PipelineSpec, n_folds: usize, seed: SeedPath) -> Result<TrialOutcome> {
    let plan = plan_for(view, n_folds, seed)?;
    let splits = fold_splits(view, &plan)?;
    let folds = splits
        .iter()
        .map(|s| evaluate_fold(view, s, spec, None, seed))
        .collect::<Result<Vec<_>>>()?;
    TrialOutcome::assemble(view, plan, folds)
}
