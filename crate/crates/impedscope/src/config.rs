//! Experiment configuration and the shipped defaults (geometry, masks,
//! pathology vocabulary) embedded from `config/`.
//!
//! Frequency indices in config files are 1-based, like every user-facing
//! output; they are converted to 0-based on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use impedscope_core::classifier::{ForestParams, HyperParams, Kernel, LogisticParams, ModelKind, SvmParams};
use impedscope_core::cv::ZThresholdSpec;
use impedscope_core::geometry::{build_geometric_mask, mask_stats, MaskDefinition, MaskSet, ThresholdSide};
use impedscope_core::label::PathologyVocabulary;
use impedscope_core::metrics::Metric;
use impedscope_core::preprocess::{FilterConfig, NormalizationMode};
use impedscope_core::ranking::{PcaObservations, DEFAULT_COMPONENTS};
use impedscope_core::synth::CohortSpec;
use impedscope_core::{ElectrodeArray, FrequencyGrid, PatternUniverse, TaskSpec, TissueCategory};
use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

pub const STANDARD_GEOMETRY: &str = include_str!("../config/geometry.json");
pub const COMPACT_GEOMETRY: &str = include_str!("../config/geometry-compact.json");
pub const STANDARD_MASKS: &str = include_str!("../config/masks.json");
pub const STANDARD_VOCABULARY: &str = include_str!("../config/vocabulary.json");

/// `log_spaced` parameters of the frequency grid used by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            f_min_hz: 100.0,
            f_max_hz: 100_000.0,
            points: 31,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> anyhow::Result<FrequencyGrid> {
        Ok(FrequencyGrid::log_spaced(self.f_min_hz, self.f_max_hz, self.points)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialCounts {
    pub baseline: usize,
    pub frequency: usize,
    pub iivv: usize,
    pub tuning: usize,
    #[serde(rename = "final")]
    pub final_: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        TrialCounts {
            baseline: 10,
            frequency: 10,
            iivv: 5,
            tuning: 10,
            final_: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMetric {
    #[default]
    Auc,
    Accuracy,
    F1,
}

impl StageMetric {
    /// Metric for baseline, sweeps and final reports.
    pub fn reporting(self) -> Metric {
        match self {
            StageMetric::Auc => Metric::AucMicro,
            StageMetric::Accuracy => Metric::Accuracy,
            StageMetric::F1 => Metric::F1,
        }
    }

    /// Metric optimized during hyperparameter tuning.
    pub fn tuning(self) -> Metric {
        match self {
            StageMetric::Auc => Metric::AucMacro,
            other => other.reporting(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiOver {
    #[default]
    Trials,
    Folds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZThresholdMode {
    /// Threshold resolved on each fold's training rows.
    #[default]
    PerFold,
    /// Threshold resolved once on every sample.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub svm: SvmParams,
    pub random_forest: ForestParams,
    pub logistic: LogisticParams,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            svm: SvmParams::new(Kernel::Rbf, 1.0),
            random_forest: ForestParams::new(100, 8, 0.3),
            logistic: LogisticParams::default(),
        }
    }
}

impl BaselineParams {
    pub fn params(&self, kind: ModelKind) -> HyperParams {
        match kind {
            ModelKind::Svm => HyperParams::Svm(self.svm.clone()),
            ModelKind::RandomForest => HyperParams::RandomForest(self.random_forest.clone()),
            ModelKind::Logistic => HyperParams::Logistic(self.logistic.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencySweepConfig {
    /// Inclusive `[first, last]` f_T values; defaults to `[1, N_freq]`.
    pub f_t: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZThresholdSweep {
    pub quantiles: Vec<f64>,
    pub sides: Vec<ThresholdSide>,
    /// 1-based frequency of the pattern means.
    pub frequency: usize,
    pub mode: ZThresholdMode,
}

impl Default for ZThresholdSweep {
    fn default() -> Self {
        ZThresholdSweep {
            quantiles: vec![0.25, 0.5, 0.75],
            sides: vec![ThresholdSide::Below, ThresholdSide::Above],
            frequency: 1,
            mode: ZThresholdMode::PerFold,
        }
    }
}

impl ZThresholdSweep {
    pub fn candidates(&self) -> Vec<ZThresholdSpec> {
        let mut out = Vec::new();
        for &side in &self.sides {
            for &quantile in &self.quantiles {
                out.push(ZThresholdSpec {
                    side,
                    quantile,
                    frequency: self.frequency - 1,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IivvSweepConfig {
    /// Registry masks to evaluate; all of them when absent.
    pub masks: Option<Vec<String>>,
    pub zthreshold: ZThresholdSweep,
}

fn decades() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmGrid {
    pub kernels: Vec<Kernel>,
    pub c: Vec<f64>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        SvmGrid {
            kernels: Kernel::ALL.to_vec(),
            c: decades(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub max_features: Vec<f64>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            n_trees: vec![100, 200, 300, 800],
            max_depth: vec![4, 8, 16],
            max_features: vec![0.3, 0.7, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticGrid {
    pub c: Vec<f64>,
    pub max_iter: Vec<usize>,
}

impl Default for LogisticGrid {
    fn default() -> Self {
        LogisticGrid {
            c: decades(),
            max_iter: vec![200, 500, 2000],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub svm: SvmGrid,
    pub random_forest: ForestGrid,
    pub logistic: LogisticGrid,
}

impl Grids {
    /// Grid points of one family in a fixed nesting order.
    pub fn points(&self, kind: ModelKind) -> Vec<HyperParams> {
        let mut out = Vec::new();
        match kind {
            ModelKind::Svm => {
                for &k in &self.svm.kernels {
                    for &c in &self.svm.c {
                        out.push(HyperParams::Svm(SvmParams::new(k, c)));
                    }
                }
            }
            ModelKind::RandomForest => {
                for &t in &self.random_forest.n_trees {
                    for &d in &self.random_forest.max_depth {
                        for &f in &self.random_forest.max_features {
                            out.push(HyperParams::RandomForest(ForestParams::new(t, d, f)));
                        }
                    }
                }
            }
            ModelKind::Logistic => {
                for &c in &self.logistic.c {
                    for &m in &self.logistic.max_iter {
                        out.push(HyperParams::Logistic(LogisticParams {
                            c,
                            max_iter: m,
                            ..LogisticParams::default()
                        }));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub observations: PcaObservations,
    pub components: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            observations: PcaObservations::default(),
            components: DEFAULT_COMPONENTS,
        }
    }
}

/// A mask given by registry name or as a z-threshold rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRef {
    Named(String),
    ZThreshold {
        side: ThresholdSide,
        quantile: f64,
        /// 1-based.
        #[serde(default = "one")]
        frequency: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for MaskRef {
    fn default() -> Self {
        MaskRef::Named("All".into())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyRef {
    #[default]
    All,
    Top(usize),
    /// 1-based indices.
    Fixed(Vec<usize>),
}

/// One fully specified pipeline, as used by `train` and `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub params: HyperParams,
    #[serde(default)]
    pub mask: MaskRef,
    #[serde(default)]
    pub frequencies: FrequencyRef,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Pipelines evaluated by a fresh cross-validation run.
    pub pipelines: Vec<PipelineConfig>,
    /// `tuning.json` from a previous `tune` run; its winners are evaluated.
    pub from_tuning: Option<PathBuf>,
    /// Model file from `train`, scored on the whole dataset.
    pub model: Option<PathBuf>,
}

/// Cohort description for `synth`. Same fields as [`CohortSpec`] except that
/// contrast frequencies are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    #[serde(flatten)]
    pub spec: CohortSpec,
}

impl CohortConfig {
    pub fn to_spec(&self) -> anyhow::Result<CohortSpec> {
        let mut spec = self.spec.clone();
        if let Some(c) = &mut spec.contrast {
            for f in c.frequencies.iter_mut() {
                if *f == 0 {
                    return Err(ValidationError::new("contrast frequencies are 1-based").into());
                }
                *f -= 1;
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: u8,
    /// Dataset manifest, relative to the config file.
    pub dataset: Option<PathBuf>,
    /// `standard`, `compact`, or a path to a geometry JSON file.
    pub geometry: String,
    /// Mask-definition file; the shipped registry for the standard geometry,
    /// otherwise just `All`.
    pub masks: Option<PathBuf>,
    /// JSON object mapping pathology strings to categories.
    pub vocabulary: Option<PathBuf>,
    pub frequency_grid: GridConfig,
    pub filter: FilterConfig,
    pub n_folds: usize,
    pub trials: TrialCounts,
    pub stage_metric: StageMetric,
    pub families: Vec<ModelKind>,
    pub baseline: BaselineParams,
    pub frequency_sweep: FrequencySweepConfig,
    pub iivv_sweep: IivvSweepConfig,
    /// How many leading entries of each sweep feed the tuning stage.
    pub best_k: usize,
    pub grids: Grids,
    pub normalization: NormalizationMode,
    pub pca: PcaConfig,
    pub ci_over: CiOver,
    pub cohort: Option<CohortConfig>,
    pub train: Option<PipelineConfig>,
    pub evaluate: EvaluateConfig,
    /// Worker threads; all cores when absent. Output does not depend on it.
    pub workers: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: 1,
            dataset: None,
            geometry: "standard".into(),
            masks: None,
            vocabulary: None,
            frequency_grid: GridConfig::default(),
            filter: FilterConfig::default(),
            n_folds: 5,
            trials: TrialCounts::default(),
            stage_metric: StageMetric::default(),
            families: vec![ModelKind::Svm, ModelKind::RandomForest, ModelKind::Logistic],
            baseline: BaselineParams::default(),
            frequency_sweep: FrequencySweepConfig::default(),
            iivv_sweep: IivvSweepConfig::default(),
            best_k: 4,
            grids: Grids::default(),
            normalization: NormalizationMode::default(),
            pca: PcaConfig::default(),
            ci_over: CiOver::default(),
            cohort: None,
            train: None,
            evaluate: EvaluateConfig::default(),
            workers: None,
            base_dir: PathBuf::from("."),
        }
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ValidationError::new(msg).into()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ValidationError::new(format!("config {}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn task_spec(&self) -> anyhow::Result<TaskSpec> {
        TaskSpec::new(self.task).map_err(|e| invalid(e.to_string()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.task_spec()?;
        self.filter.validate().map_err(|e| invalid(e.to_string()))?;
        if self.n_folds < 2 {
            return Err(invalid("n_folds must be at least 2"));
        }
        let t = &self.trials;
        if [t.baseline, t.frequency, t.iivv, t.tuning, t.final_].contains(&0) {
            return Err(invalid("every stage needs at least one trial"));
        }
        if self.families.is_empty() {
            return Err(invalid("no model families selected"));
        }
        if self.best_k == 0 {
            return Err(invalid("best_k must be at least 1"));
        }
        for kind in [ModelKind::Svm, ModelKind::RandomForest, ModelKind::Logistic] {
            self.baseline.params(kind).validate().map_err(|e| invalid(e.to_string()))?;
            if self.families.contains(&kind) {
                let points = self.grids.points(kind);
                if points.is_empty() {
                    return Err(invalid(format!("empty {} grid", kind.name())));
                }
                for p in &points {
                    p.validate().map_err(|e| invalid(format!("{} grid: {e}", kind.name())))?;
                }
            }
        }
        if let Some([lo, hi]) = self.frequency_sweep.f_t {
            if lo == 0 || hi < lo {
                return Err(invalid("frequency_sweep.f_t must be a 1-based range [first, last]"));
            }
        }
        let z = &self.iivv_sweep.zthreshold;
        if z.frequency == 0 || z.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(invalid("z-threshold quantiles must lie in [0, 1] and frequency is 1-based"));
        }
        if self.pca.components == 0 {
            return Err(invalid("pca.components must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be at least 1"));
        }
        Ok(())
    }

    pub fn array(&self) -> anyhow::Result<ElectrodeArray> {
        let text = match self.geometry.as_str() {
            "standard" => STANDARD_GEOMETRY.to_string(),
            "compact" => COMPACT_GEOMETRY.to_string(),
            path => fs::read_to_string(self.resolve_path(Path::new(path)))
                .with_context(|| format!("reading geometry {path}"))?,
        };
        let array: ElectrodeArray =
            serde_json::from_str(&text).map_err(|e| invalid(format!("geometry {}: {e}", self.geometry)))?;
        array.validate()?;
        Ok(array)
    }

    /// `None` for a custom geometry without a mask file: the registry is then
    /// just the full universe as `All`.
    pub fn mask_definitions(&self) -> anyhow::Result<Option<Vec<MaskDefinition>>> {
        let text = match &self.masks {
            Some(p) => fs::read_to_string(self.resolve_path(p)).with_context(|| format!("reading masks {}", p.display()))?,
            None if self.geometry == "standard" => STANDARD_MASKS.to_string(),
            None => return Ok(None),
        };
        parse_mask_file(&text).map(Some)
    }

    pub fn vocabulary(&self) -> anyhow::Result<PathologyVocabulary> {
        let text = match &self.vocabulary {
            Some(p) => fs::read_to_string(self.resolve_path(p)).with_context(|| format!("reading vocabulary {}", p.display()))?,
            None => STANDARD_VOCABULARY.to_string(),
        };
        let map: BTreeMap<String, TissueCategory> =
            serde_json::from_str(&text).map_err(|e| invalid(format!("vocabulary: {e}")))?;
        Ok(PathologyVocabulary::new(map))
    }

    /// Geometry, pattern universe and the validated mask registry.
    pub fn resources(&self) -> anyhow::Result<Resources> {
        let array = self.array()?;
        let universe = PatternUniverse::enumerate_all(&array);
        let masks = match self.mask_definitions()? {
            Some(defs) => defs
                .iter()
                .map(|d| build_geometric_mask(d, &array, &universe))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![MaskSet::full("All", universe.len())],
        };
        Ok(Resources {
            vocabulary: self.vocabulary()?,
            array,
            universe,
            masks,
        })
    }
}

#[derive(Deserialize)]
struct MaskFile {
    masks: Vec<MaskDefinition>,
}

pub fn parse_mask_file(text: &str) -> anyhow::Result<Vec<MaskDefinition>> {
    let file: MaskFile = serde_json::from_str(text).map_err(|e| invalid(format!("mask definitions: {e}")))?;
    Ok(file.masks)
}

pub struct Resources {
    pub array: ElectrodeArray,
    pub universe: PatternUniverse,
    pub masks: Vec<MaskSet>,
    pub vocabulary: PathologyVocabulary,
}

impl Resources {
    pub fn mask(&self, name: &str) -> anyhow::Result<&MaskSet> {
        self.masks
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| impedscope_core::Error::UnknownMask(name.to_string()).into())
    }
}

/// One row of the mask registry check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskCheck {
    pub name: String,
    pub expected: Option<usize>,
    pub found: usize,
    pub mean_ii_mm: Option<f64>,
    pub mean_vv_mm: Option<f64>,
    pub ok: bool,
}

/// Builds every definition without failing on cardinality so the full table
/// can be reported.
pub fn check_masks(defs: &[MaskDefinition], array: &ElectrodeArray, universe: &PatternUniverse) -> anyhow::Result<Vec<MaskCheck>> {
    defs.iter()
        .map(|d| {
            let relaxed = MaskDefinition {
                expected_count: None,
                ..d.clone()
            };
            let mask = build_geometric_mask(&relaxed, array, universe)?;
            let stats = mask_stats(&mask, universe, array).ok();
            Ok(MaskCheck {
                name: d.name.clone(),
                expected: d.expected_count,
                found: mask.len(),
                mean_ii_mm: stats.map(|s| s.mean_ii_mm),
                mean_vv_mm: stats.map(|s| s.mean_vv_mm),
                ok: d.expected_count.map_or(true, |e| e == mask.len()),
            })
        })
        .collect()
}
