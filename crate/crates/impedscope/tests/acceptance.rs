//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p impedscope --test acceptance`.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use impedscope::config::{check_masks, ExperimentConfig, LogisticGrid};
use impedscope_core::classifier::logistic::{lr_gradient, lr_objective, LogisticParams};
use impedscope_core::classifier::{HyperParams, Matrix};
use impedscope_core::cv::{fold_frequency_importance, fold_splits, plan_for, run_trial, FrequencyChoice, MaskChoice, PipelineSpec};
use impedscope_core::dataset::{Dataset, TaskView};
use impedscope_core::folds::make_lopgo_folds;
use impedscope_core::label::PathologyVocabulary;
use impedscope_core::metrics::roc_auc;
use impedscope_core::preprocess::{assemble_features, clean_sample, zscore_per_frequency, FilterConfig, NormalizationMode};
use impedscope_core::ranking::{pca_frequency_importance, select_top_frequencies, FrequencyRanking, PcaObservations};
use impedscope_core::rng::SeedPath;
use impedscope_core::stats::{paired_t_test, t_confidence_interval};
use impedscope_core::synth::{
    generate_sample, geometric_factors, permute_sample_labels, sample_slots, ClassSpec, CohortSpec, ContrastSpec, NoiseModel, TissueModel,
};
use impedscope_core::{ElectrodeArray, FrequencyGrid, MaskSet, PatternUniverse, TaskSpec};
use rayon::prelude::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if let false = $cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t0.elapsed().as_secs_f64();
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} #{id:02} {name}: {detail} [{secs:.2}s]");
    result.is_ok()
}

const HEALTHY: TissueModel = TissueModel {
    r0: 1200.0,
    r_inf: 300.0,
    fc: 8000.0,
    alpha: 0.8,
};

const CANCER: TissueModel = TissueModel {
    r0: 900.0,
    r_inf: 250.0,
    fc: 15000.0,
    alpha: 0.75,
};

struct CohortPlan {
    array: ElectrodeArray,
    per_class: usize,
    samples_per_patient: usize,
    r0_ranges: Option<([f64; 2], [f64; 2])>,
    contrast: Option<ContrastSpec>,
}

/// Generates and cleans a two-class cohort on the standard grid.
fn cohort(plan: &CohortPlan, seed: u64) -> Dataset {
    let grid = FrequencyGrid::standard();
    let universe = PatternUniverse::enumerate_all(&plan.array);
    // With contrast the classes share one tissue model, so the injected
    // frequencies carry all of the signal.
    let cancer = if plan.contrast.is_some() { HEALTHY } else { CANCER };
    let spec = CohortSpec {
        classes: vec![
            ClassSpec {
                pathology: "healthy".into(),
                n_patients: plan.per_class,
                tissue: HEALTHY,
                r0_range: plan.r0_ranges.map(|r| r.0),
            },
            ClassSpec {
                pathology: "oscc".into(),
                n_patients: plan.per_class,
                tissue: cancer,
                r0_range: plan.r0_ranges.map(|r| r.1),
            },
        ],
        samples_per_patient: plan.samples_per_patient,
        noise: NoiseModel::default(),
        contrast: plan.contrast.clone(),
        geometric_modulation: true,
    };
    let factors = geometric_factors(&universe, &plan.array, true).expect("factors");
    let vocab = PathologyVocabulary::standard();
    let samples = sample_slots(&spec)
        .par_iter()
        .map(|slot| {
            let raw = generate_sample(&spec, &grid, &factors, &vocab, slot, seed).expect("sample");
            clean_sample(&raw, &FilterConfig::default()).expect("clean")
        })
        .collect();
    Dataset::new(grid, universe.len(), samples).expect("dataset")
}

fn combinatorics() -> Outcome {
    let u = PatternUniverse::enumerate_all(&ElectrodeArray::standard());
    let (ii, vv, n) = (u.ii_pairs().len(), u.vv_pairs().len(), u.len());
    ensure!((ii, vv, n) == (28, 276, 7728), "got II {ii}, VV {vv}, patterns {n}");
    Ok(format!("II {ii}, VV {vv}, patterns {n}"))
}

fn standard_registry() -> (Vec<impedscope_core::geometry::MaskDefinition>, ElectrodeArray, PatternUniverse) {
    let cfg = ExperimentConfig::default();
    let array = cfg.array().expect("array");
    let universe = PatternUniverse::enumerate_all(&array);
    let defs = cfg.mask_definitions().expect("mask file").expect("standard masks");
    (defs, array, universe)
}

fn mask_registry(tmp: &Path) -> Outcome {
    const EXPECTED: [(&str, usize); 13] = [
        ("All", 7728),
        ("Long a+", 16),
        ("Long a+ ext.", 120),
        ("Med. a+ ext.", 120),
        ("Skip1 close", 360),
        ("Adj. close", 292),
        ("Med. adj.", 387),
        ("Adj. far", 660),
        ("Skip1 medium", 440),
        ("Skip1 far", 224),
        ("Opp. close", 264),
        ("Opp. medium", 264),
        ("Opp. far", 264),
    ];
    let (defs, array, universe) = standard_registry();
    let checks = check_masks(&defs, &array, &universe).map_err(|e| e.to_string())?;
    ensure!(checks.len() == EXPECTED.len(), "{} masks shipped", checks.len());
    for (c, (name, n)) in checks.iter().zip(EXPECTED) {
        ensure!(c.name == name && c.found == n && c.ok, "{}: found {} (expected {name} = {n})", c.name, c.found);
    }
    let status = Command::new(env!("CARGO_BIN_EXE_impedscope"))
        .args(["masks", "validate", "--out"])
        .arg(tmp.join("masks"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(status.status.code() == Some(0), "`masks validate` exited {:?}", status.status.code());
    Ok("13/13 counts exact, `masks validate` exit 0".into())
}

fn geometry_calibration() -> Outcome {
    let (_, array, universe) = standard_registry();
    let all = MaskSet::full("All", universe.len());
    let s = impedscope_core::geometry::mask_stats(&all, &universe, &array).map_err(|e| e.to_string())?;
    let ii_err = (s.mean_ii_mm - 4.54).abs() / 4.54;
    let vv_err = (s.mean_vv_mm - 2.71).abs() / 2.71;
    ensure!(ii_err <= 0.05 && vv_err <= 0.05, "II {:.4} mm, VV {:.4} mm", s.mean_ii_mm, s.mean_vv_mm);
    Ok(format!(
        "II {:.4} mm ({:.2}%), VV {:.4} mm ({:.2}%), tolerance 5%",
        s.mean_ii_mm,
        ii_err * 100.0,
        s.mean_vv_mm,
        vv_err * 100.0
    ))
}

fn input_size() -> Outcome {
    let cfg = ExperimentConfig::default();
    let res = cfg.resources().map_err(|e| e.to_string())?;
    let ds = cohort(
        &CohortPlan {
            array: ElectrodeArray::standard(),
            per_class: 1,
            samples_per_patient: 1,
            r0_ranges: None,
            contrast: None,
        },
        1,
    );
    let samples: Vec<_> = ds.samples.iter().take(1).collect();
    let mut widths = Vec::new();
    for (mask, f_t, expected) in [("Skip1 far", 8, 1792), ("Skip1 far", 2, 448), ("Opp. medium", 3, 792)] {
        let m = res.mask(mask).map_err(|e| e.to_string())?;
        let freqs: Vec<usize> = (0..f_t).collect();
        let x = assemble_features(&samples, m, &freqs).map_err(|e| e.to_string())?;
        ensure!(x.n_cols() == expected, "{mask} f_T={f_t}: {} columns, expected {expected}", x.n_cols());
        widths.push(x.n_cols().to_string());
    }
    Ok(format!("widths {}", widths.join(", ")))
}

fn frequency_grid() -> Outcome {
    let g = FrequencyGrid::standard();
    let v = g.values();
    ensure!(v.len() == 31, "{} points", v.len());
    let rel = (v[12] - 1584.9).abs() / 1584.9;
    ensure!(rel <= 1e-3, "index 13 = {} Hz", v[12]);
    ensure!(v[0] == 100.0 && v[30] == 100_000.0, "endpoints {} / {}", v[0], v[30]);
    Ok(format!("f1 = {} Hz, f13 = {:.3} Hz, f31 = {} Hz", v[0], v[12], v[30]))
}

/// Mann-Whitney pair count with ties as one half.
fn pair_count_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..200u64 {
        let mut rng = SeedPath::root(k).child("auc").stream();
        let n = 2 + rng.below(49);
        // Coarse scores force ties.
        let levels = 1 + rng.below(8);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        positive[0] = true;
        positive[1] = false;
        let got = roc_auc(&scores, &positive).map_err(|e| e.to_string())?.auc;
        worst = worst.max((got - pair_count_auc(&scores, &positive)).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("200 instances, max |trapezoid - pair count| = {worst:e} (tol 1e-12)"))
}

fn lr_gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let mut rng = SeedPath::root(k).child("lr-gradient").stream();
        let (n, d) = (20, 8);
        let x: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
        let classes = if k % 2 == 0 { 2 } else { 3 };
        let y: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.below(classes) }).collect();
        let m = Matrix::new(&x, n, d).map_err(|e| e.to_string())?;
        let out = if classes == 2 { 1 } else { classes };
        let params: Vec<f64> = (0..out * (d + 1)).map(|_| 0.5 * rng.normal()).collect();
        let c = 0.5 + rng.uniform() * 2.0;
        let g = lr_gradient(&params, &m, &y, classes, c);
        for i in 0..params.len() {
            let h = 1e-5 * params[i].abs().max(1.0);
            let (mut up, mut down) = (params.clone(), params.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (lr_objective(&up, &m, &y, classes, c) - lr_objective(&down, &m, &y, classes, c)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0));
        }
    }
    ensure!(worst <= 1e-5, "max relative error {worst:e}");
    Ok(format!("50 instances (binary and 3-class), max relative error {worst:e} (tol 1e-5)"))
}

/// Squared-loading scores from nalgebra's symmetric eigendecomposition of
/// the sample covariance.
fn pca_oracle(data: &[f64], n: usize, p: usize, k: usize) -> Vec<f64> {
    let x = nalgebra::DMatrix::from_row_slice(n, p, data);
    let mean = x.row_mean();
    let centred = nalgebra::DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (0..p)
        .map(|f| order[..k].iter().map(|&c| eig.eigenvectors[(f, c)].powi(2)).sum())
        .collect()
}

fn pca_check() -> Outcome {
    let (n, p, k) = (50, 31, 10);
    let (mut worst_sum, mut worst_score): (f64, f64) = (0.0, 0.0);
    for s in 0..20u64 {
        let mut rng = SeedPath::root(s).child("pca").stream();
        // Column scales spread the spectrum so eigenvalues are well separated.
        let data: Vec<f64> = (0..n * p).map(|i| rng.normal() * (1.0 + (i % p) as f64 * 0.3)).collect();
        let imp = pca_frequency_importance(&data, n, p, k).map_err(|e| e.to_string())?;
        ensure!(imp.components_used == k, "used {} components", imp.components_used);
        worst_sum = worst_sum.max((imp.scores.iter().sum::<f64>() - k as f64).abs());
        let oracle = pca_oracle(&data, n, p, k);
        for (a, b) in imp.scores.iter().zip(&oracle) {
            worst_score = worst_score.max((a - b).abs());
        }
    }
    ensure!(worst_sum <= 1e-9 && worst_score <= 1e-8, "sum error {worst_sum:e}, score error {worst_score:e}");
    Ok(format!("20 matrices 50x31, |sum - 10| <= {worst_sum:e}, |score - oracle| <= {worst_score:e}"))
}

fn normalization_check() -> Outcome {
    let array = ElectrodeArray::compact();
    let (mut worst_mean, mut worst_std): (f64, f64) = (0.0, 0.0);
    for seed in 0..3 {
        let ds = cohort(
            &CohortPlan {
                array: array.clone(),
                per_class: 6,
                samples_per_patient: 2,
                r0_ranges: None,
                contrast: None,
            },
            seed,
        );
        let view = TaskView::new(&ds, TaskSpec::new(1).map_err(|e| e.to_string())?);
        let plan = plan_for(&view, 5, SeedPath::root(seed)).map_err(|e| e.to_string())?;
        let all = MaskSet::full("All", ds.n_patterns);
        let freqs: Vec<usize> = (0..31).collect();
        for split in fold_splits(&view, &plan).map_err(|e| e.to_string())? {
            let pick = |rows: &[usize]| rows.iter().map(|&r| view.samples[r]).collect::<Vec<_>>();
            let train = assemble_features(&pick(&split.train), &all, &freqs).map_err(|e| e.to_string())?;
            let test = assemble_features(&pick(&split.test), &all, &freqs).map_err(|e| e.to_string())?;
            let (z, _, _) = zscore_per_frequency(train, test, NormalizationMode::PerFrequency).map_err(|e| e.to_string())?;
            let w = z.n_cols();
            for f in 0..freqs.len() {
                let vals: Vec<f64> = (0..z.n_rows)
                    .flat_map(|r| (0..w).filter(|&c| z.column_frequency_slot(c) == f).map(move |c| (r, c)))
                    .map(|(r, c)| z.data[r * w + c])
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
                worst_mean = worst_mean.max(mean.abs());
                worst_std = worst_std.max((sd - 1.0).abs());
            }
        }
    }
    ensure!(worst_mean <= 1e-9 && worst_std <= 1e-9, "|mean| {worst_mean:e}, |std - 1| {worst_std:e}");
    Ok(format!("3 cohorts x 5 folds x 31 frequencies, |mean| <= {worst_mean:e}, |std - 1| <= {worst_std:e}"))
}

fn lopgo_property() -> Outcome {
    for s in 0..100u64 {
        let mut rng = SeedPath::root(s).child("lopgo").stream();
        let n_patients = 5 + rng.below(60);
        let n_folds = 2 + rng.below(n_patients.min(10) - 1);
        let ids: Vec<String> = (0..n_patients).map(|i| format!("P{i:03}")).collect();
        let plan = make_lopgo_folds(&ids, n_folds, s).map_err(|e| e.to_string())?;
        ensure!(plan.folds.len() == n_folds, "seed {s}: {} folds", plan.folds.len());
        let mut seen = BTreeSet::new();
        for fold in &plan.folds {
            for p in fold {
                ensure!(seen.insert(p.clone()), "seed {s}: patient {p} in two folds");
            }
        }
        ensure!(seen.len() == n_patients, "seed {s}: {} of {n_patients} patients covered", seen.len());
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        ensure!(spread <= 1, "seed {s}: fold sizes {sizes:?}");
    }
    Ok("100 plans: disjoint, covering, size spread <= 1".into())
}

fn logistic_spec(all: &MaskSet, params: LogisticParams) -> PipelineSpec {
    PipelineSpec::new(MaskChoice::Fixed(all.clone()), FrequencyChoice::All, HyperParams::Logistic(params))
}

fn separability() -> Outcome {
    let plan = CohortPlan {
        array: ElectrodeArray::compact(),
        per_class: 20,
        samples_per_patient: 8,
        r0_ranges: Some(([1100.0, 1400.0], [700.0, 1000.0])),
        contrast: None,
    };
    let ds = cohort(&plan, 11);
    let view = TaskView::new(&ds, TaskSpec::new(1).map_err(|e| e.to_string())?);
    let all = MaskSet::full("All", ds.n_patterns);
    let root = SeedPath::root(11);

    let grid = LogisticGrid::default();
    let points: Vec<LogisticParams> = grid
        .c
        .iter()
        .flat_map(|&c| grid.max_iter.iter().map(move |&m| LogisticParams { c, max_iter: m, ..LogisticParams::default() }))
        .collect();
    let tuned: Vec<f64> = points
        .par_iter()
        .map(|p| {
            let spec = logistic_spec(&all, p.clone());
            let aucs: Vec<f64> = (0..3)
                .map(|t| run_trial(&view, &spec, 5, root.child("cv").index(t)).map(|o| o.pooled.auc_micro.unwrap_or(0.0)))
                .collect::<Result<_, _>>()?;
            Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
        })
        .collect::<Result<_, impedscope_core::Error>>()
        .map_err(|e| e.to_string())?;
    let best = (0..points.len()).fold(0, |b, i| if tuned[i] > tuned[b] { i } else { b });
    let params = points[best].clone();
    let final_auc = run_trial(&view, &logistic_spec(&all, params.clone()), 5, root.child("final").index(0))
        .map_err(|e| e.to_string())?
        .pooled
        .auc_micro
        .unwrap_or(0.0);

    let nulls: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let mut shuffled = cohort(&plan, 100 + s);
            permute_sample_labels(&mut shuffled, s);
            let v = TaskView::new(&shuffled, TaskSpec::new(1)?);
            Ok(run_trial(&v, &logistic_spec(&all, params.clone()), 5, SeedPath::root(s).child("cv"))?
                .pooled
                .auc_micro
                .unwrap_or(f64::NAN))
        })
        .collect::<Result<_, impedscope_core::Error>>()
        .map_err(|e| e.to_string())?;
    let inside = nulls.iter().filter(|a| (0.4..=0.6).contains(*a)).count();
    let detail = format!(
        "tuned LR C={} max_iter={} out-of-fold AUC {final_auc:.4} (>= 0.95); shuffled AUC in [0.4, 0.6] for {inside}/20 seeds (>= 19), range {:.3}..{:.3}",
        params.c,
        params.max_iter,
        nulls.iter().cloned().fold(f64::INFINITY, f64::min),
        nulls.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    ensure!(final_auc >= 0.95 && inside >= 19, "{detail}");
    Ok(detail)
}

fn frequency_recovery() -> Outcome {
    let target = vec![0usize, 12, 30];
    let hits: Vec<bool> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let ds = cohort(
                &CohortPlan {
                    array: ElectrodeArray::standard(),
                    per_class: 10,
                    samples_per_patient: 1,
                    r0_ranges: None,
                    contrast: Some(ContrastSpec {
                        frequencies: target.clone(),
                        shift: 0.3,
                        jitter: 0.2,
                    }),
                },
                seed,
            );
            let view = TaskView::new(&ds, TaskSpec::new(1)?);
            let plan = plan_for(&view, 5, SeedPath::root(seed).child("cv"))?;
            let scores = fold_splits(&view, &plan)?
                .iter()
                .map(|s| fold_frequency_importance(&view, s, PcaObservations::SamplePattern, 10).map(|p| p.scores))
                .collect::<Result<Vec<_>, _>>()?;
            let ranking = FrequencyRanking::from_fold_scores(scores)?;
            let mut top = select_top_frequencies(&ranking.composite, 3)?;
            top.sort_unstable();
            Ok(top == target)
        })
        .collect::<Result<_, impedscope_core::Error>>()
        .map_err(|e| e.to_string())?;
    let ok = hits.iter().filter(|h| **h).count();
    ensure!(ok >= 9, "recovered {{1, 13, 31}} in {ok}/10 seeds");
    Ok(format!("composite top-3 = {{1, 13, 31}} in {ok}/10 seeds (>= 9)"))
}

fn t_tests() -> Outcome {
    let d = [1.0, 2.0, 3.0, 4.0, 5.0];
    let t = paired_t_test(&d, &[0.0; 5]).map_err(|e| e.to_string())?;
    ensure!((t.t - 4.2426).abs() <= 1e-3, "t = {}", t.t);
    ensure!((t.p_two_sided - 0.0132).abs() <= 1e-3, "p = {}", t.p_two_sided);
    let values = [0.71, 0.74, 0.69, 0.80, 0.77, 0.73, 0.75, 0.70, 0.78, 0.72];
    let ci = t_confidence_interval(&values, 0.95).map_err(|e| e.to_string())?;
    let mean = values.iter().sum::<f64>() / 10.0;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    let q = (ci.upper - ci.mean) / (sd / 10f64.sqrt());
    // Exact t(9, 0.975); the rounded table value is 2.262.
    ensure!((q - 2.2621571628).abs() <= 1e-6, "implied quantile {q}");
    ensure!((q * 1000.0).round() / 1000.0 == 2.262, "quantile {q} does not round to 2.262");
    Ok(format!(
        "t = {:.4}, p = {:.4}; CI quantile {q:.10} (t(9, 0.975) = 2.2621571628, table 2.262)",
        t.t, t.p_two_sided
    ))
}

fn determinism(tmp: &Path) -> Outcome {
    let dir = tmp.join("det");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let config = r#"{
  "task": 1,
  "dataset": "data",
  "geometry": "compact",
  "trials": { "baseline": 2, "frequency": 2, "iivv": 2, "tuning": 2, "final": 1 },
  "best_k": 2,
  "grids": {
    "svm": { "kernels": ["linear", "rbf"], "c": [0.1, 1.0] },
    "random_forest": { "n_trees": [20], "max_depth": [4], "max_features": [0.3, 1.0] },
    "logistic": { "c": [0.1, 1.0], "max_iter": [200] }
  },
  "cohort": {
    "classes": [
      { "pathology": "healthy", "n_patients": 6, "tissue": { "r0": 1200.0, "r_inf": 300.0, "fc": 8000.0, "alpha": 0.8 } },
      { "pathology": "oscc", "n_patients": 6, "tissue": { "r0": 900.0, "r_inf": 250.0, "fc": 15000.0, "alpha": 0.75 } }
    ],
    "samples_per_patient": 2,
    "noise": { "dropout": 0.05 }
  }
}
"#;
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_impedscope");
    let call = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(exe).args(args).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    let cfg_s = cfg.to_str().unwrap();
    let path = |name: &str| dir.join(name).to_str().unwrap().to_string();
    call(&["synth", "--config", cfg_s, "--seed", "5", "--out", &path("data")])?;
    call(&["report", "--config", cfg_s, "--seed", "5", "--workers", "1", "--out", &path("run1")])?;
    call(&["report", "--config", cfg_s, "--seed", "5", "--workers", "4", "--out", &path("run4")])?;
    let a = read_tree(&dir.join("run1"))?;
    let b = read_tree(&dir.join("run4"))?;
    ensure!(!a.is_empty(), "empty report directory");
    let names_a: Vec<&String> = a.iter().map(|(n, _)| n).collect();
    let names_b: Vec<&String> = b.iter().map(|(n, _)| n).collect();
    ensure!(names_a == names_b, "file sets differ");
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure!(x == y, "{name} differs between 1 and 4 workers");
    }
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    Ok(format!("{} files ({bytes} bytes) identical across 1 and 4 workers", a.len()))
}

fn read_tree(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).map_err(|e| e.to_string())?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let results = [
        run(1, "pattern combinatorics", combinatorics),
        run(2, "mask registry", || mask_registry(tmp.path())),
        run(3, "geometry calibration", geometry_calibration),
        run(4, "input-size consistency", input_size),
        run(5, "frequency grid", frequency_grid),
        run(6, "AUC oracle", auc_oracle),
        run(7, "LR gradient", lr_gradient_check),
        run(8, "PCA importance", pca_check),
        run(9, "normalization", normalization_check),
        run(10, "LOPGO folds", lopgo_property),
        run(11, "end-to-end separability", separability),
        run(12, "frequency recovery", frequency_recovery),
        run(13, "paired t-test and CI", t_tests),
        run(14, "determinism", || determinism(tmp.path())),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
