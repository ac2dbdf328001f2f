//! JSON and CSV report files. Nothing here records wall-clock time or
//! machine details, so a report directory is a pure function of config and
//! seed.

use std::fs;
use std::path::Path;

use anyhow::Context;
use impedscope_core::metrics::RocCurve;
use impedscope_core::ranking::FrequencyRanking;
use impedscope_core::FrequencyGrid;
use serde::Serialize;

use crate::config::MaskCheck;
use crate::pipeline::{roc_curves, FinalReport, FullReport, IivvResult, SampleStatus, StageResult, TuningResult};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `<stage>.json`, `<stage>.csv` (one row per candidate) and
/// `<stage>_folds.csv` (one row per candidate, trial and fold).
pub fn write_stage(dir: &Path, stage: &StageResult) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(format!("{}.json", stage.stage)), stage)?;
    let mut rank = vec![0usize; stage.candidates.len()];
    for (r, &i) in stage.ranking.iter().enumerate() {
        rank[i] = r + 1;
    }
    let rows: Vec<Vec<String>> = stage
        .candidates
        .iter()
        .map(|c| {
            let s = c.summary.as_ref();
            let t = c.vs_baseline.as_ref();
            vec![
                c.index.to_string(),
                rank[c.index].to_string(),
                c.label.clone(),
                c.family.name().to_string(),
                c.mask.clone(),
                c.frequencies.clone(),
                c.f_t.map(|f| f.to_string()).unwrap_or_default(),
                c.n_input_min.to_string(),
                c.n_input_max.to_string(),
                opt(s.map(|s| s.mean)),
                opt(s.map(|s| s.lower)),
                opt(s.map(|s| s.upper)),
                s.map(|s| s.n.to_string()).unwrap_or_default(),
                opt(t.map(|t| t.t)),
                opt(t.map(|t| t.p_two_sided)),
                t.map(|t| t.significant.to_string()).unwrap_or_default(),
                c.all_converged.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join(format!("{}.csv", stage.stage)),
        &[
            "index", "rank", "label", "family", "mask", "frequencies", "f_t", "n_input_min", "n_input_max", "mean", "ci_lower",
            "ci_upper", "n", "t_vs_baseline", "p_vs_baseline", "significant", "all_converged",
        ],
        &rows,
    )?;
    let mut folds = Vec::new();
    for c in &stage.candidates {
        for r in &c.records {
            folds.push(vec![
                c.index.to_string(),
                r.trial.to_string(),
                r.fold.to_string(),
                opt(r.scores.get(stage.metric)),
                opt(r.scores.auc_micro),
                opt(r.scores.auc_macro),
                num(r.scores.accuracy),
                num(r.scores.f1),
                r.n_input.to_string(),
                r.mask_size.to_string(),
                opt(r.threshold_ohm),
                r.converged.to_string(),
            ]);
        }
    }
    write_csv(
        &dir.join(format!("{}_folds.csv", stage.stage)),
        &[
            "index", "trial", "fold", "value", "auc_micro", "auc_macro", "accuracy", "f1", "n_input", "mask_size", "threshold_ohm",
            "converged",
        ],
        &folds,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFrequency {
    pub rank: usize,
    /// 1-based.
    pub frequency: usize,
    pub hz: f64,
    pub points: u64,
}

/// Ranking with 1-based frequency indices, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingReport {
    pub composite: Vec<RankedFrequency>,
    pub fold_rankings: Vec<Vec<usize>>,
    pub fold_scores: Vec<Vec<f64>>,
}

impl RankingReport {
    pub fn new(r: &FrequencyRanking, grid: &FrequencyGrid) -> Self {
        RankingReport {
            composite: r
                .composite
                .iter()
                .enumerate()
                .map(|(i, &f)| RankedFrequency {
                    rank: i + 1,
                    frequency: f + 1,
                    hz: grid.values()[f],
                    points: r.points[f],
                })
                .collect(),
            fold_rankings: r.fold_rankings.iter().map(|v| v.iter().map(|f| f + 1).collect()).collect(),
            fold_scores: r.fold_scores.clone(),
        }
    }
}

pub fn write_rankings(dir: &Path, r: &FrequencyRanking, grid: &FrequencyGrid) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    let report = RankingReport::new(r, grid);
    write_json(&dir.join("rankings.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .composite
        .iter()
        .map(|e| vec![e.rank.to_string(), e.frequency.to_string(), num(e.hz), e.points.to_string()])
        .collect();
    write_csv(&dir.join("rankings.csv"), &["rank", "frequency", "hz", "points"], &rows)
}

pub fn write_iivv(dir: &Path, r: &IivvResult) -> anyhow::Result<()> {
    write_stage(dir, &r.zthreshold)?;
    write_stage(dir, &r.masks)
}

pub fn write_tuning(dir: &Path, t: &TuningResult) -> anyhow::Result<()> {
    write_stage(dir, &t.grid)?;
    write_json(&dir.join("winners.json"), &t.winners)?;
    #[derive(Serialize)]
    struct Combos<'a> {
        f_t: &'a [usize],
        masks: &'a [String],
    }
    write_json(
        &dir.join("combinations.json"),
        &Combos {
            f_t: &t.f_t,
            masks: &t.masks,
        },
    )
}

fn roc_rows(c: &RocCurve) -> Vec<Vec<String>> {
    c.points.iter().map(|p| vec![num(p.fpr), num(p.tpr), num(p.threshold)]).collect()
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// `final/<family>.json`, pooled ROC curves and out-of-fold predictions
/// per family, and `final_summary.csv`.
pub fn write_finals(dir: &Path, finals: &[FinalReport], sample_ids: &[(String, String)], classes: &[usize]) -> anyhow::Result<()> {
    let fdir = dir.join("final");
    ensure_dir(&fdir)?;
    let mut summary = Vec::new();
    for f in finals {
        let name = f.family.name();
        write_json(&fdir.join(format!("{name}.json")), f)?;
        let k = f.class_names.len();
        let mut preds = Vec::new();
        for t in &f.trials {
            for (label, curve) in roc_curves(&t.outcome.pooled_probabilities, k, classes) {
                let label = match label.strip_prefix("class") {
                    Some(i) => slug(&f.class_names[i.parse::<usize>()?]),
                    None => label,
                };
                if let Some(c) = curve {
                    write_csv(
                        &fdir.join(format!("roc_{name}_{label}_t{}.csv", t.trial)),
                        &["fpr", "tpr", "threshold"],
                        &roc_rows(&c),
                    )?;
                }
            }
            for fold in &t.outcome.folds {
                for (j, &row) in fold.test_rows.iter().enumerate() {
                    let mut r = vec![
                        t.trial.to_string(),
                        fold.fold.to_string(),
                        sample_ids[row].0.clone(),
                        sample_ids[row].1.clone(),
                        f.class_names[classes[row]].clone(),
                    ];
                    r.extend(fold.probabilities[j * k..(j + 1) * k].iter().map(|p| num(*p)));
                    preds.push((t.trial, row, r));
                }
            }
        }
        preds.sort_by_key(|(t, row, _)| (*t, *row));
        let mut header = vec!["trial".to_string(), "fold".into(), "sample_id".into(), "patient_id".into(), "true_class".into()];
        header.extend(f.class_names.iter().map(|c| format!("p_{}", slug(c))));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = preds.into_iter().map(|(_, _, r)| r).collect();
        write_csv(&fdir.join(format!("predictions_{name}.csv")), &header, &rows)?;
        let n_input: Vec<usize> = f.trials.iter().flat_map(|t| t.folds.iter().map(|r| r.n_input)).collect();
        summary.push(vec![
            name.to_string(),
            f.label.clone(),
            f.mask.clone(),
            f.frequencies.clone(),
            n_input.iter().min().copied().unwrap_or(0).to_string(),
            n_input.iter().max().copied().unwrap_or(0).to_string(),
            num(f.accuracy),
            num(f.f1),
            opt(f.auc_micro),
            opt(f.auc_macro),
            num(f.recall),
            num(f.precision),
        ]);
    }
    write_csv(
        &dir.join("final_summary.csv"),
        &[
            "family", "label", "mask", "frequencies", "n_input_min", "n_input_max", "accuracy", "f1", "auc_micro", "auc_macro", "recall",
            "precision",
        ],
        &summary,
    )
}

pub fn write_full(dir: &Path, r: &FullReport, grid: &FrequencyGrid, sample_ids: &[(String, String)], classes: &[usize]) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    write_stage(dir, &r.baseline)?;
    write_rankings(dir, &r.rankings, grid)?;
    write_stage(dir, &r.frequency_sweep)?;
    write_iivv(dir, &r.iivv)?;
    write_tuning(dir, &r.tuning)?;
    write_finals(dir, &r.finals, sample_ids, classes)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        baseline: Vec<(&'a str, Option<f64>)>,
        frequency_best_f_t: Vec<usize>,
        iivv_best_masks: Vec<&'a str>,
        zthreshold_best: Option<&'a str>,
        winners: Vec<(&'a str, &'a str, Option<f64>)>,
        finals: Vec<(&'a str, Option<f64>, f64, f64)>,
    }
    let s = Summary {
        baseline: r.baseline.candidates.iter().map(|c| (c.family.name(), c.mean())).collect(),
        frequency_best_f_t: r.frequency_sweep.best_candidates().iter().filter_map(|c| c.f_t).collect(),
        iivv_best_masks: r.iivv.masks.best_candidates().iter().map(|c| c.mask.as_str()).collect(),
        zthreshold_best: r.iivv.zthreshold.ranking.first().map(|&i| r.iivv.zthreshold.candidates[i].mask.as_str()),
        winners: r.tuning.winners.iter().map(|w| (w.family.name(), w.label.as_str(), w.mean)).collect(),
        finals: r.finals.iter().map(|f| (f.family.name(), f.auc_micro, f.accuracy, f.f1)).collect(),
    };
    write_json(&dir.join("report.json"), &s)
}

pub fn write_completeness(path: &Path, status: &[SampleStatus]) -> anyhow::Result<()> {
    let rows: Vec<Vec<String>> = status
        .iter()
        .map(|s| {
            vec![
                s.sample_id.clone(),
                s.patient_id.clone(),
                s.pathology.clone(),
                s.category.to_string(),
                num(s.completeness),
                s.retained.to_string(),
            ]
        })
        .collect();
    write_csv(path, &["sample_id", "patient_id", "pathology", "category", "completeness", "retained"], &rows)
}

pub fn write_mask_table(dir: &Path, checks: &[MaskCheck]) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("masks.json"), checks)?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                c.expected.map(|e| e.to_string()).unwrap_or_default(),
                c.found.to_string(),
                opt(c.mean_ii_mm),
                opt(c.mean_vv_mm),
                c.ok.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("masks.csv"), &["name", "expected", "found", "mean_ii_mm", "mean_vv_mm", "ok"], &rows)
}
