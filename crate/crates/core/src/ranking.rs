//! PCA frequency importance, per-fold rankings and Borda aggregation.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleRecord;
use crate::linalg::{covariance, symmetric_eigen};
use crate::{math, Error, Result};

pub const DEFAULT_COMPONENTS: usize = 10;

/// Eigenvalues at or below this fraction of the largest are treated as zero
/// when counting usable components.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaImportance {
    /// Sum of squared loadings per frequency.
    pub scores: Vec<f64>,
    pub components_used: usize,
    /// Variance share of the retained components.
    pub captured_variance: f64,
    /// Fewer than the requested components had non-zero variance.
    pub rank_deficient: bool,
}

/// How spectra become PCA observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaObservations {
    /// One observation per (sample, valid pattern).
    #[default]
    SamplePattern,
    /// One observation per sample: the mean spectrum over its valid patterns.
    SampleMean,
}

/// Squared-loading importance of each variable over the leading components
/// of a row-major `n_obs x n_vars` observation matrix.
pub fn pca_frequency_importance(observations: &[f64], n_obs: usize, n_vars: usize, n_components: usize) -> Result<PcaImportance> {
    if n_components == 0 || n_components > n_vars {
        return Err(Error::InvalidArgument("component count out of range".into()));
    }
    if n_obs <= n_components {
        return Err(Error::InvalidArgument(alloc::format!(
            "PCA needs more than {n_components} observations, got {n_obs}"
        )));
    }
    let cov = covariance(observations, n_obs, n_vars)?;
    let eig = symmetric_eigen(&cov, n_vars)?;
    let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    let top = eig.values[0].max(0.0);
    let usable = eig.values.iter().filter(|&&v| v > RANK_TOLERANCE * top && top > 0.0).count();
    let used = n_components.min(usable);
    let mut scores = vec![0.0; n_vars];
    for c in 0..used {
        for (f, s) in scores.iter_mut().enumerate() {
            let l = eig.vectors[f * n_vars + c];
            *s += l * l;
        }
    }
    let captured: f64 = eig.values[..used].iter().sum();
    Ok(PcaImportance {
        scores,
        components_used: used,
        captured_variance: if total > 0.0 { captured / total } else { 0.0 },
        rank_deficient: used < n_components,
    })
}

/// Builds z-scored `|Z|` observations from the training samples' cleaned
/// frames over every pattern. Z-score parameters are pooled per frequency
/// over the observations themselves. Returns `(data, n_obs)`.
pub fn build_observations(samples: &[&SampleRecord], mode: PcaObservations) -> Result<(Vec<f64>, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples for PCA".into()))?
        .cleaned()?;
    let n_freq = first.n_freq();
    let mut data = Vec::new();
    let mut n_obs = 0;
    for s in samples {
        let frame = s.cleaned()?;
        if frame.n_freq() != n_freq {
            return Err(Error::DimensionMismatch {
                context: "PCA spectra".into(),
                expected: n_freq,
                found: frame.n_freq(),
            });
        }
        match mode {
            PcaObservations::SamplePattern => {
                for p in (0..frame.n_patterns()).filter(|&p| frame.is_valid(p)) {
                    data.extend(frame.spectrum(p).iter().map(|z| math::hypot(z.re, z.im)));
                    n_obs += 1;
                }
            }
            PcaObservations::SampleMean => {
                let mut acc = vec![0.0; n_freq];
                let mut count = 0usize;
                for p in (0..frame.n_patterns()).filter(|&p| frame.is_valid(p)) {
                    for (a, z) in acc.iter_mut().zip(frame.spectrum(p)) {
                        *a += math::hypot(z.re, z.im);
                    }
                    count += 1;
                }
                if count > 0 {
                    data.extend(acc.iter().map(|a| a / count as f64));
                    n_obs += 1;
                }
            }
        }
    }
    zscore_columns(&mut data, n_obs, n_freq);
    Ok((data, n_obs))
}

fn zscore_columns(data: &mut [f64], rows: usize, cols: usize) {
    if rows == 0 {
        return;
    }
    for c in 0..cols {
        let mean = (0..rows).map(|r| data[r * cols + c]).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| { let d = data[r * cols + c] - mean; d * d }).sum::<f64>() / rows as f64;
        let sd = math::sqrt(var);
        for r in 0..rows {
            let v = &mut data[r * cols + c];
            *v = if sd < crate::preprocess::DEGENERATE_STD { 0.0 } else { (*v - mean) / sd };
        }
    }
}

/// Variable indices by descending score; ties go to the lower index.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRanking {
    /// Per fold: frequency indices, most important first.
    pub fold_rankings: Vec<Vec<usize>>,
    pub fold_scores: Vec<Vec<f64>>,
    pub composite: Vec<usize>,
    /// Borda points per frequency index.
    pub points: Vec<u64>,
}

/// Borda count: rank `r` (1-based) earns `n - r + 1` points. The composite
/// sorts by total points descending, ties to the lower frequency index.
pub fn aggregate_rankings(rankings: &[Vec<usize>]) -> Result<(Vec<usize>, Vec<u64>)> {
    let n = rankings
        .first()
        .ok_or_else(|| Error::InvalidArgument("no rankings to aggregate".into()))?
        .len();
    let mut points = vec![0u64; n];
    for ranking in rankings {
        if ranking.len() != n {
            return Err(Error::DimensionMismatch {
                context: "fold ranking".into(),
                expected: n,
                found: ranking.len(),
            });
        }
        let mut seen = vec![false; n];
        for (r, &f) in ranking.iter().enumerate() {
            if f >= n || seen[f] {
                return Err(Error::InvalidArgument("fold ranking is not a permutation".into()));
            }
            seen[f] = true;
            points[f] += (n - r) as u64;
        }
    }
    let mut composite: Vec<usize> = (0..n).collect();
    composite.sort_by(|&a, &b| points[b].cmp(&points[a]).then(a.cmp(&b)));
    Ok((composite, points))
}

impl FrequencyRanking {
    pub fn from_fold_scores(fold_scores: Vec<Vec<f64>>) -> Result<Self> {
        let fold_rankings: Vec<Vec<usize>> = fold_scores.iter().map(|s| rank_by_score(s)).collect();
        let (composite, points) = aggregate_rankings(&fold_rankings)?;
        Ok(FrequencyRanking {
            fold_rankings,
            fold_scores,
            composite,
            points,
        })
    }
}

/// The first `f_t` entries of `ranking`, ascending.
pub fn select_top_frequencies(ranking: &[usize], f_t: usize) -> Result<Vec<usize>> {
    if f_t == 0 || f_t > ranking.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "f_T = {f_t} outside 1..={}",
            ranking.len()
        )));
    }
    let mut top = ranking[..f_t].to_vec();
    top.sort_unstable();
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn single_varying_variable_dominates() {
        let mut rng = Stream::new(3);
        let n = 40;
        let mut data = vec![1.0; n * 5];
        for r in 0..n {
            data[r * 5 + 2] = rng.normal();
        }
        let imp = pca_frequency_importance(&data, n, 5, 3).unwrap();
        assert!((imp.scores[2] - 1.0).abs() < 1e-12);
        assert!(imp.rank_deficient);
        assert_eq!(imp.components_used, 1);
        assert_eq!(rank_by_score(&imp.scores)[0], 2);
    }

    #[test]
    fn unanimous_rankings() {
        let r = vec![2, 0, 3, 1];
        let (c, p) = aggregate_rankings(&[r.clone(), r.clone(), r.clone()]).unwrap();
        assert_eq!(c, r);
        assert_eq!(p, vec![9, 3, 12, 6]);
    }

    #[test]
    fn reversed_rankings_tie_to_lower_index() {
        let (c, p) = aggregate_rankings(&[vec![0, 1, 2], vec![2, 1, 0]]).unwrap();
        assert_eq!(p, vec![4, 4, 4]);
        assert_eq!(c, vec![0, 1, 2]);
    }

    #[test]
    fn aggregation_errors() {
        assert!(aggregate_rankings(&[vec![0, 1], vec![0]]).is_err());
        assert!(aggregate_rankings(&[vec![0, 0]]).is_err());
        assert!(aggregate_rankings(&[]).is_err());
    }

    #[test]
    fn top_selection() {
        let r = vec![4, 1, 3, 0, 2];
        assert_eq!(select_top_frequencies(&r, 1).unwrap(), vec![4]);
        assert_eq!(select_top_frequencies(&r, 3).unwrap(), vec![1, 3, 4]);
        assert_eq!(select_top_frequencies(&r, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_top_frequencies(&r, 0).is_err());
        assert!(select_top_frequencies(&r, 6).is_err());
    }
}
