//! Logistic regression, kernel SVM and random forest behind one
//! fit / predict-probability contract.

pub mod forest;
pub mod logistic;
pub mod svm;

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use forest::{ForestModel, ForestParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use svm::{Kernel, SvmModel, SvmParams};

/// Borrowed row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct Matrix<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Matrix<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data".into(),
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { data, rows, cols })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            out.extend_from_slice(self.row(r));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum HyperParams {
    Svm(SvmParams),
    RandomForest(ForestParams),
    Logistic(LogisticParams),
}

impl HyperParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::Svm(_) => ModelKind::Svm,
            HyperParams::RandomForest(_) => ModelKind::RandomForest,
            HyperParams::Logistic(_) => ModelKind::Logistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HyperParams::Svm(p) => p.validate(),
            HyperParams::RandomForest(p) => p.validate(),
            HyperParams::Logistic(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    RandomForest,
    Logistic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learned {
    Svm(SvmModel),
    RandomForest(ForestModel),
    Logistic(LogisticModel),
}

/// A fitted classifier. The inner model sees only the classes present in
/// training (`present`, ascending ids into `0..n_classes`); absent classes get
/// probability 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: HyperParams,
    pub n_classes: usize,
    pub present: Vec<usize>,
    pub n_features: usize,
    pub seed: u64,
    pub converged: bool,
    pub learned: Learned,
}

fn check_inputs(x: &Matrix, y: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    if y.len() != x.rows {
        return Err(Error::DimensionMismatch {
            context: "labels".into(),
            expected: x.rows,
            found: y.len(),
        });
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    let mut seen = vec![false; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(Error::InvalidArgument("class id out of range".into()));
        }
        seen[c] = true;
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| seen[c]).collect();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    Ok(present)
}

/// Trains a model; deterministic in `(x, y, params, seed)`.
pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, params: &HyperParams, seed: u64) -> Result<TrainedModel> {
    params.validate()?;
    let present = check_inputs(x, y, n_classes)?;
    let mut local = vec![usize::MAX; n_classes];
    for (i, &c) in present.iter().enumerate() {
        local[c] = i;
    }
    let y_local: Vec<usize> = y.iter().map(|&c| local[c]).collect();
    let k = present.len();
    let (learned, converged) = match params {
        HyperParams::Svm(p) => {
            let m = svm::fit(x, &y_local, k, p, seed)?;
            let c = m.converged;
            (Learned::Svm(m), c)
        }
        HyperParams::RandomForest(p) => (Learned::RandomForest(forest::fit(x, &y_local, k, p, seed)?), true),
        HyperParams::Logistic(p) => {
            let m = logistic::fit(x, &y_local, k, p)?;
            let c = m.converged;
            (Learned::Logistic(m), c)
        }
    };
    Ok(TrainedModel {
        params: params.clone(),
        n_classes,
        present,
        n_features: x.cols,
        seed,
        converged,
        learned,
    })
}

impl TrainedModel {
    /// Row-major `rows x n_classes`; every row sums to 1.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols != self.n_features {
            return Err(Error::DimensionMismatch {
                context: "prediction features".into(),
                expected: self.n_features,
                found: x.cols,
            });
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction features".into()));
        }
        let local = match &self.learned {
            Learned::Svm(m) => m.predict_proba(x),
            Learned::RandomForest(m) => m.predict_proba(x),
            Learned::Logistic(m) => m.predict_proba(x),
        };
        let k = self.present.len();
        let mut out = vec![0.0; x.rows * self.n_classes];
        for r in 0..x.rows {
            for (i, &c) in self.present.iter().enumerate() {
                out[r * self.n_classes + c] = local[r * k + i];
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(crate::metrics::argmax_rows(&self.predict_proba(x)?, self.n_classes))
    }
}

/// Divides each row by its sum; rows summing to zero become uniform.
pub(crate) fn normalize_rows(p: &mut [f64], k: usize) {
    for row in p.chunks_mut(k) {
        let s: f64 = row.iter().sum();
        if s > 0.0 && s.is_finite() {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / k as f64);
        }
    }
}
