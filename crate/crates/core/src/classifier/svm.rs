//! Kernel SVM: SMO dual solver, Platt-calibrated probabilities from 3-fold
//! internal decision values, one-vs-rest for more than two classes.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{normalize_rows, Matrix};
use crate::rng::SeedPath;
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [Kernel::Linear, Kernel::Poly, Kernel::Rbf, Kernel::Sigmoid];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Poly => "poly",
            Kernel::Rbf => "rbf",
            Kernel::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub coef0: f64,
    /// `None`: `1 / (n_features * var(X))` over all training entries.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_degree() -> u32 {
    3
}
fn default_tol() -> f64 {
    1e-3
}
fn default_max_iter() -> usize {
    100_000
}

impl SvmParams {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        SvmParams {
            kernel,
            c,
            degree: default_degree(),
            coef0: 0.0,
            gamma: None,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.c.is_finite()
            && self.degree >= 1
            && self.tol > 0.0
            && self.max_iter > 0
            && self.gamma.map_or(true, |g| g > 0.0 && g.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("SVM needs C > 0, degree >= 1, gamma > 0".into()))
        }
    }
}

/// Kernel with its gamma fixed at fit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFn {
    pub kind: Kernel,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
}

impl KernelFn {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            Kernel::Linear => math::dot(a, b),
            Kernel::Poly => libm::pow(self.gamma * math::dot(a, b) + self.coef0, self.degree as f64),
            Kernel::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                math::exp(-self.gamma * d2)
            }
            Kernel::Sigmoid => math::tanh(self.gamma * math::dot(a, b) + self.coef0),
        }
    }
}

/// `1 / (n_features * var(X))`, or 1 when the data has no variance.
pub fn scale_gamma(x: &Matrix) -> f64 {
    let n = x.data.len();
    if n == 0 {
        return 1.0;
    }
    let mean = x.data.iter().sum::<f64>() / n as f64;
    let var = x.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var > 0.0 {
        1.0 / (x.cols as f64 * var)
    } else {
        1.0
    }
}

/// One binary machine: `f(x) = sum coef_i K(sv_i, x) - rho`, positive class
/// probability `1 / (1 + exp(A f + B))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support: Vec<f64>,
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub converged: bool,
}

impl BinarySvm {
    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    pub fn decision(&self, kernel: &KernelFn, x: &[f64]) -> f64 {
        let d = x.len();
        let mut f = -self.rho;
        for (i, &c) in self.coef.iter().enumerate() {
            f += c * kernel.eval(&self.support[i * d..(i + 1) * d], x);
        }
        f
    }

    pub fn probability(&self, f: f64) -> f64 {
        platt_probability(self.platt_a, self.platt_b, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelFn,
    pub n_classes: usize,
    /// One machine for two classes (class 1 positive), else one per class.
    pub machines: Vec<BinarySvm>,
    pub converged: bool,
}

struct DualSolution {
    alpha: Vec<f64>,
    rho: f64,
    converged: bool,
}

/// SMO with second-order working-set selection on rows `idx` of the full
/// kernel matrix `k` (`n x n`), labels `y` in {-1, +1}.
fn solve_dual(k: &[f64], n: usize, idx: &[usize], y: &[f64], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let m = idx.len();
    let kk = |a: usize, b: usize| k[idx[a] * n + idx[b]];
    let mut alpha = vec![0.0; m];
    let mut grad = vec![-1.0; m];
    let tau = 1e-12;
    let mut converged = false;
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    for _ in 0..max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..m {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                    if a <= 0.0 {
                        a = tau;
                    }
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        let (ai, aj) = (alpha[i], alpha[j]);
        let mut quad = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
        if quad <= 0.0 {
            quad = tau;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            let (mut ni, mut nj) = (ai + delta, aj + delta);
            if diff > 0.0 && nj < 0.0 {
                nj = 0.0;
                ni = diff;
            } else if diff <= 0.0 && ni < 0.0 {
                ni = 0.0;
                nj = -diff;
            }
            if diff > 0.0 && ni > c {
                ni = c;
                nj = c - diff;
            } else if diff <= 0.0 && nj > c {
                nj = c;
                ni = c + diff;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            let (mut ni, mut nj) = (ai - delta, aj + delta);
            if sum > c && ni > c {
                ni = c;
                nj = sum - c;
            } else if sum <= c && nj < 0.0 {
                nj = 0.0;
                ni = sum;
            }
            if sum > c && nj > c {
                nj = c;
                ni = sum - c;
            } else if sum <= c && ni < 0.0 {
                ni = 0.0;
                nj = sum;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..m {
            grad[t] += y[t] * (y[i] * kk(t, i) * di + y[j] * kk(t, j) * dj);
        }
    }
    // rho from free vectors, else the midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..m {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    DualSolution { alpha, rho, converged }
}

/// Decision values of a machine trained on `train` rows, evaluated at `at`
/// rows, both through the full kernel matrix.
fn cv_decisions(k: &[f64], n: usize, train: &[usize], at: &[usize], y: &[f64], p: &SvmParams) -> Vec<f64> {
    let ys: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let has_pos = ys.iter().any(|&v| v > 0.0);
    let has_neg = ys.iter().any(|&v| v < 0.0);
    if !(has_pos && has_neg) {
        let v = if has_pos { 1.0 } else { -1.0 };
        return vec![v; at.len()];
    }
    let sol = solve_dual(k, n, train, &ys, p.c, p.tol, p.max_iter);
    at.iter()
        .map(|&r| {
            let mut f = -sol.rho;
            for (t, &ti) in train.iter().enumerate() {
                if sol.alpha[t] > 0.0 {
                    f += sol.alpha[t] * ys[t] * k[r * n + ti];
                }
            }
            f
        })
        .collect()
}

/// Platt sigmoid fit (Newton with backtracking) returning `(A, B)`.
pub fn fit_platt(decisions: &[f64], positive: &[bool]) -> (f64, f64) {
    let prior1 = positive.iter().filter(|p| **p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let (mut a, mut b) = (0.0, math::ln((prior0 + 1.0) / (prior1 + 1.0)));
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + math::ln_1p(math::exp(-z))
                } else {
                    (ti - 1.0) * z + math::ln_1p(math::exp(z))
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);
    let sigma = 1e-12;
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &ti) in decisions.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = math::exp(-z);
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = math::exp(z);
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if math::abs(g1) < 1e-5 && math::abs(g2) < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

pub fn platt_probability(a: f64, b: f64, f: f64) -> f64 {
    let z = f * a + b;
    if z >= 0.0 {
        let e = math::exp(-z);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + math::exp(z))
    }
}

const CALIBRATION_FOLDS: usize = 3;

fn train_machine(x: &Matrix, k: &[f64], y: &[f64], p: &SvmParams, seed: SeedPath) -> BinarySvm {
    let n = x.rows;
    let all: Vec<usize> = (0..n).collect();
    let sol = solve_dual(k, n, &all, y, p.c, p.tol, p.max_iter);
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (t, (&a, &yt)) in sol.alpha.iter().zip(y).enumerate() {
        if a > 0.0 {
            support.extend_from_slice(x.row(t));
            coef.push(a * yt);
        }
    }
    let mut perm = all.clone();
    seed.stream().shuffle(&mut perm);
    let mut decisions = vec![0.0; n];
    let folds = CALIBRATION_FOLDS.min(n);
    for f in 0..folds {
        let test: Vec<usize> = perm.iter().enumerate().filter(|(i, _)| i % folds == f).map(|(_, &r)| r).collect();
        let mut train: Vec<usize> = perm.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, &r)| r).collect();
        train.sort_unstable();
        let dv = cv_decisions(k, n, &train, &test, y, p);
        for (&r, v) in test.iter().zip(dv) {
            decisions[r] = v;
        }
    }
    let positive: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
    let (mut platt_a, mut platt_b) = fit_platt(&decisions, &positive);
    if platt_a >= 0.0 {
        // Held-out decisions ran against the labels; calibrate on the
        // machine's own decisions so probability rises with f.
        let own: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|t| sol.alpha[t] * y[t] * k[r * n + t]).sum::<f64>() - sol.rho)
            .collect();
        (platt_a, platt_b) = fit_platt(&own, &positive);
    }
    BinarySvm {
        support,
        coef,
        rho: sol.rho,
        platt_a,
        platt_b,
        converged: sol.converged,
    }
}

pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &SvmParams, seed: u64) -> Result<SvmModel> {
    let kernel = KernelFn {
        kind: p.kernel,
        gamma: p.gamma.unwrap_or_else(|| scale_gamma(x)),
        degree: p.degree,
        coef0: p.coef0,
    };
    let n = x.rows;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(x.row(i), x.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let root = SeedPath::root(seed).child("svm");
    let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
    let machines: Vec<BinarySvm> = targets
        .iter()
        .map(|&c| {
            let yb: Vec<f64> = y.iter().map(|&t| if t == c { 1.0 } else { -1.0 }).collect();
            train_machine(x, &k, &yb, p, root.index(c as u64))
        })
        .collect();
    let converged = machines.iter().all(|m| m.converged);
    Ok(SvmModel {
        kernel,
        n_classes,
        machines,
        converged,
    })
}

impl SvmModel {
    pub fn decision_values(&self, x: &Matrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.rows * self.machines.len());
        for r in 0..x.rows {
            for m in &self.machines {
                out.push(m.decision(&self.kernel, x.row(r)));
            }
        }
        out
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let mut probs = Vec::with_capacity(x.rows * self.n_classes);
        for r in 0..x.rows {
            let row = x.row(r);
            if self.n_classes == 2 {
                let p1 = self.machines[0].probability(self.machines[0].decision(&self.kernel, row));
                probs.push(1.0 - p1);
                probs.push(p1);
            } else {
                probs.extend(self.machines.iter().map(|m| m.probability(m.decision(&self.kernel, row))));
            }
        }
        normalize_rows(&mut probs, self.n_classes);
        probs
    }
}
