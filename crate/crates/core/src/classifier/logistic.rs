//! L2-regularised logistic regression (sigmoid for two classes, softmax
//! otherwise) fitted by L-BFGS.
//!
//! Objective: `sum_i logloss_i + ||W||^2 / (2C)`; intercepts are not
//! penalised. Parameters are laid out as `[W (k' x d, row-major), b (k')]`
//! with `k' = 1` for two classes and `k' = K` otherwise.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{normalize_rows, Matrix};
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            c: 1.0,
            max_iter: 500,
            tol: default_tol(),
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() || self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("logistic regression needs C > 0, max_iter > 0, tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub n_classes: usize,
    pub n_features: usize,
    /// `[W, b]` as described in the module docs.
    pub params: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective before the first step and after every accepted step.
    pub loss_history: Vec<f64>,
}

fn n_outputs(n_classes: usize) -> usize {
    if n_classes == 2 {
        1
    } else {
        n_classes
    }
}

pub fn n_params(n_features: usize, n_classes: usize) -> usize {
    n_outputs(n_classes) * (n_features + 1)
}

fn linear(params: &[f64], x: &[f64], d: usize, out: usize, z: &mut [f64]) {
    let bias = &params[out * d..];
    for (j, zj) in z.iter_mut().enumerate() {
        *zj = math::dot(&params[j * d..(j + 1) * d], x) + bias[j];
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + math::ln(z.iter().map(|v| math::exp(v - m)).sum::<f64>())
}

/// Objective and gradient together.
pub fn lr_objective_gradient(params: &[f64], x: &Matrix, y: &[usize], n_classes: usize, c: f64) -> (f64, Vec<f64>) {
    let d = x.cols;
    let out = n_outputs(n_classes);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; out];
    let mut resid = vec![0.0; out];
    for i in 0..x.rows {
        let xi = x.row(i);
        linear(params, xi, d, out, &mut z);
        if out == 1 {
            let t = (y[i] == 1) as u8 as f64;
            loss += math::softplus(z[0]) - t * z[0];
            resid[0] = math::sigmoid(z[0]) - t;
        } else {
            let lse = log_sum_exp(&z);
            loss += lse - z[y[i]];
            for j in 0..out {
                resid[j] = math::exp(z[j] - lse) - (y[i] == j) as u8 as f64;
            }
        }
        for j in 0..out {
            let r = resid[j];
            if r != 0.0 {
                for (g, &xv) in grad[j * d..(j + 1) * d].iter_mut().zip(xi) {
                    *g += r * xv;
                }
                grad[out * d + j] += r;
            }
        }
    }
    let w = &params[..out * d];
    loss += w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c);
    for (g, &wv) in grad[..out * d].iter_mut().zip(w) {
        *g += wv / c;
    }
    (loss, grad)
}

pub fn lr_objective(params: &[f64], x: &Matrix, y: &[usize], n_classes: usize, c: f64) -> f64 {
    lr_objective_gradient(params, x, y, n_classes, c).0
}

/// Gradient of the regularised negative log-likelihood.
pub fn lr_gradient(params: &[f64], x: &Matrix, y: &[usize], n_classes: usize, c: f64) -> Vec<f64> {
    lr_objective_gradient(params, x, y, n_classes, c).1
}

const MEMORY: usize = 10;

pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &LogisticParams) -> Result<LogisticModel> {
    let dim = n_params(x.cols, n_classes);
    let mut w = vec![0.0; dim];
    let (mut f, mut g) = lr_objective_gradient(&w, x, y, n_classes, p.c);
    let scale = x.rows.max(1) as f64;
    let mut history = vec![f];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(math::abs(*v))) / scale <= p.tol {
            converged = true;
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, yv, rho) in mem.iter().rev() {
            let a = rho * math::dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match mem.back() {
            Some((s, yv, _)) => math::dot(s, yv) / math::dot(yv, yv),
            None => 1.0 / math::sqrt(g.iter().map(|v| v * v).sum::<f64>()).max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, yv, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * math::dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = math::dot(&g, &dir);
        if !(slope < 0.0) {
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -math::dot(&g, &g);
        }
        // Backtracking Armijo search.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(wi, di)| wi + step * di).collect();
            let (ft, gt) = lr_objective_gradient(&trial, x, y, n_classes, p.c);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, f_new, g_new)) = accepted else { break };
        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = math::dot(&s, &yv);
        if sy > 1e-12 {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s, yv, 1.0 / sy));
        }
        let stalled = f - f_new <= 1e-15 * f.abs().max(1.0);
        w = w_new;
        f = f_new;
        g = g_new;
        history.push(f);
        iterations += 1;
        if stalled {
            converged = g.iter().fold(0.0f64, |m, v| m.max(math::abs(*v))) / scale <= p.tol;
            break;
        }
    }
    if !converged && iterations < p.max_iter {
        converged = g.iter().fold(0.0f64, |m, v| m.max(math::abs(*v))) / scale <= p.tol;
    }
    Ok(LogisticModel {
        n_classes,
        n_features: x.cols,
        params: w,
        converged,
        iterations,
        loss_history: history,
    })
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let out = n_outputs(self.n_classes);
        let mut z = vec![0.0; out];
        let mut probs = Vec::with_capacity(x.rows * self.n_classes);
        for i in 0..x.rows {
            linear(&self.params, x.row(i), self.n_features, out, &mut z);
            if out == 1 {
                let p1 = math::sigmoid(z[0]);
                probs.push(1.0 - p1);
                probs.push(p1);
            } else {
                let lse = log_sum_exp(&z);
                probs.extend(z.iter().map(|v| math::exp(v - lse)));
            }
        }
        normalize_rows(&mut probs, self.n_classes);
        probs
    }
}
