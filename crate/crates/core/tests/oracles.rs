//! Numerical routines checked against independent implementations.

use impedscope_core::linalg::{covariance, symmetric_eigen};
use impedscope_core::metrics::{multiclass_auc, roc_auc, AucAverage, ConfusionMatrix};
use impedscope_core::rng::SeedPath;
use impedscope_core::stats::{paired_t_test, t_cdf, t_confidence_interval, t_quantile, t_two_sided_p};
use impedscope_core::synth::{cole_impedance, TissueModel};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn random_symmetric(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = SeedPath::root(seed).stream();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rng.normal();
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    m
}

#[test]
fn eigenvalues_match_nalgebra() {
    for seed in 0..10 {
        let n = 3 + seed as usize * 3;
        let m = random_symmetric(seed, n);
        let ours = symmetric_eigen(&m, n).unwrap();
        let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_row_slice(n, n, &m))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.values.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // A v = lambda v for every returned pair.
        for c in 0..n {
            for r in 0..n {
                let av: f64 = (0..n).map(|k| m[r * n + k] * ours.vectors[k * n + c]).sum();
                assert!((av - ours.values[c] * ours.vectors[r * n + c]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn covariance_matches_nalgebra() {
    let mut rng = SeedPath::root(3).stream();
    let (n, p) = (40, 6);
    let data: Vec<f64> = (0..n * p).map(|_| rng.normal()).collect();
    let ours = covariance(&data, n, p).unwrap();
    let x = nalgebra::DMatrix::from_row_slice(n, p, &data);
    let mean = x.row_mean();
    let centred = nalgebra::DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    for i in 0..p {
        for j in 0..p {
            assert!((ours[i * p + j] - cov[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn t_distribution_matches_statrs() {
    for df in [1.0, 2.0, 4.0, 9.0, 30.0] {
        let d = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [-3.5, -1.0, 0.0, 0.4, 2.2, 6.0] {
            assert!((t_cdf(t, df) - d.cdf(t)).abs() < 1e-10, "cdf t={t} df={df}");
            assert!((t_two_sided_p(t, df) - 2.0 * d.cdf(-f64::abs(t))).abs() < 1e-10);
        }
        for p in [0.6, 0.9, 0.975, 0.995] {
            assert!((t_quantile(p, df).unwrap() - d.inverse_cdf(p)).abs() < 1e-8, "quantile p={p} df={df}");
        }
    }
}

#[test]
fn paired_t_test_matches_hand_computation() {
    let a = [0.81, 0.77, 0.90, 0.85, 0.79, 0.88];
    let b = [0.75, 0.78, 0.82, 0.80, 0.70, 0.86];
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let r = paired_t_test(&a, &b).unwrap();
    assert!((r.t - t).abs() < 1e-12);
    assert_eq!(r.df, 5);
    let p = 2.0 * StudentsT::new(0.0, 1.0, 5.0).unwrap().cdf(-t.abs());
    assert!((r.p_two_sided - p).abs() < 1e-10);
    assert_eq!(r.significant, p < 0.05);
}

#[test]
fn confidence_interval_half_width() {
    let v = [0.6, 0.7, 0.65, 0.72, 0.68];
    let ci = t_confidence_interval(&v, 0.95).unwrap();
    let mean = v.iter().sum::<f64>() / 5.0;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    let q = StudentsT::new(0.0, 1.0, 4.0).unwrap().inverse_cdf(0.975);
    assert!((ci.upper - (mean + q * sd / 5f64.sqrt())).abs() < 1e-9);
    assert!((ci.lower - (mean - q * sd / 5f64.sqrt())).abs() < 1e-9);
}

#[test]
fn confusion_matrix_counts() {
    let y = [0, 0, 1, 1, 2, 2, 2, 1];
    let p = [0, 1, 1, 1, 2, 0, 2, 2];
    let cm = ConfusionMatrix::from_labels(&y, &p, 3).unwrap();
    assert_eq!(cm.total(), 8);
    assert_eq!(cm.correct(), 5);
    for c in 0..3 {
        let tp = y.iter().zip(&p).filter(|(a, b)| **a == c && **b == c).count() as u64;
        let fp = y.iter().zip(&p).filter(|(a, b)| **a != c && **b == c).count() as u64;
        let fn_ = y.iter().zip(&p).filter(|(a, b)| **a == c && **b != c).count() as u64;
        assert_eq!(cm.one_vs_rest(c), (tp, fp, fn_), "class {c}");
    }
}

#[test]
fn two_class_multiclass_auc_is_binary_auc() {
    let mut rng = SeedPath::root(9).stream();
    let n = 30;
    let p1: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let y: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { rng.below(2) }).collect();
    let probs: Vec<f64> = p1.iter().flat_map(|&p| [1.0 - p, p]).collect();
    let binary = roc_auc(&p1, &y.iter().map(|&c| c == 1).collect::<Vec<_>>()).unwrap().auc;
    for mode in [AucAverage::Micro, AucAverage::Macro] {
        assert!((multiclass_auc(&probs, 2, &y, mode).unwrap().auc - binary).abs() < 1e-12);
    }
}

#[test]
fn cole_limits_and_debye_case() {
    let m = TissueModel {
        r0: 1000.0,
        r_inf: 200.0,
        fc: 5000.0,
        alpha: 1.0,
    };
    assert!((cole_impedance(&m, 1e-6).re - 1000.0).abs() < 1e-3);
    assert!((cole_impedance(&m, 1e12).re - 200.0).abs() < 1e-3);
    // alpha = 1: Z = Rinf + dR / (1 + j w), w = f / fc.
    for f in [100.0, 5000.0, 40000.0] {
        let w = f / m.fc;
        let re = 200.0 + 800.0 / (1.0 + w * w);
        let im = -800.0 * w / (1.0 + w * w);
        let z = cole_impedance(&m, f);
        assert!((z.re - re).abs() < 1e-9 && (z.im - im).abs() < 1e-9, "f={f}");
    }
}
