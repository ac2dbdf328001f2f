use impedscope_core::classifier::forest::ForestParams;
use impedscope_core::classifier::logistic::LogisticParams;
use impedscope_core::classifier::svm::{Kernel, SvmParams};
use impedscope_core::classifier::{fit, HyperParams, Learned, Matrix};
use impedscope_core::metrics::roc_auc;
use impedscope_core::rng::SeedPath;

/// Two Gaussian blobs `gap` apart along every axis.
fn blobs(n: usize, d: usize, gap: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = SeedPath::root(seed).stream();
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = y.iter().flat_map(|&c| (0..d).map(move |_| c)).map(|c| rng.normal() + gap * c as f64).collect();
    (x, y)
}

fn all_families() -> Vec<HyperParams> {
    vec![
        HyperParams::Svm(SvmParams::new(Kernel::Rbf, 1.0)),
        HyperParams::Svm(SvmParams::new(Kernel::Linear, 0.1)),
        HyperParams::RandomForest(ForestParams::new(50, 6, 0.5)),
        HyperParams::Logistic(LogisticParams::default()),
    ]
}

#[test]
fn separable_data_is_learned() {
    let (x, y) = blobs(60, 4, 4.0, 1);
    let (xt, yt) = blobs(40, 4, 4.0, 2);
    let m = Matrix::new(&x, 60, 4).unwrap();
    let mt = Matrix::new(&xt, 40, 4).unwrap();
    for p in all_families() {
        let model = fit(&m, &y, 2, &p, 7).unwrap();
        let probs = model.predict_proba(&mt).unwrap();
        let p1: Vec<f64> = probs.chunks(2).map(|r| r[1]).collect();
        let auc = roc_auc(&p1, &yt.iter().map(|&c| c == 1).collect::<Vec<_>>()).unwrap().auc;
        assert!(auc > 0.97, "{p:?}: held-out AUC {auc}");
        for row in probs.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fits_are_reproducible_for_a_seed() {
    let (x, y) = blobs(40, 3, 1.0, 4);
    let m = Matrix::new(&x, 40, 3).unwrap();
    for p in all_families() {
        let a = fit(&m, &y, 2, &p, 11).unwrap();
        let b = fit(&m, &y, 2, &p, 11).unwrap();
        assert_eq!(a.predict_proba(&m).unwrap(), b.predict_proba(&m).unwrap());
    }
}

#[test]
fn three_class_probabilities_sum_to_one() {
    let mut rng = SeedPath::root(5).stream();
    let n = 45;
    let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let x: Vec<f64> = y.iter().flat_map(|&c| [c as f64 * 3.0 + rng.normal(), rng.normal()]).collect();
    let m = Matrix::new(&x, n, 2).unwrap();
    for p in all_families() {
        let model = fit(&m, &y, 3, &p, 3).unwrap();
        for row in model.predict_proba(&m).unwrap().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{p:?}");
        }
    }
}

#[test]
fn svm_probability_rises_with_decision_on_weak_signal() {
    // Small, barely separated sets are where held-out calibration can run
    // against the labels.
    for seed in 0..20 {
        let (x, y) = blobs(24, 30, 0.3, 100 + seed);
        let m = Matrix::new(&x, 24, 30).unwrap();
        let model = fit(&m, &y, 2, &HyperParams::Svm(SvmParams::new(Kernel::Rbf, 1.0)), seed).unwrap();
        let Learned::Svm(svm) = &model.learned else { unreachable!() };
        assert!(svm.machines[0].platt_a < 0.0, "seed {seed}: slope {}", svm.machines[0].platt_a);
    }
}

#[test]
fn logistic_reaches_a_stationary_point() {
    let (x, y) = blobs(50, 5, 1.0, 8);
    let m = Matrix::new(&x, 50, 5).unwrap();
    let p = LogisticParams::default();
    let model = fit(&m, &y, 2, &HyperParams::Logistic(p.clone()), 0).unwrap();
    let Learned::Logistic(lr) = &model.learned else { unreachable!() };
    assert!(lr.converged);
    let g = impedscope_core::classifier::logistic::lr_gradient(&lr.params, &m, &y, 2, p.c);
    let max = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(max / 50.0 <= 1e-5, "max |g| / n = {}", max / 50.0);
}
