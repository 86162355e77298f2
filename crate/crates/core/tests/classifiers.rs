mod common;

use std::sync::OnceLock;

use fsnt_core::flowdata::{ClassLabel, Dataset};
use fsnt_core::learn::logistic::{softmax_loss_and_gradient, LogisticParams};
use fsnt_core::learn::tree::{gini, Node};
use fsnt_core::learn::{argmax, fit, EstimatorKind, EstimatorSpec, Matrix, ModelParams, TrainedModel};
use proptest::prelude::*;
use rand::Rng;

fn small(kind: EstimatorKind) -> EstimatorSpec {
    let spec = EstimatorSpec::new(kind).with_seed(7);
    match kind {
        EstimatorKind::Rf => spec.with("trees", 15.0),
        EstimatorKind::Gbt => spec.with("rounds", 15.0),
        EstimatorKind::Lr => spec.with("max_epochs", 100.0),
        _ => spec,
    }
}

fn trained() -> &'static Vec<TrainedModel> {
    static MODELS: OnceLock<Vec<TrainedModel>> = OnceLock::new();
    MODELS.get_or_init(|| {
        let d = common::blobs(200, 3, 2.5, 11);
        EstimatorKind::ALL.iter().map(|&k| fit(&small(k), &d).unwrap()).collect()
    })
}

proptest! {
    #[test]
    fn probabilities_form_a_simplex(x in prop::collection::vec(-1e3..1e3f64, 3), scale in prop_oneof![Just(1.0), Just(1e-3), Just(1e3)]) {
        let x: Vec<f64> = x.iter().map(|v| v * scale).collect();
        for m in trained() {
            let p = m.predict_proba(&x).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0 && v.is_finite()), "{} {:?}", m.kind(), p);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{} {:?}", m.kind(), p);
            prop_assert_eq!(m.predict(&x).unwrap().id(), argmax(&p));
        }
    }
}

#[test]
fn fitting_is_deterministic() {
    let d = common::blobs(120, 3, 3.0, 5);
    for k in EstimatorKind::ALL {
        let a = fit(&small(k), &d).unwrap();
        let b = fit(&small(k), &d).unwrap();
        assert_eq!(a.params, b.params, "{k}");
    }
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut r = common::rng(21);
    for _ in 0..20 {
        let n = r.random_range(3..15);
        let d = r.random_range(1..5);
        let x = Matrix::new(n, d, (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect());
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..4)).collect();
        let mut p = LogisticParams::zeros(d);
        for c in 0..4 {
            p.bias[c] = r.random_range(-1.0..1.0);
            p.weights[c].iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
        }
        let l2 = 0.05;
        let (_, gw, gb) = softmax_loss_and_gradient(&p, &x, &y, l2);
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for c in 0..4 {
            for j in 0..=d {
                let bump = |delta: f64| {
                    let mut q = p.clone();
                    if j == d {
                        q.bias[c] += delta;
                    } else {
                        q.weights[c][j] += delta;
                    }
                    softmax_loss_and_gradient(&q, &x, &y, l2).0
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let analytic = if j == d { gb[c] } else { gw[c][j] };
                assert!(rel(numeric, analytic) < 1e-4, "{numeric} vs {analytic}");
            }
        }
    }
}

/// Independent greedy CART: every (feature, midpoint) candidate scored by
/// weighted Gini decrease, first maximum in (feature, threshold) order.
enum OracleTree {
    Leaf(usize),
    Split(usize, f64, Box<OracleTree>, Box<OracleTree>),
}

fn counts(rows: &[usize], y: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; 4];
    for &i in rows {
        c[y[i]] += 1.0;
    }
    c
}

fn best_candidate(x: &[Vec<f64>], y: &[usize], rows: &[usize]) -> Option<(usize, f64, f64)> {
    let n = rows.len() as f64;
    let parent = n * gini(&counts(rows, y));
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (l, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= thr);
            let dec = parent - l.len() as f64 * gini(&counts(&l, y)) - rr.len() as f64 * gini(&counts(&rr, y));
            if best.is_none_or(|b| dec > b.2 + 1e-9) {
                best = Some((f, thr, dec));
            }
        }
    }
    best
}

fn oracle_tree(x: &[Vec<f64>], y: &[usize], rows: &[usize], depth: usize) -> OracleTree {
    let c = counts(rows, y);
    let majority = argmax(&c);
    if depth == 0 || c.iter().filter(|&&v| v > 0.0).count() <= 1 {
        return OracleTree::Leaf(majority);
    }
    match best_candidate(x, y, rows) {
        None => OracleTree::Leaf(majority),
        Some((f, thr, _)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= thr);
            OracleTree::Split(
                f,
                thr,
                Box::new(oracle_tree(x, y, &l, depth - 1)),
                Box::new(oracle_tree(x, y, &r, depth - 1)),
            )
        }
    }
}

fn oracle_predict(t: &OracleTree, x: &[f64]) -> usize {
    match t {
        OracleTree::Leaf(c) => *c,
        OracleTree::Split(f, thr, l, r) => oracle_predict(if x[*f] <= *thr { l } else { r }, x),
    }
}

fn rows_of(d: &Dataset) -> (Vec<Vec<f64>>, Vec<usize>) {
    (
        d.records().iter().map(|r| r.values.clone()).collect(),
        d.records().iter().map(|r| r.label.unwrap().id()).collect(),
    )
}

#[test]
fn tree_matches_exhaustive_split_search() {
    let mut r = common::rng(33);
    for trial in 0..300 {
        let n = r.random_range(4..=50);
        let depth = r.random_range(1..=2);
        let d = common::grid(n, 3, 7, trial);
        let (x, y) = rows_of(&d);
        let m = fit(&EstimatorSpec::new(EstimatorKind::Dt).with("max_depth", depth as f64), &d).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let oracle = oracle_tree(&x, &y, &all, depth);

        let ModelParams::Tree(t) = &m.params else { unreachable!() };
        match (&oracle, &t.nodes[0]) {
            (OracleTree::Split(f, thr, ..), Node::Split { feature, threshold, .. }) => {
                assert_eq!((*f, *thr), (*feature, *threshold), "trial {trial}");
                // the chosen split's decrease is the maximum over all candidates
                let (_, _, best) = best_candidate(&x, &y, &all).unwrap();
                let (l, rr): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][*f] <= *thr);
                let dec = n as f64 * gini(&counts(&all, &y))
                    - l.len() as f64 * gini(&counts(&l, &y))
                    - rr.len() as f64 * gini(&counts(&rr, &y));
                assert!((dec - best).abs() < 1e-12);
            }
            (OracleTree::Leaf(_), Node::Leaf { .. }) => {}
            _ => panic!("trial {trial}: root shape differs from oracle"),
        }

        let acc = |pred: &dyn Fn(&[f64]) -> usize| x.iter().zip(&y).filter(|(v, &c)| pred(v) == c).count();
        let ours = acc(&|v| m.predict(v).unwrap().id());
        assert_eq!(ours, acc(&|v| oracle_predict(&oracle, v)), "trial {trial}");
        for v in &x {
            assert_eq!(m.predict(v).unwrap().id(), oracle_predict(&oracle, v), "trial {trial}");
        }
    }
}

#[test]
fn single_tree_forest_equals_tree() {
    for seed in 0..10 {
        let d = common::grid(80, 4, 9, seed);
        let dt = fit(&EstimatorSpec::new(EstimatorKind::Dt).with_seed(seed), &d).unwrap();
        let rf = fit(
            &EstimatorSpec::new(EstimatorKind::Rf)
                .with("trees", 1.0)
                .with("bootstrap", 0.0)
                .with("feature_subsampling", 0.0)
                .with_seed(seed),
            &d,
        )
        .unwrap();
        let mut r = common::rng(seed);
        for _ in 0..500 {
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..5.0)).collect();
            assert_eq!(dt.predict_proba(&x).unwrap(), rf.predict_proba(&x).unwrap());
        }
    }
}

#[test]
fn gbt_training_loss_never_increases() {
    for seed in 0..4 {
        let d = common::blobs(160, 3, 4.0, seed);
        let m = fit(&EstimatorSpec::new(EstimatorKind::Gbt).with("rounds", 30.0), &d).unwrap();
        let losses: Vec<f64> = m.meta.fit_log.iter().map(|e| e.loss).collect();
        assert_eq!(losses.len(), 31);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn adaboost_stumps_beat_chance() {
    for seed in 0..6 {
        let d = common::grid(120, 3, 6, seed);
        let m = fit(&EstimatorSpec::new(EstimatorKind::AdaBoost), &d).unwrap();
        let ModelParams::AdaBoost(p) = &m.params else { unreachable!() };
        assert!(!p.stumps.is_empty());
        assert!(p.errors.iter().all(|&e| e < 0.75));
        assert!(p.stumps.iter().all(|t| t.depth() <= 1));
    }
}

#[test]
fn naive_bayes_boundary_matches_closed_form() {
    let mut r = common::rng(5);
    let noise: Vec<f64> = (0..2000)
        .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r))
        .collect();
    // mirrored draws give both classes the same spread and exact centres
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for z in &noise {
        for (centre, class) in [(0.0, 0), (10.0, 1)] {
            rows.push(vec![centre + z]);
            rows.push(vec![centre - z]);
            labels.extend([class, class]);
        }
    }
    let d = common::dataset(rows, &labels);
    let m = fit(&EstimatorSpec::new(EstimatorKind::Nb), &d).unwrap();
    let ModelParams::NaiveBayes(p) = &m.params else { unreachable!() };

    // closed-form posterior of class 1 from the fitted moments
    let posterior = |x: f64| {
        let ll = |c: usize| {
            let (mu, var) = (p.means[c][0], p.variances[c][0]);
            p.log_priors[c] - 0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mu).powi(2) / (2.0 * var)
        };
        1.0 / (1.0 + (ll(0) - ll(1)).exp())
    };
    for i in 0..=100 {
        let x = -2.0 + 0.14 * i as f64;
        let got = m.predict_proba(&[x]).unwrap()[1];
        assert!((got - posterior(x)).abs() < 1e-12);
    }
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..60 {
        let mid = (lo + hi) / 2.0;
        if m.predict(&[mid]).unwrap() == ClassLabel::Benign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 5.0).abs() < 0.01, "boundary at {lo}");
}

#[test]
fn logistic_separates_separable_data() {
    let mut r = common::rng(8);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..100 {
        let a: f64 = r.random_range(-3.0..3.0);
        let b: f64 = r.random_range(0.3..3.0);
        // class by the side of the line x0 + x1 = 0, kept away from it
        let (x0, x1, c) = if r.random::<bool>() { (a, -a + b, 1) } else { (a, -a - b, 0) };
        rows.push(vec![x0, x1]);
        labels.push(c);
    }
    let d = common::dataset(rows, &labels);
    let m = fit(&EstimatorSpec::new(EstimatorKind::Lr).with("max_epochs", 5000.0), &d).unwrap();
    for r in d.records() {
        assert_eq!(m.predict(&r.values).unwrap(), r.label.unwrap());
    }
}

#[test]
fn svm_hinge_vanishes_on_margin_separable_data() {
    // separator w = (0.6, 0.8), b = 0.5, every point at functional margin >= 1
    let mut r = common::rng(12);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let along: f64 = r.random_range(-5.0..5.0);
        let dist: f64 = r.random_range(1.0..4.0) * side - 0.5;
        rows.push(vec![0.6 * dist - 0.8 * along, 0.8 * dist + 0.6 * along]);
        labels.push(if side > 0.0 { 1 } else { 0 });
    }
    let d = common::dataset(rows, &labels);
    let m = fit(&EstimatorSpec::new(EstimatorKind::Svm), &d).unwrap();
    let ModelParams::Svm(p) = &m.params else { unreachable!() };
    let x = Matrix::from_dataset(&d);
    let y: Vec<u8> = labels.iter().map(|&c| c as u8).collect();
    for c in 0..4 {
        let h = p.mean_hinge(&x, &y, c);
        assert!(h < 0.01, "class {c} hinge {h}");
    }
}

#[test]
fn knn_recalls_training_points() {
    let d = common::blobs(60, 3, 1.0, 2);
    let m = fit(&EstimatorSpec::new(EstimatorKind::Knn).with("k", 1.0), &d).unwrap();
    for r in d.records() {
        assert_eq!(m.predict(&r.values).unwrap(), r.label.unwrap());
    }
}

#[test]
fn logistic_convergence_flag() {
    let d = common::blobs(80, 2, 3.0, 3);
    let m = fit(&EstimatorSpec::new(EstimatorKind::Lr).with("max_epochs", 2.0), &d).unwrap();
    assert!(!m.meta.converged);
    assert_eq!(m.meta.fit_log.len(), 2);
}
