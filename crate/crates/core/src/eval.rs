//! Erasure, utility and privacy metrics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::vec_ops;
use crate::model::{argmax, Dataset, ModelError, ModelSpec, ParamVector};
use crate::seed;

pub const DEFAULT_MIA_FOLDS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("empty subset")]
    EmptySubset,
    #[error("{which} set has {found} samples, fewer than the {folds} folds")]
    TooFewSamples { which: &'static str, found: usize, folds: usize },
    #[error("need at least 2 folds, got {0}")]
    BadFolds(usize),
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(spec: &ModelSpec, w: &ParamVector, data: &Dataset, subset: &[usize]) -> Result<f64, EvalError> {
    if subset.is_empty() {
        return Err(EvalError::EmptySubset);
    }
    let labels = data
        .labels()
        .ok_or(ModelError::WrongTargetKind("accuracy needs class labels"))?;
    let probs = spec.predict_proba(w, data, subset)?;
    let hits = subset
        .iter()
        .enumerate()
        .filter(|&(r, &i)| argmax(probs.row(r)) == labels[i])
        .count();
    Ok(hits as f64 / subset.len() as f64)
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).ln()
    }
}

/// Jensen-Shannon divergence of two distributions, natural log.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        s += 0.5 * kl_term(a, m) + 0.5 * kl_term(b, m);
    }
    s.max(0.0)
}

/// Mean per-row JSD between the predictions of two parameter vectors.
pub fn js_divergence(
    spec: &ModelSpec,
    w_a: &ParamVector,
    w_b: &ParamVector,
    data: &Dataset,
    subset: &[usize],
) -> Result<f64, EvalError> {
    if subset.is_empty() {
        return Err(EvalError::EmptySubset);
    }
    let pa = spec.predict_proba(w_a, data, subset)?;
    let pb = spec.predict_proba(w_b, data, subset)?;
    let total: f64 = (0..subset.len()).map(|r| jsd(pa.row(r), pb.row(r))).sum();
    Ok(total / subset.len() as f64)
}

pub fn update_norm(w: &ParamVector, w_ref: &ParamVector) -> f64 {
    vec_ops::distance(w.as_slice(), w_ref.as_slice())
}

/// Loss-based membership inference on two labelled populations.
///
/// Fits a class-balanced logistic regression on the standardized scalar loss
/// and reports the mean held-out balanced accuracy over stratified folds.
pub fn mia_from_losses(members: &[f64], non_members: &[f64], folds: usize, seed: u64) -> Result<f64, EvalError> {
    if folds < 2 {
        return Err(EvalError::BadFolds(folds));
    }
    for (which, set) in [("erased", members), ("test", non_members)] {
        if set.len() < folds {
            return Err(EvalError::TooFewSamples {
                which,
                found: set.len(),
                folds,
            });
        }
    }
    let mut rng = seed::rng(seed::derive(seed, "mia-folds"));
    let assign = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut fold = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold[i] = pos % folds;
        }
        fold
    };
    let fold_m = assign(members.len(), &mut rng);
    let fold_n = assign(non_members.len(), &mut rng);

    let mut total = 0.0;
    for k in 0..folds {
        let pick = |xs: &[f64], fold: &[usize], held: bool| -> Vec<f64> {
            xs.iter()
                .zip(fold)
                .filter(|(_, &f)| (f == k) == held)
                .map(|(&x, _)| x)
                .collect()
        };
        let (train_m, train_n) = (pick(members, &fold_m, false), pick(non_members, &fold_n, false));
        let (test_m, test_n) = (pick(members, &fold_m, true), pick(non_members, &fold_n, true));
        let clf = LossClassifier::fit(&train_m, &train_n);
        let predicted: Vec<bool> = test_m.iter().chain(&test_n).map(|&x| clf.is_member(x)).collect();
        let truth: Vec<bool> = (0..predicted.len()).map(|i| i < test_m.len()).collect();
        total += balanced_accuracy(&predicted, &truth);
    }
    Ok(total / folds as f64)
}

/// Mean of the true positive and true negative rates.
///
/// A class with no rows contributes a rate of zero.
pub fn balanced_accuracy(predicted: &[bool], truth: &[bool]) -> f64 {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        if t {
            pos += 1;
            tp += usize::from(p);
        } else {
            neg += 1;
            tn += usize::from(!p);
        }
    }
    let rate = |hit: usize, all: usize| if all == 0 { 0.0 } else { hit as f64 / all as f64 };
    0.5 * (rate(tp, pos) + rate(tn, neg))
}

/// One-feature logistic model `σ(a·z + b)` on the standardized loss `z`.
struct LossClassifier {
    mean: f64,
    scale: f64,
    a: f64,
    b: f64,
}

impl LossClassifier {
    const RIDGE: f64 = 1e-3;

    fn fit(members: &[f64], non_members: &[f64]) -> Self {
        let all: Vec<f64> = members.iter().chain(non_members).copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let wm = n / (2.0 * members.len() as f64);
        let wn = n / (2.0 * non_members.len() as f64);
        let samples: Vec<(f64, f64, f64)> = members
            .iter()
            .map(|&x| ((x - mean) / scale, 1.0, wm))
            .chain(non_members.iter().map(|&x| ((x - mean) / scale, 0.0, wn)))
            .collect();

        let (mut a, mut b) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let (mut ga, mut gb) = (Self::RIDGE * a, Self::RIDGE * b);
            let (mut haa, mut hab, mut hbb) = (Self::RIDGE, 0.0, Self::RIDGE);
            for &(z, y, wt) in &samples {
                let p = 1.0 / (1.0 + (-(a * z + b)).exp());
                let r = wt * (p - y) / n;
                ga += r * z;
                gb += r;
                let c = wt * p * (1.0 - p) / n;
                haa += c * z * z;
                hab += c * z;
                hbb += c;
            }
            let det = haa * hbb - hab * hab;
            let da = (hbb * ga - hab * gb) / det;
            let db = (haa * gb - hab * ga) / det;
            a -= da;
            b -= db;
            if da.abs().max(db.abs()) < 1e-12 {
                break;
            }
        }
        Self { mean, scale, a, b }
    }

    fn is_member(&self, loss: f64) -> bool {
        self.a * (loss - self.mean) / self.scale + self.b > 0.0
    }
}

/// MIA accuracy of `w` separating erased rows from held-out rows by their loss.
pub fn mia_accuracy(
    spec: &ModelSpec,
    w: &ParamVector,
    erased: (&Dataset, &[usize]),
    test: (&Dataset, &[usize]),
    folds: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    if erased.1.is_empty() || test.1.is_empty() {
        return Err(EvalError::EmptySubset);
    }
    let members = spec.per_sample_losses(w, erased.0, erased.1)?;
    let non_members = spec.per_sample_losses(w, test.0, test.1)?;
    mia_from_losses(&members, &non_members, folds, seed)
}

/// One evaluated method, in the shape of a results-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub seed: u64,
    pub round: usize,
    pub acc_erased: f64,
    pub acc_retained: f64,
    pub acc_test: f64,
    pub js_div: f64,
    pub update_norm: f64,
    pub mia_acc: Option<f64>,
    pub alpha: Option<f64>,
    pub wall_time_seconds: f64,
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn balanced(n_per_class: usize, classes: usize) -> Dataset {
        let n = n_per_class * classes;
        let mut rng = seed::rng(1);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let features = labels
            .iter()
            .flat_map(|&l| [l as f64 * 10.0 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        Dataset::classification("b", 2, features, labels, classes).unwrap()
    }

    fn random_w(spec: &ModelSpec, seed: u64) -> ParamVector {
        let mut rng = seed::rng(seed);
        spec.params((0..spec.param_count()).map(|_| rng.sample(StandardNormal)).collect())
            .unwrap()
    }

    #[test]
    fn accuracy_cases() {
        let data = balanced(5, 2);
        let spec = ModelSpec::logistic_regression(2, 2, 0.0);
        // Class 1 iff x0 > 5.
        let perfect = spec.params(vec![-1.0, 0.0, 1.0, 0.0, 2.5, -2.5]).unwrap();
        assert_eq!(accuracy(&spec, &perfect, &data, &data.all_indices()).unwrap(), 1.0);

        let data = balanced(7, 3);
        let spec = ModelSpec::logistic_regression(2, 3, 0.0);
        let idx = data.all_indices();
        // All logits tie at zero, so every row is predicted as class 0.
        let expect = data.indices_of_class(0).len() as f64 / data.len() as f64;
        assert_eq!(accuracy(&spec, &spec.zero_params(), &data, &idx).unwrap(), expect);
        assert!((expect - 1.0 / 3.0).abs() < 1e-15);

        let w = random_w(&spec, 3);
        let probs = spec.predict_proba(&w, &data, &idx).unwrap();
        let mut hits = 0;
        for (r, &i) in idx.iter().enumerate() {
            let row = probs.row(r);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            if best == data.labels().unwrap()[i] {
                hits += 1;
            }
        }
        assert_eq!(accuracy(&spec, &w, &data, &idx).unwrap(), hits as f64 / idx.len() as f64);
        assert_eq!(accuracy(&spec, &w, &data, &[]), Err(EvalError::EmptySubset));
    }

    #[test]
    fn jsd_properties() {
        assert_eq!(jsd(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]) - 2f64.ln()).abs() < 1e-15);

        let data = balanced(10, 3);
        let spec = ModelSpec::logistic_regression(2, 3, 0.0);
        let idx = data.all_indices();
        let (a, b) = (random_w(&spec, 1), random_w(&spec, 2));
        assert_eq!(js_divergence(&spec, &a, &a, &data, &idx).unwrap(), 0.0);
        let ab = js_divergence(&spec, &a, &b, &data, &idx).unwrap();
        let ba = js_divergence(&spec, &b, &a, &data, &idx).unwrap();
        assert!((ab - ba).abs() <= 1e-12);
        assert!(ab >= 0.0 && ab <= 2f64.ln() + 1e-12);

        let pa = spec.predict_proba(&a, &data, &idx).unwrap();
        let pb = spec.predict_proba(&b, &data, &idx).unwrap();
        let mut naive = 0.0;
        for r in 0..idx.len() {
            let (p, q) = (pa.row(r), pb.row(r));
            let m: Vec<f64> = p.iter().zip(q).map(|(x, y)| (x + y) / 2.0).collect();
            let kl = |x: &[f64]| -> f64 {
                x.iter().zip(&m).filter(|(v, _)| **v > 0.0).map(|(v, mm)| v * (v.ln() - mm.ln())).sum()
            };
            naive += 0.5 * kl(p) + 0.5 * kl(q);
        }
        naive /= idx.len() as f64;
        assert!((ab - naive).abs() <= 1e-12);
    }

    #[test]
    fn update_norm_cases() {
        let spec = ModelSpec::linear_regression(2, 0.0);
        let a = spec.params(vec![1.0, 2.0, 3.0]).unwrap();
        let b = spec.params(vec![1.0, 3.0, 3.0]).unwrap();
        assert_eq!(update_norm(&a, &a), 0.0);
        assert_eq!(update_norm(&a, &b), 1.0);
        let c = spec.params(vec![4.0, -2.0, 0.5]).unwrap();
        let oracle = ((1.0f64 - 4.0).powi(2) + 16.0 + 2.5f64.powi(2)).sqrt();
        assert!((update_norm(&a, &c) - oracle).abs() < 1e-15);
    }

    #[test]
    fn balanced_accuracy_matches_confusion_counts() {
        let truth = [true, true, true, false, false, false, false, true];
        let pred = [true, false, true, false, true, false, false, true];
        // tp = 3 of 4 positives, tn = 3 of 4 negatives.
        assert_eq!(balanced_accuracy(&pred, &truth), 0.5 * (3.0 / 4.0 + 3.0 / 4.0));
        let pred = [false; 8];
        assert_eq!(balanced_accuracy(&pred, &truth), 0.5);
    }

    #[test]
    fn mia_extremes() {
        let mut rng = seed::rng(4);
        let losses: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let same = mia_from_losses(&losses, &losses, 5, 1).unwrap();
        assert!((same - 0.5).abs() <= 0.05, "{same}");

        let high: Vec<f64> = (0..100).map(|i| 2.0 + i as f64 * 0.01).collect();
        let low: Vec<f64> = (0..120).map(|i| i as f64 * 0.01).collect();
        assert!(mia_from_losses(&high, &low, 5, 1).unwrap() >= 0.95);

        assert!(matches!(mia_from_losses(&high[..3], &low, 5, 1), Err(EvalError::TooFewSamples { .. })));
        assert_eq!(mia_from_losses(&high, &low, 5, 9), mia_from_losses(&high, &low, 5, 9));
    }
}
