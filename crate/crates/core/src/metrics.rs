//! Regression and sign-classification statistics.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::mse_loss;

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::Domain(format!("need at least {min} values, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value".into()));
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&midranks(x), &midranks(y))
}

/// Coefficient of determination of `pred` against `target` (not symmetric).
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 2)?;
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("constant target".into()));
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    pub rmse: f64,
    pub r2: f64,
    pub spearman: f64,
    pub n: usize,
}

pub fn regression_report(pred: &[f64], target: &[f64]) -> Result<RegressionReport> {
    check_pair(pred, target, 2)?;
    let mse = mse_loss(pred, target)?;
    Ok(RegressionReport {
        mse,
        rmse: mse.sqrt(),
        r2: r2(pred, target)?,
        spearman: spearman(pred, target)?,
        n: pred.len(),
    })
}

/// Sign class of a ΔΔG value: positive is destabilizing, zero or negative stabilizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityLabel {
    Destabilizing,
    Stabilizing,
}

impl fmt::Display for StabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StabilityLabel::Destabilizing => "destabilizing",
            StabilityLabel::Stabilizing => "stabilizing",
        })
    }
}

pub fn classify_sign(ddg: f64) -> StabilityLabel {
    if ddg > 0.0 {
        StabilityLabel::Destabilizing
    } else {
        StabilityLabel::Stabilizing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    /// `None` when no true positives exist in the reference labels.
    pub recall: Option<f64>,
    /// `None` unless precision and recall are both defined and not both zero.
    pub f1: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn classification_report<L: PartialEq>(pred: &[L], truth: &[L], positive: &L) -> Result<ClassificationReport> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Domain("classification report of empty input".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(report_from_counts(tp, fp, tn, fn_))
}

pub fn report_from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> ClassificationReport {
    let n = tp + fp + tn + fn_;
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassificationReport {
        accuracy: (tp + tn) as f64 / n as f64,
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
    }
}

/// Sign-classification report with destabilizing as the positive class.
pub fn sign_report(pred: &[f64], truth: &[f64]) -> Result<ClassificationReport> {
    let p: Vec<_> = pred.iter().map(|&v| classify_sign(v)).collect();
    let t: Vec<_> = truth.iter().map(|&v| classify_sign(v)).collect();
    classification_report(&p, &t, &StabilityLabel::Destabilizing)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

impl RegressionReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "n\t{}\nmse\t{}\nrmse\t{}\nr2\t{}\nspearman\t{}\n",
            self.n, self.mse, self.rmse, self.r2, self.spearman
        )
    }
}

impl ClassificationReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "accuracy\t{}\nprecision\t{}\nrecall\t{}\nf1\t{}\ntp\t{}\nfp\t{}\ntn\t{}\nfn\t{}\n",
            self.accuracy,
            opt(self.precision),
            opt(self.recall),
            opt(self.f1),
            self.tp,
            self.fp,
            self.tn,
            self.fn_
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8);
        assert!(matches!(spearman(&x, &[2.0; 4]), Err(Error::Undefined(_))));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn r2_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
        assert_eq!(r2(&[2.0; 3], &t).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 2.0, 4.0], &t).unwrap(), 0.5);
        assert!(matches!(r2(&t, &[1.0; 3]), Err(Error::Undefined(_))));
    }

    #[test]
    fn r2_is_not_symmetric() {
        let a = [1.0, 2.0, 4.0];
        let b = [1.0, 2.0, 3.0];
        assert_ne!(r2(&a, &b).unwrap(), r2(&b, &a).unwrap());
    }

    #[test]
    fn sign_convention() {
        assert_eq!(classify_sign(1.5), StabilityLabel::Destabilizing);
        assert_eq!(classify_sign(-0.8), StabilityLabel::Stabilizing);
        assert_eq!(classify_sign(0.0), StabilityLabel::Stabilizing);
    }

    #[test]
    fn classification_counts() {
        let r = report_from_counts(2, 1, 0, 1);
        assert!((r.precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let all = classification_report(&[1, 0, 1], &[1, 0, 1], &1).unwrap();
        assert_eq!(all.accuracy, 1.0);
        let none = classification_report(&[0, 0], &[0, 0], &1).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (None, None, None));
    }
}
