//! Classification and regression quality measures.

use std::fmt;

use crate::error::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion matrix must be square".into()));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.k || pred >= self.k {
            return Err(Error::Index(format!(
                "class pair ({truth}, {pred}) outside {} classes",
                self.k
            )));
        }
        self.counts[truth * self.k + pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::InvalidArgument("class counts differ".into()));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut m = ConfusionMatrix::new(k);
    for (&p, &t) in predictions.iter().zip(labels) {
        m.add(t, p)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            _ => Err(Error::InvalidArgument(format!("unknown averaging '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    pub per_class: Vec<ClassScores>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_report(matrix: &ConfusionMatrix, averaging: Averaging) -> Result<ClassificationReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Degenerate("confusion matrix holds no samples".into()));
    }
    let k = matrix.k;
    let per_class: Vec<ClassScores> = (0..k)
        .map(|c| {
            let tp = matrix.get(c, c);
            let predicted: u64 = (0..k).map(|t| matrix.get(t, c)).sum();
            let actual: u64 = (0..k).map(|p| matrix.get(c, p)).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            ClassScores {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: actual,
            }
        })
        .collect();
    let accuracy = ratio(matrix.correct(), total);
    let (precision, recall, f1) = match averaging {
        Averaging::Macro => {
            let kf = k as f64;
            (
                per_class.iter().map(|s| s.precision).sum::<f64>() / kf,
                per_class.iter().map(|s| s.recall).sum::<f64>() / kf,
                per_class.iter().map(|s| s.f1).sum::<f64>() / kf,
            )
        }
        Averaging::Micro => {
            // Pooled TP / FP / FN; for single-label data FP = FN = total − TP.
            let tp = matrix.correct();
            let p = ratio(tp, total);
            let r = ratio(tp, total);
            (p, r, harmonic(p, r))
        }
    };
    Ok(ClassificationReport {
        accuracy,
        precision,
        recall,
        f1,
        averaging,
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionReport {
    pub rmse: f64,
    pub plcc: f64,
    pub srocc: f64,
}

fn check_pair(pred: &[f64], target: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "lengths differ: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} values, got {}",
            pred.len()
        )));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 1)?;
    let ss: f64 = pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Pearson correlation via centered sums.
pub fn plcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 2)?;
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in pred.iter().zip(target) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance input to PLCC".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation as the Pearson correlation of average ranks.
pub fn srocc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 2)?;
    plcc(&average_ranks(pred), &average_ranks(target))
        .map_err(|_| Error::Degenerate("all-equal input to SROCC".into()))
}

pub fn regression_report(pred: &[f64], target: &[f64]) -> Result<RegressionReport> {
    Ok(RegressionReport {
        rmse: rmse(pred, target)?,
        plcc: plcc(pred, target)?,
        srocc: srocc(pred, target)?,
    })
}
