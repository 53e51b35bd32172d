use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probability floor applied before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of `labels` under row-wise probabilities.
/// Returns the loss and its gradient with respect to the probabilities.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (n, k) = match *probs.shape() {
        [n, k] => (n, k),
        _ => {
            return Err(Error::Shape(format!(
                "cross-entropy expects N×K probabilities, got {:?}",
                probs.shape()
            )))
        }
    };
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} probability rows but {} labels", labels.len())));
    }
    let mut grad = vec![T::zero(); n * k];
    let mut total = 0.0f64;
    for (s, (row, &label)) in probs.data().chunks(k).zip(labels).enumerate() {
        if label >= k {
            return Err(Error::Index(format!("label {label} at row {s} with {k} classes")));
        }
        let sum: f64 = row.iter().map(|v| v.to_f64_lossy()).sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!(
                "probability row {s} sums to {sum}"
            )));
        }
        let p = row[label].to_f64_lossy().max(PROB_FLOOR);
        total -= p.ln();
        grad[s * k + label] = T::from_f64_lossy(-1.0 / (n as f64 * p));
    }
    Ok((total / n as f64, Tensor::new(vec![n, k], grad)?))
}

/// Mean squared error over all elements with gradient `2(pred − target)/N`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and target {:?} differ",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut total = 0.0f64;
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.to_f64_lossy() - t.to_f64_lossy();
            total += d * d;
            T::from_f64_lossy(2.0 * d / n)
        })
        .collect();
    Ok((total / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
