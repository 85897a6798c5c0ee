use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

fn check(pred: usize, target: usize) -> Result<()> {
    if pred != target {
        return Err(Error::shape("loss inputs", target, pred));
    }
    Ok(())
}

/// Mean of squared per-point errors.
pub fn mse_loss<S: Scalar>(pred: &[S], target: &[S]) -> Result<S> {
    check(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(S::zero());
    }
    let sum: S = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(sum / S::lit(pred.len() as f64))
}

/// Mean of absolute per-point errors.
pub fn mae_metric<S: Scalar>(pred: &[S], target: &[S]) -> Result<S> {
    check(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(S::zero());
    }
    let sum: S = pred.iter().zip(target).map(|(&p, &t)| (p - t).abs()).sum();
    Ok(sum / S::lit(pred.len() as f64))
}

/// Batch MSE (mean over samples and output points) and its gradient with
/// respect to the predictions, written into `d_pred`.
pub fn mse_with_grad<S: Scalar>(pred: &Matrix<S>, target: &Matrix<S>, d_pred: &mut Matrix<S>) -> Result<S> {
    check(pred.cols(), target.cols())?;
    check(pred.rows(), target.rows())?;
    d_pred.resize(pred.rows(), pred.cols());
    let count = pred.as_slice().len();
    if count == 0 {
        return Ok(S::zero());
    }
    let scale = S::lit(2.0 / count as f64);
    let mut sum = S::zero();
    for ((d, &p), &t) in d_pred
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let r = p - t;
        sum += r * r;
        *d = scale * r;
    }
    Ok(sum / S::lit(count as f64))
}
