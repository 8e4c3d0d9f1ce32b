//! Classification loss, computed in log-space.

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, softmax, Tensor};

/// Negative log-likelihood of the labeled class under softmax:
/// `logsumexp(logits) - logits[label]`.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    if logits.rank() != 1 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            detail: format!("expected rank-1 logits, got {:?}", logits.shape()),
        });
    }
    if label >= logits.len() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits.data()) - logits.data()[label])
}

/// Cross-entropy against the smoothed target `(1 - eps) * onehot + eps / K`,
/// with its gradient `softmax(logits) - target`. `eps = 0` is plain
/// cross-entropy.
pub fn cross_entropy_smoothed_with_grad(
    logits: &Tensor,
    label: usize,
    eps: f64,
) -> Result<(f64, Tensor)> {
    if !(0.0..=0.2).contains(&eps) {
        return Err(Error::Config(format!("label smoothing must be in [0, 0.2], got {eps}")));
    }
    cross_entropy(logits, label)?; // validates shape and label
    let k = logits.len() as f64;
    let lse = log_sum_exp(logits.data());
    let mut loss = 0.0;
    for (i, &v) in logits.data().iter().enumerate() {
        let target = if i == label { 1.0 - eps + eps / k } else { eps / k };
        if target > 0.0 {
            loss += target * (lse - v);
        }
    }
    let probs = softmax(logits)?;
    let grad = Tensor::from_vec(
        logits.shape(),
        probs
            .data()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let target = if i == label { 1.0 - eps + eps / k } else { eps / k };
                p - target
            })
            .collect(),
    )?;
    Ok((loss, grad))
}

/// Plain cross-entropy with gradient `softmax(logits) - onehot(label)`.
pub fn cross_entropy_with_grad(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    cross_entropy_smoothed_with_grad(logits, label, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let logits = Tensor::zeros(&[10]).unwrap();
        let loss = cross_entropy(&logits, 3).unwrap();
        assert!((loss - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let mut logits = Tensor::zeros(&[10]).unwrap();
        logits.data_mut()[2] = 1000.0;
        let loss = cross_entropy(&logits, 2).unwrap();
        assert!(loss >= 0.0 && loss < 1e-10);
    }

    #[test]
    fn closed_form_ratio() {
        let logits = Tensor::from_vec(&[2], vec![1.0f64.ln(), 3.0f64.ln()]).unwrap();
        let loss = cross_entropy(&logits, 0).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Tensor::zeros(&[10]).unwrap();
        assert!(cross_entropy(&logits, 10).is_err());
    }

    #[test]
    fn grad_is_softmax_minus_onehot() {
        let logits = Tensor::from_vec(&[3], vec![0.2, -0.7, 1.1]).unwrap();
        let (_, grad) = cross_entropy_with_grad(&logits, 1).unwrap();
        let probs = softmax(&logits).unwrap();
        for i in 0..3 {
            let want = probs.data()[i] - if i == 1 { 1.0 } else { 0.0 };
            assert!((grad.data()[i] - want).abs() < 1e-15);
        }
        // gradient sums to zero
        assert!(grad.data().iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn smoothing_interpolates_toward_uniform() {
        let logits = Tensor::from_vec(&[4], vec![2.0, 0.0, -1.0, 0.5]).unwrap();
        let (plain, _) = cross_entropy_with_grad(&logits, 0).unwrap();
        let (smoothed, grad) = cross_entropy_smoothed_with_grad(&logits, 0, 0.2).unwrap();
        assert!(smoothed > plain); // true class is the max logit here
        assert!(grad.data().iter().sum::<f64>().abs() < 1e-12);
    }
}
