use crate::error::{ensure, MgaError, Result};
use crate::nn::Tensor;

/// Row-wise softmax of `[N, n]` logits (a 1-D input is treated as one row).
/// Uses max subtraction, so large logits do not overflow.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let n = *logits.shape().last().unwrap_or(&0);
    ensure!(n >= 2, Dimension, "softmax needs at least two classes, got {n}");
    if !logits.all_finite() {
        return Err(MgaError::Numeric("softmax received a non-finite logit".into()));
    }
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::new(logits.shape(), out)
}

/// Vector-Jacobian product of softmax: given outputs `p` and `dL/dp`, returns
/// `dL/dz = p * (dL/dp - <dL/dp, p>)` per row.
pub fn softmax_backward(probs: &Tensor, grad_probs: &Tensor) -> Result<Tensor> {
    ensure!(
        probs.shape() == grad_probs.shape(),
        Dimension,
        "softmax_backward shape mismatch {:?} vs {:?}",
        probs.shape(),
        grad_probs.shape()
    );
    let n = *probs.shape().last().unwrap();
    let mut out = vec![0.0; probs.len()];
    for ((o, p), g) in out.chunks_mut(n).zip(probs.data().chunks(n)).zip(grad_probs.data().chunks(n)) {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for i in 0..n {
            o[i] = p[i] * (g[i] - dot);
        }
    }
    Tensor::new(probs.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_logits_give_uniform() {
        let p = softmax(&Tensor::new(&[4], vec![2.0; 4]).unwrap()).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn saturated_logits() {
        let p = softmax(&Tensor::new(&[2], vec![0.0, 50.0]).unwrap()).unwrap();
        assert!(p.data()[0] < 1e-20 && p.data()[0] > 0.0);
        assert!((p.data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_ratio_logits() {
        let p = softmax(&Tensor::new(&[2], vec![1f64.ln(), 3f64.ln()]).unwrap()).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-15);
        assert!((p.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_and_single_class() {
        assert!(matches!(
            softmax(&Tensor::new(&[2], vec![f64::NAN, 0.0]).unwrap()),
            Err(MgaError::Numeric(_))
        ));
        assert!(softmax(&Tensor::new(&[1], vec![0.0]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn sums_to_one_and_is_shift_invariant(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..10),
            shift in -100.0f64..100.0,
        ) {
            let n = logits.len();
            let p = softmax(&Tensor::new(&[n], logits.clone()).unwrap()).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-9);
            prop_assert!(p.data().iter().all(|&v| v > 0.0));
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let q = softmax(&Tensor::new(&[n], shifted).unwrap()).unwrap();
            prop_assert!(p.max_abs_diff(&q).unwrap() < 1e-9);
        }
    }
}
