use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
            context: "cross-entropy labels",
        });
    }
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::LabelOutOfRange { label: bad, classes: c });
    }
    let batch = T::from_count(n);
    let mut total = T::zero();
    let mut grad = Matrix::zeros(n, c);
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let (argmax, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (j, v)| if v > bv { (j, v) } else { (bi, bv) });
        // log-sum-exp split as max + log1p(sum of the others) keeps tiny losses exact.
        let rest: T = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != argmax)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        total += rest.ln_1p() + (max - row[y]);

        let denom = T::one() + rest;
        let g = grad.row_mut(i);
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] - max).exp() / denom;
            let target = if j == y { T::one() } else { T::zero() };
            *gj = (p - target) / batch;
        }
    }
    Ok((total / batch, grad))
}

/// Mean over the batch of `(1/d) * sum_k (s_k - r_k)^2`, with the gradient
/// with respect to the reconstruction `r`.
pub fn mse_reconstruction<T: Scalar>(target: &Matrix<T>, reconstruction: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    if target.shape() != reconstruction.shape() {
        return Err(Error::DimensionMismatch {
            expected: target.as_slice().len(),
            actual: reconstruction.as_slice().len(),
            context: "reconstruction shape",
        });
    }
    let (n, d) = target.shape();
    if n == 0 || d == 0 {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    let denom = T::from_count(n * d);
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = Matrix::zeros(n, d);
    for ((g, &s), &r) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(target.as_slice())
        .zip(reconstruction.as_slice())
    {
        let diff = r - s;
        total += diff * diff;
        *g = two * diff / denom;
    }
    Ok((total / denom, grad))
}

/// `(1 - alpha) * ce + alpha * ae`.
pub fn joint_loss<T: Scalar>(ce: T, ae: T, alpha: T) -> Result<T> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok((T::one() - alpha) * ce + alpha * ae)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Matrix::<f64>::from_rows(&[[0.3; 4], [-2.0; 4]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-15);
        assert!((loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn saturated_logit_gives_vanishing_loss() {
        let logits = Matrix::<f64>::from_rows(&[[0.0, 50.0, 0.0]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((0.0..1e-20).contains(&loss), "{loss}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Matrix::<f64>::from_rows(&[[1.0, 2.0, 3.0], [1000.0, -1000.0, 0.0]]).unwrap();
        let p = softmax_rows(&logits);
        for row in p.row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_label_errors() {
        let logits = Matrix::<f64>::zeros(2, 3);
        assert!(softmax_cross_entropy(&logits, &[0]).is_err());
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn mse_examples() {
        let s = Matrix::<f64>::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(mse_reconstruction(&s, &s).unwrap().0, 0.0);
        let (loss, _) = mse_reconstruction(&s, &Matrix::zeros(1, 3)).unwrap();
        assert!((loss - 14.0 / 3.0).abs() < 1e-15);
        let s = Matrix::<f64>::from_rows(&[[1.0, 0.0]]).unwrap();
        let (loss, grad) = mse_reconstruction(&s, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(loss, 0.5);
        assert_eq!(grad.as_slice(), &[-1.0, 0.0]);
        assert!(mse_reconstruction(&s, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn joint_loss_examples() {
        assert_eq!(joint_loss(1.7, 123.0, 0.0).unwrap(), 1.7);
        assert_eq!(joint_loss(9.0, 0.3, 1.0).unwrap(), 0.3);
        assert!((joint_loss(1.0, 0.5, 0.1).unwrap() - 0.95_f64).abs() < 1e-15);
        assert!(joint_loss(1.0, 0.5, 1.5).is_err());
        assert!(joint_loss(1.0, 0.5, -0.1).is_err());
        assert!(joint_loss(1.0, 0.5, f64::NAN).is_err());
    }
}
