use super::{NnError, Scalar, Tensor};

/// Mean cross-entropy of the row-wise softmax of `logits` (`[N, K]`) against class indices.
/// Returns the loss and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>), NnError> {
    if logits.shape().len() != 2 || logits.dim(0) != labels.len() {
        return Err(NnError::Shape(format!("logits {:?} for {} labels", logits.shape(), labels.len())));
    }
    let (n, k) = (logits.dim(0), logits.dim(1));
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::IndexOutOfRange { index: bad, len: k });
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v.as_f64() - m).exp()).sum();
        let log_sum = sum.ln();
        loss += -(row[label].as_f64() - m - log_sum);
        for (j, v) in row.iter().enumerate() {
            let p = (v.as_f64() - m - log_sum).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            grad.push(T::of((p - target) * inv_n));
        }
    }
    Ok((loss * inv_n, Tensor::new(vec![n, k], grad)?))
}
