use super::{NnError, Tensor};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax over a `(batch, k)` tensor, stabilized by subtracting
/// each row's maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    if logits.rank() != 2 || logits.shape()[1] < 2 {
        return Err(NnError::ShapeMismatch(format!(
            "softmax expects (batch, k >= 2), got {:?}",
            logits.shape()
        )));
    }
    if !logits.is_finite() {
        return Err(NnError::NonFiniteInput);
    }
    let k = logits.shape()[1];
    let mut out = logits.clone();
    out.data_mut().chunks_mut(k).for_each(softmax_row);
    Ok(out)
}

pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Mean negative log-probability of the target classes.
pub fn cross_entropy(probs: &Tensor, targets: &[usize]) -> Result<f64, NnError> {
    if probs.rank() != 2 || probs.shape()[0] != targets.len() {
        return Err(NnError::ShapeMismatch(format!(
            "probabilities {:?} for {} targets",
            probs.shape(),
            targets.len()
        )));
    }
    let k = probs.shape()[1];
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(NnError::ShapeMismatch(format!("target class {bad} outside 0..{k}")));
    }
    let total: f64 = probs
        .data()
        .chunks(k)
        .zip(targets)
        .map(|(row, &t)| -row[t].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / targets.len() as f64)
}

/// Mean squared error over all components.
pub fn mse(x: &Tensor, x_hat: &Tensor) -> Result<f64, NnError> {
    if x.shape() != x_hat.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "mse between {:?} and {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let total: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / x.len() as f64)
}

/// Loss and `dL/dlogits` for softmax followed by cross-entropy.
pub(crate) fn softmax_cross_entropy_grad(
    logits: &Tensor,
    targets: &[usize],
) -> Result<(f64, Tensor), NnError> {
    let probs = softmax(logits)?;
    let loss = cross_entropy(&probs, targets)?;
    let k = probs.shape()[1];
    let scale = 1.0 / targets.len() as f64;
    let mut grad = probs;
    for (row, &t) in grad.data_mut().chunks_mut(k).zip(targets) {
        row[t] -= 1.0;
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok((loss, grad))
}

/// Loss and `dL/doutput` for mean squared error against `target`.
pub(crate) fn mse_grad(output: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    let loss = mse(target, output)?;
    let scale = 2.0 / output.len() as f64;
    let data = output
        .data()
        .iter()
        .zip(target.data())
        .map(|(y, t)| scale * (y - t))
        .collect();
    Ok((loss, Tensor::new(output.shape(), data)?))
}
