use super::{softmax, NnError, Tensor};

/// Mean cross-entropy over rows of `logits` [N, K] against integer labels.
/// Returns the loss and its gradient with respect to the logits.
pub fn sparse_ce_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    if logits.shape().len() != 2 || logits.dim(0) != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (n, k) = (logits.dim(0), logits.dim(1));
    let mut grad = Tensor::zeros(&[n, k]);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(NnError::LabelOutOfRange { label, classes: k });
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let p = softmax(row);
        let g = &mut grad.data_mut()[r * k..(r + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = (p[j] - if j == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Mean hinge loss `max(0, 1 − y·s)` for targets y ∈ {+1, −1}.
/// At the hinge point the subgradient 0 is used.
pub fn hinge_loss(scores: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(targets)
        .map(|(&s, &y)| {
            let margin = 1.0 - y * s;
            if margin > 0.0 {
                loss += margin;
                -y / n
            } else {
                0.0
            }
        })
        .collect();
    (loss / n, grad)
}
