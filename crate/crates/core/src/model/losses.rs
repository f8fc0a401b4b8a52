/// `ln Σ exp(z_i)`, shifted by the max.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-ln softmax(z)[y]`
pub fn xent_loss(logits: &[f64], y: usize) -> f64 {
    (log_sum_exp(logits) - logits[y]).max(0.0)
}

/// `softmax(z) - onehot(y)`
pub fn xent_grad_logits(logits: &[f64], y: usize) -> Vec<f64> {
    let mut g = softmax(logits);
    g[y] -= 1.0;
    g
}

/// `KL(uniform || softmax(z)) = -ln K - mean_k ln softmax(z)_k`
pub fn kl_uniform_loss(logits: &[f64]) -> f64 {
    let k = logits.len() as f64;
    let lse = log_sum_exp(logits);
    let mean_log_p = logits.iter().map(|z| z - lse).sum::<f64>() / k;
    (-k.ln() - mean_log_p).max(0.0)
}

/// `softmax(z) - 1/K`
pub fn kl_uniform_grad_logits(logits: &[f64]) -> Vec<f64> {
    let k = logits.len() as f64;
    softmax(logits).into_iter().map(|p| p - 1.0 / k).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryLabel {
    /// ID data, target sign +1.
    Positive,
    /// Candidate outliers, target sign -1.
    Negative,
}

impl BinaryLabel {
    pub fn sign(self) -> f64 {
        match self {
            BinaryLabel::Positive => 1.0,
            BinaryLabel::Negative => -1.0,
        }
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(-y * score))`
pub fn sigmoid_loss(score: f64, y: BinaryLabel) -> f64 {
    softplus(-y.sign() * score)
}

/// Derivative of [`sigmoid_loss`] with respect to `score`.
pub fn sigmoid_loss_grad(score: f64, y: BinaryLabel) -> f64 {
    let s = y.sign();
    -s * sigmoid(-s * score)
}
