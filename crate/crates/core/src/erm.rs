//! Empirical risk minimization of the K-class predictor on labeled ID
//! data: mini-batch SGD with momentum and weight decay.

use crate::datagen::LabeledSet;
use crate::model::{forward, xent_grad_full, xent_loss, Activation, MlpParams};
use crate::numerics::SeededRng;
use crate::{Result, SalError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErmHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl Default for ErmHyper {
    fn default() -> Self {
        ErmHyper {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 5e-4,
            hidden_dim: 64,
            activation: Activation::Sin,
        }
    }
}

impl ErmHyper {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.learning_rate > 0.0) {
            return Err(("learning_rate", "must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(("batch_size", "must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(("momentum", "must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(("weight_decay", "must be non-negative".into()));
        }
        if self.hidden_dim == 0 {
            return Err(("hidden_dim", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// Heavy-ball SGD over a list of parameter blocks:
/// `v = momentum * v + (g + wd * p)`, `p -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len());
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let d = gi + self.weight_decay * *pi;
                *vi = self.momentum * *vi + d;
                *pi -= self.learning_rate * *vi;
            }
        }
    }
}

/// Mean cross-entropy over a set.
pub fn empirical_risk(p: &MlpParams, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(SalError::EmptyInput("labeled set"));
    }
    let mut total = 0.0;
    for (x, y) in set.iter() {
        total += xent_loss(&forward(p, x)?.logits, y);
    }
    Ok(total / set.len() as f64)
}

/// Mean loss and mean gradient over `indices`, accumulated in index order.
pub fn batch_xent_gradient(p: &MlpParams, set: &LabeledSet, indices: &[usize]) -> Result<(f64, MlpParams)> {
    let mut grad = p.zeros_like();
    let mut loss = 0.0;
    for &i in indices {
        let (l, g) = xent_grad_full(p, &set.points()[i], set.labels()[i])?;
        loss += l;
        grad.axpy(1.0, &g);
    }
    let n = indices.len().max(1) as f64;
    grad.scale(1.0 / n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmOutcome {
    pub params: MlpParams,
    pub initial_risk: f64,
    /// Mean cross-entropy over the training set after the last epoch; also
    /// serves as the stand-in for the optimal ID risk.
    pub final_risk: f64,
}

pub fn init_params(s_in: &LabeledSet, h: &ErmHyper, seed: u64) -> MlpParams {
    let mut rng = SeededRng::for_stage(seed, "erm.init");
    MlpParams::init_uniform(s_in.dim(), h.hidden_dim, s_in.num_classes(), &mut rng).with_activation(h.activation)
}

pub fn train_id_classifier(s_in: &LabeledSet, h: &ErmHyper, seed: u64) -> Result<ErmOutcome> {
    if s_in.is_empty() {
        return Err(SalError::EmptyInput("ID training set"));
    }
    if let Err((field, msg)) = h.validate() {
        return Err(SalError::Config {
            field: format!("erm.{field}"),
            msg,
        });
    }
    if h.batch_size > s_in.len() {
        return Err(SalError::InvalidArgument(format!(
            "batch size {} exceeds training set size {}",
            h.batch_size,
            s_in.len()
        )));
    }

    let mut params = init_params(s_in, h, seed);
    let initial_risk = empirical_risk(&params, s_in)?;
    let mut shuffle = SeededRng::for_stage(seed, "erm.shuffle");
    let mut opt = Sgd::new(h.learning_rate, h.momentum, h.weight_decay);

    for epoch in 0..h.epochs {
        let order = shuffle.permutation(s_in.len());
        for (step, batch) in order.chunks(h.batch_size).enumerate() {
            let (loss, grad) = batch_xent_gradient(&params, s_in, batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(SalError::NonFiniteLoss { epoch, step });
            }
            let g = grad.blocks();
            opt.step(&mut params.blocks_mut(), &g);
            if !params.is_finite() {
                return Err(SalError::NonFiniteLoss { epoch, step });
            }
        }
    }

    let final_risk = empirical_risk(&params, s_in)?;
    Ok(ErmOutcome {
        params,
        initial_risk,
        final_risk,
    })
}
