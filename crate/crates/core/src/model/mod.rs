//! Two-layer network `h_w` with a smooth hidden activation, the linear
//! binary head `g_θ` on its penultimate features, and the analytic
//! gradients of their losses.

mod io;
mod losses;

pub use io::{load_params, save_params, ParamsFile};
pub use losses::{
    kl_uniform_grad_logits, kl_uniform_loss, log_sum_exp, sigmoid_loss, sigmoid_loss_grad,
    softmax, xent_grad_logits, xent_loss, BinaryLabel,
};

use crate::numerics::{DenseMatrix, DenseVector, SeededRng};
use crate::{Result, SalError};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sin,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sin" => Some(Activation::Sin),
            _ => None,
        }
    }

    /// Value and derivative at `a`.
    fn eval(self, a: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let h = a.tanh();
                (h, 1.0 - h * h)
            }
            Activation::Sin => a.sin_cos(),
        }
    }
}

/// Weights of `x -> W2 · act(W1 · x + b1) + b2`.
///
/// The same struct doubles as the gradient container for these weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DenseMatrix,
    pub b1: DenseVector,
    pub w2: DenseMatrix,
    pub b2: DenseVector,
    pub activation: Activation,
}

/// Network output: class logits, the hidden activations feeding them, and
/// the activation derivative at each hidden pre-activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: DenseVector,
    pub penult: DenseVector,
    pub act_grad: DenseVector,
}

impl MlpParams {
    pub fn new(w1: DenseMatrix, b1: DenseVector, w2: DenseMatrix, b2: DenseVector) -> Result<Self> {
        let hidden = w1.rows();
        let expect = |expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(SalError::DimensionMismatch { expected, actual })
            }
        };
        expect(hidden, b1.len())?;
        expect(hidden, w2.cols())?;
        expect(w2.rows(), b2.len())?;
        Ok(MlpParams {
            w1,
            b1,
            w2,
            b2,
            activation: Activation::default(),
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        MlpParams {
            w1: DenseMatrix::zeros(hidden_dim, input_dim),
            b1: DenseVector::zeros(hidden_dim),
            w2: DenseMatrix::zeros(num_classes, hidden_dim),
            b2: DenseVector::zeros(num_classes),
            activation: Activation::default(),
        }
    }

    /// Every weight and bias uniform in `±1/sqrt(fan_in)` of its layer.
    pub fn init_uniform(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let mut p = MlpParams::zeros(input_dim, hidden_dim, num_classes);
        let a1 = 1.0 / (input_dim as f64).sqrt();
        let a2 = 1.0 / (hidden_dim as f64).sqrt();
        for v in p.w1.as_mut_slice().iter_mut().chain(p.b1.as_mut_slice()) {
            *v = rng.uniform_range(-a1, a1);
        }
        for v in p.w2.as_mut_slice().iter_mut().chain(p.b2.as_mut_slice()) {
            *v = rng.uniform_range(-a2, a2);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams::zeros(self.input_dim(), self.hidden_dim(), self.num_classes())
            .with_activation(self.activation)
    }

    pub fn param_count(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    /// Blocks in flattening order `W1, b1, W2, b2`.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    /// Inverse of [`flatten`](Self::flatten) for the shape of `self`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(SalError::DimensionMismatch {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut rest = flat;
        for block in out.blocks_mut() {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        Ok(out)
    }

    /// Offset of the `W2` block inside [`flatten`](Self::flatten).
    pub fn last_layer_offset(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len()
    }

    /// `self += alpha * other`; shapes must agree.
    pub fn axpy(&mut self, alpha: f64, other: &MlpParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for block in self.blocks_mut() {
            for v in block {
                *v *= alpha;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

pub fn forward(p: &MlpParams, x: &[f64]) -> Result<Forward> {
    let pre = p.w1.matvec(x)?;
    let (penult, act_grad): (Vec<f64>, Vec<f64>) = pre
        .iter()
        .zip(p.b1.iter())
        .map(|(a, b)| p.activation.eval(a + b))
        .unzip();
    let penult = DenseVector::new(penult);
    let mut logits = p.w2.matvec(&penult)?;
    logits.axpy(1.0, &p.b2);
    Ok(Forward {
        logits,
        penult,
        act_grad: DenseVector::new(act_grad),
    })
}

/// Argmax of the logits, lowest index on ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn predict_label(p: &MlpParams, x: &[f64]) -> Result<usize> {
    Ok(argmax(&forward(p, x)?.logits))
}

/// Backpropagate upstream gradients on the logits (`dlogits`) and,
/// optionally, directly on the penultimate features (`dpenult`) into
/// gradients of every weight.
pub fn backward(
    p: &MlpParams,
    x: &[f64],
    fw: &Forward,
    dlogits: &[f64],
    dpenult: Option<&[f64]>,
) -> MlpParams {
    let hidden = p.hidden_dim();
    let k = p.num_classes();
    let d = p.input_dim();
    let mut g = p.zeros_like();

    g.b2.as_mut_slice().copy_from_slice(dlogits);
    let mut dh = vec![0.0; hidden];
    for c in 0..k {
        let dz = dlogits[c];
        let w2_row = p.w2.row(c);
        let gw2_row = g.w2.row_mut(c);
        for j in 0..hidden {
            gw2_row[j] = dz * fw.penult[j];
            dh[j] += dz * w2_row[j];
        }
    }
    if let Some(extra) = dpenult {
        for (a, b) in dh.iter_mut().zip(extra) {
            *a += b;
        }
    }
    for j in 0..hidden {
        let da = dh[j] * fw.act_grad[j];
        g.b1.as_mut_slice()[j] = da;
        let row = g.w1.row_mut(j);
        for i in 0..d {
            row[i] = da * x[i];
        }
    }
    g
}

/// Cross-entropy loss and its gradient with respect to every weight.
pub fn xent_grad_full(p: &MlpParams, x: &[f64], y: usize) -> Result<(f64, MlpParams)> {
    let fw = forward(p, x)?;
    let loss = xent_loss(&fw.logits, y);
    let dz = xent_grad_logits(&fw.logits, y);
    Ok((loss, backward(p, x, &fw, &dz, None)))
}

/// Outer product `dz ⊗ h`, row-major `K x H`: the gradient of a loss
/// with logit gradient `dz` with respect to `W2`.
pub(crate) fn last_layer_outer(dz: &[f64], penult: &[f64]) -> DenseVector {
    dz.iter()
        .flat_map(|&a| penult.iter().map(move |&h| a * h))
        .collect()
}

/// Gradient of the cross-entropy with respect to `W2` only, flattened
/// row-major to length `K * H`.
pub fn grad_last_layer(p: &MlpParams, x: &[f64], y: usize) -> Result<DenseVector> {
    check_label(p, y)?;
    let fw = forward(p, x)?;
    let dz = xent_grad_logits(&fw.logits, y);
    Ok(last_layer_outer(&dz, &fw.penult))
}

/// Flattened full-network cross-entropy gradient (`W1, b1, W2, b2`).
pub fn grad_full_flat(p: &MlpParams, x: &[f64], y: usize) -> Result<DenseVector> {
    check_label(p, y)?;
    Ok(DenseVector::new(xent_grad_full(p, x, y)?.1.flatten()))
}

fn check_label(p: &MlpParams, y: usize) -> Result<()> {
    if y < p.num_classes() {
        Ok(())
    } else {
        Err(SalError::InvalidArgument(format!(
            "label {y} out of range for {} classes",
            p.num_classes()
        )))
    }
}

/// Binary OOD head `g(x) = <u, penult(x)> + c`; positive means ID.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryHead {
    pub u: DenseVector,
    pub c: f64,
}

impl BinaryHead {
    pub fn zeros(hidden_dim: usize) -> Self {
        BinaryHead {
            u: DenseVector::zeros(hidden_dim),
            c: 0.0,
        }
    }

    pub fn score_penult(&self, penult: &[f64]) -> f64 {
        crate::numerics::dot(&self.u, penult).expect("head/penultimate width mismatch") + self.c
    }
}

pub fn binary_score(p: &MlpParams, head: &BinaryHead, x: &[f64]) -> Result<f64> {
    let fw = forward(p, x)?;
    if head.u.len() != fw.penult.len() {
        return Err(SalError::DimensionMismatch {
            expected: fw.penult.len(),
            actual: head.u.len(),
        });
    }
    Ok(head.score_penult(&fw.penult))
}
