//! Joint training of the binary OOD head and the backbone: ID samples are
//! positives, filtered candidate outliers are negatives, and the ID
//! cross-entropy stays in the objective so the classifier keeps working.

use crate::datagen::LabeledSet;
use crate::erm::Sgd;
use crate::model::{
    backward, forward, sigmoid_loss, sigmoid_loss_grad, xent_grad_logits, xent_loss, BinaryHead,
    BinaryLabel, MlpParams,
};
use crate::numerics::{DenseVector, SeededRng};
use crate::{Result, SalError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// ID batch size; the candidate batch is sized in proportion.
    pub batch_size: usize,
    pub binary_loss_weight: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OodHyper {
    fn default() -> Self {
        OodHyper {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 128,
            binary_loss_weight: 10.0,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl OodHyper {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.learning_rate > 0.0) {
            return Err(("learning_rate", "must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(("batch_size", "must be at least 1".into()));
        }
        if !(self.binary_loss_weight > 0.0) {
            return Err(("binary_loss_weight", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(("momentum", "must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(("weight_decay", "must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodOutcome {
    pub params: MlpParams,
    pub head: BinaryHead,
    /// Joint objective over the full sets before the first step.
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// `mean xent(S_in) + w * (mean sigmoid(g, +1) over S_in + mean sigmoid(g, -1) over S_T)`.
pub fn joint_objective(
    p: &MlpParams,
    head: &BinaryHead,
    s_in: &LabeledSet,
    s_t: &[DenseVector],
    weight: f64,
) -> Result<f64> {
    if s_in.is_empty() {
        return Err(SalError::EmptyInput("ID training set"));
    }
    if s_t.is_empty() {
        return Err(SalError::NoCandidates);
    }
    let (mut xent, mut pos) = (0.0, 0.0);
    for (x, y) in s_in.iter() {
        let fw = forward(p, x)?;
        xent += xent_loss(&fw.logits, y);
        pos += sigmoid_loss(head.score_penult(&fw.penult), BinaryLabel::Positive);
    }
    let mut neg = 0.0;
    for x in s_t {
        let fw = forward(p, x)?;
        neg += sigmoid_loss(head.score_penult(&fw.penult), BinaryLabel::Negative);
    }
    let n = s_in.len() as f64;
    Ok(xent / n + weight * (pos / n + neg / s_t.len() as f64))
}

/// Loss and gradient of one sample's share of the joint objective:
/// `xent + w * sigmoid(g, +1)` for an ID sample (`label = Some`), or
/// `w * sigmoid(g, -1)` for a candidate outlier (`label = None`).
pub fn sample_joint_gradient(
    p: &MlpParams,
    head: &BinaryHead,
    x: &[f64],
    label: Option<usize>,
    weight: f64,
) -> Result<(f64, MlpParams, BinaryHead)> {
    let fw = forward(p, x)?;
    let s = head.score_penult(&fw.penult);
    let (bin, dz, xent) = match label {
        Some(y) if y >= p.num_classes() => {
            return Err(SalError::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                p.num_classes()
            )))
        }
        Some(y) => (BinaryLabel::Positive, xent_grad_logits(&fw.logits, y), xent_loss(&fw.logits, y)),
        None => (BinaryLabel::Negative, vec![0.0; p.num_classes()], 0.0),
    };
    let ds = weight * sigmoid_loss_grad(s, bin);
    let dpenult: Vec<f64> = head.u.iter().map(|u| ds * u).collect();
    let g = backward(p, x, &fw, &dz, Some(&dpenult));
    let gh = BinaryHead {
        u: fw.penult.iter().map(|h| ds * h).collect(),
        c: ds,
    };
    Ok((xent + weight * sigmoid_loss(s, bin), g, gh))
}

struct JointGrad {
    mlp: MlpParams,
    u: DenseVector,
    c: f64,
    loss: f64,
}

impl JointGrad {
    fn add(&mut self, scale: f64, (loss, g, gh): (f64, MlpParams, BinaryHead)) {
        self.loss += scale * loss;
        self.mlp.axpy(scale, &g);
        self.u.axpy(scale, &gh.u);
        self.c += scale * gh.c;
    }
}

/// Fine-tunes `pretrained` together with a zero-initialized binary head.
/// Each step draws one ID batch and one candidate batch, the latter sized
/// so both sets are swept once per epoch.
pub fn train_ood_classifier(
    s_in: &LabeledSet,
    s_t: &[DenseVector],
    pretrained: &MlpParams,
    h: &OodHyper,
    seed: u64,
) -> Result<OodOutcome> {
    if s_in.is_empty() {
        return Err(SalError::EmptyInput("ID training set"));
    }
    if s_t.is_empty() {
        return Err(SalError::NoCandidates);
    }
    if let Err((field, msg)) = h.validate() {
        return Err(SalError::Config {
            field: format!("ood.{field}"),
            msg,
        });
    }
    if let Some(x) = s_t.iter().find(|x| x.len() != pretrained.input_dim()) {
        return Err(SalError::DimensionMismatch {
            expected: pretrained.input_dim(),
            actual: x.len(),
        });
    }

    let mut params = pretrained.clone();
    let mut head = BinaryHead::zeros(params.hidden_dim());
    let w = h.binary_loss_weight;
    let initial_objective = joint_objective(&params, &head, s_in, s_t, w)?;

    let batch_in = h.batch_size.min(s_in.len());
    let steps = s_in.len().div_ceil(batch_in);
    let batch_t = s_t.len().div_ceil(steps);

    let mut rng_in = SeededRng::for_stage(seed, "ood.shuffle.id");
    let mut rng_t = SeededRng::for_stage(seed, "ood.shuffle.candidates");
    let mut opt = Sgd::new(h.learning_rate, h.momentum, h.weight_decay);

    for epoch in 0..h.epochs {
        let order_in = rng_in.permutation(s_in.len());
        let order_t = rng_t.permutation(s_t.len());
        for step in 0..steps {
            let bi = &order_in[step * batch_in..((step + 1) * batch_in).min(s_in.len())];
            let lo = (step * batch_t) % s_t.len();
            let bt: Vec<usize> = (0..batch_t).map(|k| order_t[(lo + k) % s_t.len()]).collect();

            let mut acc = JointGrad {
                mlp: params.zeros_like(),
                u: DenseVector::zeros(head.u.len()),
                c: 0.0,
                loss: 0.0,
            };
            let si = 1.0 / bi.len() as f64;
            for &i in bi {
                let label = Some(s_in.labels()[i]);
                acc.add(si, sample_joint_gradient(&params, &head, &s_in.points()[i], label, w)?);
            }
            let st = 1.0 / bt.len() as f64;
            for &i in &bt {
                acc.add(st, sample_joint_gradient(&params, &head, &s_t[i], None, w)?);
            }
            if !acc.loss.is_finite() || !acc.mlp.is_finite() {
                return Err(SalError::NonFiniteLoss { epoch, step });
            }

            let [w1, b1, w2, b2] = params.blocks_mut();
            let c_grad = [acc.c];
            let mut c_slot = [head.c];
            let g = acc.mlp.blocks();
            opt.step(
                &mut [w1, b1, w2, b2, head.u.as_mut_slice(), &mut c_slot],
                &[g[0], g[1], g[2], g[3], &acc.u, &c_grad],
            );
            head.c = c_slot[0];
            if !params.is_finite() || !head.u.is_finite() || !head.c.is_finite() {
                return Err(SalError::NonFiniteLoss { epoch, step });
            }
        }
    }

    let final_objective = joint_objective(&params, &head, s_in, s_t, w)?;
    Ok(OodOutcome {
        params,
        head,
        initial_objective,
        final_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_gaussian_id;
    use crate::erm::{train_id_classifier, ErmHyper};
    use crate::model::binary_score;

    fn setup() -> (LabeledSet, Vec<DenseVector>, MlpParams) {
        let mut rng = SeededRng::new(5);
        let s_in = gen_gaussian_id(30, &mut rng);
        let s_t: Vec<DenseVector> = (0..20)
            .map(|_| DenseVector::new(vec![rng.normal(10.0, 0.5), rng.normal(1.15, 0.5)]))
            .collect();
        let h = ErmHyper {
            epochs: 20,
            batch_size: 16,
            hidden_dim: 8,
            ..ErmHyper::default()
        };
        let p = train_id_classifier(&s_in, &h, 1).unwrap().params;
        (s_in, s_t, p)
    }

    #[test]
    fn empty_candidates_rejected() {
        let (s_in, _, p) = setup();
        let err = train_ood_classifier(&s_in, &[], &p, &OodHyper::default(), 0).unwrap_err();
        assert!(matches!(err, SalError::NoCandidates));
    }

    #[test]
    fn zero_epochs_leaves_zero_head() {
        let (s_in, s_t, p) = setup();
        let h = OodHyper {
            epochs: 0,
            ..OodHyper::default()
        };
        let out = train_ood_classifier(&s_in, &s_t, &p, &h, 0).unwrap();
        assert_eq!(out.params, p);
        for x in s_in.points() {
            assert_eq!(binary_score(&out.params, &out.head, x).unwrap(), 0.0);
        }
        // zero head sits on the ln 2 plateau for both terms
        let expect = crate::erm::empirical_risk(&p, &s_in).unwrap() + 20.0 * std::f64::consts::LN_2;
        assert!((out.initial_objective - expect).abs() < 1e-12);
    }

    #[test]
    fn level_set_separates_after_training() {
        let (s_in, s_t, p) = setup();
        let h = OodHyper {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 16,
            ..OodHyper::default()
        };
        let out = train_ood_classifier(&s_in, &s_t, &p, &h, 2).unwrap();
        assert!(out.final_objective < out.initial_objective);
        let mean = |xs: &[DenseVector]| {
            xs.iter()
                .map(|x| binary_score(&out.params, &out.head, x).unwrap())
                .sum::<f64>()
                / xs.len() as f64
        };
        assert!(mean(s_in.points()) > 0.0);
        assert!(mean(&s_t) < 0.0);

        let again = train_ood_classifier(&s_in, &s_t, &p, &h, 2).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn divergence_is_reported() {
        let (s_in, s_t, p) = setup();
        let h = OodHyper {
            learning_rate: 1e300,
            epochs: 5,
            ..OodHyper::default()
        };
        let err = train_ood_classifier(&s_in, &s_t, &p, &h, 0).unwrap_err();
        assert!(matches!(err, SalError::NonFiniteLoss { .. }));
    }
}
