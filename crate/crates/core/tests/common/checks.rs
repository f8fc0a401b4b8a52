//! Finite-difference gradient checks shared by the gradient suite and the
//! acceptance run. Each returns the worst relative error over every
//! coordinate of every case.

use super::{central_diff, rel_err};
use sal_core::filter::{kl_uniform_gradient, GradientScope};
use sal_core::model::{
    Activation,
    forward, grad_full_flat, grad_last_layer, kl_uniform_loss, sigmoid_loss, xent_loss, BinaryHead,
    BinaryLabel, MlpParams,
};
use sal_core::numerics::{DenseVector, SeededRng};
use sal_core::oodtrain::sample_joint_gradient;

pub const FD_STEP: f64 = 1e-5;

pub struct Case {
    pub params: MlpParams,
    pub head: BinaryHead,
    pub x: Vec<f64>,
    pub y: usize,
}

pub fn random_case(rng: &mut SeededRng) -> Case {
    let d = 1 + rng.index(4);
    let h = 2 + rng.index(7);
    let k = 2 + rng.index(4);
    let activation = if rng.index(2) == 0 { Activation::Tanh } else { Activation::Sin };
    let mut params = MlpParams::init_uniform(d, h, k, rng).with_activation(activation);
    params.scale(rng.uniform_range(0.5, 3.0));
    let head = BinaryHead {
        u: (0..h).map(|_| rng.normal(0.0, 1.0)).collect(),
        c: rng.normal(0.0, 1.0),
    };
    let x = (0..d).map(|_| rng.normal(0.0, 2.0)).collect();
    Case {
        params,
        head,
        x,
        y: rng.index(k),
    }
}

/// A central difference on a loss of size `L` carries roundoff near
/// `eps * L / FD_STEP`, about `2e-11 L`. The floor `1e-6 max(1, L)` keeps that
/// noise below 1e-4 relative on coordinates whose gradient nearly vanishes.
fn worst(analytic: &[f64], f: &dyn Fn(&[f64]) -> f64, theta: &[f64]) -> f64 {
    assert_eq!(analytic.len(), theta.len());
    let floor = 1e-6 * f(theta).abs().max(1.0);
    (0..theta.len())
        .map(|i| rel_err(analytic[i], central_diff(f, theta, i, FD_STEP), floor))
        .fold(0.0, f64::max)
}

/// Cross-entropy with respect to every weight.
pub fn xent_full(cases: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    (0..cases)
        .map(|_| {
            let c = random_case(&mut rng);
            let theta = c.params.flatten();
            let f = |t: &[f64]| xent_loss(&forward(&c.params.with_flat(t).unwrap(), &c.x).unwrap().logits, c.y);
            worst(&grad_full_flat(&c.params, &c.x, c.y).unwrap(), &f, &theta)
        })
        .fold(0.0, f64::max)
}

/// Last-layer gradient: against finite differences over `W2`, and as an
/// exact slice of the full gradient (any mismatch is reported as error 1).
pub fn last_layer_slice(cases: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    (0..cases)
        .map(|_| {
            let c = random_case(&mut rng);
            let g = grad_last_layer(&c.params, &c.x, c.y).unwrap();
            let full = grad_full_flat(&c.params, &c.x, c.y).unwrap();
            let off = c.params.last_layer_offset();
            if full[off..off + g.len()] != g[..] {
                return 1.0;
            }
            let theta = c.params.flatten();
            let w2 = theta[off..off + g.len()].to_vec();
            let f = |t: &[f64]| {
                let mut all = theta.clone();
                all[off..off + t.len()].copy_from_slice(t);
                xent_loss(&forward(&c.params.with_flat(&all).unwrap(), &c.x).unwrap().logits, c.y)
            };
            worst(&g, &f, &w2)
        })
        .fold(0.0, f64::max)
}

/// Joint per-sample objective (cross-entropy plus weighted sigmoid loss)
/// with respect to backbone and head, for both binary labels.
pub fn sigmoid_joint(cases: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    (0..cases)
        .map(|i| {
            let c = random_case(&mut rng);
            let weight = rng.uniform_range(0.5, 10.0);
            let label = if i % 2 == 0 { Some(c.y) } else { None };
            let (_, g, gh) = sample_joint_gradient(&c.params, &c.head, &c.x, label, weight).unwrap();
            let np = c.params.param_count();
            let mut theta = c.params.flatten();
            theta.extend_from_slice(&c.head.u);
            theta.push(c.head.c);
            let mut analytic = g.flatten();
            analytic.extend_from_slice(&gh.u);
            analytic.push(gh.c);
            let f = |t: &[f64]| {
                let p = c.params.with_flat(&t[..np]).unwrap();
                let head = BinaryHead {
                    u: DenseVector::new(t[np..t.len() - 1].to_vec()),
                    c: t[t.len() - 1],
                };
                let fw = forward(&p, &c.x).unwrap();
                let s = head.score_penult(&fw.penult);
                match label {
                    Some(y) => xent_loss(&fw.logits, y) + weight * sigmoid_loss(s, BinaryLabel::Positive),
                    None => weight * sigmoid_loss(s, BinaryLabel::Negative),
                }
            };
            worst(&analytic, &f, &theta)
        })
        .fold(0.0, f64::max)
}

/// KL(uniform || softmax) behind the GradNorm score, full network; the
/// last-layer variant must be the matching slice.
pub fn gradnorm_kl(cases: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    (0..cases)
        .map(|_| {
            let c = random_case(&mut rng);
            let full = kl_uniform_gradient(&c.params, &c.x, GradientScope::Full).unwrap();
            let last = kl_uniform_gradient(&c.params, &c.x, GradientScope::LastLayer).unwrap();
            let off = c.params.last_layer_offset();
            if full[off..off + last.len()] != last[..] {
                return 1.0;
            }
            let f = |t: &[f64]| kl_uniform_loss(&forward(&c.params.with_flat(t).unwrap(), &c.x).unwrap().logits);
            worst(&full, &f, &c.params.flatten())
        })
        .fold(0.0, f64::max)
}

/// Random small score sets; every other instance draws from a handful of
/// integers so ties within and across the two sets are common.
pub fn metric_instance(rng: &mut SeededRng, i: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let n = 1 + rng.index(50);
    let m = 1 + rng.index(50);
    let draw = |rng: &mut SeededRng| {
        if i.is_multiple_of(2) {
            rng.index(6) as f64
        } else {
            rng.normal(0.0, 1.0)
        }
    };
    let id: Vec<f64> = (0..n).map(|_| draw(rng) + 0.5).collect();
    let ood: Vec<f64> = (0..m).map(|_| draw(rng)).collect();
    let tpr = [0.5, 0.9, 0.95, 1.0, rng.uniform_range(0.01, 1.0)][i % 5];
    (id, ood, tpr)
}

/// Number of instances where either metric differs from the pairwise oracle.
pub fn metric_mismatches(instances: usize, seed: u64) -> usize {
    use sal_core::eval::{auroc, fpr_at_tpr};
    let mut rng = SeededRng::new(seed);
    (0..instances)
        .filter(|&i| {
            let (id, ood, tpr) = metric_instance(&mut rng, i);
            let a = auroc(&id, &ood).unwrap();
            let f = fpr_at_tpr(&id, &ood, tpr).unwrap();
            a != super::brute_auroc(&id, &ood) || f != super::brute_fpr_at_tpr(&id, &ood, tpr)
        })
        .count()
}
