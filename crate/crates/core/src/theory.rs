//! Measurable quantities from the error analysis: the gradient-based
//! discrepancy between two samples, the discrepancy condition, and the
//! main-error diagnostics when the non-estimable constants are supplied.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::datagen::mix_huber;
use crate::model::{grad_last_layer, predict_label, MlpParams};
use crate::numerics::{l2_norm, DenseVector, SeededRng};
use crate::{Result, SalError};

/// Mean last-layer gradient at the model's own predictions.
fn mean_predicted_gradient(p: &MlpParams, sample: &[DenseVector], what: &'static str) -> Result<DenseVector> {
    if sample.is_empty() {
        return Err(SalError::EmptyInput(what));
    }
    let mut acc = DenseVector::zeros(p.num_classes() * p.hidden_dim());
    for x in sample {
        let y = predict_label(p, x)?;
        acc.axpy(1.0, &grad_last_layer(p, x, y)?);
    }
    acc.scale(1.0 / sample.len() as f64);
    Ok(acc)
}

/// `|| mean_P grad(x, y_hat) - mean_Q grad(x, y_hat) ||`.
pub fn grad_discrepancy(p: &MlpParams, sample_p: &[DenseVector], sample_q: &[DenseVector]) -> Result<f64> {
    let a = mean_predicted_gradient(p, sample_p, "first sample")?;
    let b = mean_predicted_gradient(p, sample_q, "second sample")?;
    Ok(l2_norm(&a.sub(&b)?))
}

/// Right-hand side `1.011 sqrt(pi) [+ 2.011 sqrt(8 beta1 R)]` and whether
/// `zeta` reaches it. The risk term is dropped unless both constants are given.
pub fn condition_check(zeta: f64, pi: f64, r_in_star: Option<f64>, beta1: Option<f64>) -> (f64, bool) {
    let mut rhs = 1.011 * pi.sqrt();
    if let (Some(r), Some(b)) = (r_in_star, beta1) {
        rhs += 2.011 * (8.0 * b * r).sqrt();
    }
    (rhs, zeta >= rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1 {
    pub delta_zeta_eta: f64,
    pub delta_t: f64,
}

/// `Delta = 0.98 eta^2 zeta^2 - 8 beta1 R` and
/// `delta(T) = max(0, 1 - Delta / pi) / (1 - T / M')`.
pub fn theorem1_diagnostics(
    zeta: f64,
    pi: f64,
    eta: f64,
    beta1: f64,
    r_in_star: f64,
    t: f64,
    m_prime: f64,
) -> Result<Theorem1> {
    if !(t > 0.0 && t < m_prime) {
        return Err(SalError::InvalidArgument(format!(
            "threshold {t} must lie strictly between 0 and the score bound {m_prime}"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(SalError::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(SalError::InvalidArgument(format!("pi must lie in (0, 1], got {pi}")));
    }
    let delta_zeta_eta = 0.98 * eta * eta * zeta * zeta - 8.0 * beta1 * r_in_star;
    let delta_t = (1.0 - delta_zeta_eta / pi).max(0.0) / (1.0 - t / m_prime);
    Ok(Theorem1 {
        delta_zeta_eta,
        delta_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaRow {
    pub pi: f64,
    pub zeta_hat: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub beta1: f64,
    pub eta: f64,
    pub r_in_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyReport {
    pub rows: Vec<ZetaRow>,
    /// Constants and main-error diagnostics, present only when supplied.
    pub theorem1: Option<(TheoryConstants, Theorem1)>,
}

impl DiscrepancyReport {
    pub fn is_non_decreasing(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.pi.total_cmp(&b.pi));
        rows.windows(2).all(|w| w[1].zeta_hat >= w[0].zeta_hat)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pi,zeta_hat,rhs,holds\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.pi, r.zeta_hat, r.rhs, r.holds).unwrap();
        }
        out
    }

    pub fn theorem1_text(&self) -> Option<String> {
        self.theorem1.map(|(c, t)| {
            format!(
                "beta1: {}\neta: {}\nr_in_star: {}\ndelta_zeta_eta: {}\ndelta_t: {}\n",
                c.beta1, c.eta, c.r_in_star, t.delta_zeta_eta, t.delta_t
            )
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| SalError::io(path, e))
    }
}

/// Discrepancy between the ID sample and a fresh Huber mixture of size `m`
/// at every `pi`. Each mixture is drawn from a stream keyed by the value of
/// `pi`, so repeated or reordered entries give the same rows.
pub fn zeta_sweep(
    p: &MlpParams,
    id_sample: &[DenseVector],
    inlier_pool: &[DenseVector],
    outlier_pool: &[DenseVector],
    pis: &[f64],
    m: usize,
    seed: u64,
) -> Result<DiscrepancyReport> {
    let id_mean = mean_predicted_gradient(p, id_sample, "ID sample")?;
    let mut rows = Vec::with_capacity(pis.len());
    for &pi in pis {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(SalError::InvalidArgument(format!("pi must lie in (0, 1], got {pi}")));
        }
        let mut rng = SeededRng::for_stage(seed, &format!("theory.mix.{:016x}", pi.to_bits()));
        let wild = mix_huber(inlier_pool, outlier_pool, pi, m, &mut rng)?;
        let wild_mean = mean_predicted_gradient(p, wild.points(), "mixture")?;
        let zeta_hat = l2_norm(&id_mean.sub(&wild_mean)?);
        let (rhs, holds) = condition_check(zeta_hat, pi, None, None);
        rows.push(ZetaRow {
            pi,
            zeta_hat,
            rhs,
            holds,
        });
    }
    Ok(DiscrepancyReport { rows, theorem1: None })
}
