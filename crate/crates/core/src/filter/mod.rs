//! Gradient-projection filtering of wild data.
//!
//! Every sample is represented by its loss gradient at the model's own
//! predicted label, centered on the mean ID gradient. The top right
//! singular vector(s) of the stacked wild gradients give the projection
//! directions; a sample's score is its mean squared projection. The
//! threshold is a percentile of the same score on the labeled ID set, and
//! wild samples strictly above it form the candidate outlier set.

mod io;

pub use io::{load_scorer, save_scorer, write_score_dump};

use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledSet, Membership};
use crate::model::{
    backward, forward, grad_full_flat, grad_last_layer, kl_uniform_grad_logits, last_layer_outer,
    MlpParams,
};
use crate::numerics::{
    dot, l2_norm, percentile_threshold, top_singular_vectors, DenseMatrix, DenseVector, SeededRng,
    SvdOptions,
};
use crate::{Result, SalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    #[serde(rename = "sal")]
    SalProjection,
    #[serde(rename = "gradnorm")]
    GradNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScope {
    /// Gradient with respect to the output weight matrix only.
    LastLayer,
    /// Gradient with respect to every weight and bias.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Fraction of ID scores that must fall at or below the threshold.
    pub percentile: f64,
    pub class_conditional: bool,
    pub num_vectors: usize,
    pub score_kind: ScoreKind,
    pub gradient_scope: GradientScope,
    pub svd_tol: f64,
    pub svd_max_iter: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            percentile: 0.95,
            class_conditional: false,
            num_vectors: 1,
            score_kind: ScoreKind::SalProjection,
            gradient_scope: GradientScope::LastLayer,
            svd_tol: SvdOptions::default().tol,
            svd_max_iter: SvdOptions::default().max_iter,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return Err(("percentile", format!("must lie in (0, 1], got {}", self.percentile)));
        }
        if self.num_vectors == 0 {
            return Err(("num_vectors", "must be at least 1".into()));
        }
        if !(self.svd_tol > 0.0) {
            return Err(("svd_tol", "must be positive".into()));
        }
        Ok(())
    }

    pub fn svd_options(&self) -> SvdOptions {
        SvdOptions {
            tol: self.svd_tol,
            max_iter: self.svd_max_iter,
        }
    }
}

/// Per-sample cross-entropy gradient at label `y` within `scope`.
pub fn sample_gradient(p: &MlpParams, x: &[f64], y: usize, scope: GradientScope) -> Result<DenseVector> {
    match scope {
        GradientScope::LastLayer => grad_last_layer(p, x, y),
        GradientScope::Full => grad_full_flat(p, x, y),
    }
}

/// Mean ID gradient, either over the whole set or per class.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceGradient {
    Global(DenseVector),
    PerClass(Vec<DenseVector>),
}

impl ReferenceGradient {
    pub fn for_class(&self, k: usize) -> &DenseVector {
        match self {
            ReferenceGradient::Global(g) => g,
            ReferenceGradient::PerClass(gs) => &gs[k],
        }
    }

    pub fn is_class_conditional(&self) -> bool {
        matches!(self, ReferenceGradient::PerClass(_))
    }

    pub fn dim(&self) -> usize {
        self.for_class(0).len()
    }
}

fn mean_of(vectors: impl Iterator<Item = Result<DenseVector>>, dim: usize) -> Result<(DenseVector, usize)> {
    let mut acc = DenseVector::zeros(dim);
    let mut n = 0usize;
    for g in vectors {
        acc.axpy(1.0, &g?);
        n += 1;
    }
    if n > 0 {
        acc.scale(1.0 / n as f64);
    }
    Ok((acc, n))
}

fn gradient_dim(p: &MlpParams, scope: GradientScope) -> usize {
    match scope {
        GradientScope::LastLayer => p.num_classes() * p.hidden_dim(),
        GradientScope::Full => p.param_count(),
    }
}

/// Mean gradient of the ID set at its true labels.
pub fn reference_gradient(
    p: &MlpParams,
    s_in: &LabeledSet,
    class_conditional: bool,
    scope: GradientScope,
) -> Result<ReferenceGradient> {
    if s_in.is_empty() {
        return Err(SalError::EmptyInput("ID set for reference gradient"));
    }
    let dim = gradient_dim(p, scope);
    if !class_conditional {
        let (g, _) = mean_of(s_in.iter().map(|(x, y)| sample_gradient(p, x, y, scope)), dim)?;
        return Ok(ReferenceGradient::Global(g));
    }
    (0..p.num_classes())
        .map(|k| {
            let (g, n) = mean_of(
                s_in.iter()
                    .filter(|&(_, y)| y == k)
                    .map(|(x, y)| sample_gradient(p, x, y, scope)),
                dim,
            )?;
            if n == 0 {
                Err(SalError::EmptyClass(k))
            } else {
                Ok(g)
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(ReferenceGradient::PerClass)
}

/// Centered gradients for one group of samples. In global mode a single
/// block holds every sample; in class-conditional mode there is one block
/// per predicted class, possibly with no members.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlock {
    pub class: Option<usize>,
    /// Indices into the scored point list, one per matrix row.
    pub members: Vec<usize>,
    pub matrix: DenseMatrix,
}

/// Rows are `grad(x_i, predicted_i) - reference(predicted_i)`. Labels come
/// from the model's predictions only.
pub fn gradient_matrix(
    p: &MlpParams,
    points: &[DenseVector],
    reference: &ReferenceGradient,
    scope: GradientScope,
) -> Result<Vec<GradientBlock>> {
    let dim = gradient_dim(p, scope);
    if reference.dim() != dim {
        return Err(SalError::DimensionMismatch {
            expected: dim,
            actual: reference.dim(),
        });
    }
    let k = p.num_classes();
    let per_class = reference.is_class_conditional();
    let groups = if per_class { k } else { 1 };
    let mut rows: Vec<Vec<DenseVector>> = vec![Vec::new(); groups];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (i, x) in points.iter().enumerate() {
        let fw = forward(p, x)?;
        let y = crate::model::argmax(&fw.logits);
        let g = sample_gradient(p, x, y, scope)?;
        let row = g.sub(reference.for_class(y))?;
        let group = if per_class { y } else { 0 };
        rows[group].push(row);
        members[group].push(i);
    }
    rows.into_iter()
        .zip(members)
        .enumerate()
        .map(|(c, (r, m))| {
            Ok(GradientBlock {
                class: per_class.then_some(c),
                members: m,
                matrix: DenseMatrix::from_rows(&r, dim)?,
            })
        })
        .collect()
}

const UNIT_TOL: f64 = 1e-6;

/// `τ_i = (1/c) Σ_j <row_i, v_j>²`.
pub fn filtering_scores(g: &DenseMatrix, vs: &[DenseVector]) -> Result<Vec<f64>> {
    for v in vs {
        if v.len() != g.cols() {
            return Err(SalError::DimensionMismatch {
                expected: g.cols(),
                actual: v.len(),
            });
        }
        let n = l2_norm(v);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(SalError::InvalidArgument(format!(
                "projection direction has norm {n}; normalize before scoring"
            )));
        }
    }
    if vs.is_empty() {
        return Ok(vec![0.0; g.rows()]);
    }
    let c = vs.len() as f64;
    Ok(g.iter_rows()
        .map(|r| {
            vs.iter()
                .map(|v| dot(r, v).map(|d| d * d).unwrap_or(0.0))
                .sum::<f64>()
                / c
        })
        .collect())
}

/// `∂ KL(uniform ‖ softmax) / ∂W` within `scope`.
pub fn kl_uniform_gradient(p: &MlpParams, x: &[f64], scope: GradientScope) -> Result<DenseVector> {
    let fw = forward(p, x)?;
    let dz = kl_uniform_grad_logits(&fw.logits);
    Ok(match scope {
        GradientScope::LastLayer => last_layer_outer(&dz, &fw.penult),
        GradientScope::Full => DenseVector::new(backward(p, x, &fw, &dz, None).flatten()),
    })
}

/// GradNorm score: the norm of [`kl_uniform_gradient`], per point.
pub fn gradnorm_scores(p: &MlpParams, points: &[DenseVector], scope: GradientScope) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|x| Ok(l2_norm(&kl_uniform_gradient(p, x, scope)?)))
        .collect()
}

/// Projection directions, matching the layout of [`ReferenceGradient`].
/// A class with no wild members has no directions and scores 0.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionBasis {
    Global(Vec<DenseVector>),
    PerClass(Vec<Vec<DenseVector>>),
}

/// Everything needed to score new points the way the wild set was scored.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Projection {
        scope: GradientScope,
        reference: ReferenceGradient,
        basis: ProjectionBasis,
    },
    GradNorm {
        scope: GradientScope,
    },
}

impl Scorer {
    pub fn score(&self, p: &MlpParams, points: &[DenseVector]) -> Result<Vec<f64>> {
        match self {
            Scorer::GradNorm { scope } => gradnorm_scores(p, points, *scope),
            Scorer::Projection {
                scope,
                reference,
                basis,
            } => {
                let blocks = gradient_matrix(p, points, reference, *scope)?;
                let mut out = vec![0.0; points.len()];
                for b in &blocks {
                    let vs: &[DenseVector] = match (basis, b.class) {
                        (ProjectionBasis::Global(vs), None) => vs,
                        (ProjectionBasis::PerClass(per), Some(k)) => &per[k],
                        _ => {
                            return Err(SalError::InvalidArgument(
                                "reference and basis disagree on class conditioning".into(),
                            ))
                        }
                    };
                    for (&i, s) in b.members.iter().zip(filtering_scores(&b.matrix, vs)?) {
                        out[i] = s;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Builds the scorer from the ID set and the wild points. Singular vectors
/// come from the wild gradient matrix only.
pub fn fit_scorer(
    p: &MlpParams,
    s_in: &LabeledSet,
    wild_points: &[DenseVector],
    cfg: &FilterConfig,
    rng: &mut SeededRng,
) -> Result<(Scorer, bool)> {
    let scope = cfg.gradient_scope;
    if cfg.score_kind == ScoreKind::GradNorm {
        return Ok((Scorer::GradNorm { scope }, true));
    }
    let reference = reference_gradient(p, s_in, cfg.class_conditional, scope)?;
    let blocks = gradient_matrix(p, wild_points, &reference, scope)?;
    let mut converged = true;
    let mut per_block = Vec::with_capacity(blocks.len());
    for b in &blocks {
        if b.matrix.rows() == 0 {
            per_block.push(Vec::new());
            continue;
        }
        let t = top_singular_vectors(&b.matrix, cfg.num_vectors, cfg.svd_options(), rng)?;
        converged &= t.all_converged();
        per_block.push(t.vectors);
    }
    let basis = if reference.is_class_conditional() {
        ProjectionBasis::PerClass(per_block)
    } else {
        ProjectionBasis::Global(per_block.pop().unwrap_or_default())
    };
    Ok((
        Scorer::Projection {
            scope,
            reference,
            basis,
        },
        converged,
    ))
}

/// Percentile of the scorer's values on the ID set (scored at predicted
/// labels, exactly like wild points).
pub fn select_threshold(p: &MlpParams, s_in: &LabeledSet, scorer: &Scorer, percentile: f64) -> Result<f64> {
    if s_in.is_empty() {
        return Err(SalError::EmptyInput("ID set for threshold"));
    }
    let id_scores = scorer.score(p, s_in.points())?;
    percentile_threshold(&id_scores, percentile)
}

/// Indices with score strictly above the threshold.
pub fn filter_candidates(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterErrors {
    /// Wild inliers flagged as candidates, over all wild inliers.
    pub err_in: f64,
    /// Wild outliers left out of the candidates, over all wild outliers.
    pub err_out: f64,
    /// Share of the candidate set that is actually inlier.
    pub contamination: f64,
}

/// Empty denominators give 0.
pub fn filtering_errors(candidates: &[usize], truth: &[Membership]) -> Result<FilterErrors> {
    let mut flagged = vec![false; truth.len()];
    for &i in candidates {
        *flagged.get_mut(i).ok_or_else(|| {
            SalError::InvalidArgument(format!("candidate index {i} beyond {} wild points", truth.len()))
        })? = true;
    }
    let (mut n_in, mut n_out, mut in_flagged, mut out_missed) = (0usize, 0usize, 0usize, 0usize);
    for (t, f) in truth.iter().zip(&flagged) {
        match (t, f) {
            (Membership::Inlier, true) => {
                n_in += 1;
                in_flagged += 1;
            }
            (Membership::Inlier, false) => n_in += 1,
            (Membership::Outlier, false) => {
                n_out += 1;
                out_missed += 1;
            }
            (Membership::Outlier, true) => n_out += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(FilterErrors {
        err_in: ratio(in_flagged, n_in),
        err_out: ratio(out_missed, n_out),
        contamination: ratio(in_flagged, candidates.len()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub scorer: Scorer,
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub candidates: Vec<usize>,
    /// False if any power iteration stopped at its iteration cap.
    pub svd_converged: bool,
    pub errors: Option<FilterErrors>,
}

impl FilterOutcome {
    pub fn attach_truth(&mut self, truth: &[Membership]) -> Result<()> {
        if truth.len() != self.scores.len() {
            return Err(SalError::DimensionMismatch {
                expected: self.scores.len(),
                actual: truth.len(),
            });
        }
        self.errors = Some(filtering_errors(&self.candidates, truth)?);
        Ok(())
    }
}

/// The whole filtering stage on unlabeled wild points.
pub fn run_filter(
    p: &MlpParams,
    s_in: &LabeledSet,
    wild_points: &[DenseVector],
    cfg: &FilterConfig,
    rng: &mut SeededRng,
) -> Result<FilterOutcome> {
    if let Err((field, msg)) = cfg.validate() {
        return Err(SalError::Config {
            field: format!("filter.{field}"),
            msg,
        });
    }
    let (scorer, svd_converged) = fit_scorer(p, s_in, wild_points, cfg, rng)?;
    let scores = scorer.score(p, wild_points)?;
    let threshold = select_threshold(p, s_in, &scorer, cfg.percentile)?;
    let candidates = filter_candidates(&scores, threshold);
    Ok(FilterOutcome {
        scorer,
        scores,
        threshold,
        candidates,
        svd_converged,
        errors: None,
    })
}

#[cfg(test)]
mod tests;
