//! Test-time detection metrics. All scores are ID-ness scores: higher
//! means more in-distribution.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::datagen::LabeledSet;
use crate::filter::Scorer;
use crate::model::{binary_score, predict_label, BinaryHead, MlpParams};
use crate::numerics::DenseVector;
use crate::{Result, SalError};

fn require_nonempty(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.is_empty() {
        Err(SalError::EmptyInput(what))
    } else {
        Ok(())
    }
}

/// False positive rate on OOD at the largest observed ID score `λ` that
/// still keeps at least `tpr_level` of ID scores strictly above it.
/// Returns `(fpr, λ)`. When no observed score qualifies, `λ` is the float
/// just below the smallest ID score.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_level: f64) -> Result<(f64, f64)> {
    require_nonempty(id_scores, "ID scores")?;
    require_nonempty(ood_scores, "OOD scores")?;
    if !(tpr_level > 0.0 && tpr_level <= 1.0) {
        return Err(SalError::InvalidArgument(format!(
            "TPR level must lie in (0, 1], got {tpr_level}"
        )));
    }
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    let mut lambda = sorted[0].next_down();
    // Walk distinct values from the top; the first that passes is the largest.
    let mut end = n;
    while end > 0 {
        let v = sorted[end - 1];
        let above = n - end;
        if above as f64 / n as f64 >= tpr_level {
            lambda = v;
            break;
        }
        while end > 0 && sorted[end - 1] == v {
            end -= 1;
        }
    }
    let fp = ood_scores.iter().filter(|&&s| s > lambda).count();
    Ok((fp as f64 / ood_scores.len() as f64, lambda))
}

/// Mann–Whitney AUROC with ties counted one half, via midrank summation.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    require_nonempty(id_scores, "ID scores")?;
    require_nonempty(ood_scores, "OOD scores")?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut id_rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        let ids = all[i..j].iter().filter(|e| e.1).count();
        id_rank_sum += mid * ids as f64;
        i = j;
    }
    let n = id_scores.len() as f64;
    let m = ood_scores.len() as f64;
    Ok((id_rank_sum - n * (n + 1.0) / 2.0) / (n * m))
}

pub fn id_accuracy(p: &MlpParams, s_test: &LabeledSet) -> Result<f64> {
    if s_test.is_empty() {
        return Err(SalError::EmptyInput("ID test set"));
    }
    let mut correct = 0usize;
    for (x, y) in s_test.iter() {
        if predict_label(p, x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / s_test.len() as f64)
}

pub const TPR_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub fpr_at_95tpr: f64,
    pub auroc: f64,
    pub id_accuracy: f64,
    pub err_in: Option<f64>,
    pub err_out: Option<f64>,
    pub contamination: Option<f64>,
    pub lambda: f64,
}

impl MetricsReport {
    pub fn from_scores(id_scores: &[f64], ood_scores: &[f64], id_accuracy: f64) -> Result<Self> {
        let (fpr, lambda) = fpr_at_tpr(id_scores, ood_scores, TPR_LEVEL)?;
        Ok(MetricsReport {
            fpr_at_95tpr: fpr,
            auroc: auroc(id_scores, ood_scores)?,
            id_accuracy,
            err_in: None,
            err_out: None,
            contamination: None,
            lambda,
        })
    }

    pub fn with_filter_errors(mut self, e: Option<crate::filter::FilterErrors>) -> Self {
        if let Some(e) = e {
            self.err_in = Some(e.err_in);
            self.err_out = Some(e.err_out);
            self.contamination = Some(e.contamination);
        }
        self
    }

    /// `key: value` lines; absent optionals are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: f64| writeln!(out, "{k}: {v}").unwrap();
        kv("fpr_at_95tpr", self.fpr_at_95tpr);
        kv("auroc", self.auroc);
        kv("id_accuracy", self.id_accuracy);
        for (k, v) in [
            ("err_in", self.err_in),
            ("err_out", self.err_out),
            ("contamination", self.contamination),
        ] {
            if let Some(v) = v {
                kv(k, v);
            }
        }
        kv("lambda", self.lambda);
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let kv = parse_key_values(path, text)?;
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| *v);
        let need = |k: &str| {
            get(k).ok_or_else(|| SalError::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("missing `{k}`"),
            })
        };
        Ok(MetricsReport {
            fpr_at_95tpr: need("fpr_at_95tpr")?,
            auroc: need("auroc")?,
            id_accuracy: need("id_accuracy")?,
            err_in: get("err_in"),
            err_out: get("err_out"),
            contamination: get("contamination"),
            lambda: need("lambda")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| SalError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(SalError::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| SalError::io(path, e))?;
        MetricsReport::from_text(path, &text)
    }
}

/// Parses `key: number` lines, ignoring blanks.
pub fn parse_key_values(path: &Path, text: &str) -> Result<Vec<(String, f64)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |msg: String| SalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = l.split_once(':').ok_or_else(|| err("expected `key: value`".into()))?;
            let v: f64 = v.trim().parse().map_err(|_| err(format!("bad number `{}`", v.trim())))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Binary-head scores on ID and OOD test points.
pub fn evaluate_classifier(
    p: &MlpParams,
    head: &BinaryHead,
    test_id: &LabeledSet,
    test_ood: &[DenseVector],
) -> Result<MetricsReport> {
    let id: Vec<f64> = test_id
        .points()
        .iter()
        .map(|x| binary_score(p, head, x))
        .collect::<Result<_>>()?;
    let ood: Vec<f64> = test_ood
        .iter()
        .map(|x| binary_score(p, head, x))
        .collect::<Result<_>>()?;
    MetricsReport::from_scores(&id, &ood, id_accuracy(p, test_id)?)
}

/// Uses the filtering score itself as the detector, negated into an
/// ID-ness score.
pub fn posthoc_eval(
    p: &MlpParams,
    scorer: &Scorer,
    test_id: &LabeledSet,
    test_ood: &[DenseVector],
) -> Result<MetricsReport> {
    let neg = |v: Vec<f64>| v.into_iter().map(|t| -t).collect::<Vec<_>>();
    let id = neg(scorer.score(p, test_id.points())?);
    let ood = neg(scorer.score(p, test_ood)?);
    MetricsReport::from_scores(&id, &ood, id_accuracy(p, test_id)?)
}
