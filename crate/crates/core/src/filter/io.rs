//! Text forms of the fitted scorer and of per-sample score dumps.
//!
//! Scorer file, one record per line:
//!
//! ```text
//! kind sal|gradnorm
//! scope last_layer|full
//! mode global|per_class <K>
//! ref <class|all> <len> <values>
//! basis <class|all> <len> <values>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GradientScope, ProjectionBasis, ReferenceGradient, Scorer};
use crate::datagen::Membership;
use crate::numerics::DenseVector;
use crate::{Result, SalError};

fn scope_str(s: GradientScope) -> &'static str {
    match s {
        GradientScope::LastLayer => "last_layer",
        GradientScope::Full => "full",
    }
}

fn push_vec(out: &mut String, tag: &str, class: Option<usize>, v: &[f64]) {
    let c = class.map_or_else(|| "all".to_string(), |k| k.to_string());
    write!(out, "{tag} {c} {}", v.len()).unwrap();
    for x in v {
        write!(out, " {x}").unwrap();
    }
    out.push('\n');
}

pub fn scorer_to_text(s: &Scorer) -> String {
    let mut out = String::new();
    match s {
        Scorer::GradNorm { scope } => {
            writeln!(out, "kind gradnorm\nscope {}", scope_str(*scope)).unwrap();
        }
        Scorer::Projection {
            scope,
            reference,
            basis,
        } => {
            writeln!(out, "kind sal\nscope {}", scope_str(*scope)).unwrap();
            match (reference, basis) {
                (ReferenceGradient::Global(r), ProjectionBasis::Global(vs)) => {
                    out.push_str("mode global\n");
                    push_vec(&mut out, "ref", None, r);
                    for v in vs {
                        push_vec(&mut out, "basis", None, v);
                    }
                }
                (ReferenceGradient::PerClass(rs), ProjectionBasis::PerClass(per)) => {
                    writeln!(out, "mode per_class {}", rs.len()).unwrap();
                    for (k, r) in rs.iter().enumerate() {
                        push_vec(&mut out, "ref", Some(k), r);
                    }
                    for (k, vs) in per.iter().enumerate() {
                        for v in vs {
                            push_vec(&mut out, "basis", Some(k), v);
                        }
                    }
                }
                _ => unreachable!("fit_scorer keeps reference and basis in the same mode"),
            }
        }
    }
    out
}

pub fn scorer_from_text(path: &Path, text: &str) -> Result<Scorer> {
    let err = |line: usize, msg: String| SalError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut kind = None;
    let mut scope = None;
    let mut classes: Option<Option<usize>> = None;
    let mut refs: Vec<(Option<usize>, DenseVector)> = Vec::new();
    let mut bases: Vec<(Option<usize>, DenseVector)> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut it = line.split_ascii_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "kind" => kind = it.next().map(str::to_owned),
            "scope" => {
                scope = Some(match it.next() {
                    Some("last_layer") => GradientScope::LastLayer,
                    Some("full") => GradientScope::Full,
                    other => return Err(err(ln, format!("bad scope {other:?}"))),
                })
            }
            "mode" => {
                classes = Some(match (it.next(), it.next()) {
                    (Some("global"), None) => None,
                    (Some("per_class"), Some(k)) => {
                        Some(k.parse().map_err(|_| err(ln, format!("bad class count `{k}`")))?)
                    }
                    other => return Err(err(ln, format!("bad mode {other:?}"))),
                })
            }
            "ref" | "basis" => {
                let class = match it.next() {
                    Some("all") => None,
                    Some(k) => Some(k.parse().map_err(|_| err(ln, format!("bad class `{k}`")))?),
                    None => return Err(err(ln, "missing class".into())),
                };
                let len: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(ln, "missing length".into()))?;
                let vals = it
                    .map(|s| s.parse::<f64>().map_err(|_| err(ln, format!("bad value `{s}`"))))
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != len {
                    return Err(err(ln, format!("expected {len} values, found {}", vals.len())));
                }
                let target = if tag == "ref" { &mut refs } else { &mut bases };
                target.push((class, DenseVector::new(vals)));
            }
            other => return Err(err(ln, format!("unknown record `{other}`"))),
        }
    }

    let scope = scope.ok_or_else(|| err(0, "missing scope".into()))?;
    match kind.as_deref() {
        Some("gradnorm") => Ok(Scorer::GradNorm { scope }),
        Some("sal") => {
            let mode = classes.ok_or_else(|| err(0, "missing mode".into()))?;
            let (reference, basis) = match mode {
                None => {
                    let r = refs
                        .into_iter()
                        .next()
                        .ok_or_else(|| err(0, "missing reference".into()))?
                        .1;
                    let vs = bases.into_iter().map(|(_, v)| v).collect();
                    (ReferenceGradient::Global(r), ProjectionBasis::Global(vs))
                }
                Some(k) => {
                    let mut rs = vec![None; k];
                    let mut per = vec![Vec::new(); k];
                    for (c, v) in refs {
                        let c = c.filter(|&c| c < k).ok_or_else(|| err(0, "bad reference class".into()))?;
                        rs[c] = Some(v);
                    }
                    for (c, v) in bases {
                        let c = c.filter(|&c| c < k).ok_or_else(|| err(0, "bad basis class".into()))?;
                        per[c].push(v);
                    }
                    let rs = rs
                        .into_iter()
                        .enumerate()
                        .map(|(c, r)| r.ok_or_else(|| err(0, format!("missing reference for class {c}"))))
                        .collect::<Result<Vec<_>>>()?;
                    (ReferenceGradient::PerClass(rs), ProjectionBasis::PerClass(per))
                }
            };
            Ok(Scorer::Projection {
                scope,
                reference,
                basis,
            })
        }
        other => Err(err(0, format!("bad kind {other:?}"))),
    }
}

pub fn save_scorer(path: &Path, s: &Scorer) -> Result<()> {
    fs::write(path, scorer_to_text(s)).map_err(|e| SalError::io(path, e))
}

pub fn load_scorer(path: &Path) -> Result<Scorer> {
    if !path.exists() {
        return Err(SalError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| SalError::io(path, e))?;
    scorer_from_text(path, &text)
}

/// CSV `index,score[,truth]` for density plots.
pub fn write_score_dump(path: &Path, scores: &[f64], truth: Option<&[Membership]>) -> Result<()> {
    let mut out = String::from(if truth.is_some() {
        "index,score,truth\n"
    } else {
        "index,score\n"
    });
    for (i, s) in scores.iter().enumerate() {
        match truth {
            Some(t) => writeln!(out, "{i},{s},{}", crate::datagen::membership_label(t[i])).unwrap(),
            None => writeln!(out, "{i},{s}").unwrap(),
        }
    }
    fs::write(path, out).map_err(|e| SalError::io(path, e))
}
