//! Plain-text parameter dump. An `activation` line, then one tensor per line:
//!
//! ```text
//! activation tanh
//! w1 64 2 <128 row-major values>
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a reload is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Activation, BinaryHead, MlpParams};
use crate::numerics::{DenseMatrix, DenseVector};
use crate::{Result, SalError};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub mlp: MlpParams,
    pub head: Option<BinaryHead>,
}

impl ParamsFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.mlp;
        writeln!(out, "activation {}", p.activation.name()).unwrap();
        push(&mut out, "w1", p.w1.rows(), p.w1.cols(), p.w1.as_slice());
        push(&mut out, "b1", p.b1.len(), 1, &p.b1);
        push(&mut out, "w2", p.w2.rows(), p.w2.cols(), p.w2.as_slice());
        push(&mut out, "b2", p.b2.len(), 1, &p.b2);
        if let Some(h) = &self.head {
            push(&mut out, "u", h.u.len(), 1, &h.u);
            push(&mut out, "c", 1, 1, &[h.c]);
        }
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let mut w1 = None;
        let mut b1 = None;
        let mut w2 = None;
        let mut b2 = None;
        let mut u = None;
        let mut c = None;
        let mut activation = None;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("activation ") {
                let a = Activation::from_name(rest.trim())
                    .ok_or_else(|| perr(path, ln, format!("unknown activation `{}`", rest.trim())))?;
                activation = Some(a);
                continue;
            }
            let (name, rows, cols, vals) = parse_line(path, ln, line)?;
            let mat = || DenseMatrix::from_row_major(rows, cols, vals.clone());
            match name {
                "w1" => w1 = Some(mat()?),
                "w2" => w2 = Some(mat()?),
                "b1" => b1 = Some(DenseVector::new(vals)),
                "b2" => b2 = Some(DenseVector::new(vals)),
                "u" => u = Some(DenseVector::new(vals)),
                "c" => c = Some(vals[0]),
                other => return Err(perr(path, ln, format!("unknown tensor `{other}`"))),
            }
        }
        let missing = |n: &str| perr(path, 0, format!("missing tensor `{n}`"));
        let mlp = MlpParams::new(
            w1.ok_or_else(|| missing("w1"))?,
            b1.ok_or_else(|| missing("b1"))?,
            w2.ok_or_else(|| missing("w2"))?,
            b2.ok_or_else(|| missing("b2"))?,
        )?
        .with_activation(activation.ok_or_else(|| perr(path, 0, "missing `activation` line".into()))?);
        let head = match (u, c) {
            (Some(u), Some(c)) => Some(BinaryHead { u, c }),
            (None, None) => None,
            _ => return Err(missing("u/c")),
        };
        Ok(ParamsFile { mlp, head })
    }
}

fn push(out: &mut String, name: &str, rows: usize, cols: usize, vals: &[f64]) {
    write!(out, "{name} {rows} {cols}").unwrap();
    for v in vals {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn perr(path: &Path, line: usize, msg: String) -> SalError {
    SalError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    }
}

fn parse_line<'a>(path: &Path, ln: usize, line: &'a str) -> Result<(&'a str, usize, usize, Vec<f64>)> {
    let mut it = line.split_ascii_whitespace();
    let name = it.next().ok_or_else(|| perr(path, ln, "empty line".into()))?;
    let mut dim = || -> Result<usize> {
        it.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(path, ln, format!("bad shape for `{name}`")))
    };
    let rows = dim()?;
    let cols = dim()?;
    let vals = it
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(path, ln, format!("bad value `{s}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != rows * cols {
        return Err(perr(
            path,
            ln,
            format!("`{name}` declares {rows}x{cols} but has {} values", vals.len()),
        ));
    }
    Ok((name, rows, cols, vals))
}

pub fn save_params(path: &Path, file: &ParamsFile) -> Result<()> {
    fs::write(path, file.to_text()).map_err(|e| SalError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamsFile> {
    if !path.exists() {
        return Err(SalError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| SalError::io(path, e))?;
    ParamsFile::from_text(path, &text)
}
