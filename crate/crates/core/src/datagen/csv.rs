//! Comma-separated dumps: header `x1,...,xD[,label]`, one sample per line,
//! LF endings. Reals use the shortest representation that parses back to
//! the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LabeledSet, Membership};
use crate::numerics::DenseVector;
use crate::{Result, SalError};

fn header(dim: usize, labeled: bool) -> String {
    let mut h: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    if labeled {
        h.push("label".into());
    }
    h.join(",")
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| SalError::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(SalError::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| SalError::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> SalError {
    SalError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn save_labeled_csv(path: &Path, set: &LabeledSet) -> Result<()> {
    let mut out = header(set.dim(), true);
    out.push('\n');
    for (p, l) in set.iter() {
        for v in p.iter() {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{l}").unwrap();
    }
    write_file(path, &out)
}

pub fn save_points_csv(path: &Path, dim: usize, points: &[DenseVector]) -> Result<()> {
    let mut out = header(dim, false);
    out.push('\n');
    for p in points {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Parses the header and returns (dimension, has label column).
fn parse_header(path: &Path, line: Option<&str>) -> Result<(usize, bool)> {
    let line = line.ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    let labeled = cols.last() == Some(&"label");
    let features = if labeled { &cols[..cols.len() - 1] } else { &cols[..] };
    for (i, c) in features.iter().enumerate() {
        if *c != format!("x{}", i + 1) {
            return Err(parse_err(path, 1, format!("unexpected column `{c}`")));
        }
    }
    Ok((features.len(), labeled))
}

fn parse_real(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("not a number: `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value `{field}`")));
    }
    Ok(v)
}

fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Class count is taken as one past the largest label seen.
pub fn load_labeled_csv(path: &Path) -> Result<LabeledSet> {
    let text = read_file(path)?;
    let (dim, labeled) = parse_header(path, text.lines().next())?;
    if !labeled {
        return Err(parse_err(path, 1, "expected a `label` column"));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (ln, row) in rows(&text) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(
                path,
                ln,
                format!("expected {} columns, found {}", dim + 1, fields.len()),
            ));
        }
        let p = fields[..dim]
            .iter()
            .map(|f| parse_real(path, ln, f))
            .collect::<Result<Vec<f64>>>()?;
        let l: usize = fields[dim]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad label `{}`", fields[dim])))?;
        points.push(DenseVector::new(p));
        labels.push(l);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledSet::new(dim, k, points, labels))
}

/// Loads feature columns only; returns (dimension, points).
pub fn load_points_csv(path: &Path) -> Result<(usize, Vec<DenseVector>)> {
    let text = read_file(path)?;
    let (dim, labeled) = parse_header(path, text.lines().next())?;
    let width = dim + usize::from(labeled);
    let mut points = Vec::new();
    for (ln, row) in rows(&text) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                ln,
                format!("expected {width} columns, found {}", fields.len()),
            ));
        }
        let p = fields[..dim]
            .iter()
            .map(|f| parse_real(path, ln, f))
            .collect::<Result<Vec<f64>>>()?;
        points.push(DenseVector::new(p));
    }
    Ok((dim, points))
}

pub fn save_truth_csv(path: &Path, truth: &[Membership]) -> Result<()> {
    let mut out = String::from("index,truth\n");
    for (i, t) in truth.iter().enumerate() {
        writeln!(out, "{i},{}", membership_str(*t)).unwrap();
    }
    write_file(path, &out)
}

pub fn load_truth_csv(path: &Path) -> Result<Vec<Membership>> {
    let text = read_file(path)?;
    if text.lines().next().map(str::trim) != Some("index,truth") {
        return Err(parse_err(path, 1, "expected header `index,truth`"));
    }
    let mut truth = Vec::new();
    for (ln, row) in rows(&text) {
        let (idx, flag) = row
            .split_once(',')
            .ok_or_else(|| parse_err(path, ln, "expected 2 columns"))?;
        if idx.trim().parse::<usize>().ok() != Some(truth.len()) {
            return Err(parse_err(path, ln, format!("index `{idx}` out of sequence")));
        }
        truth.push(parse_membership(flag).ok_or_else(|| parse_err(path, ln, format!("bad flag `{flag}`")))?);
    }
    Ok(truth)
}

pub(crate) fn membership_str(m: Membership) -> &'static str {
    match m {
        Membership::Inlier => "inlier",
        Membership::Outlier => "outlier",
    }
}

pub(crate) fn parse_membership(s: &str) -> Option<Membership> {
    match s.trim() {
        "inlier" => Some(Membership::Inlier),
        "outlier" => Some(Membership::Outlier),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn labeled_round_trip() {
        let dir = tmp();
        let path = dir.path().join("s.csv");
        let set = LabeledSet::new(
            2,
            3,
            vec![
                DenseVector::new(vec![0.1, -2.5]),
                DenseVector::new(vec![1e-300, 3.0]),
                DenseVector::new(vec![std::f64::consts::PI, 0.0]),
            ],
            vec![0, 2, 1],
        );
        save_labeled_csv(&path, &set).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("x1,x2,label\n"));
        assert_eq!(load_labeled_csv(&path).unwrap(), set);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let dir = tmp();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x1,x2,label\n1,2,0\n3,1\n").unwrap();
        match load_labeled_csv(&path) {
            Err(SalError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tmp();
        let path = dir.path().join("e.csv");
        fs::write(&path, "x1,x2,label\n").unwrap();
        let set = load_labeled_csv(&path).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.dim(), 2);
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let dir = tmp();
        assert!(matches!(
            load_points_csv(&dir.path().join("nope.csv")),
            Err(SalError::MissingArtifact(_))
        ));
    }

    #[test]
    fn truth_round_trip() {
        let dir = tmp();
        let path = dir.path().join("t.csv");
        let t = vec![Membership::Inlier, Membership::Outlier, Membership::Inlier];
        save_truth_csv(&path, &t).unwrap();
        assert_eq!(load_truth_csv(&path).unwrap(), t);
    }

    proptest! {
        #[test]
        fn points_round_trip_bit_exact(raw in prop::collection::vec((-1e12f64..1e12, -1e-3f64..1e-3), 0..30)) {
            let dir = tmp();
            let path = dir.path().join("p.csv");
            let pts: Vec<DenseVector> = raw.iter().map(|&(a, b)| DenseVector::new(vec![a, b])).collect();
            save_points_csv(&path, 2, &pts).unwrap();
            let (dim, back) = load_points_csv(&path).unwrap();
            prop_assert_eq!(dim, 2);
            prop_assert_eq!(back.len(), pts.len());
            for (x, y) in back.iter().zip(&pts) {
                prop_assert_eq!(x[0].to_bits(), y[0].to_bits());
                prop_assert_eq!(x[1].to_bits(), y[1].to_bits());
            }
        }
    }
}
