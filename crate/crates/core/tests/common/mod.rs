//! Test-only oracles, independent of the library code paths they check.
#![allow(dead_code)]

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues descending, eigenvectors as rows).
pub fn jacobi_eigen(sym: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = sym.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-32 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    (values, vectors)
}

/// `mᵀm` for a row-major `rows x cols` matrix, by plain triple loop.
pub fn transpose_times_self(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += m[r * cols + i] * m[r * cols + j];
            }
            out[i * cols + j] = s;
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative error with an absolute floor, in the usual gradient-check form.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Pairwise Mann–Whitney AUROC: P(id > ood) + 0.5 P(id == ood).
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &a in id {
        for &b in ood {
            if a > b {
                acc += 1.0;
            } else if a == b {
                acc += 0.5;
            }
        }
    }
    acc / (id.len() * ood.len()) as f64
}

/// Try every observed ID score (and one value below all of them) as the
/// threshold; keep the largest that still passes `tpr` of ID strictly above.
pub fn brute_fpr_at_tpr(id: &[f64], ood: &[f64], tpr: f64) -> (f64, f64) {
    let n = id.len() as f64;
    let min = id.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut best: Option<f64> = None;
    for &cand in id {
        let above = id.iter().filter(|&&s| s > cand).count() as f64;
        if above / n >= tpr && best.is_none_or(|b| cand > b) {
            best = Some(cand);
        }
    }
    let lambda = best.unwrap_or_else(|| min.next_down());
    let fpr = ood.iter().filter(|&&s| s > lambda).count() as f64 / ood.len() as f64;
    (fpr, lambda)
}

pub mod checks;
