use super::linalg::{dot_unchecked, l2_norm, DenseMatrix, DenseVector};
use super::rng::SeededRng;
use crate::{Result, SalError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Stop once the iterate moves less than this between steps.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// Leading right singular vectors with their singular values.
///
/// `converged[j]` is false when vector `j` hit `max_iter` first, which
/// happens on tied or nearly tied singular values. The vector is still a
/// unit vector inside the (near-)degenerate subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplets {
    pub vectors: Vec<DenseVector>,
    pub values: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl SingularTriplets {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Top-`c` right singular vectors of `m` by power iteration on `mᵀm`,
/// deflating each found component before searching for the next one.
pub fn top_singular_vectors(
    m: &DenseMatrix,
    c: usize,
    opts: SvdOptions,
    rng: &mut SeededRng,
) -> Result<SingularTriplets> {
    let n = m.cols();
    if c == 0 || c > n {
        return Err(SalError::InvalidArgument(format!(
            "requested {c} singular vectors from a matrix with {n} columns"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(SalError::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }

    let mut gram = m.gram();
    // Anything below this is rounding noise relative to the spectrum.
    let trace: f64 = (0..n).map(|i| gram.get(i, i)).sum();
    let floor = trace * 1e-300_f64.max(f64::EPSILON * f64::EPSILON);

    let mut out = SingularTriplets {
        vectors: Vec::with_capacity(c),
        values: Vec::with_capacity(c),
        converged: Vec::with_capacity(c),
        iterations: Vec::with_capacity(c),
    };

    for _ in 0..c {
        let mut v = random_unit_orthogonal(n, &out.vectors, rng);
        let mut converged = false;
        let mut iters = 0;
        for it in 1..=opts.max_iter {
            iters = it;
            let mut w = gram.matvec(&v)?;
            orthogonalize(&mut w, &out.vectors);
            let norm = l2_norm(&w);
            if !(norm > floor) {
                // Remaining spectrum is numerically zero: any orthogonal
                // unit vector is a valid singular vector for value 0.
                converged = true;
                break;
            }
            w.scale(1.0 / norm);
            let plus: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let minus: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a + b) * (a + b)).sum();
            let change = plus.min(minus).sqrt();
            v = w;
            if change < opts.tol {
                converged = true;
                break;
            }
        }

        let gv = gram.matvec(&v)?;
        let lambda = dot_unchecked(&v, &gv).max(0.0);
        deflate(&mut gram, &v, lambda);

        out.values.push(lambda.sqrt());
        out.vectors.push(v);
        out.converged.push(converged);
        out.iterations.push(iters);
    }
    Ok(out)
}

fn orthogonalize(w: &mut DenseVector, basis: &[DenseVector]) {
    for b in basis {
        let p = dot_unchecked(w, b);
        w.axpy(-p, b);
    }
}

fn random_unit_orthogonal(n: usize, basis: &[DenseVector], rng: &mut SeededRng) -> DenseVector {
    loop {
        let mut v: DenseVector = (0..n).map(|_| rng.standard_normal()).collect();
        orthogonalize(&mut v, basis);
        orthogonalize(&mut v, basis);
        if let Some(u) = v.normalized() {
            if l2_norm(&u) > 0.5 {
                return u;
            }
        }
    }
}

fn deflate(gram: &mut DenseMatrix, v: &[f64], lambda: f64) {
    let n = gram.cols();
    for i in 0..n {
        let row = gram.row_mut(i);
        let s = lambda * v[i];
        for j in 0..n {
            row[j] -= s * v[j];
        }
    }
}
