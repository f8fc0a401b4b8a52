mod common;

use common::{cosine, jacobi_eigen, transpose_times_self};
use sal_core::numerics::{
    dot, l2_norm, top_singular_vectors, DenseMatrix, SeededRng, SvdOptions,
};

fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

#[test]
fn jacobi_oracle_on_hand_matrices() {
    let (vals, vecs) = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
    assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
    let h = 1.0 / 2f64.sqrt();
    assert!((cosine(&vecs[0], &[h, h]).abs() - 1.0).abs() < 1e-14);

    let (vals, _) = jacobi_eigen(&[4.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 1.0], 3);
    assert_eq!(vals, vec![9.0, 4.0, 1.0]);
}

#[test]
fn random_10x6_top3_matches_jacobi() {
    let mut rng = SeededRng::new(10);
    let m = random_matrix(10, 6, &mut rng);
    let (vals, vecs) = jacobi_eigen(&transpose_times_self(m.as_slice(), 10, 6), 6);
    let mut prng = SeededRng::new(11);
    let t = top_singular_vectors(&m, 3, SvdOptions::default(), &mut prng).unwrap();
    for j in 0..3 {
        assert!(cosine(&t.vectors[j], &vecs[j]).abs() >= 1.0 - 1e-9);
        assert!((t.values[j] - vals[j].sqrt()).abs() <= 1e-8 * vals[j].sqrt());
    }
}

#[test]
fn top_vector_maximizes_projected_energy() {
    let mut rng = SeededRng::new(12);
    let m = random_matrix(40, 8, &mut rng);
    let t = top_singular_vectors(&m, 1, SvdOptions::default(), &mut rng).unwrap();
    let energy = |u: &[f64]| -> f64 { m.iter_rows().map(|r| dot(r, u).unwrap().powi(2)).sum() };
    let best = energy(&t.vectors[0]);
    for _ in 0..1000 {
        let u: Vec<f64> = (0..8).map(|_| rng.standard_normal()).collect();
        let n = l2_norm(&u);
        let u: Vec<f64> = u.iter().map(|x| x / n).collect();
        assert!(best + 1e-9 >= energy(&u));
    }
}

#[test]
fn deflated_vectors_unit_and_orthogonal() {
    let mut rng = SeededRng::new(13);
    for _ in 0..20 {
        let m = random_matrix(25, 12, &mut rng);
        let t = top_singular_vectors(&m, 5, SvdOptions::default(), &mut rng).unwrap();
        for (j, v) in t.vectors.iter().enumerate() {
            assert!((l2_norm(v) - 1.0).abs() < 1e-9);
            for w in &t.vectors[..j] {
                assert!(dot(v, w).unwrap().abs() < 1e-6);
            }
        }
        assert!(t.values.windows(2).all(|w| w[0] + 1e-9 >= w[1]));
    }
}
