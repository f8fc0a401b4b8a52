use super::io::{scorer_from_text, scorer_to_text};
use super::*;
use crate::datagen::gen_gaussian_id;
use crate::erm::{init_params, train_id_classifier, ErmHyper};
use crate::model::predict_label;
use std::path::Path;

fn v(x: &[f64]) -> DenseVector {
    DenseVector::new(x.to_vec())
}

fn small_model(seed: u64) -> (MlpParams, LabeledSet) {
    let s = gen_gaussian_id(10, &mut SeededRng::new(seed));
    (init_params(&s, &ErmHyper { hidden_dim: 4, ..ErmHyper::default() }, seed), s)
}

fn approx_eq(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn reference_is_mean_of_two() {
    let (p, s) = small_model(0);
    let two = LabeledSet::new(2, 3, s.points()[..2].to_vec(), s.labels()[..2].to_vec());
    let g1 = grad_last_layer(&p, &two.points()[0], two.labels()[0]).unwrap();
    let g2 = grad_last_layer(&p, &two.points()[1], two.labels()[1]).unwrap();
    let r = reference_gradient(&p, &two, false, GradientScope::LastLayer).unwrap();
    let want: Vec<f64> = g1.iter().zip(g2.iter()).map(|(a, b)| (a + b) / 2.0).collect();
    assert!(approx_eq(r.for_class(0), &want, 1e-15));

    let one = LabeledSet::new(2, 3, s.points()[..1].to_vec(), s.labels()[..1].to_vec());
    let r = reference_gradient(&p, &one, false, GradientScope::LastLayer).unwrap();
    assert_eq!(r.for_class(0), &g1);
}

#[test]
fn class_conditional_matches_grouping_oracle() {
    let (p, s) = small_model(1);
    let idx = [0usize, 1, 10, 11, 20, 21];
    let six = LabeledSet::new(
        2,
        3,
        idx.iter().map(|&i| s.points()[i].clone()).collect(),
        idx.iter().map(|&i| s.labels()[i]).collect(),
    );
    let r = reference_gradient(&p, &six, true, GradientScope::LastLayer).unwrap();
    for k in 0..3 {
        let mut sum = [0.0; 12];
        let mut n = 0.0;
        for (x, y) in six.iter() {
            if y == k {
                for (a, b) in sum.iter_mut().zip(grad_last_layer(&p, x, y).unwrap().iter()) {
                    *a += b;
                }
                n += 1.0;
            }
        }
        let want: Vec<f64> = sum.iter().map(|a| a / n).collect();
        assert!(approx_eq(r.for_class(k), &want, 1e-15));
    }
}

#[test]
fn class_conditional_empty_class_errors() {
    let (p, s) = small_model(2);
    let only0 = LabeledSet::new(2, 3, s.points()[..5].to_vec(), s.labels()[..5].to_vec());
    assert!(matches!(
        reference_gradient(&p, &only0, true, GradientScope::LastLayer),
        Err(SalError::EmptyClass(1))
    ));
    assert!(reference_gradient(&p, &LabeledSet::empty(2, 3), false, GradientScope::LastLayer).is_err());
}

#[test]
fn gradient_matrix_rows_match_per_sample_oracle() {
    let (p, s) = small_model(3);
    let r = reference_gradient(&p, &s, false, GradientScope::LastLayer).unwrap();
    let blocks = gradient_matrix(&p, s.points(), &r, GradientScope::LastLayer).unwrap();
    assert_eq!(blocks.len(), 1);
    let g = &blocks[0].matrix;
    assert_eq!((g.rows(), g.cols()), (30, 12));
    for (i, x) in s.points().iter().enumerate() {
        let y = predict_label(&p, x).unwrap();
        let want: Vec<f64> = grad_last_layer(&p, x, y)
            .unwrap()
            .iter()
            .zip(r.for_class(0).iter())
            .map(|(a, b)| a - b)
            .collect();
        assert_eq!(g.row(i), want.as_slice());
    }
}

#[test]
fn gradient_equal_to_reference_gives_zero_row() {
    let (p, s) = small_model(4);
    let x = s.points()[0].clone();
    let y = predict_label(&p, &x).unwrap();
    let r = ReferenceGradient::Global(grad_last_layer(&p, &x, y).unwrap());
    let blocks = gradient_matrix(&p, &[x], &r, GradientScope::LastLayer).unwrap();
    assert!(blocks[0].matrix.row(0).iter().all(|&a| a == 0.0));
}

#[test]
fn gradient_matrix_rejects_wrong_reference_dim() {
    let (p, s) = small_model(5);
    let r = ReferenceGradient::Global(DenseVector::zeros(3));
    assert!(gradient_matrix(&p, s.points(), &r, GradientScope::LastLayer).is_err());
}

#[test]
fn score_examples() {
    let g = DenseMatrix::from_row_major(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
    let s = filtering_scores(&g, &[v(&[0.6, 0.8])]).unwrap();
    assert_eq!(s[0], 0.0);
    assert!((s[1] - 25.0).abs() < 1e-12);

    let g = DenseMatrix::from_row_major(1, 2, vec![2.0, 2f64.sqrt()]).unwrap();
    let s = filtering_scores(&g, &[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
    assert!((s[0] - 3.0).abs() < 1e-12);
}

#[test]
fn score_rejects_non_unit_direction() {
    let g = DenseMatrix::from_row_major(1, 2, vec![1.0, 1.0]).unwrap();
    assert!(filtering_scores(&g, &[v(&[1.0, 1.0])]).is_err());
    assert!(filtering_scores(&g, &[v(&[1.0, 0.0, 0.0])]).is_err());
}

#[test]
fn scores_invariant_to_direction_sign() {
    let mut rng = SeededRng::new(6);
    let data: Vec<f64> = (0..40).map(|_| rng.standard_normal()).collect();
    let g = DenseMatrix::from_row_major(10, 4, data).unwrap();
    let u = v(&[1.0, 2.0, -1.0, 0.5]).normalized().unwrap();
    let mut neg = u.clone();
    neg.scale(-1.0);
    assert_eq!(filtering_scores(&g, &[u]).unwrap(), filtering_scores(&g, &[neg]).unwrap());
}

#[test]
fn gradnorm_zero_at_uniform_softmax() {
    let mut p = MlpParams::zeros(2, 3, 3);
    p.b2 = v(&[0.4, 0.4, 0.4]);
    let s = gradnorm_scores(&p, &[v(&[1.0, -2.0])], GradientScope::LastLayer).unwrap();
    assert!(s[0].abs() < 1e-16);
    let (q, set) = small_model(7);
    for scope in [GradientScope::LastLayer, GradientScope::Full] {
        assert!(gradnorm_scores(&q, set.points(), scope).unwrap().iter().all(|&a| a >= 0.0));
    }
}

#[test]
fn candidate_examples() {
    assert_eq!(filter_candidates(&[0.1, 5.0], 1.0), vec![1]);
    assert!(filter_candidates(&[0.1, 5.0], 5.0).is_empty());
    assert_eq!(filter_candidates(&[1.0, 1.0, 1.5], 1.0), vec![2]);
}

#[test]
fn all_equal_id_scores_threshold_at_that_value() {
    let t = percentile_threshold(&[2.5; 20], 0.95).unwrap();
    assert_eq!(t, 2.5);
    assert_eq!(filter_candidates(&[2.5, 2.6, 1.0], t), vec![1]);
}

#[test]
fn error_examples() {
    use Membership::*;
    let truth = [Inlier, Outlier, Inlier, Outlier, Inlier];
    let perfect = filtering_errors(&[1, 3], &truth).unwrap();
    assert_eq!((perfect.err_in, perfect.err_out, perfect.contamination), (0.0, 0.0, 0.0));

    let all = filtering_errors(&[0, 1, 2, 3, 4], &truth).unwrap();
    assert_eq!(all.err_in, 1.0);
    assert_eq!(all.err_out, 0.0);
    assert!((all.contamination - (1.0 - 0.4)).abs() < 1e-15);

    let none = filtering_errors(&[], &truth).unwrap();
    assert_eq!((none.err_in, none.err_out, none.contamination), (0.0, 1.0, 0.0));
    assert!(filtering_errors(&[9], &truth).is_err());
}

fn trained_toy() -> (MlpParams, LabeledSet, Vec<DenseVector>) {
    let s = gen_gaussian_id(60, &mut SeededRng::new(10));
    let h = ErmHyper {
        epochs: 20,
        batch_size: 32,
        hidden_dim: 8,
        ..ErmHyper::default()
    };
    let p = train_id_classifier(&s, &h, 10).unwrap().params;
    let mut rng = SeededRng::new(11);
    let mut wild: Vec<DenseVector> = gen_gaussian_id(30, &mut rng).points().to_vec();
    wild.extend((0..20).map(|_| v(&[rng.normal(8.0, 0.5), rng.normal(1.1, 0.5)])));
    (p, s, wild)
}

#[test]
fn top_direction_maximizes_total_score() {
    let (p, s, wild) = trained_toy();
    let cfg = FilterConfig::default();
    let out = run_filter(&p, &s, &wild, &cfg, &mut SeededRng::new(12)).unwrap();
    let total: f64 = out.scores.iter().sum();
    let Scorer::Projection { reference, .. } = &out.scorer else { panic!() };
    let g = &gradient_matrix(&p, &wild, reference, cfg.gradient_scope).unwrap()[0].matrix;
    let mut rng = SeededRng::new(13);
    for _ in 0..1000 {
        let u: DenseVector = (0..g.cols()).map(|_| rng.standard_normal()).collect();
        let u = u.normalized().unwrap();
        let alt: f64 = filtering_scores(g, &[u]).unwrap().iter().sum();
        assert!(total + 1e-9 >= alt);
    }
}

#[test]
fn run_filter_threshold_coverage_and_strictness() {
    let (p, s, wild) = trained_toy();
    let out = run_filter(&p, &s, &wild, &FilterConfig::default(), &mut SeededRng::new(14)).unwrap();
    let id = out.scorer.score(&p, s.points()).unwrap();
    let below = id.iter().filter(|&&t| t <= out.threshold).count() as f64;
    assert!(below / id.len() as f64 >= 0.95);
    assert!(out.candidates.iter().all(|&i| out.scores[i] > out.threshold));
    assert_eq!(out.candidates, filter_candidates(&out.scores, out.threshold));
}

#[test]
fn single_class_conditional_equals_global_bitwise() {
    let mut rng = SeededRng::new(20);
    let pts: Vec<DenseVector> = (0..40).map(|_| v(&[rng.standard_normal(), rng.standard_normal()])).collect();
    let s = LabeledSet::new(2, 1, pts.clone(), vec![0; 40]);
    let p = MlpParams::init_uniform(2, 5, 1, &mut rng);
    // K = 1 makes every cross-entropy gradient vanish; the point is that
    // both modes take identical arithmetic steps, including the RNG draws.
    for scope in [GradientScope::LastLayer, GradientScope::Full] {
        let base = FilterConfig {
            gradient_scope: scope,
            ..FilterConfig::default()
        };
        let cc = FilterConfig {
            class_conditional: true,
            ..base
        };
        let a = run_filter(&p, &s, &pts, &base, &mut SeededRng::new(1)).unwrap();
        let b = run_filter(&p, &s, &pts, &cc, &mut SeededRng::new(1)).unwrap();
        let bits = |x: &[f64]| x.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.scores), bits(&b.scores));
        assert_eq!(a.threshold.to_bits(), b.threshold.to_bits());
    }
}

#[test]
fn class_conditional_scores_use_own_class_basis() {
    let (p, s, wild) = trained_toy();
    let cfg = FilterConfig {
        class_conditional: true,
        num_vectors: 2,
        ..FilterConfig::default()
    };
    let out = run_filter(&p, &s, &wild, &cfg, &mut SeededRng::new(15)).unwrap();
    let Scorer::Projection { reference, basis: ProjectionBasis::PerClass(per), .. } = &out.scorer else {
        panic!("expected per-class basis")
    };
    for (i, x) in wild.iter().enumerate() {
        let y = predict_label(&p, x).unwrap();
        let row = grad_last_layer(&p, x, y).unwrap().sub(reference.for_class(y)).unwrap();
        let want: f64 = per[y].iter().map(|v| dot(&row, v).unwrap().powi(2)).sum::<f64>() / per[y].len() as f64;
        assert!((out.scores[i] - want).abs() <= 1e-12 * want.max(1e-12));
    }
}

#[test]
fn empty_wild_class_scores_zero() {
    let (p, s, _) = trained_toy();
    // wild points only from class 0's region
    let mut rng = SeededRng::new(16);
    let wild: Vec<DenseVector> = (0..10).map(|_| v(&[rng.normal(-2.0, 0.1), rng.normal(0.0, 0.1)])).collect();
    let cfg = FilterConfig {
        class_conditional: true,
        ..FilterConfig::default()
    };
    let out = run_filter(&p, &s, &wild, &cfg, &mut SeededRng::new(17)).unwrap();
    let Scorer::Projection { basis: ProjectionBasis::PerClass(per), .. } = &out.scorer else { panic!() };
    assert!(per[1].is_empty() && per[2].is_empty());
    let id = out.scorer.score(&p, s.points()).unwrap();
    for (x, t) in s.points().iter().zip(&id) {
        if predict_label(&p, x).unwrap() != 0 {
            assert_eq!(*t, 0.0);
        }
    }
}

#[test]
fn gradnorm_kind_scores_differ_from_projection() {
    let (p, s, wild) = trained_toy();
    let a = run_filter(&p, &s, &wild, &FilterConfig::default(), &mut SeededRng::new(18)).unwrap();
    let cfg = FilterConfig {
        score_kind: ScoreKind::GradNorm,
        ..FilterConfig::default()
    };
    let b = run_filter(&p, &s, &wild, &cfg, &mut SeededRng::new(18)).unwrap();
    assert_ne!(a.scores, b.scores);
    assert_eq!(b.scores, gradnorm_scores(&p, &wild, GradientScope::LastLayer).unwrap());
}

#[test]
fn scorer_text_round_trip() {
    let (p, s, wild) = trained_toy();
    for cfg in [
        FilterConfig::default(),
        FilterConfig {
            class_conditional: true,
            num_vectors: 3,
            ..FilterConfig::default()
        },
        FilterConfig {
            score_kind: ScoreKind::GradNorm,
            gradient_scope: GradientScope::Full,
            ..FilterConfig::default()
        },
    ] {
        let out = run_filter(&p, &s, &wild, &cfg, &mut SeededRng::new(19)).unwrap();
        let back = scorer_from_text(Path::new("mem"), &scorer_to_text(&out.scorer)).unwrap();
        assert_eq!(back, out.scorer);
    }
}

#[test]
fn invalid_config_rejected() {
    let (p, s, wild) = trained_toy();
    let cfg = FilterConfig {
        percentile: 0.0,
        ..FilterConfig::default()
    };
    assert!(matches!(
        run_filter(&p, &s, &wild, &cfg, &mut SeededRng::new(0)),
        Err(SalError::Config { .. })
    ));
}
