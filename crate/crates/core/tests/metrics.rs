mod common;

use common::{brute_auroc, brute_fpr_at_tpr, checks};
use sal_core::eval::{auroc, fpr_at_tpr};

#[test]
fn metrics_match_pairwise_oracle_exactly() {
    assert_eq!(checks::metric_mismatches(500, 17), 0);
}

#[test]
fn oracle_agrees_on_hand_examples() {
    assert_eq!(brute_auroc(&[3.0, 1.0], &[2.0]), 0.5);
    assert_eq!(auroc(&[3.0, 1.0], &[2.0]).unwrap(), 0.5);
    let id: Vec<f64> = (1..=20).map(f64::from).collect();
    let ood = [0.5, 1.5, 30.0];
    assert_eq!(fpr_at_tpr(&id, &ood, 0.95).unwrap(), brute_fpr_at_tpr(&id, &ood, 0.95));
    // all ID scores tied: nothing lies strictly above any observed value
    let (fpr, lambda) = fpr_at_tpr(&[1.0; 4], &[1.0, 0.0], 0.95).unwrap();
    assert!(lambda < 1.0);
    assert_eq!(fpr, 0.5);
}
