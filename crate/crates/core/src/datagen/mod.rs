//! Toy Gaussian data, Huber-contaminated wild mixtures and CSV IO.

mod csv;
mod toy;

pub(crate) use self::csv::membership_str as membership_label;
pub use self::csv::{
    load_labeled_csv, load_points_csv, load_truth_csv, save_labeled_csv, save_points_csv,
    save_truth_csv,
};
pub use toy::{
    gen_gaussian_id, gen_wild_scenario, mix_huber, Scenario, WildPools, CLASS_MEANS, CLASS_STD,
};

use crate::numerics::DenseVector;

/// Labeled in-distribution samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    num_classes: usize,
    points: Vec<DenseVector>,
    labels: Vec<usize>,
}

impl LabeledSet {
    /// Panics if lengths disagree, a point has the wrong dimension, or a
    /// label is out of range.
    pub fn new(dim: usize, num_classes: usize, points: Vec<DenseVector>, labels: Vec<usize>) -> Self {
        assert_eq!(points.len(), labels.len(), "points/labels length mismatch");
        assert!(points.iter().all(|p| p.len() == dim), "point dimension mismatch");
        assert!(labels.iter().all(|&l| l < num_classes), "label out of range");
        LabeledSet {
            dim,
            num_classes,
            points,
            labels,
        }
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        LabeledSet::new(dim, num_classes, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DenseVector] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DenseVector, usize)> {
        self.points.iter().zip(self.labels.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Membership {
    Inlier,
    Outlier,
}

impl Membership {
    pub fn is_outlier(self) -> bool {
        self == Membership::Outlier
    }
}

/// Unlabeled wild samples. `truth` is evaluation-only: training and
/// filtering code takes `points()` and never sees the flags.
#[derive(Debug, Clone, PartialEq)]
pub struct WildSet {
    points: Vec<DenseVector>,
    truth: Vec<Membership>,
}

impl WildSet {
    pub fn new(points: Vec<DenseVector>, truth: Vec<Membership>) -> Self {
        assert_eq!(points.len(), truth.len(), "points/truth length mismatch");
        WildSet { points, truth }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DenseVector] {
        &self.points
    }

    pub fn truth(&self) -> &[Membership] {
        &self.truth
    }

    pub fn outlier_count(&self) -> usize {
        self.truth.iter().filter(|t| t.is_outlier()).count()
    }
}
