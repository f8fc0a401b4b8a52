use super::{LabeledSet, Membership, WildSet};
use crate::numerics::{l2_norm, DenseVector, SeededRng};
use crate::{Result, SalError};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Class means of the three-Gaussian toy problem.
pub const CLASS_MEANS: [[f64; 2]; 3] = [[-2.0, 0.0], [2.0, 0.0], [0.0, 2.0 * SQRT3]];
/// Per-coordinate standard deviation (covariance 0.25 I).
pub const CLASS_STD: f64 = 0.5;

const WILD_INLIERS_PER_CLASS: usize = 3000;
const OUTLIER_COUNT: usize = 1000;
const RING_DRAWS: usize = 100_000;
const RING_VARIANCE: f64 = 7.0;
const CLUSTER_MEAN_X: f64 = 10.0;

/// Center of the ring outliers and y-coordinate of the far cluster.
fn outlier_center() -> [f64; 2] {
    [0.0, 2.0 / SQRT3]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Outliers surround the ID classes at large radius.
    One,
    /// Outliers form a tight cluster far to the right.
    Two,
}

fn gaussian_point(mean: [f64; 2], std: f64, rng: &mut SeededRng) -> DenseVector {
    let x = rng.normal(mean[0], std);
    let y = rng.normal(mean[1], std);
    DenseVector::new(vec![x, y])
}

/// `per_class` draws from each of the three toy Gaussians, class by class.
pub fn gen_gaussian_id(per_class: usize, rng: &mut SeededRng) -> LabeledSet {
    let total = per_class * CLASS_MEANS.len();
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (k, mean) in CLASS_MEANS.iter().enumerate() {
        for _ in 0..per_class {
            points.push(gaussian_point(*mean, CLASS_STD, rng));
            labels.push(k);
        }
    }
    LabeledSet::new(2, CLASS_MEANS.len(), points, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WildPools {
    pub inliers: LabeledSet,
    pub outliers: Vec<DenseVector>,
}

/// Pools for building a wild mixture: 3000 inliers per class plus 1000
/// scenario-specific outliers.
pub fn gen_wild_scenario(scenario: Scenario, rng: &mut SeededRng) -> WildPools {
    let inliers = gen_gaussian_id(WILD_INLIERS_PER_CLASS, rng);
    let outliers = match scenario {
        Scenario::One => ring_outliers(rng),
        Scenario::Two => (0..OUTLIER_COUNT)
            .map(|_| gaussian_point([CLUSTER_MEAN_X, outlier_center()[1]], CLASS_STD, rng))
            .collect(),
    };
    WildPools { inliers, outliers }
}

/// Farthest 1000 of 100k broad Gaussian draws, ties broken by draw order,
/// returned in draw order.
fn ring_outliers(rng: &mut SeededRng) -> Vec<DenseVector> {
    let center = outlier_center();
    let std = RING_VARIANCE.sqrt();
    let draws: Vec<DenseVector> = (0..RING_DRAWS)
        .map(|_| gaussian_point(center, std, rng))
        .collect();
    let dist = |p: &DenseVector| l2_norm(&[p[0] - center[0], p[1] - center[1]]);
    let mut order: Vec<usize> = (0..draws.len()).collect();
    // stable sort keeps draw order among equal distances
    order.sort_by(|&a, &b| dist(&draws[b]).total_cmp(&dist(&draws[a])));
    let mut keep: Vec<usize> = order[..OUTLIER_COUNT].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| draws[i].clone()).collect()
}

/// Exactly `round(pi * m)` outliers and the rest inliers, each drawn
/// without replacement from its pool, then shuffled together.
pub fn mix_huber(
    inliers: &[DenseVector],
    outliers: &[DenseVector],
    pi: f64,
    m: usize,
    rng: &mut SeededRng,
) -> Result<WildSet> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(SalError::InvalidArgument(format!(
            "mixing ratio must lie in [0, 1], got {pi}"
        )));
    }
    let n_out = (pi * m as f64).round() as usize;
    let n_in = m - n_out;
    if n_out > outliers.len() {
        return Err(SalError::InsufficientPool {
            pool: "outlier",
            needed: n_out,
            available: outliers.len(),
        });
    }
    if n_in > inliers.len() {
        return Err(SalError::InsufficientPool {
            pool: "inlier",
            needed: n_in,
            available: inliers.len(),
        });
    }

    let picked_in = rng.permutation(inliers.len());
    let picked_out = rng.permutation(outliers.len());
    let mut items: Vec<(&DenseVector, Membership)> = picked_in[..n_in]
        .iter()
        .map(|&i| (&inliers[i], Membership::Inlier))
        .chain(
            picked_out[..n_out]
                .iter()
                .map(|&i| (&outliers[i], Membership::Outlier)),
        )
        .collect();
    rng.shuffle(&mut items);

    let (points, truth) = items.into_iter().map(|(p, t)| (p.clone(), t)).unzip();
    Ok(WildSet::new(points, truth))
}
