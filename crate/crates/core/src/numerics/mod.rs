//! Dense linear algebra, power iteration, percentile selection and the
//! seeded random stream shared by the rest of the crate.

mod linalg;
mod percentile;
mod rng;
mod svd;

pub use linalg::{dot, l2_norm, DenseMatrix, DenseVector};
pub use percentile::percentile_threshold;
pub use rng::SeededRng;
pub use svd::{top_singular_vectors, SingularTriplets, SvdOptions};
