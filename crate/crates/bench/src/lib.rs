//! Fixed scenarios shared by the benchmarks.

use conic_purge::prelude::*;

/// N = 100 inliers at σ₀ = 0.01 plus `outliers` at σ₁ = 2 around the
/// a = 5, ε = 0.95 ellipse.
pub fn ellipse_dataset(outliers: usize, seed: u64) -> LabeledDataset {
    let truth = ellipse_from_eccentricity(5.0, 0.95, [0.0, 0.0], 0.0).expect("valid ellipse");
    make_dataset(&ExperimentConfig::new(TruthModel::Ellipse(truth), 100, outliers, 0.01, 2.0, seed))
        .expect("valid scenario")
}

/// N = 300 at σ₀ = 0.1 plus 50 outliers at σ₁ = 5 around the (5, 4, 3)
/// ellipsoid.
pub fn ellipsoid_dataset(seed: u64) -> LabeledDataset {
    let truth = EllipsoidParams::standard(5.0, 4.0, 3.0).expect("valid ellipsoid");
    make_dataset(&ExperimentConfig::new(TruthModel::Ellipsoid(truth), 300, 50, 0.1, 5.0, seed)).expect("valid scenario")
}
