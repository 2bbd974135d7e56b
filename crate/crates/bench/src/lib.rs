//! Fixtures shared by the benchmarks.

use blocklsi_core::campaign::{self, SeedTree};
use blocklsi_core::{BlockPartition, GaussianDist, GibbsModel};
use nalgebra::{DMatrix, DVector};

pub fn model_2d() -> GibbsModel {
    GibbsModel::gaussian(
        BlockPartition::singletons(2),
        DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
        DVector::zeros(2),
    )
    .expect("positive definite")
}

/// Random certified model together with a random Gaussian in its dimension.
pub fn certified_pair(seed: u64, max_dim: usize) -> (GibbsModel, GaussianDist) {
    let mut rng = SeedTree::new(seed).stream("bench");
    let model = campaign::random_certified_model(&mut rng, max_dim);
    let p = campaign::random_gaussian(&mut rng, model.dim(), 1.0);
    (model, p)
}

pub fn random_gaussians(seed: u64, n: usize) -> (GaussianDist, GaussianDist) {
    let mut rng = SeedTree::new(seed).stream("bench-gaussians");
    (campaign::random_gaussian(&mut rng, n, 1.0), campaign::random_gaussian(&mut rng, n, 1.0))
}
