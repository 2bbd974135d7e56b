//! Seeded random instances for verification campaigns.
//!
//! Every random stream derives from one `u64` seed and a stream name, so
//! results are reproducible and independent of evaluation order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::gaussian::GaussianDist;
use crate::linalg;
use crate::model::{verify_assumptions, BlockPartition, GibbsModel};

/// Splittable seed: `(seed, name, index)` names an independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> ChaCha20Rng {
        self.indexed(name, 0)
    }

    pub fn indexed(&self, name: &str, index: u64) -> ChaCha20Rng {
        // FNV-1a over the name picks the key; the index picks the stream.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&h.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `W Wᵀ / n + floor·I` with standard normal `W`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let w = DMatrix::from_fn(n, n, |_, _| normal(rng));
    linalg::symmetrize(&(&w * w.transpose() / n as f64)) + DMatrix::identity(n, n) * floor
}

/// Random partition of `[0, n)` with shuffled indices and random block sizes.
pub fn random_partition<R: Rng + ?Sized>(rng: &mut R, n: usize) -> BlockPartition {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    let mut blocks = Vec::new();
    let mut rest = &idx[..];
    while !rest.is_empty() {
        let size = rng.random_range(1..=rest.len().min(3));
        let (head, tail) = rest.split_at(size);
        let mut b = head.to_vec();
        b.sort_unstable();
        blocks.push(b);
        rest = tail;
    }
    BlockPartition::new(blocks, n).expect("cuts of a permutation form a partition")
}

/// Random Gaussian model with `N ∈ [2, max_dim]`, random blocks, mixed-sign
/// interactions, and `sup ‖A‖ < 1`.
pub fn random_certified_model<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> GibbsModel {
    loop {
        let n = rng.random_range(2..=max_dim.max(2));
        let part = random_partition(rng, n);
        let floor = rng.random_range(0.2..1.5);
        let mut k = random_spd(rng, n, floor);
        let raw = linalg::symmetrize(&DMatrix::from_fn(n, n, |_, _| normal(rng)));
        let mut strength = rng.random_range(0.05..1.0);
        let mean = DVector::from_fn(n, |_, _| normal(rng));
        for i in 0..n {
            for j in 0..n {
                if part.block_of(i) != part.block_of(j) {
                    k[(i, j)] = 0.0;
                }
            }
        }
        for _ in 0..20 {
            let mut trial = k.clone();
            for i in 0..n {
                for j in 0..n {
                    if part.block_of(i) != part.block_of(j) {
                        trial[(i, j)] = strength * raw[(i, j)];
                    }
                }
            }
            if let Ok(model) = GibbsModel::gaussian(part.clone(), trial, mean.clone()) {
                if verify_assumptions(&model, None).assumption3_ok {
                    return model;
                }
            }
            strength *= 0.6;
        }
    }
}

/// Positive-definite tridiagonal chain with non-positive couplings and
/// singleton blocks.
pub fn random_attractive_chain<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> GibbsModel {
    loop {
        let n = rng.random_range(2..=max_dim.max(2));
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = rng.random_range(1.0..3.0);
        }
        for i in 0..n - 1 {
            let c = -rng.random_range(0.0..1.0) * f64::sqrt(k[(i, i)] * k[(i + 1, i + 1)]);
            k[(i, i + 1)] = c;
            k[(i + 1, i)] = c;
        }
        let mean = DVector::from_fn(n, |_, _| normal(rng));
        if let Ok(model) = GibbsModel::gaussian(BlockPartition::singletons(n), k, mean) {
            return model;
        }
    }
}

/// Random Gaussian law in dimension `n`: mean spread `mean_scale`, covariance
/// with eigenvalues roughly in `[0.1, 3]`.
pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, mean_scale: f64) -> GaussianDist {
    let mean = DVector::from_fn(n, |_, _| mean_scale * normal(rng));
    let cov = random_spd(rng, n, 0.1);
    GaussianDist::new(mean, cov).expect("random_spd is positive definite")
}

/// Random point in `ℝ^n` with standard normal coordinates scaled by `scale`.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * normal(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let t = SeedTree::new(42);
        let a: u64 = t.stream("x").random();
        let b: u64 = t.stream("x").random();
        let c: u64 = t.stream("y").random();
        let d: u64 = t.indexed("x", 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, SeedTree::new(43).stream("x").random::<u64>());
    }

    #[test]
    fn generated_models_are_certified() {
        let mut rng = SeedTree::new(1).stream("models");
        for _ in 0..30 {
            let m = random_certified_model(&mut rng, 6);
            let r = verify_assumptions(&m, None);
            assert!(r.assumption1_ok && r.assumption3_ok);
        }
    }

    #[test]
    fn chains_are_attractive() {
        let mut rng = SeedTree::new(2).stream("chains");
        for _ in 0..30 {
            let m = random_attractive_chain(&mut rng, 8);
            let k = m.precision();
            for i in 0..m.dim() {
                for j in 0..m.dim() {
                    if i != j {
                        assert!(k[(i, j)] <= 0.0);
                    }
                }
            }
        }
    }
}
