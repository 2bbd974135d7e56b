//! Block partitions, the potential `V`, structural assumptions, and the
//! JSON model file.
//!
//! The potential family is
//!
//! ```text
//! V(x) = ½ (x − m)ᵀ K (x − m) + Σ_i λ_i x_i⁴,      λ_i ≥ 0,
//! ```
//!
//! so the Hessian is `K + diag(12 λ_i x_i²)`. With all `λ_i = 0` the model is
//! the Gaussian `N(m, K⁻¹)`. Coordinates are indexed from 0.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::criteria;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianDist;
use crate::linalg;
use crate::toeplitz::{self, Band};

/// Absolute asymmetry (scaled by `max(1, max|K|)`) tolerated before a
/// precision matrix is rejected; anything below is symmetrized silently.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Ordered partition of `[0, N)` into non-empty blocks `I_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
    complements: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Validation("partition has no blocks".into()));
        }
        let mut block_of = vec![usize::MAX; dim];
        for (k, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Validation(format!("block {k} is empty")));
            }
            for &i in block {
                if i >= dim {
                    return Err(Error::Validation(format!("index {i} in block {k} is outside [0, {dim})")));
                }
                if block_of[i] != usize::MAX {
                    return Err(Error::Validation(format!("index {i} appears in blocks {} and {k}", block_of[i])));
                }
                block_of[i] = k;
            }
        }
        if let Some(i) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::Validation(format!("index {i} is not covered by any block")));
        }
        let complements = blocks.iter().map(|b| linalg::complement(dim, b)).collect();
        Ok(Self { blocks, block_of, complements })
    }

    /// One block per coordinate.
    pub fn singletons(dim: usize) -> Self {
        Self::new((0..dim).map(|i| vec![i]).collect(), dim).expect("singletons form a partition")
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.block_of.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.blocks[k]
    }

    /// Indices outside block `k`, increasing.
    pub fn complement(&self, k: usize) -> &[usize] {
        &self.complements[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    pub(crate) fn check_block(&self, k: usize) -> Result<()> {
        if k >= self.num_blocks() {
            return Err(Error::BlockIndex { index: k, blocks: self.num_blocks() });
        }
        Ok(())
    }
}

/// Gibbs density `q = exp(−V)` together with its block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsModel {
    partition: BlockPartition,
    precision: DMatrix<f64>,
    mean: DVector<f64>,
    quartic: DVector<f64>,
}

impl GibbsModel {
    pub fn new(
        partition: BlockPartition,
        precision: DMatrix<f64>,
        mean: DVector<f64>,
        quartic: DVector<f64>,
    ) -> Result<Self> {
        let n = partition.dim();
        if precision.nrows() != n || precision.ncols() != n {
            return Err(Error::Validation(format!(
                "precision is {}x{}, expected {n}x{n}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        check_dim(n, mean.len())?;
        check_dim(n, quartic.len())?;
        if precision.iter().chain(mean.iter()).chain(quartic.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite entry".into()));
        }
        let scale = precision.amax().max(1.0);
        let asym = linalg::max_asymmetry(&precision);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Validation(format!("precision is not symmetric (max |K − Kᵀ| = {asym:.3e})")));
        }
        if let Some(i) = quartic.iter().position(|&l| l < 0.0) {
            return Err(Error::Validation(format!("quartic coefficient {i} is negative")));
        }
        let precision = linalg::symmetrize(&precision);
        if quartic.iter().all(|&l| l == 0.0) {
            let lmin = linalg::lambda_min(&precision);
            if lmin <= 0.0 {
                return Err(Error::Validation(format!(
                    "precision is not positive definite (λ_min = {lmin:.6}) and there is no quartic confinement"
                )));
            }
        }
        Ok(Self { partition, precision, mean, quartic })
    }

    /// Gaussian model `N(mean, precision⁻¹)`.
    pub fn gaussian(partition: BlockPartition, precision: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        let n = partition.dim();
        Self::new(partition, precision, mean, DVector::zeros(n))
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn quartic(&self) -> &DVector<f64> {
        &self.quartic
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn is_gaussian(&self) -> bool {
        self.quartic.iter().all(|&l| l == 0.0)
    }

    /// `V(x)` up to its normalizing constant.
    pub fn potential(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        0.5 * d.dot(&(&self.precision * &d))
            + x.iter().zip(self.quartic.iter()).map(|(xi, l)| l * xi.powi(4)).sum::<f64>()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.precision * (x - &self.mean);
        for i in 0..g.len() {
            g[i] += 4.0 * self.quartic[i] * x[i].powi(3);
        }
        g
    }

    /// Hessian of `V` at `x`: `K + diag(12 λ_i x_i²)`.
    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.precision.clone();
        for i in 0..self.dim() {
            h[(i, i)] += 12.0 * self.quartic[i] * x[i] * x[i];
        }
        h
    }

    /// The Gaussian `q = N(m, K⁻¹)`.
    pub fn target(&self) -> Result<GaussianDist> {
        if !self.is_gaussian() {
            return Err(Error::NotGaussian);
        }
        GaussianDist::from_precision(self.mean.clone(), self.precision.clone())
    }

    pub(crate) fn require_gaussian(&self) -> Result<()> {
        if self.is_gaussian() {
            Ok(())
        } else {
            Err(Error::NotGaussian)
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let n = self.dim();
        ModelFile {
            dim: n,
            partition: self.partition.blocks().to_vec(),
            mean: self.mean.iter().copied().collect(),
            precision: Some((0..n).map(|i| (0..n).map(|j| self.precision[(i, j)]).collect()).collect()),
            toeplitz: None,
            quartic: if self.is_gaussian() { None } else { Some(self.quartic.iter().copied().collect()) },
        }
    }
}

/// `{"toeplitz": {"m": 64, "diag": 5.0, "band": {"1": 1.0, "2": -1.0}}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToeplitzGenerator {
    pub m: usize,
    pub diag: f64,
    pub band: Band,
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub partition: Vec<Vec<usize>>,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toeplitz: Option<ToeplitzGenerator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quartic: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<GibbsModel> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Parse("dim must be positive".into()));
        }
        let shape = |what: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::Parse(format!("{what} has length {len}, expected {n}")))
            }
        };
        shape("mean", self.mean.len())?;
        let precision = match (self.precision, self.toeplitz) {
            (Some(_), Some(_)) => return Err(Error::Parse("give either precision or toeplitz, not both".into())),
            (None, None) => return Err(Error::Parse("missing precision (or toeplitz generator)".into())),
            (Some(rows), None) => {
                shape("precision", rows.len())?;
                for (i, row) in rows.iter().enumerate() {
                    shape(&format!("precision row {i}"), row.len())?;
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            (None, Some(gen)) => {
                if gen.m != n {
                    return Err(Error::Parse(format!("toeplitz m = {} differs from dim = {n}", gen.m)));
                }
                toeplitz::toeplitz_precision(n, gen.diag, &gen.band)
            }
        };
        let quartic = match self.quartic {
            Some(q) => {
                shape("quartic", q.len())?;
                DVector::from_vec(q)
            }
            None => DVector::zeros(n),
        };
        let partition = BlockPartition::new(self.partition, n)?;
        GibbsModel::new(partition, precision, DVector::from_vec(self.mean), quartic)
    }
}

pub fn parse_model(json: &str) -> Result<GibbsModel> {
    let file: ModelFile = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_model()
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<GibbsModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

/// Pairs `(x, ξ)` at which `x`-dependent suprema and infima are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub pairs: Vec<(DVector<f64>, DVector<f64>)>,
}

impl ProbeSet {
    pub const DEFAULT_COUNT: usize = 64;
    pub const DEFAULT_HALF_WIDTH: f64 = 3.0;

    /// Latin-hypercube design on `[−h, h]^{2N}`, split into `(x, ξ)`, with the
    /// origin pair prepended.
    pub fn latin_hypercube(dim: usize, count: usize, half_width: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cols = 2 * dim;
        let mut design = vec![vec![0.0; cols]; count];
        for c in 0..cols {
            let mut strata: Vec<usize> = (0..count).collect();
            for i in (1..count).rev() {
                strata.swap(i, rng.random_range(0..=i));
            }
            for (row, &s) in design.iter_mut().zip(&strata) {
                let u = (s as f64 + rng.random::<f64>()) / count as f64;
                row[c] = half_width * (2.0 * u - 1.0);
            }
        }
        let mut pairs = vec![(DVector::zeros(dim), DVector::zeros(dim))];
        pairs.extend(
            design
                .into_iter()
                .map(|row| (DVector::from_column_slice(&row[..dim]), DVector::from_column_slice(&row[dim..]))),
        );
        Self { pairs }
    }

    /// Default probes for a model, or `None` when its Hessian is constant.
    pub fn for_model(model: &GibbsModel, count: Option<usize>, seed: u64) -> Option<Self> {
        if model.is_gaussian() {
            return None;
        }
        Some(Self::latin_hypercube(model.dim(), count.unwrap_or(Self::DEFAULT_COUNT), Self::DEFAULT_HALF_WIDTH, seed))
    }
}

/// Outcome of checking the three structural assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub rho_k: Vec<f64>,
    pub assumption1_ok: bool,
    pub assumption2_ok: bool,
    pub assumption3_ok: bool,
    /// `1 − sup ‖A‖`, present only when positive.
    pub delta: Option<f64>,
    pub block_hessian_lower_bounds: Vec<f64>,
    /// True when suprema/infima are sampled over probes rather than exact.
    pub sampled: bool,
}

pub fn verify_assumptions(model: &GibbsModel, probes: Option<&ProbeSet>) -> AssumptionReport {
    let rho_k = criteria::block_lsi_constants(model);
    let assumption1_ok = rho_k.iter().all(|&r| r > 0.0);

    let owned_probes;
    let probes = match (model.is_gaussian(), probes) {
        (true, _) => None,
        (false, Some(p)) => Some(p),
        (false, None) => {
            owned_probes = ProbeSet::for_model(model, None, 0);
            owned_probes.as_ref()
        }
    };
    let sampled = probes.is_some();

    let part = model.partition();
    let block_bound = |h: &DMatrix<f64>, k: usize| {
        let b = part.block(k);
        linalg::lambda_min(&linalg::submatrix(h, b, b))
    };
    let block_hessian_lower_bounds: Vec<f64> = match probes {
        None => {
            let h = model.precision();
            (0..part.num_blocks()).map(|k| block_bound(h, k)).collect()
        }
        Some(p) => {
            let mut lb = vec![f64::INFINITY; part.num_blocks()];
            for (x, _) in &p.pairs {
                let h = model.hessian(x);
                for (k, slot) in lb.iter_mut().enumerate() {
                    *slot = slot.min(block_bound(&h, k));
                }
            }
            lb
        }
    };
    let assumption2_ok = block_hessian_lower_bounds.iter().all(|v| v.is_finite());

    let delta = if assumption1_ok {
        let norm = criteria::sup_norm_a_rho(model, &rho_k, 0.0, probes);
        Some(1.0 - norm).filter(|&d| d > 0.0)
    } else {
        None
    };
    AssumptionReport {
        rho_k,
        assumption1_ok,
        assumption2_ok,
        assumption3_ok: delta.is_some(),
        delta,
        block_hessian_lower_bounds,
        sampled,
    }
}
