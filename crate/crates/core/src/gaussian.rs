//! Closed-form Gaussian calculus: Schur-complement conditionals and
//! marginals, relative entropy, relative Fisher information, quadratic
//! Wasserstein distances, and the averaged conditional relative entropy.
//! Entropies are in nats.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model::BlockPartition;

/// Maximum entry of `precision·cov − I` tolerated at construction.
pub const INVERSE_TOL: f64 = 1e-8;

/// Multivariate normal law with cached precision and Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_det_cov: f64,
}

impl PartialEq for GaussianDist {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(mean.len(), cov.ncols())?;
        let cov = linalg::symmetrize(&cov);
        let precision = linalg::spd_inverse(&cov)?;
        Self::assemble(mean, cov, precision)
    }

    pub fn from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), precision.nrows())?;
        check_dim(mean.len(), precision.ncols())?;
        let precision = linalg::symmetrize(&precision);
        let cov = linalg::spd_inverse(&precision)?;
        Self::assemble(mean, cov, precision)
    }

    /// `N(0, I_n)`.
    pub fn standard(n: usize) -> Self {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n)).expect("identity is SPD")
    }

    fn assemble(mean: DVector<f64>, cov: DMatrix<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let chol = linalg::cholesky(&cov)?;
        let n = mean.len();
        if n > 0 && (&precision * &cov - DMatrix::<f64>::identity(n, n)).amax() > INVERSE_TOL {
            return Err(Error::NotPositiveDefinite);
        }
        let chol_lower = chol.l();
        let log_det_cov = 2.0 * chol_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { mean, cov, precision, chol_lower, log_det_cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    /// Same covariance, mean moved by `shift`.
    pub fn shifted(&self, shift: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), shift.len())?;
        Ok(Self { mean: &self.mean + shift, ..self.clone() })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let n = self.dim() as f64;
        -0.5 * (d.dot(&(&self.precision * &d)) + self.log_det_cov + n * (2.0 * PI).ln())
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol_lower * z
    }
}

/// Law of the block-`k` coordinates given the complement equals `xbar`
/// (listed in increasing index order).
pub fn conditional(g: &GaussianDist, part: &BlockPartition, k: usize, xbar: &DVector<f64>) -> Result<GaussianDist> {
    check_dim(part.dim(), g.dim())?;
    part.check_block(k)?;
    let (b, c) = (part.block(k), part.complement(k));
    check_dim(c.len(), xbar.len())?;
    if c.is_empty() {
        return Ok(g.clone());
    }
    let p_bb = linalg::submatrix(&g.precision, b, b);
    let p_bc = linalg::submatrix(&g.precision, b, c);
    let cond_cov = linalg::spd_inverse(&p_bb)?;
    let shift = xbar - linalg::subvector(&g.mean, c);
    let mean = linalg::subvector(&g.mean, b) - &cond_cov * (p_bc * shift);
    GaussianDist::from_precision(mean, p_bb)
}

/// Restriction to `indices` (covariance sub-block).
pub fn marginal(g: &GaussianDist, indices: &[usize]) -> Result<GaussianDist> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= g.dim()) {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: bad + 1 });
    }
    GaussianDist::new(linalg::subvector(&g.mean, indices), linalg::submatrix(&g.cov, indices, indices))
}

/// `D(p‖q) = ∫ p log(p/q)`.
pub fn kl(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let n = p.dim() as f64;
    let d = &q.mean - &p.mean;
    let trace = (&q.precision * &p.cov).trace();
    let quad = d.dot(&(&q.precision * &d));
    Ok((0.5 * (trace - n + quad + q.log_det_cov - p.log_det_cov)).max(0.0))
}

/// `I(p‖q) = ∫ |∇ log(p/q)|² dp`.
pub fn fisher(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    // ∇ log(p/q)(x) = (P_q − P_p)(x − μ_p) + P_q(μ_p − μ_q)
    let dp = &q.precision - &p.precision;
    let spread = (&dp * &p.cov * &dp).trace();
    let drift = (&q.precision * (&p.mean - &q.mean)).norm_squared();
    Ok((spread + drift).max(0.0))
}

/// Squared Bures–Wasserstein distance.
pub fn w2_squared(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    if p == q {
        return Ok(0.0);
    }
    let mean_part = (&p.mean - &q.mean).norm_squared();
    let root_q = linalg::sqrt_psd(&q.cov);
    let cross = linalg::sqrt_psd(&linalg::symmetrize(&(&root_q * &p.cov * &root_q)));
    let cov_part = p.cov.trace() + q.cov.trace() - 2.0 * cross.trace();
    Ok((mean_part + cov_part).max(0.0))
}

pub fn w2(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    w2_squared(p, q).map(f64::sqrt)
}

fn block_scaled(g: &GaussianDist, scale: &DVector<f64>) -> Result<GaussianDist> {
    let s = DMatrix::from_diagonal(scale);
    GaussianDist::new(g.mean.component_mul(scale), &s * &g.cov * &s)
}

/// Wasserstein distance for the cost `Σ_k ρ_k |z^(k) − u^(k)|²`.
pub fn weighted_w2(p: &GaussianDist, q: &GaussianDist, part: &BlockPartition, rho: &[f64]) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    check_dim(part.dim(), p.dim())?;
    check_dim(part.num_blocks(), rho.len())?;
    if let Some(r) = rho.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument(format!("block weights must be positive, got {r}")));
    }
    let scale = DVector::from_fn(p.dim(), |i, _| rho[part.block_of(i)].sqrt());
    w2(&block_scaled(p, &scale)?, &block_scaled(q, &scale)?)
}

/// `E_{Ȳ∼p̄^(k)} D(p^(k)(·|Ȳ) ‖ q^(k)(·|Ȳ))` in closed form.
///
/// Both conditionals have constant covariance and mean affine in `Ȳ`, so the
/// expectation reduces to a quadratic form in the moments of `p̄^(k)`.
pub fn avg_conditional_kl(p: &GaussianDist, q: &GaussianDist, part: &BlockPartition, k: usize) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    check_dim(part.dim(), p.dim())?;
    part.check_block(k)?;
    let (b, c) = (part.block(k), part.complement(k));
    if c.is_empty() {
        return kl(p, q);
    }
    let nk = b.len() as f64;
    let pp_bb = linalg::submatrix(&p.precision, b, b);
    let pq_bb = linalg::submatrix(&q.precision, b, b);
    let cp = linalg::spd_inverse(&pp_bb)?;
    let cq = linalg::spd_inverse(&pq_bb)?;
    // conditional mean of r: μ_b + B_r (y − μ_c), with B_r = −C_r P_bc
    let bp = -(&cp * linalg::submatrix(&p.precision, b, c));
    let bq = -(&cq * linalg::submatrix(&q.precision, b, c));

    let mu_p_c = linalg::subvector(&p.mean, c);
    let at_mean =
        linalg::subvector(&p.mean, b) - linalg::subvector(&q.mean, b) - &bq * (&mu_p_c - linalg::subvector(&q.mean, c));
    let slope = &bp - &bq;
    let sigma_cc = linalg::submatrix(&p.cov, c, c);
    let quad = at_mean.dot(&(&pq_bb * &at_mean)) + (slope.transpose() * &pq_bb * &slope * sigma_cc).trace();

    let trace = (&pq_bb * &cp).trace();
    let log_det = linalg::spd_log_det(&pp_bb)? - linalg::spd_log_det(&pq_bb)?;
    Ok((0.5 * (trace - nk + log_det + quad)).max(0.0))
}
