//! The weighted random-scan Gibbs sampler `Γ = Σ_k (ρ_k/R) Γ_k` acting
//! exactly on Gaussian mixtures, and the entropy checks built on it.
//!
//! `Γ_k` keeps the coordinates outside block `k` and redraws block `k` from
//! the target's conditional. On a Gaussian component this is an affine
//! Gaussian update, so the law of the chain after `m` steps is a finite
//! mixture that can be tracked exactly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::campaign::SeedTree;
use crate::criteria::CriteriaReport;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{self, GaussianDist};
use crate::linalg;
use crate::model::GibbsModel;

pub const DEFAULT_COMPONENT_CAP: usize = 100_000;
pub const MIN_MC_SAMPLES: usize = 1_000;
/// Acceptance band, in standard errors, for Monte Carlo comparisons.
pub const SE_BAND: f64 = 3.0;
/// Slack for the exact closed-form inequality checks.
pub const EXACT_SLACK: f64 = 1e-9;

const MC_CHUNK: usize = 4096;
const WEIGHT_TOL: f64 = 1e-12;

/// Finite mixture of equal-dimension Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianDist>,
    cap: usize,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianDist>) -> Result<Self> {
        Self::with_cap(weights, components, DEFAULT_COMPONENT_CAP)
    }

    pub fn with_cap(weights: Vec<f64>, components: Vec<GaussianDist>, cap: usize) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        check_dim(components.len(), weights.len())?;
        if components.len() > cap {
            return Err(Error::ComponentCap { requested: components.len(), cap });
        }
        let dim = components[0].dim();
        for c in &components {
            check_dim(dim, c.dim())?;
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { weights, components, cap })
    }

    pub fn single(g: GaussianDist) -> Self {
        Self { weights: vec![1.0], components: vec![g], cap: DEFAULT_COMPONENT_CAP }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianDist] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Sole component, if the mixture has exactly one.
    pub fn as_single(&self) -> Option<&GaussianDist> {
        (self.len() == 1).then(|| &self.components[0])
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(self.components.iter().zip(&self.weights).map(|(c, w)| w.ln() + c.log_density(x)))
    }

    /// Merges components with identical mean and covariance. Repeated
    /// updates of the same block are idempotent and produce exact duplicates.
    pub fn merge_duplicates(&self) -> Self {
        let mut weights: Vec<f64> = Vec::new();
        let mut components: Vec<GaussianDist> = Vec::new();
        'outer: for (c, &w) in self.components.iter().zip(&self.weights) {
            for (kept, kw) in components.iter().zip(weights.iter_mut()) {
                if same_law(kept, c) {
                    *kw += w;
                    continue 'outer;
                }
            }
            components.push(c.clone());
            weights.push(w);
        }
        Self { weights, components, cap: self.cap }
    }
}

fn same_law(a: &GaussianDist, b: &GaussianDist) -> bool {
    let scale = 1.0 + a.cov().amax().max(a.mean().amax());
    (a.mean() - b.mean()).amax() <= 1e-13 * scale && (a.cov() - b.cov()).amax() <= 1e-13 * scale
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `pΓ_k` for a single Gaussian `p`.
pub fn gibbs_block_gaussian(p: &GaussianDist, model: &GibbsModel, k: usize) -> Result<GaussianDist> {
    model.require_gaussian()?;
    check_dim(model.dim(), p.dim())?;
    let part = model.partition();
    part.check_block(k)?;
    let q = model.target()?;
    let (b, c) = (part.block(k), part.complement(k));
    if c.is_empty() {
        return Ok(q);
    }
    let cq = linalg::spd_inverse(&linalg::submatrix(q.precision(), b, b))?;
    let bq = -(&cq * linalg::submatrix(q.precision(), b, c));

    let mu_c = linalg::subvector(p.mean(), c);
    let mu_b = linalg::subvector(q.mean(), b) + &bq * (&mu_c - linalg::subvector(q.mean(), c));
    let s_cc = linalg::submatrix(p.cov(), c, c);
    let s_bc = &bq * &s_cc;
    let s_bb = &s_bc * bq.transpose() + &cq;

    let n = p.dim();
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for (i, &gi) in b.iter().enumerate() {
        mean[gi] = mu_b[i];
        for (j, &gj) in b.iter().enumerate() {
            cov[(gi, gj)] = s_bb[(i, j)];
        }
        for (j, &gj) in c.iter().enumerate() {
            cov[(gi, gj)] = s_bc[(i, j)];
            cov[(gj, gi)] = s_bc[(i, j)];
        }
    }
    for (i, &gi) in c.iter().enumerate() {
        mean[gi] = mu_c[i];
        for (j, &gj) in c.iter().enumerate() {
            cov[(gi, gj)] = s_cc[(i, j)];
        }
    }
    GaussianDist::new(mean, cov)
}

/// `pΓ_k`: every component gets its block-`k` conditional replaced by the
/// target's.
pub fn apply_gibbs_block(p: &GaussianMixture, model: &GibbsModel, k: usize) -> Result<GaussianMixture> {
    let components = p.components.iter().map(|c| gibbs_block_gaussian(c, model, k)).collect::<Result<Vec<_>>>()?;
    Ok(GaussianMixture { weights: p.weights.clone(), components, cap: p.cap })
}

/// `pΓ` with block weights `ρ_k / Σρ_k`; grows the mixture `n`-fold.
pub fn apply_weighted_gibbs(p: &GaussianMixture, model: &GibbsModel, rho: &[f64]) -> Result<GaussianMixture> {
    let n = model.partition().num_blocks();
    check_dim(n, rho.len())?;
    if rho.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("block weights must be positive".into()));
    }
    let requested = p.len().saturating_mul(n);
    if requested > p.cap {
        return Err(Error::ComponentCap { requested, cap: p.cap });
    }
    let total: f64 = rho.iter().sum();
    let mut weights = Vec::with_capacity(requested);
    let mut components = Vec::with_capacity(requested);
    for (c, &w) in p.components.iter().zip(&p.weights) {
        for (k, &r) in rho.iter().enumerate() {
            weights.push(w * r / total);
            components.push(gibbs_block_gaussian(c, model, k)?);
        }
    }
    // renormalize away rounding in the products
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(GaussianMixture { weights, components, cap: p.cap })
}

/// Flattened Gaussian for fast repeated density evaluation.
struct CompiledGaussian {
    mean: Vec<f64>,
    precision: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

impl CompiledGaussian {
    fn new(g: &GaussianDist, log_weight: f64) -> Self {
        let n = g.dim();
        let flat = |m: &DMatrix<f64>| (0..n * n).map(|ij| m[(ij / n, ij % n)]).collect::<Vec<f64>>();
        Self {
            mean: g.mean().iter().copied().collect(),
            precision: flat(g.precision()),
            chol: flat(g.chol_lower()),
            log_norm: log_weight - 0.5 * (g.log_det_cov() + n as f64 * (2.0 * std::f64::consts::PI).ln()),
        }
    }

    fn log_density(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let n = self.mean.len();
        for i in 0..n {
            scratch[i] = x[i] - self.mean[i];
        }
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.precision[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * scratch[j];
            }
            quad += scratch[i] * s;
        }
        self.log_norm - 0.5 * quad
    }

    fn sample_into<R: RngCore>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let n = self.mean.len();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let row = &self.chol[i * n..(i + 1) * n];
            out[i] = self.mean[i] + (0..=i).map(|j| row[j] * z[j]).sum::<f64>();
        }
    }
}

fn mixture_log_density(comps: &[CompiledGaussian], x: &[f64], scratch: &mut [f64], terms: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (t, c) in terms.iter_mut().zip(comps) {
        *t = c.log_density(x, scratch);
        max = max.max(*t);
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Monte Carlo estimate of a relative entropy with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub nsamples: usize,
}

/// `D(p‖q)` for a mixture `p`: averages `log p(X) − log q(X)` over `X ∼ p`,
/// both densities exact. Deterministic given `seed` regardless of thread
/// count.
pub fn kl_mixture_mc(p: &GaussianMixture, q: &GaussianDist, nsamples: usize, seed: u64) -> Result<McEstimate> {
    check_dim(p.dim(), q.dim())?;
    if nsamples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_MC_SAMPLES} samples, got {nsamples}")));
    }
    let comps: Vec<CompiledGaussian> =
        p.components.iter().zip(&p.weights).map(|(c, w)| CompiledGaussian::new(c, w.ln())).collect();
    let target = [CompiledGaussian::new(q, 0.0)];
    let mut cumulative: Vec<f64> = p
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    *cumulative.last_mut().unwrap() = 1.0;
    let n = p.dim();
    let tree = SeedTree::new(seed);
    let chunks = nsamples.div_ceil(MC_CHUNK);

    // (count, mean, M2) per chunk, merged in chunk order
    let partials: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = tree.indexed("kl_mixture_mc", chunk as u64);
            let count = MC_CHUNK.min(nsamples - chunk * MC_CHUNK);
            let (mut z, mut x, mut scratch) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut terms = vec![0.0; comps.len()];
            let mut t1 = [0.0];
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..count {
                let u: f64 = rng.random();
                let idx = cumulative.partition_point(|&c| c < u).min(comps.len() - 1);
                comps[idx].sample_into(&mut rng, &mut z, &mut x);
                let v = mixture_log_density(&comps, &x, &mut scratch, &mut terms)
                    - mixture_log_density(&target, &x, &mut scratch, &mut t1);
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (v - mean);
            }
            (count as f64, mean, m2)
        })
        .collect();

    let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for (nb, mb, m2b) in partials {
        let total = count + nb;
        let delta = mb - mean;
        mean += delta * nb / total;
        m2 += m2b + delta * delta * count * nb / total;
        count = total;
    }
    let variance = m2 / (count - 1.0);
    Ok(McEstimate { estimate: mean, std_error: (variance / count).sqrt(), nsamples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `D(p‖q) ≤ (1/ρ) Σ_k ρ_k E D(p^(k)(·|Ȳ) ‖ Q^(k)(·|Ȳ))` with the certified `ρ`.
pub fn verify_theorem1(p: &GaussianDist, model: &GibbsModel, report: &CriteriaReport) -> Result<InequalityCheck> {
    model.require_gaussian()?;
    let rho = report.marton()?;
    let q = model.target()?;
    let lhs = gaussian::kl(p, &q)?;
    let mut weighted = 0.0;
    for (k, &rk) in report.rho_k.iter().enumerate() {
        weighted += rk * gaussian::avg_conditional_kl(p, &q, model.partition(), k)?;
    }
    let rhs = weighted / rho;
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs + EXACT_SLACK })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub holds: bool,
}

/// `D(p‖q) − D(pΓ_k‖q) = E D(p^(k)(·|Ȳ) ‖ Q^(k)(·|Ȳ))`.
pub fn entropy_drop_identity(p: &GaussianDist, model: &GibbsModel, k: usize) -> Result<IdentityCheck> {
    let q = model.target()?;
    let after = gibbs_block_gaussian(p, model, k)?;
    let lhs = gaussian::kl(p, &q)? - gaussian::kl(&after, &q)?;
    let rhs = gaussian::avg_conditional_kl(p, &q, model.partition(), k)?;
    let gap = lhs - rhs;
    Ok(IdentityCheck { lhs, rhs, gap, holds: gap.abs() <= EXACT_SLACK * (1.0 + lhs.abs()) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionRow {
    pub step: usize,
    pub components: usize,
    pub kl_estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// The value is a closed form rather than a Monte Carlo estimate.
    pub exact: bool,
    /// `kl_estimate − 3·SE > bound`.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionTable {
    pub rho: f64,
    pub rho_sum: f64,
    /// `1 − ρ/R`.
    pub factor: f64,
    pub seed: u64,
    pub rows: Vec<ContractionRow>,
}

impl ContractionTable {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| !r.violated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionOptions {
    pub steps: usize,
    pub nsamples: usize,
    pub seed: u64,
    pub cap: usize,
    /// Merge identical components after each step (exact).
    pub merge: bool,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self { steps: 8, nsamples: 200_000, seed: 42, cap: DEFAULT_COMPONENT_CAP, merge: true }
    }
}

/// Tracks `p₀Γ^m` exactly and compares `D(p₀Γ^m‖q)` with `(1 − ρ/R)^m D(p₀‖q)`.
pub fn verify_contraction(
    p0: &GaussianDist,
    model: &GibbsModel,
    report: &CriteriaReport,
    opts: &ContractionOptions,
) -> Result<ContractionTable> {
    model.require_gaussian()?;
    let rho = report.marton()?;
    let rho_sum = report.rho_sum();
    let factor = 1.0 - rho / rho_sum;
    let q = model.target()?;
    let d0 = gaussian::kl(p0, &q)?;
    let tree = SeedTree::new(opts.seed);

    let mut law = GaussianMixture::with_cap(vec![1.0], vec![p0.clone()], opts.cap)?;
    let mut rows = vec![ContractionRow {
        step: 0,
        components: 1,
        kl_estimate: d0,
        std_error: 0.0,
        bound: d0,
        exact: true,
        violated: false,
    }];
    for step in 1..=opts.steps {
        law = apply_weighted_gibbs(&law, model, &report.rho_k)?;
        if opts.merge {
            law = law.merge_duplicates();
        }
        let bound = factor.powi(step as i32) * d0;
        let (kl_estimate, std_error, exact) = match law.as_single() {
            Some(g) => (gaussian::kl(g, &q)?, 0.0, true),
            None => {
                let step_seed = tree.indexed("contraction", step as u64).next_u64();
                let est = kl_mixture_mc(&law, &q, opts.nsamples, step_seed)?;
                (est.estimate, est.std_error, false)
            }
        };
        let violated =
            if exact { kl_estimate > bound + EXACT_SLACK } else { kl_estimate - SE_BAND * std_error > bound };
        rows.push(ContractionRow { step, components: law.len(), kl_estimate, std_error, bound, exact, violated });
    }
    Ok(ContractionTable { rho, rho_sum, factor, seed: opts.seed, rows })
}
