//! The Fokker–Planck flow `∂_t p_t = Δp_t + ∇·(p_t ∇V)` toward `q = exp(−V)`.
//!
//! For Gaussian models the flow preserves Gaussianity:
//!
//! ```text
//! mean_t = m + e^{−Kt}(mean₀ − m)
//! cov_t  = e^{−Kt}(Σ₀ − K⁻¹)e^{−Kt} + K⁻¹
//! ```
//!
//! so relative entropy and Fisher information along the flow are available in
//! closed form. The particle simulator covers the quartic models.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::campaign::SeedTree;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{self, GaussianDist};
use crate::linalg;
use crate::model::GibbsModel;

/// Grid spacing above which the dissipation check is flagged as coarse.
pub const COARSE_SPACING: f64 = 0.1;
/// Relative tolerance on `|dD/dt + I|`, scaled by `1 + max I`.
pub const DISSIPATION_TOL: f64 = 1e-5;
/// Relative slack of the exponential decay check.
pub const DECAY_SLACK: f64 = 1e-9;
/// Width of the particle moment bands in units of (MC + discretization) error.
pub const MOMENT_BAND: f64 = 5.0;
pub const MIN_PARTICLES: usize = 1_000;

/// Precomputed spectral data for evaluating the Gaussian flow at many times.
#[derive(Debug, Clone)]
pub struct GaussianFlow {
    p0: GaussianDist,
    target_mean: DVector<f64>,
    target_cov: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GaussianFlow {
    pub fn new(p0: &GaussianDist, model: &GibbsModel) -> Result<Self> {
        model.require_gaussian()?;
        check_dim(model.dim(), p0.dim())?;
        let (eigenvalues, eigenvectors) = linalg::sym_eigen(model.precision());
        Ok(Self {
            p0: p0.clone(),
            target_mean: model.mean().clone(),
            target_cov: linalg::spd_inverse(model.precision())?,
            eigenvalues,
            eigenvectors,
        })
    }

    fn decay(&self, t: f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(|l| (-l * t).exp()));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }

    pub fn at(&self, t: f64) -> Result<GaussianDist> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
        }
        if t == 0.0 {
            return Ok(self.p0.clone());
        }
        let e = self.decay(t);
        let mean = &self.target_mean + &e * (self.p0.mean() - &self.target_mean);
        let cov = &e * (self.p0.cov() - &self.target_cov) * &e + &self.target_cov;
        GaussianDist::new(mean, cov)
    }
}

/// Law at time `t` of the flow started from `p0`.
pub fn gaussian_fp_evolve(p0: &GaussianDist, model: &GibbsModel, t: f64) -> Result<GaussianDist> {
    GaussianFlow::new(p0, model)?.at(t)
}

/// `n` equal steps of size `step` from 0, inclusive of both ends.
pub fn uniform_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Relative entropy and Fisher information sampled along the flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub kl_values: Vec<f64>,
    pub fisher_values: Vec<f64>,
    /// `e^{−2ρt} D₀` when a certified `ρ` is attached.
    pub lsi_bound: Option<Vec<f64>>,
}

impl EntropyTrace {
    /// `t,kl,fisher,bound`, one row per node; `bound` is empty without a
    /// certificate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,kl,fisher,bound\n");
        for i in 0..self.times.len() {
            let bound = self.lsi_bound.as_ref().map(|b| b[i].to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", self.times[i], self.kl_values[i], self.fisher_values[i], bound);
        }
        out
    }
}

pub fn entropy_trace(p0: &GaussianDist, model: &GibbsModel, grid: &[f64], rho: Option<f64>) -> Result<EntropyTrace> {
    let flow = GaussianFlow::new(p0, model)?;
    let q = model.target()?;
    let mut kl_values = Vec::with_capacity(grid.len());
    let mut fisher_values = Vec::with_capacity(grid.len());
    for &t in grid {
        let pt = flow.at(t)?;
        kl_values.push(gaussian::kl(&pt, &q)?);
        fisher_values.push(gaussian::fisher(&pt, &q)?);
    }
    let d0 = kl_values.first().copied().unwrap_or(0.0);
    let lsi_bound = rho.map(|r| grid.iter().map(|t| (-2.0 * r * t).exp() * d0).collect());
    Ok(EntropyTrace { times: grid.to_vec(), kl_values, fisher_values, lsi_bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationReport {
    pub trace: EntropyTrace,
    /// `max |centered difference of D + I|` over nodes with two neighbours
    /// on each side.
    pub max_residual: f64,
    /// `DISSIPATION_TOL · (1 + max I)`.
    pub tolerance: f64,
    pub holds: bool,
    /// Some grid spacing exceeds `COARSE_SPACING`.
    pub coarse_grid: bool,
    /// Trapezoidal `∫ I dt` over the grid.
    pub integral_fisher: f64,
    /// `D(p₀‖q) − D(p_T‖q)`.
    pub entropy_drop: f64,
}

impl DissipationReport {
    pub fn integral_rel_error(&self) -> f64 {
        (self.integral_fisher - self.entropy_drop).abs() / self.entropy_drop.abs().max(f64::MIN_POSITIVE)
    }
}

/// Weights of the derivative at the middle node of the Lagrange interpolant
/// through `nodes` (fourth order for five nodes).
fn centered_weights(nodes: &[f64]) -> Vec<f64> {
    let c = nodes.len() / 2;
    let x = nodes[c];
    (0..nodes.len())
        .map(|j| {
            if j == c {
                return (0..nodes.len()).filter(|&m| m != c).map(|m| 1.0 / (x - nodes[m])).sum();
            }
            let others: f64 = (0..nodes.len())
                .filter(|&m| m != c && m != j)
                .map(|m| (x - nodes[m]) / (nodes[j] - nodes[m]))
                .product();
            others / (nodes[j] - x)
        })
        .collect()
}

/// Checks `dD(p_t‖q)/dt = −I(p_t‖q)` on a time grid, differentiating `D` with
/// the five-point centered stencil at every node with two neighbours on each
/// side.
pub fn dissipation_check(p0: &GaussianDist, model: &GibbsModel, grid: &[f64]) -> Result<DissipationReport> {
    if grid.len() < 5 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid needs at least 5 increasing nodes".into()));
    }
    let trace = entropy_trace(p0, model, grid, None)?;
    let (t, d, fi) = (&trace.times, &trace.kl_values, &trace.fisher_values);
    let mut max_residual: f64 = 0.0;
    for i in 2..t.len() - 2 {
        let slope: f64 = centered_weights(&t[i - 2..=i + 2]).iter().zip(&d[i - 2..=i + 2]).map(|(w, v)| w * v).sum();
        max_residual = max_residual.max((slope + fi[i]).abs());
    }
    let max_fisher = fi.iter().copied().fold(0.0, f64::max);
    let tolerance = DISSIPATION_TOL * (1.0 + max_fisher);
    let integral_fisher = t.windows(2).zip(fi.windows(2)).map(|(tw, fw)| 0.5 * (tw[1] - tw[0]) * (fw[0] + fw[1])).sum();
    let entropy_drop = d[0] - d[d.len() - 1];
    let coarse_grid = t.windows(2).any(|w| w[1] - w[0] > COARSE_SPACING);
    Ok(DissipationReport {
        max_residual,
        tolerance,
        holds: max_residual <= tolerance,
        coarse_grid,
        integral_fisher,
        entropy_drop,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCheck {
    pub holds: bool,
    /// Largest `D(p_t‖q) / (e^{−2ρt} D₀)` over the grid (0 when `D₀ = 0`).
    pub worst_ratio: f64,
    pub first_violation: Option<f64>,
}

/// `D(p_t‖q) ≤ e^{−2ρt} D(p₀‖q)` at every grid node.
pub fn exp_decay_check(p0: &GaussianDist, model: &GibbsModel, rho: f64, grid: &[f64]) -> Result<DecayCheck> {
    let trace = entropy_trace(p0, model, grid, Some(rho))?;
    let bound = trace.lsi_bound.as_ref().expect("rho given");
    let mut worst_ratio: f64 = 0.0;
    let mut first_violation = None;
    for ((&t, &d), &b) in trace.times.iter().zip(&trace.kl_values).zip(bound) {
        if b > 0.0 {
            worst_ratio = worst_ratio.max(d / b);
        }
        if d > b * (1.0 + DECAY_SLACK) && first_violation.is_none() {
            first_violation = Some(t);
        }
    }
    Ok(DecayCheck { holds: first_violation.is_none(), worst_ratio, first_violation })
}

/// Empirical moments at one checkpoint, with the Gaussian reference when
/// available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheckpoint {
    pub step: usize,
    pub t: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub reference: Option<MomentReference>,
}

/// Closed-form flow moments, exact Euler–Maruyama moments, and bands
/// `5·(MC standard error + |discrete − continuous|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReference {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub discrete_mean: Vec<f64>,
    pub discrete_cov: Vec<Vec<f64>>,
    pub mean_band: Vec<f64>,
    pub cov_band: Vec<Vec<f64>>,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinRun {
    pub dt: f64,
    pub step_limit: f64,
    /// Final particle positions, one row per particle.
    pub particles: Vec<Vec<f64>>,
    pub checkpoints: Vec<MomentCheckpoint>,
}

impl LangevinRun {
    pub fn all_within_band(&self) -> bool {
        self.checkpoints.iter().all(|c| c.reference.as_ref().is_none_or(|r| r.within_band))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinOptions {
    pub dt: f64,
    pub steps: usize,
    pub particles: usize,
    pub seed: u64,
    /// Record moments every this many steps (and at the end).
    pub checkpoint_every: usize,
}

/// Upper bound on the Hessian used for the step-size rule: `λ_max(K)` for
/// Gaussian models, otherwise `λ_max` of the Hessian at `|mean₀| + 4σ₀`.
pub fn hessian_bound(model: &GibbsModel, p0: &GaussianDist) -> f64 {
    if model.is_gaussian() {
        return linalg::lambda_max(model.precision());
    }
    let r = DVector::from_fn(model.dim(), |i, _| p0.mean()[i].abs() + 4.0 * p0.cov()[(i, i)].sqrt());
    linalg::lambda_max(&model.hessian(&r))
}

fn moments(points: &[Vec<f64>], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len() as f64;
    let mut mean = DVector::zeros(dim);
    for p in points {
        for i in 0..dim {
            mean[i] += p[i];
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for p in points {
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    cov /= n - 1.0;
    (mean, cov)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Euler–Maruyama for `dX = −∇V(X) dt + √2 dW` with `X₀ ∼ p0`.
pub fn langevin_particles(model: &GibbsModel, p0: &GaussianDist, opts: &LangevinOptions) -> Result<LangevinRun> {
    check_dim(model.dim(), p0.dim())?;
    if opts.particles < MIN_PARTICLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_PARTICLES} particles")));
    }
    let step_limit = 0.1 / hessian_bound(model, p0);
    if !(opts.dt > 0.0) || opts.dt > step_limit {
        return Err(Error::StepSize { dt: opts.dt, limit: step_limit });
    }
    let dim = model.dim();
    let every = opts.checkpoint_every.max(1);
    let mut marks: Vec<usize> = (0..=opts.steps).step_by(every).collect();
    if *marks.last().unwrap() != opts.steps {
        marks.push(opts.steps);
    }
    let tree = SeedTree::new(opts.seed);
    let noise = (2.0 * opts.dt).sqrt();

    // trajectories[i][c] = position of particle i at checkpoint c
    let trajectories: Vec<Vec<Vec<f64>>> = (0..opts.particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree.indexed("langevin", i as u64);
            let mut x = p0.sample(&mut rng);
            let mut out = Vec::with_capacity(marks.len());
            let mut next = 0;
            for step in 0..=opts.steps {
                if marks[next] == step {
                    out.push(x.iter().copied().collect());
                    next += 1;
                }
                if step == opts.steps {
                    break;
                }
                let drift = model.gradient(&x);
                for j in 0..dim {
                    x[j] += -drift[j] * opts.dt + noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            out
        })
        .collect();

    let flow = if model.is_gaussian() { Some(GaussianFlow::new(p0, model)?) } else { None };
    let step_matrix = DMatrix::identity(dim, dim) - model.precision() * opts.dt;
    let mut disc_mean = p0.mean().clone();
    let mut disc_cov = p0.cov().clone();
    let mut disc_step = 0;

    let mut checkpoints = Vec::with_capacity(marks.len());
    for (c, &step) in marks.iter().enumerate() {
        let points: Vec<Vec<f64>> = trajectories.iter().map(|tr| tr[c].clone()).collect();
        let (mean, cov) = moments(&points, dim);
        let t = step as f64 * opts.dt;
        let reference = match &flow {
            None => None,
            Some(flow) => {
                while disc_step < step {
                    disc_mean = model.mean() + &step_matrix * (&disc_mean - model.mean());
                    disc_cov = &step_matrix * &disc_cov * step_matrix.transpose()
                        + DMatrix::identity(dim, dim) * (2.0 * opts.dt);
                    disc_step += 1;
                }
                let exact = flow.at(t)?;
                let n = opts.particles as f64;
                let (em, ec) = (exact.mean(), exact.cov());
                let mean_band: Vec<f64> =
                    (0..dim).map(|i| MOMENT_BAND * ((ec[(i, i)] / n).sqrt() + (disc_mean[i] - em[i]).abs())).collect();
                let cov_band = DMatrix::from_fn(dim, dim, |i, j| {
                    let se = ((ec[(i, i)] * ec[(j, j)] + ec[(i, j)].powi(2)) / n).sqrt();
                    MOMENT_BAND * (se + (disc_cov[(i, j)] - ec[(i, j)]).abs())
                });
                let within_band = (0..dim).all(|i| (mean[i] - em[i]).abs() <= mean_band[i])
                    && (0..dim).all(|i| (0..dim).all(|j| (cov[(i, j)] - ec[(i, j)]).abs() <= cov_band[(i, j)]));
                Some(MomentReference {
                    mean: em.iter().copied().collect(),
                    cov: to_rows(ec),
                    discrete_mean: disc_mean.iter().copied().collect(),
                    discrete_cov: to_rows(&disc_cov),
                    mean_band,
                    cov_band: to_rows(&cov_band),
                    within_band,
                })
            }
        };
        checkpoints.push(MomentCheckpoint {
            step,
            t,
            mean: mean.iter().copied().collect(),
            cov: to_rows(&cov),
            reference,
        });
    }
    let last = marks.len() - 1;
    let particles = trajectories.into_iter().map(|mut tr| tr.swap_remove(last)).collect();
    Ok(LangevinRun { dt: opts.dt, step_limit, particles, checkpoints })
}
