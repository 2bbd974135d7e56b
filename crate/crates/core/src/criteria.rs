//! Spectral criteria for the logarithmic Sobolev constant of `q = exp(−V)`.
//!
//! Per-block constants `ρ_k` come from the Bakry–Émery bound on each block of
//! the Hessian. The interaction matrix
//!
//! ```text
//! A^ρ_{ij}(x, ξ) = V_ij(x̄^(ℓ), ξ^(ℓ)) / (√(ρ_k − ρ) √(ρ_ℓ − ρ)),   i ∈ I_k, j ∈ I_ℓ, k ≠ ℓ
//! ```
//!
//! is zero inside diagonal blocks. The certified constant is the largest `ρ`
//! with `sup ‖A^ρ‖ ≤ 1`, found by bisection since `ρ ↦ ‖A^ρ‖` is increasing.
//! The Otto–Reznikoff comparator replaces each cross block by its norm and
//! asks for `Λ(ρ_k − ρ) − (κ_kℓ)` to be positive semidefinite.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{GibbsModel, ProbeSet};

pub use crate::linalg::op_norm;

/// Default bisection tolerance on `ρ`.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Bisection iteration cap.
pub const MAX_BISECTION_STEPS: usize = 64;
/// Allowed mismatch between the PSD and Perron forms of the comparator.
pub const PERRON_TOL: f64 = 1e-10;

/// `ρ_k = λ_min(K_kk)`. With quartic terms present this remains a lower
/// bound on the Bakry–Émery constant of every conditional, since the quartic
/// Hessian contribution is positive semidefinite.
pub fn block_lsi_constants(model: &GibbsModel) -> Vec<f64> {
    let k = model.precision();
    model.partition().blocks().iter().map(|b| linalg::lambda_min(&linalg::submatrix(k, b, b))).collect()
}

/// Cross-block Hessian entries `V_ij(x̄^(ℓ), ξ^(ℓ))` for `j ∈ I_ℓ`, zero inside
/// diagonal blocks.
fn cross_hessian(model: &GibbsModel, probe: Option<(&DVector<f64>, &DVector<f64>)>) -> DMatrix<f64> {
    let part = model.partition();
    let n = model.dim();
    let mut out = DMatrix::zeros(n, n);
    match probe {
        None => {
            let h = model.hessian(&DVector::zeros(n));
            for i in 0..n {
                for j in 0..n {
                    if part.block_of(i) != part.block_of(j) {
                        out[(i, j)] = h[(i, j)];
                    }
                }
            }
        }
        Some((x, xi)) => {
            for (l, block) in part.blocks().iter().enumerate() {
                let mut z = x.clone();
                for &j in block {
                    z[j] = xi[j];
                }
                let h = model.hessian(&z);
                for &j in block {
                    for i in 0..n {
                        if part.block_of(i) != l {
                            out[(i, j)] = h[(i, j)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cross-block Hessians at every probe (a single constant one for Gaussians).
fn cross_hessians(model: &GibbsModel, probes: Option<&ProbeSet>) -> Vec<DMatrix<f64>> {
    match probes {
        Some(p) if !model.is_gaussian() => p.pairs.iter().map(|(x, xi)| cross_hessian(model, Some((x, xi)))).collect(),
        _ => vec![cross_hessian(model, None)],
    }
}

/// Scales a cross-block Hessian by `1/√((ρ_k − ρ)(ρ_ℓ − ρ))`. A zero entry
/// stays zero at the boundary `ρ = ρ_k`; a nonzero one becomes infinite.
fn scale_cross(cross: &DMatrix<f64>, model: &GibbsModel, rho_k: &[f64], rho: f64) -> DMatrix<f64> {
    let part = model.partition();
    let gap: Vec<f64> = (0..model.dim()).map(|i| (rho_k[part.block_of(i)] - rho).max(0.0).sqrt()).collect();
    DMatrix::from_fn(cross.nrows(), cross.ncols(), |i, j| {
        let v = cross[(i, j)];
        if v == 0.0 {
            0.0
        } else {
            v / (gap[i] * gap[j])
        }
    })
}

fn norm_or_inf(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        f64::INFINITY
    } else {
        linalg::op_norm(m)
    }
}

/// The matrix `A^ρ(x, ξ)`; `A(x, ξ)` at `ρ = 0`.
pub fn build_a_rho(
    model: &GibbsModel,
    rho: f64,
    probe: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<DMatrix<f64>> {
    let rho_k = block_lsi_constants(model);
    let min_rho_k = rho_k.iter().copied().fold(f64::INFINITY, f64::min);
    if !(rho >= 0.0) || rho >= min_rho_k {
        return Err(Error::RhoOutOfRange { rho, min_rho_k });
    }
    if !model.is_gaussian() && probe.is_none() {
        return Err(Error::InvalidArgument("a probe (x, ξ) is required when the Hessian is not constant".into()));
    }
    if let Some((x, xi)) = probe {
        crate::error::check_dim(model.dim(), x.len())?;
        crate::error::check_dim(model.dim(), xi.len())?;
    }
    Ok(scale_cross(&cross_hessian(model, probe), model, &rho_k, rho))
}

/// `sup ‖A^ρ‖` over the probes (exact for constant Hessians).
pub(crate) fn sup_norm_a_rho(model: &GibbsModel, rho_k: &[f64], rho: f64, probes: Option<&ProbeSet>) -> f64 {
    cross_hessians(model, probes).iter().map(|c| norm_or_inf(&scale_cross(c, model, rho_k, rho))).fold(0.0, f64::max)
}

/// A certified constant from a bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub rho: f64,
    /// `ρ = min ρ_k` is a supremum of feasible values, not attained.
    pub supremum: bool,
    pub iterations: usize,
}

/// Largest `ρ` in `[0, hi]` with `feasible(ρ)`, given `feasible(0)`.
fn bisect(hi: f64, tol: f64, feasible: impl Fn(f64) -> bool) -> Certificate {
    if feasible(hi) {
        return Certificate { rho: hi, supremum: true, iterations: 0 };
    }
    let (mut lo, mut hi) = (0.0, hi);
    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Certificate { rho: lo, supremum: false, iterations }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")))
    }
}

/// Largest `ρ < min ρ_k` with `sup ‖A^ρ‖ ≤ 1`.
pub fn solve_rho_marton(model: &GibbsModel, tol: f64, probes: Option<&ProbeSet>) -> Result<Certificate> {
    check_tol(tol)?;
    let rho_k = block_lsi_constants(model);
    if rho_k.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::NoCertificate("a block Hessian is not positive definite".into()));
    }
    let crosses = cross_hessians(model, probes);
    let sup_norm =
        |rho: f64| crosses.iter().map(|c| norm_or_inf(&scale_cross(c, model, &rho_k, rho))).fold(0.0, f64::max);
    let norm0 = sup_norm(0.0);
    if norm0 >= 1.0 {
        return Err(Error::NoCertificate(format!("sup ‖A‖ = {norm0:.6} ≥ 1")));
    }
    Ok(bisect(min_of(&rho_k), tol, |rho| sup_norm(rho) <= 1.0))
}

/// `κ_kℓ = sup_x ‖K_kℓ(x)‖` with zero diagonal.
pub fn cross_block_norms(model: &GibbsModel, probes: Option<&ProbeSet>) -> DMatrix<f64> {
    let part = model.partition();
    let n = part.num_blocks();
    let points: Vec<DVector<f64>> = match probes {
        Some(p) if !model.is_gaussian() => p.pairs.iter().map(|(x, _)| x.clone()).collect(),
        _ => vec![DVector::zeros(model.dim())],
    };
    let mut kappa = DMatrix::zeros(n, n);
    for x in &points {
        let h = model.hessian(x);
        for k in 0..n {
            for l in 0..n {
                if k != l {
                    let block = linalg::submatrix(&h, part.block(k), part.block(l));
                    kappa[(k, l)] = f64::max(kappa[(k, l)], linalg::op_norm(&block));
                }
            }
        }
    }
    kappa
}

/// `K′^ρ_kℓ = κ_kℓ / √((ρ_k − ρ)(ρ_ℓ − ρ))`.
pub fn k_prime(kappa: &DMatrix<f64>, rho_k: &[f64], rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(kappa.nrows(), kappa.ncols(), |k, l| {
        let v = kappa[(k, l)];
        if v == 0.0 {
            0.0
        } else {
            v / ((rho_k[k] - rho).max(0.0).sqrt() * (rho_k[l] - rho).max(0.0).sqrt())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrCertificate {
    /// From the PSD form `Λ(ρ_k − ρ) ≥ (κ_kℓ)`.
    pub rho: f64,
    pub supremum: bool,
    /// From the Perron form `λ_max(K′^ρ) ≤ 1`.
    pub rho_perron: f64,
    /// `|λ_max(K′^ρ) − ‖K′^ρ‖|` at the certified `ρ`.
    pub perron_gap: f64,
}

/// Largest `ρ` for which the Otto–Reznikoff condition holds.
pub fn otto_reznikoff(model: &GibbsModel, tol: f64, probes: Option<&ProbeSet>) -> Result<OrCertificate> {
    check_tol(tol)?;
    let rho_k = block_lsi_constants(model);
    if rho_k.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::NoCertificate("a block Hessian is not positive definite".into()));
    }
    let kappa = cross_block_norms(model, probes);
    let psd = |rho: f64| {
        let gap = DVector::from_iterator(rho_k.len(), rho_k.iter().map(|r| r - rho));
        linalg::lambda_min(&(DMatrix::from_diagonal(&gap) - &kappa)) >= 0.0
    };
    let perron = |rho: f64| {
        let kp = k_prime(&kappa, &rho_k, rho);
        kp.iter().all(|v| v.is_finite()) && linalg::lambda_max(&kp) <= 1.0
    };
    if !psd(0.0) {
        return Err(Error::NoCertificate("Λ(ρ_k) − κ is not positive semidefinite".into()));
    }
    let hi = min_of(&rho_k);
    let main = bisect(hi, tol, psd);
    let alt = if perron(0.0) { bisect(hi, tol, perron).rho } else { 0.0 };

    let at = if main.supremum { 0.0 } else { main.rho };
    let kp = k_prime(&kappa, &rho_k, at);
    let perron_gap = (linalg::lambda_max(&kp).max(0.0) - linalg::op_norm(&kp)).abs();
    Ok(OrCertificate { rho: main.rho, supremum: main.supremum, rho_perron: alt, perron_gap })
}

/// Full set of criteria quantities for one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriteriaReport {
    pub rho_k: Vec<f64>,
    /// `1 − sup ‖A‖`; absent when some `ρ_k ≤ 0`.
    pub delta: Option<f64>,
    pub norm_a0: Option<f64>,
    pub rho_marton: Option<f64>,
    pub rho_or: Option<f64>,
    /// Extreme eigenvalues of the constant symmetric `A` (Gaussian models).
    pub lambda_max_a0: Option<f64>,
    pub lambda_min_a0: Option<f64>,
    pub perron_gap: Option<f64>,
    pub certified: bool,
    pub flags: Vec<String>,
}

impl CriteriaReport {
    pub fn min_rho_k(&self) -> f64 {
        min_of(&self.rho_k)
    }

    /// `R = Σ ρ_k`.
    pub fn rho_sum(&self) -> f64 {
        self.rho_k.iter().sum()
    }

    pub fn marton(&self) -> Result<f64> {
        self.rho_marton.ok_or_else(|| Error::NoCertificate("report carries no certified ρ".into()))
    }
}

pub mod flags {
    pub const ASSUMPTION1_FAILED: &str = "assumption1_failed";
    pub const ASSUMPTION3_FAILED: &str = "assumption3_failed";
    pub const MARTON_SUPREMUM: &str = "rho_marton_supremum_not_attained";
    pub const OR_SUPREMUM: &str = "rho_or_supremum_not_attained";
    pub const OR_INFEASIBLE: &str = "otto_reznikoff_infeasible";
    pub const OR_PERRON_MISMATCH: &str = "otto_reznikoff_perron_mismatch";
    pub const SAMPLED: &str = "sampled_bound_not_certified";
}

/// Runs every criterion. Failures are reported through `flags`.
pub fn evaluate(model: &GibbsModel, tol: f64, probes: Option<&ProbeSet>) -> Result<CriteriaReport> {
    check_tol(tol)?;
    let owned;
    let probes = if model.is_gaussian() {
        None
    } else {
        match probes {
            Some(p) => Some(p),
            None => {
                owned = ProbeSet::for_model(model, None, 0);
                owned.as_ref()
            }
        }
    };

    let rho_k = block_lsi_constants(model);
    let mut flags = Vec::new();
    if probes.is_some() {
        flags.push(flags::SAMPLED.to_string());
    }
    let assumption1 = rho_k.iter().all(|&r| r > 0.0);
    if !assumption1 {
        flags.push(flags::ASSUMPTION1_FAILED.to_string());
    }

    let norm_a0 = assumption1.then(|| sup_norm_a_rho(model, &rho_k, 0.0, probes));
    let delta = norm_a0.map(|n| 1.0 - n);
    if delta.is_some_and(|d| d <= 0.0) {
        flags.push(flags::ASSUMPTION3_FAILED.to_string());
    }

    let (lambda_max_a0, lambda_min_a0) = if assumption1 && model.is_gaussian() {
        let a = scale_cross(&cross_hessian(model, None), model, &rho_k, 0.0);
        (Some(linalg::lambda_max(&a)), Some(linalg::lambda_min(&a)))
    } else {
        (None, None)
    };

    let rho_marton = match solve_rho_marton(model, tol, probes) {
        Ok(c) => {
            if c.supremum {
                flags.push(flags::MARTON_SUPREMUM.to_string());
            }
            Some(c.rho)
        }
        Err(_) => None,
    };
    let (rho_or, perron_gap) = match otto_reznikoff(model, tol, probes) {
        Ok(c) => {
            if c.supremum {
                flags.push(flags::OR_SUPREMUM.to_string());
            }
            if (c.rho - c.rho_perron).abs() > 2.0 * tol || c.perron_gap > PERRON_TOL {
                flags.push(flags::OR_PERRON_MISMATCH.to_string());
            }
            (Some(c.rho), Some(c.perron_gap))
        }
        Err(_) => {
            if assumption1 {
                flags.push(flags::OR_INFEASIBLE.to_string());
            }
            (None, None)
        }
    };

    Ok(CriteriaReport {
        certified: rho_marton.is_some() && probes.is_none(),
        rho_k,
        delta,
        norm_a0,
        rho_marton,
        rho_or,
        lambda_max_a0,
        lambda_min_a0,
        perron_gap,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, BlockPartition};
    use crate::toeplitz::{toeplitz_precision, Band};

    fn gaussian(n: usize, k: &[f64], part: BlockPartition) -> GibbsModel {
        GibbsModel::gaussian(part, DMatrix::from_row_slice(n, n, k), DVector::zeros(n)).unwrap()
    }

    fn model_2d() -> GibbsModel {
        gaussian(2, &[1.0, -0.5, -0.5, 1.0], BlockPartition::singletons(2))
    }

    fn product() -> GibbsModel {
        gaussian(2, &[1.0, 0.0, 0.0, 1.0], BlockPartition::singletons(2))
    }

    #[test]
    fn block_constants() {
        assert_eq!(block_lsi_constants(&model_2d()), vec![1.0, 1.0]);
        let single = gaussian(2, &[2.0, 0.5, 0.5, 2.0], BlockPartition::new(vec![vec![0, 1]], 2).unwrap());
        assert!((block_lsi_constants(&single)[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn toeplitz_block_constants_with_quartic_confinement() {
        // 3·I + B_64 alone is indefinite; the quartic term makes q normalizable.
        let m = 64;
        let model = GibbsModel::new(
            BlockPartition::singletons(m),
            toeplitz_precision(m, 3.0, &Band::parse("1:1,2:-1").unwrap()),
            DVector::zeros(m),
            DVector::from_element(m, 0.01),
        )
        .unwrap();
        assert!(block_lsi_constants(&model).iter().all(|&r| r == 3.0));
        let err = otto_reznikoff(&model, DEFAULT_TOL, None).unwrap_err();
        assert!(matches!(err, Error::NoCertificate(_)));
        let report = evaluate(&model, DEFAULT_TOL, None).unwrap();
        assert!(report.rho_or.is_none() && report.rho_marton.is_none());
        assert!(report.norm_a0.unwrap() > 1.3);
        assert!(!report.certified);
    }

    #[test]
    fn a_rho_examples() {
        let a = build_a_rho(&model_2d(), 0.0, None).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, -0.5, -0.5, 0.0]));
        let a = build_a_rho(&model_2d(), 0.5, None).unwrap();
        assert!((a - DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0])).amax() < 1e-15);
        assert_eq!(build_a_rho(&product(), 0.7, None).unwrap(), DMatrix::zeros(2, 2));
        assert!(matches!(build_a_rho(&model_2d(), 1.0, None), Err(Error::RhoOutOfRange { .. })));
    }

    #[test]
    fn a_rho_uses_xi_on_the_column_block() {
        let part = BlockPartition::new(vec![vec![0], vec![1, 2]], 3).unwrap();
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 2.0, 0.1, 0.0, 0.1, 2.0]);
        let model = GibbsModel::new(part, k, DVector::zeros(3), DVector::from_element(3, 1.0)).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let xi = DVector::from_vec(vec![-1.0, -2.0, -3.0]);
        let a = build_a_rho(&model, 0.0, Some((&x, &xi))).unwrap();
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 2)], 0.0);
        assert!(build_a_rho(&model, 0.0, None).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(op_norm(&DMatrix::zeros(4, 4)), 0.0);
        assert!((op_norm(&DMatrix::from_row_slice(2, 2, &[0.0, -0.5, -0.5, 0.0])) - 0.5).abs() < 1e-15);
        let b = Band::parse("1:1,2:-1").unwrap().section(64);
        let n = op_norm(&b);
        assert!(n > 3.98 && n < 4.0, "{n}");
    }

    #[test]
    fn marton_examples() {
        let c = solve_rho_marton(&model_2d(), DEFAULT_TOL, None).unwrap();
        assert!((c.rho - 0.5).abs() < 1e-9 && !c.supremum);
        let c = solve_rho_marton(&product(), DEFAULT_TOL, None).unwrap();
        assert_eq!(c.rho, 1.0);
        assert!(c.supremum);
        let strong = gaussian(2, &[1.0, -0.9, -0.9, 1.0], BlockPartition::singletons(2));
        assert!((solve_rho_marton(&strong, DEFAULT_TOL, None).unwrap().rho - 0.1).abs() < 1e-9);
        let marginal = gaussian(2, &[1.0, 0.999, 0.999, 1.0], BlockPartition::singletons(2));
        assert!((solve_rho_marton(&marginal, DEFAULT_TOL, None).unwrap().rho - 0.001).abs() < 1e-9);
    }

    #[test]
    fn marton_supremum_with_uncoupled_weakest_block() {
        // block 0 has the smallest ρ_k and no interactions
        let k = [0.5, 0.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.5, 2.0];
        let model = gaussian(3, &k, BlockPartition::singletons(3));
        let c = solve_rho_marton(&model, DEFAULT_TOL, None).unwrap();
        assert_eq!(c.rho, 0.5);
        assert!(c.supremum);
    }

    #[test]
    fn or_examples() {
        let c = otto_reznikoff(&model_2d(), DEFAULT_TOL, None).unwrap();
        assert!((c.rho - 0.5).abs() < 1e-9);
        assert!((c.rho - c.rho_perron).abs() < 2.0 * DEFAULT_TOL);
        assert!(c.perron_gap < PERRON_TOL);
        let c = otto_reznikoff(&product(), DEFAULT_TOL, None).unwrap();
        assert_eq!(c.rho, 1.0);
        assert!(c.supremum);
    }

    #[test]
    fn or_is_weaker_for_repulsive_mixed_signs() {
        // antiferromagnetic-ish 3-cycle: the signed criterion keeps signs, the comparator takes moduli
        let k = [2.0, 0.6, -0.6, 0.6, 2.0, 0.6, -0.6, 0.6, 2.0];
        let model = gaussian(3, &k, BlockPartition::singletons(3));
        let r = evaluate(&model, DEFAULT_TOL, None).unwrap();
        assert!(r.rho_or.unwrap() <= r.rho_marton.unwrap() + 1e-8);
    }

    #[test]
    fn a_rho_norm_increases_in_rho() {
        let model = model_2d();
        let rho_k = block_lsi_constants(&model);
        let mut prev = 0.0;
        for i in 0..100 {
            let rho = 0.99 * i as f64 / 100.0;
            let n = sup_norm_a_rho(&model, &rho_k, rho, None);
            assert!(n > prev);
            prev = n;
        }
    }

    #[test]
    fn report_for_model_2d() {
        let model =
            parse_model(r#"{"dim":2,"partition":[[0],[1]],"mean":[0,0],"precision":[[1,-0.5],[-0.5,1]]}"#).unwrap();
        let r = evaluate(&model, DEFAULT_TOL, None).unwrap();
        assert!((r.rho_marton.unwrap() - 0.5).abs() < 1e-9);
        assert!((r.rho_or.unwrap() - 0.5).abs() < 1e-9);
        assert!((r.delta.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.norm_a0.unwrap() + r.delta.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r.lambda_min_a0, Some(-0.5));
        assert!(r.certified);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }

    #[test]
    fn quartic_report_is_not_certified() {
        let part = BlockPartition::singletons(2);
        let model = GibbsModel::new(
            part,
            DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
            DVector::zeros(2),
            DVector::from_element(2, 0.2),
        )
        .unwrap();
        let r = evaluate(&model, DEFAULT_TOL, None).unwrap();
        assert!(!r.certified);
        assert!(r.flags.iter().any(|f| f == flags::SAMPLED));
        // separable quartic terms leave the cross Hessian constant
        assert!((r.rho_marton.unwrap() - 0.5).abs() < 1e-9);
    }
}
