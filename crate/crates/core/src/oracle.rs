//! Brute-force oracles that the closed forms are checked against, plus the
//! per-block transport/entropy checks.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::CriteriaReport;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{self, GaussianDist};
use crate::gibbs::EXACT_SLACK;
use crate::linalg;
use crate::model::GibbsModel;

/// Largest mass defect accepted by the quadrature oracles.
pub const MAX_MASS_DEFECT: f64 = 1e-4;
pub const MAX_QUAD_DIM: usize = 3;

/// Tensor-grid trapezoidal estimate with the masses of both densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub mass_p: f64,
    pub mass_q: f64,
    /// `max(|mass_p − 1|, |mass_q − 1|)`.
    pub mass_defect: f64,
}

struct Grid {
    axes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl Grid {
    fn new(bounds: &[(f64, f64)], pts: usize) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > MAX_QUAD_DIM {
            return Err(Error::InvalidArgument(format!("quadrature supports 1..={MAX_QUAD_DIM} dimensions")));
        }
        if pts < 3 {
            return Err(Error::InvalidArgument("need at least 3 points per dimension".into()));
        }
        let mut axes = Vec::new();
        let mut weights = Vec::new();
        for &(lo, hi) in bounds {
            if !(hi > lo) {
                return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
            }
            let h = (hi - lo) / (pts - 1) as f64;
            axes.push((0..pts).map(|i| lo + i as f64 * h).collect());
            weights.push((0..pts).map(|i| if i == 0 || i == pts - 1 { 0.5 * h } else { h }).collect());
        }
        Ok(Self { axes, weights })
    }

    /// `Σ w(x) f(x)` for each of the three accumulators returned by `f`,
    /// parallel over the first axis, reduced in order.
    fn integrate3(&self, f: impl Fn(&[f64]) -> [f64; 3] + Sync) -> [f64; 3] {
        let d = self.axes.len();
        let rows: Vec<[f64; 3]> = (0..self.axes[0].len())
            .into_par_iter()
            .map(|i0| {
                let mut acc = [0.0; 3];
                let mut x = vec![0.0; d];
                x[0] = self.axes[0][i0];
                let inner: usize = self.axes[1..].iter().map(Vec::len).product();
                for flat in 0..inner {
                    let mut rem = flat;
                    let mut w = self.weights[0][i0];
                    for a in (1..d).rev() {
                        let n = self.axes[a].len();
                        let idx = rem % n;
                        rem /= n;
                        x[a] = self.axes[a][idx];
                        w *= self.weights[a][idx];
                    }
                    let v = f(&x);
                    for k in 0..3 {
                        acc[k] += w * v[k];
                    }
                }
                acc
            })
            .collect();
        rows.iter().fold([0.0; 3], |a, r| [a[0] + r[0], a[1] + r[1], a[2] + r[2]])
    }
}

fn finish(value: f64, mass_p: f64, mass_q: f64) -> Result<QuadResult> {
    let mass_defect = (mass_p - 1.0).abs().max((mass_q - 1.0).abs());
    if mass_defect > MAX_MASS_DEFECT {
        return Err(Error::MassDefect { defect: mass_defect, limit: MAX_MASS_DEFECT });
    }
    Ok(QuadResult { value, mass_p, mass_q, mass_defect })
}

/// `∫ p log(p/q)` over the box.
pub fn quad_kl<P, Q>(p: P, q: Q, bounds: &[(f64, f64)], pts_per_dim: usize) -> Result<QuadResult>
where
    P: Fn(&[f64]) -> f64 + Sync,
    Q: Fn(&[f64]) -> f64 + Sync,
{
    let grid = Grid::new(bounds, pts_per_dim)?;
    let [value, mp, mq] = grid.integrate3(|x| {
        let (pv, qv) = (p(x), q(x));
        let term = if pv > 0.0 { pv * (pv / qv).ln() } else { 0.0 };
        [term, pv, qv]
    });
    finish(value, mp, mq)
}

/// `∫ |∇ log(p/q)|² p` over the box, gradients by central differences with
/// step `box_width / pts_per_dim` along each axis.
pub fn quad_fisher<P, Q>(p: P, q: Q, bounds: &[(f64, f64)], pts_per_dim: usize) -> Result<QuadResult>
where
    P: Fn(&[f64]) -> f64 + Sync,
    Q: Fn(&[f64]) -> f64 + Sync,
{
    let grid = Grid::new(bounds, pts_per_dim)?;
    let steps: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / pts_per_dim as f64).collect();
    let log_ratio = |x: &[f64]| p(x).ln() - q(x).ln();
    let [value, mp, mq] = grid.integrate3(|x| {
        let pv = p(x);
        let mut grad_sq = 0.0;
        if pv > 0.0 {
            let mut y = x.to_vec();
            for (a, &h) in steps.iter().enumerate() {
                y[a] = x[a] + h;
                let up = log_ratio(&y);
                y[a] = x[a] - h;
                let down = log_ratio(&y);
                y[a] = x[a];
                let g = (up - down) / (2.0 * h);
                if g.is_finite() {
                    grad_sq += g * g;
                }
            }
        }
        [pv * grad_sq, pv, q(x)]
    });
    finish(value, mp, mq)
}

/// Quadratic Wasserstein distance between two equal-size empirical laws on
/// the line, via the monotone (quantile) coupling. Inputs need not be sorted.
pub fn w2_empirical_1d(samples_p: &[f64], samples_q: &[f64]) -> Result<f64> {
    check_dim(samples_p.len(), samples_q.len())?;
    if samples_p.is_empty() {
        return Err(Error::InvalidArgument("empty sample sets".into()));
    }
    let sorted = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(samples_p), sorted(samples_q));
    let msq = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(msq.sqrt())
}

/// Per-block transport/entropy sums comparing the conditionals given
/// `z̄^(k)` and `ū^(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop4Check {
    /// `Σ ρ_k W²(Q^(k)(·|z̄), Q^(k)(·|ū))`.
    pub lhs_w2_sum: f64,
    /// `2 Σ D(Q^(k)(·|z̄) ‖ Q^(k)(·|ū))`.
    pub mid_kl_sum: f64,
    /// `(1 − δ)² Σ ρ_k |z^(k) − u^(k)|²`.
    pub rhs: f64,
    pub holds_first: bool,
    pub holds_second: bool,
}

impl Prop4Check {
    pub fn holds(&self) -> bool {
        self.holds_first && self.holds_second
    }
}

pub fn prop4_check(
    model: &GibbsModel,
    report: &CriteriaReport,
    z: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Prop4Check> {
    let q = model.target()?;
    check_dim(model.dim(), z.len())?;
    check_dim(model.dim(), u.len())?;
    let delta = report.delta.filter(|&d| d > 0.0).ok_or_else(|| Error::NoCertificate("δ ≤ 0".into()))?;
    let part = model.partition();
    let (mut lhs, mut mid, mut dist) = (0.0, 0.0, 0.0);
    for (k, &rk) in report.rho_k.iter().enumerate() {
        let (b, c) = (part.block(k), part.complement(k));
        let at_z = gaussian::conditional(&q, part, k, &linalg::subvector(z, c))?;
        let at_u = gaussian::conditional(&q, part, k, &linalg::subvector(u, c))?;
        // both conditionals have covariance (K_kk)⁻¹
        let shift = at_z.mean() - at_u.mean();
        let k_bb = linalg::submatrix(model.precision(), b, b);
        lhs += rk * shift.norm_squared();
        mid += shift.dot(&(&k_bb * &shift));
        dist += rk * (linalg::subvector(z, b) - linalg::subvector(u, b)).norm_squared();
    }
    let rhs = (1.0 - delta).powi(2) * dist;
    Ok(Prop4Check {
        lhs_w2_sum: lhs,
        mid_kl_sum: mid,
        rhs,
        holds_first: lhs <= mid + EXACT_SLACK,
        holds_second: mid <= rhs + EXACT_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportCheck {
    pub w2sq: f64,
    /// `(2/ρ) D(p‖q)`.
    pub bound: f64,
    pub holds: bool,
}

impl TransportCheck {
    /// `w2sq / bound`, or 0 when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.bound > 0.0 {
            self.w2sq / self.bound
        } else {
            0.0
        }
    }
}

/// `W²(p, q) ≤ (2/ρ) D(p‖q)` with the certified `ρ`.
pub fn transport_check(p: &GaussianDist, model: &GibbsModel, report: &CriteriaReport) -> Result<TransportCheck> {
    let rho = report.marton()?;
    let q = model.target()?;
    let w2sq = gaussian::w2_squared(p, &q)?;
    let bound = 2.0 / rho * gaussian::kl(p, &q)?;
    Ok(TransportCheck { w2sq, bound, holds: w2sq <= bound + EXACT_SLACK })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria;
    use crate::model::BlockPartition;
    use nalgebra::DMatrix;

    fn n1(mu: f64, var: f64) -> impl Fn(&[f64]) -> f64 + Sync {
        move |x: &[f64]| (-(x[0] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn quad_kl_examples() {
        let b = [(-10.0, 10.0)];
        assert!(quad_kl(n1(0.0, 1.0), n1(0.0, 1.0), &b, 4001).unwrap().value.abs() < 1e-8);
        assert!((quad_kl(n1(1.0, 1.0), n1(0.0, 1.0), &b, 4001).unwrap().value - 0.5).abs() < 1e-6);
        let small = quad_kl(n1(0.0, 1.0), n1(0.0, 1.0), &[(-2.0, 2.0)], 401);
        assert!(matches!(small, Err(Error::MassDefect { .. })));
        assert!(quad_kl(n1(0.0, 1.0), n1(0.0, 1.0), &[(0.0, 1.0); 4], 5).is_err());
    }

    #[test]
    fn quad_fisher_examples() {
        let b = [(-12.0, 12.0)];
        assert!(quad_fisher(n1(0.0, 1.0), n1(0.0, 1.0), &b, 4001).unwrap().value.abs() < 1e-6);
        assert!((quad_fisher(n1(1.5, 1.0), n1(0.0, 1.0), &b, 4001).unwrap().value - 2.25).abs() < 1e-5);
        assert!((quad_fisher(n1(0.0, 2.0), n1(0.0, 1.0), &b, 4001).unwrap().value - 0.5).abs() < 1e-5);
    }

    #[test]
    fn w2_empirical_examples() {
        let a = [0.3, -1.0, 2.0, 0.7];
        assert_eq!(w2_empirical_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 1.25).collect();
        assert!((w2_empirical_1d(&a, &shifted).unwrap() - 1.25).abs() < 1e-15);
        assert!(w2_empirical_1d(&a, &a[..3]).is_err());
    }

    fn model_2d() -> GibbsModel {
        GibbsModel::gaussian(
            BlockPartition::singletons(2),
            DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
            DVector::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn prop4_examples() {
        let model = model_2d();
        let report = criteria::evaluate(&model, criteria::DEFAULT_TOL, None).unwrap();
        let z = DVector::zeros(2);
        let same = prop4_check(&model, &report, &z, &z).unwrap();
        assert_eq!((same.lhs_w2_sum, same.mid_kl_sum, same.rhs), (0.0, 0.0, 0.0));
        // block 0 conditional mean moves by 1: W² = 1, 2·KL = 1; rhs = 0.25·(1·4)
        let u = DVector::from_vec(vec![0.0, 2.0]);
        let c = prop4_check(&model, &report, &z, &u).unwrap();
        assert!((c.lhs_w2_sum - 1.0).abs() < 1e-14);
        assert!((c.mid_kl_sum - 1.0).abs() < 1e-14);
        assert!((c.rhs - 1.0).abs() < 1e-14);
        assert!(c.holds());
    }

    #[test]
    fn transport_examples() {
        let model = model_2d();
        let report = criteria::evaluate(&model, criteria::DEFAULT_TOL, None).unwrap();
        let q = model.target().unwrap();
        let same = transport_check(&q, &model, &report).unwrap();
        assert!(same.holds && same.w2sq == 0.0 && same.bound == 0.0);
        let p = q.shifted(&DVector::from_vec(vec![0.7, 0.7])).unwrap();
        let c = transport_check(&p, &model, &report).unwrap();
        assert!(c.holds && c.ratio() > 0.99, "{c:?}");
    }
}
