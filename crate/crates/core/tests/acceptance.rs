//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use blocklsi_core::campaign::{self, SeedTree};
use blocklsi_core::criteria::{self, DEFAULT_TOL};
use blocklsi_core::fokker_planck::{self, uniform_grid};
use blocklsi_core::gaussian::{self, GaussianDist};
use blocklsi_core::gibbs::{self, ContractionOptions};
use blocklsi_core::oracle::{self, quad_fisher, quad_kl, w2_empirical_1d};
use blocklsi_core::toeplitz::{toeplitz_spectrum_report, Band};
use blocklsi_core::{linalg, BlockPartition, CriteriaReport, GibbsModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const MASTER_SEED: u64 = 20_240_601;

type Check = fn(&SeedTree) -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn model_2d() -> GibbsModel {
    GibbsModel::gaussian(
        BlockPartition::singletons(2),
        DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
        DVector::zeros(2),
    )
    .unwrap()
}

fn evaluate(model: &GibbsModel) -> CriteriaReport {
    criteria::evaluate(model, DEFAULT_TOL, None).expect("Gaussian models always evaluate")
}

fn within_time(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn toeplitz(_: &SeedTree) -> Outcome {
    let start = Instant::now();
    let minus = toeplitz_spectrum_report(512, 3.0, &Band::parse("1:1,2:-1").unwrap()).unwrap();
    let plus = toeplitz_spectrum_report(512, 3.0, &Band::parse("1:1,2:1").unwrap()).unwrap();
    let elapsed = start.elapsed();
    let max_minus = minus.b.symbol.max_symbol;
    let max_plus = plus.b.symbol.max_symbol;
    let section = minus.b.finite_section.lambda_max;
    let sup_abs = minus.b.symbol.sup_abs_symbol;
    let noted = minus.notes.iter().any(|n| n.contains("sup|symbol|"));
    let pass = (max_minus - 2.25).abs() <= 1e-6
        && (max_plus - 4.0).abs() <= 1e-6
        && (section - 2.25).abs() <= 0.02
        && (sup_abs - 4.0).abs() <= 1e-6
        && noted
        && within_time(elapsed, 5.0);
    outcome(
        pass,
        format!(
            "max_symbol {{1:1,2:-1}} = {max_minus:.9}, {{1:1,2:1}} = {max_plus:.9}, lambda_max(B_512) = {section:.6}, \
             sup|symbol| = {sup_abs:.6} (noted: {noted}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn tightness(tree: &SeedTree) -> Outcome {
    let start = Instant::now();
    let mut rng = tree.stream("tightness");
    let mut models = vec![model_2d()];
    models.extend((0..100).map(|_| campaign::random_attractive_chain(&mut rng, 8)));
    let worst = models
        .iter()
        .map(|m| match evaluate(m).rho_marton {
            Some(r) => (r - linalg::lambda_min(m.precision())).abs(),
            None => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && within_time(elapsed, 10.0),
        format!(
            "{} models, max |rho_marton - lambda_min(K)| = {worst:.3e}, {:.2}s",
            models.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn dominance(tree: &SeedTree) -> Outcome {
    let start = Instant::now();
    let mut rng = tree.stream("dominance");
    let (mut compared, mut violations, mut worst) = (0, 0, f64::NEG_INFINITY);
    for _ in 0..500 {
        let model = campaign::random_certified_model(&mut rng, 6);
        let report = evaluate(&model);
        if let (Some(or), Some(marton)) = (report.rho_or, report.rho_marton) {
            compared += 1;
            worst = worst.max(or - marton);
            if or > marton + 1e-8 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && compared > 0 && within_time(elapsed, 30.0),
        format!(
            "{compared}/500 models with both certificates, {violations} violations, max(rho_or - rho_marton) = {worst:.3e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn soundness(tree: &SeedTree) -> Outcome {
    let mut rng = tree.stream("soundness");
    let mut models = vec![model_2d()];
    for i in 0..600 {
        models.push(match i % 3 {
            0 => campaign::random_certified_model(&mut rng, 6),
            1 => campaign::random_attractive_chain(&mut rng, 8),
            _ => {
                let n = rng.random_range(2..=6);
                let part = campaign::random_partition(&mut rng, n);
                let k = campaign::random_spd(&mut rng, n, 0.1);
                GibbsModel::gaussian(part, k, DVector::zeros(n)).unwrap()
            }
        });
    }
    let (mut certified, mut violations, mut worst) = (0, 0, f64::NEG_INFINITY);
    for m in &models {
        if let Some(r) = evaluate(m).rho_marton {
            certified += 1;
            let excess = r - linalg::lambda_min(m.precision());
            worst = worst.max(excess);
            if excess > 1e-8 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && certified > 0,
        format!(
            "{} models ({certified} certified), {violations} violations, max(rho_marton - lambda_min(K)) = {worst:.3e}",
            models.len()
        ),
    )
}

fn theorem1(tree: &SeedTree) -> Outcome {
    let mut rng = tree.stream("theorem1");
    let (mut violations, mut min_slack) = (0, f64::INFINITY);
    for _ in 0..200 {
        let model = campaign::random_certified_model(&mut rng, 6);
        let report = evaluate(&model);
        let p = campaign::random_gaussian(&mut rng, model.dim(), 1.5);
        let c = gibbs::verify_theorem1(&p, &model, &report).unwrap();
        min_slack = min_slack.min(c.rhs - c.lhs);
        if !c.holds {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("200 pairs, {violations} violations, min(rhs - lhs) = {min_slack:.3e}"))
}

fn entropy_drop(tree: &SeedTree) -> Outcome {
    let mut rng = tree.stream("entropy-drop");
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..200 {
        let model = campaign::random_certified_model(&mut rng, 6);
        let p = campaign::random_gaussian(&mut rng, model.dim(), 1.5);
        let k = rng.random_range(0..model.partition().num_blocks());
        let c = gibbs::entropy_drop_identity(&p, &model, k).unwrap();
        worst = worst.max(c.gap.abs() / (1.0 + c.lhs.abs()));
        if c.gap.abs() > 1e-9 * (1.0 + c.lhs) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("200 triples, {failures} failures, max |gap|/(1+lhs) = {worst:.3e}"))
}

fn contraction(_: &SeedTree) -> Outcome {
    let start = Instant::now();
    let model = model_2d();
    let report = evaluate(&model);
    let q = model.target().unwrap();
    let p0 = q.shifted(&DVector::from_vec(vec![2.0, 0.0])).unwrap();
    let opts = ContractionOptions { steps: 8, nsamples: 200_000, seed: 42, ..Default::default() };
    let table = gibbs::verify_contraction(&p0, &model, &report, &opts).unwrap();
    let elapsed = start.elapsed();
    let worst =
        table.rows.iter().map(|r| r.kl_estimate - 3.0 * r.std_error - r.bound).fold(f64::NEG_INFINITY, f64::max);
    let pass = (table.rho - 0.5).abs() < 1e-9
        && (table.rho_sum - 2.0).abs() < 1e-12
        && (table.factor - 0.75).abs() < 1e-9
        && table.all_hold()
        && within_time(elapsed, 60.0);
    outcome(
        pass,
        format!(
            "rho = {:.9}, R = {}, factor = {:.9}, {} steps, max(estimate - 3SE - bound) = {worst:.3e}, {:.2}s",
            table.rho,
            table.rho_sum,
            table.factor,
            table.rows.len() - 1,
            elapsed.as_secs_f64()
        ),
    )
}

fn dissipation(tree: &SeedTree) -> Outcome {
    let mut rng = tree.stream("dissipation");
    let grid = uniform_grid(5.0, 1e-3);
    let (mut failures, mut worst_res, mut worst_int) = (0, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let model = campaign::random_certified_model(&mut rng, 5);
        let p0 = campaign::random_gaussian(&mut rng, model.dim(), 1.5);
        let r = fokker_planck::dissipation_check(&p0, &model, &grid).unwrap();
        let max_i = r.trace.fisher_values.iter().copied().fold(0.0, f64::max);
        worst_res = worst_res.max(r.max_residual / (1.0 + max_i));
        worst_int = worst_int.max(r.integral_rel_error());
        if !r.holds || r.integral_rel_error() > 1e-4 {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("20 instances, {failures} failures, max residual/(1+max I) = {worst_res:.3e}, max integral rel error = {worst_int:.3e}"),
    )
}

fn transport(tree: &SeedTree) -> Outcome {
    let mut rng = tree.stream("transport");
    let (mut violations, mut max_ratio) = (0, 0.0f64);
    for _ in 0..500 {
        let model = campaign::random_certified_model(&mut rng, 6);
        let report = evaluate(&model);
        let p = campaign::random_gaussian(&mut rng, model.dim(), 1.5);
        let c = oracle::transport_check(&p, &model, &report).unwrap();
        max_ratio = max_ratio.max(c.ratio());
        if !c.holds {
            violations += 1;
        }
    }
    let mut tight_models = vec![model_2d()];
    tight_models.extend((0..20).map(|_| campaign::random_attractive_chain(&mut rng, 6)));
    let min_tight = tight_models
        .iter()
        .map(|m| {
            let report = evaluate(m);
            let (_, vecs) = linalg::sym_eigen(m.precision());
            let p = m.target().unwrap().shifted(&(vecs.column(0) * 0.7)).unwrap();
            oracle::transport_check(&p, m, &report).unwrap().ratio()
        })
        .fold(f64::INFINITY, f64::min);
    outcome(
        violations == 0 && min_tight >= 0.99,
        format!(
            "500 pairs, {violations} violations, max ratio = {max_ratio:.6}; bottom-eigenvector shifts on {} tight models: min ratio = {min_tight:.9}",
            tight_models.len()
        ),
    )
}

fn prop4(tree: &SeedTree) -> Outcome {
    let mut rng = tree.stream("prop4");
    let (mut first, mut second) = (0, 0);
    for _ in 0..500 {
        let model = campaign::random_certified_model(&mut rng, 6);
        let report = evaluate(&model);
        let z = campaign::random_point(&mut rng, model.dim(), 2.0);
        let u = campaign::random_point(&mut rng, model.dim(), 2.0);
        let c = oracle::prop4_check(&model, &report, &z, &u).unwrap();
        first += usize::from(!c.holds_first);
        second += usize::from(!c.holds_second);
    }
    outcome(first + second == 0, format!("500 triples, violations: first {first}, second {second}"))
}

fn g(mean: &[f64], cov: &[f64]) -> GaussianDist {
    let n = mean.len();
    GaussianDist::new(DVector::from_row_slice(mean), DMatrix::from_row_slice(n, n, cov)).unwrap()
}

fn oracle_agreement(tree: &SeedTree) -> Outcome {
    let q2 = model_2d().target().unwrap();
    let set = vec![
        (g(&[0.0], &[1.0]), g(&[0.0], &[1.0])),
        (g(&[1.0], &[1.0]), g(&[0.0], &[1.0])),
        (g(&[0.0], &[2.0]), g(&[0.0], &[1.0])),
        (g(&[-0.5], &[0.7]), g(&[0.3], &[1.5])),
        (q2.shifted(&DVector::from_vec(vec![1.0, 1.0])).unwrap(), q2.clone()),
        (g(&[0.5, -0.3], &[0.8, 0.2, 0.2, 0.5]), q2.clone()),
        (g(&[-1.0, 0.4], &[1.2, -0.3, -0.3, 0.9]), g(&[0.2, 0.1], &[0.7, 0.1, 0.1, 1.1])),
    ];
    let mut worst = 0.0f64;
    for (p, q) in &set {
        let bounds: Vec<(f64, f64)> = (0..p.dim())
            .map(|i| {
                let sd = p.cov()[(i, i)].max(q.cov()[(i, i)]).sqrt();
                (p.mean()[i].min(q.mean()[i]) - 11.0 * sd, p.mean()[i].max(q.mean()[i]) + 11.0 * sd)
            })
            .collect();
        let pts = if p.dim() == 1 { 4001 } else { 601 };
        let qk = quad_kl(|x| p.density(x), |x| q.density(x), &bounds, pts).unwrap().value;
        let qf = quad_fisher(|x| p.density(x), |x| q.density(x), &bounds, pts).unwrap().value;
        worst = worst.max((qk - gaussian::kl(p, q).unwrap()).abs());
        worst = worst.max((qf - gaussian::fisher(p, q).unwrap()).abs());
    }
    let mut rng = tree.stream("quantile-coupling");
    let n = 100_000;
    let a: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let empirical = w2_empirical_1d(&a, &b).unwrap();
    let bures = gaussian::w2(&g(&[0.0], &[1.0]), &g(&[0.0], &[4.0])).unwrap();
    let gap = (empirical - bures).abs();
    outcome(
        worst <= 1e-5 && gap <= 0.02,
        format!(
            "{} pairs, max |closed - quadrature| = {worst:.3e}; Bures {bures:.6} vs quantile coupling {empirical:.6}",
            set.len()
        ),
    )
}

fn main() -> ExitCode {
    let tree = SeedTree::new(MASTER_SEED);
    let criteria: [(&str, Check); 11] = [
        ("toeplitz example", toeplitz),
        ("gaussian tightness", tightness),
        ("criterion dominance", dominance),
        ("soundness", soundness),
        ("block entropy inequality", theorem1),
        ("entropy-drop identity", entropy_drop),
        ("gibbs contraction", contraction),
        ("dissipation", dissipation),
        ("transport", transport),
        ("block transport/entropy bounds", prop4),
        ("oracle agreement", oracle_agreement),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run(&tree);
        println!("acceptance {:>2} {:<32} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
