use std::fs;
use std::path::Path;

use blocklsi_core::campaign::{self, SeedTree};
use blocklsi_core::criteria::{self, CriteriaReport};
use blocklsi_core::fokker_planck::{self, uniform_grid, DECAY_SLACK};
use blocklsi_core::gibbs::{self, ContractionOptions, EXACT_SLACK, SE_BAND};
use blocklsi_core::model::{verify_assumptions, ModelFile};
use blocklsi_core::oracle;
use blocklsi_core::toeplitz::{toeplitz_spectrum_report, Band, SpectrumReport};
use blocklsi_core::{AssumptionReport, Error, GaussianDist, GibbsModel, ProbeSet, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::args::{Check, Cli, Command, CriteriaArgs, ToeplitzArgs, VerifyArgs};
use crate::output::{self, Row, EXIT_NO_CERTIFICATE, EXIT_PASS, EXIT_VERIFY_FAILED};

const INTEGRAL_REL_TOL: f64 = 1e-4;

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Criteria(a) => criteria_cmd(&a),
        Command::Verify(a) => verify_cmd(&a),
        Command::Toeplitz(a) => toeplitz_cmd(&a),
    }
}

fn read_model(path: &Path) -> Result<(serde_json::Value, GibbsModel)> {
    let text = fs::read_to_string(path)?;
    let echo: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let file: ModelFile = serde_json::from_value(echo.clone()).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((echo, file.into_model()?))
}

#[derive(Deserialize)]
struct ProbePair {
    x: Vec<f64>,
    xi: Vec<f64>,
}

#[derive(Serialize)]
struct ProbeInfo {
    source: &'static str,
    count: usize,
    seed: Option<u64>,
}

fn probes_for(model: &GibbsModel, spec: Option<&str>, seed: u64) -> Result<Option<(ProbeSet, ProbeInfo)>> {
    if model.is_gaussian() {
        return Ok(None);
    }
    let lhs = |count: usize| {
        let set = ProbeSet::for_model(model, Some(count), seed).expect("non-Gaussian model");
        let info = ProbeInfo { source: "latin_hypercube", count: set.pairs.len(), seed: Some(seed) };
        (set, info)
    };
    let Some(spec) = spec else {
        return Ok(Some(lhs(ProbeSet::DEFAULT_COUNT)));
    };
    if let Ok(count) = spec.parse::<usize>() {
        return Ok(Some(lhs(count)));
    }
    let text = fs::read_to_string(spec)?;
    let pairs: Vec<ProbePair> = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = model.dim();
    let mut set = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.x.len() != n || p.xi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.x.len().max(p.xi.len()) });
        }
        set.push((DVector::from_vec(p.x), DVector::from_vec(p.xi)));
    }
    if set.is_empty() {
        return Err(Error::InvalidArgument("probe file is empty".into()));
    }
    let info = ProbeInfo { source: "file", count: set.len(), seed: None };
    Ok(Some((ProbeSet { pairs: set }, info)))
}

#[derive(Serialize)]
struct CriteriaOutput<'a> {
    model: serde_json::Value,
    #[serde(flatten)]
    report: &'a CriteriaReport,
    assumptions: AssumptionReport,
    tol: f64,
    probes: Option<ProbeInfo>,
}

fn criteria_cmd(a: &CriteriaArgs) -> Result<u8> {
    let (echo, model) = read_model(&a.model)?;
    let probes = probes_for(&model, a.probes.as_deref(), a.seed)?;
    let set = probes.as_ref().map(|(s, _)| s);
    let report = criteria::evaluate(&model, a.tol, set)?;
    let assumptions = verify_assumptions(&model, set);
    let out = CriteriaOutput { model: echo, report: &report, assumptions, tol: a.tol, probes: probes.map(|(_, i)| i) };
    output::emit_json(&out, a.out.as_deref())?;
    Ok(if report.rho_marton.is_some() { EXIT_PASS } else { EXIT_NO_CERTIFICATE })
}

fn toeplitz_cmd(a: &ToeplitzArgs) -> Result<u8> {
    let band = Band::parse(&a.band)?;
    let report: SpectrumReport = toeplitz_spectrum_report(a.m, a.diag, &band)?;
    output::emit_json(&report, a.out.as_deref())?;
    Ok(EXIT_PASS)
}

fn shifted_target(q: &GaussianDist, shift: &[f64]) -> Result<GaussianDist> {
    if shift.len() != q.dim() {
        return Err(Error::InvalidArgument(format!(
            "--shift has {} entries, model dimension is {}",
            shift.len(),
            q.dim()
        )));
    }
    q.shifted(&DVector::from_column_slice(shift))
}

fn unit_shift(dim: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = scale;
    v
}

/// Starting laws: the shifted target when `--shift` is given, otherwise
/// `trials` random Gaussians centred near the model mean.
fn start_laws(
    a: &VerifyArgs,
    model: &GibbsModel,
    q: &GaussianDist,
    stream: &str,
) -> Result<Vec<(String, GaussianDist)>> {
    if let Some(shift) = &a.shift {
        return Ok(vec![(format!("shift={};seed={}", join(shift), a.seed), shifted_target(q, shift)?)]);
    }
    let mut rng = SeedTree::new(a.seed).stream(stream);
    (0..a.trials)
        .map(|i| {
            let p = campaign::random_gaussian(&mut rng, model.dim(), 1.5);
            Ok((format!("trial={i};seed={}", a.seed), p.shifted(model.mean())?))
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn certified_report(model: &GibbsModel, tol: f64) -> Result<CriteriaReport> {
    let report = criteria::evaluate(model, tol, None)?;
    report.marton()?;
    Ok(report)
}

fn verify_cmd(a: &VerifyArgs) -> Result<u8> {
    let (_, model) = read_model(&a.model)?;
    let q = model.target()?;
    let rows = match a.check {
        Check::Theorem1 => {
            let report = certified_report(&model, a.tol)?;
            let mut rows = Vec::new();
            for (param, p) in start_laws(a, &model, &q, "theorem1")? {
                let c = gibbs::verify_theorem1(&p, &model, &report)?;
                rows.push(Row::new("theorem1", param, c.lhs, c.rhs, EXACT_SLACK, c.holds));
            }
            rows
        }
        Check::Transport => {
            let report = certified_report(&model, a.tol)?;
            let mut rows = Vec::new();
            for (param, p) in start_laws(a, &model, &q, "transport")? {
                let c = oracle::transport_check(&p, &model, &report)?;
                rows.push(Row::new("transport", param, c.w2sq, c.bound, EXACT_SLACK, c.holds));
            }
            rows
        }
        Check::Gibbs => {
            let report = certified_report(&model, a.tol)?;
            let shift = a.shift.clone().unwrap_or_else(|| unit_shift(model.dim(), 2.0));
            let p0 = shifted_target(&q, &shift)?;
            let opts = ContractionOptions { steps: a.steps, nsamples: a.samples, seed: a.seed, ..Default::default() };
            let table = gibbs::verify_contraction(&p0, &model, &report, &opts)?;
            table
                .rows
                .iter()
                .map(|r| {
                    let param = format!(
                        "step={};components={};samples={};seed={};factor={}",
                        r.step,
                        r.components,
                        if r.exact { 0 } else { a.samples },
                        a.seed,
                        table.factor
                    );
                    let tol = if r.exact { EXACT_SLACK } else { SE_BAND * r.std_error };
                    Row::new("gibbs", param, r.kl_estimate, r.bound, tol, !r.violated)
                })
                .collect()
        }
        Check::Dissipation => {
            let shift = a.shift.clone().unwrap_or_else(|| vec![1.0; model.dim()]);
            let p0 = shifted_target(&q, &shift)?;
            let grid = uniform_grid(a.horizon, a.dt);
            let r = fokker_planck::dissipation_check(&p0, &model, &grid)?;
            let param = format!("dt={};horizon={};shift={};coarse={}", a.dt, a.horizon, join(&shift), r.coarse_grid);
            let int_tol = INTEGRAL_REL_TOL * r.entropy_drop.abs();
            let mut rows = vec![
                Row::new("dissipation_residual", param.clone(), r.max_residual, 0.0, r.tolerance, r.holds),
                Row::new(
                    "dissipation_integral",
                    param.clone(),
                    r.integral_fisher,
                    r.entropy_drop,
                    int_tol,
                    (r.integral_fisher - r.entropy_drop).abs() <= int_tol,
                ),
            ];
            if let Ok(report) = certified_report(&model, a.tol) {
                let rho = report.marton()?;
                let d = fokker_planck::exp_decay_check(&p0, &model, rho, &grid)?;
                rows.push(Row::new(
                    "dissipation_decay",
                    format!("{param};rho={rho}"),
                    d.worst_ratio,
                    1.0,
                    DECAY_SLACK,
                    d.holds,
                ));
            }
            rows
        }
        Check::Prop4 => {
            let report = certified_report(&model, a.tol)?;
            let mut rng = SeedTree::new(a.seed).stream("prop4");
            let mut rows = Vec::new();
            for i in 0..a.trials {
                let z = campaign::random_point(&mut rng, model.dim(), 2.0) + model.mean();
                let u = campaign::random_point(&mut rng, model.dim(), 2.0) + model.mean();
                let c = oracle::prop4_check(&model, &report, &z, &u)?;
                let param = format!("trial={i};seed={}", a.seed);
                rows.push(Row::new(
                    "prop4_first",
                    param.clone(),
                    c.lhs_w2_sum,
                    c.mid_kl_sum,
                    EXACT_SLACK,
                    c.holds_first,
                ));
                rows.push(Row::new("prop4_second", param, c.mid_kl_sum, c.rhs, EXACT_SLACK, c.holds_second));
            }
            rows
        }
    };
    output::emit(&output::to_csv(&rows)?, a.out.as_deref())?;
    let failed = rows.iter().filter(|r| !r.passed()).count();
    eprintln!("{} rows, {failed} failed", rows.len());
    Ok(if failed == 0 { EXIT_PASS } else { EXIT_VERIFY_FAILED })
}
