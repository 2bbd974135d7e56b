//! Banded symmetric Toeplitz matrices, their symbols, and finite sections.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Number of grid points used to locate the extrema of the symbol on `[0, π]`.
pub const SYMBOL_GRID: usize = 1_000_000;

/// Off-diagonal band of a symmetric Toeplitz matrix: offset `j ≥ 1` maps to
/// the entry `b_{k,k+j} = b_{k+j,k}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Band(pub BTreeMap<usize, f64>);

impl Band {
    pub fn new(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let map: BTreeMap<usize, f64> = entries.into_iter().collect();
        if map.contains_key(&0) {
            return Err(Error::InvalidArgument("band offsets start at 1; use diag for offset 0".into()));
        }
        if map.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("band entries must be finite".into()));
        }
        Ok(Band(map))
    }

    /// Parses `"1:1,2:-1"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("band entry `{item}` is not offset:value")))?;
            let k: usize = k.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad band offset `{k}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad band value `{v}`")))?;
            entries.push((k, v));
        }
        Band::new(entries)
    }

    pub fn abs(&self) -> Band {
        Band(self.0.iter().map(|(&k, &v)| (k, v.abs())).collect())
    }

    /// `f(θ) = 2 Σ_j b_j cos(jθ)`.
    pub fn symbol(&self, theta: f64) -> f64 {
        2.0 * self.0.iter().map(|(&j, &b)| b * (j as f64 * theta).cos()).sum::<f64>()
    }

    /// The leading `m × m` section with zero diagonal.
    pub fn section(&self, m: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m, m);
        for (&j, &b) in &self.0 {
            for k in 0..m.saturating_sub(j) {
                out[(k, k + j)] = b;
                out[(k + j, k)] = b;
            }
        }
        out
    }
}

impl Serialize for Band {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let as_strings: BTreeMap<String, f64> = self.0.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        as_strings.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Band {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(d)?;
        let mut entries = Vec::with_capacity(raw.len());
        for (k, v) in raw {
            let k: usize = k.parse().map_err(serde::de::Error::custom)?;
            entries.push((k, v));
        }
        Band::new(entries).map_err(serde::de::Error::custom)
    }
}

/// `K = diag·I + B_m`.
pub fn toeplitz_precision(m: usize, diag: f64, band: &Band) -> DMatrix<f64> {
    band.section(m) + DMatrix::identity(m, m) * diag
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolExtrema {
    pub max_symbol: f64,
    pub min_symbol: f64,
    pub sup_abs_symbol: f64,
}

/// Extrema of the symbol over a uniform grid of `points + 1` nodes on `[0, π]`.
/// The symbol is even and 2π-periodic, so this covers the whole circle.
pub fn symbol_extrema(band: &Band, points: usize) -> SymbolExtrema {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=points {
        let f = band.symbol(PI * i as f64 / points as f64);
        lo = lo.min(f);
        hi = hi.max(f);
    }
    SymbolExtrema { max_symbol: hi, min_symbol: lo, sup_abs_symbol: hi.abs().max(lo.abs()) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionSpectrum {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub svd_norm: f64,
}

pub fn section_spectrum(band: &Band, m: usize) -> SectionSpectrum {
    let b = band.section(m);
    let eig = linalg::sym_eigenvalues(&b);
    SectionSpectrum { lambda_max: *eig.last().unwrap(), lambda_min: eig[0], svd_norm: linalg::op_norm(&b) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandSpectrum {
    #[serde(flatten)]
    pub symbol: SymbolExtrema,
    pub finite_section: SectionSpectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub m: usize,
    pub diag: f64,
    pub band: Band,
    pub b: BandSpectrum,
    pub abs_b: BandSpectrum,
    /// `diag + λ_min(B_m)`: positive iff `K = diag·I + B_m` is positive definite.
    pub lambda_min_k: f64,
    pub notes: Vec<String>,
}

/// Symbol extrema and finite-section spectra of `B` and `abs(B)`.
pub fn toeplitz_spectrum_report(m: usize, diag: f64, band: &Band) -> Result<SpectrumReport> {
    if m < 4 {
        return Err(Error::InvalidArgument(format!("finite section size m = {m} must be at least 4")));
    }
    let spectrum =
        |b: &Band| BandSpectrum { symbol: symbol_extrema(b, SYMBOL_GRID), finite_section: section_spectrum(b, m) };
    let b = spectrum(band);
    let abs_b = spectrum(&band.abs());

    let mut notes = Vec::new();
    if (b.symbol.sup_abs_symbol - b.symbol.max_symbol).abs() > 1e-9 {
        notes.push(format!(
            "operator norm of B is sup|symbol| = {:.6}, attained by the negative extreme {:.6}; \
             the largest eigenvalue bound max symbol = {:.6} is smaller",
            b.symbol.sup_abs_symbol, b.symbol.min_symbol, b.symbol.max_symbol
        ));
    }
    let lambda_min_k = diag + b.finite_section.lambda_min;
    if lambda_min_k <= 0.0 {
        notes.push(format!("K = {diag}·I + B_{m} is not positive definite (λ_min = {lambda_min_k:.6})"));
    }
    Ok(SpectrumReport { m, diag, band: band.clone(), b, abs_b, lambda_min_k, notes })
}
