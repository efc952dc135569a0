//! The relative modular operator through its spectral data, and the discrete
//! spectral measure of `-log Delta_{rho|sigma}` with respect to `sigma`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divergence::SUPPORT_TOL;
use crate::error::{Error, Result};
use crate::operator::{spectral_decompose, DensityMatrix, HermitianOperator, SpectralDecomposition, CLUSTER_TOL};

/// Overlaps at or below this are omitted from the ratio table.
pub const OVERLAP_TOL: f64 = 1e-14;
/// Atoms closer than this are merged.
pub const ATOM_MERGE_TOL: f64 = 1e-10;
/// Upper limit on the number of atoms a convolution may produce.
pub const MAX_ATOMS: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioEntry {
    pub lambda: f64,
    pub mu: f64,
    /// `Tr(P_lambda(rho) P_mu(sigma))`.
    pub overlap: f64,
    pub ratio: f64,
}

/// Spectrum of `Delta_{rho|sigma}`: every eigenvalue pair with nonzero overlap.
#[derive(Clone, Debug, Serialize)]
pub struct ModularRatioTable {
    pub entries: Vec<RatioEntry>,
}

pub fn modular_ratio_table(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<ModularRatioTable> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Shape(format!("{} vs {}", rho.dim(), sigma.dim())));
    }
    ratio_table_from_spectra(rho.spectrum(), sigma.spectrum())
}

/// Ratio table for arbitrary PSD operators given their spectra.
pub fn ratio_table_from_spectra(sr: &SpectralDecomposition, ss: &SpectralDecomposition) -> Result<ModularRatioTable> {
    if sr.dim() != ss.dim() {
        return Err(Error::Shape(format!("{} vs {}", sr.dim(), ss.dim())));
    }
    let c = sr.vectors().adjoint() * ss.vectors();
    let mut entries = Vec::with_capacity(sr.len() * ss.len());
    let mut leaked = 0.0;
    for (k, &lambda) in sr.eigenvalues().iter().enumerate() {
        for (l, &mu) in ss.eigenvalues().iter().enumerate() {
            let mut overlap = 0.0;
            for i in sr.columns(k) {
                for j in ss.columns(l) {
                    overlap += c[(i, j)].norm_sqr();
                }
            }
            if overlap <= OVERLAP_TOL {
                continue;
            }
            if mu <= SUPPORT_TOL {
                leaked += lambda.max(0.0) * overlap;
                continue;
            }
            let lambda = lambda.max(0.0);
            entries.push(RatioEntry { lambda, mu, overlap, ratio: lambda / mu });
        }
    }
    if leaked > SUPPORT_TOL {
        return Err(Error::SingularSigma);
    }
    Ok(ModularRatioTable { entries })
}

impl ModularRatioTable {
    /// `(sum lambda * overlap, sum mu * overlap)`, the traces of rho and sigma.
    pub fn marginal_totals(&self) -> (f64, f64) {
        self.entries.iter().fold((0.0, 0.0), |(a, b), e| (a + e.lambda * e.overlap, b + e.mu * e.overlap))
    }
}

/// Finite discrete measure on the real line, atoms sorted by position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    total: f64,
}

impl SpectralMeasure {
    /// Sorts atoms, drops zero masses and merges positions closer than
    /// [`ATOM_MERGE_TOL`] (at their mass-weighted mean).
    pub fn new(mut raw: Vec<(f64, f64)>) -> Result<Self> {
        if raw.iter().any(|&(x, p)| !x.is_finite() || !p.is_finite() || p < 0.0) {
            return Err(Error::Domain("atoms must be finite with nonnegative mass".into()));
        }
        raw.retain(|&(_, p)| p > 0.0);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        let mut i = 0;
        while i < raw.len() {
            let mut j = i + 1;
            while j < raw.len() && raw[j].0 - raw[j - 1].0 < ATOM_MERGE_TOL {
                j += 1;
            }
            let mass: f64 = raw[i..j].iter().map(|a| a.1).sum();
            let x = if j - i == 1 { raw[i].0 } else { raw[i..j].iter().map(|a| a.0 * a.1).sum::<f64>() / mass };
            atoms.push((x, mass));
            i = j;
        }
        let total = atoms.iter().map(|a| a.1).sum();
        Ok(Self { atoms, total })
    }

    pub fn point_mass(x: f64) -> Self {
        Self { atoms: vec![(x, 1.0)], total: 1.0 }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, p)| x * p).sum::<f64>() / self.total
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|&(x, p)| (x - m) * (x - m) * p).sum::<f64>() / self.total
    }

    /// `log sum p e^{-z x}`, principal branch, with a max-shift against overflow.
    pub fn cgf(&self, z: C64) -> C64 {
        let shift = self.atoms.iter().map(|&(x, _)| -z.re * x).fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return C64::new(f64::NEG_INFINITY, 0.0);
        }
        let sum: C64 = self.atoms.iter().map(|&(x, p)| (-z * x - shift).exp() * p).sum();
        sum.ln() + shift
    }

    pub fn cgf_real(&self, s: f64) -> f64 {
        self.cgf(C64::new(s, 0.0)).re
    }

    /// Mass of atoms at or below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= x);
        self.atoms[..k].iter().map(|a| a.1).sum()
    }

    /// Law of `X1 + X2` for independent `X1 ~ self`, `X2 ~ other`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        let count = self.len().saturating_mul(other.len());
        if count > MAX_ATOMS {
            return Err(Error::AtomExplosion(count));
        }
        let mut raw = Vec::with_capacity(count);
        for &(x1, p1) in &self.atoms {
            for &(x2, p2) in &other.atoms {
                raw.push((x1 + x2, p1 * p2));
            }
        }
        Self::new(raw)
    }

    /// `n`-fold self-convolution by repeated squaring.
    pub fn convolve_power(&self, n: usize) -> Result<Self> {
        let mut acc = Self::point_mass(0.0);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.convolve(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.convolve(&base)?;
            }
        }
        Ok(acc)
    }

    /// Passes from `mu_{rho|sigma}` to `mu_{sigma|rho}`: the atom at `x` with
    /// mass `p` moves to `-x` with mass `p e^{-x}`.
    pub fn dual(&self) -> Result<Self> {
        Self::new(self.atoms.iter().map(|&(x, p)| (-x, p * (-x).exp())).collect())
    }

    /// Inverse-CDF sampling from a normalized measure; reproducible per seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        if (self.total - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(self.total));
        }
        let mut cum = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for &(_, p) in &self.atoms {
            acc += p;
            cum.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let k = cum.partition_point(|&c| c <= u).min(self.len() - 1);
                self.atoms[k].0
            })
            .collect())
    }
}

/// `mu_{rho|sigma}`: an atom at `-log(lambda/mu)` with mass `mu * overlap` for
/// every ratio-table entry with `lambda > 0`.
pub fn ns_spectral_measure(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<SpectralMeasure> {
    let table = modular_ratio_table(rho, sigma)?;
    measure_from_table(&table)
}

/// `mu_{A|B}` for PSD operators that need not be normalized.
pub fn operator_measure(a: &HermitianOperator, b: &HermitianOperator) -> Result<SpectralMeasure> {
    let table = ratio_table_from_spectra(&spectral_decompose(a, CLUSTER_TOL)?, &spectral_decompose(b, CLUSTER_TOL)?)?;
    measure_from_table(&table)
}

pub fn measure_from_table(table: &ModularRatioTable) -> Result<SpectralMeasure> {
    SpectralMeasure::new(
        table
            .entries
            .iter()
            .filter(|e| e.lambda > SUPPORT_TOL)
            .map(|e| (e.mu.ln() - e.lambda.ln(), e.mu * e.overlap))
            .collect(),
    )
}

/// `cgf(m, z)`, see [`SpectralMeasure::cgf`].
pub fn cgf(m: &SpectralMeasure, z: C64) -> C64 {
    m.cgf(z)
}

pub fn measure_cdf(m: &SpectralMeasure, x: f64) -> f64 {
    m.cdf(x)
}

pub fn convolve(m1: &SpectralMeasure, m2: &SpectralMeasure) -> Result<SpectralMeasure> {
    m1.convolve(m2)
}

pub fn sample(m: &SpectralMeasure, count: usize, seed: u64) -> Result<Vec<f64>> {
    m.sample(count, seed)
}
