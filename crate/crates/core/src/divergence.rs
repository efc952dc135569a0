//! Scalar information quantities built from a pair of positive operators.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::operator::{weighted_outer, DensityMatrix, HermitianOperator, SpectralDecomposition, CLUSTER_TOL};

/// Eigenvalues at or below this count as outside the support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Traces at or below this are treated as zero when taking logarithms.
const UNDERFLOW: f64 = 1e-300;

/// A real number or a signed infinity, kept explicit so reports never carry
/// raw floating infinities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Panics on a sentinel; for callers that have already ruled them out.
    pub fn unwrap(self) -> f64 {
        self.finite().unwrap_or_else(|| panic!("expected a finite value, got {self}"))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
            ExtReal::NegInf => f64::NEG_INFINITY,
        }
    }

    fn scale(self, c: f64) -> Self {
        match self {
            ExtReal::Finite(x) => ExtReal::Finite(x * c),
            ExtReal::PosInf if c > 0.0 => ExtReal::PosInf,
            ExtReal::PosInf => ExtReal::NegInf,
            ExtReal::NegInf if c > 0.0 => ExtReal::NegInf,
            ExtReal::NegInf => ExtReal::PosInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInf => f.write_str("+inf"),
            ExtReal::NegInf => f.write_str("-inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::PosInf => s.serialize_str("+inf"),
            ExtReal::NegInf => s.serialize_str("-inf"),
        }
    }
}

/// `A^p` for PSD `A` given its spectrum. Zero eigenvalues map to zero for
/// `p >= 0` (so `A^0` is the support projection) and are an error for `p < 0`.
pub(crate) fn psd_power(sd: &SpectralDecomposition, p: f64) -> Result<HermitianOperator> {
    if p == 1.0 {
        return sd.apply(|l| l.max(0.0));
    }
    if p < 0.0 && sd.eigenvalues().iter().any(|&l| l <= SUPPORT_TOL) {
        return Err(Error::Domain(format!("negative power {p} of a singular operator")));
    }
    sd.apply(|l| if l <= SUPPORT_TOL { 0.0 } else { l.powf(p) })
}

fn log_trace(t: f64) -> ExtReal {
    if t <= UNDERFLOW {
        ExtReal::NegInf
    } else {
        ExtReal::Finite(t.ln())
    }
}

/// Precomputed spectra of a pair, for repeated evaluation of `Psi_s`.
#[derive(Clone, Debug)]
pub struct PsiPair {
    a: SpectralDecomposition,
    b: SpectralDecomposition,
}

impl PsiPair {
    pub fn new(a: &HermitianOperator, b: &HermitianOperator) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::Shape(format!("{} vs {}", a.dim(), b.dim())));
        }
        Ok(Self {
            a: crate::operator::spectral_decompose(a, CLUSTER_TOL)?,
            b: crate::operator::spectral_decompose(b, CLUSTER_TOL)?,
        })
    }

    pub fn from_states(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Self> {
        if rho.dim() != sigma.dim() {
            return Err(Error::Shape(format!("{} vs {}", rho.dim(), sigma.dim())));
        }
        Ok(Self { a: rho.spectrum().clone(), b: sigma.spectrum().clone() })
    }

    /// `log Tr(A^s B^{1-s})` by forming both powers and tracing the product.
    pub fn psi(&self, s: f64) -> Result<ExtReal> {
        let pa = psd_power(&self.a, s)?;
        let pb = psd_power(&self.b, 1.0 - s)?;
        Ok(log_trace(pa.trace_product(&pb)))
    }
}

/// `Psi_s(A|B) = log Tr(A^s B^{1-s})`.
pub fn psi_s(a: &HermitianOperator, b: &HermitianOperator, s: f64) -> Result<ExtReal> {
    PsiPair::new(a, b)?.psi(s)
}

/// `log A` on the support of `A`, zero on its kernel.
fn support_log(sd: &SpectralDecomposition) -> HermitianOperator {
    let w: Vec<f64> = sd.column_values().into_iter().map(|l| if l > SUPPORT_TOL { l.ln() } else { 0.0 }).collect();
    HermitianOperator::symmetrized(weighted_outer(sd.vectors(), &w))
}

/// Weight of `rho` outside the support of `sigma`.
fn mass_outside_support(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let sd = sigma.spectrum();
    let keep: Vec<f64> = sd.column_values().into_iter().map(|l| if l > SUPPORT_TOL { 0.0 } else { 1.0 }).collect();
    if keep.iter().all(|&k| k == 0.0) {
        return 0.0;
    }
    let ker = HermitianOperator::symmetrized(weighted_outer(sd.vectors(), &keep));
    rho.op().trace_product(&ker)
}

/// `log rho - log sigma` restricted to supports, or `None` if the support
/// condition fails.
fn log_ratio(rho: &DensityMatrix, sigma: &DensityMatrix) -> Option<HermitianOperator> {
    if mass_outside_support(rho, sigma) > SUPPORT_TOL {
        return None;
    }
    Some(support_log(rho.spectrum()).sub(&support_log(sigma.spectrum())))
}

fn check_pair(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Shape(format!("{} vs {}", rho.dim(), sigma.dim())));
    }
    Ok(())
}

/// `D(rho||sigma) = Tr rho (log rho - log sigma)`, `+inf` when
/// `supp rho` is not contained in `supp sigma`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<ExtReal> {
    check_pair(rho, sigma)?;
    Ok(match log_ratio(rho, sigma) {
        None => ExtReal::PosInf,
        Some(k) => ExtReal::Finite(rho.op().trace_product(&k)),
    })
}

/// `V(rho||sigma) = Tr rho (log rho - log sigma)^2 - D^2`.
pub fn info_variance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<ExtReal> {
    check_pair(rho, sigma)?;
    let Some(k) = log_ratio(rho, sigma) else {
        return Ok(ExtReal::PosInf);
    };
    let d = rho.op().trace_product(&k);
    let k2 = HermitianOperator::symmetrized(k.matmul(&k));
    Ok(ExtReal::Finite(rho.op().trace_product(&k2) - d * d))
}

/// `D_s = Psi_s / (s - 1)` for `s` in `[0, 1)`.
pub fn renyi_divergence(rho: &DensityMatrix, sigma: &DensityMatrix, s: f64) -> Result<ExtReal> {
    check_pair(rho, sigma)?;
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Domain(format!("Renyi order {s} outside [0, 1)")));
    }
    let psi = PsiPair::from_states(rho, sigma)?.psi(s)?;
    Ok(psi.scale(1.0 / (s - 1.0)))
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "D_sigma_rho")]
    pub d_sigma_rho: f64,
    pub psi_grid: Vec<(f64, f64)>,
    /// Richardson-extrapolated finite-difference estimates.
    pub dpsi_at_0: f64,
    pub dpsi_at_1: f64,
    pub d2psi_at_1: f64,
    /// `|Psi'(0) + D(sigma||rho)|`, `|Psi'(1) - D|`, `|Psi''(1) - V|`.
    pub residual_dpsi_0: f64,
    pub residual_dpsi_1: f64,
    pub residual_d2psi_1: f64,
    pub min_second_difference: f64,
    pub convex: bool,
}

/// Finite-difference check of `Psi'(0) = -D(sigma||rho)`, `Psi'(1) = D`,
/// `Psi''(1) = V`, plus convexity of `s -> Psi_s` on a 21-point grid.
pub fn derivative_check(rho: &DensityMatrix, sigma: &DensityMatrix, h: f64) -> Result<DivergenceReport> {
    check_pair(rho, sigma)?;
    if !rho.faithful() || !sigma.faithful() {
        return Err(Error::SingularInput);
    }
    if h <= 0.0 {
        return Err(Error::Domain(format!("step {h} must be positive")));
    }
    let pair = PsiPair::from_states(rho, sigma)?;
    let psi = |s: f64| pair.psi(s).map(|v| v.to_f64());

    let first = |s0: f64, h: f64| -> Result<f64> { Ok((psi(s0 + h)? - psi(s0 - h)?) / (2.0 * h)) };
    let second = |s0: f64, h: f64| -> Result<f64> { Ok((psi(s0 + h)? - 2.0 * psi(s0)? + psi(s0 - h)?) / (h * h)) };
    let richardson = |f: &dyn Fn(f64, f64) -> Result<f64>, s0: f64| -> Result<f64> {
        let coarse = f(s0, h)?;
        let fine = f(s0, h / 2.0)?;
        Ok((4.0 * fine - coarse) / 3.0)
    };

    let dpsi_at_0 = richardson(&first, 0.0)?;
    let dpsi_at_1 = richardson(&first, 1.0)?;
    let d2psi_at_1 = richardson(&second, 1.0)?;

    let d = relative_entropy(rho, sigma)?.unwrap();
    let v = info_variance(rho, sigma)?.unwrap();
    let d_sigma_rho = relative_entropy(sigma, rho)?.unwrap();

    let psi_grid: Vec<(f64, f64)> = (0..=20)
        .map(|k| {
            let s = k as f64 / 20.0;
            psi(s).map(|p| (s, p))
        })
        .collect::<Result<_>>()?;
    let min_second_difference =
        psi_grid.windows(3).map(|w| w[0].1 - 2.0 * w[1].1 + w[2].1).fold(f64::INFINITY, f64::min);

    Ok(DivergenceReport {
        d,
        v,
        d_sigma_rho,
        psi_grid,
        dpsi_at_0,
        dpsi_at_1,
        d2psi_at_1,
        residual_dpsi_0: (dpsi_at_0 + d_sigma_rho).abs(),
        residual_dpsi_1: (dpsi_at_1 - d).abs(),
        residual_d2psi_1: (d2psi_at_1 - v).abs(),
        min_second_difference,
        convex: min_second_difference >= -1e-8,
    })
}
