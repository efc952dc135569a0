//! State families indexed by `n`, with the dense route (explicit density
//! matrices) and optional structure-aware fast paths.

pub mod fermion;
pub mod iid;
pub mod spin;

use num_complex::Complex64 as C64;

use crate::divergence::{info_variance, relative_entropy};
use crate::error::{Error, Result};
use crate::modular::{ns_spectral_measure, SpectralMeasure};
use crate::operator::{DensityMatrix, MAX_DIM};
use crate::testing::{alpha_opt, alpha_opt_from_measure, beta_opt, beta_opt_from_measure};

pub use fermion::{fermion_model, FermionModel, FermionSymbol, SymbolSpec};
pub use iid::{iid_model, IidModel};
pub use spin::{spin_gibbs_model, Interaction, SpinGibbsModel};

/// Resource limits applied when building dense states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Caps {
    /// Largest Hilbert-space dimension of a dense state.
    pub max_dim: usize,
    /// Largest number of fermionic modes for the Fock-space construction.
    pub max_fock: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self { max_dim: MAX_DIM, max_fock: 12 }
    }
}

/// A sequence of hypothesis pairs `(rho_n, sigma_n)` with weights `w_n`.
pub trait ModelSequence: Send + Sync {
    fn name(&self) -> String;

    fn weight(&self, n: usize) -> f64;

    /// Dense states; fails with a cap error when too large.
    fn state_pair(&self, n: usize) -> Result<(DensityMatrix, DensityMatrix)>;

    /// `E_n(z) = Psi_{1-z}(rho_n|sigma_n)` without building the states.
    fn fast_psi(&self, _n: usize, _z: C64) -> Option<Result<C64>> {
        None
    }

    /// `mu_{sigma_n|rho_n}` without building the states.
    fn fast_measure(&self, _n: usize) -> Option<Result<SpectralMeasure>> {
        None
    }

    /// `(D(rho_n||sigma_n), V(rho_n||sigma_n))` without building the states.
    fn fast_divergences(&self, _n: usize) -> Option<Result<(f64, f64)>> {
        None
    }

    /// Analytic `(d, v)` rates, when known.
    fn rate_override(&self) -> Option<Result<(f64, f64)>> {
        None
    }

    /// Whether `rho_n` and `sigma_n` commute for every `n`; enables the
    /// classical route for the optimal test.
    fn commuting(&self) -> bool {
        false
    }
}

/// `(D_n, V_n)`, preferring the fast path.
pub fn divergences(model: &dyn ModelSequence, n: usize) -> Result<(f64, f64)> {
    if let Some(r) = model.fast_divergences(n) {
        return r;
    }
    let (rho, sigma) = model.state_pair(n)?;
    let d = relative_entropy(&rho, &sigma)?;
    let v = info_variance(&rho, &sigma)?;
    match (d.finite(), v.finite()) {
        (Some(d), Some(v)) => Ok((d, v)),
        _ => Err(Error::SingularSigma),
    }
}

/// `mu_{sigma_n|rho_n}`, preferring the fast path.
pub fn measure(model: &dyn ModelSequence, n: usize) -> Result<SpectralMeasure> {
    if let Some(m) = model.fast_measure(n) {
        return m;
    }
    let (rho, sigma) = model.state_pair(n)?;
    ns_spectral_measure(&sigma, &rho)
}

/// `E_n(z)`, preferring the fast path, else the cgf of the exact measure.
pub fn e_n(model: &dyn ModelSequence, n: usize, z: C64) -> Result<C64> {
    if let Some(v) = model.fast_psi(n, z) {
        return v;
    }
    Ok(measure(model, n)?.cgf(z))
}

/// `E_n` on a list of points, sharing one measure for the dense route.
pub fn e_n_grid(model: &dyn ModelSequence, n: usize, zs: &[C64]) -> Result<Vec<C64>> {
    if model.fast_psi(n, C64::new(0.0, 0.0)).is_some() {
        return zs.iter().map(|&z| model.fast_psi(n, z).unwrap()).collect();
    }
    let m = measure(model, n)?;
    Ok(zs.iter().map(|&z| m.cgf(z)).collect())
}

/// Exact `beta_n(eps)`: the classical route for commuting models with a fast
/// measure, the dense optimizer otherwise.
pub fn beta_n(model: &dyn ModelSequence, n: usize, eps: f64) -> Result<f64> {
    if model.commuting() {
        if let Some(m) = model.fast_measure(n) {
            return Ok(beta_opt_from_measure(&m?, eps)?.beta_star);
        }
    }
    let (rho, sigma) = model.state_pair(n)?;
    Ok(beta_opt(&rho, &sigma, eps)?.beta_star)
}

/// Minimal type-I error with type-II error at most `b`.
pub fn alpha_n(model: &dyn ModelSequence, n: usize, b: f64) -> Result<f64> {
    if b >= 1.0 {
        return Ok(0.0);
    }
    if b <= 0.0 {
        return Ok(1.0);
    }
    if model.commuting() {
        if let Some(m) = model.fast_measure(n) {
            return alpha_opt_from_measure(&m?, b);
        }
    }
    let (rho, sigma) = model.state_pair(n)?;
    alpha_opt(&rho, &sigma, b)
}
