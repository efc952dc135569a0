//! Tensor powers `rho^{⊗n}` vs `sigma^{⊗n}`, `w_n = n`.

use num_complex::Complex64 as C64;

use super::{Caps, ModelSequence};
use crate::divergence::{info_variance, relative_entropy};
use crate::error::{Error, Result};
use crate::modular::{ns_spectral_measure, SpectralMeasure};
use crate::operator::DensityMatrix;
use crate::testing::COMMUTING_TOL;

#[derive(Clone, Debug)]
pub struct IidModel {
    rho: DensityMatrix,
    sigma: DensityMatrix,
    caps: Caps,
    /// Single-copy `mu_{sigma|rho}`.
    unit: SpectralMeasure,
    d: f64,
    v: f64,
    commuting: bool,
}

pub fn iid_model(rho: DensityMatrix, sigma: DensityMatrix, caps: Caps) -> Result<IidModel> {
    IidModel::new(rho, sigma, caps)
}

impl IidModel {
    pub fn new(rho: DensityMatrix, sigma: DensityMatrix, caps: Caps) -> Result<Self> {
        if rho.dim() != sigma.dim() {
            return Err(Error::Shape(format!("{} vs {}", rho.dim(), sigma.dim())));
        }
        let unit = ns_spectral_measure(&sigma, &rho)?;
        let d = relative_entropy(&rho, &sigma)?.finite().ok_or(Error::SingularSigma)?;
        let v = info_variance(&rho, &sigma)?.finite().ok_or(Error::SingularSigma)?;
        let commuting = rho.op().commutator_norm(sigma.op()) <= COMMUTING_TOL;
        Ok(Self { rho, sigma, caps, unit, d, v, commuting })
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn sigma(&self) -> &DensityMatrix {
        &self.sigma
    }

    pub fn unit_measure(&self) -> &SpectralMeasure {
        &self.unit
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        let dim = (self.rho.dim() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if dim > self.caps.max_dim as u128 {
            return Err(Error::DimensionCap {
                dim: usize::try_from(dim).unwrap_or(usize::MAX),
                cap: self.caps.max_dim,
            });
        }
        Ok(())
    }
}

impl ModelSequence for IidModel {
    fn name(&self) -> String {
        format!("iid(dim {})", self.rho.dim())
    }

    fn weight(&self, n: usize) -> f64 {
        n as f64
    }

    fn state_pair(&self, n: usize) -> Result<(DensityMatrix, DensityMatrix)> {
        self.check_dim(n)?;
        Ok((self.rho.kron_power(n)?, self.sigma.kron_power(n)?))
    }

    fn fast_psi(&self, n: usize, z: C64) -> Option<Result<C64>> {
        Some(Ok(self.unit.cgf(z) * n as f64))
    }

    fn fast_measure(&self, n: usize) -> Option<Result<SpectralMeasure>> {
        Some(self.unit.convolve_power(n))
    }

    fn fast_divergences(&self, n: usize) -> Option<Result<(f64, f64)>> {
        Some(Ok((n as f64 * self.d, n as f64 * self.v)))
    }

    fn rate_override(&self) -> Option<Result<(f64, f64)>> {
        Some(Ok((self.d, self.v)))
    }

    fn commuting(&self) -> bool {
        self.commuting
    }
}
