//! Seeded random instances for property checks and experiments.

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::Result;
use crate::operator::{eigh, DensityMatrix, HermitianOperator};

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Mat<C64> {
    Mat::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-random unitary up to column phases: the eigenvectors of a GUE matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Mat<C64>> {
    let g = ginibre(dim, rng);
    let h = &g + g.adjoint();
    Ok(eigh(h.as_ref())?.vectors)
}

/// Real orthogonal matrix from a GOE matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Mat<C64>> {
    let g = Mat::from_fn(dim, dim, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        C64::new(x, 0.0)
    });
    let h = &g + g.transpose();
    Ok(eigh(h.as_ref())?.vectors)
}

/// Uniform point of the probability simplex, sorted ascending.
pub fn random_probability<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut p: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p.sort_by(f64::total_cmp);
    p
}

/// `(1 - floor) p + floor / dim`, renormalized exactly.
fn floored(mut p: Vec<f64>, floor: f64) -> Vec<f64> {
    let dim = p.len() as f64;
    p.iter_mut().for_each(|x| *x = (1.0 - floor) * *x + floor / dim);
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Density matrix with a uniformly random spectrum, mixed with `floor`
/// of the maximally mixed state, in a Haar-random basis.
pub fn random_density<R: Rng + ?Sized>(dim: usize, floor: f64, rng: &mut R) -> Result<DensityMatrix> {
    let p = floored(random_probability(dim, rng), floor);
    DensityMatrix::from_spectrum(p, random_unitary(dim, rng)?)
}

/// Two states diagonal in one shared random basis.
pub fn random_commuting_pair<R: Rng + ?Sized>(
    dim: usize,
    floor: f64,
    rng: &mut R,
) -> Result<(DensityMatrix, DensityMatrix)> {
    let u = random_unitary(dim, rng)?;
    let p = floored(random_probability(dim, rng), floor);
    let mut q = floored(random_probability(dim, rng), floor);
    // pair the two spectra in random order
    for i in (1..dim).rev() {
        q.swap(i, rng.random_range(0..=i));
    }
    let rho = DensityMatrix::from_spectrum(p, u.clone())?;
    let sigma_op = HermitianOperator::symmetrized(crate::operator::weighted_outer(u.as_ref(), &q));
    Ok((rho, DensityMatrix::new(&sigma_op)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 2..=6 {
            let u = random_unitary(dim, &mut rng).unwrap();
            let uu = u.adjoint() * &u;
            for i in 0..dim {
                for j in 0..dim {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((uu[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
                }
            }
            let rho = random_density(dim, 0.05, &mut rng).unwrap();
            assert!(rho.faithful());
            let (a, b) = random_commuting_pair(dim, 0.05, &mut rng).unwrap();
            assert!(a.op().commutator_norm(b.op()) < 1e-12);
        }
    }
}
