//! Translation-invariant finite-range interactions on a chain and their
//! finite-volume Gibbs states on `Lambda_n = {-n, ..., n}`, `w_n = 2n + 1`.

use std::collections::BTreeMap;

use faer::Mat;
use num_complex::Complex64 as C64;

use super::{Caps, ModelSequence};
use crate::divergence::ExtReal;
use crate::error::{Error, Result};
use crate::operator::{DensityMatrix, HermitianOperator};

/// Terms `Phi_X`, one per translation class. Each class is keyed by its
/// support shifted so that its smallest site is 0.
#[derive(Clone, Debug)]
pub struct Interaction {
    local_dim: usize,
    terms: BTreeMap<Vec<i64>, HermitianOperator>,
}

pub fn pauli(c: char) -> Result<HermitianOperator> {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let m = match c {
        'I' => [[one, z], [z, one]],
        'X' => [[z, one], [one, z]],
        'Y' => [[z, -i], [i, z]],
        'Z' => [[one, z], [z, -one]],
        _ => return Err(Error::Domain(format!("unknown Pauli label {c:?}"))),
    };
    HermitianOperator::from_fn(2, |r, s| m[r][s])
}

/// `coeff * P_1 ⊗ ... ⊗ P_k` for a string such as `"ZZ"`.
pub fn pauli_string(labels: &str, coeff: f64) -> Result<HermitianOperator> {
    let mut acc = HermitianOperator::identity(1);
    for c in labels.chars() {
        acc = acc.kron(&pauli(c)?)?;
    }
    Ok(acc.scale(coeff))
}

impl Interaction {
    pub fn new(local_dim: usize) -> Self {
        Self { local_dim, terms: BTreeMap::new() }
    }

    /// Adds `op` on the sites `sites` (listed in the tensor order of `op`).
    /// Terms on translates of an existing support are summed into it.
    pub fn add_term(&mut self, sites: &[i64], op: HermitianOperator) -> Result<()> {
        if sites.is_empty() {
            return Err(Error::Domain("interaction term with empty support".into()));
        }
        let expected = self.local_dim.checked_pow(sites.len() as u32).unwrap_or(usize::MAX);
        if op.dim() != expected {
            return Err(Error::Shape(format!(
                "term on {} sites has dim {}, expected {expected}",
                sites.len(),
                op.dim()
            )));
        }
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by_key(|&k| sites[k]);
        if order.windows(2).any(|w| sites[w[0]] == sites[w[1]]) {
            return Err(Error::Domain("repeated site in interaction term".into()));
        }
        let op = if order.iter().enumerate().all(|(a, &b)| a == b) {
            op
        } else {
            permute_factors(&op, &order, self.local_dim)
        };
        let base = sites[order[0]];
        let key: Vec<i64> = order.iter().map(|&k| sites[k] - base).collect();
        match self.terms.get_mut(&key) {
            Some(existing) => *existing = existing.add(&op),
            None => {
                self.terms.insert(key, op);
            }
        }
        Ok(())
    }

    pub fn with_term(mut self, sites: &[i64], op: HermitianOperator) -> Result<Self> {
        self.add_term(sites, op)?;
        Ok(self)
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &HermitianOperator)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|op| op.frobenius_norm() == 0.0)
    }

    /// Smallest `R` with every support of diameter below `R`.
    pub fn range(&self) -> usize {
        self.terms.keys().map(|k| (*k.last().unwrap() + 1) as usize).max().unwrap_or(0)
    }

    /// Operator norm of each class representative.
    pub fn class_norms(&self) -> Result<BTreeMap<Vec<i64>, f64>> {
        self.terms.iter().map(|(k, op)| Ok((k.clone(), op.op_norm()?))).collect()
    }

    /// `||Phi|| = sum_{X ∋ 0} ||Phi_X||`; a class with `|X|` sites has `|X|`
    /// translates containing the origin.
    pub fn norm(&self) -> Result<f64> {
        Ok(self.class_norms()?.iter().map(|(k, v)| k.len() as f64 * v).sum())
    }

    /// `H_Lambda = sum of translated terms fully inside {lo, ..., hi}`,
    /// with site `lo` as the leading tensor factor.
    pub fn hamiltonian(&self, lo: i64, hi: i64, max_dim: usize) -> Result<HermitianOperator> {
        let sites = (hi - lo + 1) as usize;
        let dim = self.local_dim.checked_pow(sites as u32).unwrap_or(usize::MAX);
        if dim > max_dim {
            return Err(Error::DimensionCap { dim, cap: max_dim });
        }
        let ld = self.local_dim;
        let stride: Vec<usize> = (0..sites).map(|p| ld.pow((sites - 1 - p) as u32)).collect();
        let mut h = Mat::<C64>::zeros(dim, dim);
        for (support, op) in &self.terms {
            let span = *support.last().unwrap();
            let k = support.len();
            let local = op.dim();
            for a in lo..=hi - span {
                let pos: Vec<usize> = support.iter().map(|&x| (a + x - lo) as usize).collect();
                for i in 0..dim {
                    let mut li = 0;
                    let mut rest = i;
                    for &p in &pos {
                        let digit = (i / stride[p]) % ld;
                        li = li * ld + digit;
                        rest -= digit * stride[p];
                    }
                    for lj in 0..local {
                        let v = op.get(lj, li);
                        if v == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut j = rest;
                        let mut code = lj;
                        for q in (0..k).rev() {
                            j += (code % ld) * stride[pos[q]];
                            code /= ld;
                        }
                        h[(j, i)] += v;
                    }
                }
            }
        }
        Ok(HermitianOperator::symmetrized(h))
    }
}

/// Reorders the tensor factors of `op` so that factor `order[a]` comes `a`-th.
fn permute_factors(op: &HermitianOperator, order: &[usize], ld: usize) -> HermitianOperator {
    let k = order.len();
    let dim = op.dim();
    let digits = |mut x: usize| -> Vec<usize> {
        let mut d = vec![0; k];
        for slot in (0..k).rev() {
            d[slot] = x % ld;
            x /= ld;
        }
        d
    };
    let remap = |x: usize| -> usize {
        // x indexes the sorted order; rebuild the index in the original order
        let d = digits(x);
        let mut orig = vec![0; k];
        for (a, &b) in order.iter().enumerate() {
            orig[b] = d[a];
        }
        orig.iter().fold(0, |acc, &v| acc * ld + v)
    };
    let m = Mat::from_fn(dim, dim, |i, j| op.get(remap(i), remap(j)));
    HermitianOperator::symmetrized(m)
}

/// Gibbs state `e^{-beta H} / Tr e^{-beta H}` from one eigendecomposition.
pub fn gibbs_state(h: &HermitianOperator, beta: f64) -> Result<DensityMatrix> {
    let e = h.eigh()?;
    let e_min = e.values.first().copied().unwrap_or(0.0);
    let mut w: Vec<f64> = e.values.iter().map(|&v| (-beta * (v - e_min)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    DensityMatrix::from_spectrum(w, e.vectors)
}

#[derive(Clone, Debug)]
pub struct SpinGibbsModel {
    phi: Interaction,
    psi: Interaction,
    beta1: f64,
    beta2: f64,
    caps: Caps,
}

/// Gibbs states of `Phi` at `beta1` and of `Psi` at `beta2` on
/// `{-n, ..., n}^d`; only `d = 1` is supported.
pub fn spin_gibbs_model(
    phi: Interaction,
    psi: Interaction,
    beta1: f64,
    beta2: f64,
    d: usize,
    caps: Caps,
) -> Result<SpinGibbsModel> {
    if d != 1 {
        return Err(Error::Unsupported(format!(
            "spin chains are dense-diagonalized; lattice dimension {d} is not supported"
        )));
    }
    if phi.local_dim != psi.local_dim {
        return Err(Error::Shape(format!("local dimensions {} vs {}", phi.local_dim, psi.local_dim)));
    }
    if !(beta1 > 0.0 && beta2 > 0.0) {
        return Err(Error::Domain(format!("inverse temperatures must be positive, got {beta1}, {beta2}")));
    }
    Ok(SpinGibbsModel { phi, psi, beta1, beta2, caps })
}

impl SpinGibbsModel {
    pub fn phi(&self) -> &Interaction {
        &self.phi
    }

    pub fn psi(&self) -> &Interaction {
        &self.psi
    }

    pub fn betas(&self) -> (f64, f64) {
        (self.beta1, self.beta2)
    }
}

impl ModelSequence for SpinGibbsModel {
    fn name(&self) -> String {
        format!("spin(beta1={}, beta2={})", self.beta1, self.beta2)
    }

    fn weight(&self, n: usize) -> f64 {
        (2 * n + 1) as f64
    }

    fn state_pair(&self, n: usize) -> Result<(DensityMatrix, DensityMatrix)> {
        let n = n as i64;
        let h1 = self.phi.hamiltonian(-n, n, self.caps.max_dim)?;
        let h2 = self.psi.hamiltonian(-n, n, self.caps.max_dim)?;
        Ok((gibbs_state(&h1, self.beta1)?, gibbs_state(&h2, self.beta2)?))
    }
}

/// Left side of the cluster-expansion criterion
/// `sum_{X ∋ 0} e^{2a|X|} (e^{delta (beta1 ||Phi_X|| + beta2 ||Psi_X||)} - 1) <= a`,
/// and whether it holds.
pub fn high_temp_condition(
    phi: &Interaction,
    psi: &Interaction,
    beta1: f64,
    beta2: f64,
    a: f64,
    delta: f64,
) -> Result<(f64, bool)> {
    let lhs = high_temp_lhs(&phi.class_norms()?, &psi.class_norms()?, beta1, beta2, a, delta);
    Ok((lhs, lhs <= a))
}

fn high_temp_lhs(
    phi: &BTreeMap<Vec<i64>, f64>,
    psi: &BTreeMap<Vec<i64>, f64>,
    beta1: f64,
    beta2: f64,
    a: f64,
    delta: f64,
) -> f64 {
    let mut classes: Vec<&Vec<i64>> = phi.keys().chain(psi.keys()).collect();
    classes.sort();
    classes.dedup();
    classes
        .into_iter()
        .map(|x| {
            let size = x.len() as f64;
            let np = phi.get(x).copied().unwrap_or(0.0);
            let ns = psi.get(x).copied().unwrap_or(0.0);
            // |X| translates of the class contain the origin
            size * (2.0 * a * size).exp() * (delta * (beta1 * np + beta2 * ns)).exp_m1()
        })
        .fold(0.0, |acc, t| acc + t)
}

/// Largest `t` such that the criterion holds at `(beta1, beta2) = (t, ratio * t)`.
pub fn high_temp_threshold(phi: &Interaction, psi: &Interaction, a: f64, delta: f64, ratio: f64) -> Result<ExtReal> {
    let pn = phi.class_norms()?;
    let sn = psi.class_norms()?;
    let f = |t: f64| high_temp_lhs(&pn, &sn, t, ratio * t, a, delta);
    let mut hi = 1e-6;
    while f(hi) <= a {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(ExtReal::PosInf);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ExtReal::Finite(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::relative_entropy;
    use crate::models::IidModel;

    fn ising(j: f64, h: f64) -> Interaction {
        let mut phi = Interaction::new(2);
        phi.add_term(&[0, 1], pauli_string("ZZ", j).unwrap()).unwrap();
        if h != 0.0 {
            phi.add_term(&[0], pauli_string("X", h).unwrap()).unwrap();
        }
        phi
    }

    #[test]
    fn zero_interactions_give_maximally_mixed_states() {
        let zero = Interaction::new(2);
        let m = spin_gibbs_model(zero.clone(), zero.clone(), 0.3, 0.7, 1, Caps::default()).unwrap();
        let (rho, sigma) = m.state_pair(2).unwrap();
        let mixed = DensityMatrix::maximally_mixed(32);
        assert!(rho.op().max_abs_diff(mixed.op()) < 1e-15);
        assert!(relative_entropy(&rho, &sigma).unwrap().unwrap().abs() < 1e-14);
        let (lhs, holds) = high_temp_condition(&zero, &zero, 1.0, 1.0, 1.0, 1.1).unwrap();
        assert_eq!(lhs, 0.0);
        assert!(holds);
    }

    #[test]
    fn single_site_field_matches_iid() {
        let mut phi = Interaction::new(2);
        phi.add_term(&[0], pauli_string("Z", 1.0).unwrap()).unwrap();
        let mut psi = Interaction::new(2);
        psi.add_term(&[0], pauli_string("X", 0.5).unwrap()).unwrap();
        let beta = 0.4;
        let m = spin_gibbs_model(phi.clone(), psi.clone(), beta, beta, 1, Caps::default()).unwrap();
        let rho1 = gibbs_state(&phi.hamiltonian(0, 0, 2).unwrap(), beta).unwrap();
        let sigma1 = gibbs_state(&psi.hamiltonian(0, 0, 2).unwrap(), beta).unwrap();
        let iid = IidModel::new(rho1, sigma1, Caps::default()).unwrap();
        for n in 0..=2 {
            let (r, s) = m.state_pair(n).unwrap();
            let (ri, si) = iid.state_pair(2 * n + 1).unwrap();
            assert!(r.op().max_abs_diff(ri.op()) < 1e-12);
            assert!(s.op().max_abs_diff(si.op()) < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_embedding() {
        // open chain of 3 sites with ZZ: diagonal entries sum of neighbour products
        let phi = ising(1.0, 0.0);
        let h = phi.hamiltonian(-1, 1, 4096).unwrap();
        for i in 0..8usize {
            let s: Vec<f64> = (0..3).map(|p| if (i >> (2 - p)) & 1 == 0 { 1.0 } else { -1.0 }).collect();
            let e = s[0] * s[1] + s[1] * s[2];
            assert!((h.get(i, i).re - e).abs() < 1e-15);
        }
        // a term registered as sites [1, 0] is the swapped operator on [0, 1]
        let mut a = Interaction::new(2);
        a.add_term(&[1, 0], pauli_string("XZ", 1.0).unwrap()).unwrap();
        let mut b = Interaction::new(2);
        b.add_term(&[0, 1], pauli_string("ZX", 1.0).unwrap()).unwrap();
        let ha = a.hamiltonian(0, 2, 4096).unwrap();
        let hb = b.hamiltonian(0, 2, 4096).unwrap();
        assert!(ha.max_abs_diff(&hb) < 1e-15);
    }

    #[test]
    fn ising_threshold() {
        let phi = ising(1.0, 0.0);
        let zero = Interaction::new(2);
        let t = high_temp_threshold(&phi, &phi, 1.0, 1.1, 1.0).unwrap().unwrap();
        let closed = (1.0 + 1.0 / (2.0 * 4f64.exp())).ln() / 1.1;
        assert!((2.0 * t - closed).abs() < 1e-12, "{t}");
        assert!((2.0 * t - 0.00828).abs() < 1e-5);
        let mut prev = -1.0;
        for k in 0..20 {
            let b = 0.001 * k as f64;
            let (lhs, _) = high_temp_condition(&phi, &zero, b, b, 1.0, 1.1).unwrap();
            assert!(lhs > prev || (k == 0 && lhs == 0.0));
            prev = lhs;
        }
        assert_eq!(phi.norm().unwrap(), 2.0);
        assert_eq!(phi.range(), 2);
    }

    #[test]
    fn rejects_higher_dimensional_lattices() {
        let z = Interaction::new(2);
        assert!(matches!(spin_gibbs_model(z.clone(), z, 1.0, 1.0, 2, Caps::default()), Err(Error::Unsupported(_))));
    }
}
