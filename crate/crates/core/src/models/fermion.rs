//! Quasi-free fermion states on `{0, ..., n-1}^d` given by one-particle
//! symbols, `w_n = n^d`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

use faer::Mat;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Caps, ModelSequence};
use crate::error::{Error, Result};
use crate::modular::SpectralMeasure;
use crate::operator::{weighted_outer, weighted_outer_complex, DensityMatrix, Eigenpairs, HermitianOperator, MAX_DIM};

/// Largest total number of quadrature nodes `quad_points^d`.
pub const QUAD_BUDGET: usize = 1 << 24;
/// Margin for the right-half-plane condition on `1 + spec(W)`.
pub const BRANCH_MARGIN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Analytic,
    Smooth,
    Discontinuous,
}

pub type SymbolFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A periodic function on `[0, 2pi)^d` with values in `[delta, 1 - delta]`.
#[derive(Clone)]
pub struct FermionSymbol {
    f: SymbolFn,
    d: usize,
    delta: f64,
    smoothness: Smoothness,
    constant: Option<f64>,
    label: String,
}

impl fmt::Debug for FermionSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FermionSymbol")
            .field("label", &self.label)
            .field("d", &self.d)
            .field("delta", &self.delta)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

fn check_grid_points(d: usize) -> usize {
    match d {
        1 => 4096,
        2 => 256,
        3 => 32,
        _ => 8,
    }
}

/// Default quadrature nodes per axis.
pub fn default_quad_points(d: usize) -> usize {
    match d {
        1 => 4096,
        2 => 256,
        _ => 64,
    }
}

/// Calls `visit` on every node `2 pi j / points` of the product grid.
fn for_each_node(d: usize, points: usize, mut visit: impl FnMut(&[f64])) {
    let total = points.pow(d as u32);
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        for axis in (0..d).rev() {
            x[axis] = 2.0 * PI * (rest % points) as f64 / points as f64;
            rest /= points;
        }
        visit(&x);
    }
}

impl FermionSymbol {
    /// Checks `delta <= f <= 1 - delta` on a dense grid.
    pub fn new(
        d: usize,
        delta: f64,
        smoothness: Smoothness,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("lattice dimension must be at least 1".into()));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::Domain(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        let mut bad = None;
        for_each_node(d, check_grid_points(d), |x| {
            let v = f(x);
            if bad.is_none() && !(v >= delta - 1e-12 && v <= 1.0 - delta + 1e-12) {
                bad = Some((x.to_vec(), v));
            }
        });
        if let Some((x, v)) = bad {
            return Err(Error::Domain(format!("symbol value {v} at {x:?} outside [{delta}, {}]", 1.0 - delta)));
        }
        Ok(Self { f: Arc::new(f), d, delta, smoothness, constant: None, label: label.into() })
    }

    pub fn constant(d: usize, value: f64) -> Result<Self> {
        // any smaller delta is also valid; q = 1/2 needs delta < 1/2
        let delta = value.min(1.0 - value).min(0.25);
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::Domain(format!("constant symbol {value} outside (0, 1)")));
        }
        let mut s = Self::new(d, delta, Smoothness::Analytic, format!("constant({value})"), move |_| value)?;
        s.constant = Some(value);
        Ok(s)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Config-loadable symbol families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * (cos x_1 + ... + cos x_d) / d`
    Cosine {
        mean: f64,
        amplitude: f64,
    },
    /// `1 / (1 + e^{beta (h(x) - mu)})` with `h(x) = -2 hopping sum_i cos x_i`.
    FermiDirac {
        beta: f64,
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        hopping: f64,
    },
    /// `high` for `x_1 < pi`, `low` otherwise.
    Step {
        low: f64,
        high: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SymbolSpec {
    /// Builds the symbol; `delta` defaults to the distance of its range from {0, 1}.
    pub fn build(&self, d: usize, delta: Option<f64>) -> Result<FermionSymbol> {
        let (f, smoothness, label): (SymbolFn, Smoothness, String) = match *self {
            SymbolSpec::Constant { value } => {
                let mut s = FermionSymbol::constant(d, value)?;
                if let Some(delta) = delta {
                    s = FermionSymbol::new(d, delta, Smoothness::Analytic, s.label.clone(), move |_| value)?;
                    s.constant = Some(value);
                }
                return Ok(s);
            }
            SymbolSpec::Cosine { mean, amplitude } => (
                Arc::new(move |x: &[f64]| mean + amplitude * x.iter().map(|t| t.cos()).sum::<f64>() / x.len() as f64),
                Smoothness::Analytic,
                format!("cosine({mean}, {amplitude})"),
            ),
            SymbolSpec::FermiDirac { beta, mu, hopping } => (
                Arc::new(move |x: &[f64]| {
                    let h = -2.0 * hopping * x.iter().map(|t| t.cos()).sum::<f64>();
                    1.0 / (1.0 + (beta * (h - mu)).exp())
                }),
                Smoothness::Analytic,
                format!("fermi_dirac(beta={beta}, mu={mu})"),
            ),
            SymbolSpec::Step { low, high } => (
                Arc::new(move |x: &[f64]| if x[0] < PI { high } else { low }),
                Smoothness::Discontinuous,
                format!("step({low}, {high})"),
            ),
        };
        let delta = match delta {
            Some(v) => v,
            None => {
                let mut lo = f64::INFINITY;
                for_each_node(d.max(1), check_grid_points(d.max(1)), |x| {
                    let v = f(x);
                    lo = lo.min(v.min(1.0 - v));
                });
                lo.min(0.25)
            }
        };
        FermionSymbol::new(d, delta, smoothness, label, move |x| f(x))
    }
}

/// Fourier coefficients `c_m = (2pi)^{-d} ∫ e^{-i<m,x>} f(x) dx` by the
/// periodic trapezoid rule; entry `m` sits at index `m mod points` per axis.
#[derive(Clone, Debug)]
pub struct FourierGrid {
    points: usize,
    coeffs: Vec<C64>,
}

impl FourierGrid {
    pub fn new(symbol: &FermionSymbol, points: usize) -> Result<Self> {
        let d = symbol.d;
        let total = (points as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
        if points == 0 || total > QUAD_BUDGET as u128 {
            return Err(Error::QuadratureBudget(format!("{points}^{d} nodes exceed the budget {QUAD_BUDGET}")));
        }
        let total = total as usize;
        let mut data = Vec::with_capacity(total);
        if let Some(c) = symbol.constant {
            data.resize(total, C64::new(0.0, 0.0));
            data[0] = C64::new(c, 0.0);
            return Ok(Self { points, coeffs: data });
        }
        for_each_node(d, points, |x| data.push(C64::new(symbol.eval(x), 0.0)));
        let fft = FftPlanner::<f64>::new().plan_fft_forward(points);
        let mut line = vec![C64::new(0.0, 0.0); points];
        for axis in 0..d {
            let stride = points.pow((d - 1 - axis) as u32);
            for start in 0..total {
                if !(start / stride).is_multiple_of(points) {
                    continue;
                }
                for k in 0..points {
                    line[k] = data[start + k * stride];
                }
                fft.process(&mut line);
                for k in 0..points {
                    data[start + k * stride] = line[k];
                }
            }
        }
        let scale = 1.0 / total as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        Ok(Self { points, coeffs: data })
    }

    /// `c_m` for a multi-index with `|m_i| < points`.
    pub fn coeff(&self, m: &[i64]) -> C64 {
        let p = self.points as i64;
        let idx = m.iter().fold(0usize, |acc, &mi| acc * self.points + mi.rem_euclid(p) as usize);
        self.coeffs[idx]
    }
}

/// Truncated Toeplitz operator `Q_{jk} = c_{j-k}` on `{0, ..., n-1}^d`
/// with sites in lexicographic order.
pub fn toeplitz_truncation(symbol: &FermionSymbol, n: usize, quad_points: usize) -> Result<HermitianOperator> {
    let d = symbol.d;
    let m = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if m > MAX_DIM as u128 {
        return Err(Error::DimensionCap { dim: usize::try_from(m).unwrap_or(usize::MAX), cap: MAX_DIM });
    }
    if quad_points < 2 * n {
        return Err(Error::QuadratureBudget(format!(
            "{quad_points} nodes per axis cannot resolve coefficients up to |k| = {}",
            n.saturating_sub(1)
        )));
    }
    let m = m as usize;
    if let Some(c) = symbol.constant {
        return Ok(HermitianOperator::identity(m).scale(c));
    }
    let grid = FourierGrid::new(symbol, quad_points)?;
    let sites: Vec<Vec<i64>> = (0..m)
        .map(|idx| {
            let mut v = vec![0i64; d];
            let mut rest = idx;
            for axis in (0..d).rev() {
                v[axis] = (rest % n) as i64;
                rest /= n;
            }
            v
        })
        .collect();
    let mut diff = vec![0i64; d];
    let mat = Mat::from_fn(m, m, |j, k| {
        for axis in 0..d {
            diff[axis] = sites[j][axis] - sites[k][axis];
        }
        grid.coeff(&diff)
    });
    Ok(HermitianOperator::symmetrized(mat))
}

/// Eigendata of a pair of one-particle operators with spectra in (0, 1).
#[derive(Clone, Debug)]
pub struct OneParticlePair {
    q: HermitianOperator,
    r: HermitianOperator,
    qe: Eigenpairs,
    re: Eigenpairs,
}

fn check_open_unit(e: &Eigenpairs, name: &str) -> Result<()> {
    for &v in &e.values {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("{name} has eigenvalue {v} outside (0, 1)")));
        }
    }
    Ok(())
}

fn logit(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

impl OneParticlePair {
    pub fn new(q: &HermitianOperator, r: &HermitianOperator) -> Result<Self> {
        if q.dim() != r.dim() {
            return Err(Error::Shape(format!("{} vs {}", q.dim(), r.dim())));
        }
        let qe = q.eigh()?;
        let re = r.eigh()?;
        check_open_unit(&qe, "Q")?;
        check_open_unit(&re, "R")?;
        Ok(Self { q: q.clone(), r: r.clone(), qe, re })
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `Psi_s` of the quasi-free states; complex `s` goes through the
    /// general eigensolver on `W`.
    pub fn psi(&self, s: C64) -> Result<C64> {
        let ln1q: f64 = self.qe.values.iter().map(|q| (-q).ln_1p()).sum();
        let ln1r: f64 = self.re.values.iter().map(|r| (-r).ln_1p()).sum();
        let base = s * ln1q + (C64::new(1.0, 0.0) - s) * ln1r;
        let mut log_det = C64::new(0.0, 0.0);
        if s.im == 0.0 {
            let s = s.re;
            let wa: Vec<f64> = self.qe.values.iter().map(|&q| (0.5 * s * logit(q)).exp()).collect();
            let wb: Vec<f64> = self.re.values.iter().map(|&r| ((1.0 - s) * logit(r)).exp()).collect();
            let a = weighted_outer(self.qe.vectors.as_ref(), &wa);
            let b = weighted_outer(self.re.vectors.as_ref(), &wb);
            let w = HermitianOperator::symmetrized(&(&a * &b) * &a);
            for v in w.eigh()?.values {
                let z = 1.0 + v;
                if z <= BRANCH_MARGIN {
                    return Err(Error::BranchFault(C64::new(z, 0.0)));
                }
                log_det += z.ln();
            }
        } else {
            let wa: Vec<C64> = self.qe.values.iter().map(|&q| (0.5 * s * logit(q)).exp()).collect();
            let wb: Vec<C64> = self.re.values.iter().map(|&r| ((C64::new(1.0, 0.0) - s) * logit(r)).exp()).collect();
            let a = weighted_outer_complex(self.qe.vectors.as_ref(), &wa);
            let b = weighted_outer_complex(self.re.vectors.as_ref(), &wb);
            let w = &(&a * &b) * &a;
            let eig = w.eigenvalues().map_err(|_| Error::EigenSolverFailure)?;
            for v in eig {
                let z = C64::new(1.0, 0.0) + v;
                if z.re <= BRANCH_MARGIN {
                    return Err(Error::BranchFault(z));
                }
                log_det += z.ln();
            }
        }
        Ok(base + log_det)
    }

    /// `Tr Q log Q + Tr (1-Q) log(1-Q) - Tr Q log R - Tr (1-Q) log(1-R)`.
    pub fn relative_entropy(&self) -> f64 {
        let own: f64 = self.qe.values.iter().map(|&q| q * q.ln() + (1.0 - q) * (-q).ln_1p()).sum();
        let log_r =
            weighted_outer(self.re.vectors.as_ref(), &self.re.values.iter().map(|r| r.ln()).collect::<Vec<_>>());
        let log_1r =
            weighted_outer(self.re.vectors.as_ref(), &self.re.values.iter().map(|r| (-r).ln_1p()).collect::<Vec<_>>());
        let q = self.q.mat();
        let mut cross = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let qij = q[(i, j)];
                let iq = if i == j { C64::new(1.0, 0.0) - qij } else { -qij };
                cross += (qij * log_r[(j, i)] + iq * log_1r[(j, i)]).re;
            }
        }
        own - cross
    }

    /// `Tr K (1-Q) K Q` with `K = log(Q/(1-Q)) - log(R/(1-R))`.
    pub fn info_variance(&self) -> f64 {
        let la: Vec<f64> = self.qe.values.iter().map(|&q| logit(q)).collect();
        let lb: Vec<f64> = self.re.values.iter().map(|&r| logit(r)).collect();
        let k = weighted_outer(self.qe.vectors.as_ref(), &la) - weighted_outer(self.re.vectors.as_ref(), &lb);
        let kq = &k * self.q.mat();
        let y = &k - &kq;
        let m = self.dim();
        let mut acc = 0.0;
        for j in 0..m {
            for i in 0..m {
                acc += (y[(i, j)] * kq[(j, i)]).re;
            }
        }
        acc
    }
}

pub fn fermion_psi_s(q: &HermitianOperator, r: &HermitianOperator, s: C64) -> Result<C64> {
    OneParticlePair::new(q, r)?.psi(s)
}

pub fn fermion_relative_entropy(q: &HermitianOperator, r: &HermitianOperator) -> Result<f64> {
    Ok(OneParticlePair::new(q, r)?.relative_entropy())
}

pub fn fermion_info_variance(q: &HermitianOperator, r: &HermitianOperator) -> Result<f64> {
    Ok(OneParticlePair::new(q, r)?.info_variance())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SzegoMode {
    Entropy,
    Psi(f64),
    Variance,
}

/// `(2pi)^{-d} ∫ g(q(x), r(x)) dx` for the integrand selected by `mode`.
pub fn szego_rate(q: &FermionSymbol, r: &FermionSymbol, mode: SzegoMode, quad_points: usize) -> Result<f64> {
    if q.d != r.d {
        return Err(Error::Shape(format!("symbol dimensions {} vs {}", q.d, r.d)));
    }
    let d = q.d;
    let total = (quad_points as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if quad_points == 0 || total > QUAD_BUDGET as u128 {
        return Err(Error::QuadratureBudget(format!("{quad_points}^{d} nodes exceed the budget {QUAD_BUDGET}")));
    }
    let g = |a: f64, b: f64| match mode {
        SzegoMode::Entropy => a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln(),
        SzegoMode::Psi(s) => (a.powf(s) * b.powf(1.0 - s) + (1.0 - a).powf(s) * (1.0 - b).powf(1.0 - s)).ln(),
        SzegoMode::Variance => {
            let k = logit(a) - logit(b);
            k * k * a * (1.0 - a)
        }
    };
    if let (Some(a), Some(b)) = (q.constant, r.constant) {
        return Ok(g(a, b));
    }
    let mut acc = 0.0;
    for_each_node(d, quad_points, |x| acc += g(q.eval(x), r.eval(x)));
    Ok(acc / total as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// `sum_{0 < |k|_1 <= K} |k|_1^d |c_k|`.
    pub partial_sum: f64,
    /// Contribution of each Manhattan shell `|k|_1 = 1, ..., K`.
    pub shell_terms: Vec<f64>,
    /// Largest shell term in the last half of shells over the largest in the first half.
    pub tail_ratio: f64,
    pub decaying: bool,
}

/// Partial sums of the coefficient condition `sum_k |k|^d |c_k| < inf`.
pub fn decay_check(symbol: &FermionSymbol, k_max: usize, quad_points: usize) -> Result<DecayReport> {
    let d = symbol.d;
    if quad_points < 2 * k_max + 1 {
        return Err(Error::QuadratureBudget(format!("{quad_points} nodes per axis cannot resolve |k| = {k_max}")));
    }
    let grid = FourierGrid::new(symbol, quad_points)?;
    let mut shells = vec![0.0; k_max];
    let side = 2 * k_max + 1;
    let count = side.pow(d as u32);
    let mut m = vec![0i64; d];
    for idx in 0..count {
        let mut rest = idx;
        for axis in (0..d).rev() {
            m[axis] = (rest % side) as i64 - k_max as i64;
            rest /= side;
        }
        let norm: i64 = m.iter().map(|v| v.abs()).sum();
        if norm == 0 || norm as usize > k_max {
            continue;
        }
        shells[norm as usize - 1] += (norm as f64).powi(d as i32) * grid.coeff(&m).norm();
    }
    let partial_sum = shells.iter().sum();
    let half = k_max / 2;
    let first = shells[..half.max(1).min(k_max)].iter().fold(0.0f64, |a, &b| a.max(b));
    let last = shells[half.min(k_max)..].iter().fold(0.0f64, |a, &b| a.max(b));
    let tail_ratio = if first > 0.0 { last / first } else { 0.0 };
    Ok(DecayReport { partial_sum, shell_terms: shells, tail_ratio, decaying: tail_ratio < 0.5 })
}

/// Determinant of a small dense complex matrix (row-major, overwritten).
fn det_small(a: &mut [C64], k: usize) -> C64 {
    let mut det = C64::new(1.0, 0.0);
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x * k + col].norm().total_cmp(&a[y * k + col].norm())).unwrap();
        let p = a[pivot * k + col];
        if p.norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            for c in 0..k {
                a.swap(pivot * k + c, col * k + c);
            }
            det = -det;
        }
        det *= p;
        for row in col + 1..k {
            let f = a[row * k + col] / p;
            if f.norm() == 0.0 {
                continue;
            }
            for c in col..k {
                let v = a[col * k + c];
                a[row * k + c] -= f * v;
            }
        }
    }
    det
}

/// Quasi-free density matrix on the Fock space of `m` modes, basis state
/// with occupied set `S = {s_1 < ... < s_k}` at index `sum_i 2^{s_i}` being
/// `c_{s_1}^* ... c_{s_k}^* |0>`. Entries are `det(1-Q) det(A[S, T])` with
/// `A = Q (1-Q)^{-1}`.
pub fn fock_density(q: &HermitianOperator, max_fock: usize) -> Result<DensityMatrix> {
    let m = q.dim();
    if m > max_fock {
        return Err(Error::FockCap { modes: m, cap: max_fock });
    }
    let e = q.eigh()?;
    check_open_unit(&e, "Q")?;
    let a = weighted_outer(e.vectors.as_ref(), &e.values.iter().map(|&v| v / (1.0 - v)).collect::<Vec<_>>());
    let vacuum: f64 = e.values.iter().map(|&v| 1.0 - v).product();
    let dim = 1usize << m;
    let mut by_count: Vec<Vec<usize>> = vec![Vec::new(); m + 1];
    for s in 0..dim {
        by_count[s.count_ones() as usize].push(s);
    }
    let modes = |s: usize| -> Vec<usize> { (0..m).filter(|&i| s >> i & 1 == 1).collect() };
    let mut rho = Mat::<C64>::zeros(dim, dim);
    let mut buf = Vec::new();
    for (k, sets) in by_count.iter().enumerate() {
        let lists: Vec<Vec<usize>> = sets.iter().map(|&s| modes(s)).collect();
        for (x, &s) in sets.iter().enumerate() {
            for (y, &t) in sets.iter().enumerate() {
                let v = if k == 0 {
                    C64::new(1.0, 0.0)
                } else {
                    buf.clear();
                    for &i in &lists[x] {
                        for &j in &lists[y] {
                            buf.push(a[(i, j)]);
                        }
                    }
                    det_small(&mut buf, k)
                };
                rho[(s, t)] = v * vacuum;
            }
        }
    }
    DensityMatrix::new(&HermitianOperator::symmetrized(rho))
}

/// Pair of quasi-free state sequences with symbols `q` and `r`.
pub struct FermionModel {
    q: FermionSymbol,
    r: FermionSymbol,
    quad_points: usize,
    caps: Caps,
    cache: Mutex<HashMap<usize, Arc<OneParticlePair>>>,
}

impl fmt::Debug for FermionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FermionModel")
            .field("q", &self.q)
            .field("r", &self.r)
            .field("quad_points", &self.quad_points)
            .field("caps", &self.caps)
            .finish()
    }
}

pub fn fermion_model(q: FermionSymbol, r: FermionSymbol, caps: Caps) -> Result<FermionModel> {
    FermionModel::new(q, r, caps)
}

impl FermionModel {
    pub fn new(q: FermionSymbol, r: FermionSymbol, caps: Caps) -> Result<Self> {
        if q.d != r.d {
            return Err(Error::Shape(format!("symbol dimensions {} vs {}", q.d, r.d)));
        }
        let quad_points = default_quad_points(q.d);
        Ok(Self { q, r, quad_points, caps, cache: Mutex::new(HashMap::new()) })
    }

    pub fn with_quad_points(mut self, points: usize) -> Self {
        self.quad_points = points;
        self.cache.get_mut().unwrap().clear();
        self
    }

    pub fn d(&self) -> usize {
        self.q.d
    }

    pub fn symbols(&self) -> (&FermionSymbol, &FermionSymbol) {
        (&self.q, &self.r)
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }

    /// `(Q_n, R_n)` with cached eigendata.
    pub fn one_particle(&self, n: usize) -> Result<Arc<OneParticlePair>> {
        if let Some(p) = self.cache.lock().unwrap().get(&n) {
            return Ok(p.clone());
        }
        let points = self.quad_points.max(2 * n);
        let q = toeplitz_truncation(&self.q, n, points)?;
        let r = toeplitz_truncation(&self.r, n, points)?;
        let pair = Arc::new(OneParticlePair::new(&q, &r)?);
        self.cache.lock().unwrap().insert(n, pair.clone());
        Ok(pair)
    }

    fn constant_pair(&self) -> Option<(f64, f64)> {
        Some((self.q.constant?, self.r.constant?))
    }
}

impl ModelSequence for FermionModel {
    fn name(&self) -> String {
        format!("fermion(d={}, q={}, r={})", self.q.d, self.q.label, self.r.label)
    }

    fn weight(&self, n: usize) -> f64 {
        (n as f64).powi(self.q.d as i32)
    }

    fn state_pair(&self, n: usize) -> Result<(DensityMatrix, DensityMatrix)> {
        let modes = n.checked_pow(self.q.d as u32).unwrap_or(usize::MAX);
        if modes > self.caps.max_fock {
            return Err(Error::FockCap { modes, cap: self.caps.max_fock });
        }
        let pair = self.one_particle(n)?;
        Ok((fock_density(&pair.q, self.caps.max_fock)?, fock_density(&pair.r, self.caps.max_fock)?))
    }

    fn fast_psi(&self, n: usize, z: C64) -> Option<Result<C64>> {
        Some(self.one_particle(n).and_then(|p| p.psi(C64::new(1.0, 0.0) - z)))
    }

    fn fast_measure(&self, n: usize) -> Option<Result<SpectralMeasure>> {
        let (q, r) = self.constant_pair()?;
        let modes = n.pow(self.q.d as u32);
        // one mode: occupied with probabilities (q, r), empty with (1-q, 1-r)
        let unit = SpectralMeasure::new(vec![((q / r).ln(), q), (((1.0 - q) / (1.0 - r)).ln(), 1.0 - q)]);
        Some(unit.and_then(|u| u.convolve_power(modes)))
    }

    fn fast_divergences(&self, n: usize) -> Option<Result<(f64, f64)>> {
        Some(self.one_particle(n).map(|p| (p.relative_entropy(), p.info_variance())))
    }

    fn rate_override(&self) -> Option<Result<(f64, f64)>> {
        let d = szego_rate(&self.q, &self.r, SzegoMode::Entropy, self.quad_points);
        let v = szego_rate(&self.q, &self.r, SzegoMode::Variance, self.quad_points);
        Some(d.and_then(|d| Ok((d, v?))))
    }

    fn commuting(&self) -> bool {
        self.constant_pair().is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::PsiPair;

    fn cosine(mean: f64, amp: f64) -> FermionSymbol {
        SymbolSpec::Cosine { mean, amplitude: amp }.build(1, None).unwrap()
    }

    /// `c_j^*` on the occupation basis, sign `(-1)^{#occupied modes below j}`.
    fn creation(m: usize, j: usize) -> Mat<C64> {
        let dim = 1 << m;
        let mut c = Mat::<C64>::zeros(dim, dim);
        for s in 0..dim {
            if s >> j & 1 == 0 {
                let sign = if (s & ((1 << j) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                c[(s | 1 << j, s)] = C64::new(sign, 0.0);
            }
        }
        c
    }

    #[test]
    fn toeplitz_examples() {
        let q = toeplitz_truncation(&FermionSymbol::constant(1, 0.3).unwrap(), 5, 4096).unwrap();
        assert_eq!(q.max_abs_diff(&HermitianOperator::identity(5).scale(0.3)), 0.0);
        let q = toeplitz_truncation(&cosine(0.5, 0.25), 6, 4096).unwrap();
        for i in 0..6usize {
            for j in 0..6 {
                let want = match i.abs_diff(j) {
                    0 => 0.5,
                    1 => 0.125,
                    _ => 0.0,
                };
                assert!((q.get(i, j) - C64::new(want, 0.0)).norm() < 1e-15);
            }
        }
        let fd = SymbolSpec::FermiDirac { beta: 1.0, mu: 0.3, hopping: 1.0 }.build(1, None).unwrap();
        let q = toeplitz_truncation(&fd, 30, 4096).unwrap();
        for v in q.eigh().unwrap().values {
            assert!(v >= fd.delta() - 1e-12 && v <= 1.0 - fd.delta() + 1e-12);
        }
        assert!(matches!(toeplitz_truncation(&fd, 30, 40), Err(Error::QuadratureBudget(_))));
    }

    #[test]
    fn two_dimensional_coefficients() {
        let s = cosine(0.5, 0.2);
        let s2 = SymbolSpec::Cosine { mean: 0.5, amplitude: 0.2 }.build(2, None).unwrap();
        let q = toeplitz_truncation(&s2, 3, 64).unwrap();
        // nearest neighbours along either axis carry amplitude / (2 d)
        assert!((q.get(0, 1).re - 0.05).abs() < 1e-15);
        assert!((q.get(0, 3).re - 0.05).abs() < 1e-15);
        assert!(q.get(0, 4).norm() < 1e-15);
        assert!((q.get(4, 4).re - 0.5).abs() < 1e-15);
        assert_eq!(s.d(), 1);
    }

    #[test]
    fn symbol_range_is_checked() {
        assert!(FermionSymbol::new(1, 0.2, Smoothness::Analytic, "x", |x: &[f64]| 0.5 + 0.4 * x[0].cos()).is_err());
        assert!(SymbolSpec::Constant { value: 1.2 }.build(1, None).is_err());
        assert!(FermionSymbol::new(1, 0.7, Smoothness::Analytic, "x", |_: &[f64]| 0.5).is_err());
    }

    #[test]
    fn constant_symbol_closed_forms() {
        let (q, r) = (0.5, 0.25);
        let qo = HermitianOperator::identity(10).scale(q);
        let ro = HermitianOperator::identity(10).scale(r);
        let kl = q * (q / r).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - r)).ln();
        assert!((kl - 0.143841).abs() < 1e-6);
        assert!((fermion_relative_entropy(&qo, &ro).unwrap() - 10.0 * kl).abs() < 1e-12);
        let psi = fermion_psi_s(&qo, &ro, C64::new(0.5, 0.0)).unwrap();
        let closed = 10.0 * ((q * r).sqrt() + ((1.0 - q) * (1.0 - r)).sqrt()).ln();
        assert!((psi.re - closed).abs() < 1e-12);
        let rate = szego_rate(
            &FermionSymbol::constant(1, q).unwrap(),
            &FermionSymbol::constant(1, r).unwrap(),
            SzegoMode::Entropy,
            64,
        )
        .unwrap();
        assert!((rate - kl).abs() < 1e-15);
        let k = (q / (1.0 - q)).ln() - (r / (1.0 - r)).ln();
        let v = fermion_info_variance(&qo, &ro).unwrap();
        assert!((v - 10.0 * k * k * q * (1.0 - q)).abs() < 1e-12);
    }

    #[test]
    fn identical_symbols_give_zero() {
        let q = toeplitz_truncation(&cosine(0.4, 0.2), 12, 4096).unwrap();
        for s in [0.0, 0.3, 0.7, 1.0, 1.5] {
            assert!(fermion_psi_s(&q, &q, C64::new(s, 0.0)).unwrap().norm() < 1e-10);
        }
        assert!(fermion_relative_entropy(&q, &q).unwrap().abs() < 1e-12);
        let s = cosine(0.4, 0.2);
        assert!(szego_rate(&s, &s, SzegoMode::Entropy, 512).unwrap().abs() < 1e-15);
    }

    #[test]
    fn entropy_matches_psi_derivative() {
        let q = toeplitz_truncation(&cosine(0.45, 0.3), 10, 4096).unwrap();
        let r = toeplitz_truncation(&cosine(0.55, -0.2), 10, 4096).unwrap();
        let pair = OneParticlePair::new(&q, &r).unwrap();
        let h = 1e-4;
        let psi = |s: f64| pair.psi(C64::new(s, 0.0)).unwrap().re;
        let fd = |h: f64| (psi(1.0 + h) - psi(1.0 - h)) / (2.0 * h);
        let rich = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
        assert!((rich - pair.relative_entropy()).abs() < 1e-6);
        let d2 = |h: f64| (psi(1.0 + h) - 2.0 * psi(1.0) + psi(1.0 - h)) / (h * h);
        let d2 = (4.0 * d2(1e-3) - d2(2e-3)) / 3.0;
        assert!((d2 - pair.info_variance()).abs() < 1e-5, "{d2} vs {}", pair.info_variance());
    }

    #[test]
    fn fock_density_moments() {
        let one = HermitianOperator::diag(&[0.3]);
        let rho = fock_density(&one, 12).unwrap();
        assert!((rho.op().get(0, 0).re - 0.7).abs() < 1e-15);
        assert!((rho.op().get(1, 1).re - 0.3).abs() < 1e-15);

        let fd = SymbolSpec::FermiDirac { beta: 1.5, mu: 0.2, hopping: 0.5 }.build(1, None).unwrap();
        let q = toeplitz_truncation(&fd, 5, 4096).unwrap();
        let rho = fock_density(&q, 12).unwrap();
        assert!((rho.op().trace() - 1.0).abs() < 1e-12);
        let m = 5;
        let cs: Vec<Mat<C64>> = (0..m).map(|j| creation(m, j)).collect();
        for i in 0..m {
            for j in 0..m {
                // Tr(rho c_i^* c_j) = Q_{ji}
                let op = &cs[i] * cs[j].adjoint();
                let mut tr = C64::new(0.0, 0.0);
                let r = rho.op().mat();
                for a in 0..1 << m {
                    for b in 0..1 << m {
                        tr += r[(a, b)] * op[(b, a)];
                    }
                }
                assert!((tr - q.get(j, i)).norm() < 1e-12, "({i},{j})");
            }
        }
        assert!(matches!(fock_density(&HermitianOperator::identity(13).scale(0.5), 12), Err(Error::FockCap { .. })));
    }

    #[test]
    fn one_particle_matches_fock_space() {
        let qs = cosine(0.45, 0.3);
        let rs = SymbolSpec::FermiDirac { beta: 0.8, mu: -0.1, hopping: 1.0 }.build(1, None).unwrap();
        let model = FermionModel::new(qs, rs, Caps::default()).unwrap();
        for n in [2, 4, 6] {
            let (rho, sigma) = model.state_pair(n).unwrap();
            let dense = PsiPair::from_states(&rho, &sigma).unwrap();
            for s in [0.25, 0.5, 0.75] {
                let fast = model.fast_psi(n, C64::new(1.0 - s, 0.0)).unwrap().unwrap();
                let d = dense.psi(s).unwrap().unwrap();
                assert!((fast.re - d).abs() < 1e-8, "n={n} s={s}: {} vs {d}", fast.re);
            }
            let (d_fast, v_fast) = model.fast_divergences(n).unwrap().unwrap();
            let d_dense = crate::divergence::relative_entropy(&rho, &sigma).unwrap().unwrap();
            let v_dense = crate::divergence::info_variance(&rho, &sigma).unwrap().unwrap();
            assert!((d_fast - d_dense).abs() < 1e-9);
            assert!((v_fast - v_dense).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_psi_matches_fock_measure() {
        let model = FermionModel::new(cosine(0.45, 0.3), cosine(0.5, -0.25), Caps::default()).unwrap();
        let (rho, sigma) = model.state_pair(4).unwrap();
        let m = crate::modular::ns_spectral_measure(&sigma, &rho).unwrap();
        for z in [C64::new(0.3, 0.4), C64::new(-0.2, 0.1), C64::new(0.5, -0.6)] {
            let fast = model.fast_psi(4, z).unwrap().unwrap();
            let dense = m.cgf(z);
            // compare modulo the 2 pi i ambiguity of the logarithm
            let diff = fast - dense;
            let k = (diff.im / (2.0 * PI)).round();
            assert!((diff - C64::new(0.0, 2.0 * PI * k)).norm() < 1e-8, "{z}: {fast} vs {dense}");
        }
    }

    #[test]
    fn decay_examples() {
        let c = decay_check(&FermionSymbol::constant(1, 0.4).unwrap(), 16, 256).unwrap();
        assert_eq!(c.partial_sum, 0.0);
        let cos = decay_check(&cosine(0.5, 0.25), 16, 256).unwrap();
        assert!((cos.partial_sum - 0.25).abs() < 1e-14);
        assert!(cos.decaying);
        let step = SymbolSpec::Step { low: 0.3, high: 0.7 }.build(1, None).unwrap();
        let st = decay_check(&step, 32, 4096).unwrap();
        assert!(!st.decaying);
        assert!(st.shell_terms[30] > 0.2);
    }

    #[test]
    fn szego_convergence() {
        let qs = cosine(0.45, 0.3);
        let rs = SymbolSpec::FermiDirac { beta: 0.8, mu: -0.1, hopping: 1.0 }.build(1, None).unwrap();
        let rate = szego_rate(&qs, &rs, SzegoMode::Entropy, 4096).unwrap();
        let model = FermionModel::new(qs, rs, Caps::default()).unwrap();
        let gap = |n: usize| (model.fast_divergences(n).unwrap().unwrap().0 / n as f64 - rate).abs();
        assert!(gap(64) < gap(8));
        assert!(gap(128) < 1e-2);
    }
}
