//! Dense Hermitian operators on finite-dimensional complex spaces: validation,
//! clustered spectral decomposition, functional calculus, positive parts.
//!
//! Storage is always a dense `faer::Mat<c64>`. Every operator is symmetrized
//! on construction so downstream code can rely on exact Hermiticity.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Hard cap on operator dimension.
pub const MAX_DIM: usize = 4096;
/// Entrywise tolerance for the Hermitian check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance for merging eigenvalues into one spectral projection.
pub const CLUSTER_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a density matrix.
pub const PSD_TOL: f64 = 1e-12;
/// Allowed deviation of a density matrix trace from one.
pub const TRACE_TOL: f64 = 1e-12;
/// Default threshold above which the smallest eigenvalue counts as faithful.
pub const FAITHFUL_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct HermitianOperator {
    mat: Mat<C64>,
}

impl HermitianOperator {
    /// Validates shape, the dimension cap and Hermiticity, then symmetrizes.
    pub fn new(mat: Mat<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape(format!("{}x{}", mat.nrows(), mat.ncols())));
        }
        check_dim(mat.nrows(), MAX_DIM)?;
        let n = mat.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                let d = (mat[(i, j)] - mat[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        if worst > HERMITIAN_TOL {
            return Err(Error::NotHermitian(worst));
        }
        Ok(Self::symmetrized(mat))
    }

    /// Wraps a matrix known to be Hermitian up to rounding.
    pub(crate) fn symmetrized(mut mat: Mat<C64>) -> Self {
        let n = mat.nrows();
        for j in 0..n {
            mat[(j, j)] = C64::new(mat[(j, j)].re, 0.0);
            for i in 0..j {
                let avg = (mat[(i, j)] + mat[(j, i)].conj()) * 0.5;
                mat[(i, j)] = avg;
                mat[(j, i)] = avg.conj();
            }
        }
        Self { mat }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(Mat::from_fn(dim, dim, f))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("ragged or non-square rows".into()));
        }
        Self::from_fn(n, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self { mat: Mat::from_fn(n, n, |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) }) }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: Mat::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> MatRef<'_, C64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<C64> {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { mat: Mat::from_fn(self.dim(), self.dim(), |i, j| self.mat[(i, j)] * c) }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        Self { mat: Mat::from_fn(self.dim(), self.dim(), |i, j| self.mat[(i, j)] * a + other.mat[(i, j)] * b) }
    }

    /// `Tr(self * other)`, real for Hermitian operands.
    pub fn trace_product(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let a = self.mat[(i, j)];
                let b = other.mat[(i, j)];
                acc += a.re * b.re + a.im * b.im;
            }
        }
        acc
    }

    pub fn matmul(&self, other: &Self) -> Mat<C64> {
        &self.mat * &other.mat
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        let (n, m) = (self.dim(), other.dim());
        check_dim(n * m, MAX_DIM)?;
        Ok(Self { mat: Mat::from_fn(n * m, n * m, |i, j| self.mat[(i / m, j / m)] * other.mat[(i % m, j % m)]) })
    }

    pub fn kron_power(&self, k: usize) -> Result<Self> {
        let mut acc = Self::identity(1);
        for _ in 0..k {
            acc = acc.kron(self)?;
        }
        Ok(acc)
    }

    pub fn is_real(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| self.mat[(i, j)].im == 0.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((self.mat[(i, j)] - other.mat[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm_l2()
    }

    /// Frobenius norm of `[self, other]`.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        let ab = &self.mat * &other.mat;
        let ba = &other.mat * &self.mat;
        (&ab - &ba).norm_l2()
    }

    /// Raw eigenpairs, eigenvalues ascending.
    pub fn eigh(&self) -> Result<Eigenpairs> {
        eigh(self.mat.as_ref())
    }

    /// Largest absolute eigenvalue.
    pub fn op_norm(&self) -> Result<f64> {
        let e = self.eigh()?;
        Ok(e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

fn check_dim(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        Err(Error::DimensionCap { dim, cap })
    } else {
        Ok(())
    }
}

/// Eigenvalues (ascending) with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Mat<C64>,
}

pub(crate) fn eigh(mat: MatRef<'_, C64>) -> Result<Eigenpairs> {
    let n = mat.nrows();
    let real = (0..n).all(|j| (0..n).all(|i| mat[(i, j)].im == 0.0));
    if real {
        let re = Mat::<f64>::from_fn(n, n, |i, j| mat[(i, j)].re);
        let e = re.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolverFailure)?;
        let values: Vec<f64> = e.S().column_vector().iter().copied().collect();
        let u = e.U();
        let vectors = Mat::from_fn(n, n, |i, j| C64::new(u[(i, j)], 0.0));
        Ok(Eigenpairs { values, vectors })
    } else {
        let e = mat.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenSolverFailure)?;
        let values: Vec<f64> = e.S().column_vector().iter().map(|v| v.re).collect();
        Ok(Eigenpairs { values, vectors: e.U().to_owned() })
    }
}

/// `V diag(w) V^*` for real weights `w`, one per column of `V`.
pub(crate) fn weighted_outer(vectors: MatRef<'_, C64>, weights: &[f64]) -> Mat<C64> {
    let scaled = Mat::from_fn(vectors.nrows(), vectors.ncols(), |i, j| vectors[(i, j)] * weights[j]);
    &scaled * vectors.adjoint()
}

/// `V diag(w) V^*` for complex weights (not Hermitian in general).
pub(crate) fn weighted_outer_complex(vectors: MatRef<'_, C64>, weights: &[C64]) -> Mat<C64> {
    let scaled = Mat::from_fn(vectors.nrows(), vectors.ncols(), |i, j| vectors[(i, j)] * weights[j]);
    &scaled * vectors.adjoint()
}

/// Spectral decomposition with eigenvalues clustered into distinct values.
///
/// Projectors are kept implicitly as blocks of orthonormal eigenvector columns;
/// materializing every projector would cost `O(dim^3)` memory.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    multiplicities: Vec<usize>,
    offsets: Vec<usize>,
    vectors: Mat<C64>,
}

impl SpectralDecomposition {
    /// Clusters raw eigenpairs: consecutive eigenvalues closer than
    /// `cluster_tol * scale` are merged, where `scale` is the spectral norm.
    /// Clusters within that distance of zero are pinned to exactly zero.
    pub fn from_eigenpairs(eig: Eigenpairs, cluster_tol: f64) -> Self {
        let norm = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = cluster_tol * norm;
        let mut eigenvalues = Vec::new();
        let mut multiplicities = Vec::new();
        let mut offsets = Vec::new();
        let mut start = 0;
        let n = eig.values.len();
        while start < n {
            let mut end = start + 1;
            while end < n && eig.values[end] - eig.values[end - 1] <= tol {
                end += 1;
            }
            let mean = eig.values[start..end].iter().sum::<f64>() / (end - start) as f64;
            let contains_zero = eig.values[start] <= tol && eig.values[end - 1] >= -tol;
            eigenvalues.push(if contains_zero { 0.0 } else { mean });
            multiplicities.push(end - start);
            offsets.push(start);
            start = end;
        }
        Self { eigenvalues, multiplicities, offsets, vectors: eig.vectors }
    }

    /// Builds a decomposition from known eigenpairs (used when the spectrum is
    /// available analytically, e.g. tensor powers and Gibbs states).
    pub fn from_parts(values: Vec<f64>, vectors: Mat<C64>, cluster_tol: f64) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted: Vec<f64> = order.iter().map(|&k| values[k]).collect();
        let vecs = Mat::from_fn(vectors.nrows(), order.len(), |i, j| vectors[(i, order[j])]);
        Self::from_eigenpairs(Eigenpairs { values: sorted, vectors: vecs }, cluster_tol)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// All eigenvectors, grouped by cluster in ascending eigenvalue order.
    pub fn vectors(&self) -> MatRef<'_, C64> {
        self.vectors.as_ref()
    }

    /// Eigenvector columns spanning the `k`-th eigenspace.
    pub fn block(&self, k: usize) -> MatRef<'_, C64> {
        self.vectors.as_ref().subcols(self.offsets[k], self.multiplicities[k])
    }

    /// Column range of the `k`-th eigenspace inside [`Self::vectors`].
    pub fn columns(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.multiplicities[k]
    }

    /// Clustered eigenvalue attached to each eigenvector column.
    pub fn column_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (v, &m) in self.eigenvalues.iter().zip(&self.multiplicities) {
            out.extend(std::iter::repeat_n(*v, m));
        }
        out
    }

    pub fn projector(&self, k: usize) -> HermitianOperator {
        let b = self.block(k);
        HermitianOperator::symmetrized(b * b.adjoint())
    }

    /// Orthogonal projection onto the span of the clusters selected by `keep`.
    pub fn projector_where(&self, keep: impl Fn(f64) -> bool) -> HermitianOperator {
        let w: Vec<f64> = self.column_values().into_iter().map(|v| if keep(v) { 1.0 } else { 0.0 }).collect();
        HermitianOperator::symmetrized(weighted_outer(self.vectors.as_ref(), &w))
    }

    /// `sum_k f(lambda_k) P_k`; fails if `f` is not finite on the spectrum.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
        let mut w = Vec::with_capacity(self.dim());
        for (&lam, &m) in self.eigenvalues.iter().zip(&self.multiplicities) {
            let v = f(lam);
            if !v.is_finite() {
                return Err(Error::Domain(format!("function value {v} at eigenvalue {lam}")));
            }
            w.extend(std::iter::repeat_n(v, m));
        }
        Ok(HermitianOperator::symmetrized(weighted_outer(self.vectors.as_ref(), &w)))
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        HermitianOperator::symmetrized(weighted_outer(self.vectors.as_ref(), &self.column_values()))
    }
}

pub fn spectral_decompose(h: &HermitianOperator, cluster_tol: f64) -> Result<SpectralDecomposition> {
    Ok(SpectralDecomposition::from_eigenpairs(h.eigh()?, cluster_tol))
}

/// `sum over strictly positive clustered eigenvalues of lambda P_lambda`.
pub fn positive_part(h: &HermitianOperator) -> Result<HermitianOperator> {
    spectral_decompose(h, CLUSTER_TOL)?.apply(|l| l.max(0.0))
}

/// Projection onto the eigenspaces of strictly positive clustered eigenvalues.
pub fn positive_support_projector(h: &HermitianOperator) -> Result<TestOperator> {
    let p = spectral_decompose(h, CLUSTER_TOL)?.projector_where(|l| l > 0.0);
    Ok(TestOperator { op: p, kind: TestKind::Projector })
}

pub fn matrix_function(h: &HermitianOperator, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    spectral_decompose(h, CLUSTER_TOL)?.apply(f)
}

/// Sum of absolute clustered eigenvalues with multiplicity.
pub fn trace_norm(h: &HermitianOperator) -> Result<f64> {
    let sd = spectral_decompose(h, CLUSTER_TOL)?;
    Ok(sd.eigenvalues().iter().zip(sd.multiplicities()).map(|(l, &m)| l.abs() * m as f64).sum())
}

/// A validated density matrix together with its spectral decomposition.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    op: HermitianOperator,
    spectrum: SpectralDecomposition,
    faithful: bool,
    min_eig: f64,
}

pub fn validate_density(m: &HermitianOperator, faithfulness_tol: f64) -> Result<DensityMatrix> {
    let eig = m.eigh()?;
    let min_eig = eig.values.first().copied().unwrap_or(0.0);
    if min_eig < -PSD_TOL {
        return Err(Error::NotPsd(min_eig));
    }
    let tr = m.trace();
    if (tr - 1.0).abs() > TRACE_TOL {
        return Err(Error::TraceNotOne(tr));
    }
    Ok(DensityMatrix {
        op: m.clone(),
        spectrum: SpectralDecomposition::from_eigenpairs(eig, CLUSTER_TOL),
        faithful: min_eig > faithfulness_tol,
        min_eig,
    })
}

impl DensityMatrix {
    pub fn new(m: &HermitianOperator) -> Result<Self> {
        validate_density(m, FAITHFUL_TOL)
    }

    /// Builds a state from a known eigenbasis and eigenvalues, skipping the
    /// eigensolver. Positivity and normalization are still checked.
    pub fn from_spectrum(values: Vec<f64>, vectors: Mat<C64>) -> Result<Self> {
        check_dim(vectors.nrows(), MAX_DIM)?;
        let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::NotPsd(min_eig));
        }
        let tr: f64 = values.iter().sum();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::TraceNotOne(tr));
        }
        let op = HermitianOperator::symmetrized(weighted_outer(vectors.as_ref(), &values));
        Ok(Self {
            op,
            spectrum: SpectralDecomposition::from_parts(values, vectors, CLUSTER_TOL),
            faithful: min_eig > FAITHFUL_TOL,
            min_eig,
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::from_spectrum(vec![1.0 / dim as f64; dim], identity_mat(dim)).expect("maximally mixed state is valid")
    }

    /// `self ⊗ other`, with the spectrum assembled from the factors.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let (a, b) = (self.dim(), other.dim());
        check_dim(a * b, MAX_DIM)?;
        let va = self.spectrum.vectors();
        let vb = other.spectrum.vectors();
        let la = self.spectrum.column_values();
        let lb = other.spectrum.column_values();
        let vectors = Mat::from_fn(a * b, a * b, |i, j| va[(i / b, j / b)] * vb[(i % b, j % b)]);
        let values: Vec<f64> = (0..a * b).map(|j| la[j / b] * lb[j % b]).collect();
        let mut out = Self::from_spectrum(values, vectors)?;
        // keep the exactly-built operator rather than the spectral reconstruction
        out.op = self.op.kron(&other.op)?;
        Ok(out)
    }

    pub fn kron_power(&self, n: usize) -> Result<Self> {
        check_dim(self.dim().saturating_pow(n as u32), MAX_DIM)?;
        let mut acc = Self::from_spectrum(vec![1.0], identity_mat(1))?;
        for _ in 0..n {
            acc = acc.kron(self)?;
        }
        Ok(acc)
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn faithful(&self) -> bool {
        self.faithful
    }

    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

pub(crate) fn identity_mat(n: usize) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Projector,
    General,
}

/// An operator `T` with `0 <= T <= I`.
#[derive(Clone, Debug)]
pub struct TestOperator {
    op: HermitianOperator,
    kind: TestKind,
}

impl TestOperator {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let e = op.eigh()?;
        let lo = e.values.first().copied().unwrap_or(0.0);
        let hi = e.values.last().copied().unwrap_or(0.0);
        if lo < -PSD_TOL {
            return Err(Error::InvalidTest(lo));
        }
        if hi > 1.0 + PSD_TOL {
            return Err(Error::InvalidTest(hi));
        }
        let is_proj = e.values.iter().all(|v| v.abs() <= 1e-10 || (v - 1.0).abs() <= 1e-10);
        let kind = if is_proj { TestKind::Projector } else { TestKind::General };
        Ok(Self { op, kind })
    }

    pub(crate) fn projector_unchecked(op: HermitianOperator) -> Self {
        Self { op, kind: TestKind::Projector }
    }

    pub fn identity(dim: usize) -> Self {
        Self::projector_unchecked(HermitianOperator::identity(dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self::projector_unchecked(HermitianOperator::zeros(dim))
    }

    /// `(1 - t) a + t b`, a test for `t` in `[0, 1]`.
    pub fn mix(a: &Self, b: &Self, t: f64) -> Self {
        assert!((0.0..=1.0).contains(&t), "mixing weight {t} outside [0, 1]");
        if t == 0.0 {
            return a.clone();
        }
        if t == 1.0 {
            return b.clone();
        }
        Self { op: a.op.lincomb(1.0 - t, &b.op, t), kind: TestKind::General }
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn kind(&self) -> TestKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}
