//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Matrices are square, row-major and double precision. [`HermitianOperator`]
//! is the carrier for density operators and projective-resolution blocks;
//! constructing one checks Hermiticity to [`HERMITICITY_TOL`] elementwise.
//!
//! The eigensolver is a cyclic complex Jacobi method. It is slow for large
//! matrices but very accurate, which is what the analytic cross-checks need
//! at the dimensions used here (a few dozen at most).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;
use thiserror::Error;
// Float methods come from std when it is linked and from num-traits otherwise.
#[allow(unused_imports)]
use num_traits::Float;

/// Elementwise tolerance of the Hermiticity contract.
pub const HERMITICITY_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("row {row} has {len} entries, expected {dim}")]
    NotSquare { row: usize, len: usize, dim: usize },
    #[error("matrix has zero dimension")]
    Empty,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (max |a_ij - conj(a_ji)| = {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("trace of product has imaginary part {imag:e}")]
    ComplexTrace { imag: f64 },
}

pub type Result<T> = core::result::Result<T, LinalgError>;

/// Numerical tolerances used by the validators and the square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermitian: f64,
    pub trace: f64,
    pub psd: f64,
    pub projector: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            trace: 1e-10,
            psd: 1e-10,
            projector: 1e-10,
        }
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ComplexMatrix ")?;
        f.debug_list().entries(self.data.chunks(self.dim.max(1))).finish()
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != dim {
                return Err(LinalgError::NotSquare {
                    row,
                    len: r.len(),
                    dim,
                });
            }
            data.extend(r);
        }
        let m = Self { dim, data };
        if !m.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        Ok(m)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len(), "outer product of mismatched vectors");
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff of mismatched matrices");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest elementwise modulus of `self`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |a_ij - conj(a_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Place `self` as a diagonal block of a `dim`-dimensional zero matrix.
    pub fn embed(&self, dim: usize, offset: usize) -> Self {
        assert!(offset + self.dim <= dim, "block does not fit");
        let mut m = Self::zeros(dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(offset + i, offset + j)] = self[(i, j)];
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        self.rows()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            })
        } else {
            Ok(())
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "adding mismatched matrices");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "subtracting mismatched matrices");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "multiplying mismatched matrices");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// A matrix satisfying `a_ij = conj(a_ji)` to [`HERMITICITY_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, HERMITICITY_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if matrix.dim() == 0 {
            return Err(LinalgError::Empty);
        }
        if !matrix.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let defect = matrix.hermiticity_defect();
        if defect > tol {
            return Err(LinalgError::NotHermitian { defect });
        }
        Ok(Self(matrix))
    }

    /// Hermitian part of an arbitrary matrix; use only where the input is
    /// Hermitian up to roundoff by construction.
    pub fn symmetrized(matrix: &ComplexMatrix) -> Self {
        Self(matrix.hermitian_part())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_real_diag(diag))
    }

    /// `|v><v|` (a rank-1 projector when `v` is a unit vector).
    pub fn projector(v: &[C64]) -> Self {
        Self::symmetrized(&ComplexMatrix::outer(v, v))
    }

    pub fn projector_real(v: &[f64]) -> Self {
        let v: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::projector(&v)
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn embed(&self, dim: usize, offset: usize) -> Self {
        Self(self.0.embed(dim, offset))
    }

    /// `U self U^dagger` for a unitary `U`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        Self::symmetrized(&(&(u * &self.0) * &u.adjoint()))
    }
}

impl core::ops::Deref for HermitianOperator {
    type Target = ComplexMatrix;

    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;

    fn add(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator(&self.0 + &rhs.0)
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;

    fn sub(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator(&self.0 - &rhs.0)
    }
}

/// Eigenvalues in descending order with the matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    /// `V f(diag) V^dagger`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let m = ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.vectors[(j, k)].conj() * fv[k])
                .sum()
        });
        HermitianOperator::symmetrized(&m)
    }
}

/// Eigendecomposition of a Hermitian operator by cyclic complex Jacobi sweeps.
pub fn hermitian_eigendecomposition(op: &HermitianOperator) -> Eigen {
    let n = op.dim();
    let mut a = op.matrix().clone();
    let mut v = ComplexMatrix::identity(n);

    let scale = a.data.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if scale == 0.0 {
        return Eigen {
            values: vec![0.0; n],
            vectors: v,
        };
    }
    let threshold = (f64::EPSILON * f64::EPSILON) * scale;

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag * mag <= threshold * 1e-4 {
                    continue;
                }
                rotate(&mut a, &mut v, p, q, apq / mag, mag);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, k| v[(i, order[k])]);
    Eigen { values, vectors }
}

// One Jacobi rotation in the (p, q) plane. `U = diag(1, conj(phase)) * R`
// with `R` the real rotation that zeroes the symmetric off-diagonal entry.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize, phase: C64, mag: f64) {
    let n = a.dim();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let cp = phase.conj();
    let u_pp = C64::new(c, 0.0);
    let u_pq = C64::new(s, 0.0);
    let u_qp = cp * (-s);
    let u_qq = cp * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

/// Eigendecomposition of an arbitrary matrix that must be Hermitian.
pub fn eigh(m: &ComplexMatrix) -> Result<Eigen> {
    let op = HermitianOperator::new(m.clone())?;
    Ok(hermitian_eigendecomposition(&op))
}

/// Positive square root; eigenvalues in `[-1e-10, 0)` are clamped to zero.
pub fn hermitian_sqrt(op: &HermitianOperator) -> Result<HermitianOperator> {
    hermitian_sqrt_with(op, Tolerances::default().psd)
}

pub fn hermitian_sqrt_with(op: &HermitianOperator, negativity_tol: f64) -> Result<HermitianOperator> {
    let eig = hermitian_eigendecomposition(op);
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -negativity_tol {
        return Err(LinalgError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    // Eigenvalues inside the roundoff floor are zero; taking their square root
    // would turn 1e-17 noise into 3e-9 errors.
    let top = eig.values.first().map_or(0.0, |x| x.abs()).max(min.abs());
    let floor = eig.values.len() as f64 * f64::EPSILON * top;
    Ok(eig.map_spectrum(|x| if x <= floor { 0.0 } else { x.sqrt() }))
}

/// `Re Tr(a b)`; an imaginary part above `1e-10` is an error.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    a.check_dim(b)?;
    let n = a.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    if acc.im.abs() > 1e-10 {
        return Err(LinalgError::ComplexTrace { imag: acc.im });
    }
    Ok(acc.re)
}

/// Spectral norm `max |eigenvalue|`.
pub fn operator_norm(a: &HermitianOperator) -> f64 {
    hermitian_eigendecomposition(a)
        .values
        .iter()
        .fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch { index: usize, dim: usize, expected: usize },
    NonFinite { index: usize },
    NotHermitian { index: usize, defect: f64 },
    Trace { trace: f64 },
    NegativeEigenvalue { min: f64 },
    NotIdempotent { index: usize, defect: f64 },
    NotOrthogonal { first: usize, second: usize, defect: f64 },
    SumNotIdentity { defect: f64 },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { index, dim, expected } => {
                write!(f, "block {index} has dimension {dim}, expected {expected}")
            }
            Violation::NonFinite { index } => write!(f, "block {index} has non-finite entries"),
            Violation::NotHermitian { index, defect } => {
                write!(f, "block {index} is not Hermitian (defect {defect:e})")
            }
            Violation::Trace { trace } => write!(f, "trace is {trace}, expected 1"),
            Violation::NegativeEigenvalue { min } => write!(f, "negative eigenvalue {min:e}"),
            Violation::NotIdempotent { index, defect } => {
                write!(f, "block {index} is not idempotent (defect {defect:e})")
            }
            Violation::NotOrthogonal { first, second, defect } => {
                write!(f, "blocks {first} and {second} are not orthogonal (defect {defect:e})")
            }
            Violation::SumNotIdentity { defect } => {
                write!(f, "blocks do not sum to the identity (defect {defect:e})")
            }
            Violation::Empty => f.write_str("no blocks"),
        }
    }
}

/// Outcome of a diagnostic check; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks Hermiticity, unit trace and non-negative spectrum.
pub fn validate_density(m: &ComplexMatrix) -> ValidationReport {
    validate_density_with(m, &Tolerances::default())
}

pub fn validate_density_with(m: &ComplexMatrix, tol: &Tolerances) -> ValidationReport {
    let mut violations = Vec::new();
    if m.dim() == 0 {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }
    if !m.is_finite() {
        violations.push(Violation::NonFinite { index: 0 });
        return ValidationReport { violations };
    }
    let defect = m.hermiticity_defect();
    if defect > tol.hermitian {
        violations.push(Violation::NotHermitian { index: 0, defect });
    }
    let trace = m.trace().re;
    if (trace - 1.0).abs() > tol.trace {
        violations.push(Violation::Trace { trace });
    }
    let eig = hermitian_eigendecomposition(&HermitianOperator::symmetrized(m));
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -tol.psd {
        violations.push(Violation::NegativeEigenvalue { min });
    }
    ValidationReport { violations }
}

/// Checks that `blocks` are Hermitian, idempotent, mutually orthogonal
/// projectors summing to the identity.
pub fn validate_resolution(blocks: &[ComplexMatrix]) -> ValidationReport {
    validate_resolution_with(blocks, &Tolerances::default())
}

pub fn validate_resolution_with(blocks: &[ComplexMatrix], tol: &Tolerances) -> ValidationReport {
    let mut violations = Vec::new();
    let Some(first) = blocks.first() else {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    };
    let dim = first.dim();
    for (index, e) in blocks.iter().enumerate() {
        if e.dim() != dim {
            violations.push(Violation::DimensionMismatch {
                index,
                dim: e.dim(),
                expected: dim,
            });
        } else if !e.is_finite() {
            violations.push(Violation::NonFinite { index });
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }

    for (index, e) in blocks.iter().enumerate() {
        let defect = e.hermiticity_defect();
        if defect > tol.hermitian {
            violations.push(Violation::NotHermitian { index, defect });
        }
        let defect = (e * e).max_abs_diff(e);
        if defect > tol.projector {
            violations.push(Violation::NotIdempotent { index, defect });
        }
    }
    for i in 0..blocks.len() {
        for j in (i + 1)..blocks.len() {
            let defect = (&blocks[i] * &blocks[j]).max_abs();
            if defect > tol.projector {
                violations.push(Violation::NotOrthogonal {
                    first: i,
                    second: j,
                    defect,
                });
            }
        }
    }
    let mut sum = ComplexMatrix::zeros(dim);
    for e in blocks {
        sum = &sum + e;
    }
    let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim));
    if defect > tol.projector {
        violations.push(Violation::SumNotIdentity { defect });
    }
    ValidationReport { violations }
}
