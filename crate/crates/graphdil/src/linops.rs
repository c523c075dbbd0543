//! Dense complex linear algebra: tensor products, partial traces, the
//! matrix exponential and its directional derivative, norms, dissipativity
//! and positivity tests, and superoperators on `M_d`.
//!
//! Vectorization is column-stacking everywhere: `vec(X)[i + j*d] = X[i, j]`,
//! so that `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. Kronecker products use the first
//! factor as the slow index.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Default tolerance for semidefiniteness and unitarity tests.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinopsError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("malformed matrix literal: {0}")]
    Literal(String),
}

pub type Result<T> = std::result::Result<T, LinopsError>;

fn dim_err(op: &'static str, detail: String) -> LinopsError {
    LinopsError::Dimension { op, detail }
}

/// Complex dense matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    inner: DMatrix<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix {}x{} {:?}", self.rows(), self.cols(), self.to_row_major())
    }
}

impl CMatrix {
    /// Builds a matrix from row-major entries, rejecting NaN and infinities.
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(dim_err(
                "CMatrix::new",
                format!("{} entries for shape {}x{}", entries.len(), rows, cols),
            ));
        }
        for (k, z) in entries.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(LinopsError::NonFinite { row: k / cols.max(1), col: k % cols.max(1) });
            }
        }
        Ok(Self { inner: DMatrix::from_row_slice(rows, cols, &entries) })
    }

    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { inner: DMatrix::from_fn(rows, cols, f) }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { inner: DMatrix::zeros(rows, cols) }
    }

    pub fn identity(n: usize) -> Self {
        Self { inner: DMatrix::identity(n, n) }
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { C64::new(0.0, 0.0) })
    }

    pub fn diag_real(values: &[f64]) -> Self {
        Self::diag(&values.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    /// Column vector with the given entries.
    pub fn column(values: &[C64]) -> Self {
        Self { inner: DMatrix::from_column_slice(values.len(), 1, values) }
    }

    /// Standard basis column vector `e_k` of length `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        Self::from_fn(n, 1, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Matrix unit `E_ij` of size `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        Self::from_fn(n, n, |a, b| if a == i && b == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn from_dmatrix(inner: DMatrix<C64>) -> Self {
        Self { inner }
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self { inner: self.inner.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { inner: self.inner.transpose() }
    }

    pub fn conj(&self) -> Self {
        Self { inner: self.inner.map(|z| z.conj()) }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { inner: &self.inner * c }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute entry difference; zero iff the matrices are equal.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shape mismatch");
        self.inner.iter().zip(other.inner.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.cols())
            .map(|j| self.inner.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(dim_err("mul", format!("{:?} * {:?}", self.shape(), other.shape())));
        }
        Ok(Self { inner: &self.inner * &other.inner })
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(dim_err("add", format!("{:?} + {:?}", self.shape(), other.shape())));
        }
        Ok(Self { inner: &self.inner + &other.inner })
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(dim_err("sub", format!("{:?} - {:?}", self.shape(), other.shape())));
        }
        Ok(Self { inner: &self.inner - &other.inner })
    }

    /// Rectangular block of the matrix.
    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self { inner: self.inner.view((row, col), (rows, cols)).into_owned() }
    }

    /// Copy of `self` with `block` written at offset `(row, col)`.
    pub fn with_block(&self, row: usize, col: usize, block: &Self) -> Self {
        let mut inner = self.inner.clone();
        inner.view_mut((row, col), block.shape()).copy_from(&block.inner);
        Self { inner }
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> Self {
        Self { inner: DMatrix::from_column_slice(self.rows() * self.cols(), 1, self.inner.as_slice()) }
    }

    /// Inverse of [`CMatrix::vec`] for a column of length `rows * cols`.
    pub fn unvec(&self, rows: usize, cols: usize) -> Result<Self> {
        if self.cols() != 1 || self.rows() != rows * cols {
            return Err(dim_err("unvec", format!("{:?} into {}x{}", self.shape(), rows, cols)));
        }
        Ok(Self { inner: DMatrix::from_column_slice(rows, cols, self.inner.as_slice()) })
    }

    /// Euclidean norm of all entries, i.e. the vector norm of a column.
    pub fn vector_norm(&self) -> f64 {
        self.frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn hermitian_part(&self) -> Self {
        Self { inner: (&self.inner + self.inner.adjoint()) * C64::new(0.5, 0.0) }
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        self.checked_add(rhs).expect("matrix addition shape mismatch")
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        self.checked_sub(rhs).expect("matrix subtraction shape mismatch")
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.checked_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix { inner: -&self.inner }
    }
}

/// One scalar of a matrix literal: `[re, im]` or a bare real number.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarLiteral {
    Complex([f64; 2]),
    Real(f64),
}

impl ScalarLiteral {
    fn value(self) -> C64 {
        match self {
            ScalarLiteral::Complex([re, im]) => C64::new(re, im),
            ScalarLiteral::Real(re) => C64::new(re, 0.0),
        }
    }
}

/// JSON matrix literal: nested rows of `[re, im]` scalars.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixLiteral(pub Vec<Vec<ScalarLiteral>>);

impl MatrixLiteral {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.0.len();
        if rows == 0 {
            return Err(LinopsError::Literal("empty matrix".into()));
        }
        let cols = self.0[0].len();
        if cols == 0 || self.0.iter().any(|r| r.len() != cols) {
            return Err(LinopsError::Literal("ragged or empty rows".into()));
        }
        let entries = self.0.iter().flat_map(|r| r.iter().map(|s| s.value())).collect();
        CMatrix::new(rows, cols, entries)
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixLiteral(
            (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| ScalarLiteral::Complex([m.get(i, j).re, m.get(i, j).im])).collect())
                .collect(),
        )
    }
}

impl Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixLiteral::from_matrix(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MatrixLiteral::deserialize(d)?.to_matrix().map_err(serde::de::Error::custom)
    }
}

fn require_square(op: &'static str, a: &CMatrix) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(dim_err(op, format!("expected square matrix, got {:?}", a.shape())))
    }
}

fn require_same_square(op: &'static str, a: &CMatrix, b: &CMatrix) -> Result<()> {
    require_square(op, a)?;
    if a.shape() != b.shape() {
        return Err(dim_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Kronecker product; the first factor is the slow index.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix { inner: a.inner.kronecker(&b.inner) }
}

/// `tr₂` on `ℂ^{d1} ⊗ ℂ^{d2}`.
pub fn partial_trace_second(m: &CMatrix, d1: usize, d2: usize) -> Result<CMatrix> {
    if m.shape() != (d1 * d2, d1 * d2) {
        return Err(dim_err("partial_trace_second", format!("{:?} for d1={d1}, d2={d2}", m.shape())));
    }
    Ok(CMatrix::from_fn(d1, d1, |a, b| (0..d2).map(|k| m.inner[(a * d2 + k, b * d2 + k)]).sum()))
}

/// `tr₁` on `ℂ^{d1} ⊗ ℂ^{d2}`.
pub fn partial_trace_first(m: &CMatrix, d1: usize, d2: usize) -> Result<CMatrix> {
    if m.shape() != (d1 * d2, d1 * d2) {
        return Err(dim_err("partial_trace_first", format!("{:?} for d1={d1}, d2={d2}", m.shape())));
    }
    Ok(CMatrix::from_fn(d2, d2, |k, l| (0..d1).map(|a| m.inner[(a * d2 + k, a * d2 + l)]).sum()))
}

// Padé(13) coefficients and the matching scaling threshold.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    require_square("expm", a)?;
    let n = a.rows();
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = a.norm_one();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let x = &a.inner * C64::new(0.5f64.powi(s), 0.0);
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let id = DMatrix::<C64>::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * b(13) + &x4 * b(11) + &x2 * b(9)) + &x6 * b(7) + &x4 * b(5) + &x2 * b(3) + &id * b(1);
    let u = &x * u_inner;
    let v = &x6 * (&x6 * b(12) + &x4 * b(10) + &x2 * b(8)) + &x6 * b(6) + &x4 * b(4) + &x2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is singular");
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(CMatrix { inner: r })
}

// 8-point Gauss–Legendre rule on [-1, 1].
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Derivative of `t ↦ e^{X + tY}`, computed as
/// `∫₀¹ e^{(1−s)Z} Y e^{sZ} ds` with `Z = X + tY` by composite Gauss–Legendre
/// quadrature, doubling the panel count until successive estimates agree to 1e-10.
pub fn exp_derivative(x: &CMatrix, y: &CMatrix, t: f64) -> Result<CMatrix> {
    require_same_square("exp_derivative", x, y)?;
    let z = x + &y.scale_real(t);
    let estimate = |panels: usize| -> Result<CMatrix> {
        let h = 1.0 / panels as f64;
        let mut acc = CMatrix::zeros(x.rows(), x.cols());
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
                let s = mid + 0.5 * h * node;
                let left = expm(&z.scale_real(1.0 - s))?;
                let right = expm(&z.scale_real(s))?;
                acc = &acc + &(&(&left * y) * &right).scale_real(0.5 * h * weight);
            }
        }
        Ok(acc)
    };
    let mut panels = 1;
    let mut prev = estimate(panels)?;
    while panels < 1 << 12 {
        panels *= 2;
        let next = estimate(panels)?;
        let change = spectral_norm(&(&next - &prev));
        prev = next;
        if change < 1e-10 * spectral_norm(&prev).max(1.0) {
            break;
        }
    }
    Ok(prev)
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    a.inner.clone().singular_values().iter().copied().collect()
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    singular_values(a).into_iter().fold(0.0, f64::max)
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> f64 {
    singular_values(a).into_iter().sum()
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (as columns) of the
/// Hermitian part of `a`.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    require_square("hermitian_eigen", a)?;
    let eig = nalgebra::SymmetricEigen::new(a.hermitian_part().inner);
    let mut order: Vec<usize> = (0..a.rows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(a.rows(), a.rows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    if a.rows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = a.hermitian_part().inner.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    require_same_square("commutator", a, b)?;
    Ok(&(a * b) - &(b * a))
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    require_same_square("anticommutator", a, b)?;
    Ok(&(a * b) + &(b * a))
}

/// `ad_u(s) = u s u*`.
pub fn adjoint_action(u: &CMatrix, s: &CMatrix) -> Result<CMatrix> {
    require_same_square("adjoint_action", u, s)?;
    Ok(&(u * s) * &u.adjoint())
}

/// Hermitian part negative semidefinite within `tol`.
pub fn is_dissipative_hilbert(a: &CMatrix, tol: f64) -> bool {
    a.is_square() && hermitian_eigenvalues(a).last().map_or(true, |&top| top <= tol)
}

/// Hermitian within `tol` with smallest eigenvalue at least `-tol`.
pub fn is_psd(a: &CMatrix, tol: f64) -> bool {
    a.is_hermitian(tol) && hermitian_eigenvalues(a).first().map_or(true, |&low| low >= -tol)
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.is_square() && spectral_norm(&(&(u * &u.adjoint()) - &CMatrix::identity(u.rows()))) <= tol
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> CMatrix {
    let z = C64::new(0.0, 0.0);
    CMatrix::new(2, 2, vec![z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z]).unwrap()
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

/// Linear map on `M_d`, stored as the `d²×d²` matrix acting on `vec(X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperOp {
    dim: usize,
    matrix: CMatrix,
}

impl SuperOp {
    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.shape() != (dim * dim, dim * dim) {
            return Err(dim_err("SuperOp::from_matrix", format!("{:?} for d={dim}", matrix.shape())));
        }
        Ok(Self { dim, matrix })
    }

    /// Tabulates a linear map by its action on the matrix units.
    pub fn from_fn(dim: usize, mut f: impl FnMut(&CMatrix) -> CMatrix) -> Self {
        let n = dim * dim;
        let mut inner = DMatrix::zeros(n, n);
        for j in 0..dim {
            for i in 0..dim {
                let image = f(&CMatrix::unit(dim, i, j)).vec();
                inner.set_column(i + j * dim, &image.inner.column(0));
            }
        }
        Self { dim, matrix: CMatrix { inner } }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: CMatrix::identity(dim * dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: CMatrix::zeros(dim * dim, dim * dim) }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self { dim: a.rows(), matrix: tensor(&b.transpose(), a) }
    }

    /// `X ↦ [h, X]`.
    pub fn commutator_with(h: &CMatrix) -> Self {
        let id = CMatrix::identity(h.rows());
        Self { dim: h.rows(), matrix: &tensor(&id, h) - &tensor(&h.transpose(), &id) }
    }

    /// `X ↦ {h, X}`.
    pub fn anticommutator_with(h: &CMatrix) -> Self {
        let id = CMatrix::identity(h.rows());
        Self { dim: h.rows(), matrix: &tensor(&id, h) + &tensor(&h.transpose(), &id) }
    }

    /// `X ↦ Σ K X K*`.
    pub fn from_kraus(kraus: &[CMatrix]) -> Self {
        let d = kraus[0].rows();
        let mut m = CMatrix::zeros(d * d, d * d);
        for k in kraus {
            m = &m + &tensor(&k.conj(), k);
        }
        Self { dim: d, matrix: m }
    }

    /// `X ↦ Σ K* X K`, the dual of [`SuperOp::from_kraus`].
    pub fn from_kraus_dual(kraus: &[CMatrix]) -> Self {
        let d = kraus[0].rows();
        let mut m = CMatrix::zeros(d * d, d * d);
        for k in kraus {
            m = &m + &tensor(&k.transpose(), &k.adjoint());
        }
        Self { dim: d, matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.shape() != (self.dim, self.dim) {
            return Err(dim_err("SuperOp::apply", format!("{:?} for d={}", x.shape(), self.dim)));
        }
        (&self.matrix * &x.vec()).unvec(self.dim, self.dim)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SuperOp) -> SuperOp {
        SuperOp { dim: self.dim, matrix: &self.matrix * &other.matrix }
    }

    pub fn add(&self, other: &SuperOp) -> SuperOp {
        SuperOp { dim: self.dim, matrix: &self.matrix + &other.matrix }
    }

    pub fn sub(&self, other: &SuperOp) -> SuperOp {
        SuperOp { dim: self.dim, matrix: &self.matrix - &other.matrix }
    }

    pub fn scale(&self, c: C64) -> SuperOp {
        SuperOp { dim: self.dim, matrix: self.matrix.scale(c) }
    }

    pub fn scale_real(&self, c: f64) -> SuperOp {
        self.scale(C64::new(c, 0.0))
    }

    pub fn expm(&self) -> SuperOp {
        SuperOp { dim: self.dim, matrix: expm(&self.matrix).expect("superoperator matrix is square") }
    }

    /// Choi matrix `Σ_ij Φ(E_ij) ⊗ E_ij`.
    pub fn choi(&self) -> CMatrix {
        let d = self.dim;
        let mut c = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let img = self.apply(&CMatrix::unit(d, i, j)).expect("unit has matching shape");
                c = &c + &tensor(&img, &CMatrix::unit(d, i, j));
            }
        }
        c
    }

    /// Inverse of [`SuperOp::choi`].
    pub fn from_choi(dim: usize, choi: &CMatrix) -> Result<SuperOp> {
        if choi.shape() != (dim * dim, dim * dim) {
            return Err(dim_err("SuperOp::from_choi", format!("{:?} for d={dim}", choi.shape())));
        }
        Ok(SuperOp::from_fn(dim, |x| {
            // x is a matrix unit E_ij; recover the (i, j) block Φ(E_ij).
            let (mut i, mut j) = (0, 0);
            for a in 0..dim {
                for b in 0..dim {
                    if x.get(a, b).norm() > 0.5 {
                        i = a;
                        j = b;
                    }
                }
            }
            CMatrix::from_fn(dim, dim, |a, b| choi.get(a * dim + i, b * dim + j))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_matrix(n: usize, seed: u64) -> CMatrix {
        // Small deterministic pseudo-random generator; keeps unit tests free of RNG plumbing.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    fn taylor_expm(a: &CMatrix) -> CMatrix {
        let mut term = CMatrix::identity(a.rows());
        let mut sum = term.clone();
        for k in 1..60 {
            term = (&term * a).scale_real(1.0 / k as f64);
            sum = &sum + &term;
        }
        sum
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        assert_eq!(tensor(&CMatrix::identity(2), &CMatrix::identity(3)), CMatrix::identity(6));
    }

    #[test]
    fn tensor_of_diagonals_expands_by_hand() {
        let t = tensor(&CMatrix::diag_real(&[1.0, 2.0]), &CMatrix::diag_real(&[1.0, 0.0]));
        assert_eq!(t, CMatrix::diag_real(&[1.0, 0.0, 2.0, 0.0]));
    }

    #[test]
    fn tensor_acts_factorwise_on_product_vectors() {
        let e0 = CMatrix::basis(2, 0);
        let out = &tensor(&pauli_x(), &pauli_x()) * &tensor(&e0, &e0);
        let e1 = CMatrix::basis(2, 1);
        assert_eq!(out, tensor(&e1, &e1));
    }

    #[test]
    fn partial_trace_satisfies_defining_identity() {
        let a = sample_matrix(2, 1);
        let b = sample_matrix(3, 2);
        let m = tensor(&a, &b);
        let pt = partial_trace_second(&m, 2, 3).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let t = CMatrix::unit(2, i, j);
                let lhs = (&t * &pt).trace();
                let rhs = (&tensor(&t, &CMatrix::identity(3)) * &m).trace();
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
        assert!(pt.max_abs_diff(&a.scale(b.trace())) < 1e-12);
    }

    #[test]
    fn partial_trace_of_identity_and_pure_state() {
        let pt = partial_trace_second(&CMatrix::identity(4), 2, 2).unwrap();
        assert_eq!(pt, CMatrix::identity(2).scale_real(2.0));
        let s = sample_matrix(2, 7);
        let eta = CMatrix::column(&[c(0.6, 0.0), c(0.0, 0.8)]);
        let proj = &eta * &eta.adjoint();
        let pt = partial_trace_second(&tensor(&s, &proj), 2, 2).unwrap();
        assert!(pt.max_abs_diff(&s) < 1e-15);
        assert!(partial_trace_second(&CMatrix::identity(5), 2, 2).is_err());
    }

    #[test]
    fn partial_trace_first_traces_slow_factor() {
        let a = sample_matrix(2, 3);
        let b = sample_matrix(3, 4);
        let pt = partial_trace_first(&tensor(&a, &b), 2, 3).unwrap();
        assert!(pt.max_abs_diff(&b.scale(a.trace())) < 1e-12);
    }

    #[test]
    fn expm_basic_cases() {
        assert_eq!(expm(&CMatrix::zeros(3, 3)).unwrap(), CMatrix::identity(3));
        let e = expm(&CMatrix::diag_real(&[0.5, -2.0])).unwrap();
        assert!(e.max_abs_diff(&CMatrix::diag_real(&[0.5f64.exp(), (-2.0f64).exp()])) < 1e-14);
        assert!(expm(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn expm_of_rotation_generator_matches_taylor() {
        let theta = 0.7;
        let a = pauli_y().scale(c(0.0, theta));
        let e = expm(&a).unwrap();
        let rot = CMatrix::from_real(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()]).unwrap();
        assert!(e.max_abs_diff(&rot) < 1e-12);
        assert!(e.max_abs_diff(&taylor_expm(&a)) < 1e-12);
    }

    #[test]
    fn expm_large_norm_matches_taylor_of_scaled_square() {
        let a = sample_matrix(4, 11).scale_real(12.0);
        let half = taylor_expm(&a.scale_real(1.0 / 64.0));
        let mut oracle = half;
        for _ in 0..6 {
            oracle = &oracle * &oracle;
        }
        let e = expm(&a).unwrap();
        assert!(e.max_abs_diff(&oracle) < 1e-9 * spectral_norm(&oracle).max(1.0));
    }

    #[test]
    fn exp_derivative_zero_direction() {
        let x = sample_matrix(3, 5);
        let d = exp_derivative(&x, &CMatrix::zeros(3, 3), 0.3).unwrap();
        assert!(spectral_norm(&d) < 1e-15);
    }

    #[test]
    fn exp_derivative_commuting_case() {
        let x = CMatrix::diag(&[c(0.2, 1.0), c(-0.5, 0.0), c(0.1, -0.3)]);
        let y = CMatrix::diag(&[c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.5)]);
        let t = 0.4;
        let d = exp_derivative(&x, &y, t).unwrap();
        let closed = &y * &expm(&(&x + &y.scale_real(t))).unwrap();
        assert!(d.max_abs_diff(&closed) < 1e-12);
    }

    #[test]
    fn exp_derivative_matches_central_difference() {
        let x = sample_matrix(3, 21);
        let y = sample_matrix(3, 22);
        let h = 1e-5;
        let fd = (&expm(&(&x + &y.scale_real(h))).unwrap() - &expm(&(&x - &y.scale_real(h))).unwrap())
            .scale_real(0.5 / h);
        let d = exp_derivative(&x, &y, 0.0).unwrap();
        assert!(spectral_norm(&(&d - &fd)) < 1e-6);
    }

    #[test]
    fn norms_on_simple_matrices() {
        assert!((spectral_norm(&CMatrix::identity(4)) - 1.0).abs() < 1e-14);
        assert!((trace_norm(&CMatrix::diag_real(&[1.0, -2.0])) - 3.0).abs() < 1e-14);
        let theta = 0.3f64;
        let u = CMatrix::from_real(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]).unwrap();
        assert!((spectral_norm(&u.scale_real(2.0)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn commutator_and_friends() {
        let lhs = commutator(&pauli_x(), &pauli_z()).unwrap();
        assert!(lhs.max_abs_diff(&pauli_y().scale(c(0.0, -2.0))) < 1e-15);
        let a = sample_matrix(3, 8);
        assert!(anticommutator(&a, &a).unwrap().max_abs_diff(&(&a * &a).scale_real(2.0)) < 1e-15);
        assert_eq!(adjoint_action(&CMatrix::identity(3), &a).unwrap(), a);
        assert!(commutator(&a, &CMatrix::identity(2)).is_err());
    }

    #[test]
    fn dissipativity_tests() {
        let h = sample_matrix(3, 9).hermitian_part();
        assert!(is_dissipative_hilbert(&h.scale(c(0.0, 1.0)), 1e-12));
        assert!(!is_dissipative_hilbert(&CMatrix::identity(2), 1e-10));
        let a = &(-&CMatrix::identity(2)) + &pauli_y().scale(c(0.0, 1.0));
        assert!(is_dissipative_hilbert(&a, 1e-10));
    }

    #[test]
    fn psd_tests() {
        assert!(is_psd(&CMatrix::identity(3), 1e-12));
        assert!(!is_psd(&(-&CMatrix::identity(3)), 1e-12));
        let b = sample_matrix(4, 10);
        assert!(is_psd(&(&b.adjoint() * &b), 1e-12));
    }

    #[test]
    fn vec_round_trip_is_column_stacking() {
        let x = CMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = x.vec();
        assert_eq!(v.to_row_major(), vec![c(1.0, 0.0), c(3.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert_eq!(v.unvec(2, 2).unwrap(), x);
    }

    #[test]
    fn superop_sandwich_matches_direct_product() {
        let a = sample_matrix(3, 12);
        let b = sample_matrix(3, 13);
        let x = sample_matrix(3, 14);
        let direct = &(&a * &x) * &b;
        assert!(SuperOp::sandwich(&a, &b).apply(&x).unwrap().max_abs_diff(&direct) < 1e-14);
        let tab = SuperOp::from_fn(3, |m| &(&a * m) * &b);
        assert!(tab.matrix().max_abs_diff(SuperOp::sandwich(&a, &b).matrix()) < 1e-14);
    }

    #[test]
    fn choi_round_trip() {
        let k = sample_matrix(2, 15);
        let phi = SuperOp::from_kraus(&[k.clone()]);
        let back = SuperOp::from_choi(2, &phi.choi()).unwrap();
        assert!(back.matrix().max_abs_diff(phi.matrix()) < 1e-15);
        let x = sample_matrix(2, 16);
        let direct = &(&k * &x) * &k.adjoint();
        assert!(phi.apply(&x).unwrap().max_abs_diff(&direct) < 1e-14);
        let dual = SuperOp::from_kraus_dual(&[k.clone()]).apply(&x).unwrap();
        assert!(dual.max_abs_diff(&(&(&k.adjoint() * &x) * &k)) < 1e-14);
    }

    #[test]
    fn literal_round_trip_and_rejections() {
        let m = sample_matrix(2, 17);
        let json = serde_json::to_string(&m).unwrap();
        let back: CMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let real: CMatrix = serde_json::from_str("[[1, 0], [0, [0, 1]]]").unwrap();
        assert_eq!(real.get(1, 1), c(0.0, 1.0));
        assert!(serde_json::from_str::<CMatrix>("[[1, 0], [0]]").is_err());
        assert!(CMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
    }
}
