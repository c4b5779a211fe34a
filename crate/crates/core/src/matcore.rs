//! Dense complex matrices and the hermitian spectral machinery every other
//! module is built on: eigendecomposition, functional calculus, square roots,
//! polar decomposition and support projections.
//!
//! Eigendecompositions and SVDs are delegated to `nalgebra`; the contract of
//! this module is the reconstruction residual, not the algorithm.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances shared by the spectral routines. All are overridable
/// per call by passing a modified copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute deviation from hermiticity, scaled by `max(1, max|A_ij|)`.
    pub hermitian: f64,
    pub projection: f64,
    /// Relative reconstruction residual for eigen/polar factorizations.
    pub reconstruction: f64,
    /// Negative eigenvalues above `-psd * max(1, ||A||)` count as zero.
    pub psd: f64,
    /// Eigenvalues within `eig_cluster * ||A||` form one cluster.
    pub eig_cluster: f64,
    /// Smallest eigenvalue admitted by complex powers and logarithms.
    pub power_floor: f64,
    /// Singular values below `rank * s_max` are treated as zero.
    pub rank: f64,
    pub commutator: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-9,
            projection: 1e-9,
            reconstruction: 1e-10,
            psd: 1e-10,
            eig_cluster: 1e-9,
            power_floor: 1e-14,
            rank: 1e-11,
            commutator: 1e-10,
        }
    }
}

/// A dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<C64>);

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}{:?}", self.rows(), self.cols(), self.0.as_slice())
    }
}

impl Matrix {
    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        Matrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Matrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Matrix::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(LabError::Shape("matrix must have at least one entry".into()));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(LabError::Shape("ragged rows".into()));
        }
        Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        Matrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { ZERO })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Matrix::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    /// Matrix unit `E_{ij}` of size `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        m.0[(i, j)] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.0[(i, j)] = v;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, c: C64) -> Matrix {
        Matrix(&self.0 * c)
    }

    pub fn scale_real(&self, c: f64) -> Matrix {
        self.scale(C64::new(c, 0.0))
    }

    pub fn fro_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol * self.max_abs().max(1.0)
    }

    /// `(A + A*) / 2`.
    pub fn hermitian_part(&self) -> Matrix {
        Matrix((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn commutator(&self, other: &Matrix) -> Matrix {
        &(self * other) - &(other * self)
    }

    /// Real part of the trace of `A* B` (Hilbert-Schmidt pairing, unweighted).
    pub fn hs_inner(&self, other: &Matrix) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn map_entries(&self, f: impl FnMut(C64) -> C64) -> Matrix {
        Matrix(self.0.map(f))
    }

    /// Column `j` as a vector of entries.
    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    /// Apply to a column vector.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.0 * v).iter().copied().collect()
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 + &rhs.0)
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 - &rhs.0)
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        Matrix(-&self.0)
    }
}

// Row-major nested arrays of [re, im] pairs.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .to_rows()
            .into_iter()
            .map(|row| row.into_iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(deserializer)?;
        let rows = rows
            .into_iter()
            .map(|row| row.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        Matrix::from_rows(rows).map_err(de::Error::custom)
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `k` belongs to `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(λ)) V*` for a complex-valued `f`.
    pub fn map_complex(&self, f: impl Fn(f64) -> C64) -> Result<Matrix> {
        let mut values = Vec::with_capacity(self.dim());
        for &lambda in &self.eigenvalues {
            let v = f(lambda);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(LabError::Domain { eigenvalue: lambda });
            }
            values.push(v);
        }
        Ok(self.synthesize(&values))
    }

    /// `V diag(f(λ)) V*`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        self.map_complex(|x| C64::new(f(x), 0.0))
    }

    /// `V diag(values) V*`.
    pub fn synthesize(&self, values: &[C64]) -> Matrix {
        let v = &self.eigenvectors.0;
        let n = self.dim();
        let scaled = DMatrix::from_fn(n, n, |i, j| v[(i, j)] * values[j]);
        Matrix(scaled * v.adjoint())
    }

    pub fn reconstruct(&self) -> Matrix {
        let values: Vec<C64> = self.eigenvalues.iter().map(|&l| C64::new(l, 0.0)).collect();
        self.synthesize(&values)
    }

    /// `A^w = exp(w log A)` for a positive matrix; eigenvalues at or below
    /// `floor` are rejected.
    pub fn power(&self, w: C64, floor: f64) -> Result<Matrix> {
        if let Some(&min) = self.eigenvalues.first() {
            if min <= floor {
                return Err(LabError::NotFaithful { min_eigenvalue: min, floor });
            }
        }
        self.map_complex(|l| (w * l.ln()).exp())
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }
}

pub fn hermitian_eig(a: &Matrix) -> Result<EigenSystem> {
    hermitian_eig_with(a, &Tolerances::default())
}

pub fn hermitian_eig_with(a: &Matrix, tol: &Tolerances) -> Result<EigenSystem> {
    if !a.is_square() {
        return Err(LabError::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let deviation = a.hermitian_deviation();
    let allowed = tol.hermitian * a.max_abs().max(1.0);
    if deviation > allowed {
        return Err(LabError::NotHermitian { deviation, tol: allowed });
    }
    let n = a.rows();
    let sym = a.hermitian_part();
    let eig = nalgebra::SymmetricEigen::try_new(sym.0, f64::EPSILON, 0).ok_or(LabError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenSystem { eigenvalues, eigenvectors: Matrix(eigenvectors) })
}

/// Continuous functional calculus `f(A) = V diag(f(λ)) V*`.
pub fn matrix_function(a: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    hermitian_eig(a)?.map(f)
}

/// Functional calculus with a complex-valued function.
pub fn matrix_function_complex(a: &Matrix, f: impl Fn(f64) -> C64) -> Result<Matrix> {
    hermitian_eig(a)?.map_complex(f)
}

/// Exponential of an arbitrary square matrix (scaling and squaring with Padé
/// approximants).
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LabError::Shape(format!("exponential of a {}x{} matrix", a.rows(), a.cols())));
    }
    let e = a.0.clone().exp();
    if e.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::Invalid("matrix exponential overflowed".into()));
    }
    Ok(Matrix(e))
}

/// Unique positive square root.
pub fn sqrt_psd(a: &Matrix) -> Result<Matrix> {
    sqrt_psd_with(a, &Tolerances::default())
}

pub fn sqrt_psd_with(a: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    let eig = hermitian_eig_with(a, tol)?;
    check_psd(&eig, tol)?;
    eig.map(|l| l.max(0.0).sqrt())
}

/// Fails when the smallest eigenvalue is below `-psd * max(1, ||A||)`.
pub fn check_psd(eig: &EigenSystem, tol: &Tolerances) -> Result<()> {
    let allowed = tol.psd * eig.spectral_norm().max(1.0);
    match eig.eigenvalues.first() {
        Some(&min) if min < -allowed => Err(LabError::NotPositive { min_eigenvalue: min, tol: allowed }),
        _ => Ok(()),
    }
}

/// `A = U P` with `U` a partial isometry whose initial space is `ker(A)^⊥`
/// and `P = |A|`.
#[derive(Debug, Clone)]
pub struct Polar {
    pub isometry: Matrix,
    pub modulus: Matrix,
    pub rank: usize,
}

pub fn polar(a: &Matrix) -> Result<Polar> {
    polar_with(a, &Tolerances::default())
}

pub fn polar_with(a: &Matrix, tol: &Tolerances) -> Result<Polar> {
    if !a.is_square() {
        return Err(LabError::Shape(format!("polar decomposition needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    let svd = svd(a)?;
    let s_max = svd.singular_values.first().copied().unwrap_or(0.0);
    let cut = tol.rank * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cut && s > 0.0).count();
    let ones: Vec<f64> = svd.singular_values.iter().map(|&s| if s > cut && s > 0.0 { 1.0 } else { 0.0 }).collect();
    Ok(Polar {
        isometry: svd.left_right(&ones),
        modulus: svd.right_right(&svd.singular_values).hermitian_part(),
        rank,
    })
}

/// `A = U diag(s) V*` with descending singular values.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    /// `U diag(f) V*`.
    pub fn left_right(&self, f: &[f64]) -> Matrix {
        weighted_outer(&self.u, f, &self.v)
    }

    /// `V diag(f) U*`.
    pub fn right_left(&self, f: &[f64]) -> Matrix {
        weighted_outer(&self.v, f, &self.u)
    }

    /// `V diag(f) V*`, a function of `|A|`.
    pub fn right_right(&self, f: &[f64]) -> Matrix {
        weighted_outer(&self.v, f, &self.v)
    }
}

fn weighted_outer(x: &Matrix, f: &[f64], y: &Matrix) -> Matrix {
    let scaled = DMatrix::from_fn(x.rows(), f.len(), |i, j| x.0[(i, j)] * f[j]);
    Matrix(scaled * y.0.columns(0, f.len()).adjoint())
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    let dec = a.0.clone().svd(true, true);
    let u = dec.u.ok_or(LabError::EigenFailure)?;
    let v_t = dec.v_t.ok_or(LabError::EigenFailure)?;
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let singular_values = order.iter().map(|&k| dec.singular_values[k]).collect();
    let u = Matrix(DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]));
    let v = Matrix(DMatrix::from_fn(v_t.ncols(), order.len(), |i, j| v_t[(order[j], i)].conj()));
    Ok(Svd { u, singular_values, v })
}

/// Half-open interval `(lo, hi]`; `None` stands for an infinite endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Interval {
    pub fn new(lo: Option<f64>, hi: Option<f64>) -> Self {
        Interval { lo, hi }
    }

    /// `(lo, +∞)`.
    pub fn above(lo: f64) -> Self {
        Interval { lo: Some(lo), hi: None }
    }

    pub fn everything() -> Self {
        Interval { lo: None, hi: None }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x > lo) && self.hi.is_none_or(|hi| x <= hi)
    }
}

/// Spectral projection `E^A(interval)`. Endpoints may not fall inside an
/// eigenvalue cluster.
pub fn spectral_projection(a: &Matrix, interval: Interval) -> Result<Matrix> {
    spectral_projection_with(a, interval, &Tolerances::default())
}

pub fn spectral_projection_with(a: &Matrix, interval: Interval, tol: &Tolerances) -> Result<Matrix> {
    let eig = hermitian_eig_with(a, tol)?;
    spectral_projection_of(&eig, interval, tol)
}

pub fn spectral_projection_of(eig: &EigenSystem, interval: Interval, tol: &Tolerances) -> Result<Matrix> {
    let cluster = tol.eig_cluster * eig.spectral_norm();
    for endpoint in [interval.lo, interval.hi].into_iter().flatten() {
        if let Some(&lambda) = eig.eigenvalues.iter().find(|&&l| (l - endpoint).abs() <= cluster) {
            return Err(LabError::ClusterSplit { endpoint, eigenvalue: lambda, tol: cluster });
        }
    }
    let values: Vec<C64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if interval.contains(l) { ONE } else { ZERO })
        .collect();
    Ok(eig.synthesize(&values))
}

/// Left support `s_L(A) = U U*`.
pub fn support_left(a: &Matrix) -> Result<Matrix> {
    let p = polar(a)?;
    Ok(&p.isometry * &p.isometry.adjoint())
}

/// Right support `s_R(A) = U* U`.
pub fn support_right(a: &Matrix) -> Result<Matrix> {
    let p = polar(a)?;
    Ok(&p.isometry.adjoint() * &p.isometry)
}

/// Numerical rank from singular values.
pub fn rank(a: &Matrix, tol: &Tolerances) -> usize {
    let s = a.singular_values();
    let s_max = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > tol.rank * s_max && x > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{random_hermitian, random_matrix, seeded};

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        let r = (a - b).fro_norm();
        assert!(r <= tol, "residual {r:e} > {tol:e}");
    }

    #[test]
    fn expm_matches_hermitian_route_and_commuting_sum() {
        let mut rng = seeded(41);
        let h = random_hermitian(&mut rng, 4);
        let direct = expm(&h.scale(C64::new(0.0, 0.7))).unwrap();
        let spectral = matrix_function_complex(&h, |x| C64::new(0.0, 0.7 * x).exp()).unwrap();
        assert!((&direct - &spectral).fro_norm() < 1e-12);
        let a = random_matrix(&mut rng, 3, 3);
        let ea = expm(&a).unwrap();
        let twice = expm(&a.scale_real(2.0)).unwrap();
        assert!((&(&ea * &ea) - &twice).fro_norm() < 1e-10 * twice.fro_norm());
        assert!(expm(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn diagonal_eigensystem() {
        let a = Matrix::from_real_diag(&[3.0, 1.0]);
        let eig = hermitian_eig(&a).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 3.0]);
        let v = &eig.eigenvectors;
        assert!((v.get(1, 0).norm() - 1.0).abs() < 1e-15);
        assert!((v.get(0, 1).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pauli_x_eigenvalues() {
        let a = Matrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let eig = hermitian_eig(&a).unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction_and_unitarity() {
        let mut rng = seeded(7);
        let a = random_hermitian(&mut rng, 8);
        let eig = hermitian_eig(&a).unwrap();
        assert_close(&eig.reconstruct(), &a, 1e-10 * a.fro_norm().max(1.0));
        let v = &eig.eigenvectors;
        assert_close(&(&v.adjoint() * v), &Matrix::identity(8), 1e-12);
        assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(hermitian_eig(&rect), Err(LabError::Shape(_))));
        let skew = Matrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(hermitian_eig(&skew), Err(LabError::NotHermitian { .. })));
    }

    #[test]
    fn functional_calculus() {
        let a = Matrix::from_real_diag(&[4.0, 9.0]);
        assert_close(&matrix_function(&a, f64::sqrt).unwrap(), &Matrix::from_real_diag(&[2.0, 3.0]), 1e-14);
        let mut rng = seeded(11);
        let h = random_hermitian(&mut rng, 5);
        assert_close(&matrix_function(&h, |x| x).unwrap(), &h, 1e-12);
        let f = matrix_function(&h, |x| x.sin()).unwrap();
        assert!(f.commutator(&h).fro_norm() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = seeded(3);
        let c = random_matrix(&mut rng, 5, 5);
        let a = &(&c.adjoint() * &c) + &Matrix::identity(5).scale_real(0.1);
        let e = matrix_function(&a, f64::exp).unwrap();
        let back = matrix_function(&e, f64::ln).unwrap();
        assert_close(&back, &a, 1e-9);
    }

    #[test]
    fn log_at_zero_is_a_domain_error() {
        let a = Matrix::from_real_diag(&[0.0, 1.0]);
        match matrix_function(&a, f64::ln) {
            Err(LabError::Domain { eigenvalue }) => assert_eq!(eigenvalue, 0.0),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn square_roots() {
        assert_close(&sqrt_psd(&Matrix::identity(3)).unwrap(), &Matrix::identity(3), 1e-15);
        assert_close(
            &sqrt_psd(&Matrix::from_real_diag(&[4.0, 0.0])).unwrap(),
            &Matrix::from_real_diag(&[2.0, 0.0]),
            1e-15,
        );
        let mut rng = seeded(5);
        let c = random_matrix(&mut rng, 6, 6);
        let a = &c.adjoint() * &c;
        let b = sqrt_psd(&a).unwrap();
        assert_close(&(&b * &b), &a, 1e-10 * a.fro_norm());
        assert!(hermitian_eig(&b).unwrap().eigenvalues[0] > -1e-12);
        // B lies in the algebra generated by A: it commutes with anything
        // commuting with A, e.g. with polynomials in A.
        let poly = &(&a * &a) + &a.scale_real(3.0);
        assert!(b.commutator(&poly).fro_norm() < 1e-9 * poly.fro_norm());
        assert!(matches!(
            sqrt_psd(&Matrix::from_real_diag(&[1.0, -0.5])),
            Err(LabError::NotPositive { .. })
        ));
    }

    #[test]
    fn polar_of_unitary_and_diagonal() {
        let u = Matrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let p = polar(&u).unwrap();
        assert_close(&p.isometry, &u, 1e-14);
        assert_close(&p.modulus, &Matrix::identity(2), 1e-14);

        let a = Matrix::from_real_diag(&[-2.0, 3.0]);
        let p = polar(&a).unwrap();
        assert_close(&p.isometry, &Matrix::from_real_diag(&[-1.0, 1.0]), 1e-14);
        assert_close(&p.modulus, &Matrix::from_real_diag(&[2.0, 3.0]), 1e-14);
    }

    #[test]
    fn polar_of_singular_matrix() {
        let mut rng = seeded(19);
        let b = random_matrix(&mut rng, 5, 3);
        let c = random_matrix(&mut rng, 3, 5);
        let a = &b * &c; // rank 3
        let p = polar(&a).unwrap();
        assert_eq!(p.rank, 3);
        assert_close(&(&p.isometry * &p.modulus), &a, 1e-10 * a.fro_norm());
        // sqrt of A*A sees its zero eigenvalues as O(eps ||A||²) noise, so
        // agreement is only to O(sqrt(eps) ||A||).
        assert_close(&p.modulus, &sqrt_psd(&(&a.adjoint() * &a)).unwrap(), 1e-6 * a.fro_norm());
        // Null vectors of A, taken from the eigenvectors of A*A with zero
        // eigenvalue, are annihilated by U.
        let eig = hermitian_eig(&(&a.adjoint() * &a)).unwrap();
        for k in 0..2 {
            let null = eig.eigenvectors.column(k);
            let image = p.isometry.apply(&null);
            let n: f64 = image.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(n < 1e-9, "U does not annihilate ker A: {n:e}");
        }
        // U*U projects onto ker(A)^⊥.
        let q = &p.isometry.adjoint() * &p.isometry;
        assert_close(&(&a * &q), &a, 1e-10 * a.fro_norm());
        assert_close(&(&q * &q), &q, 1e-10);
    }

    #[test]
    fn spectral_projections() {
        let a = Matrix::from_real_diag(&[1.0, 2.0, 3.0]);
        assert_close(
            &spectral_projection(&a, Interval::above(1.5)).unwrap(),
            &Matrix::from_real_diag(&[0.0, 1.0, 1.0]),
            1e-15,
        );
        assert_close(&spectral_projection(&a, Interval::everything()).unwrap(), &Matrix::identity(3), 1e-15);
        assert!(matches!(
            spectral_projection(&a, Interval::above(2.0)),
            Err(LabError::ClusterSplit { .. })
        ));

        let mut rng = seeded(23);
        let h = random_hermitian(&mut rng, 6);
        let eig = hermitian_eig(&h).unwrap();
        let cut = 0.5 * (eig.eigenvalues[2] + eig.eigenvalues[3]);
        let low = spectral_projection(&h, Interval::new(None, Some(cut))).unwrap();
        let high = spectral_projection(&h, Interval::above(cut)).unwrap();
        assert_close(&(&low + &high), &Matrix::identity(6), 1e-12);
        assert_close(&(&high * &high), &high, 1e-12);
        assert!(high.commutator(&h).fro_norm() < 1e-10);
        assert!((high.trace().re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn supports() {
        let mut rng = seeded(2);
        let inv = random_matrix(&mut rng, 4, 4);
        assert_close(&support_left(&inv).unwrap(), &Matrix::identity(4), 1e-10);
        assert_close(&support_right(&inv).unwrap(), &Matrix::identity(4), 1e-10);

        let e12 = Matrix::unit(2, 0, 1);
        assert_close(&support_left(&e12).unwrap(), &Matrix::unit(2, 0, 0), 1e-15);
        assert_close(&support_right(&e12).unwrap(), &Matrix::unit(2, 1, 1), 1e-15);

        let a = &random_matrix(&mut rng, 6, 2) * &random_matrix(&mut rng, 2, 6);
        let sl = support_left(&a).unwrap();
        let sr = support_right(&a).unwrap();
        assert_close(&(&sl * &a), &a, 1e-10 * a.fro_norm());
        assert_close(&(&a * &sr), &a, 1e-10 * a.fro_norm());
        let gram = hermitian_eig(&(&a.adjoint() * &a)).unwrap();
        let expected = gram.eigenvalues.iter().filter(|&&l| l > 1e-10 * gram.spectral_norm()).count();
        assert_eq!(expected, 2);
        assert!((sl.trace().re - expected as f64).abs() < 1e-9);
        assert!((sr.trace().re - expected as f64).abs() < 1e-9);
    }

    #[test]
    fn json_layout_is_row_major_pairs() {
        let m = Matrix::from_rows(vec![vec![C64::new(1.0, 2.0), ZERO], vec![ONE, C64::new(0.0, -1.0)]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[[1.0,2.0],[0.0,0.0]],[[1.0,0.0],[0.0,-1.0]]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix>("[[[1.0,0.0]],[]]").is_err());
    }
}
