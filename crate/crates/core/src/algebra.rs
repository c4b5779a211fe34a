//! Finite von Neumann algebras `⊕_k M_{d_k}` carrying the weighted trace
//! `τ(A) = Σ_k w_k tr(A_k)`, their elements, normal states given by
//! densities, and the `D(ε, δ)` measurability sets.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::matcore::{
    hermitian_eig_with, polar_with, spectral_projection_of, EigenSystem, Interval, Matrix, Tolerances, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub dim: usize,
    pub weight: f64,
}

/// `⊕_k M_{d_k}` with trace weights `w_k > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAlgebra", into = "RawAlgebra")]
pub struct BlockAlgebra {
    blocks: Vec<Block>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgebra {
    blocks: Vec<Block>,
}

impl TryFrom<RawAlgebra> for BlockAlgebra {
    type Error = LabError;
    fn try_from(raw: RawAlgebra) -> Result<Self> {
        BlockAlgebra::new(raw.blocks)
    }
}

impl From<BlockAlgebra> for RawAlgebra {
    fn from(alg: BlockAlgebra) -> Self {
        RawAlgebra { blocks: alg.blocks }
    }
}

impl BlockAlgebra {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(LabError::Invalid("a block algebra needs at least one block".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(LabError::Invalid(format!("block {k} has dimension 0")));
            }
            if !(b.weight > 0.0 && b.weight.is_finite()) {
                return Err(LabError::Invalid(format!("block {k} has non-positive weight {}", b.weight)));
            }
        }
        Ok(BlockAlgebra { blocks })
    }

    /// `M_n` with the plain trace.
    pub fn full(n: usize) -> Self {
        BlockAlgebra::new(vec![Block { dim: n, weight: 1.0 }]).expect("n > 0")
    }

    /// `ℓ^∞` on `weights.len()` points: the commutative (diagonal) case.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        BlockAlgebra::new(weights.iter().map(|&weight| Block { dim: 1, weight }).collect())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// `τ(1) = Σ w_k d_k`.
    pub fn trace_of_identity(&self) -> f64 {
        self.blocks.iter().map(|b| b.weight * b.dim as f64).sum()
    }

    /// Dimension of the trace-weighted Hilbert-Schmidt space `Σ d_k²`.
    pub fn hs_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim * b.dim).sum()
    }

    pub fn check(&self, a: &Operator) -> Result<()> {
        if a.blocks.len() != self.blocks.len() {
            return Err(LabError::Shape(format!(
                "operator has {} blocks, algebra has {}",
                a.blocks.len(),
                self.blocks.len()
            )));
        }
        for (k, (m, b)) in a.blocks.iter().zip(&self.blocks).enumerate() {
            if m.rows() != b.dim || m.cols() != b.dim {
                return Err(LabError::Shape(format!(
                    "block {k} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    b.dim,
                    b.dim
                )));
            }
        }
        Ok(())
    }

    /// `M_2(M)`: every block doubled, same weights.
    pub fn doubled(&self) -> BlockAlgebra {
        BlockAlgebra {
            blocks: self.blocks.iter().map(|b| Block { dim: 2 * b.dim, weight: b.weight }).collect(),
        }
    }

    /// Matrix units scaled by `w_k^{-1/2}`: an orthonormal basis for `τ(X* Y)`.
    pub fn orthonormal_basis(&self) -> Vec<Operator> {
        let mut out = self.matrix_units();
        let mut idx = 0;
        for b in &self.blocks {
            for _ in 0..b.dim * b.dim {
                out[idx] = out[idx].scale_real(1.0 / b.weight.sqrt());
                idx += 1;
            }
        }
        out
    }

    /// Coefficients of `X` in [`BlockAlgebra::orthonormal_basis`].
    pub fn coordinates(&self, x: &Operator) -> Vec<C64> {
        x.blocks
            .iter()
            .zip(&self.blocks)
            .flat_map(|(m, b)| {
                let s = b.weight.sqrt();
                m.to_rows().into_iter().flatten().map(move |z| z * s)
            })
            .collect()
    }

    /// Matrix of a linear superoperator in the orthonormal basis.
    pub fn superoperator_matrix(&self, map: impl Fn(&Operator) -> Operator) -> Matrix {
        let basis = self.orthonormal_basis();
        let n = basis.len();
        let mut out = Matrix::zeros(n, n);
        for (col, e) in basis.iter().enumerate() {
            for (row, c) in self.coordinates(&map(e)).into_iter().enumerate() {
                out.set(row, col, c);
            }
        }
        out
    }

    /// Matrix units `E_{ij}` of every block, as operators.
    pub fn matrix_units(&self) -> Vec<Operator> {
        let mut out = Vec::with_capacity(self.hs_dim());
        for (k, b) in self.blocks.iter().enumerate() {
            for i in 0..b.dim {
                for j in 0..b.dim {
                    let mut op = Operator::zeros(self);
                    op.blocks[k] = Matrix::unit(b.dim, i, j);
                    out.push(op);
                }
            }
        }
        out
    }
}

/// A block-diagonal element of a [`BlockAlgebra`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Operator {
    pub blocks: Vec<Matrix>,
}

impl Operator {
    pub fn new(blocks: Vec<Matrix>) -> Self {
        Operator { blocks }
    }

    pub fn zeros(alg: &BlockAlgebra) -> Self {
        Operator::new(alg.blocks.iter().map(|b| Matrix::zeros(b.dim, b.dim)).collect())
    }

    pub fn identity(alg: &BlockAlgebra) -> Self {
        Operator::new(alg.blocks.iter().map(|b| Matrix::identity(b.dim)).collect())
    }

    /// Diagonal operator from the concatenated diagonal.
    pub fn from_diagonal(alg: &BlockAlgebra, diag: &[f64]) -> Result<Self> {
        if diag.len() != alg.total_dim() {
            return Err(LabError::Shape(format!("diagonal has {} entries, algebra has dimension {}", diag.len(), alg.total_dim())));
        }
        let mut offset = 0;
        let blocks = alg
            .blocks
            .iter()
            .map(|b| {
                let m = Matrix::from_real_diag(&diag[offset..offset + b.dim]);
                offset += b.dim;
                m
            })
            .collect();
        Ok(Operator::new(blocks))
    }

    pub fn adjoint(&self) -> Operator {
        self.map(Matrix::adjoint)
    }

    pub fn map(&self, f: impl Fn(&Matrix) -> Matrix) -> Operator {
        Operator::new(self.blocks.iter().map(f).collect())
    }

    pub fn try_map(&self, f: impl Fn(&Matrix) -> Result<Matrix>) -> Result<Operator> {
        Ok(Operator::new(self.blocks.iter().map(f).collect::<Result<_>>()?))
    }

    pub fn scale(&self, c: C64) -> Operator {
        self.map(|m| m.scale(c))
    }

    pub fn scale_real(&self, c: f64) -> Operator {
        self.map(|m| m.scale_real(c))
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Unweighted Frobenius norm over all blocks, used for residuals.
    pub fn fro_norm(&self) -> f64 {
        self.blocks.iter().map(|m| m.fro_norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Operator norm `max_k ||A_k||`.
    pub fn op_norm(&self) -> f64 {
        self.blocks.iter().map(Matrix::op_norm).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.blocks.iter().all(|m| m.is_hermitian(tol))
    }

    pub fn hermitian_part(&self) -> Operator {
        self.map(Matrix::hermitian_part)
    }

    /// Blockwise hermitian eigensystems.
    pub fn eig(&self, tol: &Tolerances) -> Result<Vec<EigenSystem>> {
        self.blocks.iter().map(|m| hermitian_eig_with(m, tol)).collect()
    }

    /// Functional calculus applied blockwise.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Result<Operator> {
        let tol = Tolerances::default();
        self.try_map(|m| hermitian_eig_with(m, &tol)?.map(&f))
    }

    /// `|A| = (A*A)^{1/2}`.
    pub fn modulus(&self) -> Result<Operator> {
        let tol = Tolerances::default();
        self.try_map(|m| Ok(polar_with(m, &tol)?.modulus))
    }

    /// Singular values of every block, tagged with the block weight.
    pub fn weighted_singular_values(&self, alg: &BlockAlgebra) -> Vec<(f64, f64)> {
        self.blocks
            .iter()
            .zip(alg.blocks())
            .flat_map(|(m, b)| m.singular_values().into_iter().map(move |s| (s, b.weight)))
            .collect()
    }

    /// Concatenated row-major entries of all blocks.
    pub fn to_vec(&self) -> Vec<C64> {
        self.blocks.iter().flat_map(|m| m.to_rows().into_iter().flatten()).collect()
    }

    pub fn from_vec(alg: &BlockAlgebra, v: &[C64]) -> Result<Self> {
        if v.len() != alg.hs_dim() {
            return Err(LabError::Shape(format!("vector of length {} does not match {}", v.len(), alg.hs_dim())));
        }
        let mut offset = 0;
        let blocks = alg
            .blocks
            .iter()
            .map(|b| {
                let m = Matrix::from_fn(b.dim, b.dim, |i, j| v[offset + i * b.dim + j]);
                offset += b.dim * b.dim;
                m
            })
            .collect();
        Ok(Operator::new(blocks))
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::new(self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::new(self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a - b).collect())
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::new(self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a * b).collect())
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.map(|m| -m)
    }
}

/// `τ(A) = Σ_k w_k tr(A_k)`.
pub fn trace(alg: &BlockAlgebra, a: &Operator) -> Result<C64> {
    alg.check(a)?;
    Ok(trace_unchecked(alg, a))
}

pub(crate) fn trace_unchecked(alg: &BlockAlgebra, a: &Operator) -> C64 {
    a.blocks.iter().zip(&alg.blocks).map(|(m, b)| m.trace() * b.weight).sum()
}

/// `τ(A* B)`, the trace-weighted Hilbert-Schmidt inner product.
pub fn hs_inner(alg: &BlockAlgebra, a: &Operator, b: &Operator) -> C64 {
    a.blocks
        .iter()
        .zip(&b.blocks)
        .zip(&alg.blocks)
        .map(|((x, y), blk)| x.hs_inner(y) * blk.weight)
        .sum()
}

pub fn hs_norm(alg: &BlockAlgebra, a: &Operator) -> f64 {
    hs_inner(alg, a, a).re.max(0.0).sqrt()
}

/// A normal state `ω(A) = τ(ρ A)` given by its density with respect to `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityState {
    rho: Operator,
    min_eigenvalue: f64,
    faithful: bool,
}

impl DensityState {
    /// Validates positivity and `τ(ρ) = 1` (within 1e-12).
    pub fn new(alg: &BlockAlgebra, rho: Operator) -> Result<Self> {
        Self::with_tolerances(alg, rho, &Tolerances::default())
    }

    pub fn with_tolerances(alg: &BlockAlgebra, rho: Operator, tol: &Tolerances) -> Result<Self> {
        alg.check(&rho)?;
        let eigs = rho.eig(tol)?;
        let norm = eigs.iter().map(EigenSystem::spectral_norm).fold(0.0, f64::max);
        let min_eigenvalue = eigs
            .iter()
            .filter_map(|e| e.eigenvalues.first().copied())
            .fold(f64::INFINITY, f64::min);
        let allowed = tol.psd * norm.max(1.0);
        if min_eigenvalue < -allowed {
            return Err(LabError::NotPositive { min_eigenvalue, tol: allowed });
        }
        let tr = trace_unchecked(alg, &rho);
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(LabError::Normalization { trace: tr.re });
        }
        let rho = rho.hermitian_part();
        Ok(DensityState { rho, min_eigenvalue, faithful: min_eigenvalue > tol.power_floor })
    }

    /// `A / τ(A)` for a positive, non-zero `A`.
    pub fn normalized(alg: &BlockAlgebra, positive: &Operator) -> Result<Self> {
        alg.check(positive)?;
        let tr = trace_unchecked(alg, positive).re;
        if !(tr > 0.0) {
            return Err(LabError::Normalization { trace: tr });
        }
        Self::new(alg, positive.scale_real(1.0 / tr))
    }

    /// The tracial state `1 / τ(1)`.
    pub fn tracial(alg: &BlockAlgebra) -> Self {
        Self::normalized(alg, &Operator::identity(alg)).expect("identity is positive")
    }

    pub fn rho(&self) -> &Operator {
        &self.rho
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// `ω(A) = τ(ρ A)`.
    pub fn expectation(&self, alg: &BlockAlgebra, a: &Operator) -> C64 {
        trace_unchecked(alg, &(&self.rho * a))
    }
}

/// A positive normal functional `A ↦ τ(ρ A)`, not necessarily normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveFunctional {
    density: Operator,
    min_eigenvalue: f64,
    faithful: bool,
}

impl PositiveFunctional {
    pub fn new(alg: &BlockAlgebra, density: Operator) -> Result<Self> {
        let tol = Tolerances::default();
        alg.check(&density)?;
        let eigs = density.eig(&tol)?;
        let norm = eigs.iter().map(EigenSystem::spectral_norm).fold(0.0, f64::max);
        let min_eigenvalue = eigs
            .iter()
            .filter_map(|e| e.eigenvalues.first().copied())
            .fold(f64::INFINITY, f64::min);
        let allowed = tol.psd * norm.max(1.0);
        if min_eigenvalue < -allowed {
            return Err(LabError::NotPositive { min_eigenvalue, tol: allowed });
        }
        Ok(PositiveFunctional {
            density: density.hermitian_part(),
            min_eigenvalue,
            faithful: min_eigenvalue > tol.power_floor,
        })
    }

    pub fn density(&self) -> &Operator {
        &self.density
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn evaluate(&self, alg: &BlockAlgebra, a: &Operator) -> C64 {
        trace_unchecked(alg, &(&self.density * a))
    }
}

impl From<&DensityState> for PositiveFunctional {
    fn from(state: &DensityState) -> Self {
        PositiveFunctional {
            density: state.rho.clone(),
            min_eigenvalue: state.min_eigenvalue,
            faithful: state.faithful,
        }
    }
}

/// Outcome of a `D(ε, δ)` membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub contained: bool,
    /// `τ(E^{|A|}_{(ε, ∞)})`.
    pub witness: f64,
}

/// `A ∈ D(ε, δ)` iff `τ(E^{|A|}_{(ε,∞)}) ≤ δ`.
pub fn in_d(alg: &BlockAlgebra, a: &Operator, eps: f64, delta: f64) -> Result<Membership> {
    in_d_with(alg, a, eps, delta, &Tolerances::default())
}

pub fn in_d_with(alg: &BlockAlgebra, a: &Operator, eps: f64, delta: f64, tol: &Tolerances) -> Result<Membership> {
    if !(eps > 0.0 && delta > 0.0) {
        return Err(LabError::Invalid(format!("eps and delta must be positive, got {eps}, {delta}")));
    }
    let witness = tail_trace(alg, a, eps, tol)?;
    Ok(Membership { contained: witness <= delta, witness })
}

/// `τ(E^{|A|}_{(ε,∞)})`.
pub fn tail_trace(alg: &BlockAlgebra, a: &Operator, eps: f64, tol: &Tolerances) -> Result<f64> {
    alg.check(a)?;
    let modulus = a.modulus()?;
    let mut witness = 0.0;
    for (m, b) in modulus.blocks.iter().zip(alg.blocks()) {
        let eig = hermitian_eig_with(m, tol)?;
        let proj = spectral_projection_of(&eig, Interval::above(eps), tol)?;
        witness += b.weight * proj.trace().re;
    }
    // Projection traces are integer combinations of weights; drop synthesis noise.
    Ok(if witness.abs() < 1e-9 { 0.0 } else { witness })
}

/// Witnesses for the sum/product containments
/// `D(ε₁,δ₁) + D(ε₂,δ₂) ⊂ D(ε₁+ε₂, δ₁+δ₂)` and
/// `D(ε₁,δ₁) · D(ε₂,δ₂) ⊂ D(ε₁ε₂, δ₁+δ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DArithmeticReport {
    pub witness_1: f64,
    pub witness_2: f64,
    pub sum_witness: f64,
    pub product_witness: f64,
    pub precondition_holds: bool,
    pub sum_contained: bool,
    pub product_contained: bool,
}

impl DArithmeticReport {
    pub fn passed(&self) -> bool {
        !self.precondition_holds || (self.sum_contained && self.product_contained)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn d_arithmetic_check(
    alg: &BlockAlgebra,
    a1: &Operator,
    a2: &Operator,
    eps1: f64,
    eps2: f64,
    delta1: f64,
    delta2: f64,
) -> Result<DArithmeticReport> {
    let m1 = in_d(alg, a1, eps1, delta1)?;
    let m2 = in_d(alg, a2, eps2, delta2)?;
    let sum = in_d(alg, &(a1 + a2), eps1 + eps2, delta1 + delta2)?;
    let product = in_d(alg, &(a1 * a2), eps1 * eps2, delta1 + delta2)?;
    Ok(DArithmeticReport {
        witness_1: m1.witness,
        witness_2: m2.witness,
        sum_witness: sum.witness,
        product_witness: product.witness,
        precondition_holds: m1.contained && m2.contained,
        sum_contained: sum.contained,
        product_contained: product.contained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{random_operator, random_unitary_operator, seeded};

    fn two_blocks() -> BlockAlgebra {
        BlockAlgebra::new(vec![Block { dim: 2, weight: 1.0 }, Block { dim: 3, weight: 0.5 }]).unwrap()
    }

    #[test]
    fn weighted_trace_of_identity() {
        let alg = two_blocks();
        let tr = trace(&alg, &Operator::identity(&alg)).unwrap();
        assert!((tr.re - 3.5).abs() < 1e-15 && tr.im == 0.0);
        assert_eq!(alg.trace_of_identity(), 3.5);
    }

    #[test]
    fn rank_one_projection_has_trace_weight() {
        let alg = two_blocks();
        let mut p = Operator::zeros(&alg);
        p.blocks[1] = Matrix::unit(3, 2, 2);
        assert!((trace(&alg, &p).unwrap().re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unitary_invariance_of_trace() {
        let alg = two_blocks();
        let mut rng = seeded(1);
        let a = random_operator(&mut rng, &alg);
        let u = random_unitary_operator(&mut rng, &alg);
        let conj = &(&u * &a) * &u.adjoint();
        let diff = trace(&alg, &conj).unwrap() - trace(&alg, &a).unwrap();
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let alg = two_blocks();
        let bad = Operator::new(vec![Matrix::identity(2)]);
        assert!(matches!(trace(&alg, &bad), Err(LabError::Shape(_))));
        let bad = Operator::new(vec![Matrix::identity(2), Matrix::identity(2)]);
        assert!(matches!(trace(&alg, &bad), Err(LabError::Shape(_))));
        assert!(BlockAlgebra::new(vec![]).is_err());
        assert!(BlockAlgebra::new(vec![Block { dim: 2, weight: 0.0 }]).is_err());
    }

    #[test]
    fn algebra_json() {
        let alg: BlockAlgebra = serde_json::from_str(r#"{"blocks":[{"dim":2,"weight":1.0},{"dim":1,"weight":0.5}]}"#).unwrap();
        assert_eq!(alg.total_dim(), 3);
        assert_eq!(serde_json::to_string(&alg).unwrap(), r#"{"blocks":[{"dim":2,"weight":1.0},{"dim":1,"weight":0.5}]}"#);
        assert!(serde_json::from_str::<BlockAlgebra>(r#"{"blocks":[{"dim":2,"weight":-1.0}]}"#).is_err());
        assert!(serde_json::from_str::<BlockAlgebra>(r#"{"blocks":[]}"#).is_err());
    }

    #[test]
    fn measurability_witnesses() {
        let alg = BlockAlgebra::full(2);
        let a = Operator::new(vec![Matrix::from_real_diag(&[3.0, -1.0])]);
        let m = in_d(&alg, &a, 2.0, 1.0).unwrap();
        assert_eq!(m.witness, 1.0);
        assert!(m.contained);
        assert!(!in_d(&alg, &a, 2.0, 0.5).unwrap().contained);

        let zero = Operator::zeros(&alg);
        let m = in_d(&alg, &zero, 0.1, 1e-6).unwrap();
        assert!(m.contained && m.witness == 0.0);

        let m = in_d(&alg, &a, 3.5, 1e-9).unwrap();
        assert_eq!(m.witness, 0.0);

        assert!(matches!(in_d(&alg, &a, 1.0, 1.0), Err(LabError::ClusterSplit { .. })));
    }

    #[test]
    fn measurability_arithmetic_on_diagonal_pair() {
        // |A1| = diag(3, 1), |A2| = diag(2, 0.5), weights (1, 2).
        let alg = BlockAlgebra::diagonal(&[1.0, 2.0]).unwrap();
        let a1 = Operator::from_diagonal(&alg, &[3.0, 1.0]).unwrap();
        let a2 = Operator::from_diagonal(&alg, &[2.0, 0.5]).unwrap();
        // eps1 = 2 leaves the weight-1 atom: witness 1. eps2 = 1 leaves the
        // weight-1 atom as well: witness 1.
        let r = d_arithmetic_check(&alg, &a1, &a2, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!((r.witness_1, r.witness_2), (1.0, 1.0));
        // A1 + A2 = diag(5, 1.5), above 3: only the first atom.
        assert_eq!(r.sum_witness, 1.0);
        // A1 A2 = diag(6, 0.5), above 2: only the first atom.
        assert_eq!(r.product_witness, 1.0);
        assert!(r.precondition_holds && r.passed());

        let zero = Operator::zeros(&alg);
        let r = d_arithmetic_check(&alg, &zero, &zero, 1.0, 1.0, 0.1, 0.1).unwrap();
        assert!(r.precondition_holds && r.sum_contained && r.product_contained);
    }

    #[test]
    fn density_validation() {
        let alg = two_blocks();
        assert!(DensityState::tracial(&alg).is_faithful());
        let bad = Operator::identity(&alg);
        assert!(matches!(DensityState::new(&alg, bad), Err(LabError::Normalization { .. })));
        let neg = Operator::from_diagonal(&BlockAlgebra::diagonal(&[1.0, 1.0]).unwrap(), &[1.5, -0.5]).unwrap();
        assert!(matches!(
            DensityState::new(&BlockAlgebra::diagonal(&[1.0, 1.0]).unwrap(), neg),
            Err(LabError::NotPositive { .. })
        ));
        let singular = Operator::from_diagonal(&BlockAlgebra::diagonal(&[1.0, 1.0]).unwrap(), &[1.0, 0.0]).unwrap();
        let s = DensityState::new(&BlockAlgebra::diagonal(&[1.0, 1.0]).unwrap(), singular).unwrap();
        assert!(!s.is_faithful());
    }

    #[test]
    fn vectorization_round_trip() {
        let alg = two_blocks();
        let mut rng = seeded(4);
        let a = random_operator(&mut rng, &alg);
        assert_eq!(Operator::from_vec(&alg, &a.to_vec()).unwrap(), a);
        assert_eq!(alg.matrix_units().len(), alg.hs_dim());
    }
}
