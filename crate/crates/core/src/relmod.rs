//! Balanced weights on `M_2(M)`, relative modular operators
//! `Δ_{φψ} X = ρ_φ X ρ_ψ^{-1}` and the three Radon-Nikodym constructions
//! (Sakai, Pedersen-Takesaki and the commutant derivative).

use serde::{Deserialize, Serialize};

use crate::algebra::{trace_unchecked, BlockAlgebra, Operator, PositiveFunctional};
use crate::error::{LabError, Result};
use crate::matcore::{hermitian_eig_with, sqrt_psd_with, Matrix, Tolerances, C64};
use crate::modular::StandardForm;

/// `θ(A) = φ(A_11) + ψ(A_22)` on `M_2(M)`.
#[derive(Debug, Clone)]
pub struct BalancedWeight {
    pub phi: PositiveFunctional,
    pub psi: PositiveFunctional,
}

impl BalancedWeight {
    pub fn new(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional) -> Result<Self> {
        alg.check(phi.density())?;
        alg.check(psi.density())?;
        Ok(BalancedWeight { phi: phi.clone(), psi: psi.clone() })
    }

    /// `M_2(M)` realized as the block algebra with every block doubled.
    pub fn doubled_algebra(alg: &BlockAlgebra) -> BlockAlgebra {
        alg.doubled()
    }

    /// Density of `θ` on the doubled algebra: `diag(ρ_φ, ρ_ψ)`.
    pub fn density(&self) -> Operator {
        Operator::new(
            self.phi
                .density()
                .blocks
                .iter()
                .zip(&self.psi.density().blocks)
                .map(|(a, b)| {
                    let d = a.rows();
                    Matrix::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
                        (true, true) => a.get(i, j),
                        (false, false) => b.get(i - d, j - d),
                        _ => C64::new(0.0, 0.0),
                    })
                })
                .collect(),
        )
    }

    /// `θ(A)` for `A ∈ M_2(M)`.
    pub fn evaluate(&self, alg: &BlockAlgebra, a: &Operator) -> Result<C64> {
        alg.doubled().check(a)?;
        Ok(trace_unchecked(&alg.doubled(), &(&self.density() * a)))
    }

    /// `θ` is faithful exactly when both `φ` and `ψ` are: if `ψ(B*B) = 0` with
    /// `B ≠ 0` then `E_22 ⊗ B` is a non-zero element with `θ(A*A) = 0`.
    pub fn is_faithful(&self) -> bool {
        self.phi.is_faithful() && self.psi.is_faithful()
    }
}

/// `Δ_{φψ}`, acting as `X ↦ ρ_φ X ρ_ψ^{+}` with `ρ_ψ^{+}` the inverse on the
/// support of `ρ_ψ`.
#[derive(Debug, Clone)]
pub struct RelativeModular {
    alg: BlockAlgebra,
    rho_phi: Operator,
    psi_pseudo_inverse: Operator,
    /// `s^M(φ)`, acting on the left.
    pub support_phi: Operator,
    /// Support of `ρ_ψ`; `s^{M'}(ψ)` is right multiplication by it.
    pub support_psi: Operator,
    /// `Σ_k (d_k² - rank(ρ_φ,k) rank(ρ_ψ,k))`, the dimension of
    /// `(1 - s^{M'}(ψ) s^M(φ)) H`.
    pub predicted_kernel_dim: usize,
}

/// Relative eigenvalue cut below which a density eigenvalue is treated as 0.
const SUPPORT_CUT: f64 = 1e-12;

fn support_and_inverse(rho: &Operator, tol: &Tolerances) -> Result<(Operator, Operator, Vec<usize>)> {
    let eigs = rho.eig(tol)?;
    let top = eigs.iter().map(|e| e.spectral_norm()).fold(0.0, f64::max);
    let cut = SUPPORT_CUT * top;
    let mut supports = Vec::new();
    let mut inverses = Vec::new();
    let mut ranks = Vec::new();
    for e in &eigs {
        supports.push(e.map(|l| if l > cut { 1.0 } else { 0.0 })?);
        inverses.push(e.map(|l| if l > cut { 1.0 / l } else { 0.0 })?);
        ranks.push(e.eigenvalues.iter().filter(|&&l| l > cut).count());
    }
    Ok((Operator::new(supports), Operator::new(inverses), ranks))
}

/// Builds `Δ_{φψ}` directly. Fails with the predicted kernel dimension when
/// both states are singular.
pub fn relative_modular(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional) -> Result<RelativeModular> {
    let tol = Tolerances::default();
    alg.check(phi.density())?;
    alg.check(psi.density())?;
    let (support_phi, _, ranks_phi) = support_and_inverse(phi.density(), &tol)?;
    let (support_psi, psi_pseudo_inverse, ranks_psi) = support_and_inverse(psi.density(), &tol)?;
    let predicted_kernel_dim = alg
        .blocks()
        .iter()
        .zip(ranks_phi.iter().zip(&ranks_psi))
        .map(|(b, (rp, rs))| b.dim * b.dim - rp * rs)
        .sum();
    let singular_phi = ranks_phi.iter().zip(alg.blocks()).any(|(r, b)| *r < b.dim);
    let singular_psi = ranks_psi.iter().zip(alg.blocks()).any(|(r, b)| *r < b.dim);
    if singular_phi && singular_psi {
        return Err(LabError::DegenerateSupport { kernel_dim: predicted_kernel_dim });
    }
    Ok(RelativeModular {
        alg: alg.clone(),
        rho_phi: phi.density().clone(),
        psi_pseudo_inverse,
        support_phi,
        support_psi,
        predicted_kernel_dim,
    })
}

impl RelativeModular {
    pub fn apply(&self, x: &Operator) -> Operator {
        &(&self.rho_phi * x) * &self.psi_pseudo_inverse
    }

    /// Dense matrix in the orthonormal matrix-unit basis.
    pub fn dense(&self) -> Matrix {
        self.alg.superoperator_matrix(|x| self.apply(x))
    }

    /// Kernel projection `X ↦ X - s_φ X s_ψ`.
    pub fn kernel_projection(&self, x: &Operator) -> Operator {
        x - &(&(&self.support_phi * x) * &self.support_psi)
    }

    /// Numerical kernel dimension of the dense matrix.
    pub fn observed_kernel_dim(&self) -> usize {
        let s = self.dense().singular_values();
        let top = s.first().copied().unwrap_or(0.0);
        s.iter().filter(|&&x| x <= 1e-9 * top).count()
    }
}

/// `Δ_{φψ}` extracted from the modular operator of the balanced weight.
/// `Δ_θ = S_θ^† S_θ` is assembled from the real-linear matrix of the
/// antilinear `S_θ(X) = Ω^{-1} X* Ω` on `M_2(M)`, in real coordinates where
/// the metric `Re τ(X* Y)` is Euclidean; the `(1,2)` corner of `Δ_θ` is then
/// returned in the orthonormal basis of `M`. Also returns the largest
/// coefficient `Δ_θ` sends from the corner to the rest of `M_2(M)`.
pub fn balanced_route(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional) -> Result<(Matrix, f64)> {
    let theta = BalancedWeight::new(alg, phi, psi)?;
    if !theta.is_faithful() {
        return Err(LabError::NotFaithful {
            min_eigenvalue: phi.min_eigenvalue().min(psi.min_eigenvalue()),
            floor: Tolerances::default().power_floor,
        });
    }
    let doubled = alg.doubled();
    let tol = Tolerances::default();
    let eigs = theta.density().eig(&tol)?;
    let omega = Operator::new(eigs.iter().map(|e| e.map(f64::sqrt)).collect::<Result<_>>()?);
    let omega_inv = Operator::new(eigs.iter().map(|e| e.map(|l| 1.0 / l.sqrt())).collect::<Result<_>>()?);
    let tomita = |x: &Operator| &(&omega_inv * &x.adjoint()) * &omega;

    let basis = doubled.orthonormal_basis();
    let n = basis.len();
    // Real coordinates (Re c_1, Im c_1, Re c_2, ...), columns for e_u and i e_u.
    let mut s_real = vec![vec![0.0; 2 * n]; 2 * n];
    for (u, e) in basis.iter().enumerate() {
        for (part, input) in [e.clone(), e.scale(C64::new(0.0, 1.0))].iter().enumerate() {
            let image = doubled.coordinates(&tomita(input));
            for (v, c) in image.into_iter().enumerate() {
                s_real[2 * v][2 * u + part] = c.re;
                s_real[2 * v + 1][2 * u + part] = c.im;
            }
        }
    }
    // Δ_θ e_u = Σ_v (Δ[2v][2u] + i Δ[2v+1][2u]) e_v with Δ = Sᵀ S.
    let column = |col: usize| -> Vec<f64> { (0..2 * n).map(|row| s_real[row][col]).collect() };
    let columns: Vec<Vec<f64>> = (0..2 * n).map(column).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let corner = corner_indices(alg);
    let corner_set: std::collections::HashSet<usize> = corner.iter().copied().collect();
    let m = corner.len();
    let mut out = Matrix::zeros(m, m);
    let mut leakage: f64 = 0.0;
    for (col, &u) in corner.iter().enumerate() {
        let src = &columns[2 * u];
        for v in 0..n {
            let value = C64::new(dot(&columns[2 * v], src), dot(&columns[2 * v + 1], src));
            if corner_set.contains(&v) {
                let row = corner.iter().position(|&c| c == v).expect("corner index");
                out.set(row, col, value);
            } else {
                leakage = leakage.max(value.norm());
            }
        }
    }
    Ok((out, leakage))
}

/// Positions, within the orthonormal basis of `M_2(M)`, of the matrix units
/// of the `(1,2)` corner, listed in the order of the basis of `M`.
fn corner_indices(alg: &BlockAlgebra) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for b in alg.blocks() {
        let d = b.dim;
        for i in 0..d {
            for j in 0..d {
                out.push(offset + i * (2 * d) + (d + j));
            }
        }
        offset += 4 * d * d;
    }
    out
}

/// Largest entry of `balanced_route - direct`, together with the corner
/// leakage of `Δ_θ`.
pub fn relative_modular_cross_check(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional) -> Result<f64> {
    let direct = relative_modular(alg, phi, psi)?.dense();
    let (balanced, leakage) = balanced_route(alg, phi, psi)?;
    Ok((&balanced - &direct).max_abs().max(leakage))
}

/// Defining-identity residuals and range constraints of a Radon-Nikodym
/// derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnReport {
    /// Largest defining-identity residual over the matrix units.
    pub identity_residual: f64,
    /// Smallest eigenvalue of `H` (or `K` for the commutant derivative).
    pub min_eigenvalue: f64,
    /// Largest eigenvalue; must stay below 1 for Sakai and commutant.
    pub max_eigenvalue: f64,
    /// `||[H, ρ_φ]||` for Pedersen-Takesaki, `||[R_K, L_A]||` for the commutant.
    pub commutator: f64,
}

fn check_domination(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional, tol: &Tolerances) -> Result<()> {
    let diff = phi.density() - psi.density();
    let mut worst: f64 = 0.0;
    for (m, _) in diff.hermitian_part().blocks.iter().zip(alg.blocks()) {
        let eig = hermitian_eig_with(m, tol)?;
        worst = worst.max(-eig.eigenvalues[0]);
    }
    let allowed = tol.psd * phi.density().op_norm().max(1.0);
    if worst > allowed {
        return Err(LabError::Domination { max_violation: worst });
    }
    Ok(())
}

fn require_faithful(phi: &PositiveFunctional) -> Result<()> {
    if phi.is_faithful() {
        Ok(())
    } else {
        Err(LabError::NotFaithful { min_eigenvalue: phi.min_eigenvalue(), floor: Tolerances::default().power_floor })
    }
}

fn phi_powers(phi: &PositiveFunctional, tol: &Tolerances) -> Result<(Operator, Operator)> {
    let eigs = phi.density().eig(tol)?;
    let root = Operator::new(eigs.iter().map(|e| e.map(|l| l.max(0.0).sqrt())).collect::<Result<_>>()?);
    let inv_root = Operator::new(
        eigs.iter()
            .map(|e| e.power(C64::new(-0.5, 0.0), tol.power_floor))
            .collect::<Result<_>>()?,
    );
    Ok((root, inv_root))
}

fn spectrum_range(h: &Operator, tol: &Tolerances) -> Result<(f64, f64)> {
    let eigs = h.hermitian_part().eig(tol)?;
    let lo = eigs.iter().map(|e| e.eigenvalues[0]).fold(f64::INFINITY, f64::min);
    let hi = eigs.iter().map(|e| *e.eigenvalues.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Sakai derivative: the positive `H` with `H ρ_φ H = ρ_ψ`, so that
/// `ψ(A) = φ(H A H)`, given by
/// `ρ_φ^{-1/2} (ρ_φ^{1/2} ρ_ψ ρ_φ^{1/2})^{1/2} ρ_φ^{-1/2}`.
pub fn sakai_rn(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional) -> Result<Operator> {
    let tol = Tolerances::default();
    alg.check(psi.density())?;
    require_faithful(phi)?;
    check_domination(alg, phi, psi, &tol)?;
    let (root, inv_root) = phi_powers(phi, &tol)?;
    let middle = &(&root * psi.density()) * &root;
    let middle_root = middle.hermitian_part().try_map(|m| sqrt_psd_with(m, &tol))?;
    Ok((&(&inv_root * &middle_root) * &inv_root).hermitian_part())
}

pub fn verify_sakai(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional, h: &Operator) -> Result<RnReport> {
    let mut residual: f64 = 0.0;
    for a in alg.matrix_units() {
        let lhs = psi.evaluate(alg, &a);
        let rhs = phi.evaluate(alg, &(&(h * &a) * h));
        residual = residual.max((lhs - rhs).norm());
    }
    let (lo, hi) = spectrum_range(h, &Tolerances::default())?;
    Ok(RnReport { identity_residual: residual, min_eigenvalue: lo, max_eigenvalue: hi, commutator: 0.0 })
}

/// Pedersen-Takesaki derivative for a `σ^φ`-invariant `ψ`:
/// `H = ρ_φ^{-1/2} ρ_ψ ρ_φ^{-1/2}`, equal to `ρ_ψ ρ_φ^{-1}` when the densities
/// commute, with `ψ(A) = φ(H A)`.
pub fn pedersen_takesaki_rn(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional) -> Result<Operator> {
    let tol = Tolerances::default();
    alg.check(psi.density())?;
    require_faithful(phi)?;
    let commutator_norm = psi.density().commutator(phi.density()).op_norm();
    let scale = (psi.density().op_norm() * phi.density().op_norm()).max(1.0);
    if commutator_norm > tol.commutator * scale {
        return Err(LabError::Invariance { commutator_norm });
    }
    let (_, inv_root) = phi_powers(phi, &tol)?;
    Ok((&(&inv_root * psi.density()) * &inv_root).hermitian_part())
}

pub fn verify_pedersen_takesaki(alg: &BlockAlgebra, phi: &PositiveFunctional, psi: &PositiveFunctional, h: &Operator) -> Result<RnReport> {
    let mut residual: f64 = 0.0;
    for a in alg.matrix_units() {
        let lhs = psi.evaluate(alg, &a);
        let rhs = phi.evaluate(alg, &(h * &a));
        residual = residual.max((lhs - rhs).norm());
    }
    let (lo, hi) = spectrum_range(h, &Tolerances::default())?;
    Ok(RnReport {
        identity_residual: residual,
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        commutator: h.commutator(phi.density()).op_norm(),
    })
}

/// The commutant derivative `H' ∈ M'`: right multiplication by
/// `K = ρ_φ^{-1/2} ρ_ψ ρ_φ^{-1/2}` in the standard form of `φ`, so that
/// `ψ(B* A) = ⟨BΩ, H' AΩ⟩` (inner product antilinear in the first slot).
#[derive(Debug, Clone)]
pub struct CommutantDerivative {
    pub multiplier: Operator,
}

impl CommutantDerivative {
    /// `H' X = X K`.
    pub fn apply(&self, x: &Operator) -> Operator {
        x * &self.multiplier
    }
}

pub fn commutant_rn(sf: &StandardForm, psi: &PositiveFunctional) -> Result<CommutantDerivative> {
    let alg = sf.algebra();
    let tol = *sf.tolerances();
    alg.check(psi.density())?;
    check_domination(alg, &PositiveFunctional::from(sf.state()), psi, &tol)?;
    let inv_root = sf.rho_power(C64::new(-0.5, 0.0));
    Ok(CommutantDerivative { multiplier: (&(&inv_root * psi.density()) * &inv_root).hermitian_part() })
}

/// Checks the sesquilinear identity on all pairs of matrix units, `0 ≤ K ≤ 1`
/// and that `H'` commutes with left multiplication by sampled matrix units.
pub fn verify_commutant(sf: &StandardForm, psi: &PositiveFunctional, d: &CommutantDerivative) -> Result<RnReport> {
    let alg = sf.algebra();
    let units = alg.matrix_units();
    let vectors: Vec<Operator> = units.iter().map(|a| sf.vector(a)).collect();
    let mut residual: f64 = 0.0;
    for (a, av) in units.iter().zip(&vectors) {
        let image = d.apply(av);
        for (b, bv) in units.iter().zip(&vectors) {
            let lhs = psi.evaluate(alg, &(&b.adjoint() * a));
            let rhs = sf.inner(bv, &image);
            residual = residual.max((lhs - rhs).norm());
        }
    }
    let mut commutator: f64 = 0.0;
    for a in &units {
        for x in &units {
            let diff = &d.apply(&(a * x)) - &(a * &d.apply(x));
            commutator = commutator.max(diff.max_abs());
        }
    }
    let (lo, hi) = spectrum_range(&d.multiplier, sf.tolerances())?;
    Ok(RnReport { identity_residual: residual, min_eigenvalue: lo, max_eigenvalue: hi, commutator })
}

/// `ρ_ψ = ρ_φ^{1/2} K ρ_φ^{1/2}` for a random `0 ≤ K ≤ 1`: a positive
/// functional dominated by `φ`.
pub fn dominated_functional(rng: &mut impl rand::Rng, alg: &BlockAlgebra, phi: &PositiveFunctional) -> Result<PositiveFunctional> {
    let (root, _) = phi_powers(phi, &Tolerances::default())?;
    let raw = crate::sample::random_positive_operator(rng, alg, 0.0);
    let k = raw.scale_real(rng.random_range(0.1..1.0) / raw.op_norm());
    PositiveFunctional::new(alg, &(&root * &k) * &root)
}
