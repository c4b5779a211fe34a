//! Standard form of a faithful state on a block algebra: the trace-weighted
//! Hilbert-Schmidt space with `Ω = ρ^{1/2}`, left multiplication by the
//! algebra, `Δ^z X = ρ^z X ρ^{-z}` and `J X = X*`. Also the modular flow,
//! Gaussian smoothing to entire elements and the cones `V^α`.

use serde::{Deserialize, Serialize};

use crate::algebra::{hs_inner, hs_norm, BlockAlgebra, DensityState, Operator};
use crate::error::{LabError, Result};
use crate::matcore::{hermitian_eig_with, EigenSystem, Matrix, Tolerances, C64, ONE};
use crate::sample::{random_operator, random_positive_operator, seeded};

/// GNS data of `(M, τ(ρ ·))`, with the spectral decomposition of `ρ` cached.
#[derive(Debug, Clone)]
pub struct StandardForm {
    alg: BlockAlgebra,
    state: DensityState,
    eigs: Vec<EigenSystem>,
    omega: Operator,
    tol: Tolerances,
}

/// Largest total dimension for which superoperators are materialized.
pub const DENSE_LIMIT: usize = 6;

pub fn build_standard_form(alg: &BlockAlgebra, state: &DensityState) -> Result<StandardForm> {
    StandardForm::new(alg, state, Tolerances::default())
}

impl StandardForm {
    pub fn new(alg: &BlockAlgebra, state: &DensityState, tol: Tolerances) -> Result<Self> {
        alg.check(state.rho())?;
        let eigs = state.rho().eig(&tol)?;
        for e in &eigs {
            if let Some(&min) = e.eigenvalues.first() {
                if min <= tol.power_floor {
                    return Err(LabError::NotFaithful { min_eigenvalue: min, floor: tol.power_floor });
                }
            }
        }
        let omega = Operator::new(eigs.iter().map(|e| e.map(f64::sqrt)).collect::<Result<_>>()?);
        Ok(StandardForm { alg: alg.clone(), state: state.clone(), eigs, omega, tol })
    }

    pub fn algebra(&self) -> &BlockAlgebra {
        &self.alg
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }

    pub fn rho(&self) -> &Operator {
        self.state.rho()
    }

    pub fn omega(&self) -> &Operator {
        &self.omega
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Eigensystems of the blocks of `ρ`.
    pub fn eigensystems(&self) -> &[EigenSystem] {
        &self.eigs
    }

    /// `ρ^w` for complex `w`.
    pub fn rho_power(&self, w: C64) -> Operator {
        Operator::new(
            self.eigs
                .iter()
                .map(|e| e.power(w, 0.0).expect("faithful density"))
                .collect(),
        )
    }

    /// `⟨X, Y⟩ = τ(X* Y)`.
    pub fn inner(&self, x: &Operator, y: &Operator) -> C64 {
        hs_inner(&self.alg, x, y)
    }

    pub fn norm(&self, x: &Operator) -> f64 {
        hs_norm(&self.alg, x)
    }

    /// `X ↦ V (f(log λ_i, log λ_j) · (V* X V)_{ij}) V*` blockwise, in the
    /// eigenbasis of `ρ`.
    pub fn eigenbasis_multiplier(&self, x: &Operator, f: impl Fn(f64, f64) -> C64) -> Operator {
        Operator::new(
            x.blocks
                .iter()
                .zip(&self.eigs)
                .map(|(m, e)| {
                    let v = &e.eigenvectors;
                    let inner = &(&v.adjoint() * m) * v;
                    let logs: Vec<f64> = e.eigenvalues.iter().map(|l| l.ln()).collect();
                    let scaled = Matrix::from_fn(inner.rows(), inner.cols(), |i, j| inner.get(i, j) * f(logs[i], logs[j]));
                    &(v * &scaled) * &v.adjoint()
                })
                .collect(),
        )
    }

    /// `Δ^z X = ρ^z X ρ^{-z}`.
    pub fn delta_power(&self, z: C64, x: &Operator) -> Operator {
        self.eigenbasis_multiplier(x, |li, lj| (z * (li - lj)).exp())
    }

    pub fn delta(&self, x: &Operator) -> Operator {
        self.delta_power(ONE, x)
    }

    /// `J X = X*`.
    pub fn j(&self, x: &Operator) -> Operator {
        x.adjoint()
    }

    /// `A Ω`.
    pub fn vector(&self, a: &Operator) -> Operator {
        a * &self.omega
    }

    /// The Tomita operator from its definition `S(AΩ) = A*Ω`, recovering
    /// `A = X Ω^{-1}` first.
    pub fn tomita(&self, x: &Operator) -> Operator {
        let omega_inv = self.rho_power(C64::new(-0.5, 0.0));
        let a = x * &omega_inv;
        self.vector(&a.adjoint())
    }

    /// `F(A'Ω) = A'*Ω` for right multiplications `A'`, i.e. `F(Ω C) = Ω C*`.
    pub fn commutant_tomita(&self, y: &Operator) -> Operator {
        let omega_inv = self.rho_power(C64::new(-0.5, 0.0));
        let c = &omega_inv * y;
        &self.omega * &c.adjoint()
    }

    /// The modular flow `σ_z(A) = ρ^{iz} A ρ^{-iz}`.
    pub fn modular_flow(&self, z: C64, a: &Operator) -> Operator {
        self.delta_power(C64::new(0.0, 1.0) * z, a)
    }

    /// Dense matrix of a linear superoperator in an orthonormal basis of the
    /// standard-form space (matrix units scaled by `w_k^{-1/2}`).
    pub fn dense_superoperator(&self, map: impl Fn(&Operator) -> Operator) -> Result<Matrix> {
        if self.alg.total_dim() > DENSE_LIMIT {
            return Err(LabError::Invalid(format!(
                "dense superoperators need total dimension <= {DENSE_LIMIT}, got {}",
                self.alg.total_dim()
            )));
        }
        Ok(self.alg.superoperator_matrix(map))
    }

    pub fn orthonormal_basis(&self) -> Vec<Operator> {
        self.alg.orthonormal_basis()
    }

    /// Log-modular spectrum `{log λ_i - log λ_j}` of each block.
    pub fn log_modular_spectrum(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.eigs {
            for &li in &e.eigenvalues {
                for &lj in &e.eigenvalues {
                    out.push(li.ln() - lj.ln());
                }
            }
        }
        out
    }
}

/// `√(n/π) ∫ e^{-n t²} σ_t(A) dt`, evaluated in closed form: entry `(i,j)` of
/// `A` in the eigenbasis of `ρ` is multiplied by `exp(-(log λ_i - log λ_j)²/(4n))`.
pub fn gaussian_smooth(sf: &StandardForm, a: &Operator, n: f64) -> Result<Operator> {
    if !(n > 0.0) {
        return Err(LabError::Invalid(format!("smoothing parameter must be positive, got {n}")));
    }
    sf.alg.check(a)?;
    Ok(sf.eigenbasis_multiplier(a, |li, lj| C64::new((-(li - lj).powi(2) / (4.0 * n)).exp(), 0.0)))
}

/// Residuals of the Tomita-Takesaki identities in a built standard form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomitaReport {
    /// `max ||S X - J Δ^{1/2} X||` over `X = E_u Ω`, `E_u` the matrix units.
    pub s_factorization: f64,
    /// `max ||F S X - Δ X||` over the same vectors.
    pub delta_from_s: f64,
    /// `max ||Δ^{-1/2} X - J Δ^{1/2} J X||` over the orthonormal basis.
    pub delta_inverse_root: f64,
    /// `max |⟨J X, J Y⟩ - ⟨Y, X⟩|` together with `||J² X - X||`.
    pub antiunitarity: f64,
    /// `||ΔΩ - Ω|| + ||JΩ - Ω||`.
    pub omega_fixed: f64,
    /// Largest operator norm of `[J L_A J, L_B]` over the sampled pairs.
    pub commutator_max: f64,
    /// Largest `||Δ^{it} L_A Δ^{-it} X - L_{σ_t(A)} X||` over sampled `A`, `t`.
    pub flow_structure: f64,
    pub pairs: usize,
}

impl TomitaReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.s_factorization,
            self.delta_from_s,
            self.delta_inverse_root,
            self.antiunitarity,
            self.omega_fixed,
            self.commutator_max,
            self.flow_structure,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Verifies `S = J Δ^{1/2}`, `Δ = F S`, `Δ^{-1/2} = J Δ^{1/2} J`, the
/// anti-unitarity of `J` and `J M J ⊂ M'` on `pairs` random generator pairs.
pub fn tomita_check(sf: &StandardForm, pairs: usize, seed: u64) -> Result<TomitaReport> {
    let units = sf.alg.matrix_units();
    let half = C64::new(0.5, 0.0);
    let mut s_factorization: f64 = 0.0;
    let mut delta_from_s: f64 = 0.0;
    for a in &units {
        let x = sf.vector(a);
        let direct = sf.vector(&a.adjoint());
        let factored = sf.j(&sf.delta_power(half, &x));
        s_factorization = s_factorization.max(sf.norm(&(&direct - &factored)));
        let via_f = sf.commutant_tomita(&sf.tomita(&x));
        delta_from_s = delta_from_s.max(sf.norm(&(&via_f - &sf.delta(&x))));
    }

    let basis = sf.orthonormal_basis();
    let mut delta_inverse_root: f64 = 0.0;
    let mut antiunitarity: f64 = 0.0;
    for x in &basis {
        let lhs = sf.delta_power(-half, x);
        let rhs = sf.j(&sf.delta_power(half, &sf.j(x)));
        delta_inverse_root = delta_inverse_root.max(sf.norm(&(&lhs - &rhs)));
        antiunitarity = antiunitarity.max(sf.norm(&(&sf.j(&sf.j(x)) - x)));
        for y in &basis {
            let d = sf.inner(&sf.j(x), &sf.j(y)) - sf.inner(y, x);
            antiunitarity = antiunitarity.max(d.norm());
        }
    }
    let omega = sf.omega();
    let omega_fixed = sf.norm(&(&sf.delta(omega) - omega)) + sf.norm(&(&sf.j(omega) - omega));

    let mut rng = seeded(seed);
    let mut commutator_max: f64 = 0.0;
    let mut flow_structure: f64 = 0.0;
    let dense = sf.alg.total_dim() <= DENSE_LIMIT;
    for _ in 0..pairs {
        let a = random_operator(&mut rng, &sf.alg);
        let b = random_operator(&mut rng, &sf.alg);
        let jaj = |x: &Operator| sf.j(&(&a * &sf.j(x)));
        let commutator = |x: &Operator| &jaj(&(&b * x)) - &(&b * &jaj(x));
        let norm = if dense {
            sf.dense_superoperator(commutator)?.op_norm()
        } else {
            basis.iter().map(|x| sf.norm(&commutator(x))).fold(0.0, f64::max)
        };
        commutator_max = commutator_max.max(norm / (a.op_norm() * b.op_norm()).max(1.0));

        let t = C64::new(crate::sample::gaussian(&mut rng), 0.0);
        let it = C64::new(0.0, 1.0) * t;
        let sigma = sf.modular_flow(t, &a);
        for x in &basis {
            let conjugated = sf.delta_power(it, &(&a * &sf.delta_power(-it, x)));
            flow_structure = flow_structure.max(sf.norm(&(&conjugated - &(&sigma * x))) / a.op_norm().max(1.0));
        }
    }
    Ok(TomitaReport {
        s_factorization,
        delta_from_s,
        delta_inverse_root,
        antiunitarity,
        omega_fixed,
        commutator_max,
        flow_structure,
        pairs,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=0.5).contains(&alpha) {
        Ok(())
    } else {
        Err(LabError::Invalid(format!("cone parameter must lie in [0, 1/2], got {alpha}")))
    }
}

fn check_positive(a: &Operator, tol: &Tolerances) -> Result<()> {
    for m in &a.blocks {
        let eig = hermitian_eig_with(m, tol)?;
        crate::matcore::check_psd(&eig, tol)?;
    }
    Ok(())
}

/// `Δ^α A Ω = ρ^α A ρ^{1/2-α}` for positive `A`.
pub fn cone_element(sf: &StandardForm, alpha: f64, a: &Operator) -> Result<Operator> {
    check_alpha(alpha)?;
    sf.alg.check(a)?;
    check_positive(a, &sf.tol)?;
    Ok(&(&sf.rho_power(C64::new(alpha, 0.0)) * a) * &sf.rho_power(C64::new(0.5 - alpha, 0.0)))
}

/// `X ∈ V^{1/4}` iff `ρ^{-1/4} X ρ^{-1/4}` is positive semidefinite.
pub fn in_quarter_cone(sf: &StandardForm, x: &Operator) -> Result<bool> {
    sf.alg.check(x)?;
    let inv = sf.rho_power(C64::new(-0.25, 0.0));
    let core = &(&inv * x) * &inv;
    if !core.is_hermitian(sf.tol.hermitian) {
        return Ok(false);
    }
    for m in &core.hermitian_part().blocks {
        let eig = hermitian_eig_with(m, &sf.tol)?;
        let allowed = sf.tol.psd * eig.spectral_norm().max(1.0);
        if eig.eigenvalues.first().is_some_and(|&l| l < -allowed) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub alpha: f64,
    pub samples: usize,
    /// Smallest real part of `⟨Δ^α AΩ, Δ^{1/2-α} BΩ⟩`, relative to `||A|| ||B||`.
    pub min_dual_pairing: f64,
    /// Largest imaginary part of the same pairings, relative.
    pub max_pairing_imag: f64,
    /// `max ||J X - X||` over `X ∈ V^{1/4}`.
    pub j_fixed: f64,
    pub members_accepted: usize,
    pub nonmembers_rejected: usize,
    /// Non-members of `V^{1/4}` for which a member with negative pairing was found.
    pub nonmembers_separated: usize,
    /// Smallest pairing between two members of `V^{1/4}`.
    pub min_quarter_pairing: f64,
}

impl ConeReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.min_dual_pairing >= -tol
            && self.max_pairing_imag <= tol
            && self.j_fixed <= tol
            && self.members_accepted == self.samples
            && self.nonmembers_rejected == self.samples
            && self.nonmembers_separated == self.samples
            && self.min_quarter_pairing >= -tol
    }
}

/// Samples the duality between `V^α` and `V^{1/2-α}`, the `J`-invariance of
/// `V^{1/4}`, and its self-duality through the positivity characterization.
pub fn cone_checks(sf: &StandardForm, alpha: f64, samples: usize, seed: u64) -> Result<ConeReport> {
    check_alpha(alpha)?;
    let mut rng = seeded(seed);
    let alg = &sf.alg;
    let mut report = ConeReport {
        alpha,
        samples,
        min_dual_pairing: f64::INFINITY,
        max_pairing_imag: 0.0,
        j_fixed: 0.0,
        members_accepted: 0,
        nonmembers_rejected: 0,
        nonmembers_separated: 0,
        min_quarter_pairing: f64::INFINITY,
    };
    let quarter_root = sf.rho_power(C64::new(0.25, 0.0));
    let half_root = sf.rho_power(C64::new(0.5, 0.0));
    for _ in 0..samples {
        let a = random_positive_operator(&mut rng, alg, 0.0);
        let b = random_positive_operator(&mut rng, alg, 0.0);
        let scale = (a.op_norm() * b.op_norm()).max(f64::MIN_POSITIVE);
        let x = cone_element(sf, alpha, &a)?;
        let y = cone_element(sf, 0.5 - alpha, &b)?;
        let pairing = sf.inner(&x, &y) / scale;
        report.min_dual_pairing = report.min_dual_pairing.min(pairing.re);
        report.max_pairing_imag = report.max_pairing_imag.max(pairing.im.abs());

        let xq = cone_element(sf, 0.25, &a)?;
        let yq = cone_element(sf, 0.25, &b)?;
        report.j_fixed = report.j_fixed.max(sf.norm(&(&sf.j(&xq) - &xq)) / a.op_norm().max(1.0));
        report.min_quarter_pairing = report.min_quarter_pairing.min(sf.inner(&xq, &yq).re / scale);
        if in_quarter_cone(sf, &xq)? {
            report.members_accepted += 1;
        }

        // ρ^{1/4} C ρ^{1/4} with C hermitian and indefinite lies outside the
        // cone; a member pairing negatively with it comes from the negative
        // spectral projection of ρ^{1/2} C ρ^{1/2}.
        let c = indefinite_hermitian(&mut rng, alg, &sf.tol)?;
        let outside = &(&quarter_root * &c) * &quarter_root;
        if !in_quarter_cone(sf, &outside)? {
            report.nonmembers_rejected += 1;
        }
        let conjugated = &(&half_root * &c) * &half_root;
        let witness = negative_projection(&conjugated, &sf.tol)?;
        let member = cone_element(sf, 0.25, &witness)?;
        if sf.inner(&member, &outside).re < 0.0 {
            report.nonmembers_separated += 1;
        }
    }
    Ok(report)
}

/// A random hermitian element with a strictly negative and a strictly
/// positive eigenvalue in some block.
fn indefinite_hermitian(rng: &mut impl rand::Rng, alg: &BlockAlgebra, tol: &Tolerances) -> Result<Operator> {
    if alg.total_dim() < 2 {
        return Err(LabError::Invalid("every hermitian element of a one-dimensional algebra is definite".into()));
    }
    loop {
        let c = crate::sample::random_hermitian_operator(rng, alg);
        let eigs = c.eig(tol)?;
        let min = eigs.iter().map(|e| e.eigenvalues[0]).fold(f64::INFINITY, f64::min);
        let max = eigs.iter().map(|e| *e.eigenvalues.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
        if min < -0.1 && max > 0.1 {
            return Ok(c);
        }
    }
}

/// Spectral projection onto the negative part.
fn negative_projection(h: &Operator, tol: &Tolerances) -> Result<Operator> {
    h.hermitian_part()
        .try_map(|m| hermitian_eig_with(m, tol)?.map(|l| if l < 0.0 { 1.0 } else { 0.0 }))
}
