//! Expansionals (ordered exponentials) of operator paths, their identities,
//! Araki's perturbed Gibbs vector and the perturbation series for
//! `e^{-(K+Q)/2}` with `K = -log ρ`.
//!
//! Simplex integrals are evaluated by spectral collocation: the `n`-fold
//! ordered integral is the `n`-th iterate of a Volterra operator, discretized
//! with Gauss-Legendre nodes and the matching integration matrix. The
//! quadrature error is estimated by comparing orders `m` and `m + 8`.

use serde::{Deserialize, Serialize};

use crate::algebra::{BlockAlgebra, DensityState, Operator};
use crate::error::{LabError, Result};
use crate::kms::{kms_boundary_check, KmsReport, KmsSystem};
use crate::matcore::{expm, Matrix, Tolerances};
use crate::modular::StandardForm;
use crate::nclp::{lp_norm, PIndex};
use crate::quadrature::GaussLegendre;

/// A path `s ↦ A(s)` on `[0, T]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorPath {
    Constant { a: Operator },
    /// `e^{sB} A e^{-sB}`.
    Conjugated { a: Operator, b: Operator },
    /// `ρ^s A ρ^{-s}` for positive invertible `ρ`.
    Modular { a: Operator, rho: Operator },
}

fn op_expm(x: &Operator) -> Result<Operator> {
    x.try_map(expm)
}

/// `λ_max(Re X) - λ_min(Re X)`: `||e^{sX}|| ||e^{-sX}|| ≤ e^{s·spread}`.
fn hermitian_spread(x: &Operator) -> Result<f64> {
    let eigs = x.hermitian_part().eig(&Tolerances::default())?;
    let hi = eigs.iter().map(|e| *e.eigenvalues.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let lo = eigs.iter().map(|e| e.eigenvalues[0]).fold(f64::INFINITY, f64::min);
    Ok((hi - lo).max(0.0))
}

impl OperatorPath {
    pub fn operand(&self) -> &Operator {
        match self {
            OperatorPath::Constant { a } | OperatorPath::Conjugated { a, .. } | OperatorPath::Modular { a, .. } => a,
        }
    }

    /// Checks shapes and, for modular paths, that `ρ` is positive definite.
    pub fn validate(&self, alg: &BlockAlgebra) -> Result<()> {
        alg.check(self.operand())?;
        match self {
            OperatorPath::Constant { .. } => Ok(()),
            OperatorPath::Conjugated { b, .. } => alg.check(b),
            OperatorPath::Modular { rho, .. } => {
                alg.check(rho)?;
                let tol = Tolerances::default();
                let min = rho.eig(&tol)?.iter().map(|e| e.eigenvalues[0]).fold(f64::INFINITY, f64::min);
                if min <= tol.power_floor {
                    return Err(LabError::NotFaithful { min_eigenvalue: min, floor: tol.power_floor });
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, s: f64) -> Result<Operator> {
        match self {
            OperatorPath::Constant { a } => Ok(a.clone()),
            OperatorPath::Conjugated { a, b } => {
                Ok(&(&op_expm(&b.scale_real(s))? * a) * &op_expm(&b.scale_real(-s))?)
            }
            OperatorPath::Modular { a, rho } => {
                Ok(&(&rho.apply_fn(|x| x.powf(s))? * a) * &rho.apply_fn(|x| x.powf(-s))?)
            }
        }
    }

    /// Exponential growth rate `μ` with `||A(s)|| ≤ ||A|| e^{sμ}`.
    pub fn growth_rate(&self) -> Result<f64> {
        match self {
            OperatorPath::Constant { .. } => Ok(0.0),
            OperatorPath::Conjugated { b, .. } => hermitian_spread(b),
            OperatorPath::Modular { rho, .. } => hermitian_spread(&rho.apply_fn(f64::ln)?),
        }
    }

    /// `sup_{0≤s≤T} ||A(s)||` bound.
    pub fn sup_norm(&self, t_max: f64) -> Result<f64> {
        Ok(self.operand().op_norm() * (t_max * self.growth_rate()?).exp())
    }

    /// `∫_0^t ||A||e^{sμ} ds`; the `n`-th term is bounded by its `n`-th power over `n!`.
    pub fn integrated_bound(&self, t: f64) -> Result<f64> {
        let mu = self.growth_rate()?;
        let a = self.operand().op_norm();
        Ok(if mu * t < 1e-8 { a * t * (1.0 + 0.5 * mu * t) } else { a * (mu * t).exp_m1() / mu })
    }

    pub fn negated(&self) -> OperatorPath {
        self.with_operand(self.operand().scale_real(-1.0))
    }

    /// The path `s ↦ A(s + t)`.
    pub fn shifted(&self, t: f64) -> Result<OperatorPath> {
        Ok(self.with_operand(self.at(t)?))
    }

    fn with_operand(&self, a: Operator) -> OperatorPath {
        match self {
            OperatorPath::Constant { .. } => OperatorPath::Constant { a },
            OperatorPath::Conjugated { b, .. } => OperatorPath::Conjugated { a, b: b.clone() },
            OperatorPath::Modular { rho, .. } => OperatorPath::Modular { a, rho: rho.clone() },
        }
    }

    /// The generator `B` of the conjugation (`log ρ` for modular paths).
    fn conjugator(&self) -> Result<Option<Operator>> {
        match self {
            OperatorPath::Constant { .. } => Ok(None),
            OperatorPath::Conjugated { b, .. } => Ok(Some(b.clone())),
            OperatorPath::Modular { rho, .. } => Ok(Some(rho.apply_fn(f64::ln)?)),
        }
    }

    /// `Exp_r = e^{t(A+B)} e^{-tB}`.
    pub fn closed_form_r(&self, t: f64) -> Result<Operator> {
        let a = self.operand();
        match self.conjugator()? {
            None => op_expm(&a.scale_real(t)),
            Some(b) => Ok(&op_expm(&(a + &b).scale_real(t))? * &op_expm(&b.scale_real(-t))?),
        }
    }

    /// `Exp_l = e^{tB} e^{t(A-B)}`.
    pub fn closed_form_l(&self, t: f64) -> Result<Operator> {
        let a = self.operand();
        match self.conjugator()? {
            None => op_expm(&a.scale_real(t)),
            Some(b) => Ok(&op_expm(&b.scale_real(t))? * &op_expm(&(a - &b).scale_real(t))?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// `A(t_n)⋯A(t_1)` with `t_1 ≥ ⋯ ≥ t_n`.
    Right,
    /// `A(t_1)⋯A(t_n)`.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub max_terms: usize,
    pub min_order: usize,
    pub max_order: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { max_terms: 30, min_order: 16, max_order: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesResult {
    pub value: Operator,
    pub terms_used: usize,
    /// A priori bound on the omitted terms.
    pub tail_bound: f64,
    /// Estimated quadrature error of the retained terms.
    pub quadrature_error: f64,
    /// Gauss-Legendre order actually used.
    pub order: usize,
    pub converged: bool,
}

/// `Σ_{n>N} x^n / n!`, summed directly to avoid cancellation.
pub fn exp_tail(x: f64, n: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = 1.0;
    for k in 1..=n + 1 {
        term *= x / k as f64;
    }
    let mut total = 0.0;
    let mut k = n + 1;
    while term > 0.0 && term > 1e-300 && (term > total * 1e-17 || (k as f64) < x) {
        total += term;
        k += 1;
        term *= x / k as f64;
        if !total.is_finite() {
            return f64::INFINITY;
        }
    }
    total
}

/// Smallest `N ≤ max_terms` with `Σ_{n>N} x^n/n! ≤ tol`.
fn terms_needed(x: f64, tol: f64, max_terms: usize) -> Option<usize> {
    (0..=max_terms).find(|&n| exp_tail(x, n) <= tol)
}

/// Tracks the divergence rule: partial sums growing for five consecutive
/// terms beyond `1e6` times the initial scale.
struct GrowthWatch {
    initial: f64,
    last: f64,
    streak: usize,
}

impl GrowthWatch {
    fn new(initial: f64) -> Self {
        GrowthWatch { initial: initial.max(f64::MIN_POSITIVE), last: initial, streak: 0 }
    }

    fn push(&mut self, norm: f64, terms: usize) -> Result<()> {
        if !norm.is_finite() {
            return Err(LabError::Divergent { terms, last_norm: norm });
        }
        if norm > self.last && norm > 1e6 * self.initial {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.last = norm;
        if self.streak >= 5 {
            return Err(LabError::Divergent { terms, last_norm: norm });
        }
        Ok(())
    }
}

/// Partial sum `Σ_{n≤N}` of the ordered series at Gauss-Legendre order `m`.
fn collocated_series(
    alg: &BlockAlgebra,
    path: &OperatorPath,
    t: f64,
    ordering: Ordering,
    m: usize,
    terms: usize,
) -> Result<Operator> {
    let rule = GaussLegendre::new(m, 0.0, t);
    let cumulative = rule.cumulative_from_start();
    let values: Vec<Operator> = rule.nodes.iter().map(|&s| path.at(s)).collect::<Result<_>>()?;
    let identity = Operator::identity(alg);
    let mut previous = vec![identity.clone(); m];
    let mut total = identity.clone();
    let mut watch = GrowthWatch::new(total.op_norm());
    for n in 1..=terms {
        let integrands: Vec<Operator> = previous
            .iter()
            .zip(&values)
            .map(|(p, a)| match ordering {
                Ordering::Right => p * a,
                Ordering::Left => a * p,
            })
            .collect();
        let mut term = Operator::zeros(alg);
        for (w, y) in rule.weights.iter().zip(&integrands) {
            term = &term + &y.scale_real(*w);
        }
        total = &total + &term;
        watch.push(total.op_norm(), n)?;
        if n < terms {
            previous = cumulative
                .iter()
                .map(|row| {
                    let mut acc = Operator::zeros(alg);
                    for (c, y) in row.iter().zip(&integrands) {
                        acc = &acc + &y.scale_real(*c);
                    }
                    acc
                })
                .collect();
        }
    }
    Ok(total)
}

fn ordered_exponential(
    path: &OperatorPath,
    t: f64,
    tol: f64,
    ordering: Ordering,
    opts: &SeriesOptions,
) -> Result<SeriesResult> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LabError::Invalid(format!("expansional time must be >= 0, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(LabError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let alg = algebra_of(path.operand());
    path.validate(&alg)?;
    if t == 0.0 || path.operand().max_abs() == 0.0 {
        return Ok(SeriesResult {
            value: Operator::identity(&alg),
            terms_used: 0,
            tail_bound: 0.0,
            quadrature_error: 0.0,
            order: 0,
            converged: true,
        });
    }
    let x = path.integrated_bound(t)?;
    let terms = match terms_needed(x, tol, opts.max_terms) {
        Some(n) => n,
        None => {
            let partial = collocated_series(&alg, path, t, ordering, opts.min_order, opts.max_terms)?;
            return Err(LabError::Divergent { terms: opts.max_terms, last_norm: partial.op_norm() });
        }
    };
    let scale = x.exp();
    let mut m = opts.min_order;
    loop {
        let low = collocated_series(&alg, path, t, ordering, m, terms)?;
        let high = collocated_series(&alg, path, t, ordering, m + 8, terms)?;
        let estimate = 10.0 * (&high - &low).op_norm() + 64.0 * f64::EPSILON * scale;
        if estimate <= tol / 10.0 || m + 8 >= opts.max_order {
            if estimate > tol {
                return Err(LabError::QuadratureBudget { estimate, budget: tol / 10.0 });
            }
            return Ok(SeriesResult {
                value: high,
                terms_used: terms,
                tail_bound: exp_tail(x, terms),
                quadrature_error: estimate,
                order: m + 8,
                converged: true,
            });
        }
        m += 8;
    }
}

/// Unit-weight algebra with the block sizes of `a`; the expansional is purely
/// multiplicative, so the trace weights play no role.
fn algebra_of(a: &Operator) -> BlockAlgebra {
    BlockAlgebra::new(
        a.blocks
            .iter()
            .map(|m| crate::algebra::Block { dim: m.rows(), weight: 1.0 })
            .collect(),
    )
    .expect("operator blocks are non-empty")
}

/// `Exp_r(∫_0^t; A(s) ds)`.
pub fn expansional_r(path: &OperatorPath, t: f64, tol: f64) -> Result<SeriesResult> {
    ordered_exponential(path, t, tol, Ordering::Right, &SeriesOptions::default())
}

/// `Exp_l(∫_0^t; A(s) ds)`.
pub fn expansional_l(path: &OperatorPath, t: f64, tol: f64) -> Result<SeriesResult> {
    ordered_exponential(path, t, tol, Ordering::Left, &SeriesOptions::default())
}

pub fn expansional_with(
    path: &OperatorPath,
    t: f64,
    tol: f64,
    ordering: Ordering,
    opts: &SeriesOptions,
) -> Result<SeriesResult> {
    ordered_exponential(path, t, tol, ordering, opts)
}

/// Termwise majorant `Σ_{n=1}^{N} t^n ||A||_{np}^n / n!` of `||Exp_r - 1||_p`
/// for a unitarily conjugated path `A(s) = U_s A U_s*`, plus the
/// operator-norm tail beyond `N` scaled by `||1||_p`.
pub fn expansional_lp_bound(alg: &BlockAlgebra, a: &Operator, t: f64, p: PIndex, terms: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut factorial = 1.0;
    for n in 1..=terms {
        factorial *= n as f64;
        let np = match p {
            PIndex::Infinity => PIndex::Infinity,
            PIndex::Finite(v) => PIndex::new(n as f64 * v)?,
        };
        total += t.powi(n as i32) * lp_norm(alg, a, np)?.powi(n as i32) / factorial;
    }
    let unit = lp_norm(alg, &Operator::identity(alg), p)?;
    Ok(total + unit * exp_tail(t * a.op_norm(), terms))
}

/// `{name, lhs_norm, rhs_norm, residual, tol, passed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    pub residual: f64,
    pub tol: f64,
    pub passed: bool,
}

impl IdentityReport {
    pub fn compare(name: &str, lhs: &Operator, rhs: &Operator, tol: f64) -> Self {
        let residual = (lhs - rhs).op_norm();
        IdentityReport {
            name: name.to_string(),
            lhs_norm: lhs.op_norm(),
            rhs_norm: rhs.op_norm(),
            residual,
            tol,
            passed: residual <= tol,
        }
    }
}

const IDENTITY_TOL: f64 = 1e-9;
const SERIES_TOL: f64 = 1e-10;

/// Inverse identities, the cocycle splitting at `t + t'` and the closed forms.
pub fn expansional_identities_check(path: &OperatorPath, t: f64, t_prime: f64) -> Result<Vec<IdentityReport>> {
    let alg = algebra_of(path.operand());
    let one = Operator::identity(&alg);
    let neg = path.negated();
    let r = expansional_r(path, t, SERIES_TOL)?.value;
    let l = expansional_l(path, t, SERIES_TOL)?.value;
    let l_neg = expansional_l(&neg, t, SERIES_TOL)?.value;
    let r_neg = expansional_r(&neg, t, SERIES_TOL)?.value;
    let shifted = path.shifted(t)?;
    let r_later = expansional_r(&shifted, t_prime, SERIES_TOL)?.value;
    let l_later = expansional_l(&shifted, t_prime, SERIES_TOL)?.value;
    let r_total = expansional_r(path, t + t_prime, SERIES_TOL)?.value;
    let l_total = expansional_l(path, t + t_prime, SERIES_TOL)?.value;
    Ok(vec![
        IdentityReport::compare("inverse-left-right", &(&l_neg * &r), &one, IDENTITY_TOL),
        IdentityReport::compare("inverse-right-left", &(&r * &l_neg), &one, IDENTITY_TOL),
        IdentityReport::compare("inverse-reflected", &(&r_neg * &l), &one, IDENTITY_TOL),
        IdentityReport::compare("cocycle-right", &(&r * &r_later), &r_total, IDENTITY_TOL),
        IdentityReport::compare("cocycle-left", &(&l_later * &l), &l_total, IDENTITY_TOL),
        IdentityReport::compare("closed-form-right", &r, &path.closed_form_r(t)?, IDENTITY_TOL),
        IdentityReport::compare("closed-form-left", &l, &path.closed_form_l(t)?, IDENTITY_TOL),
    ])
}

/// `Exp_r(∫_0^t; e^{sB}Ae^{-sB} ds) e^{tB}` against `e^{t(A+B)}`.
pub fn duhamel_check(a: &Operator, b: &Operator, t: f64, tol: f64) -> Result<IdentityReport> {
    let path = OperatorPath::Conjugated { a: a.clone(), b: b.clone() };
    let series = expansional_r(&path, t, tol / 100.0)?;
    let lhs = &series.value * &op_expm(&b.scale_real(t))?;
    let rhs = op_expm(&(a + b).scale_real(t))?;
    Ok(IdentityReport::compare("duhamel", &lhs, &rhs, tol))
}

/// `e^{X - λ_max(X)}` for hermitian `X`.
fn shifted_exp(x: &Operator) -> Result<Operator> {
    let eigs = x.eig(&Tolerances::default())?;
    let top = eigs.iter().map(|e| *e.eigenvalues.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    x.apply_fn(|v| (v - top).exp())
}

/// `Ψ^Q = e^{-β(G+Q)/2} / ||e^{-β(G+Q)/2}||` in the standard form of the
/// system's state, `G` the generator. Its vector state is the Gibbs state of
/// `G + Q`.
pub fn araki_perturbed_vector(sys: &KmsSystem, q: &Operator) -> Result<Operator> {
    let alg = sys.algebra();
    alg.check(q)?;
    q.eig(&Tolerances::default())?;
    let exponent = (sys.generator() + &q.hermitian_part()).scale_real(-0.5 * sys.beta());
    let psi = shifted_exp(&exponent)?;
    let norm = crate::algebra::hs_norm(alg, &psi);
    Ok(psi.scale_real(1.0 / norm))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedReport {
    /// `max_E |⟨Ψ^Q, EΨ^Q⟩ - ω_{G+Q}(E)|` over matrix units.
    pub state_deviation: f64,
    /// KMS identities for the vector state of `Ψ^Q` under the dynamics of `G + Q`.
    pub kms: KmsReport,
}

impl PerturbedReport {
    pub fn passed(&self, state_tol: f64, kms_tol: f64) -> bool {
        self.state_deviation <= state_tol && self.kms.passed(kms_tol)
    }
}

/// Compares the vector state of [`araki_perturbed_vector`] with a directly
/// built Gibbs state of `G + Q` and checks the KMS identities of the former.
pub fn perturbed_kms_check(
    sys: &KmsSystem,
    q: &Operator,
    a: &Operator,
    b: &Operator,
    times: &[f64],
) -> Result<PerturbedReport> {
    let alg = sys.algebra();
    let psi = araki_perturbed_vector(sys, q)?;
    let generator = sys.generator() + &q.hermitian_part();
    let oracle = KmsSystem::gibbs(alg, &generator, sys.beta())?;
    let mut state_deviation: f64 = 0.0;
    for e in alg.matrix_units() {
        let vector_state = crate::algebra::hs_inner(alg, &psi, &(&e * &psi));
        state_deviation = state_deviation.max((vector_state - oracle.expectation(&e)).norm());
    }
    let density = &psi * &psi.adjoint();
    let state = DensityState::new(alg, density.hermitian_part())?;
    let perturbed = KmsSystem::with_state(alg, &generator, &state, sys.beta())?;
    Ok(PerturbedReport { state_deviation, kms: kms_boundary_check(&perturbed, a, b, times)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cr1Options {
    pub trunc_tol: f64,
    pub max_terms: usize,
    pub min_order: usize,
    pub max_order: usize,
}

impl Cr1Options {
    pub fn new(trunc_tol: f64) -> Self {
        Cr1Options { trunc_tol, max_terms: 30, min_order: 16, max_order: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cr1Result {
    pub vector: Operator,
    /// Coefficient `κ` of the `n`-th term `κ^n ∫ ρ^{t_n}Qρ^{t_{n-1}-t_n}⋯Qρ^{1/2-t_1}`.
    pub coefficient: f64,
    pub terms_used: usize,
    pub tail_bound: f64,
    pub quadrature_error: f64,
    pub order: usize,
    /// HS norms of the retained terms `κ^n T_n`.
    pub term_norms: Vec<f64>,
}

impl Cr1Result {
    /// Error budget: omitted tail plus quadrature estimate.
    pub fn budget(&self) -> f64 {
        self.tail_bound + self.quadrature_error
    }
}

/// Terms `T_0..=T_N` of the series at Gauss-Legendre order `m`, block by block
/// in the eigenbasis of `ρ`, through the recursion
/// `R_1(s) = Qρ^{1/2-s}`, `R_k(s) = ∫_s^{1/2} Qρ^{u-s}R_{k-1}(u) du`,
/// `T_k = ∫_0^{1/2} ρ^s R_k(s) ds`.
fn cr1_terms(sf: &StandardForm, q: &Operator, m: usize, terms: usize) -> Vec<Operator> {
    let rule = GaussLegendre::new(m, 0.0, 0.5);
    let to_end = rule.cumulative_to_end();
    let mut per_block: Vec<Vec<Matrix>> = Vec::new();
    for (eig, qk) in sf.eigensystems().iter().zip(&q.blocks) {
        let v = &eig.eigenvectors;
        let logs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.ln()).collect();
        let d = logs.len();
        let qt = &(&v.adjoint() * qk) * v;
        let right = |x: &Matrix, s: f64| Matrix::from_fn(d, d, |i, j| x.get(i, j) * (s * logs[j]).exp());
        let left = |x: &Matrix, s: f64| Matrix::from_fn(d, d, |i, j| x.get(i, j) * (s * logs[i]).exp());
        let mut out = vec![Matrix::from_real_diag(&logs.iter().map(|l| (0.5 * l).exp()).collect::<Vec<_>>())];
        let mut r: Vec<Matrix> = rule.nodes.iter().map(|&s| right(&qt, 0.5 - s)).collect();
        for k in 1..=terms {
            let mut term = Matrix::zeros(d, d);
            for ((&s, &w), rk) in rule.nodes.iter().zip(&rule.weights).zip(&r) {
                term = &term + &left(rk, s).scale_real(w);
            }
            out.push(term);
            if k < terms {
                let lifted: Vec<Matrix> = rule.nodes.iter().zip(&r).map(|(&u, rk)| left(rk, u)).collect();
                r = rule
                    .nodes
                    .iter()
                    .zip(&to_end)
                    .map(|(&s, row)| {
                        let mut acc = Matrix::zeros(d, d);
                        for (c, y) in row.iter().zip(&lifted) {
                            acc = &acc + &y.scale_real(*c);
                        }
                        &qt * &left(&acc, -s)
                    })
                    .collect();
            }
        }
        per_block.push(out.into_iter().map(|t| &(v * &t) * &v.adjoint()).collect());
    }
    (0..=terms)
        .map(|n| Operator::new(per_block.iter().map(|b| b[n].clone()).collect()))
        .collect()
}

fn weighted_sum(terms: &[Operator], kappa: f64) -> Operator {
    let mut total = terms[0].clone();
    let mut c = 1.0;
    for t in &terms[1..] {
        c *= kappa;
        total = &total + &t.scale_real(c);
    }
    total
}

/// `Σ κ^n T_n` with truncation at tail `≤ trunc_tol / 2` and quadrature error
/// `≤ trunc_tol / 10`. The tail uses `||T_n||_2 ≤ ||Q||^n / (2^n n!)`
/// (Hölder with `||ρ^a||_{1/a} = τ(ρ)^a = 1`).
pub fn cr1_series_with(sf: &StandardForm, q: &Operator, kappa: f64, opts: &Cr1Options) -> Result<Cr1Result> {
    let alg = sf.algebra();
    alg.check(q)?;
    q.eig(&Tolerances::default())?;
    if !(opts.trunc_tol > 0.0) {
        return Err(LabError::Invalid(format!("trunc_tol must be positive, got {}", opts.trunc_tol)));
    }
    let q = q.hermitian_part();
    let x = 0.5 * kappa.abs() * q.op_norm();
    let terms = match terms_needed(x, opts.trunc_tol / 2.0, opts.max_terms) {
        Some(n) => n,
        None => {
            let partial = cr1_terms(sf, &q, opts.min_order, opts.max_terms);
            let last = sf.norm(&weighted_sum(&partial, kappa));
            return Err(LabError::Divergent { terms: opts.max_terms, last_norm: last });
        }
    };
    let scale = x.exp();
    let mut m = opts.min_order;
    loop {
        let low = cr1_terms(sf, &q, m, terms);
        let high = cr1_terms(sf, &q, m + 8, terms);
        let estimate =
            10.0 * sf.norm(&(&weighted_sum(&high, kappa) - &weighted_sum(&low, kappa))) + 64.0 * f64::EPSILON * scale;
        if estimate <= opts.trunc_tol / 10.0 || m + 8 >= opts.max_order {
            if estimate > opts.trunc_tol {
                return Err(LabError::QuadratureBudget { estimate, budget: opts.trunc_tol / 10.0 });
            }
            let mut watch = GrowthWatch::new(sf.norm(&high[0]));
            let mut partial = high[0].clone();
            let mut c = 1.0;
            let mut term_norms = vec![sf.norm(&high[0])];
            for (n, t) in high.iter().enumerate().skip(1) {
                c *= kappa;
                let scaled = t.scale_real(c);
                term_norms.push(sf.norm(&scaled));
                partial = &partial + &scaled;
                watch.push(sf.norm(&partial), n)?;
            }
            return Ok(Cr1Result {
                vector: partial,
                coefficient: kappa,
                terms_used: terms,
                tail_bound: exp_tail(x, terms),
                quadrature_error: estimate,
                order: m + 8,
                term_norms,
            });
        }
        m += 8;
    }
}

/// `Σ (-1)^n ∫_{1/2≥t_1≥⋯≥t_n≥0} Δ^{t_n}QΔ^{t_{n-1}-t_n}Q⋯Δ^{t_1-t_2}QΩ`.
pub fn cr1_series(sf: &StandardForm, q: &Operator, trunc_tol: f64) -> Result<Cr1Result> {
    cr1_series_with(sf, q, -1.0, &Cr1Options::new(trunc_tol))
}

/// The series with prefactor `c^n`, `c = t/(2λ)`, over the unordered simplex
/// `{t_i > 0, Σt_i ≤ 1/2}`. Only termwise absolute convergence is asserted
/// for it (see [`literal_convergence`]).
pub fn cr1_literal(sf: &StandardForm, q: &Operator, t: f64, lambda: f64, trunc_tol: f64) -> Result<Cr1Result> {
    if !(lambda > 0.0) || t < 0.0 {
        return Err(LabError::Invalid(format!("need t >= 0 and lambda > 0, got t={t}, lambda={lambda}")));
    }
    cr1_series_with(sf, q, t / (2.0 * lambda), &Cr1Options::new(trunc_tol))
}

/// Whether every retained term of a literal-form run sits below the
/// majorant `(|c| ||Q|| / 2)^n / n!`, allowing the quadrature estimate.
pub fn literal_convergence(result: &Cr1Result, q_norm: f64) -> bool {
    let x = 0.5 * result.coefficient.abs() * q_norm;
    let mut bound = 1.0;
    result.term_norms.iter().enumerate().all(|(n, &norm)| {
        if n > 0 {
            bound *= x / n as f64;
        }
        norm <= bound * (1.0 + 1e-9) + result.quadrature_error
    })
}

/// `e^{-(K+Q)/2}` with `K = -log ρ`, unnormalized.
pub fn cr1_oracle(sf: &StandardForm, q: &Operator) -> Result<Operator> {
    let exponent = (&sf.rho().apply_fn(f64::ln)? - &q.hermitian_part()).scale_real(0.5);
    exponent.apply_fn(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cr1Report {
    pub observed_error: f64,
    pub tail_bound: f64,
    pub quadrature_error: f64,
    pub terms_used: usize,
    pub trunc_tol: f64,
}

impl Cr1Report {
    pub fn budget(&self) -> f64 {
        self.tail_bound + self.quadrature_error
    }

    pub fn budget_dominates(&self) -> bool {
        self.observed_error <= self.budget()
    }

    pub fn passed(&self) -> bool {
        self.budget_dominates() && self.observed_error <= self.trunc_tol + self.quadrature_error
    }
}

pub fn cr1_vs_oracle(sf: &StandardForm, q: &Operator, trunc_tol: f64) -> Result<Cr1Report> {
    let series = cr1_series(sf, q, trunc_tol)?;
    let oracle = cr1_oracle(sf, q)?;
    Ok(Cr1Report {
        observed_error: sf.norm(&(&series.vector - &oracle)),
        tail_bound: series.tail_bound,
        quadrature_error: series.quadrature_error,
        terms_used: series.terms_used,
        trunc_tol,
    })
}

/// `Ψ(h) = Exp_r(∫_0^{1/2}; ρ^s h ρ^{-s} ds) Ω`, through the operator-level
/// expansional of the modular path.
pub fn expansional_vector(sf: &StandardForm, h: &Operator, tol: f64) -> Result<SeriesResult> {
    sf.algebra().check(h)?;
    h.eig(&Tolerances::default())?;
    let path = OperatorPath::Modular { a: h.hermitian_part(), rho: sf.rho().clone() };
    let mut result = expansional_r(&path, 0.5, tol)?;
    result.value = &result.value * sf.omega();
    Ok(result)
}

/// `e^{(log ρ + h)/2}`, the closed form of [`expansional_vector`].
pub fn expansional_vector_oracle(sf: &StandardForm, h: &Operator) -> Result<Operator> {
    let exponent = (&sf.rho().apply_fn(f64::ln)? + &h.hermitian_part()).scale_real(0.5);
    exponent.apply_fn(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Block;
    use crate::matcore::C64;
    use crate::modular::build_standard_form;
    use crate::sample::{random_density, random_hermitian_operator, random_operator, seeded};

    fn alg() -> BlockAlgebra {
        BlockAlgebra::new(vec![Block { dim: 3, weight: 0.8 }, Block { dim: 2, weight: 1.3 }]).unwrap()
    }

    fn unit_norm(rng: &mut crate::sample::LabRng, alg: &BlockAlgebra, size: f64) -> Operator {
        let x = random_operator(rng, alg);
        x.scale_real(size / x.op_norm())
    }

    #[test]
    fn zero_and_constant_paths() {
        let alg = alg();
        let zero = OperatorPath::Constant { a: Operator::zeros(&alg) };
        let r = expansional_r(&zero, 0.7, 1e-12).unwrap();
        assert_eq!(r.terms_used, 0);
        assert!((&r.value - &Operator::identity(&alg)).max_abs() == 0.0);
        let mut rng = seeded(1);
        let a = unit_norm(&mut rng, &alg, 1.5);
        let path = OperatorPath::Constant { a: a.clone() };
        for t in [0.0, 0.3, 1.0] {
            let r = expansional_r(&path, t, 1e-12).unwrap();
            let l = expansional_l(&path, t, 1e-12).unwrap();
            let exact = op_expm(&a.scale_real(t)).unwrap();
            assert!((&r.value - &exact).op_norm() < 1e-11, "t={t}");
            assert!((&l.value - &exact).op_norm() < 1e-11);
        }
    }

    #[test]
    fn series_honors_tail_and_quadrature() {
        let alg = alg();
        let mut rng = seeded(2);
        let path = OperatorPath::Conjugated { a: unit_norm(&mut rng, &alg, 1.0), b: unit_norm(&mut rng, &alg, 1.0) };
        for tol in [1e-4, 1e-8, 1e-12] {
            let r = expansional_r(&path, 0.9, tol).unwrap();
            let err = (&r.value - &path.closed_form_r(0.9).unwrap()).op_norm();
            assert!(err <= r.tail_bound + r.quadrature_error, "tol={tol} err={err:e} {r:?}");
            assert!(r.tail_bound <= tol);
        }
    }

    #[test]
    fn consecutive_partial_sums_within_tail() {
        let alg = BlockAlgebra::full(3);
        let mut rng = seeded(3);
        let path = OperatorPath::Conjugated { a: unit_norm(&mut rng, &alg, 1.2), b: unit_norm(&mut rng, &alg, 0.8) };
        let x = path.integrated_bound(0.8).unwrap();
        for n in 1..12 {
            let a = collocated_series(&alg, &path, 0.8, Ordering::Right, 32, n).unwrap();
            let b = collocated_series(&alg, &path, 0.8, Ordering::Right, 32, n + 1).unwrap();
            assert!((&b - &a).op_norm() <= exp_tail(x, n) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let alg = BlockAlgebra::full(2);
        let path = OperatorPath::Constant { a: Operator::identity(&alg).scale_real(40.0) };
        assert!(matches!(expansional_r(&path, 1.0, 1e-10), Err(LabError::Divergent { .. })));
        assert!(expansional_r(&path, -1.0, 1e-10).is_err());
    }

    #[test]
    fn identities_on_all_path_kinds() {
        let alg = alg();
        let mut rng = seeded(4);
        let a = unit_norm(&mut rng, &alg, 1.0);
        let b = unit_norm(&mut rng, &alg, 0.7);
        let rho = random_density(&mut rng, &alg, 0.1).rho().clone();
        let paths = [
            OperatorPath::Constant { a: Operator::zeros(&alg) },
            OperatorPath::Constant { a: a.clone() },
            OperatorPath::Conjugated { a: a.clone(), b },
            OperatorPath::Modular { a, rho },
        ];
        for path in &paths {
            for r in expansional_identities_check(path, 0.6, 0.3).unwrap() {
                assert!(r.passed, "{r:?}");
            }
        }
    }

    #[test]
    fn duhamel_cases() {
        let alg = BlockAlgebra::full(4);
        let mut rng = seeded(5);
        let a = unit_norm(&mut rng, &alg, 1.0);
        let b = unit_norm(&mut rng, &alg, 1.0);
        let zero = Operator::zeros(&alg);
        assert!(duhamel_check(&zero, &b, 0.7, 1e-8).unwrap().passed);
        assert!(duhamel_check(&a, &zero, 0.7, 1e-8).unwrap().passed);
        let diag1 = Operator::from_diagonal(&alg, &[0.3, -0.2, 0.5, 0.1]).unwrap();
        let diag2 = Operator::from_diagonal(&alg, &[-0.4, 0.6, 0.2, 0.0]).unwrap();
        assert!(duhamel_check(&diag1, &diag2, 0.7, 1e-8).unwrap().passed);
        let r = duhamel_check(&a, &b, 0.7, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
        // Without e^{tB} the identity fails for a non-commuting pair.
        let bare = expansional_r(&OperatorPath::Conjugated { a: a.clone(), b: b.clone() }, 0.7, 1e-10).unwrap();
        assert!((&bare.value - &op_expm(&(&a + &b).scale_real(0.7)).unwrap()).op_norm() > 1e-3);
    }

    #[test]
    fn lp_majorant_for_unitary_paths() {
        let alg = alg();
        let mut rng = seeded(6);
        let a = unit_norm(&mut rng, &alg, 1.4);
        let h = random_hermitian_operator(&mut rng, &alg);
        let path = OperatorPath::Conjugated { a: a.clone(), b: h.scale(C64::new(0.0, 1.0)) };
        let r = expansional_r(&path, 0.8, 1e-12).unwrap();
        let diff = &r.value - &Operator::identity(&alg);
        for p in [1.0, 2.0, 4.0] {
            let p = PIndex::new(p).unwrap();
            let lhs = lp_norm(&alg, &diff, p).unwrap();
            let rhs = expansional_lp_bound(&alg, &a, 0.8, p, 25).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-10), "{lhs} > {rhs}");
        }
    }

    #[test]
    fn araki_vector_state() {
        let alg = alg();
        let mut rng = seeded(7);
        let h = random_hermitian_operator(&mut rng, &alg);
        let sys = KmsSystem::gibbs(&alg, &h, 1.2).unwrap();
        let sf = build_standard_form(&alg, sys.state()).unwrap();
        let zero = araki_perturbed_vector(&sys, &Operator::zeros(&alg)).unwrap();
        assert!((&zero - sf.omega()).max_abs() < 1e-12);
        let scalar_q = Operator::identity(&alg).scale_real(2.5);
        assert!((&araki_perturbed_vector(&sys, &scalar_q).unwrap() - sf.omega()).max_abs() < 1e-12);
        let q = random_hermitian_operator(&mut rng, &alg);
        let a = random_operator(&mut rng, &alg);
        let b = random_operator(&mut rng, &alg);
        let report = perturbed_kms_check(&sys, &q, &a, &b, &[-1.0, 0.5, 2.0]).unwrap();
        assert!(report.passed(1e-10, 1e-9), "{report:?}");
        // The perturbed vector is the expansional of -βQ along the modular path.
        let psi = araki_perturbed_vector(&sys, &q).unwrap();
        let via = expansional_vector(&sf, &q.scale_real(-1.2), 1e-12).unwrap().value;
        let normalized = via.scale_real(1.0 / sf.norm(&via));
        assert!((&psi - &normalized).max_abs() < 1e-9);
        assert!(araki_perturbed_vector(&sys, &random_operator(&mut rng, &alg)).is_err());
    }

    #[test]
    fn araki_commuting_two_level() {
        // H = diag(0, 1), Q = diag(a, b): perturbed weights e^{-β a}, e^{-β(1+b)}.
        let alg = BlockAlgebra::full(2);
        let beta = 0.9;
        let h = Operator::from_diagonal(&alg, &[0.0, 1.0]).unwrap();
        let q = Operator::from_diagonal(&alg, &[0.4, -0.3]).unwrap();
        let sys = KmsSystem::gibbs(&alg, &h, beta).unwrap();
        let psi = araki_perturbed_vector(&sys, &q).unwrap();
        let (w0, w1) = ((-beta * 0.4f64).exp(), (-beta * 0.7f64).exp());
        let p0 = w0 / (w0 + w1);
        assert!((psi.blocks[0].get(0, 0).re - p0.sqrt()).abs() < 1e-14);
        assert!((psi.blocks[0].get(1, 1).re - (1.0 - p0).sqrt()).abs() < 1e-14);
        let e = Operator::new(vec![Matrix::unit(2, 0, 1)]);
        let report = perturbed_kms_check(&sys, &q, &e, &e.adjoint(), &[0.0, 1.0]).unwrap();
        assert!(report.passed(1e-12, 1e-12), "{report:?}");
    }

    #[test]
    fn cr1_against_oracle() {
        let alg = BlockAlgebra::full(4);
        let mut rng = seeded(8);
        let state = random_density(&mut rng, &alg, 0.05);
        let sf = build_standard_form(&alg, &state).unwrap();
        let zero = cr1_series(&sf, &Operator::zeros(&alg), 1e-10).unwrap();
        assert!((&zero.vector - sf.omega()).max_abs() < 1e-14);
        for _ in 0..5 {
            let q = random_hermitian_operator(&mut rng, &alg);
            let r = cr1_vs_oracle(&sf, &q, 1e-8).unwrap();
            assert!(r.passed() && r.observed_error < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn cr1_commuting_diagonal() {
        // ρ = diag(r_i), Q = diag(q_i): Ψ_ii = e^{(log r_i - q_i)/2}.
        let alg = BlockAlgebra::diagonal(&[1.0, 1.0, 1.0]).unwrap();
        let r = [0.2, 0.3, 0.5];
        let qd = [0.7, -1.1, 0.4];
        let state = DensityState::new(&alg, Operator::from_diagonal(&alg, &r).unwrap()).unwrap();
        let sf = build_standard_form(&alg, &state).unwrap();
        let q = Operator::from_diagonal(&alg, &qd).unwrap();
        let s = cr1_series(&sf, &q, 1e-12).unwrap();
        for i in 0..3 {
            let expected = ((r[i] as f64).ln() / 2.0 - qd[i] / 2.0).exp();
            assert!((s.vector.blocks[i].get(0, 0).re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn literal_form_converges_termwise() {
        let alg = alg();
        let mut rng = seeded(9);
        let state = random_density(&mut rng, &alg, 0.05);
        let sf = build_standard_form(&alg, &state).unwrap();
        let q = random_hermitian_operator(&mut rng, &alg);
        let lit = cr1_literal(&sf, &q, 0.4, 0.5, 1e-10).unwrap();
        assert!(literal_convergence(&lit, q.op_norm()));
        // With c = t/(2λ) the literal series sums e^{(log ρ + cQ)/2}.
        let c = 0.4;
        let oracle = cr1_oracle(&sf, &q.scale_real(-c)).unwrap();
        assert!(sf.norm(&(&lit.vector - &oracle)) <= lit.budget());
        assert!(cr1_literal(&sf, &q, 0.4, 0.0, 1e-10).is_err());
    }

    #[test]
    fn expansional_vector_cases() {
        let alg = alg();
        let mut rng = seeded(10);
        let state = random_density(&mut rng, &alg, 0.05);
        let sf = build_standard_form(&alg, &state).unwrap();
        let zero = expansional_vector(&sf, &Operator::zeros(&alg), 1e-12).unwrap();
        assert!((&zero.value - sf.omega()).max_abs() < 1e-14);
        let h = random_hermitian_operator(&mut rng, &alg);
        let psi = expansional_vector(&sf, &h, 1e-11).unwrap();
        let oracle = expansional_vector_oracle(&sf, &h).unwrap();
        assert!(sf.norm(&(&psi.value - &oracle)) < 1e-9);
        let via_cr1 = cr1_series(&sf, &h.scale_real(-1.0), 1e-11).unwrap();
        assert!(sf.norm(&(&psi.value - &via_cr1.vector)) < 1e-9);
        // h commuting with ρ: Ψ(h) = e^{h/2} Ω.
        let f = sf.rho().apply_fn(|x| x.ln().sin()).unwrap();
        let commuting = expansional_vector(&sf, &f, 1e-12).unwrap();
        let expected = &f.apply_fn(|x| (0.5 * x).exp()).unwrap() * sf.omega();
        assert!(sf.norm(&(&commuting.value - &expected)) < 1e-10);
    }

    #[test]
    fn exp_tail_values() {
        assert_eq!(exp_tail(0.0, 3), 0.0);
        let direct: f64 = (4..40).map(|n| 1.5f64.powi(n) / (1..=n).map(|k| k as f64).product::<f64>()).sum();
        assert!((exp_tail(1.5, 3) - direct).abs() < 1e-15);
        assert!((exp_tail(2.0, 0) - (2f64.exp() - 1.0)).abs() < 1e-14);
    }
}
