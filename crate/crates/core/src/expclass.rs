//! Exponentiable classes: the series `Σ_{n≥1} λ^n ||A|^n||_p / n!` for
//! matrices and for step functions on a measure space, divergence witnesses,
//! the convexity majorants and the boundedness characterization.

use serde::{Deserialize, Serialize};

use crate::algebra::{BlockAlgebra, Operator};
use crate::error::{LabError, Result};
use crate::nclp::{lp_norm, PIndex};

const E: f64 = std::f64::consts::E;

fn log_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Step functions with values `scale·m` on sets of mass `mass(m)`, `m ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `mass(m) = 2(1/m! - 1/(m+1)!)`.
    Example61,
    /// `mass(m) = 2((2e)^{-m} - (2e)^{-m-1})`.
    Example62,
}

/// `ln(2e)`, the exponential decay rate of the second family.
const LN_2E: f64 = std::f64::consts::LN_2 + 1.0;

impl Family {
    pub fn log_mass(self, m: usize) -> f64 {
        let mf = m as f64;
        match self {
            Family::Example61 => std::f64::consts::LN_2 + mf.ln() - log_factorial(m + 1),
            Family::Example62 => (2.0 * (1.0 - 1.0 / (2.0 * E))).ln() - mf * LN_2E,
        }
    }

    pub fn total_mass(self) -> f64 {
        match self {
            Family::Example61 => 2.0,
            Family::Example62 => 1.0 / E,
        }
    }

    /// Ratio bound for `mass(m) m^k` over `m ≥ M+1`.
    fn moment_ratio(self, k: f64, big_m: usize) -> f64 {
        let m1 = (big_m + 1) as f64;
        match self {
            Family::Example61 => ((k + 1.0) / m1).exp() / (m1 + 2.0),
            Family::Example62 => (k / m1).exp() / (2.0 * E),
        }
    }

    /// Ratio bound for `mass(m) e^{um}` over `m ≥ M+1`.
    fn exponential_ratio(self, u: f64, big_m: usize) -> f64 {
        let m1 = (big_m + 1) as f64;
        match self {
            Family::Example61 => u.exp() * (m1 + 1.0) / (m1 * (m1 + 2.0)),
            Family::Example62 => (u - LN_2E).exp(),
        }
    }

    /// `ln Σ_{m≥1} mass(m) e^{um}` in closed form, `None` when infinite.
    fn log_exponential_moment(self, u: f64) -> Option<f64> {
        match self {
            Family::Example61 => {
                // Σ 2m e^{um}/(m+1)! = 2((e^{e^u} - 1)(1 - e^{-u}) + 1).
                let eu = u.exp();
                if eu < 600.0 {
                    Some((2.0 * (eu.exp_m1() * (-(-u).exp_m1()) + 1.0)).ln())
                } else {
                    Some(std::f64::consts::LN_2 + eu + (-(-u).exp_m1()).ln() + 1e-12)
                }
            }
            Family::Example62 => {
                if u >= LN_2E {
                    return None;
                }
                let r = (u - LN_2E).exp();
                Some((2.0 * (1.0 - 1.0 / (2.0 * E)) * r / (1.0 - r)).ln())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFamily {
    pub family: Family,
    pub params: FamilyParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTail {
    family: String,
    #[serde(default)]
    params: Option<FamilyParams>,
}

impl<'de> Deserialize<'de> for TailFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawTail::deserialize(d)?;
        let family = match raw.family.as_str() {
            "example61" => Family::Example61,
            "example62" => Family::Example62,
            other => return Err(serde::de::Error::custom(LabError::UncertifiedTail(other.to_string()))),
        };
        Ok(TailFamily { family, params: raw.params.unwrap_or(FamilyParams { scale: 1.0 }) })
    }
}

/// A finite list of atoms `(value, mass)` plus an optional certified family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepMeasure {
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pub tail: Option<TailFamily>,
}

const MOMENT_REL: f64 = 1e-17;
const MAX_FAMILY_TERMS: usize = 1_000_000;

impl StepMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, tail: Option<TailFamily>) -> Result<Self> {
        let f = StepMeasure { atoms, tail };
        f.validate()?;
        Ok(f)
    }

    pub fn family(family: Family) -> Self {
        StepMeasure { atoms: Vec::new(), tail: Some(TailFamily { family, params: FamilyParams { scale: 1.0 } }) }
    }

    /// Looks up a family by name; unknown names have no certified tail.
    pub fn named_family(name: &str) -> Result<Self> {
        match name {
            "example61" => Ok(Self::family(Family::Example61)),
            "example62" => Ok(Self::family(Family::Example62)),
            other => Err(LabError::UncertifiedTail(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &(v, m) in &self.atoms {
            if !(v >= 0.0 && v.is_finite() && m > 0.0 && m.is_finite()) {
                return Err(LabError::Invalid(format!("atom ({v}, {m}) needs value >= 0 and mass > 0")));
            }
        }
        if let Some(t) = &self.tail {
            if !(t.params.scale > 0.0 && t.params.scale.is_finite()) {
                return Err(LabError::Invalid(format!("family scale must be positive, got {}", t.params.scale)));
            }
        }
        Ok(())
    }

    /// `c·f`.
    pub fn scaled(&self, c: f64) -> StepMeasure {
        StepMeasure {
            atoms: self.atoms.iter().map(|&(v, m)| (c * v, m)).collect(),
            tail: self.tail.map(|t| TailFamily { family: t.family, params: FamilyParams { scale: c * t.params.scale } }),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.tail.is_none()
    }

    pub fn sup(&self) -> f64 {
        if self.tail.is_some() {
            return f64::INFINITY;
        }
        self.atoms.iter().map(|a| a.0).fold(0.0, f64::max)
    }

    /// `ln ∫ f^k` over `{f > 0}`.
    pub fn log_moment(&self, k: f64) -> f64 {
        let mut total = f64::NEG_INFINITY;
        for &(v, m) in &self.atoms {
            if v > 0.0 {
                total = log_add(total, m.ln() + k * v.ln());
            }
        }
        if let Some(t) = &self.tail {
            total = log_add(total, family_log_sum(t, |m| k * ((t.params.scale * m as f64).ln()), |big_m| {
                t.family.moment_ratio(k, big_m)
            }));
        }
        total
    }

    /// `ln ∫_{f>0} e^{sf}`, `None` when infinite.
    fn log_exponential_moment(&self, s: f64) -> Option<f64> {
        let mut total = f64::NEG_INFINITY;
        for &(v, m) in &self.atoms {
            if v > 0.0 {
                total = log_add(total, m.ln() + s * v);
            }
        }
        if let Some(t) = &self.tail {
            total = log_add(total, t.family.log_exponential_moment(s * t.params.scale)?);
        }
        Some(total)
    }

    /// `∫ (e^{λf} - 1)`, summed with a certified ratio tail; `None` when the
    /// family sum diverges.
    pub fn exponential_integral(&self, lambda: f64) -> Option<f64> {
        let mut total: f64 = self.atoms.iter().map(|&(v, m)| m * (lambda * v).exp_m1()).sum();
        if let Some(t) = &self.tail {
            let u = lambda * t.params.scale;
            // Σ mass(m)(e^{um} - 1): the `-1` part sums to the total mass.
            let ratio_at = |big_m| t.family.exponential_ratio(u, big_m);
            if ratio_at(MAX_FAMILY_TERMS) >= 1.0 {
                return None;
            }
            let log_sum = family_log_sum(t, |m| u * m as f64, ratio_at);
            total += log_sum.exp() - t.family.total_mass();
        }
        Some(total)
    }
}

/// `ln Σ_{m≥1} mass(m) e^{g(m)}`, stopping once the ratio-certified tail is
/// below `MOMENT_REL` of the running sum.
fn family_log_sum(t: &TailFamily, g: impl Fn(usize) -> f64, ratio: impl Fn(usize) -> f64) -> f64 {
    let mut total = f64::NEG_INFINITY;
    for m in 1..=MAX_FAMILY_TERMS {
        let term = t.family.log_mass(m) + g(m);
        total = log_add(total, term);
        let r = ratio(m);
        if r < 1.0 {
            let next = t.family.log_mass(m + 1) + g(m + 1);
            let tail = next - (1.0 - r).ln();
            if tail < total + MOMENT_REL.ln() {
                return log_add(total, tail);
            }
        }
    }
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpClassVerdict {
    pub converged: bool,
    /// Final partial sum; the omitted tail is reported separately.
    pub value: f64,
    pub partial_sums: Vec<f64>,
    /// Certified bound on the omitted terms when `converged`.
    pub tail_bound: Option<f64>,
    /// First `n` whose partial sum exceeds the divergence threshold.
    pub witness: Option<usize>,
    /// `∫(e^{λf} - 1)` or `Σ w(e^{λs} - 1)` when `p = 1`.
    pub closed_form: Option<f64>,
}

impl ExpClassVerdict {
    pub fn terms(&self) -> usize {
        self.partial_sums.len()
    }
}

pub const DEFAULT_THRESHOLD: f64 = 1e12;
pub const MAX_SERIES_TERMS: usize = 20_000;

/// Certified bound on `Σ_{n>N} λ^n ||f^n||_p / n!` from
/// `x^k ≤ (k/(es))^k e^{sx}` and `n^n/n! ≤ e^n`: the tail is at most
/// `E(s)^{1/p} ρ^{N+1} / (1 - ρ)` with `ρ = λp/s`, `E(s) = ∫_{f>0} e^{sf}`.
fn commutative_tail(f: &StepMeasure, p: f64, lambda: f64, n: usize) -> Option<f64> {
    let base = lambda * p;
    let mut best: Option<f64> = None;
    for j in -8..=24 {
        let s = base * (1.0 + 2f64.powf(j as f64 / 4.0 - 3.0));
        let Some(log_e) = f.log_exponential_moment(s) else { continue };
        let rho = base / s;
        let log_tail = log_e / p + (n + 1) as f64 * rho.ln() - (1.0 - rho).ln();
        let tail = log_tail.exp();
        best = Some(best.map_or(tail, |b: f64| b.min(tail)));
    }
    if f.is_bounded() {
        let mass: f64 = f.atoms.iter().filter(|a| a.0 > 0.0).map(|a| a.1).sum();
        let direct = mass.powf(1.0 / p) * crate::dyson::exp_tail(lambda * f.sup(), n);
        best = Some(best.map_or(direct, |b| b.min(direct)));
    }
    best
}

/// `Σ λ^n ||f^n||_p / n!` with a certified stopping rule; divergence is
/// declared when a partial sum exceeds `threshold`.
pub fn exp_series_commutative_with(
    f: &StepMeasure,
    p: PIndex,
    lambda: f64,
    tol: f64,
    threshold: f64,
) -> Result<ExpClassVerdict> {
    f.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::Invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(LabError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let closed_form = if p == PIndex::Finite(1.0) { f.exponential_integral(lambda) } else { None };
    let pv = match p {
        PIndex::Finite(v) => v,
        PIndex::Infinity => {
            if !f.is_bounded() {
                return Ok(ExpClassVerdict {
                    converged: false,
                    value: f64::INFINITY,
                    partial_sums: vec![f64::INFINITY],
                    tail_bound: None,
                    witness: Some(1),
                    closed_form: None,
                });
            }
            let sup = f.sup();
            let mut partial_sums = Vec::new();
            let mut total = 0.0;
            let mut term = 1.0;
            for n in 1..=MAX_SERIES_TERMS {
                term *= lambda * sup / n as f64;
                total += term;
                partial_sums.push(total);
                let tail = crate::dyson::exp_tail(lambda * sup, n);
                if tail <= tol * total.max(1.0) {
                    return Ok(ExpClassVerdict {
                        converged: true,
                        value: total,
                        partial_sums,
                        tail_bound: Some(tail),
                        witness: None,
                        closed_form: Some((lambda * sup).exp_m1()),
                    });
                }
            }
            return Err(LabError::Divergent { terms: MAX_SERIES_TERMS, last_norm: total });
        }
    };
    let mut partial_sums = Vec::new();
    let mut total = 0.0;
    for n in 1..=MAX_SERIES_TERMS {
        let log_term = n as f64 * lambda.ln() + f.log_moment(n as f64 * pv) / pv - log_factorial(n);
        total += log_term.exp();
        partial_sums.push(total);
        if total > threshold {
            return Ok(ExpClassVerdict {
                converged: false,
                value: total,
                partial_sums,
                tail_bound: None,
                witness: Some(n),
                closed_form,
            });
        }
        if let Some(tail) = commutative_tail(f, pv, lambda, n) {
            if tail <= tol * total.max(1.0) {
                return Ok(ExpClassVerdict {
                    converged: true,
                    value: total,
                    partial_sums,
                    tail_bound: Some(tail),
                    witness: None,
                    closed_form,
                });
            }
        }
    }
    Err(LabError::Divergent { terms: MAX_SERIES_TERMS, last_norm: total })
}

pub fn exp_series_commutative(f: &StepMeasure, p: PIndex, lambda: f64, tol: f64) -> Result<ExpClassVerdict> {
    exp_series_commutative_with(f, p, lambda, tol, DEFAULT_THRESHOLD)
}

/// `(2/λ)(e^{e^λ} - 1)(e^λ - 1)/e^λ` as printed for the first family.
pub fn example61_printed(lambda: f64) -> f64 {
    (2.0 / lambda) * (lambda.exp().exp() - 1.0) * (lambda.exp() - 1.0) / lambda.exp()
}

/// `2(e^{e^λ} - 1)(e^λ - 1)/e^λ`, the value of the series for the first family.
pub fn example61_exact(lambda: f64) -> f64 {
    2.0 * (lambda.exp().exp() - 1.0) * (lambda.exp() - 1.0) / lambda.exp()
}

/// `(4e/(2e-1))(1 - 1/(2e-1))` as printed for the second family at `λ = 1`.
pub fn example62_printed() -> f64 {
    4.0 * E / (2.0 * E - 1.0) * (1.0 - 1.0 / (2.0 * E - 1.0))
}

/// `((2e-1)/e)(1 - 1/(2e-1))`, the value of the series for the second family at `λ = 1`.
pub fn example62_exact() -> f64 {
    (2.0 * E - 1.0) / E * (1.0 - 1.0 / (2.0 * E - 1.0))
}

/// Verdicts for `f`, `2f` and `f/2` at `λ = 1`, `p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub base: ExpClassVerdict,
    pub doubled: ExpClassVerdict,
    pub halved: ExpClassVerdict,
}

impl DoublingReport {
    pub fn gap_exhibited(&self) -> bool {
        self.base.converged && self.halved.converged && !self.doubled.converged && self.doubled.witness.is_some()
    }
}

pub fn divergence_check_double(f: &StepMeasure, threshold: f64) -> Result<DoublingReport> {
    let p = PIndex::Finite(1.0);
    Ok(DoublingReport {
        base: exp_series_commutative_with(f, p, 1.0, 1e-13, threshold.max(DEFAULT_THRESHOLD))?,
        doubled: exp_series_commutative_with(&f.scaled(2.0), p, 1.0, 1e-13, threshold)?,
        halved: exp_series_commutative_with(&f.scaled(0.5), p, 1.0, 1e-13, threshold.max(DEFAULT_THRESHOLD))?,
    })
}

/// `||A|^n||_p = ||A||_{np}^n` from the weighted singular values.
fn power_norm_spectral(values: &[(f64, f64)], n: usize, p: PIndex) -> f64 {
    let top = values.iter().map(|v| v.0).fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    match p {
        PIndex::Infinity => top.powi(n as i32),
        PIndex::Finite(pv) => {
            let k = n as f64 * pv;
            let scaled: f64 = values.iter().map(|&(s, w)| w * (s / top).powf(k)).sum();
            top.powi(n as i32) * scaled.powf(1.0 / pv)
        }
    }
}

/// Matrix series with two routes: termwise `||A|^n||_p` from matrix powers
/// of `|A|` against the singular-value evaluation, and for `p = 1` the
/// closed form `Σ_k w_k Σ_i (e^{λ s_i} - 1)`. The tail uses
/// `||A|^n||_p ≤ ||A||^n τ(1)^{1/p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSeriesReport {
    pub verdict: ExpClassVerdict,
    /// Termwise value from matrix powers of `|A|`.
    pub power_route: f64,
    /// Largest relative disagreement between the two termwise routes.
    pub route_gap: f64,
}

pub fn exp_series_matrix(alg: &BlockAlgebra, a: &Operator, p: PIndex, lambda: f64, tol: f64) -> Result<MatrixSeriesReport> {
    alg.check(a)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::Invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    let values = a.weighted_singular_values(alg);
    let norm = a.op_norm();
    let unit = lp_norm(alg, &Operator::identity(alg), p)?;
    let modulus = a.modulus()?;
    let closed_form = match p {
        PIndex::Finite(v) if v == 1.0 => Some(values.iter().map(|&(s, w)| w * (lambda * s).exp_m1()).sum()),
        PIndex::Infinity => Some((lambda * norm).exp_m1()),
        _ => None,
    };
    let mut partial_sums = Vec::new();
    let mut total = 0.0;
    let mut power_total = 0.0;
    let mut route_gap: f64 = 0.0;
    let mut power = Operator::identity(alg);
    let mut coefficient = 1.0;
    for n in 1..=MAX_SERIES_TERMS {
        coefficient *= lambda / n as f64;
        let spectral = power_norm_spectral(&values, n, p);
        power = &power * &modulus;
        let direct = lp_norm(alg, &power, p)?;
        route_gap = route_gap.max((spectral - direct).abs() / spectral.max(f64::MIN_POSITIVE));
        total += coefficient * spectral;
        power_total += coefficient * direct;
        partial_sums.push(total);
        let tail = unit * crate::dyson::exp_tail(lambda * norm, n);
        if tail <= tol * total.max(1.0) || norm == 0.0 {
            return Ok(MatrixSeriesReport {
                verdict: ExpClassVerdict {
                    converged: true,
                    value: total,
                    partial_sums,
                    tail_bound: Some(tail),
                    witness: None,
                    closed_form,
                },
                power_route: power_total,
                route_gap,
            });
        }
    }
    Err(LabError::Divergent { terms: MAX_SERIES_TERMS, last_norm: total })
}

/// One verdict per `λ` on the grid; used for the `λ = ∞` class.
pub fn exp_series_matrix_grid(
    alg: &BlockAlgebra,
    a: &Operator,
    p: PIndex,
    grid: &[f64],
    tol: f64,
) -> Result<Vec<MatrixSeriesReport>> {
    grid.iter().map(|&l| exp_series_matrix(alg, a, p, l, tol)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorantCheck {
    pub name: String,
    /// Largest `(lhs - rhs) / max(rhs, 1e-300)` over all terms and samples.
    pub max_violation: f64,
    pub comparisons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExconvexReport {
    pub checks: Vec<MajorantCheck>,
}

impl ExconvexReport {
    pub fn passed(&self, rel_tol: f64) -> bool {
        self.checks.iter().all(|c| c.max_violation <= rel_tol)
    }
}

fn record(check: &mut MajorantCheck, lhs: f64, rhs: f64) {
    check.comparisons += 1;
    check.max_violation = check.max_violation.max((lhs - rhs) / rhs.max(1e-300));
}

/// `||X||_{np}^n`.
fn term_norm(alg: &BlockAlgebra, x: &Operator, p: PIndex, n: usize) -> Result<f64> {
    alg.check(x)?;
    Ok(power_norm_spectral(&x.weighted_singular_values(alg), n, p))
}

const MAJORANT_TERMS: usize = 30;

/// Termwise majorant chains for scaled, convex, left-contracted, product and
/// linear combinations. `A`, `B` must have convergent series at `λ = 1`
/// (always true for matrices, verified first). `samples` drives the
/// number of scalars drawn from a fixed deterministic sequence.
pub fn exconvex_property_check(
    alg: &BlockAlgebra,
    a: &Operator,
    b: &Operator,
    p: PIndex,
    lambda_grid: &[f64],
    samples: usize,
) -> Result<ExconvexReport> {
    for x in [a, b] {
        if !exp_series_matrix(alg, x, p, 1.0, 1e-12)?.verdict.converged {
            return Err(LabError::Invalid("operand is not in the exponentiable class".into()));
        }
    }
    let named = |name: &str| MajorantCheck { name: name.into(), max_violation: f64::NEG_INFINITY, comparisons: 0 };
    let mut balanced = named("balanced");
    let mut convex = named("convex");
    let mut contraction = named("left-contraction");
    let mut product = named("product-split");
    let mut subspace = named("subspace");
    let scalars: Vec<(f64, f64)> = (0..samples.max(1))
        .map(|k| {
            let x = (k as f64 + 0.5) / samples.max(1) as f64;
            (x, 2.0 * std::f64::consts::PI * ((k as f64 * 0.618_033_988_75) % 1.0))
        })
        .collect();
    let ta: Vec<f64> = (1..=MAJORANT_TERMS).map(|n| term_norm(alg, a, p, n)).collect::<Result<_>>()?;
    let tb: Vec<f64> = (1..=MAJORANT_TERMS).map(|n| term_norm(alg, b, p, n)).collect::<Result<_>>()?;
    // Contraction B' = B / max(1, ||B||).
    let contraction_op = b.scale_real(1.0 / b.op_norm().max(1.0));
    let ba = &contraction_op * a;
    for &(x, phase) in &scalars {
        let mu = crate::matcore::C64::from_polar(x, phase);
        let scaled = a.scale(mu);
        let mixed = &a.scale_real(x) + &b.scale_real(1.0 - x);
        for n in 1..=MAJORANT_TERMS {
            let i = n - 1;
            record(&mut balanced, term_norm(alg, &scaled, p, n)?, ta[i]);
            // (θ||A|| + (1-θ)||B||)^n ≤ θ||A||^n + (1-θ)||B||^n ≤ ||A||^n + ||B||^n.
            let lhs = term_norm(alg, &mixed, p, n)?;
            let mid = x * ta[i] + (1.0 - x) * tb[i];
            record(&mut convex, lhs, mid);
            record(&mut convex, mid, ta[i] + tb[i]);
        }
        for &lambda in lambda_grid {
            let alpha = crate::matcore::C64::from_polar(lambda * x, phase);
            let beta = crate::matcore::C64::from_polar(lambda * (1.0 - x) + 0.1, -phase);
            let combo = &a.scale(alpha) + &b.scale(beta);
            let total = alpha.norm() + beta.norm();
            let theta = alpha.norm() / total;
            for n in 1..=MAJORANT_TERMS {
                let i = n - 1;
                let lhs = term_norm(alg, &combo, p, n)?;
                let rhs = total.powi(n as i32) * (theta * ta[i] + (1.0 - theta) * tb[i]);
                record(&mut subspace, lhs, rhs);
            }
        }
    }
    for n in 1..=MAJORANT_TERMS {
        record(&mut contraction, term_norm(alg, &ba, p, n)?, ta[n - 1]);
    }
    // (iii) with 1/p + 1/q = 1/r on τ(|AB|^{nr}) ≤ τ(|A|^{np})^{r/p} τ(|B|^{nq})^{r/q},
    // termwise and for partial sums.
    for (pe, qe) in [(2.0, 2.0), (1.5, 3.0), (3.0, 6.0)] {
        let r = 1.0 / (1.0 / pe + 1.0 / qe);
        let moments = |x: &Operator, e: f64, n: usize| -> f64 {
            x.weighted_singular_values(alg).iter().map(|&(s, w)| w * s.powf(n as f64 * e)).sum()
        };
        let ab = a * b;
        let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
        let mut fact = 1.0;
        for n in 1..=MAJORANT_TERMS {
            fact *= n as f64;
            let ma = moments(a, pe, n);
            let mb = moments(b, qe, n);
            let mab = moments(&ab, r, n);
            record(&mut product, mab, ma.powf(r / pe) * mb.powf(r / qe));
            sa += ma / fact;
            sb += mb / fact;
            sab += mab / fact;
            record(&mut product, sab, sa.powf(r / pe) * sb.powf(r / qe));
        }
    }
    Ok(ExconvexReport { checks: vec![balanced, convex, contraction, product, subspace] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessVerdict {
    /// Certified constant, or the candidate that was tested.
    pub constant: f64,
    /// Whether `τ(|A|^n) ≤ M^n` held for every tested `n`.
    pub holds: bool,
    pub checked_up_to: usize,
    /// First `n` with `τ(|A|^n) > M^n`.
    pub witness: Option<usize>,
}

/// `M = ||A|| max(1, τ(|A|)/||A||)`, verified for `n ≤ 50`.
pub fn boundedness_characterization(alg: &BlockAlgebra, a: &Operator) -> Result<BoundednessVerdict> {
    alg.check(a)?;
    let values = a.weighted_singular_values(alg);
    let norm = a.op_norm();
    if norm == 0.0 {
        return Ok(BoundednessVerdict { constant: 0.0, holds: true, checked_up_to: 50, witness: None });
    }
    let trace_abs: f64 = values.iter().map(|&(s, w)| w * s).sum();
    let m = norm * (trace_abs / norm).max(1.0);
    let mut witness = None;
    for n in 1..=50 {
        let log_moment = values
            .iter()
            .filter(|v| v.0 > 0.0)
            .fold(f64::NEG_INFINITY, |acc, &(s, w)| log_add(acc, w.ln() + n as f64 * s.ln()));
        if log_moment > n as f64 * m.ln() + 1e-12 {
            witness = Some(n);
            break;
        }
    }
    Ok(BoundednessVerdict { constant: m, holds: witness.is_none(), checked_up_to: 50, witness })
}

/// Searches `n ≤ max_n` with `∫ f^n > M^n`.
pub fn boundedness_step(f: &StepMeasure, candidate: f64, max_n: usize) -> Result<BoundednessVerdict> {
    f.validate()?;
    if !(candidate > 0.0) {
        return Err(LabError::Invalid(format!("candidate constant must be positive, got {candidate}")));
    }
    for n in 1..=max_n {
        if f.log_moment(n as f64) > n as f64 * candidate.ln() + 1e-12 {
            return Ok(BoundednessVerdict { constant: candidate, holds: false, checked_up_to: n, witness: Some(n) });
        }
    }
    Ok(BoundednessVerdict { constant: candidate, holds: true, checked_up_to: max_n, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Block;
    use crate::sample::{random_operator, seeded};

    #[test]
    fn single_atom_and_zero() {
        let f = StepMeasure::new(vec![(1.3, 0.7)], None).unwrap();
        let v = exp_series_commutative(&f, PIndex::Finite(1.0), 0.9, 1e-14).unwrap();
        let exact = 0.7 * (0.9f64 * 1.3).exp_m1();
        assert!(v.converged && (v.value - exact).abs() < 1e-13 * exact);
        assert!((v.closed_form.unwrap() - exact).abs() < 1e-15 * exact);
        let zero = StepMeasure::new(vec![(0.0, 1.0)], None).unwrap();
        assert_eq!(exp_series_commutative(&zero, PIndex::Finite(2.0), 1.0, 1e-12).unwrap().value, 0.0);
        assert!(StepMeasure::new(vec![(1.0, 0.0)], None).is_err());
        assert!(StepMeasure::new(vec![(-1.0, 1.0)], None).is_err());
    }

    #[test]
    fn first_family_values() {
        let f = StepMeasure::family(Family::Example61);
        for lambda in [0.5, 1.0, 2.0] {
            let v = exp_series_commutative(&f, PIndex::Finite(1.0), lambda, 1e-13).unwrap();
            let exact = example61_exact(lambda);
            assert!(v.converged);
            assert!((v.value - exact).abs() < 1e-10 * exact, "λ={lambda}: {} vs {exact}", v.value);
            assert!((v.closed_form.unwrap() - exact).abs() < 1e-12 * exact);
            // The printed form carries an extra 1/λ.
            assert!((example61_printed(lambda) * lambda - exact).abs() < 1e-12 * exact);
        }
        assert!((example61_printed(1.0) - example61_exact(1.0)).abs() < 1e-12);
    }

    #[test]
    fn second_family_values() {
        let f = StepMeasure::family(Family::Example62);
        let v = exp_series_commutative(&f, PIndex::Finite(1.0), 1.0, 1e-13).unwrap();
        let exact = example62_exact();
        assert!(v.converged && (v.value - exact).abs() < 1e-10 * exact);
        assert!((v.closed_form.unwrap() - exact).abs() < 1e-12);
        assert!((exact - 1.264_241_117_657_115).abs() < 1e-13);
        assert!((example62_printed() - 1.898_389_974_317_582).abs() < 1e-13);
        // The mass of the first family is the total 2, the second 1/e.
        assert!((f.log_moment(0.0).exp() - 1.0 / E).abs() < 1e-15);
        let g = StepMeasure::family(Family::Example61);
        assert!((g.log_moment(0.0).exp() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn doubling_gap() {
        let f = StepMeasure::family(Family::Example62);
        let r = divergence_check_double(&f, 10.0).unwrap();
        assert!(r.gap_exhibited(), "{:?}", r.doubled.witness);
        let witness = r.doubled.witness.unwrap();
        assert!(r.doubled.partial_sums[witness - 1] > 10.0);
        assert!(witness == 1 || r.doubled.partial_sums[witness - 2] <= 10.0);
        assert!(r.doubled.closed_form.is_none());
        let big = divergence_check_double(&f, 1e3).unwrap();
        assert!(big.gap_exhibited() && big.doubled.witness.unwrap() > witness);
    }

    #[test]
    fn higher_p_and_infinity() {
        let f = StepMeasure::family(Family::Example61);
        let v = exp_series_commutative(&f, PIndex::Finite(2.0), 0.5, 1e-10).unwrap();
        assert!(v.converged && v.tail_bound.unwrap() <= 1e-10 * v.value.max(1.0));
        let inf = exp_series_commutative(&f, PIndex::Infinity, 1.0, 1e-10).unwrap();
        assert!(!inf.converged && inf.witness == Some(1));
        let bounded = StepMeasure::new(vec![(2.0, 0.5), (0.5, 3.0)], None).unwrap();
        let b = exp_series_commutative(&bounded, PIndex::Infinity, 1.0, 1e-14).unwrap();
        assert!((b.value - 2f64.exp_m1()).abs() < 1e-12);
        // p = 2 on atoms: Σ λ^n (Σ m v^{2n})^{1/2} / n! by direct summation.
        let direct: f64 = (1..80)
            .map(|n| {
                let moment = 0.5 * 2f64.powi(2 * n) + 3.0 * 0.5f64.powi(2 * n);
                0.8f64.powi(n) * moment.sqrt() / (1..=n).map(|k| k as f64).product::<f64>()
            })
            .sum();
        let v2 = exp_series_commutative(&bounded, PIndex::Finite(2.0), 0.8, 1e-14).unwrap();
        assert!((v2.value - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn family_json() {
        let f: StepMeasure =
            serde_json::from_str(r#"{"atoms":[[1.0,0.5]],"tail":{"family":"example62","params":{"scale":2.0}}}"#).unwrap();
        assert_eq!(f.tail.unwrap().params.scale, 2.0);
        let err = serde_json::from_str::<StepMeasure>(r#"{"tail":{"family":"harmonic"}}"#).unwrap_err();
        assert!(err.to_string().contains("uncertified"));
        assert!(serde_json::from_str::<StepMeasure>(r#"{"atoms":[],"extra":1}"#).is_err());
        assert!(matches!(StepMeasure::named_family("zeta"), Err(LabError::UncertifiedTail(_))));
    }

    #[test]
    fn matrix_series() {
        let alg = BlockAlgebra::full(3);
        let id = Operator::identity(&alg);
        for lambda in [0.5, 1.0, 2.0] {
            let r = exp_series_matrix(&alg, &id, PIndex::Finite(1.0), lambda, 1e-14).unwrap();
            let exact = 3.0 * lambda.exp_m1();
            assert!((r.verdict.value - exact).abs() < 1e-12 * exact);
            assert!((r.verdict.closed_form.unwrap() - exact).abs() < 1e-13 * exact);
        }
        let zero = exp_series_matrix(&alg, &Operator::zeros(&alg), PIndex::Finite(2.0), 1.0, 1e-12).unwrap();
        assert_eq!(zero.verdict.value, 0.0);
        let weighted = BlockAlgebra::new(vec![Block { dim: 2, weight: 0.4 }, Block { dim: 3, weight: 1.7 }]).unwrap();
        let mut rng = seeded(3);
        let a = random_operator(&mut rng, &weighted);
        for p in [1.0, 2.0, 3.5] {
            let r = exp_series_matrix(&weighted, &a, PIndex::new(p).unwrap(), 0.7, 1e-14).unwrap();
            assert!(r.route_gap < 1e-10, "{}", r.route_gap);
            assert!((r.power_route - r.verdict.value).abs() < 1e-10 * r.verdict.value);
            if p == 1.0 {
                let c = r.verdict.closed_form.unwrap();
                assert!((c - r.verdict.value).abs() < 1e-10 * c);
            }
        }
        let grid = exp_series_matrix_grid(&weighted, &a, PIndex::Finite(2.0), &[0.1, 1.0, 10.0], 1e-12).unwrap();
        assert!(grid.iter().all(|r| r.verdict.converged));
        assert!(grid.windows(2).all(|w| w[0].verdict.value <= w[1].verdict.value));
    }

    #[test]
    fn majorant_chains() {
        let alg = BlockAlgebra::new(vec![Block { dim: 2, weight: 0.6 }, Block { dim: 2, weight: 1.5 }]).unwrap();
        let mut rng = seeded(4);
        let a = random_operator(&mut rng, &alg);
        let b = random_operator(&mut rng, &alg);
        for p in [1.0, 2.0] {
            let r = exconvex_property_check(&alg, &a, &b, PIndex::Finite(p), &[0.5, 2.0], 6).unwrap();
            assert!(r.passed(1e-10), "{r:?}");
        }
        // Commuting diagonal pair for the product split.
        let d = BlockAlgebra::diagonal(&[1.0, 2.0, 0.5]).unwrap();
        let x = Operator::from_diagonal(&d, &[0.3, 1.2, 0.7]).unwrap();
        let y = Operator::from_diagonal(&d, &[0.9, 0.1, 1.4]).unwrap();
        assert!(exconvex_property_check(&d, &x, &y, PIndex::Finite(1.0), &[1.0], 3).unwrap().passed(1e-10));
    }

    #[test]
    fn max_of_terms_is_not_a_majorant() {
        // (θa + (1-θ)b)^n ≤ max(θ^n a^n, (1-θ)^n b^n) fails already for a = b.
        let (a, theta) = (1.7f64, 0.5f64);
        let n = 3;
        let lhs = (theta * a + (1.0 - theta) * a).powi(n);
        let max_form = (theta.powi(n) * a.powi(n)).max((1.0 - theta).powi(n) * a.powi(n));
        assert!(lhs > max_form);
        assert!(lhs <= theta * a.powi(n) + (1.0 - theta) * a.powi(n) + 1e-15);
    }

    #[test]
    fn boundedness() {
        let alg = BlockAlgebra::full(4);
        let v = boundedness_characterization(&alg, &Operator::identity(&alg)).unwrap();
        assert!(v.holds && (v.constant - 4.0).abs() < 1e-14);
        let zero = boundedness_characterization(&alg, &Operator::zeros(&alg)).unwrap();
        assert_eq!(zero.constant, 0.0);
        let mut rng = seeded(5);
        let a = random_operator(&mut rng, &alg);
        assert!(boundedness_characterization(&alg, &a).unwrap().holds);
        let f = StepMeasure::family(Family::Example61);
        let w = boundedness_step(&f, 10.0, 10_000).unwrap();
        assert!(!w.holds);
        let n = w.witness.unwrap();
        assert!(f.log_moment(n as f64) > n as f64 * 10f64.ln());
        assert!(f.log_moment((n - 1) as f64) <= (n - 1) as f64 * 10f64.ln() + 1e-12);
        let bounded = StepMeasure::new(vec![(3.0, 0.2)], None).unwrap();
        assert!(boundedness_step(&bounded, 3.0, 200).unwrap().holds);
    }

    #[test]
    fn monotone_in_lambda() {
        let f = StepMeasure::family(Family::Example62);
        let mut last = 0.0;
        for lambda in [0.2, 0.5, 1.0, 1.4] {
            let v = exp_series_commutative(&f, PIndex::Finite(1.0), lambda, 1e-12).unwrap();
            assert!(v.converged && v.value > last);
            last = v.value;
        }
        // Beyond ln(2e) the series diverges.
        let beyond = exp_series_commutative_with(&f, PIndex::Finite(1.0), 1.8, 1e-12, 1e6).unwrap();
        assert!(!beyond.converged);
    }
}
