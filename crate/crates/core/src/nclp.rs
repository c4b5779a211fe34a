//! Noncommutative `L^p` norms `||A||_p = τ(|A|^p)^{1/p}` and the inequality
//! suite around them: Hölder, Minkowski with its norming functional, duality
//! and log-convex interpolation.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{trace_unchecked, BlockAlgebra, Operator};
use crate::error::{LabError, Result};
use crate::matcore::{svd, C64};
use crate::sample::{random_operator, seeded};

/// An exponent `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIndex", into = "RawIndex")]
pub enum PIndex {
    Finite(f64),
    Infinity,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawIndex {
    Number(f64),
    Text(String),
}

impl TryFrom<RawIndex> for PIndex {
    type Error = LabError;
    fn try_from(raw: RawIndex) -> Result<Self> {
        match raw {
            RawIndex::Number(p) => PIndex::new(p),
            RawIndex::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(PIndex::Infinity),
            RawIndex::Text(s) => Err(LabError::Exponent(format!("unrecognized exponent {s:?}"))),
        }
    }
}

impl From<PIndex> for RawIndex {
    fn from(p: PIndex) -> Self {
        match p {
            PIndex::Finite(p) => RawIndex::Number(p),
            PIndex::Infinity => RawIndex::Text("inf".into()),
        }
    }
}

impl fmt::Display for PIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PIndex::Finite(p) => write!(f, "{p}"),
            PIndex::Infinity => f.write_str("inf"),
        }
    }
}

impl PIndex {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(PIndex::Infinity)
        } else if p >= 1.0 && p.is_finite() {
            Ok(PIndex::Finite(p))
        } else {
            Err(LabError::Exponent(format!("p must lie in [1, inf], got {p}")))
        }
    }

    /// `1/p`, zero for `p = ∞`.
    pub fn reciprocal(self) -> f64 {
        match self {
            PIndex::Finite(p) => 1.0 / p,
            PIndex::Infinity => 0.0,
        }
    }

    /// The exponent with reciprocal `r`; `r = 0` gives `∞`.
    pub fn from_reciprocal(r: f64) -> Result<Self> {
        if r == 0.0 {
            Ok(PIndex::Infinity)
        } else if r > 0.0 && r <= 1.0 + 1e-15 {
            PIndex::new((1.0 / r).max(1.0))
        } else {
            Err(LabError::Exponent(format!("reciprocal exponent {r} outside [0, 1]")))
        }
    }

    /// Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> PIndex {
        match self {
            PIndex::Infinity => PIndex::Finite(1.0),
            PIndex::Finite(p) if p == 1.0 => PIndex::Infinity,
            PIndex::Finite(p) => PIndex::Finite(p / (p - 1.0)),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            PIndex::Finite(p) => p,
            PIndex::Infinity => f64::INFINITY,
        }
    }
}

/// `||A||_p`, computed from the weighted singular values of `A`.
pub fn lp_norm(alg: &BlockAlgebra, a: &Operator, p: PIndex) -> Result<f64> {
    alg.check(a)?;
    Ok(norm_of_spectrum(&a.weighted_singular_values(alg), p))
}

/// `(Σ w s^p)^{1/p}` over weighted values, rescaled by the largest value so
/// large `p` cannot overflow.
pub fn norm_of_spectrum(values: &[(f64, f64)], p: PIndex) -> f64 {
    let s_max = values.iter().map(|&(s, _)| s.max(0.0)).fold(0.0, f64::max);
    match p {
        PIndex::Infinity => s_max,
        PIndex::Finite(_) if s_max == 0.0 => 0.0,
        PIndex::Finite(p) => {
            let sum: f64 = values.iter().map(|&(s, w)| w * (s.max(0.0) / s_max).powf(p)).sum();
            s_max * sum.powf(1.0 / p)
        }
    }
}

/// Two sides of an inequality `lhs ≤ rhs + slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl InequalityReport {
    fn new(lhs: f64, rhs: f64, slack: f64) -> Self {
        InequalityReport { lhs, rhs, slack, holds: lhs <= rhs + slack }
    }

    /// `max(0, lhs - rhs)` relative to the slack scale.
    pub fn relative_violation(&self, scale: f64) -> f64 {
        (self.lhs - self.rhs).max(0.0) / scale
    }
}

pub const HOLDER_SLACK: f64 = 1e-12;

/// Generalized Hölder: `||A_1 ⋯ A_k||_r ≤ Π ||A_i||_{p_i}` with
/// `Σ 1/p_i = 1/r`.
pub fn holder_check(alg: &BlockAlgebra, factors: &[Operator], ps: &[PIndex], r: PIndex) -> Result<InequalityReport> {
    holder_check_with(alg, factors, ps, r, HOLDER_SLACK)
}

pub fn holder_check_with(
    alg: &BlockAlgebra,
    factors: &[Operator],
    ps: &[PIndex],
    r: PIndex,
    rel_slack: f64,
) -> Result<InequalityReport> {
    if factors.is_empty() || factors.len() != ps.len() {
        return Err(LabError::Shape(format!("{} factors but {} exponents", factors.len(), ps.len())));
    }
    let total: f64 = ps.iter().map(|p| p.reciprocal()).sum();
    if (total - r.reciprocal()).abs() > 1e-12 {
        return Err(LabError::Exponent(format!(
            "sum of reciprocals {total} does not match 1/r = {}",
            r.reciprocal()
        )));
    }
    let mut product = factors[0].clone();
    for f in &factors[1..] {
        alg.check(f)?;
        product = &product * f;
    }
    let lhs = lp_norm(alg, &product, r)?;
    let mut rhs = 1.0;
    let mut scale = 1.0;
    for (f, &p) in factors.iter().zip(ps) {
        let n = lp_norm(alg, f, p)?;
        rhs *= n;
        scale *= n.max(1.0);
    }
    Ok(InequalityReport::new(lhs, rhs, rel_slack * scale))
}

/// Norming functional for `A` in `L^p`: `B` with `||B||_q = 1` and
/// `τ(A B) = ||A||_p`. For `1 < p < ∞` this is `|A|^{p-1} u* / ||A||_p^{p-1}`
/// where `A = u|A|`; `p = 1` gives `u*` and `p = ∞` spreads `u*` over the
/// top singular subspace.
pub fn minkowski_optimizer(alg: &BlockAlgebra, a: &Operator, p: PIndex) -> Result<Operator> {
    alg.check(a)?;
    let decomps = a.blocks.iter().map(svd).collect::<Result<Vec<_>>>()?;
    let s_max = decomps
        .iter()
        .flat_map(|d| d.singular_values.first().copied())
        .fold(0.0, f64::max);
    if s_max == 0.0 {
        return Err(LabError::Invalid("the norming functional of 0 is undefined".into()));
    }
    let cut = 1e-11 * s_max;
    let weights: Vec<Vec<f64>> = match p {
        PIndex::Finite(p) if p == 1.0 => decomps
            .iter()
            .map(|d| d.singular_values.iter().map(|&s| if s > cut { 1.0 } else { 0.0 }).collect())
            .collect(),
        PIndex::Finite(p) => {
            let norm = lp_norm(alg, a, PIndex::Finite(p))?;
            decomps
                .iter()
                .map(|d| d.singular_values.iter().map(|&s| (s / norm).powf(p - 1.0)).collect())
                .collect()
        }
        PIndex::Infinity => {
            let top = |s: f64| s >= s_max - 1e-9 * s_max;
            let mass: f64 = decomps
                .iter()
                .zip(alg.blocks())
                .map(|(d, b)| b.weight * d.singular_values.iter().filter(|&&s| top(s)).count() as f64)
                .sum();
            decomps
                .iter()
                .map(|d| d.singular_values.iter().map(|&s| if top(s) { 1.0 / mass } else { 0.0 }).collect())
                .collect()
        }
    };
    Ok(Operator::new(decomps.iter().zip(&weights).map(|(d, f)| d.right_left(f)).collect()))
}

/// `τ(A B)`.
pub fn duality_pairing(alg: &BlockAlgebra, a: &Operator, b: &Operator) -> Result<C64> {
    alg.check(a)?;
    alg.check(b)?;
    Ok(trace_unchecked(alg, &(a * b)))
}

/// `max |τ(A B)|` over `sample_count` random `B` normalized in `L^q`, optionally
/// together with the norming functional of `A`.
pub fn variational_norm(
    alg: &BlockAlgebra,
    a: &Operator,
    p: PIndex,
    sample_count: usize,
    seed: u64,
    include_optimizer: bool,
) -> Result<f64> {
    if sample_count == 0 {
        return Err(LabError::Invalid("sample_count must be at least 1".into()));
    }
    alg.check(a)?;
    let q = p.conjugate();
    let mut rng = seeded(seed);
    let mut best: f64 = 0.0;
    for _ in 0..sample_count {
        let b = random_operator(&mut rng, alg);
        let n = lp_norm(alg, &b, q)?;
        if n > 0.0 {
            best = best.max(duality_pairing(alg, a, &b)?.norm() / n);
        }
    }
    if include_optimizer && a.max_abs() > 0.0 {
        let b = minkowski_optimizer(alg, a, p)?;
        best = best.max(duality_pairing(alg, a, &b)?.norm());
    }
    Ok(best)
}

/// Log-convexity of `p ↦ ||A||_p`:
/// `||A||_r ≤ ||A||_p^{1-θ} ||A||_q^θ` with `1/r = (1-θ)/p + θ/q`.
pub fn interpolation_check(alg: &BlockAlgebra, a: &Operator, p: PIndex, q: PIndex, r: PIndex) -> Result<InequalityReport> {
    let (rp, rq, rr) = (p.reciprocal(), q.reciprocal(), r.reciprocal());
    if !(rp >= rr && rr >= rq) {
        return Err(LabError::Exponent(format!("need p <= r <= q, got p = {p}, r = {r}, q = {q}")));
    }
    let norm_p = lp_norm(alg, a, p)?;
    let norm_q = lp_norm(alg, a, q)?;
    let lhs = lp_norm(alg, a, r)?;
    let theta = if rp == rq { 0.0 } else { (rp - rr) / (rp - rq) };
    let rhs = interpolate(norm_p, norm_q, theta);
    Ok(InequalityReport::new(lhs, rhs, 1e-12 * rhs.max(lhs)))
}

fn interpolate(a: f64, b: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        a
    } else if theta == 1.0 {
        b
    } else {
        a.powf(1.0 - theta) * b.powf(theta)
    }
}

/// Outcome of a randomized inequality campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub name: String,
    pub trials: usize,
    pub max_violation: f64,
    pub passed: bool,
}

pub const FUZZ_EXPONENTS: [PIndex; 5] = [
    PIndex::Finite(1.0),
    PIndex::Finite(1.5),
    PIndex::Finite(2.0),
    PIndex::Finite(3.0),
    PIndex::Infinity,
];

fn random_scaled_operator(rng: &mut impl Rng, alg: &BlockAlgebra) -> Operator {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    random_operator(rng, alg).scale_real(scale)
}

/// Hölder (two and three factors) and Minkowski over random weighted block
/// algebras with total dimension at most `max_dim`. Violations are measured
/// relative to `∏ max(1, ||A_i||)` for Hölder and to the right-hand side for
/// the triangle inequality; both fail beyond `rel_slack`.
pub fn inequality_fuzz(seed: u64, trials: usize, max_dim: usize, rel_slack: f64) -> Result<Vec<FuzzSummary>> {
    let mut rng = seeded(seed);
    let mut holder_worst: f64 = 0.0;
    let mut triangle_worst: f64 = 0.0;
    let mut holder_trials = 0;
    for trial in 0..trials {
        let alg = crate::sample::random_algebra(&mut rng, max_dim, 3);
        let p = FUZZ_EXPONENTS[trial % FUZZ_EXPONENTS.len()];
        let a = random_scaled_operator(&mut rng, &alg);
        let b = random_scaled_operator(&mut rng, &alg);

        let norm_sum = lp_norm(&alg, &(&a + &b), p)?;
        let rhs = lp_norm(&alg, &a, p)? + lp_norm(&alg, &b, p)?;
        triangle_worst = triangle_worst.max((norm_sum - rhs).max(0.0) / rhs);

        // Pair p with its conjugate (r = 1) or with a second exponent whose
        // reciprocals still sum below 1.
        let (ps, factors) = if trial % 2 == 0 {
            (vec![p, p.conjugate()], vec![a, b])
        } else {
            let q = FUZZ_EXPONENTS[rng.random_range(0..FUZZ_EXPONENTS.len())];
            let s = FUZZ_EXPONENTS[rng.random_range(0..FUZZ_EXPONENTS.len())];
            let total = p.reciprocal() + q.reciprocal() + s.reciprocal();
            if total <= 1.0 {
                let c = random_scaled_operator(&mut rng, &alg);
                (vec![p, q, s], vec![a, b, c])
            } else if p.reciprocal() + q.reciprocal() <= 1.0 {
                (vec![p, q], vec![a, b])
            } else {
                (vec![p, p.conjugate()], vec![a, b])
            }
        };
        let r = PIndex::from_reciprocal(ps.iter().map(|x| x.reciprocal()).sum())?;
        let report = holder_check_with(&alg, &factors, &ps, r, rel_slack)?;
        let scale = report.slack / rel_slack;
        holder_worst = holder_worst.max(report.relative_violation(scale));
        holder_trials += 1;
    }
    Ok(vec![
        FuzzSummary {
            name: "holder".into(),
            trials: holder_trials,
            max_violation: holder_worst,
            passed: holder_worst <= rel_slack,
        },
        FuzzSummary {
            name: "minkowski-triangle".into(),
            trials,
            max_violation: triangle_worst,
            passed: triangle_worst <= rel_slack,
        },
    ])
}

/// Checks that the norming functional has unit dual norm and attains
/// `||A||_p` through `τ(A B)`, on `trials` random instances.
pub fn optimizer_fuzz(seed: u64, trials: usize, max_dim: usize, tol: f64) -> Result<FuzzSummary> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let alg = crate::sample::random_algebra(&mut rng, max_dim, 3);
        let p = FUZZ_EXPONENTS[trial % FUZZ_EXPONENTS.len()];
        let a = random_scaled_operator(&mut rng, &alg);
        let norm = lp_norm(&alg, &a, p)?;
        let b = minkowski_optimizer(&alg, &a, p)?;
        let dual = lp_norm(&alg, &b, p.conjugate())?;
        let attained = variational_norm(&alg, &a, p, 1, trial as u64, true)?;
        worst = worst.max((dual - 1.0).abs()).max((attained - norm).abs() / norm);
        let pairing = duality_pairing(&alg, &a, &b)?;
        worst = worst.max((pairing - C64::new(norm, 0.0)).norm() / norm);
    }
    Ok(FuzzSummary { name: "minkowski-optimizer".into(), trials, max_violation: worst, passed: worst <= tol })
}
