//! KMS systems: a dynamics `τ_z(B) = e^{izG} B e^{-izG}` with a state whose
//! density is a function of `G`. The Gibbs case uses `G = H` and
//! `ρ = e^{-βH}/τ(e^{-βH})`; the modular case uses `G = log ρ` at `β = -1`.
//! Also p-continuous states, multiple-time KMS vectors and their norm bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{trace_unchecked, BlockAlgebra, DensityState, Operator};
use crate::error::{LabError, Result};
use crate::matcore::{matrix_function_complex, Matrix, Tolerances, C64};
use crate::modular::StandardForm;
use crate::nclp::{lp_norm, PIndex};
use crate::sample::{gaussian, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `τ_t(A) = e^{itH} A e^{-itH}` with the Gibbs state at inverse temperature `β`.
    Gibbs,
    /// `σ_t(A) = ρ^{it} A ρ^{-it}`, KMS at `β = -1`.
    Modular,
}

#[derive(Debug, Clone)]
pub struct KmsSystem {
    alg: BlockAlgebra,
    generator: Operator,
    /// Eigenvectors of the generator per block.
    frames: Vec<Matrix>,
    /// Eigenvalues of the generator per block.
    energies: Vec<Vec<f64>>,
    /// `log` of the eigenvalues of `ρ` in the same frame.
    log_density: Vec<Vec<f64>>,
    state: DensityState,
    beta: f64,
    log_partition: f64,
    convention: Convention,
}

impl KmsSystem {
    /// Gibbs state of `H` at inverse temperature `β`.
    pub fn gibbs(alg: &BlockAlgebra, hamiltonian: &Operator, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(LabError::Invalid(format!("beta must be finite, got {beta}")));
        }
        let tol = Tolerances::default();
        alg.check(hamiltonian)?;
        let eigs = hamiltonian.eig(&tol)?;
        // Shift the exponent so the largest Boltzmann factor is 1.
        let shift = eigs
            .iter()
            .flat_map(|e| e.eigenvalues.iter().map(|&x| -beta * x))
            .fold(f64::NEG_INFINITY, f64::max);
        let shifted: f64 = eigs
            .iter()
            .zip(alg.blocks())
            .map(|(e, b)| b.weight * e.eigenvalues.iter().map(|&x| (-beta * x - shift).exp()).sum::<f64>())
            .sum();
        let log_shifted = shifted.ln();
        let log_density: Vec<Vec<f64>> = eigs
            .iter()
            .map(|e| e.eigenvalues.iter().map(|&x| -beta * x - shift - log_shifted).collect())
            .collect();
        let rho = Operator::new(
            eigs.iter()
                .zip(&log_density)
                .map(|(e, l)| e.synthesize(&l.iter().map(|&v| C64::new(v.exp(), 0.0)).collect::<Vec<_>>()))
                .collect(),
        );
        let state = DensityState::normalized(alg, &rho)?;
        Ok(KmsSystem {
            alg: alg.clone(),
            generator: hamiltonian.hermitian_part(),
            frames: eigs.iter().map(|e| e.eigenvectors.clone()).collect(),
            energies: eigs.iter().map(|e| e.eigenvalues.clone()).collect(),
            log_density,
            state,
            beta,
            log_partition: shift + log_shifted,
            convention: Convention::Gibbs,
        })
    }

    /// The modular dynamics of a faithful state, `G = log ρ`, `β = -1`.
    pub fn modular(alg: &BlockAlgebra, state: &DensityState) -> Result<Self> {
        let tol = Tolerances::default();
        alg.check(state.rho())?;
        let eigs = state.rho().eig(&tol)?;
        let mut energies = Vec::new();
        for e in &eigs {
            if e.eigenvalues[0] <= tol.power_floor {
                return Err(LabError::NotFaithful { min_eigenvalue: e.eigenvalues[0], floor: tol.power_floor });
            }
            energies.push(e.eigenvalues.iter().map(|l| l.ln()).collect::<Vec<_>>());
        }
        let generator = Operator::new(
            eigs.iter()
                .zip(&energies)
                .map(|(e, l)| e.synthesize(&l.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>()))
                .collect(),
        );
        Ok(KmsSystem {
            alg: alg.clone(),
            generator,
            frames: eigs.iter().map(|e| e.eigenvectors.clone()).collect(),
            log_density: energies.clone(),
            energies,
            state: state.clone(),
            beta: -1.0,
            log_partition: 0.0,
            convention: Convention::Modular,
        })
    }

    /// Dynamics generated by `generator` paired with a given faithful state
    /// whose density is a function of the generator. The density is read off
    /// in the generator's eigenframe, so any mismatch shows up in the
    /// boundary identities rather than being absorbed here.
    pub fn with_state(alg: &BlockAlgebra, generator: &Operator, state: &DensityState, beta: f64) -> Result<Self> {
        let tol = Tolerances::default();
        alg.check(generator)?;
        alg.check(state.rho())?;
        let eigs = generator.eig(&tol)?;
        let scale = state.rho().op_norm().max(1.0);
        let mut log_density = Vec::new();
        for (e, rho) in eigs.iter().zip(&state.rho().blocks) {
            let local = &(&e.eigenvectors.adjoint() * rho) * &e.eigenvectors;
            let n = local.rows();
            let mut off: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j && (e.eigenvalues[i] - e.eigenvalues[j]).abs() > 1e-9 {
                        off = off.max(local.get(i, j).norm());
                    }
                }
            }
            if off > 1e-8 * scale {
                return Err(LabError::Invariance { commutator_norm: off });
            }
            let mut logs = Vec::with_capacity(n);
            for i in 0..n {
                let r = local.get(i, i).re;
                if r <= tol.power_floor {
                    return Err(LabError::NotFaithful { min_eigenvalue: r, floor: tol.power_floor });
                }
                logs.push(r.ln());
            }
            log_density.push(logs);
        }
        let shift = eigs
            .iter()
            .flat_map(|e| e.eigenvalues.iter().map(|&x| -beta * x))
            .fold(f64::NEG_INFINITY, f64::max);
        let shifted: f64 = eigs
            .iter()
            .zip(alg.blocks())
            .map(|(e, b)| b.weight * e.eigenvalues.iter().map(|&x| (-beta * x - shift).exp()).sum::<f64>())
            .sum();
        Ok(KmsSystem {
            alg: alg.clone(),
            generator: generator.hermitian_part(),
            frames: eigs.iter().map(|e| e.eigenvectors.clone()).collect(),
            energies: eigs.iter().map(|e| e.eigenvalues.clone()).collect(),
            log_density,
            state: state.clone(),
            beta,
            log_partition: shift + shifted.ln(),
            convention: Convention::Gibbs,
        })
    }

    pub fn algebra(&self) -> &BlockAlgebra {
        &self.alg
    }

    pub fn generator(&self) -> &Operator {
        &self.generator
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// `Z = τ(e^{-βH})`; infinite when it overflows.
    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// `τ_z(B) = e^{izG} B e^{-izG}` from matrix exponentials of `G`.
    pub fn evolve(&self, z: C64, b: &Operator) -> Result<Operator> {
        let i = C64::new(0.0, 1.0);
        let forward = self.generator.try_map(|g| matrix_function_complex(g, |x| (i * z * x).exp()))?;
        let backward = self.generator.try_map(|g| matrix_function_complex(g, |x| (-i * z * x).exp()))?;
        Ok(&(&forward * b) * &backward)
    }

    pub fn expectation(&self, a: &Operator) -> C64 {
        self.state.expectation(&self.alg, a)
    }
}

/// `F_{A,B}(z) = ω(A τ_z(B))`, summed in the eigenframe of the generator with
/// the density and dynamics exponents combined before exponentiation.
pub fn kms_function(sys: &KmsSystem, a: &Operator, b: &Operator, z: C64) -> Result<C64> {
    sys.alg.check(a)?;
    sys.alg.check(b)?;
    let i = C64::new(0.0, 1.0);
    let mut total = C64::new(0.0, 0.0);
    for (k, blk) in sys.alg.blocks().iter().enumerate() {
        let v = &sys.frames[k];
        let at = &(&v.adjoint() * &a.blocks[k]) * v;
        let bt = &(&v.adjoint() * &b.blocks[k]) * v;
        let e = &sys.energies[k];
        let r = &sys.log_density[k];
        let mut block = C64::new(0.0, 0.0);
        for m in 0..blk.dim {
            for j in 0..blk.dim {
                let exponent = C64::new(r[m], 0.0) + i * z * (e[j] - e[m]);
                block += exponent.exp() * at.get(m, j) * bt.get(j, m);
            }
        }
        total += block * blk.weight;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmsReport {
    pub convention: Convention,
    pub beta: f64,
    pub samples: usize,
    /// `max |F(t) - ω(A τ_t(B))|`.
    pub real_axis: f64,
    /// `max |F(t + iβ) - ω(τ_t(B) A)|`.
    pub shifted_axis: f64,
    /// `max(1, ||A|| ||B||)`.
    pub scale: f64,
}

impl KmsReport {
    pub fn max_residual(&self) -> f64 {
        self.real_axis.max(self.shifted_axis)
    }

    pub fn passed(&self, rel_tol: f64) -> bool {
        self.max_residual() <= rel_tol * self.scale
    }
}

/// Both boundary identities of the KMS condition at the given real times; the
/// right-hand sides come from matrix exponentials of the generator and the
/// density, independently of [`kms_function`].
pub fn kms_boundary_check(sys: &KmsSystem, a: &Operator, b: &Operator, times: &[f64]) -> Result<KmsReport> {
    let mut real_axis: f64 = 0.0;
    let mut shifted_axis: f64 = 0.0;
    for &t in times {
        let evolved = sys.evolve(C64::new(t, 0.0), b)?;
        let direct = sys.expectation(&(a * &evolved));
        let swapped = sys.expectation(&(&evolved * a));
        real_axis = real_axis.max((kms_function(sys, a, b, C64::new(t, 0.0))? - direct).norm());
        shifted_axis = shifted_axis.max((kms_function(sys, a, b, C64::new(t, sys.beta))? - swapped).norm());
    }
    Ok(KmsReport {
        convention: sys.convention,
        beta: sys.beta,
        samples: times.len(),
        real_axis,
        shifted_axis,
        scale: (a.op_norm() * b.op_norm()).max(1.0),
    })
}

/// `ω = τ(H ·)` with `H ∈ L_q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PContinuousState {
    pub representer: Operator,
    pub p: PIndex,
    pub q: PIndex,
    /// `||H||_q`, the dual norm of `ω` on `L_p`.
    pub norm_q: f64,
    /// `||H||_p`, the factor entering the multiple-time bounds.
    pub norm_p: f64,
}

/// A [`DensityState`] already holds the density with respect to `τ`, so the
/// representer is `ρ` itself.
pub fn p_continuous_state(alg: &BlockAlgebra, omega: &DensityState, p: PIndex) -> Result<PContinuousState> {
    representer_state(alg, omega.rho().clone(), p)
}

/// Representer for a state given by its density `σ` with respect to the
/// unweighted trace `Σ_k tr(σ_k ·)`: `H_k = σ_k / w_k`.
pub fn p_continuous_from_plain_density(alg: &BlockAlgebra, sigma: &Operator, p: PIndex) -> Result<PContinuousState> {
    alg.check(sigma)?;
    let representer = Operator::new(
        sigma
            .blocks
            .iter()
            .zip(alg.blocks())
            .map(|(m, b)| m.scale_real(1.0 / b.weight))
            .collect(),
    );
    representer_state(alg, representer, p)
}

fn representer_state(alg: &BlockAlgebra, representer: Operator, p: PIndex) -> Result<PContinuousState> {
    let q = p.conjugate();
    Ok(PContinuousState {
        norm_q: lp_norm(alg, &representer, q)?,
        norm_p: lp_norm(alg, &representer, p)?,
        representer,
        p,
        q,
    })
}

impl PContinuousState {
    /// `ω(A) = τ(H A)`.
    pub fn evaluate(&self, alg: &BlockAlgebra, a: &Operator) -> C64 {
        trace_unchecked(alg, &(&self.representer * a))
    }
}

/// Perturbations `Q_1, …, Q_n` and complex times `z_1, …, z_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiTimeSpec {
    pub perturbations: Vec<Operator>,
    pub times: Vec<C64>,
}

/// Closed region `Im z_i ≤ 0`, `-1/2 ≤ Σ Im z_i ≤ 0`.
pub fn in_closed_region(times: &[C64]) -> bool {
    let slack = 1e-14;
    times.iter().all(|z| z.im <= slack) && times.iter().map(|z| z.im).sum::<f64>() >= -0.5 - slack
}

impl MultiTimeSpec {
    pub fn new(perturbations: Vec<Operator>, times: Vec<C64>) -> Result<Self> {
        if perturbations.len() != times.len() || times.is_empty() {
            return Err(LabError::Shape(format!(
                "{} perturbations but {} times",
                perturbations.len(),
                times.len()
            )));
        }
        Ok(MultiTimeSpec { perturbations, times })
    }

    pub fn in_region(&self) -> bool {
        in_closed_region(&self.times)
    }
}

/// `Δ^{iz_n} Q_n ⋯ Δ^{iz_1} Q_1 Ω`, applying each modular power as the
/// multiplier pair `ρ^{iz}(·)ρ^{-iz}`.
pub fn multi_time_vector(sf: &StandardForm, spec: &MultiTimeSpec) -> Result<Operator> {
    if spec.perturbations.len() != spec.times.len() {
        return Err(LabError::Shape("perturbation and time lists differ in length".into()));
    }
    if !spec.in_region() {
        return Err(LabError::Region(format!("{:?}", spec.times)));
    }
    for q in &spec.perturbations {
        sf.algebra().check(q)?;
    }
    Ok(multi_time_unchecked(sf, &spec.perturbations, &spec.times))
}

fn multi_time_unchecked(sf: &StandardForm, qs: &[Operator], times: &[C64]) -> Operator {
    let i = C64::new(0.0, 1.0);
    let mut x = sf.omega().clone();
    for (q, &z) in qs.iter().zip(times) {
        x = sf.delta_power(i * z, &(q * &x));
    }
    x
}

/// Largest Cauchy-Riemann defect `||∂_y f - i ∂_x f||` over the variables,
/// by central differences with step `h`, relative to `max(1, ||f||)`.
pub fn cauchy_riemann_residual(sf: &StandardForm, qs: &[Operator], times: &[C64], h: f64) -> f64 {
    let base = multi_time_unchecked(sf, qs, times);
    let scale = sf.norm(&base).max(1.0);
    let mut worst: f64 = 0.0;
    for k in 0..times.len() {
        let shifted = |delta: C64| {
            let mut z = times.to_vec();
            z[k] += delta;
            multi_time_unchecked(sf, qs, &z)
        };
        let dx = (&shifted(C64::new(h, 0.0)) - &shifted(C64::new(-h, 0.0))).scale_real(0.5 / h);
        let dy = (&shifted(C64::new(0.0, h)) - &shifted(C64::new(0.0, -h))).scale_real(0.5 / h);
        let defect = &dy - &dx.scale(C64::new(0.0, 1.0));
        worst = worst.max(sf.norm(&defect) / scale);
    }
    worst
}

/// Points of the closed region: half on the extreme faces (one `Im z_k = -1/2`
/// or all imaginary parts 0), half in the interior with imaginary parts
/// `-u·(e_1, …, e_n)/Σe` for exponential `e_i` and uniform `u ∈ (0, 1/2)`.
/// Real parts are normal with standard deviation `spread`.
pub fn sample_region(rng: &mut impl Rng, n: usize, count: usize, spread: f64) -> Vec<Vec<C64>> {
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let mut imag = vec![0.0; n];
        if s % 2 == 0 {
            let face = (s / 2) % (n + 1);
            if face < n {
                imag[face] = -0.5;
            }
        } else {
            let weights: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = weights.iter().sum();
            let u = rng.random_range(0.0..0.5);
            for (y, w) in imag.iter_mut().zip(&weights) {
                *y = -u * w / total;
            }
        }
        out.push(imag.into_iter().map(|y| C64::new(spread * gaussian(rng), y)).collect());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundTheorem {
    /// `||H||_p^{1/2} ∏ ||Q_j||_{2nq}`.
    JSymmetric,
    /// `||H||_p^{1/2} max_l ∏_{j≤l} ||Q_j||_{4lq} ∏_{j>l} ||Q_j||_{4(n-l)q}`,
    /// with the `l = 0` term taken at index `2nq`.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: BoundTheorem,
    pub n: usize,
    /// For the J-symmetric bound: whether `||Q*||_{2mq} = ||Q||_{2mq}` held.
    pub hypothesis_holds: bool,
    pub bound: f64,
    pub max_value: f64,
    pub samples: usize,
    pub violations: usize,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.hypothesis_holds && self.violations == 0
    }
}

fn index(n: f64, q: PIndex) -> Result<PIndex> {
    match q {
        PIndex::Infinity => Ok(PIndex::Infinity),
        PIndex::Finite(q) => PIndex::new(n * q),
    }
}

fn product_norm(alg: &BlockAlgebra, qs: &[Operator], exponent: PIndex) -> Result<f64> {
    qs.iter().map(|q| lp_norm(alg, q, exponent)).product()
}

/// `||H||_p^{1/2} ∏ ||Q_j||_{2nq}`.
pub fn j_symmetric_bound(alg: &BlockAlgebra, state: &PContinuousState, qs: &[Operator]) -> Result<f64> {
    let n = qs.len() as f64;
    Ok(state.norm_p.sqrt() * product_norm(alg, qs, index(2.0 * n, state.q)?)?)
}

/// The split bound, `l = 0` at `2nq` and `l ≥ 1` at `4lq`, `4(n-l)q`.
pub fn split_bound(alg: &BlockAlgebra, state: &PContinuousState, qs: &[Operator]) -> Result<f64> {
    split_bound_with_head(alg, state, qs, 2.0)
}

/// The split bound with the `l = 0` term at `4nq` as literally stated; this
/// is not a valid Hölder split and fails already at `n = 1`.
pub fn split_bound_literal(alg: &BlockAlgebra, state: &PContinuousState, qs: &[Operator]) -> Result<f64> {
    split_bound_with_head(alg, state, qs, 4.0)
}

fn split_bound_with_head(alg: &BlockAlgebra, state: &PContinuousState, qs: &[Operator], head: f64) -> Result<f64> {
    let n = qs.len();
    let mut best = product_norm(alg, qs, index(head * n as f64, state.q)?)?;
    for l in 1..n {
        let left = product_norm(alg, &qs[..l], index(4.0 * l as f64, state.q)?)?;
        let right = product_norm(alg, &qs[l..], index(4.0 * (n - l) as f64, state.q)?)?;
        best = best.max(left * right);
    }
    Ok(state.norm_p.sqrt() * best)
}

fn sampled_maximum(sf: &StandardForm, qs: &[Operator], samples: usize, seed: u64, bound: f64) -> (f64, usize) {
    let mut rng = seeded(seed);
    let mut max_value: f64 = 0.0;
    let mut violations = 0;
    for times in sample_region(&mut rng, qs.len(), samples, 2.0) {
        let v = sf.norm(&multi_time_unchecked(sf, qs, &times));
        max_value = max_value.max(v);
        if v > bound * (1.0 + 1e-10) {
            violations += 1;
        }
    }
    (max_value, violations)
}

/// Samples `||A^n(z)Ω||` over the closed region against [`split_bound`].
pub fn tr1_bound_check(sf: &StandardForm, p: PIndex, qs: &[Operator], samples: usize, seed: u64) -> Result<BoundReport> {
    let alg = sf.algebra();
    for q in qs {
        alg.check(q)?;
    }
    let state = p_continuous_state(alg, sf.state(), p)?;
    let bound = split_bound(alg, &state, qs)?;
    let (max_value, violations) = sampled_maximum(sf, qs, samples, seed, bound);
    Ok(BoundReport {
        theorem: BoundTheorem::Split,
        n: qs.len(),
        hypothesis_holds: true,
        bound,
        max_value,
        samples,
        violations,
    })
}

/// Checks `||Q_i*||_{2mq} = ||Q_i||_{2mq}` for `1 ≤ m ≤ n` (`J Q J` acts as
/// right multiplication by `Q*`), then samples against [`j_symmetric_bound`].
/// When the hypothesis fails no samples are taken.
pub fn tr0_bound_check(sf: &StandardForm, p: PIndex, qs: &[Operator], samples: usize, seed: u64) -> Result<BoundReport> {
    let alg = sf.algebra();
    let n = qs.len();
    let state = p_continuous_state(alg, sf.state(), p)?;
    let mut hypothesis_holds = true;
    for q in qs {
        alg.check(q)?;
        for m in 1..=n {
            let e = index(2.0 * m as f64, state.q)?;
            let direct = lp_norm(alg, q, e)?;
            let reflected = lp_norm(alg, &q.adjoint(), e)?;
            if (direct - reflected).abs() > 1e-11 * direct.max(1.0) {
                hypothesis_holds = false;
            }
        }
    }
    let bound = j_symmetric_bound(alg, &state, qs)?;
    let (max_value, violations, samples) = if hypothesis_holds {
        let (m, v) = sampled_maximum(sf, qs, samples, seed, bound);
        (m, v, samples)
    } else {
        (0.0, 0, 0)
    };
    Ok(BoundReport { theorem: BoundTheorem::JSymmetric, n, hypothesis_holds, bound, max_value, samples, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Block;
    use crate::modular::build_standard_form;
    use crate::sample::{random_density, random_hermitian_operator, random_operator};

    fn alg() -> BlockAlgebra {
        BlockAlgebra::new(vec![Block { dim: 3, weight: 0.7 }, Block { dim: 2, weight: 1.6 }]).unwrap()
    }

    #[test]
    fn gibbs_state_normalization() {
        let alg = alg();
        let mut rng = seeded(1);
        let h = random_hermitian_operator(&mut rng, &alg);
        let sys = KmsSystem::gibbs(&alg, &h, 1.3).unwrap();
        let direct = h.apply_fn(|x| (-1.3 * x).exp()).unwrap();
        let z = trace_unchecked(&alg, &direct).re;
        assert!((sys.partition() - z).abs() < 1e-12 * z);
        assert!((sys.state().rho() - &direct.scale_real(1.0 / z)).fro_norm() < 1e-13);
        // Large β stays finite.
        let cold = KmsSystem::gibbs(&alg, &h.scale_real(1e3), 50.0).unwrap();
        assert!(cold.state().rho().max_abs().is_finite());
    }

    #[test]
    fn kms_function_trivial_cases() {
        let alg = alg();
        let mut rng = seeded(2);
        let h = random_hermitian_operator(&mut rng, &alg);
        let sys = KmsSystem::gibbs(&alg, &h, 0.8).unwrap();
        let a = random_operator(&mut rng, &alg);
        let id = Operator::identity(&alg);
        let omega_a = sys.expectation(&a);
        for z in [C64::new(0.3, -0.2), C64::new(-1.0, 0.8)] {
            assert!((kms_function(&sys, &a, &id, z).unwrap() - omega_a).norm() < 1e-13);
            assert!((kms_function(&sys, &id, &id, z).unwrap() - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn two_level_closed_form() {
        // H = diag(0, ε), β: ρ = diag(1, e^{-βε})/Z. For A = E_12, B = E_21,
        // F(z) = ρ_11 e^{iz(0 - ε)}... with A_{12} B_{21}: m = 1, j = 2,
        // F(z) = ρ_11 e^{iz(ε - 0)}.
        let alg = BlockAlgebra::full(2);
        let (eps, beta) = (0.7, 1.9);
        let h = Operator::new(vec![Matrix::from_real_diag(&[0.0, eps])]);
        let sys = KmsSystem::gibbs(&alg, &h, beta).unwrap();
        let a = Operator::new(vec![Matrix::unit(2, 0, 1)]);
        let b = Operator::new(vec![Matrix::unit(2, 1, 0)]);
        let z_part = 1.0 + (-beta * eps).exp();
        for z in [C64::new(0.4, 0.0), C64::new(-0.3, 1.1), C64::new(2.0, beta)] {
            let expected = (C64::new(0.0, 1.0) * z * eps).exp() / z_part;
            assert!((kms_function(&sys, &a, &b, z).unwrap() - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn boundary_identities() {
        let mut rng = seeded(3);
        let times: Vec<f64> = (0..7).map(|k| -2.0 + 0.7 * k as f64).collect();
        for beta in [0.5, 1.0, 2.0] {
            let alg = BlockAlgebra::full(6);
            let h = random_hermitian_operator(&mut rng, &alg);
            let sys = KmsSystem::gibbs(&alg, &h, beta).unwrap();
            let a = random_operator(&mut rng, &alg);
            let b = random_operator(&mut rng, &alg);
            let r = kms_boundary_check(&sys, &a, &b, &times).unwrap();
            assert!(r.passed(1e-10), "{r:?}");
        }
        // β = 0: tracial state, both identities reduce to cyclicity.
        let alg = alg();
        let h = random_hermitian_operator(&mut rng, &alg);
        let sys = KmsSystem::gibbs(&alg, &h, 0.0).unwrap();
        let a = random_operator(&mut rng, &alg);
        let b = random_operator(&mut rng, &alg);
        assert!(kms_boundary_check(&sys, &a, &b, &times).unwrap().passed(1e-10));
    }

    #[test]
    fn modular_condition_at_minus_one() {
        let alg = alg();
        let mut rng = seeded(4);
        let state = random_density(&mut rng, &alg, 0.05);
        let sys = KmsSystem::modular(&alg, &state).unwrap();
        let sf = build_standard_form(&alg, &state).unwrap();
        let a = random_operator(&mut rng, &alg);
        let b = random_operator(&mut rng, &alg);
        let r = kms_boundary_check(&sys, &a, &b, &[-1.0, 0.0, 0.4, 2.5]).unwrap();
        assert!(r.passed(1e-10) && r.beta == -1.0, "{r:?}");
        // The dynamics is the modular flow.
        let t = C64::new(0.9, 0.0);
        assert!((&sys.evolve(t, &b).unwrap() - &sf.modular_flow(t, &b)).fro_norm() < 1e-11);
    }

    #[test]
    fn gibbs_dynamics_preserves_the_state() {
        let alg = alg();
        let mut rng = seeded(5);
        let h = random_hermitian_operator(&mut rng, &alg);
        let sys = KmsSystem::gibbs(&alg, &h, 1.0).unwrap();
        let a = random_operator(&mut rng, &alg);
        let moved = sys.evolve(C64::new(1.7, 0.0), &a).unwrap();
        assert!((sys.expectation(&moved) - sys.expectation(&a)).norm() < 1e-11);
    }

    #[test]
    fn p_continuous_representers() {
        let alg = BlockAlgebra::full(4);
        let mixed = DensityState::tracial(&alg);
        for q in [1.5, 2.0, 4.0] {
            let p = PIndex::new(q / (q - 1.0)).unwrap();
            let s = p_continuous_state(&alg, &mixed, p).unwrap();
            assert!((s.norm_q - 4f64.powf(1.0 / s.q.value() - 1.0)).abs() < 1e-14);
        }
        let weighted = BlockAlgebra::new(vec![Block { dim: 2, weight: 0.5 }, Block { dim: 1, weight: 2.0 }]).unwrap();
        let sigma = Operator::new(vec![
            Matrix::from_real_rows(&[&[0.3, 0.1], &[0.1, 0.2]]),
            Matrix::from_real_rows(&[&[0.5]]),
        ]);
        let s = p_continuous_from_plain_density(&weighted, &sigma, PIndex::new(2.0).unwrap()).unwrap();
        for a in weighted.matrix_units() {
            let plain: C64 = sigma.blocks.iter().zip(&a.blocks).map(|(x, y)| (x * y).trace()).sum();
            assert!((s.evaluate(&weighted, &a) - plain).norm() < 1e-15);
        }
        assert!((s.representer.blocks[0].get(0, 0).re - 0.6).abs() < 1e-15);
        assert!((s.representer.blocks[1].get(0, 0).re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn multi_time_vectors() {
        let alg = alg();
        let mut rng = seeded(6);
        let state = random_density(&mut rng, &alg, 0.1);
        let sf = build_standard_form(&alg, &state).unwrap();
        let id = Operator::identity(&alg);
        let one = MultiTimeSpec::new(vec![id.clone()], vec![C64::new(0.8, -0.3)]).unwrap();
        assert!((&multi_time_vector(&sf, &one).unwrap() - sf.omega()).fro_norm() < 1e-13);

        let q1 = random_operator(&mut rng, &alg);
        let q2 = random_operator(&mut rng, &alg);
        let zero = MultiTimeSpec::new(vec![q1.clone(), q2.clone()], vec![C64::new(0.0, 0.0); 2]).unwrap();
        let expected = &(&q2 * &q1) * sf.omega();
        assert!((&multi_time_vector(&sf, &zero).unwrap() - &expected).fro_norm() < 1e-13);

        let outside = MultiTimeSpec::new(vec![q1.clone(), q2.clone()], vec![C64::new(0.0, -0.4), C64::new(0.0, -0.2)]).unwrap();
        assert!(matches!(multi_time_vector(&sf, &outside), Err(LabError::Region(_))));
        let upper = MultiTimeSpec::new(vec![q1.clone()], vec![C64::new(0.0, 0.1)]).unwrap();
        assert!(multi_time_vector(&sf, &upper).is_err());

        // Diagonal Q commuting with a diagonal ρ: the vector is Q_2 Q_1 ρ^{1/2}.
        let diag_alg = BlockAlgebra::diagonal(&[1.0, 0.5]).unwrap();
        let diag_state = DensityState::normalized(&diag_alg, &Operator::from_diagonal(&diag_alg, &[0.3, 0.6]).unwrap()).unwrap();
        let dsf = build_standard_form(&diag_alg, &diag_state).unwrap();
        let d1 = Operator::from_diagonal(&diag_alg, &[2.0, -1.0]).unwrap();
        let d2 = Operator::from_diagonal(&diag_alg, &[0.5, 3.0]).unwrap();
        let spec = MultiTimeSpec::new(vec![d1, d2], vec![C64::new(0.3, -0.1), C64::new(-1.0, -0.25)]).unwrap();
        let v = multi_time_vector(&dsf, &spec).unwrap();
        let rho_half = [0.5f64.sqrt(), 1.0];
        assert!((v.blocks[0].get(0, 0).re - 1.0 * rho_half[0]).abs() < 1e-13);
        assert!((v.blocks[1].get(0, 0).re - (-3.0) * rho_half[1]).abs() < 1e-13);
    }

    #[test]
    fn multi_time_analyticity() {
        let alg = alg();
        let mut rng = seeded(7);
        let state = random_density(&mut rng, &alg, 0.2);
        let sf = build_standard_form(&alg, &state).unwrap();
        let qs: Vec<Operator> = (0..3).map(|_| random_operator(&mut rng, &alg)).collect();
        let times = vec![C64::new(0.3, -0.1), C64::new(-0.6, -0.15), C64::new(1.2, -0.05)];
        assert!(cauchy_riemann_residual(&sf, &qs, &times, 1e-4) < 1e-6);
    }

    #[test]
    fn maximally_mixed_equality_case() {
        let alg = BlockAlgebra::full(5);
        let sf = build_standard_form(&alg, &DensityState::tracial(&alg)).unwrap();
        let id = vec![Operator::identity(&alg)];
        for p in [1.5, 2.0, 3.0] {
            let p = PIndex::new(p).unwrap();
            let r = tr1_bound_check(&sf, p, &id, 50, 1).unwrap();
            assert!((r.bound - 1.0).abs() < 1e-12 && (r.max_value - 1.0).abs() < 1e-12, "{r:?}");
            // The literal head index 4nq gives d^{-1/(4q)} < 1 and is violated.
            let state = p_continuous_state(&alg, sf.state(), p).unwrap();
            let literal = split_bound_literal(&alg, &state, &id).unwrap();
            assert!(literal < 1.0 - 1e-3);
        }
    }

    #[test]
    fn bounds_hold_on_random_instances() {
        let mut rng = seeded(8);
        for n in 1..=3 {
            let alg = crate::sample::random_algebra(&mut rng, 5, 2);
            let state = random_density(&mut rng, &alg, 0.05);
            let sf = build_standard_form(&alg, &state).unwrap();
            let qs: Vec<Operator> = (0..n).map(|_| random_operator(&mut rng, &alg)).collect();
            let p = PIndex::new(2.0).unwrap();
            let r1 = tr1_bound_check(&sf, p, &qs, 200, n as u64).unwrap();
            assert!(r1.passed(), "{r1:?}");
            let r0 = tr0_bound_check(&sf, p, &qs, 200, n as u64).unwrap();
            assert!(r0.passed(), "{r0:?}");
        }
        let alg = BlockAlgebra::full(2);
        let sf = build_standard_form(&alg, &DensityState::tracial(&alg)).unwrap();
        let zero = vec![Operator::zeros(&alg), Operator::identity(&alg)];
        let r = tr1_bound_check(&sf, PIndex::new(2.0).unwrap(), &zero, 20, 1).unwrap();
        assert_eq!(r.max_value, 0.0);
    }

    #[test]
    fn region_samples_stay_in_region() {
        let mut rng = seeded(9);
        for n in 1..=4 {
            let pts = sample_region(&mut rng, n, 100, 2.0);
            assert!(pts.iter().all(|z| in_closed_region(z)));
            assert!(pts.iter().any(|z| z.iter().any(|w| w.im == -0.5)));
        }
    }
}
