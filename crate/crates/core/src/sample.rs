//! Seeded random instances for property checks and the verification suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{Block, BlockAlgebra, DensityState, Operator};
use crate::matcore::{matrix_function_complex, Matrix, C64};

pub type LabRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Ginibre matrix with standard complex normal entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Matrix::from_fn(rows, cols, |_, _| C64::new(gaussian(rng) * s, gaussian(rng) * s))
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> Matrix {
    random_matrix(rng, n, n).hermitian_part()
}

/// Haar-like unitary `exp(i H)` with a random hermitian `H` of unit-ish scale.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> Matrix {
    let h = random_hermitian(rng, n).scale_real(2.0);
    matrix_function_complex(&h, |x| C64::new(0.0, x).exp()).expect("hermitian input")
}

/// `C* C + floor`, strictly positive.
pub fn random_positive(rng: &mut impl Rng, n: usize, floor: f64) -> Matrix {
    let c = random_matrix(rng, n, n);
    &(&c.adjoint() * &c) + &Matrix::identity(n).scale_real(floor)
}

/// A block algebra with `1..=max_blocks` blocks whose total dimension does not
/// exceed `max_dim`, with weights drawn from `[0.25, 2]`.
pub fn random_algebra(rng: &mut impl Rng, max_dim: usize, max_blocks: usize) -> BlockAlgebra {
    let max_dim = max_dim.max(1);
    let mut remaining = rng.random_range(1..=max_dim);
    let mut blocks = Vec::new();
    while remaining > 0 && blocks.len() < max_blocks.max(1) {
        let dim = if blocks.len() + 1 == max_blocks.max(1) { remaining } else { rng.random_range(1..=remaining) };
        blocks.push(Block { dim, weight: rng.random_range(0.25..2.0) });
        remaining -= dim;
    }
    BlockAlgebra::new(blocks).expect("positive weights")
}

pub fn random_operator(rng: &mut impl Rng, alg: &BlockAlgebra) -> Operator {
    Operator::new(alg.blocks().iter().map(|b| random_matrix(rng, b.dim, b.dim)).collect())
}

pub fn random_hermitian_operator(rng: &mut impl Rng, alg: &BlockAlgebra) -> Operator {
    Operator::new(alg.blocks().iter().map(|b| random_hermitian(rng, b.dim)).collect())
}

pub fn random_positive_operator(rng: &mut impl Rng, alg: &BlockAlgebra, floor: f64) -> Operator {
    Operator::new(alg.blocks().iter().map(|b| random_positive(rng, b.dim, floor)).collect())
}

pub fn random_unitary_operator(rng: &mut impl Rng, alg: &BlockAlgebra) -> Operator {
    Operator::new(alg.blocks().iter().map(|b| random_unitary(rng, b.dim)).collect())
}

/// Faithful density with condition number kept moderate by `floor`.
pub fn random_density(rng: &mut impl Rng, alg: &BlockAlgebra, floor: f64) -> DensityState {
    let p = random_positive_operator(rng, alg, floor);
    DensityState::normalized(alg, &p).expect("positive and faithful")
}
