//! Seeded fixtures shared by the benchmarks.

use std::sync::Arc;

use opspace_core::linalg::random_matrix;
use opspace_core::models::model_space;
use opspace_core::{CMat, Matrix, ModelKind, OperatorSpace, Presentation, SpaceLabel, TupleOfElements};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` seeded random elements of the model space of dimension `n`.
pub fn model_tuple(kind: ModelKind, n: usize, k: usize, seed: u64) -> TupleOfElements {
    let space = model_space(kind, n).expect("valid model");
    TupleOfElements::new(space, random_matrix(&mut rng(seed), k, n)).expect("shapes agree")
}

/// A seeded `dim`-dimensional subspace of `M_d`.
pub fn random_subspace(d: usize, dim: usize, seed: u64) -> Arc<OperatorSpace> {
    let mut r = rng(seed);
    let basis = (0..dim).map(|_| CMat::new(random_matrix(&mut r, d, d)).expect("finite")).collect();
    OperatorSpace::from(Presentation::new(basis, SpaceLabel::Generic).expect("generic basis is independent")).into_arc()
}

pub fn random_square(d: usize, seed: u64) -> Matrix {
    random_matrix(&mut rng(seed), d, d)
}
