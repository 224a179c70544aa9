//! Cross-module checks of the summing-norm sandwich through the public API.

use std::sync::Arc;

use opspace_core::linalg::{op_norm, random_matrix};
use opspace_core::models::model_space;
use opspace_core::summing::{
    pi2oh_lower, pi2oh_lower_profile, pi2oh_upper_certificate, verify_certificate, witness_value, CertificateOptions,
    UpperCertificate,
};
use opspace_core::{
    gram_tuple, min_norm, CMat, ModelKind, OperatorSpace, Presentation, SearchParams, SpaceLabel, TargetMap,
    TupleOfElements,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_space(rng: &mut ChaCha8Rng, d1: usize, d2: usize, dim: usize) -> Arc<OperatorSpace> {
    let basis = (0..dim).map(|_| CMat::new(random_matrix(rng, d1, d2)).unwrap()).collect();
    OperatorSpace::from(Presentation::new(basis, SpaceLabel::Generic).unwrap()).into_arc()
}

fn quick() -> SearchParams {
    SearchParams { restarts: 4, iterations: 300, ..SearchParams::default() }
}

/// `Σ_m λ_m φ_m(Σ x_i ⊗ x̄_i)`, evaluated atom by atom.
fn mixture_value(cert: &UpperCertificate, t: &TupleOfElements) -> f64 {
    let u = gram_tuple(t);
    cert.mixture.atoms.iter().map(|a| a.weight * a.functional.evaluate(&u).unwrap()).sum()
}

/// Pietsch chain on a tuple: `Σ ‖x_i‖² ≤ C² φ(u) ≤ C² min_norm`, with the
/// middle term computed from the stored atoms rather than the Gram matrix.
fn check_chain(space: &Arc<OperatorSpace>, cert: &UpperCertificate, t: &TupleOfElements) {
    let lhs = t.sum_sq_norms();
    let phi = mixture_value(cert, t);
    let mn = min_norm(t);
    let c2 = cert.constant * cert.constant;
    let slack = 1e-8 * (1.0 + lhs);
    assert!(lhs <= c2 * phi + slack, "{space:?}: {lhs} > C² φ = {}", c2 * phi);
    assert!(phi <= mn * (1.0 + 1e-8) + 1e-12, "atom mixture exceeds the min norm: {phi} > {mn}");
}

#[test]
fn certificates_dominate_random_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut spaces = vec![
        model_space(ModelKind::Row, 3).unwrap(),
        model_space(ModelKind::Column, 4).unwrap(),
        model_space(ModelKind::Clifford, 3).unwrap(),
    ];
    spaces.push(random_space(&mut rng, 2, 3, 3));
    spaces.push(random_space(&mut rng, 3, 3, 2));
    for s in &spaces {
        let cert = pi2oh_upper_certificate(s, &TargetMap::Identity, &CertificateOptions::default()).unwrap();
        for k in [1, 2, 5] {
            for _ in 0..20 {
                let t = TupleOfElements::new(s.clone(), random_matrix(&mut rng, k, s.dim())).unwrap();
                check_chain(s, &cert, &t);
            }
        }
    }
}

#[test]
fn witness_value_replays_from_tuple() {
    let s = model_space(ModelKind::Clifford, 4).unwrap();
    let w = pi2oh_lower(&s, &TargetMap::Identity, 3, &quick()).unwrap();
    let back = TupleOfElements::new(s.clone(), w.tuple.coeffs().clone()).unwrap();
    assert!((witness_value(&back, &TargetMap::Identity) - w.value).abs() <= 1e-9);
    assert!((min_norm(&back) - 1.0).abs() <= 1e-9, "witness is normalized");
}

#[test]
fn certificate_json_survives_and_reverifies() {
    let s = model_space(ModelKind::Row, 4).unwrap();
    let cert = pi2oh_upper_certificate(&s, &TargetMap::Identity, &CertificateOptions::default()).unwrap();
    let back = UpperCertificate::from_json(&cert.to_json()).unwrap();
    assert_eq!(back.constant, cert.constant);
    let eig = verify_certificate(&s, &TargetMap::Identity, &back).unwrap();
    assert!(eig >= -1e-9 * (1.0 + op_norm(back.majorant.matrix())), "{eig}");
    // A smaller constant must fail the same check.
    let mut shrunk = back.clone();
    shrunk.constant *= 0.9;
    assert!(verify_certificate(&s, &TargetMap::Identity, &shrunk).unwrap() < 0.0);
}

#[test]
fn mapped_target_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_space(&mut rng, 2, 2, 3);
    let u = CMat::new(random_matrix(&mut rng, 2, 3)).unwrap();
    let target = TargetMap::Coefficients(u);
    let lower = pi2oh_lower(&s, &target, 3, &quick()).unwrap().value;
    let cert = pi2oh_upper_certificate(&s, &target, &CertificateOptions::default()).unwrap();
    assert!(lower <= cert.constant + 1e-6, "{lower} > {}", cert.constant);
    assert!(verify_certificate(&s, &target, &cert).unwrap() >= -1e-8);
}

#[test]
fn target_shape_is_checked() {
    let s = model_space(ModelKind::Row, 3).unwrap();
    let bad = TargetMap::Coefficients(CMat::new(random_matrix(&mut ChaCha8Rng::seed_from_u64(1), 2, 2)).unwrap());
    assert!(pi2oh_lower(&s, &bad, 2, &quick()).is_err());
    assert!(pi2oh_upper_certificate(&s, &bad, &CertificateOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn profile_is_monotone_and_below_ceiling(seed in 0u64..10_000, d1 in 1usize..4, d2 in 1usize..4, dim in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = dim.min(d1 * d2);
        let s = random_space(&mut rng, d1, d2, dim);
        let search = SearchParams { seed, ..quick() };
        let prof = pi2oh_lower_profile(&s, &TargetMap::Identity, dim + 1, &search).unwrap();
        for w in prof.windows(2) {
            prop_assert!(w[1].value >= w[0].value - 1e-12);
        }
        let top = prof.last().unwrap().value;
        prop_assert!(top <= (dim as f64).sqrt() * (1.0 + 1e-6), "{} above sqrt({})", top, dim);
        prop_assert!(top >= 1.0 - 1e-9, "a single element already gives 1");
    }
}
