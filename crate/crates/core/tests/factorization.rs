use opspace_core::factorize::{
    amplified_ratio, cb_lower_matrix_map, distance_to_oh, full_matrix_space, project_onto, BoundKind, DistanceOptions,
};
use opspace_core::linalg::random_matrix;
use opspace_core::models::{model_space, row_space_square};
use opspace_core::summing::{pi2oh_upper_certificate, CertificateOptions};
use opspace_core::{CMat, Matrix, ModelKind, OperatorSpace, Presentation, SearchParams, SpaceLabel, TargetMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn light() -> DistanceOptions {
    DistanceOptions { restarts: 3, lewis_rounds: 3, local_evaluations: 0, ..DistanceOptions::default() }
}

#[test]
fn oh_is_at_distance_one() {
    let s = model_space(ModelKind::Oh, 3).unwrap();
    let r = distance_to_oh(&s, &light()).unwrap();
    assert_eq!(r.forward_kind, BoundKind::Exact);
    assert!((r.product - 1.0).abs() < 1e-12, "{}", r.product);
}

#[test]
fn report_replays_after_serialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let basis = (0..2).map(|_| CMat::new(random_matrix(&mut rng, 2, 2)).unwrap()).collect();
    let s = OperatorSpace::from(Presentation::new(basis, SpaceLabel::Generic).unwrap()).into_arc();
    let r = distance_to_oh(&s, &light()).unwrap();
    let (fwd, back) = r.replay(&s).unwrap();
    assert!((fwd * back - r.product).abs() <= 1e-9 * r.product);
    assert!(r.product >= 1.0 - 1e-9);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["product"].as_f64().unwrap(), r.product);
    assert!(json["certificate"]["constant"].as_f64().is_some());
}

#[test]
fn projection_fixes_the_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let basis = (0..3).map(|_| CMat::new(random_matrix(&mut rng, 3, 3)).unwrap()).collect();
    let s = OperatorSpace::from(Presentation::new(basis, SpaceLabel::Generic).unwrap()).into_arc();
    let cert = pi2oh_upper_certificate(&s, &TargetMap::Identity, &CertificateOptions::default()).unwrap();
    let p = project_onto(&s, &cert.mixture).unwrap();
    assert!(p.inclusion_residual <= 1e-10 && p.idempotence_residual <= 1e-10);
    // Any ratio at any level is a lower bound, so the search can only improve on a probe.
    let search = SearchParams { restarts: 3, iterations: 300, ..SearchParams::default() };
    let prof = cb_lower_matrix_map(&p.map, 2, &search).unwrap();
    let w = random_matrix(&mut rng, 9, 4);
    let probe = amplified_ratio(&p.map, &w, 2).unwrap();
    assert!(prof.best() >= probe - 1e-9, "{} < {probe}", prof.best());
    assert!(prof.values[0] >= 1.0 - 1e-9, "a projection has norm at least one");
}

#[test]
fn identity_of_matrices_is_completely_contractive() {
    let m2 = OperatorSpace::from(full_matrix_space(2, 2)).into_arc();
    let id = opspace_core::factorize::LinearMapCoeff::new(m2.clone(), m2, Matrix::identity(4, 4)).unwrap();
    let search = SearchParams { restarts: 2, iterations: 200, ..SearchParams::default() };
    let prof = cb_lower_matrix_map(&id, 3, &search).unwrap();
    assert!(prof.values.iter().all(|v| (v - 1.0).abs() < 1e-9), "{:?}", prof.values);
}

#[test]
fn concrete_space_required_for_projection() {
    let oh = model_space(ModelKind::Oh, 2).unwrap();
    let r2 = OperatorSpace::from(row_space_square(2)).into_arc();
    let cert = pi2oh_upper_certificate(&r2, &TargetMap::Identity, &CertificateOptions::default()).unwrap();
    assert!(project_onto(&oh, &cert.mixture).is_err());
}
