//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p opspace-core --test acceptance`; pass criterion
//! numbers after `--` to run a subset.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use opspace_core::factorize::{
    cb_lower_matrix_map, distance_to_oh, full_matrix_space, pairwise_distance, project_onto, DistanceOptions,
    LinearMapCoeff,
};
use opspace_core::linalg::{random_matrix, CMat, Matrix, C64};
use opspace_core::minnorm::{min_norm, min_norm_psd_restricted, PsdAscentOptions};
use opspace_core::models::{
    clifford_identity_suite, clifford_ratio_probe, closed_form_min_norm, model_space, row_space_square, ModelKind,
};
use opspace_core::space::{OperatorSpace, Presentation, SpaceLabel, TupleOfElements};
use opspace_core::summing::{
    pi2_lower_model, pi2oh_lower, pi2oh_upper_certificate, verify_certificate, CertificateOptions, SearchParams,
    TargetMap,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TIME_LIMIT_S: f64 = 60.0;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Every lower estimate computed anywhere in the suite, for the ceiling check.
static LOWERS: Mutex<Vec<(String, usize, f64)>> = Mutex::new(Vec::new());

fn record(label: &str, n: usize, value: f64) {
    LOWERS.lock().unwrap().push((label.to_string(), n, value));
}

fn oh(n: usize) -> Arc<OperatorSpace> {
    OperatorSpace::Oh(n).into_arc()
}

fn random_subspace(rng: &mut ChaCha8Rng, d: usize, dim: usize) -> Arc<OperatorSpace> {
    let basis = (0..dim).map(|_| CMat::new(random_matrix(rng, d, d)).unwrap()).collect();
    OperatorSpace::from(Presentation::new(basis, SpaceLabel::Generic).unwrap()).into_arc()
}

fn criterion_1() -> Outcome {
    let search = SearchParams::default();
    let blind = SearchParams { restarts: 8, include_canonical: false, ..search };
    let opts = CertificateOptions::default();
    let mut pass = true;
    let mut worst: (f64, f64) = (f64::INFINITY, 0.0);
    for kind in [ModelKind::Row, ModelKind::Column] {
        for n in 2..=5 {
            let s = model_space(kind, n).unwrap();
            let exact = (n as f64).powf(0.25);
            let lower = pi2oh_lower(&s, &TargetMap::Identity, n, &search).unwrap().value;
            record(&kind.to_string(), n, lower);
            // Random starts alone must also land in the band.
            let blind = pi2oh_lower(&s, &TargetMap::Identity, n, &blind).unwrap().value;
            record(&kind.to_string(), n, blind);
            let upper = pi2oh_upper_certificate(&s, &TargetMap::Identity, &opts).unwrap().constant;
            pass &= lower.min(blind) >= 0.98 * exact && lower.max(blind) <= exact + 1e-6 && upper <= 1.02 * exact;
            worst.0 = worst.0.min(lower.min(blind) / exact);
            worst.1 = worst.1.max(upper / exact);
        }
    }
    Outcome { pass, detail: format!("min lower/n^(1/4) = {:.9}, max upper/n^(1/4) = {:.9}", worst.0, worst.1) }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_rel = 0.0f64;
    for trial in 0..100 {
        let n = 2 + trial % 5;
        let k = 1 + trial % 6;
        let kind = if trial % 2 == 0 { ModelKind::Row } else { ModelKind::Column };
        let a = random_matrix(&mut rng, k, n);
        let t = TupleOfElements::new(model_space(kind, n).unwrap(), a.clone()).unwrap();
        let closed = closed_form_min_norm(kind, &a).unwrap();
        max_rel = max_rel.max((min_norm(&t) - closed).abs() / closed);
    }
    let mut max_abs = 0.0f64;
    for n in 2..=6 {
        let t = TupleOfElements::canonical(model_space(ModelKind::Row, n).unwrap());
        max_abs = max_abs.max((min_norm(&t) - (n as f64).sqrt()).abs());
    }
    Outcome {
        pass: max_rel <= 1e-8 && max_abs <= 1e-10,
        detail: format!("max rel err {max_rel:.2e}, canonical R_n err {max_abs:.2e}"),
    }
}

fn criterion_3() -> Outcome {
    let search = SearchParams::default();
    let blind = SearchParams { restarts: 8, include_canonical: false, ..search };
    let mut pass = true;
    let mut worst_rel = 0.0f64;
    for n in 2..=4 {
        for params in [search, blind] {
            let v = pi2oh_lower(&oh(n), &TargetMap::Identity, n, &params).unwrap().value;
            record("oh", n, v);
            let rel = (v - (n as f64).sqrt()).abs() / (n as f64).sqrt();
            worst_rel = worst_rel.max(rel);
            pass &= rel <= 0.01;
        }
    }
    let mut worst_pi2 = 0.0f64;
    for kind in [ModelKind::Row, ModelKind::Column, ModelKind::Oh] {
        for n in 1..=5 {
            for k in 1..=6 {
                let v = pi2_lower_model(kind, n, k, &search).unwrap();
                worst_pi2 = worst_pi2.max((v - (n.min(k) as f64).sqrt()).abs());
            }
        }
    }
    pass &= worst_pi2 <= 1e-10;
    Outcome { pass, detail: format!("OH rel err {worst_rel:.2e}, pi_2 err {worst_pi2:.2e}") }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = PsdAscentOptions::default();
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let d = 1 + trial % 6;
        let k = 1 + (trial / 6) % 6;
        let dim = (1 + trial % 4).min(d * d);
        let s = random_subspace(&mut rng, d, dim);
        let t = TupleOfElements::new(s, random_matrix(&mut rng, k, dim)).unwrap();
        let exact = min_norm(&t);
        let psd = min_norm_psd_restricted(&t, &opts).unwrap().value;
        worst = worst.max((exact - psd).abs());
    }
    Outcome { pass: worst <= 1e-6, detail: format!("max |psd - min_norm| = {worst:.2e}") }
}

fn clifford_search(n: usize) -> SearchParams {
    // Superoperators reach 64×64 for n ≥ 5; fewer restarts keep the run inside the budget.
    if n >= 5 {
        SearchParams { restarts: 6, iterations: 400, seed: 5, ..SearchParams::default() }
    } else {
        SearchParams { restarts: 12, iterations: 1000, seed: 5, ..SearchParams::default() }
    }
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for n in 2..=6 {
        let suite = clifford_identity_suite(n, 200, n as u64);
        let res = suite
            .anticommutation_residual
            .max(suite.sum_identity_residual)
            .max(suite.trace_residual)
            .max(suite.square_residual)
            .max(suite.hermitian_residual);
        pass &= suite.pass && res <= 1e-12;
        let search = clifford_search(n);
        let probe = clifford_ratio_probe(n, 10_000, &search).unwrap();
        pass &= probe.min_ratio >= 0.5 - 1e-9;
        let s = model_space(ModelKind::Clifford, n).unwrap();
        let lower = probe.descent_value;
        record("clifford", n, lower);
        let upper = pi2oh_upper_certificate(&s, &TargetMap::Identity, &CertificateOptions::default()).unwrap().constant;
        pass &= lower >= 1.0 - 1e-6 && upper <= 2f64.sqrt() + 1e-6 && lower <= upper + 1e-6;
        notes.push(format!("n={n}: ratio {:.4}, [{lower:.4}, {upper:.4}]", probe.min_ratio));
    }
    Outcome { pass, detail: notes.join("; ") }
}

fn criterion_6() -> Outcome {
    let search = SearchParams { restarts: 8, iterations: 800, ..SearchParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..6 {
        let d = 2 + trial % 2;
        let dim = 2 + trial % 3;
        let s = random_subspace(&mut rng, d, dim);
        for k in [dim, 2 * dim] {
            record("random", dim, pi2oh_lower(&s, &TargetMap::Identity, k, &search).unwrap().value);
        }
    }
    let m2 = OperatorSpace::from(full_matrix_space(2, 2)).into_arc();
    record("M_2", 4, pi2oh_lower(&m2, &TargetMap::Identity, 4, &search).unwrap().value);
    for n in 2..=4 {
        record("oh", n, pi2oh_lower(&oh(n), &TargetMap::Identity, 2 * n, &search).unwrap().value);
    }
    let all = LOWERS.lock().unwrap();
    let worst = all
        .iter()
        .map(|(_, n, v)| v / (*n as f64).sqrt())
        .fold(0.0, f64::max);
    Outcome {
        pass: worst <= 1.0 + 1e-6,
        detail: format!("{} estimates, max lower/sqrt(n) = {worst:.9}", all.len()),
    }
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let opts = DistanceOptions::default();
    for n in 2..=4 {
        let s = model_space(ModelKind::Row, n).unwrap();
        let r = distance_to_oh(&s, &opts).unwrap();
        pass &= r.product <= (n as f64).sqrt() + 1e-6 && r.product >= 1.0 - 1e-9;
        notes.push(format!("R_{n}: {:.7}", r.product));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let quick = DistanceOptions { restarts: 6, lewis_rounds: 6, local_evaluations: 0, ..DistanceOptions::default() };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s = random_subspace(&mut rng, 3, 2);
        let r = distance_to_oh(&s, &quick).unwrap();
        worst = worst.max(r.product);
        pass &= r.product >= 1.0 - 1e-9;
    }
    pass &= worst <= 2f64.sqrt() * 1.05;
    notes.push(format!("random M_3 planes: max {worst:.4}"));
    Outcome { pass, detail: notes.join("; ") }
}

fn criterion_8() -> Outcome {
    let r2 = OperatorSpace::from(row_space_square(2)).into_arc();
    let cert = pi2oh_upper_certificate(&r2, &TargetMap::Identity, &CertificateOptions::default()).unwrap();
    let proj = project_onto(&r2, &cert.mixture).unwrap();
    let search = SearchParams { restarts: 8, iterations: 800, ..SearchParams::default() };
    let prof = cb_lower_matrix_map(&proj.map, 4, &search).unwrap();
    let mut t = Matrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            t[(j * 2 + i, i * 2 + j)] = C64::new(1.0, 0.0);
        }
    }
    let m2 = OperatorSpace::from(full_matrix_space(2, 2)).into_arc();
    let transpose = LinearMapCoeff::new(m2.clone(), m2, t).unwrap();
    let tprof = cb_lower_matrix_map(&transpose, 2, &search).unwrap();
    let residual = proj.inclusion_residual.max(proj.idempotence_residual);
    let pass = residual <= 1e-12 && prof.values.iter().all(|&v| v <= 2f64.sqrt() + 1e-6) && tprof.values[1] >= 2.0 - 1e-3;
    Outcome {
        pass,
        detail: format!(
            "residual {residual:.1e}, P levels {:?}, transpose L=2 {:.6}",
            prof.values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
            tprof.values[1]
        ),
    }
}

fn criterion_9() -> Outcome {
    let r = model_space(ModelKind::Row, 2).unwrap();
    let c = model_space(ModelKind::Column, 2).unwrap();
    let rep = pairwise_distance(&r, &c, &DistanceOptions::default()).unwrap();
    Outcome { pass: rep.product <= 2.0 + 1e-6, detail: format!("product {:.9}", rep.product) }
}

fn criterion_10() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 24, failure_persistence: None, ..Config::default() });
    let worst = Mutex::new((f64::NEG_INFINITY, f64::INFINITY));
    let result = runner.run(&(any::<u64>(), 0usize..4), |(seed, kind)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = match kind {
            0 => random_subspace(&mut rng, 2, 2),
            1 => random_subspace(&mut rng, 3, 3),
            2 => model_space(ModelKind::Clifford, 3).unwrap(),
            _ => oh(3),
        };
        let n = space.dim();
        let target = if seed % 2 == 0 {
            TargetMap::Identity
        } else {
            TargetMap::Coefficients(CMat::new(random_matrix(&mut rng, n, n)).unwrap())
        };
        let search = SearchParams { restarts: 4, iterations: 300, seed, ..SearchParams::default() };
        let lower = pi2oh_lower(&space, &target, n, &search).unwrap().value;
        let cert = pi2oh_upper_certificate(&space, &target, &CertificateOptions::default()).unwrap();
        let eig = verify_certificate(&space, &target, &cert).unwrap();
        let mut w = worst.lock().unwrap();
        w.0 = w.0.max(lower - cert.constant);
        w.1 = w.1.min(eig);
        prop_assert!(lower <= cert.constant + 1e-6, "lower {} > upper {}", lower, cert.constant);
        prop_assert!(eig >= -1e-8, "certificate eigenvalue {}", eig);
        Ok(())
    });
    let (gap, eig) = *worst.lock().unwrap();
    Outcome {
        pass: result.is_ok(),
        detail: format!("max lower-upper {gap:.3e}, min eigenvalue {eig:.3e}{}", match result {
            Ok(()) => String::new(),
            Err(e) => format!(", {e}"),
        }),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "row/column values", criterion_1),
        (2, "closed form vs engine", criterion_2),
        (3, "OH values", criterion_3),
        (4, "PSD reduction", criterion_4),
        (5, "Clifford suite", criterion_5),
        (6, "ceiling", criterion_6),
        (7, "distance to OH", criterion_7),
        (8, "projection", criterion_8),
        (9, "pairwise distance", criterion_9),
        (10, "sandwich soundness", criterion_10),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = out.pass && secs <= TIME_LIMIT_S;
        if !pass {
            failed += 1;
        }
        println!("{} criterion {id} ({name}): {} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
