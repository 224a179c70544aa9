//! Maps into and out of OH_n: exact cb norms from OH, certified cb bounds into
//! OH, cb-distance searches, dual-norm factorizations and completely bounded
//! projections onto subspaces of matrix algebras.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    self, hermitian_eigen, hermitian_fn, op_norm, random_matrix, singular_spectrum, top_singular, unvec_rm, CMat,
    Matrix, C64,
};
use crate::minnorm::{cb_norm_from_oh, min_norm};
use crate::search::{self, AscentBudget, Evaluation, RatioProblem};
use crate::space::{OperatorSpace, Presentation, SpaceLabel, TupleOfElements};
use crate::summing::{
    pi2oh_lower, pi2oh_upper_certificate, verify_certificate, CertificateOptions, KMixture, PhiFunctional,
    SearchParams, TargetMap, UpperCertificate,
};

/// `u(Σ a_i b_i) = Σ (U a)_j b′_j` between two spaces.
#[derive(Debug, Clone)]
pub struct LinearMapCoeff {
    pub source: Arc<OperatorSpace>,
    pub target: Arc<OperatorSpace>,
    matrix: Matrix,
}

impl LinearMapCoeff {
    pub fn new(source: Arc<OperatorSpace>, target: Arc<OperatorSpace>, matrix: Matrix) -> Result<Self> {
        if matrix.shape() != (target.dim(), source.dim()) {
            return Err(Error::Shape(format!(
                "map matrix must be {}x{}, got {:?}",
                target.dim(),
                source.dim(),
                matrix.shape()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NotFinite);
        }
        Ok(Self { source, target, matrix })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Smallest singular value when square.
    pub fn min_singular(&self) -> Option<f64> {
        (self.matrix.is_square()).then(|| singular_spectrum(&self.matrix).last().map_or(0.0, |t| t.value))
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = invert(&self.matrix)?;
        Ok(Self { source: self.target.clone(), target: self.source.clone(), matrix: inv })
    }

    pub fn compose(&self, first: &LinearMapCoeff) -> Result<Self> {
        if first.target.dim() != self.source.dim() {
            return Err(Error::DimensionMismatch { expected: self.source.dim(), found: first.target.dim() });
        }
        Ok(Self { source: first.source.clone(), target: self.target.clone(), matrix: &self.matrix * &first.matrix })
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { source: self.source.clone(), target: self.target.clone(), matrix: &self.matrix * c }
    }

    /// Images `u(b_i)` as rows of a tuple in the target.
    pub fn images(&self) -> Result<TupleOfElements> {
        TupleOfElements::new(self.target.clone(), self.matrix.transpose())
    }
}

fn invert(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::NonSquare(m.nrows(), m.ncols()));
    }
    let spec = singular_spectrum(m);
    let (top, bottom) = (spec[0].value, spec.last().map_or(0.0, |t| t.value));
    if !(bottom > 1e-12 * top) {
        return Err(Error::Singular(bottom));
    }
    m.clone().try_inverse().ok_or(Error::Singular(bottom))
}

/// Exact `‖u‖_cb` for a map whose source is the OH model.
pub fn cb_from_oh_exact(m: &LinearMapCoeff) -> Result<f64> {
    if !matches!(m.source.as_ref(), OperatorSpace::Oh(_)) {
        return Err(Error::Unsupported("exact cb norm needs an OH source".into()));
    }
    Ok(cb_norm_from_oh(&m.images()?))
}

/// How a forward bound was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Exact cb norm (OH to OH maps are determined by their operator norm).
    Exact,
    /// Certified (2,oh)-summing constant, an upper bound on the cb norm.
    Certified,
}

#[derive(Debug, Clone, Serialize)]
pub struct CbUpper {
    pub value: f64,
    pub kind: BoundKind,
    pub certificate: Option<UpperCertificate>,
}

/// Sound upper bound on `‖u‖_cb` for `u: E → OH_m`.
pub fn cb_upper_into_oh(m: &LinearMapCoeff, opts: &CertificateOptions) -> Result<CbUpper> {
    if !matches!(m.target.as_ref(), OperatorSpace::Oh(_)) {
        return Err(Error::Unsupported("target must be the OH model".into()));
    }
    if let OperatorSpace::Oh(_) = m.source.as_ref() {
        return Ok(CbUpper { value: op_norm(&m.matrix), kind: BoundKind::Exact, certificate: None });
    }
    let target = TargetMap::Coefficients(CMat::from_trusted(m.matrix.clone()));
    let cert = pi2oh_upper_certificate(&m.source, &target, opts)?;
    Ok(CbUpper { value: cert.constant, kind: BoundKind::Certified, certificate: Some(cert) })
}

/// `‖u⁻¹‖_cb` for `u: E → OH_n` with coefficient matrix `U`.
pub fn backward_exact(space: &Arc<OperatorSpace>, u: &Matrix) -> Result<f64> {
    let inv = invert(u)?;
    let m = LinearMapCoeff::new(OperatorSpace::Oh(space.dim()).into_arc(), space.clone(), inv)?;
    cb_from_oh_exact(&m)
}

#[derive(Debug, Clone, Copy)]
pub struct DistanceOptions {
    pub restarts: usize,
    pub seed: u64,
    pub lewis_rounds: usize,
    pub local_evaluations: usize,
    /// Certificate settings inside the search loop.
    pub search_certificate: CertificateOptions,
    /// Certificate settings for the reported bound.
    pub final_certificate: CertificateOptions,
    pub witness_search: SearchParams,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        let fast = CertificateOptions {
            rounds: 8,
            weight_iterations: 80,
            psd: crate::minnorm::PsdAscentOptions { restarts: 4, max_steps: 400, ..Default::default() },
            ..CertificateOptions::default()
        };
        Self {
            restarts: 16,
            seed: 11,
            lewis_rounds: 30,
            local_evaluations: 120,
            search_certificate: fast,
            final_certificate: CertificateOptions::default(),
            witness_search: SearchParams { restarts: 4, iterations: 300, ..SearchParams::default() },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    pub label: SpaceLabel,
    pub n: usize,
    /// `U: E → OH_n` in coefficient bases.
    pub u: CMat,
    pub forward_upper: f64,
    pub forward_kind: BoundKind,
    pub backward_exact: f64,
    pub product: f64,
    /// Upper bound on `d_cb(E, OH_n)` guaranteed to exist.
    pub guarantee: f64,
    pub within_band: bool,
    pub route: String,
    pub certificate: Option<UpperCertificate>,
    pub seed: u64,
    pub restarts: usize,
}

impl DistanceReport {
    /// Recomputes both factors from the stored `U` and certificate.
    pub fn replay(&self, space: &Arc<OperatorSpace>) -> Result<(f64, f64)> {
        let back = backward_exact(space, self.u.matrix())?;
        let fwd = match (&self.certificate, self.forward_kind) {
            (_, BoundKind::Exact) => op_norm(self.u.matrix()),
            (Some(c), BoundKind::Certified) => {
                let t = TargetMap::Coefficients(self.u.clone());
                if verify_certificate(space, &t, c)? < -1e-8 {
                    return Err(Error::NoCertificate("stored certificate fails re-verification".into()));
                }
                c.constant
            }
            (None, BoundKind::Certified) => return Err(Error::NoCertificate("certificate missing".into())),
        };
        Ok((fwd, back))
    }
}

fn oh_map(space: &Arc<OperatorSpace>, u: &Matrix) -> Result<LinearMapCoeff> {
    LinearMapCoeff::new(space.clone(), OperatorSpace::Oh(space.dim()).into_arc(), u.clone())
}

/// Product `forward × backward`, or `None` for singular `U`.
fn product_of(space: &Arc<OperatorSpace>, u: &Matrix, opts: &CertificateOptions) -> Option<(f64, CbUpper, f64)> {
    let back = backward_exact(space, u).ok()?;
    let fwd = cb_upper_into_oh(&oh_map(space, u).ok()?, opts).ok()?;
    let p = fwd.value * back;
    p.is_finite().then_some((p, fwd, back))
}

/// Traceless Hermitian matrix from `n² − 1` real parameters.
fn hermitian_from(theta: &[f64], n: usize) -> Matrix {
    let mut h = Matrix::zeros(n, n);
    let mut k = 0;
    let mut trace = 0.0;
    for i in 0..n.saturating_sub(1) {
        h[(i, i)] = C64::new(theta[k], 0.0);
        trace += theta[k];
        k += 1;
    }
    h[(n - 1, n - 1)] = C64::new(-trace, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(theta[k], theta[k + 1]);
            k += 2;
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

fn expm_hermitian(h: &Matrix) -> Matrix {
    hermitian_fn(h, f64::exp)
}

/// Downhill simplex on `f`, starting at the origin with the given spread.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, dim: usize, spread: f64, evaluations: usize) -> (Vec<f64>, f64) {
    if dim == 0 {
        let x = Vec::new();
        let v = f(&x);
        return (x, v);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=dim)
        .map(|i| {
            let mut x = vec![0.0; dim];
            if i > 0 {
                x[i - 1] = spread;
            }
            let v = f(&x);
            (x, v)
        })
        .collect();
    let mut used = dim + 1;
    while used < evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[dim].1);
        if (worst - best).abs() <= 1e-10 * best.abs().max(1e-12) {
            break;
        }
        let centroid: Vec<f64> =
            (0..dim).map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        used += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            used += 1;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let xc = along(if fr < worst { 0.5 } else { -0.5 });
            let fc = f(&xc);
            used += 1;
            if fc < fr.min(worst) {
                simplex[dim] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = s.0.iter().zip(&x0).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    s.1 = f(&s.0);
                }
                used += dim;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Local minimization of `g(exp(H) U₀)` over traceless Hermitian `H`.
fn local_search(g: &(dyn Fn(&Matrix) -> f64 + Sync), u0: &Matrix, evaluations: usize) -> (Matrix, f64) {
    let n = u0.nrows();
    let f = |theta: &[f64]| g(&(expm_hermitian(&hermitian_from(theta, n)) * u0));
    let (theta, v) = nelder_mead(&f, n * n - 1, 0.25, evaluations);
    (expm_hermitian(&hermitian_from(&theta, n)) * u0, v)
}

fn normalize_det(u: Matrix) -> Matrix {
    let n = u.nrows() as f64;
    let d = u.determinant().norm();
    if d > 0.0 {
        u.unscale(d.powf(1.0 / n))
    } else {
        u
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LewisRound {
    pub product: f64,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone)]
pub struct LewisResult {
    pub map: LinearMapCoeff,
    pub product: f64,
    pub forward: f64,
    pub backward: f64,
    pub converged: bool,
    pub history: Vec<LewisRound>,
}

/// Alternating whitening toward a Lewis-type position. Each round finds the
/// worst tuple for the current `U` and replaces `U` by `Γ^{-1/4} U`, where
/// `Γ = Σ u(x_i) u(x_i)†` is the Gram of its images.
pub fn lewis_search(space: &Arc<OperatorSpace>, opts: &DistanceOptions) -> Result<LewisResult> {
    let n = space.dim();
    let mut u = Matrix::identity(n, n);
    let mut best: Option<(f64, Matrix, f64, f64)> = None;
    let mut history = Vec::new();
    let mut converged = false;
    for round in 0..opts.lewis_rounds.max(1) {
        let Some((p, fwd, back)) = product_of(space, &u, &opts.search_certificate) else { break };
        history.push(LewisRound { product: p, forward: fwd.value, backward: back });
        if best.as_ref().is_none_or(|b| p < b.0) {
            best = Some((p, u.clone(), fwd.value, back));
        }
        if round >= 10 {
            let old = history[round - 10].product;
            if (old - p).abs() <= 1e-6 * p {
                converged = true;
                break;
            }
        }
        let target = TargetMap::Coefficients(CMat::from_trusted(u.clone()));
        let search = SearchParams { seed: opts.seed ^ round as u64, ..opts.witness_search };
        let w = pi2oh_lower(space, &target, n, &search)?;
        let images = w.tuple.coeffs() * u.transpose();
        let mut gamma = images.transpose() * images.map(|z| z.conj());
        let reg = linalg::trace(&gamma).re / n as f64 * 1e-3;
        gamma += Matrix::identity(n, n) * C64::new(reg, 0.0);
        let step = hermitian_fn(&gamma, |x| x.max(1e-300).powf(-0.25));
        u = normalize_det(step * u);
    }
    let (product, u, forward, backward) = best.ok_or(Error::Singular(0.0))?;
    Ok(LewisResult { map: oh_map(space, &u)?, product, forward, backward, converged, history })
}

/// Seeded invertible starts `Q diag(s) W`.
fn factored_starts(n: usize, count: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = linalg::random_unitary(&mut rng, n);
            let w = linalg::random_unitary(&mut rng, n);
            let s = Matrix::from_diagonal(&linalg::Vector::from_fn(n, |_, _| {
                C64::new((0.5 * rand::Rng::random::<f64>(&mut rng) - 0.25).exp(), 0.0)
            }));
            q * s * w
        })
        .collect()
}

/// Upper bound on `d_cb(E, OH_n)` realized by a stored map and certificate.
pub fn distance_to_oh(space: &Arc<OperatorSpace>, opts: &DistanceOptions) -> Result<DistanceReport> {
    let n = space.dim();
    if n == 0 {
        return Err(Error::InvalidInput("space must have positive dimension".into()));
    }
    let guarantee = (n as f64).sqrt();
    let id = Matrix::identity(n, n);
    let mut route = "identity";
    let mut best_u = id.clone();
    let mut best_p = product_of(space, &id, &opts.search_certificate).map_or(f64::INFINITY, |r| r.0);
    let mut shortlist: Vec<(Matrix, &str)> = Vec::new();

    if !matches!(space.as_ref(), OperatorSpace::Oh(_)) {
        if let Ok(l) = lewis_search(space, opts) {
            if l.product < best_p {
                best_p = l.product;
                best_u = l.map.matrix().clone();
                route = "lewis";
            }
        }
        let cands = factored_starts(n, opts.restarts, opts.seed);
        let scored: Vec<(f64, Matrix)> = cands
            .into_par_iter()
            .filter_map(|c| product_of(space, &c, &opts.search_certificate).map(|r| (r.0, c)))
            .collect();
        let mut pool: Vec<(f64, Matrix, &str)> = vec![(best_p, best_u.clone(), route)];
        pool.extend(scored.into_iter().map(|(p, c)| (p, c, "restart")));
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        pool.truncate(2);
        // Pre-refinement points are rescored with the full certificate too,
        // since the fast one can mislead the local search.
        shortlist.extend(pool.iter().map(|(_, u, r)| (u.clone(), *r)));
        let g = |u: &Matrix| product_of(space, u, &opts.search_certificate).map_or(f64::INFINITY, |r| r.0);
        let refined: Vec<(f64, Matrix, &str)> = pool
            .into_par_iter()
            .map(|(p, u, r)| {
                let (lu, lv) = local_search(&g, &u, opts.local_evaluations);
                if lv < p {
                    (lv, lu, "local")
                } else {
                    (p, u, r)
                }
            })
            .collect();
        for (p, u, r) in refined {
            if p < best_p {
                best_p = p;
                best_u = u;
                route = r;
            }
        }
    }
    // The reported bound uses the full certificate; keep identity if it does better.
    let mut finals = vec![(best_u.clone(), route)];
    finals.extend(shortlist.into_iter().filter(|(u, _)| *u != best_u));
    if !finals.iter().any(|(u, _)| *u == id) {
        finals.push((id, "identity"));
    }
    let mut out: Option<(f64, Matrix, CbUpper, f64, &str)> = None;
    for (u, r) in finals {
        if let Some((p, fwd, back)) = product_of(space, &u, &opts.final_certificate) {
            if out.as_ref().is_none_or(|o| p < o.0) {
                out = Some((p, u, fwd, back, r));
            }
        }
    }
    let (product, u, fwd, back, route) =
        out.ok_or_else(|| Error::NoCertificate("no invertible map could be certified".into()))?;
    Ok(DistanceReport {
        label: space.label(),
        n,
        u: CMat::from_trusted(u),
        forward_upper: fwd.value,
        forward_kind: fwd.kind,
        backward_exact: back,
        product,
        guarantee,
        within_band: product <= guarantee * 1.05,
        route: route.into(),
        certificate: fwd.certificate,
        seed: opts.seed,
        restarts: opts.restarts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DualNormReport {
    pub value: f64,
    pub hs_factor: f64,
    pub cb_factor: f64,
    /// `B: OH_n → OH_n`, with `A = v B⁻¹`.
    pub b: CMat,
}

/// Upper bound on `π*_{2,oh}(v)` from a factorization `v = A B`, minimizing
/// `‖B‖_HS ‖A‖_cb` over positive definite `B`.
pub fn dual_norm_upper(v: &LinearMapCoeff, restarts: usize, seed: u64, evaluations: usize) -> Result<DualNormReport> {
    let n = match v.source.as_ref() {
        OperatorSpace::Oh(n) => *n,
        _ => return Err(Error::Unsupported("dual norm factorization needs an OH source".into())),
    };
    let value_at = |b: &Matrix| -> Option<(f64, f64, f64)> {
        let binv = invert(b).ok()?;
        let a = LinearMapCoeff { source: v.source.clone(), target: v.target.clone(), matrix: v.matrix() * binv };
        let cb = cb_from_oh_exact(&a).ok()?;
        let hs = b.norm();
        Some((hs * cb, hs, cb))
    };
    let obj = |b: &Matrix| value_at(b).map_or(f64::INFINITY, |r| r.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![Matrix::identity(n, n)];
    for _ in 1..restarts.max(1) {
        let g = random_matrix(&mut rng, n, n);
        starts.push(linalg::psd_sqrt(&(&g * g.adjoint())) + Matrix::identity(n, n));
    }
    let (b, _) = starts
        .into_par_iter()
        .map(|s| {
            let (lb, lv) = local_search(&obj, &s, evaluations);
            let sv = obj(&s);
            if lv < sv {
                (lb, lv)
            } else {
                (s, sv)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None::<(Matrix, f64)>, |acc, cur| match acc {
            Some(a) if a.1 <= cur.1 => Some(a),
            _ => Some(cur),
        })
        .expect("at least one start");
    let (value, hs, cb) = value_at(&b).ok_or(Error::Singular(0.0))?;
    Ok(DualNormReport { value, hs_factor: hs, cb_factor: cb, b: CMat::from_trusted(b) })
}

/// `M_{d1×d2}` with its matrix-unit basis (row-major order).
pub fn full_matrix_space(d1: usize, d2: usize) -> Presentation {
    let basis = (0..d1 * d2).map(|k| CMat::unit(d1, d2, k / d2, k % d2)).collect();
    Presentation::new(basis, SpaceLabel::Generic).expect("matrix units are independent")
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// `M_d → E`: coefficient matrix from matrix units to the basis of `E`.
    pub map: LinearMapCoeff,
    /// `max ‖P(b_j) − b_j‖` in coefficients.
    pub inclusion_residual: f64,
    /// `‖P∘ι∘P − P‖` in coefficients.
    pub idempotence_residual: f64,
}

impl Serialize for Projection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_json::json!({
            "matrix": CMat::from_trusted(self.map.matrix().clone()),
            "inclusion_residual": self.inclusion_residual,
            "idempotence_residual": self.idempotence_residual,
        })
        .serialize(s)
    }
}

/// The φ-orthogonal projection of `M_{d1×d2}` onto `E`: `P(x) = Σ c_j b_j`
/// with `G c = h`, `G_{ij} = φ(b_j ⊗ b̄_i)`, `h_i = φ(x ⊗ b̄_i)`.
pub fn project_onto(space: &Arc<OperatorSpace>, mixture: &KMixture) -> Result<Projection> {
    let p = space.concrete()?;
    mixture.validate()?;
    let (d1, d2) = p.shape();
    let n = p.dim();
    let g = mixture.gram(space)?;
    let (vals, vecs) = hermitian_eigen(&g);
    let top = vals[0].max(0.0);
    let nullity = vals.iter().filter(|&&v| !(v > 1e-12 * top)).count();
    if nullity > 0 || !(top > 0.0) {
        return Err(Error::DegenerateForm { nullity: nullity.max(1) });
    }
    let ginv = &vecs
        * Matrix::from_diagonal(&linalg::Vector::from_iterator(n, vals.iter().map(|v| C64::new(1.0 / v, 0.0))))
        * vecs.adjoint();
    // h_i(x) = Σ_m λ_m tr(x y_m b_i† z_m) = Σ_{pq} x_pq (y_m b_i† z_m)_{qp}.
    let mut h = Matrix::zeros(n, d1 * d2);
    for atom in &mixture.atoms {
        let PhiFunctional::Trace { y, z } = &atom.functional else {
            return Err(Error::Unsupported("projection needs trace atoms".into()));
        };
        for (i, b) in p.basis().iter().enumerate() {
            let m = y.matrix() * b.adjoint() * z.matrix();
            for r in 0..d1 {
                for c in 0..d2 {
                    h[(i, r * d2 + c)] += m[(c, r)] * atom.weight;
                }
            }
        }
    }
    let coeff = ginv * h;
    let ambient = OperatorSpace::from(full_matrix_space(d1, d2)).into_arc();
    let map = LinearMapCoeff::new(ambient, space.clone(), coeff)?;
    let incl = inclusion(p);
    let pi = map.matrix() * &incl;
    let inclusion_residual = max_abs(&(pi - Matrix::identity(n, n)));
    let idempotence_residual = max_abs(&(map.matrix() * &incl * map.matrix() - map.matrix()));
    Ok(Projection { map, inclusion_residual, idempotence_residual })
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Coordinates of `b_j` in matrix units, as columns.
fn inclusion(p: &Presentation) -> Matrix {
    let (d1, d2) = p.shape();
    let mut m = Matrix::zeros(d1 * d2, p.dim());
    for (j, b) in p.basis().iter().enumerate() {
        m.set_column(j, &linalg::vec_rm(b));
    }
    m
}

/// Ratio `‖Σ_r b′_r ⊗ v_r‖ / ‖Σ_l b_l ⊗ w_l‖` with `v = P w`, over `w_l ∈ M_L`.
struct AmplifiedRatio {
    src: Vec<Matrix>,
    dst: Vec<Matrix>,
    p: Matrix,
    level: usize,
}

fn amplify(basis: &[Matrix], w: &Matrix, level: usize) -> Matrix {
    let (d1, d2) = basis[0].shape();
    let mut out = Matrix::zeros(d1 * level, d2 * level);
    for (l, b) in basis.iter().enumerate() {
        let wl = unvec_rm(&w.row(l).transpose(), level, level);
        out += linalg::kron(b, &wl);
    }
    out
}

/// Real gradient of `Re ξ†(Σ b_l ⊗ w_l)η` in `w`, as rows `vec(w_l)ᵀ`.
fn amplified_pullback(basis: &[Matrix], left: &linalg::Vector, right: &linalg::Vector, level: usize) -> Matrix {
    let (d1, d2) = basis[0].shape();
    let xi = unvec_rm(left, d1, level);
    let eta = unvec_rm(right, d2, level);
    let mut g = Matrix::zeros(basis.len(), level * level);
    for (l, b) in basis.iter().enumerate() {
        let m = (xi.adjoint() * b * &eta).map(|z| z.conj());
        g.set_row(l, &linalg::vec_rm(&m).transpose());
    }
    g
}

impl RatioProblem for AmplifiedRatio {
    fn evaluate(&self, w: &Matrix, p: f64) -> Evaluation {
        let l = self.level;
        let v = &self.p * w;
        let y = amplify(&self.dst, &v, l);
        let x = amplify(&self.src, w, l);
        let top = top_singular(&y);
        let num = top.value * top.value;
        let spec = singular_spectrum(&x);
        let sq: Vec<f64> = spec.iter().map(|t| t.value * t.value).collect();
        let (dp, weights) = search::schatten_weights(&sq, p);
        if !(num > 0.0) || !(dp > 0.0) {
            return Evaluation {
                surrogate: f64::NEG_INFINITY,
                exact: f64::NEG_INFINITY,
                grad: Matrix::zeros(w.nrows(), w.ncols()),
            };
        }
        let gv = amplified_pullback(&self.dst, &top.left, &top.right, l).scale(2.0 * top.value / num);
        let mut grad = self.p.adjoint() * gv;
        for (t, wj) in spec.iter().zip(&weights) {
            if *wj > 1e-14 {
                grad -= amplified_pullback(&self.src, &t.left, &t.right, l).scale(2.0 * t.value * wj / dp);
            }
        }
        Evaluation { surrogate: num.ln() - dp.ln(), exact: num.ln() - sq[0].ln(), grad }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplificationProfile {
    /// `values[L-1]` is the bound found at level `L`; nondecreasing.
    pub values: Vec<f64>,
}

impl AmplificationProfile {
    pub fn best(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Lower bounds on `‖P‖_cb` from `‖P ⊗ id_{M_L}‖` at levels `1..=level`. Each
/// level is warm-started from the previous optimum embedded in the top-left block.
pub fn cb_lower_matrix_map(map: &LinearMapCoeff, level: usize, search: &SearchParams) -> Result<AmplificationProfile> {
    let src_p = map.source.concrete()?;
    let dst_p = map.target.concrete()?;
    let src: Vec<Matrix> = src_p.basis().iter().map(|b| b.matrix().clone()).collect();
    let dst: Vec<Matrix> = dst_p.basis().iter().map(|b| b.matrix().clone()).collect();
    let n = src.len();
    let mut values = Vec::with_capacity(level);
    let mut prev: Option<Matrix> = None;
    let mut best_val = 0.0f64;
    for l in 1..=level.max(1) {
        let problem = AmplifiedRatio { src: src.clone(), dst: dst.clone(), p: map.matrix().clone(), level: l };
        let mut starts = Vec::new();
        if let Some(pw) = &prev {
            let mut w = Matrix::zeros(n, l * l);
            for r in 0..n {
                for a in 0..l - 1 {
                    for c in 0..l - 1 {
                        w[(r, a * l + c)] = pw[(r, a * (l - 1) + c)];
                    }
                }
            }
            starts.push(w);
        }
        // Structured starts: w_l = b_lᵀ or conj(b_l) placed in the top-left block.
        for kind in 0..2 {
            let (d1, d2) = src[0].shape();
            let (r, c) = if kind == 0 { (d2, d1) } else { (d1, d2) };
            if r <= l && c <= l {
                let mut w = Matrix::zeros(n, l * l);
                for (idx, b) in src.iter().enumerate() {
                    let m = if kind == 0 { b.transpose() } else { b.map(|z| z.conj()) };
                    for i in 0..r {
                        for j in 0..c {
                            w[(idx, i * l + j)] = m[(i, j)];
                        }
                    }
                }
                starts.push(w);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(search.seed ^ (l as u64).wrapping_mul(0x51_7cc1_b727_220a));
        while starts.len() < search.restarts.max(1) {
            starts.push(random_matrix(&mut rng, n, l * l));
        }
        let out = search::maximize(
            &problem,
            &starts,
            AscentBudget { iterations: search.iterations, initial_step: search.initial_step },
        );
        let v = out.log_value.exp().sqrt();
        if v > best_val || prev.is_none() {
            best_val = best_val.max(v);
            prev = Some(out.point);
        } else if let Some(pw) = &prev {
            // Keep the embedded previous optimum.
            let mut w = Matrix::zeros(n, l * l);
            for r in 0..n {
                for a in 0..l - 1 {
                    for c in 0..l - 1 {
                        w[(r, a * l + c)] = pw[(r, a * (l - 1) + c)];
                    }
                }
            }
            prev = Some(w);
        }
        values.push(best_val);
    }
    Ok(AmplificationProfile { values })
}

/// Exact value of the amplified ratio at a given `w` (for replay).
pub fn amplified_ratio(map: &LinearMapCoeff, w: &Matrix, level: usize) -> Result<f64> {
    let src: Vec<Matrix> = map.source.concrete()?.basis().iter().map(|b| b.matrix().clone()).collect();
    let dst: Vec<Matrix> = map.target.concrete()?.basis().iter().map(|b| b.matrix().clone()).collect();
    let y = amplify(&dst, &(map.matrix() * w), level);
    let x = amplify(&src, w, level);
    Ok(op_norm(&y) / op_norm(&x))
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseReport {
    pub first: DistanceReport,
    pub second: DistanceReport,
    /// `(‖u_E‖‖u_E⁻¹‖)(‖u_F‖‖u_F⁻¹‖)`, bounding `‖w‖_cb‖w⁻¹‖_cb` for `w = u_F⁻¹ u_E`.
    pub product: f64,
    /// The composed map `E → F` in coefficients.
    pub composed: CMat,
    pub guarantee: f64,
}

/// Upper bound on `d_cb(E, F)` through OH_n.
pub fn pairwise_distance(e: &Arc<OperatorSpace>, f: &Arc<OperatorSpace>, opts: &DistanceOptions) -> Result<PairwiseReport> {
    if e.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: e.dim(), found: f.dim() });
    }
    let first = distance_to_oh(e, opts)?;
    let second = distance_to_oh(f, opts)?;
    let composed = invert(second.u.matrix())? * first.u.matrix();
    Ok(PairwiseReport {
        product: first.product * second.product,
        composed: CMat::from_trusted(composed),
        guarantee: e.dim() as f64,
        first,
        second,
    })
}

/// `min_norm` of the images of `u⁻¹`, squared cb norm of the inverse.
pub fn backward_min_norm(space: &Arc<OperatorSpace>, u: &Matrix) -> Result<f64> {
    let inv = invert(u)?;
    Ok(min_norm(&TupleOfElements::new(space.clone(), inv.transpose())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{column_space, model_space, row_space, row_space_square};
    use crate::ModelKind;

    fn oh(n: usize) -> Arc<OperatorSpace> {
        OperatorSpace::Oh(n).into_arc()
    }

    #[test]
    fn cb_from_oh_examples() {
        for n in 2..=4 {
            let nf = n as f64;
            let id = Matrix::identity(n, n);
            let m = LinearMapCoeff::new(oh(n), oh(n), id.clone()).unwrap();
            assert!((cb_from_oh_exact(&m).unwrap() - 1.0).abs() < 1e-12);
            let r = LinearMapCoeff::new(oh(n), OperatorSpace::from(row_space(n)).into_arc(), id.clone()).unwrap();
            assert!((cb_from_oh_exact(&r).unwrap() - nf.powf(0.25)).abs() < 1e-12);
            let c = LinearMapCoeff::new(oh(n), OperatorSpace::from(column_space(n)).into_arc(), id).unwrap();
            assert!((cb_from_oh_exact(&c).unwrap() - nf.powf(0.25)).abs() < 1e-12);
        }
        let bad = LinearMapCoeff::new(model_space(ModelKind::Row, 2).unwrap(), oh(2), Matrix::identity(2, 2)).unwrap();
        assert!(matches!(cb_from_oh_exact(&bad), Err(Error::Unsupported(_))));
    }

    #[test]
    fn cb_upper_examples() {
        let opts = CertificateOptions::default();
        for n in 2..=4 {
            let nf = n as f64;
            let r = LinearMapCoeff::new(model_space(ModelKind::Row, n).unwrap(), oh(n), Matrix::identity(n, n)).unwrap();
            assert!(cb_upper_into_oh(&r, &opts).unwrap().value <= 1.02 * nf.powf(0.25));
            let o = LinearMapCoeff::new(oh(n), oh(n), Matrix::identity(n, n)).unwrap();
            assert!(cb_upper_into_oh(&o, &opts).unwrap().value <= nf.sqrt());
        }
        let z = LinearMapCoeff::new(model_space(ModelKind::Row, 3).unwrap(), oh(3), Matrix::zeros(3, 3)).unwrap();
        assert_eq!(cb_upper_into_oh(&z, &opts).unwrap().value, 0.0);
    }

    #[test]
    fn distance_examples() {
        let opts = DistanceOptions { restarts: 4, local_evaluations: 40, lewis_rounds: 4, ..DistanceOptions::default() };
        let r = distance_to_oh(&oh(3), &opts).unwrap();
        assert!((r.product - 1.0).abs() < 1e-12);
        for n in 2..=3 {
            let s = model_space(ModelKind::Row, n).unwrap();
            let r = distance_to_oh(&s, &opts).unwrap();
            assert!(r.product <= (n as f64).sqrt() + 1e-6 && r.product >= 1.0 - 1e-9, "{}", r.product);
            let (f, b) = r.replay(&s).unwrap();
            assert!((b - r.backward_exact).abs() < 1e-10);
            assert!((f - r.forward_upper).abs() < 1e-12);
        }
    }

    #[test]
    fn lewis_fixed_points() {
        let opts = DistanceOptions { lewis_rounds: 3, ..DistanceOptions::default() };
        let l = lewis_search(&oh(3), &opts).unwrap();
        assert!((l.map.matrix() - Matrix::identity(3, 3)).norm() < 1e-9);
        let l = lewis_search(&model_space(ModelKind::Row, 3).unwrap(), &opts).unwrap();
        let u = l.map.matrix();
        let scale = u[(0, 0)];
        assert!((u - Matrix::identity(3, 3) * scale).norm() < 1e-6 * scale.norm());
    }

    #[test]
    fn dual_norm_examples() {
        let id = LinearMapCoeff::new(oh(3), oh(3), Matrix::identity(3, 3)).unwrap();
        let d = dual_norm_upper(&id, 4, 1, 80).unwrap();
        assert!(d.value <= 3f64.sqrt() + 1e-9);
        let d2 = dual_norm_upper(&id.scaled(C64::new(2.0, 0.0)), 4, 1, 80).unwrap();
        assert!((d2.value - 2.0 * d.value).abs() < 1e-9);

        let v = LinearMapCoeff::new(oh(2), model_space(ModelKind::Row, 2).unwrap(), Matrix::identity(2, 2)).unwrap();
        let d = dual_norm_upper(&v, 4, 1, 80).unwrap();
        assert!(d.value >= cb_from_oh_exact(&v).unwrap() - 1e-12);
        assert!(d.value <= 2f64.sqrt() * 2f64.powf(0.25) + 1e-9);
    }

    #[test]
    fn projection_onto_scalars() {
        let d = 3;
        let s = OperatorSpace::from(Presentation::new(vec![CMat::identity(d)], SpaceLabel::Generic).unwrap()).into_arc();
        let mix = KMixture::single(PhiFunctional::Trace {
            y: CMat::new(Matrix::identity(d, d).unscale((d as f64).sqrt())).unwrap(),
            z: CMat::new(Matrix::identity(d, d).unscale((d as f64).sqrt())).unwrap(),
        });
        let pr = project_onto(&s, &mix).unwrap();
        assert!(pr.inclusion_residual <= 1e-12 && pr.idempotence_residual <= 1e-12);
        let mut x = Matrix::zeros(d, d);
        x[(0, 0)] = C64::new(3.0, 0.0);
        x[(1, 2)] = C64::new(5.0, 1.0);
        let c = pr.map.matrix() * linalg::vec_rm(&x);
        assert!((c[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        let prof = cb_lower_matrix_map(&pr.map, 2, &SearchParams { restarts: 4, iterations: 300, ..Default::default() }).unwrap();
        assert!(prof.best() <= 1.0 + 1e-6);
    }

    #[test]
    fn projection_full_space_is_identity() {
        let s = OperatorSpace::from(full_matrix_space(2, 2)).into_arc();
        let mix = KMixture::single(PhiFunctional::Trace {
            y: CMat::new(Matrix::identity(2, 2).unscale(2f64.sqrt())).unwrap(),
            z: CMat::new(Matrix::identity(2, 2).unscale(2f64.sqrt())).unwrap(),
        });
        let pr = project_onto(&s, &mix).unwrap();
        assert!(max_abs(&(pr.map.matrix() - Matrix::identity(4, 4))) < 1e-12);
    }

    #[test]
    fn projection_rejects_degenerate_form() {
        let s = OperatorSpace::from(row_space_square(2)).into_arc();
        let mix = KMixture::single(PhiFunctional::Trace {
            y: CMat::new(Matrix::identity(2, 2).unscale(2f64.sqrt())).unwrap(),
            z: CMat::unit(2, 2, 1, 1),
        });
        assert!(matches!(project_onto(&s, &mix), Err(Error::DegenerateForm { nullity: 2 })));
    }

    #[test]
    fn transpose_is_detected_at_level_two() {
        let m2 = OperatorSpace::from(full_matrix_space(2, 2)).into_arc();
        let mut t = Matrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                t[(j * 2 + i, i * 2 + j)] = C64::new(1.0, 0.0);
            }
        }
        let map = LinearMapCoeff::new(m2.clone(), m2.clone(), t).unwrap();
        let s = SearchParams { restarts: 4, iterations: 400, ..Default::default() };
        let prof = cb_lower_matrix_map(&map, 2, &s).unwrap();
        assert!((prof.values[0] - 1.0).abs() < 1e-6);
        assert!(prof.values[1] >= 2.0 - 1e-3);
        let id = LinearMapCoeff::new(m2.clone(), m2, Matrix::identity(4, 4)).unwrap();
        let prof = cb_lower_matrix_map(&id, 3, &s).unwrap();
        assert!(prof.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn amplified_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let src: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 2, 3)).collect();
        let dst: Vec<Matrix> = (0..2).map(|_| random_matrix(&mut rng, 3, 2)).collect();
        let prob = AmplifiedRatio { src, dst, p: random_matrix(&mut rng, 2, 3), level: 2 };
        let w = random_matrix(&mut rng, 3, 4);
        let d = random_matrix(&mut rng, 3, 4);
        let ev = prob.evaluate(&w, 16.0);
        let fd = search::directional_derivative(|x| prob.evaluate(x, 16.0).surrogate, &w, &d, 1e-6);
        let an = search::gradient_pairing(&ev.grad, &d);
        assert!((fd - an).abs() < 1e-5 * (1.0 + fd.abs()), "{fd} vs {an}");
    }

    #[test]
    fn pairwise_examples() {
        let opts = DistanceOptions { restarts: 2, local_evaluations: 20, lewis_rounds: 2, ..DistanceOptions::default() };
        let r = model_space(ModelKind::Row, 2).unwrap();
        let c = model_space(ModelKind::Column, 2).unwrap();
        let rep = pairwise_distance(&r, &c, &opts).unwrap();
        assert!(rep.product <= 2.0 + 1e-6);
        let rep = pairwise_distance(&r, &oh(2), &opts).unwrap();
        assert!(rep.product <= 2f64.sqrt() + 1e-6);
        assert!(matches!(pairwise_distance(&r, &oh(3), &opts), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_maps_are_rejected() {
        let s = model_space(ModelKind::Row, 2).unwrap();
        let mut u = Matrix::identity(2, 2);
        u[(1, 1)] = C64::new(0.0, 0.0);
        assert!(matches!(backward_exact(&s, &u), Err(Error::Singular(_))));
    }
}
