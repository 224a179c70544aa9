//! (2,oh)-summing norms: ascent witnesses from below, certificates of the form
//! `‖u(x)‖² ≤ C² φ(x ⊗ x̄)` with `φ` a convex mixture of positive functionals
//! from above, and the comparison inequalities between the two.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, gaussian, hermitian_eigen, hs_norm, inner, op_norm, singular_spectrum, top_singular, unvec_rm, vec_rm,
    CMat, Matrix, Vector, C64,
};
use crate::minnorm::{min_norm, psd_optimizer, rank_one_atom, superoperator_of, PsdAscentOptions};
use crate::models::ModelKind;
use crate::search::{self, AscentBudget, Evaluation, RatioProblem};
use crate::space::{OperatorSpace, PositiveTensor, Presentation, SpaceLabel, TupleOfElements};

/// The map whose (2,oh)-summing norm is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "matrix", rename_all = "lowercase")]
pub enum TargetMap {
    /// `I_E`, measured in the space's own norm.
    Identity,
    /// `x ↦ U a(x)` into a Hilbertian target (`m × n`, Euclidean norm on the image).
    Coefficients(CMat),
}

impl TargetMap {
    fn check(&self, n: usize) -> Result<()> {
        match self {
            TargetMap::Coefficients(u) if u.ncols() != n => {
                Err(Error::DimensionMismatch { expected: n, found: u.ncols() })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub restarts: usize,
    pub iterations: usize,
    pub initial_step: f64,
    pub seed: u64,
    /// Start 0 is the canonical tuple (padded or truncated to length `k`).
    pub include_canonical: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { restarts: 32, iterations: 2000, initial_step: 0.1, seed: 1, include_canonical: true }
    }
}

impl SearchParams {
    fn budget(&self) -> AscentBudget {
        AscentBudget { iterations: self.iterations, initial_step: self.initial_step }
    }
}

/// A tuple normalized to `min_norm = 1` and the ratio it attains.
#[derive(Debug, Clone)]
pub struct LowerWitness {
    pub tuple: TupleOfElements,
    /// `(Σ ‖u(x_i)‖² / min_norm)^{1/2}`.
    pub value: f64,
    pub start_index: usize,
}

impl LowerWitness {
    pub fn k(&self) -> usize {
        self.tuple.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k(),
            "value": self.value,
            "start_index": self.start_index,
            "coeffs": CMat::from_trusted(self.tuple.coeffs().clone()),
        })
    }
}

impl Serialize for LowerWitness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

enum Numerator {
    /// Operator norms of realized elements.
    OpNorm,
    /// `‖A‖_F²`: identity on the OH model.
    Frobenius,
    /// `‖A Uᵀ‖_F²`.
    Mapped(Matrix),
}

struct LowerProblem {
    numerator: Numerator,
    /// `n × d1d2`, row `l` is `vec(b_l)ᵀ`; absent for the OH model.
    basis_rows: Option<Matrix>,
    shape: (usize, usize),
}

impl LowerProblem {
    fn new(space: &OperatorSpace, target: &TargetMap) -> Self {
        let numerator = match (target, space) {
            (TargetMap::Coefficients(u), _) => Numerator::Mapped(u.matrix().clone()),
            (TargetMap::Identity, OperatorSpace::Oh(_)) => Numerator::Frobenius,
            (TargetMap::Identity, OperatorSpace::Concrete(_)) => Numerator::OpNorm,
        };
        let (basis_rows, shape) = match space {
            OperatorSpace::Oh(_) => (None, (0, 0)),
            OperatorSpace::Concrete(p) => (Some(basis_rows(p)), p.shape()),
        };
        Self { numerator, basis_rows, shape }
    }

    fn degenerate(a: &Matrix) -> Evaluation {
        Evaluation {
            surrogate: f64::NEG_INFINITY,
            exact: f64::NEG_INFINITY,
            grad: Matrix::zeros(a.nrows(), a.ncols()),
        }
    }
}

fn basis_rows(p: &Presentation) -> Matrix {
    let (d1, d2) = p.shape();
    let mut m = Matrix::zeros(p.dim(), d1 * d2);
    for (l, b) in p.basis().iter().enumerate() {
        m.set_row(l, &vec_rm(b).transpose());
    }
    m
}

/// Singular triples of `a` with negligible Schatten weights dropped.
fn weighted_triples(m: &Matrix, squared: bool, p: f64) -> (f64, f64, Vec<(f64, linalg::SingularTriple)>) {
    let spec = singular_spectrum(m);
    let values: Vec<f64> = spec.iter().map(|t| if squared { t.value * t.value } else { t.value }).collect();
    let exact = values.first().copied().unwrap_or(0.0);
    let (norm, weights) = search::schatten_weights(&values, p);
    let kept = spec.into_iter().zip(weights).filter(|(_, w)| *w > 1e-14).map(|(t, w)| (w, t)).collect();
    (exact, norm, kept)
}

impl RatioProblem for LowerProblem {
    fn evaluate(&self, a: &Matrix, p: f64) -> Evaluation {
        let (k, n) = a.shape();
        let (d1, d2) = self.shape;
        let xs: Option<Vec<Matrix>> = self.basis_rows.as_ref().map(|bv| {
            let xr = a * bv;
            (0..k).map(|i| unvec_rm(&xr.row(i).transpose(), d1, d2)).collect()
        });
        // Gradients in coefficient space and in realized-matrix space.
        let mut grad_a = Matrix::zeros(k, n);
        let mut grad_x: Option<Vec<Matrix>> = xs.as_ref().map(|_| vec![Matrix::zeros(d1, d2); k]);

        let num = match &self.numerator {
            Numerator::Frobenius => {
                let v = a.norm_squared();
                grad_a += a.scale(2.0 / v);
                v
            }
            Numerator::Mapped(u) => {
                let b = a * u.transpose();
                let v = b.norm_squared();
                grad_a += (b * u.map(|z| z.conj())).scale(2.0 / v);
                v
            }
            Numerator::OpNorm => {
                let xs = xs.as_ref().expect("concrete space");
                let tops: Vec<_> = xs.iter().map(top_singular).collect();
                let v: f64 = tops.iter().map(|t| t.value * t.value).sum();
                let gx = grad_x.as_mut().expect("concrete space");
                for (g, t) in gx.iter_mut().zip(&tops) {
                    if t.value > 0.0 {
                        *g += (&t.left * t.right.adjoint()).scale(2.0 * t.value / v);
                    }
                }
                v
            }
        };
        if !(num > 0.0) || !num.is_finite() {
            return Self::degenerate(a);
        }

        let (exact_den, den) = match &xs {
            None => {
                let (exact, dp, kept) = weighted_triples(a, true, p);
                if !(dp > 0.0) {
                    return Self::degenerate(a);
                }
                for (w, t) in &kept {
                    grad_a -= (&t.left * t.right.adjoint()).scale(2.0 * t.value * w / dp);
                }
                (exact, dp)
            }
            Some(xs) => {
                let so = superoperator_of(xs, d1, d2);
                let (exact, dp, kept) = weighted_triples(so.matrix(), false, p);
                if !(dp > 0.0) {
                    return Self::degenerate(a);
                }
                let gx = grad_x.as_mut().expect("concrete space");
                for (w, t) in &kept {
                    let zu = unvec_rm(&t.left, d1, d1);
                    let yv = unvec_rm(&t.right, d2, d2);
                    let (zu_a, yv_a) = (zu.adjoint(), yv.adjoint());
                    let c = w / dp;
                    for (g, x) in gx.iter_mut().zip(xs) {
                        *g -= (&zu * x * &yv_a + &zu_a * x * &yv).scale(c);
                    }
                }
                (exact, dp)
            }
        };

        if let (Some(gx), Some(bv)) = (grad_x, self.basis_rows.as_ref()) {
            let mut rows = Matrix::zeros(k, d1 * d2);
            for (i, g) in gx.iter().enumerate() {
                rows.set_row(i, &vec_rm(g).transpose());
            }
            grad_a += rows * bv.adjoint();
        }
        Evaluation { surrogate: num.ln() - den.ln(), exact: num.ln() - exact_den.ln(), grad: grad_a }
    }
}

fn start_seed(seed: u64, restart: usize) -> u64 {
    seed ^ 0xa076_1d64_78bd_642fu64.wrapping_mul(restart as u64 + 1)
}

/// Gaussian rows drawn one row at a time, so the `k + 1` start extends the `k` start.
fn seeded_start(seed: u64, restart: usize, k: usize, n: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(start_seed(seed, restart));
    let mut m = Matrix::zeros(k, n);
    for i in 0..k {
        for j in 0..n {
            m[(i, j)] = gaussian(&mut rng);
        }
    }
    m
}

fn canonical_start(k: usize, n: usize) -> Matrix {
    Matrix::from_fn(k, n, |i, j| C64::new(if i % n == j && i < n { 1.0 } else { 0.0 }, 0.0))
}

fn starts(k: usize, n: usize, s: &SearchParams) -> Vec<Matrix> {
    (0..s.restarts.max(1))
        .map(|r| if r == 0 && s.include_canonical { canonical_start(k, n) } else { seeded_start(s.seed, r, k, n) })
        .collect()
}

/// `Σ ‖u(x_i)‖²` for the tuple.
pub fn mapped_sum_sq(t: &TupleOfElements, target: &TargetMap) -> f64 {
    match target {
        TargetMap::Identity => t.sum_sq_norms(),
        TargetMap::Coefficients(u) => (t.coeffs() * u.transpose()).norm_squared(),
    }
}

/// `(Σ ‖u(x_i)‖² / min_norm)^{1/2}` recomputed from scratch; 0 for a null tuple.
pub fn witness_value(t: &TupleOfElements, target: &TargetMap) -> f64 {
    let d = min_norm(t);
    if !(d > 0.0) {
        return 0.0;
    }
    (mapped_sum_sq(t, target) / d).sqrt()
}

fn finish(space: &Arc<OperatorSpace>, target: &TargetMap, a: Matrix, start_index: usize) -> Result<LowerWitness> {
    let raw = TupleOfElements::new(space.clone(), a)?;
    let d = min_norm(&raw);
    let tuple = if d > 0.0 { raw.scaled(C64::new(1.0 / d.sqrt(), 0.0)) } else { raw };
    let value = witness_value(&tuple, target);
    Ok(LowerWitness { tuple, value, start_index })
}

fn lower_with_starts(
    space: &Arc<OperatorSpace>,
    target: &TargetMap,
    starts: Vec<Matrix>,
    search: &SearchParams,
) -> Result<LowerWitness> {
    let problem = LowerProblem::new(space, target);
    let out = search::maximize(&problem, &starts, search.budget());
    finish(space, target, out.point, out.start_index)
}

/// Best k-tuple ratio found by seeded multi-restart ascent; a lower bound on
/// `π^k_{2,oh}(u)`.
pub fn pi2oh_lower(space: &Arc<OperatorSpace>, target: &TargetMap, k: usize, search: &SearchParams) -> Result<LowerWitness> {
    let n = space.dim();
    target.check(n)?;
    if k == 0 {
        return Ok(LowerWitness { tuple: TupleOfElements::empty(space.clone()), value: 0.0, start_index: 0 });
    }
    lower_with_starts(space, target, starts(k, n, search), search)
}

/// Witnesses for `k = 1..=kmax`, each run warm-started from the previous
/// witness padded with a zero row, so values are nondecreasing in `k`.
pub fn pi2oh_lower_profile(
    space: &Arc<OperatorSpace>,
    target: &TargetMap,
    kmax: usize,
    search: &SearchParams,
) -> Result<Vec<LowerWitness>> {
    let n = space.dim();
    target.check(n)?;
    let mut out: Vec<LowerWitness> = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut st = starts(k, n, search);
        if let Some(prev) = out.last() {
            let mut padded = Matrix::zeros(k, n);
            padded.rows_mut(0, k - 1).copy_from(prev.tuple.coeffs());
            st.push(padded);
        }
        let mut w = lower_with_starts(space, target, st, search)?;
        if let Some(prev) = out.last() {
            if w.value < prev.value {
                let mut padded = Matrix::zeros(k, n);
                padded.rows_mut(0, k - 1).copy_from(prev.tuple.coeffs());
                w = finish(space, target, padded, search.restarts.max(1))?;
            }
        }
        out.push(w);
    }
    Ok(out)
}

/// Lower estimate of `π^k_2(I)` on a model whose Banach norm is Euclidean:
/// `sup ‖A‖_F / σ_max(A)`, equal to `√min(k, n)`.
pub fn pi2_lower_model(kind: ModelKind, n: usize, k: usize, search: &SearchParams) -> Result<f64> {
    if kind == ModelKind::Clifford {
        return Err(Error::Unsupported("π_2 is only available on row, column and OH models".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("model dimension must be at least 1".into()));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let space = OperatorSpace::Oh(n).into_arc();
    Ok(pi2oh_lower(&space, &TargetMap::Identity, k, search)?.value)
}

/// A positive functional on `E ⊗ Ē` normalized against positive tensors of
/// min-norm at most 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhiFunctional {
    /// `φ(x ⊗ x̄′) = tr(x y x′† z)` with PSD `y` (`d2 × d2`), `z` (`d1 × d1`) in the HS unit ball.
    Trace { y: CMat, z: CMat },
    /// `φ(x ⊗ x̄′) = a(x′)† G a(x)` with `G` a density (PSD, trace ≤ 1); OH model only.
    Coefficient { density: CMat },
}

impl PhiFunctional {
    /// `G_{ij} = φ(b_j ⊗ b̄_i)`, so that `φ(x ⊗ x̄) = a† G a`.
    pub fn gram(&self, space: &OperatorSpace) -> Result<Matrix> {
        match (self, space) {
            (PhiFunctional::Trace { y, z }, OperatorSpace::Concrete(p)) => {
                let (d1, d2) = p.shape();
                if y.shape() != (d2, d2) || z.shape() != (d1, d1) {
                    return Err(Error::Shape(format!("atom needs y {d2}x{d2} and z {d1}x{d1}")));
                }
                let b = p.basis();
                let zb: Vec<Matrix> = b.iter().map(|bj| z.matrix() * bj.matrix() * y.matrix()).collect();
                let n = p.dim();
                Ok(Matrix::from_fn(n, n, |i, j| inner(&b[i], &zb[j])))
            }
            (PhiFunctional::Coefficient { density }, OperatorSpace::Oh(n)) => {
                if density.shape() != (*n, *n) {
                    return Err(Error::Shape(format!("density must be {n}x{n}")));
                }
                Ok(density.matrix().clone())
            }
            _ => Err(Error::Unsupported("atom kind does not match the space".into())),
        }
    }

    /// Positivity and normalization of the atom.
    pub fn validate(&self) -> Result<()> {
        let psd = |m: &Matrix, what: &str| -> Result<()> {
            let scale = 1.0 + hs_norm(m);
            if linalg::hermitian_residual(m) > 1e-10 * scale || linalg::min_eigenvalue(m) < -1e-10 * scale {
                return Err(Error::NoCertificate(format!("{what} is not positive semidefinite")));
            }
            Ok(())
        };
        match self {
            PhiFunctional::Trace { y, z } => {
                psd(y, "y")?;
                psd(z, "z")?;
                if hs_norm(y) > 1.0 + 1e-12 || hs_norm(z) > 1.0 + 1e-12 {
                    return Err(Error::NoCertificate("atom leaves the HS unit ball".into()));
                }
            }
            PhiFunctional::Coefficient { density } => {
                psd(density, "density")?;
                if linalg::trace(density).re > 1.0 + 1e-12 {
                    return Err(Error::NoCertificate("density has trace above 1".into()));
                }
            }
        }
        Ok(())
    }

    /// `φ(u) = tr(C G)` for `u = Σ C_ij b_i ⊗ b̄_j`.
    pub fn evaluate(&self, u: &PositiveTensor) -> Result<f64> {
        let g = self.gram(u.space())?;
        Ok(linalg::trace(&(u.coeffs() * g)).re)
    }

    fn trace_unit(d1: usize, d2: usize) -> Self {
        PhiFunctional::Trace {
            y: CMat::from_trusted(Matrix::identity(d2, d2).unscale((d2 as f64).sqrt())),
            z: CMat::from_trusted(Matrix::identity(d1, d1).unscale((d1 as f64).sqrt())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtom {
    pub weight: f64,
    pub functional: PhiFunctional,
}

/// Convex combination of atoms; itself a member of K(E).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMixture {
    pub atoms: Vec<WeightedAtom>,
}

impl KMixture {
    pub fn single(functional: PhiFunctional) -> Self {
        Self { atoms: vec![WeightedAtom { weight: 1.0, functional }] }
    }

    pub fn gram(&self, space: &OperatorSpace) -> Result<Matrix> {
        let n = space.dim();
        let mut g = Matrix::zeros(n, n);
        for a in &self.atoms {
            g += a.functional.gram(space)? * C64::new(a.weight, 0.0);
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::NoCertificate("empty mixture".into()));
        }
        if self.atoms.iter().any(|a| !(a.weight >= 0.0)) {
            return Err(Error::NoCertificate("negative mixture weight".into()));
        }
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NoCertificate(format!("weights sum to {total}")));
        }
        self.atoms.iter().try_for_each(|a| a.functional.validate())
    }
}

/// `‖u(x)‖² ≤ C² φ(x ⊗ x̄)` for all `x`, via `R ⪯ C² G`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpperCertificate {
    pub mixture: KMixture,
    pub constant: f64,
    pub gram_phi: CMat,
    /// Hermitian form `R` with `‖u(x)‖² ≤ a† R a`.
    pub majorant: CMat,
    pub majorant_kind: MajorantKind,
    /// Smallest eigenvalue of `C² G − R` at certification time.
    pub min_eigenvalue: f64,
    pub rounds: usize,
}

impl UpperCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorantKind {
    /// `‖u(x)‖² = a† R a` exactly.
    Exact,
    /// `‖x‖² ≤ ‖x*x + xx*‖ = a† R a` on spans where `x*x + xx*` is scalar.
    Anticommuting,
    /// `‖x‖_op² ≤ ‖x‖_HS²`.
    HilbertSchmidt,
}

#[derive(Debug, Clone, Copy)]
pub struct CertificateOptions {
    pub max_atoms: usize,
    pub rounds: usize,
    pub weight_iterations: usize,
    pub prune: f64,
    pub psd: PsdAscentOptions,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            max_atoms: 64,
            rounds: 40,
            weight_iterations: 200,
            prune: 1e-10,
            psd: PsdAscentOptions { restarts: 8, max_steps: 2000, ..PsdAscentOptions::default() },
        }
    }
}

/// Hermitian form dominating `x ↦ ‖u(x)‖²`.
pub fn majorant(space: &OperatorSpace, target: &TargetMap) -> Result<(Matrix, MajorantKind)> {
    let n = space.dim();
    target.check(n)?;
    if let TargetMap::Coefficients(u) = target {
        return Ok((u.adjoint() * u.matrix(), MajorantKind::Exact));
    }
    let p = match space {
        OperatorSpace::Oh(n) => return Ok((Matrix::identity(*n, *n), MajorantKind::Exact)),
        OperatorSpace::Concrete(p) => p,
    };
    let b = p.basis();
    let hs = Matrix::from_fn(n, n, |i, j| inner(&b[i], &b[j]));
    let (d1, d2) = p.shape();
    if d1 == 1 || d2 == 1 {
        return Ok((hs, MajorantKind::Exact));
    }
    if p.is_square() {
        let d = d1;
        let id = Matrix::identity(d, d);
        let mut q = Matrix::zeros(n, n);
        let mut scalar = true;
        'outer: for i in 0..n {
            for j in 0..n {
                let s = b[i].adjoint() * b[j].matrix() + b[j].matrix() * b[i].adjoint();
                let c = linalg::trace(&s) / C64::new(d as f64, 0.0);
                if op_norm(&(s - &id * c)) > 1e-12 {
                    scalar = false;
                    break 'outer;
                }
                q[(i, j)] = c;
            }
        }
        if scalar {
            return Ok((q, MajorantKind::Anticommuting));
        }
    }
    Ok((hs, MajorantKind::HilbertSchmidt))
}

/// Generalized eigenpairs of `R x = μ G x` (decreasing `μ`), with `x† G x = 1`.
/// `None` when `R` does not vanish on the kernel of `G`.
fn generalized_eigen(r: &Matrix, g: &Matrix) -> Option<(Vec<f64>, Matrix)> {
    let (gv, gvec) = hermitian_eigen(g);
    let gmax = gv.first().copied().unwrap_or(0.0);
    if !(gmax > 0.0) {
        return None;
    }
    let keep: Vec<usize> = (0..gv.len()).filter(|&i| gv[i] > 1e-12 * gmax).collect();
    let drop: Vec<usize> = (0..gv.len()).filter(|&i| gv[i] <= 1e-12 * gmax).collect();
    if !drop.is_empty() {
        let vn = gvec.select_columns(&drop);
        let rn = vn.adjoint() * r * &vn;
        if op_norm(&rn) > 1e-10 * (1.0 + op_norm(r)) {
            return None;
        }
    }
    let vk = gvec.select_columns(&keep);
    let w = Matrix::from_fn(vk.nrows(), keep.len(), |i, j| vk[(i, j)] / gv[keep[j]].sqrt());
    let s = w.adjoint() * r * &w;
    let (mu, q) = hermitian_eigen(&s);
    Some((mu, w * q))
}

struct WeightState {
    lambda: Vec<f64>,
    mu: f64,
    /// Dual directions `x_j` (columns) with softmax weights.
    duals: Vec<(f64, Vector)>,
}

fn mixed_gram(grams: &[Matrix], lambda: &[f64]) -> Matrix {
    let n = grams[0].nrows();
    let mut g = Matrix::zeros(n, n);
    for (gm, &l) in grams.iter().zip(lambda) {
        if l > 0.0 {
            g += gm * C64::new(l, 0.0);
        }
    }
    g
}

fn dual_directions(mu: &[f64], x: &Matrix, beta: f64) -> Vec<(f64, Vector)> {
    let top = mu[0];
    let raw: Vec<f64> = mu.iter().map(|&m| (-beta * (1.0 - m / top)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .enumerate()
        .filter(|(_, &w)| w / total > 1e-8)
        .map(|(j, &w)| (w / total, x.column(j).into_owned()))
        .collect()
}

/// Exponentiated updates of mixture weights minimizing `μ_max(R, G_λ)`.
fn optimize_weights(r: &Matrix, grams: &[Matrix], lambda0: Vec<f64>, iterations: usize) -> Option<WeightState> {
    // Top eigenvalue and the softmax-weighted dual directions.
    let eval = |lambda: &[f64], beta: f64| {
        let (mu, x) = generalized_eigen(r, &mixed_gram(grams, lambda))?;
        let duals = dual_directions(&mu, &x, beta);
        Some((mu[0], duals))
    };
    let mut lambda = lambda0;
    let (mut mu, mut duals) = eval(&lambda, 10.0)?;
    let mut best = WeightState { lambda: lambda.clone(), mu, duals: duals.clone() };
    let mut eta = 1.0;
    for it in 0..iterations {
        if !(mu > 0.0) {
            break;
        }
        let beta = 10.0 * (1e3f64).powf(it as f64 / iterations.max(1) as f64);
        // With x† G_λ x = 1, Σ_m λ_m s_m = 1 and active atoms share s_m = 1 at the optimum.
        let s: Vec<f64> = grams
            .iter()
            .map(|gm| duals.iter().map(|(p, x)| p * x.dotc(&(gm * x)).re).sum::<f64>().max(1e-300))
            .collect();
        let mut next: Vec<f64> = lambda.iter().zip(&s).map(|(l, sm)| l * sm.powf(eta)).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|l| *l /= total);
        match eval(&next, beta) {
            Some((m, d)) if m <= mu * (1.0 + 1e-12) => {
                lambda = next;
                mu = m;
                duals = d;
                eta = (eta * 1.2).min(4.0);
            }
            Some((_, d)) => {
                // Reject the step but refresh the dual weights at the new sharpness.
                duals = eval(&lambda, beta).map(|e| e.1).unwrap_or(d);
                eta *= 0.5;
                if eta < 1e-6 {
                    break;
                }
            }
            None => {
                eta *= 0.5;
                if eta < 1e-6 {
                    break;
                }
            }
        }
        if mu < best.mu {
            best = WeightState { lambda: lambda.clone(), mu, duals: duals.clone() };
        }
    }
    best.duals = eval(&best.lambda, 1e4).map(|e| e.1).unwrap_or(best.duals);
    Some(best)
}

fn candidate_atoms(
    space: &Arc<OperatorSpace>,
    duals: &[(f64, Vector)],
    opts: &CertificateOptions,
    round: usize,
) -> Result<Vec<PhiFunctional>> {
    let n = space.dim();
    let rows = Matrix::from_fn(duals.len(), n, |j, l| duals[j].1[l] * duals[j].0.sqrt());
    match space.as_ref() {
        OperatorSpace::Oh(_) => {
            let cw = rows.transpose() * rows.map(|z| z.conj());
            let (_, v) = hermitian_eigen(&cw);
            let top = v.column(0).into_owned();
            Ok(vec![PhiFunctional::Coefficient { density: CMat::from_trusted(&top * top.adjoint()) }])
        }
        OperatorSpace::Concrete(p) => {
            let mut out = Vec::new();
            let tuple = TupleOfElements::new(space.clone(), rows)?;
            let psd_opts = PsdAscentOptions { seed: opts.psd.seed ^ round as u64, ..opts.psd };
            let opt = psd_optimizer(&tuple, &psd_opts)?;
            out.push(PhiFunctional::Trace { y: opt.y, z: opt.z });
            for (_, x) in duals.iter().take(2) {
                let m = p.combine(x.iter().copied());
                if hs_norm(&m) > 0.0 {
                    let (_, y, z) = rank_one_atom(&m);
                    out.push(PhiFunctional::Trace { y: CMat::from_trusted(y), z: CMat::from_trusted(z) });
                }
            }
            Ok(out)
        }
    }
}

fn initial_atoms(space: &Arc<OperatorSpace>, opts: &CertificateOptions) -> Result<Vec<PhiFunctional>> {
    match space.as_ref() {
        OperatorSpace::Oh(n) => Ok(vec![PhiFunctional::Coefficient {
            density: CMat::from_trusted(Matrix::identity(*n, *n).unscale(*n as f64)),
        }]),
        OperatorSpace::Concrete(p) => {
            let (d1, d2) = p.shape();
            let canonical = TupleOfElements::canonical(space.clone());
            let opt = psd_optimizer(&canonical, &opts.psd)?;
            Ok(vec![PhiFunctional::trace_unit(d1, d2), PhiFunctional::Trace { y: opt.y, z: opt.z }])
        }
    }
}

/// Column-generation search for a mixture `φ` minimizing `C` in
/// `‖u(x)‖² ≤ C² φ(x ⊗ x̄)`. The returned constant is re-verified by an
/// eigenvalue check that does not depend on the search.
pub fn pi2oh_upper_certificate(
    space: &Arc<OperatorSpace>,
    target: &TargetMap,
    opts: &CertificateOptions,
) -> Result<UpperCertificate> {
    let (r, kind) = majorant(space, target)?;
    let n = space.dim();
    if op_norm(&r) == 0.0 {
        let atoms = initial_atoms(space, opts)?;
        let mixture = KMixture::single(atoms.into_iter().next().expect("one atom"));
        let g = mixture.gram(space)?;
        return Ok(UpperCertificate {
            mixture,
            constant: 0.0,
            gram_phi: CMat::from_trusted(g),
            majorant: CMat::from_trusted(r),
            majorant_kind: kind,
            min_eigenvalue: 0.0,
            rounds: 0,
        });
    }
    let mut atoms = initial_atoms(space, opts)?;
    let mut grams: Vec<Matrix> = atoms.iter().map(|a| a.gram(space)).collect::<Result<_>>()?;
    let mut lambda = vec![1.0 / atoms.len() as f64; atoms.len()];
    let mut best: Option<(f64, Vec<PhiFunctional>, Vec<f64>)> = None;
    let mut rounds = 0;
    for round in 0..opts.rounds {
        rounds = round + 1;
        let st = optimize_weights(&r, &grams, lambda.clone(), opts.weight_iterations).ok_or_else(|| {
            Error::NoCertificate(format!("dictionary of {} atoms does not dominate the map", atoms.len()))
        })?;
        let improved = best.as_ref().is_none_or(|b| st.mu < b.0 * (1.0 - 1e-10));
        if improved {
            best = Some((st.mu, atoms.clone(), st.lambda.clone()));
        }
        // A new atom helps only if it beats the current mixture on the dual tuple.
        let current: f64 = st.duals.iter().map(|(p, x)| p * x.dotc(&(mixed_gram(&grams, &st.lambda) * x)).re).sum();
        let cands = candidate_atoms(space, &st.duals, opts, round)?;
        let mut added = false;
        for c in cands {
            let g = c.gram(space)?;
            let val: f64 = st.duals.iter().map(|(p, x)| p * x.dotc(&(&g * x)).re).sum();
            let dup = grams.iter().any(|h| (h - &g).norm() <= 1e-9 * (1.0 + g.norm()));
            if val > current * (1.0 + 1e-7) && !dup {
                atoms.push(c);
                grams.push(g);
                added = true;
            }
        }
        if !added && !improved && round > 0 {
            break;
        }
        // New atoms enter with a small share of the mass.
        lambda = st.lambda.clone();
        let fresh = atoms.len() - lambda.len();
        if fresh > 0 {
            lambda.iter_mut().for_each(|l| *l *= 0.9);
            lambda.extend(std::iter::repeat_n(0.1 / fresh as f64, fresh));
        }
        prune(&mut atoms, &mut grams, &mut lambda, opts);
        if !added && round > 0 && !improved {
            break;
        }
    }
    let (_, atoms, lambda) = best.expect("at least one round");
    let mixture = KMixture {
        atoms: atoms
            .into_iter()
            .zip(lambda)
            .filter(|(_, w)| *w > 0.0)
            .map(|(functional, weight)| WeightedAtom { weight, functional })
            .collect(),
    };
    let mixture = renormalize(mixture);
    certify(space, mixture, r, kind, n, rounds)
}

fn renormalize(mut m: KMixture) -> KMixture {
    let total: f64 = m.atoms.iter().map(|a| a.weight).sum();
    m.atoms.iter_mut().for_each(|a| a.weight /= total);
    m
}

fn prune(atoms: &mut Vec<PhiFunctional>, grams: &mut Vec<Matrix>, lambda: &mut Vec<f64>, opts: &CertificateOptions) {
    // Atom 0 has full support and keeps the dictionary feasible.
    let mut keep: Vec<usize> = (0..atoms.len()).filter(|&i| i == 0 || lambda[i] >= opts.prune).collect();
    if keep.len() > opts.max_atoms {
        let mut rest: Vec<usize> = keep[1..].to_vec();
        rest.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
        rest.truncate(opts.max_atoms - 1);
        rest.sort_unstable();
        keep = std::iter::once(0).chain(rest).collect();
    }
    *atoms = keep.iter().map(|&i| atoms[i].clone()).collect();
    *grams = keep.iter().map(|&i| grams[i].clone()).collect();
    *lambda = keep.iter().map(|&i| lambda[i]).collect();
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= total);
}

fn certify(
    space: &Arc<OperatorSpace>,
    mixture: KMixture,
    r: Matrix,
    kind: MajorantKind,
    _n: usize,
    rounds: usize,
) -> Result<UpperCertificate> {
    mixture.validate()?;
    let g = mixture.gram(space)?;
    let (mu, _) = generalized_eigen(&r, &g)
        .ok_or_else(|| Error::NoCertificate("mixture is degenerate where the map acts".into()))?;
    let mut c2 = mu[0].max(0.0) * (1.0 + 1e-10);
    let scale = 1.0 + op_norm(&r);
    for _ in 0..60 {
        let m = (&g * C64::new(c2, 0.0)) - &r;
        let lo = linalg::min_eigenvalue(&m);
        if lo >= -1e-9 * scale {
            return Ok(UpperCertificate {
                mixture,
                constant: c2.sqrt(),
                gram_phi: CMat::from_trusted(g),
                majorant: CMat::from_trusted(r),
                majorant_kind: kind,
                min_eigenvalue: lo,
                rounds,
            });
        }
        c2 *= 1.0 + 1e-8;
        c2 += 1e-12 * scale;
    }
    Err(Error::NoCertificate("eigenvalue verification failed".into()))
}

/// Independent re-check: atoms valid, weights convex, and the smallest
/// eigenvalue of `C² G − R` with `G`, `R` rebuilt from scratch.
pub fn verify_certificate(space: &OperatorSpace, target: &TargetMap, cert: &UpperCertificate) -> Result<f64> {
    cert.mixture.validate()?;
    let g = cert.mixture.gram(space)?;
    let (r, _) = majorant(space, target)?;
    let m = g * C64::new(cert.constant * cert.constant, 0.0) - r;
    Ok(linalg::min_eigenvalue(&m))
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizedWitnessReport {
    pub witness: LowerWitness,
    pub min_norm: f64,
    pub sum_sq_norms: f64,
    pub pi_hat: f64,
    pub half_pi_hat_sq: f64,
    pub holds: bool,
}

/// The n-tuple witness rescaled to `min_norm = 1`, compared with `π̂²/2`.
pub fn normalized_witness(space: &Arc<OperatorSpace>, search: &SearchParams) -> Result<NormalizedWitnessReport> {
    let w = pi2oh_lower(space, &TargetMap::Identity, space.dim(), search)?;
    let mn = min_norm(&w.tuple);
    let sum = w.tuple.sum_sq_norms();
    let pi_hat = w.value;
    let half = pi_hat * pi_hat / 2.0;
    Ok(NormalizedWitnessReport { min_norm: mn, sum_sq_norms: sum, pi_hat, half_pi_hat_sq: half, holds: sum >= half - 1e-9, witness: w })
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub label: SpaceLabel,
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub checks: Vec<InequalityCheck>,
    pub pass: bool,
}

fn check(name: &str, lhs: f64, rhs: f64) -> InequalityCheck {
    InequalityCheck { name: name.into(), lhs, rhs, pass: lhs <= rhs }
}

/// Sandwich, ceiling and tuple-length comparisons for one space and map.
pub fn check_inequalities(
    space: &Arc<OperatorSpace>,
    target: &TargetMap,
    search: &SearchParams,
    opts: &CertificateOptions,
) -> Result<InequalityReport> {
    let n = space.dim();
    let profile = pi2oh_lower_profile(space, target, 2 * n, search)?;
    let lower_n = profile[n - 1].value;
    let lower_all = profile.iter().map(|w| w.value).fold(0.0, f64::max);
    let cert = pi2oh_upper_certificate(space, target, opts)?;
    let upper = cert.constant;
    let mut checks = vec![
        check("sandwich: lower <= certified upper", lower_all, upper + 1e-6),
        check("certificate: C^2 G - R >= 0", -verify_certificate(space, target, &cert)?, 1e-8),
        check("tuple length: best k-tuple <= sqrt2 * best n-tuple", lower_all, 2f64.sqrt() * lower_n * 1.02),
    ];
    if *target == TargetMap::Identity {
        checks.push(check("ceiling: lower <= sqrt(n)", lower_all, (n as f64).sqrt() * (1.0 + 1e-6)));
        if matches!(space.label(), SpaceLabel::Row | SpaceLabel::Column | SpaceLabel::Oh) {
            let pi2 = pi2_lower_model(ModelKind::Oh, n, n, search)?;
            checks.push(check("lower(pi_2oh) <= pi_2", lower_all, pi2 + 1e-6));
        }
    }
    if let OperatorSpace::Oh(_) = space.as_ref() {
        let cb = match target {
            TargetMap::Identity => 1.0,
            TargetMap::Coefficients(u) => op_norm(u),
        };
        checks.push(check("cb <= certified upper", cb, upper + 1e-6));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(InequalityReport { label: space.label(), n, lower: lower_all, upper, checks, pass })
}
