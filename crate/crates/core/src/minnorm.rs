//! Minimal tensor norm of positive tensors `Σ x_i ⊗ x̄_i`, OH-norms and exact
//! cb-norms of maps out of OH_n.
//!
//! For a concrete presentation in `M_{d1×d2}` the norm in `E ⊗_min Ē` of
//! `Σ x_i ⊗ x̄_i` is the Hilbert–Schmidt operator norm of the completely
//! positive map `y ↦ Σ x_i y x_i†` from `M_{d2}` to `M_{d1}`. Its matrix under
//! the row-major vec convention is `Σ x_i ⊗ conj(x_i)`.
//!
//! For the OH_n coefficient model the same quantity is `σ_max(A)²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, hs_norm, kron, project_psd, CMat, Matrix};
use crate::space::{OperatorSpace, TupleOfElements};

/// Matrix of `y ↦ Σ x_i y x_i†`, mapping `vec(y)` (`d2²`) to `vec(Σ x_i y x_i†)` (`d1²`).
#[derive(Debug, Clone)]
pub struct Superoperator {
    matrix: Matrix,
    rows: usize,
    cols: usize,
}

impl Superoperator {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Shape `(d1, d2)` of the underlying elements.
    pub fn element_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn apply(&self, y: &Matrix) -> Matrix {
        let v = &self.matrix * linalg::vec_rm(y);
        linalg::unvec_rm(&v, self.rows, self.rows)
    }

    pub fn norm(&self) -> f64 {
        linalg::top_singular_value(&self.matrix)
    }
}

pub fn build_superoperator(t: &TupleOfElements) -> Result<Superoperator> {
    let (d1, d2) = t.space().concrete()?.shape();
    let xs = t.realize_all()?;
    Ok(superoperator_of(&xs, d1, d2))
}

pub(crate) fn superoperator_of(xs: &[Matrix], d1: usize, d2: usize) -> Superoperator {
    let mut m = Matrix::zeros(d1 * d1, d2 * d2);
    for x in xs {
        m += kron(x, &x.map(|z| z.conj()));
    }
    Superoperator { matrix: m, rows: d1, cols: d2 }
}

/// `‖Σ x_i ⊗ x̄_i‖_{E ⊗_min Ē}`. The empty tuple has norm 0.
pub fn min_norm(t: &TupleOfElements) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    match t.space().as_ref() {
        OperatorSpace::Oh(_) => linalg::op_norm(t.coeffs()).powi(2),
        OperatorSpace::Concrete(_) => build_superoperator(t).expect("concrete space").norm(),
    }
}

/// `‖Σ x_i ⊗ T_i‖_{E ⊗_min OH_k} = min_norm(t)^{1/2}`.
pub fn oh_norm(t: &TupleOfElements) -> f64 {
    min_norm(t).sqrt()
}

/// Exact `‖u‖_cb` for `u: OH_k → E`, given the images `u(T_i)` as the rows of `images`.
pub fn cb_norm_from_oh(images: &TupleOfElements) -> f64 {
    oh_norm(images)
}

/// A maximizer of `Re tr(Σ x_i y x_i† z)` over PSD `y`, `z` in the HS unit ball.
#[derive(Debug, Clone, Serialize)]
pub struct PsdOptimum {
    pub value: f64,
    pub y: CMat,
    pub z: CMat,
}

#[derive(Debug, Clone, Copy)]
pub struct PsdAscentOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_steps: usize,
    /// Stop when the relative gain over `window` steps falls below `rel_tol`.
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for PsdAscentOptions {
    fn default() -> Self {
        Self { restarts: 32, seed: 7, max_steps: 20_000, window: 50, rel_tol: 1e-9 }
    }
}

/// Maximizes the trace form over PSD `y`, `z` only. Equal to [`min_norm`] up to
/// the optimization tolerance.
pub fn min_norm_psd_restricted(t: &TupleOfElements, opts: &PsdAscentOptions) -> Result<PsdOptimum> {
    let p = t.space().concrete()?;
    if !p.is_square() {
        let (r, c) = p.shape();
        return Err(Error::NonSquare(r, c));
    }
    psd_optimizer(t, opts)
}

/// PSD-restricted alternating maximization; works for rectangular shapes too
/// (`y` is `d2 × d2`, `z` is `d1 × d1`).
pub(crate) fn psd_optimizer(t: &TupleOfElements, opts: &PsdAscentOptions) -> Result<PsdOptimum> {
    let (d1, d2) = t.space().concrete()?.shape();
    let xs = t.realize_all()?;
    if xs.is_empty() {
        return Ok(PsdOptimum {
            value: 0.0,
            y: CMat::from_trusted(Matrix::identity(d2, d2).unscale((d2 as f64).sqrt())),
            z: CMat::from_trusted(Matrix::identity(d1, d1).unscale((d1 as f64).sqrt())),
        });
    }
    let best = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(r as u64 + 1)));
            let y0 = if r == 0 {
                Matrix::identity(d2, d2).unscale((d2 as f64).sqrt())
            } else {
                linalg::random_psd_unit(&mut rng, d2)
            };
            (r, alternate(&xs, y0, opts))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None::<(usize, (f64, Matrix, Matrix))>, |acc, cur| match acc {
            Some(a) if a.1 .0 >= cur.1 .0 => Some(a),
            _ => Some(cur),
        })
        .expect("at least one restart")
        .1;
    let (value, y, z) = best;
    Ok(PsdOptimum { value, y: CMat::from_trusted(y), z: CMat::from_trusted(z) })
}

pub(crate) fn apply_forward(xs: &[Matrix], y: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(xs[0].nrows(), xs[0].nrows());
    for x in xs {
        out += x * y * x.adjoint();
    }
    out
}

pub(crate) fn apply_adjoint(xs: &[Matrix], z: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(xs[0].ncols(), xs[0].ncols());
    for x in xs {
        out += x.adjoint() * z * x;
    }
    out
}

fn normalized_psd(m: &Matrix) -> Option<Matrix> {
    let p = project_psd(m);
    let n = hs_norm(&p);
    (n > 1e-300).then(|| p.unscale(n))
}

fn alternate(xs: &[Matrix], y0: Matrix, opts: &PsdAscentOptions) -> (f64, Matrix, Matrix) {
    let d1 = xs[0].nrows();
    let mut y = y0;
    let mut z = Matrix::identity(d1, d1).unscale((d1 as f64).sqrt());
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_steps);
    let mut best = (f64::NEG_INFINITY, y.clone(), z.clone());
    for step in 0..opts.max_steps {
        let fy = apply_forward(xs, &y);
        match normalized_psd(&fy) {
            Some(nz) => z = nz,
            None => break,
        }
        let gz = apply_adjoint(xs, &z);
        match normalized_psd(&gz) {
            Some(ny) => y = ny,
            None => break,
        }
        let value = linalg::re_inner(&z, &apply_forward(xs, &y));
        if value > best.0 {
            best = (value, y.clone(), z.clone());
        }
        history.push(value);
        if step >= opts.window {
            let old = history[step - opts.window];
            if value - old <= opts.rel_tol * value.abs() {
                break;
            }
        }
    }
    if best.0 == f64::NEG_INFINITY {
        best.0 = 0.0;
    }
    best
}

/// Largest value of `Re tr(x y x† z)` for a single element: `‖x‖²` at
/// `y = ηη†`, `z = ξξ†` from the top singular pair.
pub(crate) fn rank_one_atom(x: &Matrix) -> (f64, Matrix, Matrix) {
    let top = linalg::top_singular(x);
    let y = &top.right * top.right.adjoint();
    let z = &top.left * top.left.adjoint();
    (top.value * top.value, y, z)
}
