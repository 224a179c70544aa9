//! Canonical model spaces: row and column Hilbert spaces `R_n`, `C_n`, the
//! OH_n coefficient model, and spans of Clifford generators.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, hs_norm, op_norm, random_matrix, random_vector, CMat, Matrix, C64};
use crate::minnorm::min_norm;
use crate::space::{OperatorSpace, Presentation, SpaceLabel, TupleOfElements};
use crate::summing::{pi2oh_lower, SearchParams, TargetMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Row,
    Column,
    Oh,
    Clifford,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Row => "row",
            ModelKind::Column => "column",
            ModelKind::Oh => "oh",
            ModelKind::Clifford => "clifford",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "row" | "r" => Ok(ModelKind::Row),
            "column" | "col" | "c" => Ok(ModelKind::Column),
            "oh" => Ok(ModelKind::Oh),
            "clifford" | "cliff" => Ok(ModelKind::Clifford),
            other => Err(Error::InvalidInput(format!("unknown model space '{other}'"))),
        }
    }
}

pub fn row_space(n: usize) -> Presentation {
    let basis = (0..n).map(|i| CMat::unit(1, n, 0, i)).collect();
    Presentation::new(basis, SpaceLabel::Row).expect("matrix units are independent")
}

pub fn column_space(n: usize) -> Presentation {
    let basis = (0..n).map(|i| CMat::unit(n, 1, i, 0)).collect();
    Presentation::new(basis, SpaceLabel::Column).expect("matrix units are independent")
}

/// `R_n` realized inside `M_n` as the first row.
pub fn row_space_square(n: usize) -> Presentation {
    let basis = (0..n).map(|i| CMat::unit(n, n, 0, i)).collect();
    Presentation::new(basis, SpaceLabel::Row).expect("matrix units are independent")
}

/// `C_n` realized inside `M_n` as the first column.
pub fn column_space_square(n: usize) -> Presentation {
    let basis = (0..n).map(|i| CMat::unit(n, n, i, 0)).collect();
    Presentation::new(basis, SpaceLabel::Column).expect("matrix units are independent")
}

pub fn clifford_space(n: usize) -> Presentation {
    Presentation::new(clifford_generators(n), SpaceLabel::Clifford).expect("generators are HS-orthogonal")
}

pub fn model_space(kind: ModelKind, n: usize) -> Result<Arc<OperatorSpace>> {
    if n == 0 {
        return Err(Error::InvalidInput("model dimension must be at least 1".into()));
    }
    Ok(match kind {
        ModelKind::Row => OperatorSpace::from(row_space(n)),
        ModelKind::Column => OperatorSpace::from(column_space(n)),
        ModelKind::Oh => OperatorSpace::Oh(n),
        ModelKind::Clifford => OperatorSpace::from(clifford_space(n)),
    }
    .into_arc())
}

fn pauli() -> [Matrix; 4] {
    let c = |re: f64, im: f64| C64::new(re, im);
    [
        Matrix::identity(2, 2),
        Matrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        Matrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        Matrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    ]
}

/// Jordan–Wigner generators in `M_{2^m}`, `m = ⌈n/2⌉`:
/// `u_{2k-1} = Z^{⊗(k-1)} ⊗ X ⊗ I^{⊗(m-k)}`, `u_{2k} = Z^{⊗(k-1)} ⊗ Y ⊗ I^{⊗(m-k)}`.
pub fn clifford_generators(n: usize) -> Vec<CMat> {
    assert!(n >= 1, "need at least one generator");
    let [id, x, y, z] = pauli();
    let m = n.div_ceil(2);
    let string = |k: usize, middle: &Matrix| -> Matrix {
        let mut acc = Matrix::identity(1, 1);
        for site in 0..m {
            let factor = match site.cmp(&k) {
                std::cmp::Ordering::Less => &z,
                std::cmp::Ordering::Equal => middle,
                std::cmp::Ordering::Greater => &id,
            };
            acc = linalg::kron(&acc, factor);
        }
        acc
    };
    (0..n)
        .map(|g| {
            let k = g / 2;
            CMat::from_trusted(if g % 2 == 0 { string(k, &x) } else { string(k, &y) })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CliffordIdentityReport {
    pub n: usize,
    pub ambient: usize,
    pub samples: usize,
    pub hermitian_residual: f64,
    pub square_residual: f64,
    pub anticommutation_residual: f64,
    /// `max ‖i(x)*i(x) + i(x)i(x)* − 2‖x‖² I‖` over samples, relative to `‖x‖²`.
    pub sum_identity_residual: f64,
    /// `min (‖i(x)‖² − ‖x‖²)/‖x‖²`; nonnegative when the lower norm bound holds.
    pub lower_norm_margin: f64,
    /// `min (2‖x‖² − ‖i(x)‖²)/‖x‖²`; nonnegative when the upper norm bound holds.
    pub upper_norm_margin: f64,
    /// `max |τ(i(x)* i(x)) − ‖x‖²| / ‖x‖²` with `τ = tr / ambient`.
    pub trace_residual: f64,
    pub pass: bool,
}

/// Identities of the Clifford embedding `i(x) = Σ x_i u_i` checked on seeded
/// random complex `x`, plus the generator relations themselves.
pub fn clifford_identity_suite(n: usize, samples: usize, seed: u64) -> CliffordIdentityReport {
    let gens: Vec<Matrix> = clifford_generators(n).into_iter().map(CMat::into_matrix).collect();
    let d = gens[0].nrows();
    let id = Matrix::identity(d, d);
    let mut herm = 0.0f64;
    let mut square = 0.0f64;
    let mut anti = 0.0f64;
    for (i, a) in gens.iter().enumerate() {
        herm = herm.max(op_norm(&(a - a.adjoint())));
        square = square.max(op_norm(&(a * a - &id)));
        for b in &gens[i + 1..] {
            anti = anti.max(op_norm(&(a * b + b * a)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum_res = 0.0f64;
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    let mut trace_res = 0.0f64;
    for s in 0..samples.max(1) {
        let x = if s == 0 {
            let mut e = linalg::Vector::zeros(n);
            e[0] = C64::new(1.0, 0.0);
            e
        } else {
            random_vector(&mut rng, n)
        };
        let xsq = x.norm_squared();
        let ix = gens.iter().zip(x.iter()).fold(Matrix::zeros(d, d), |acc, (g, c)| acc + g * *c);
        let ixa = ix.adjoint();
        let sum = &ixa * &ix + &ix * &ixa - &id * C64::new(2.0 * xsq, 0.0);
        sum_res = sum_res.max(op_norm(&sum) / xsq);
        let nsq = op_norm(&ix).powi(2);
        lower = lower.min((nsq - xsq) / xsq);
        upper = upper.min((2.0 * xsq - nsq) / xsq);
        let tau = linalg::trace(&(&ixa * &ix)).re / d as f64;
        trace_res = trace_res.max((tau - xsq).abs() / xsq);
    }
    let tol = 1e-12;
    let pass = herm <= tol
        && square <= tol
        && anti <= tol
        && sum_res <= tol
        && lower >= -tol
        && upper >= -tol
        && trace_res <= tol;
    CliffordIdentityReport {
        n,
        ambient: d,
        samples: samples.max(1),
        hermitian_residual: herm,
        square_residual: square,
        anticommutation_residual: anti,
        sum_identity_residual: sum_res,
        lower_norm_margin: lower,
        upper_norm_margin: upper,
        trace_residual: trace_res,
        pass,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioProbeReport {
    pub n: usize,
    pub samples: usize,
    /// Smallest `min_norm(tuple) / Σ‖a_j‖²` over the random samples.
    pub min_sampled: f64,
    /// Smallest ratio reached by descent (`1 / π̂²` of the k = n witness).
    pub min_descent: f64,
    /// Lower estimate of `π_{2,oh}` from the same descent.
    pub descent_value: f64,
    pub min_ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `min_norm(tuple) / Σ‖a_j‖²` over tuples in the Clifford span; never below 1/2.
pub fn clifford_ratio(t: &TupleOfElements) -> f64 {
    min_norm(t) / t.sum_sq_norms()
}

pub fn clifford_ratio_probe(n: usize, samples: usize, search: &SearchParams) -> Result<RatioProbeReport> {
    let space = model_space(ModelKind::Clifford, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed ^ 0xc1f0);
    let mut min_sampled = f64::INFINITY;
    for s in 0..samples {
        let k = 1 + s % (n + 2);
        let t = TupleOfElements::new(space.clone(), random_matrix(&mut rng, k, n))?;
        min_sampled = min_sampled.min(clifford_ratio(&t));
    }
    let generators = TupleOfElements::canonical(space.clone());
    min_sampled = min_sampled.min(clifford_ratio(&generators));
    let witness = pi2oh_lower(&space, &TargetMap::Identity, n, search)?;
    let min_descent = 1.0 / witness.value.powi(2);
    let min_ratio = min_sampled.min(min_descent);
    let bound = 0.5;
    Ok(RatioProbeReport {
        n,
        samples,
        min_sampled,
        min_descent,
        descent_value: witness.value,
        min_ratio,
        bound,
        pass: min_ratio >= bound - 1e-9,
    })
}

/// Closed forms of `min_norm`: `‖A†A‖_F` on row/column models, `σ_max(A)²` on OH_n.
pub fn closed_form_min_norm(kind: ModelKind, a: &Matrix) -> Result<f64> {
    match kind {
        ModelKind::Row | ModelKind::Column => Ok(hs_norm(&(a.adjoint() * a))),
        ModelKind::Oh => Ok(if a.nrows() == 0 { 0.0 } else { op_norm(a).powi(2) }),
        ModelKind::Clifford => Err(Error::Unsupported(
            "no closed form for Clifford spans; use the superoperator engine".into(),
        )),
    }
}
