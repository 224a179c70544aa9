//! Operator-space presentations, elements, tuples and positive tensors in E ⊗ Ē.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, hermitian_eigen, CMat, Matrix, Vector, C64};

/// Basis independence: smallest Gram eigenvalue must exceed this times the largest.
pub const RANK_TOL: f64 = 1e-10;
/// PSD test: eigenvalues must be at least `-PSD_TOL * (1 + trace)`.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceLabel {
    Generic,
    Row,
    Column,
    Oh,
    Clifford,
}

/// A concrete operator space: the span of a linearly independent family of
/// equally shaped complex matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Presentation {
    shape: (usize, usize),
    basis: Vec<CMat>,
    label: SpaceLabel,
}

impl Presentation {
    pub fn new(basis: Vec<CMat>, label: SpaceLabel) -> Result<Self> {
        let first = basis
            .first()
            .ok_or_else(|| Error::InvalidInput("a presentation needs at least one basis matrix".into()))?;
        let shape = first.shape();
        if let Some(bad) = basis.iter().find(|b| b.shape() != shape) {
            return Err(Error::Shape(format!(
                "basis members must share shape {:?}, found {:?}",
                shape,
                bad.shape()
            )));
        }
        let p = Self { shape, basis, label };
        let (vals, _) = hermitian_eigen(&p.hs_gram());
        let max = vals[0];
        let min = *vals.last().unwrap();
        if !(min > RANK_TOL * max) {
            return Err(Error::LinearlyDependent { min, max });
        }
        Ok(p)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn label(&self) -> SpaceLabel {
        self.label
    }

    pub fn is_square(&self) -> bool {
        self.shape.0 == self.shape.1
    }

    /// `G_{ij} = tr(b_j† b_i)`.
    pub fn hs_gram(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| linalg::inner(&self.basis[j], &self.basis[i]))
    }

    /// `Σ_i c_i b_i`.
    pub fn combine(&self, coeffs: impl IntoIterator<Item = C64>) -> Matrix {
        let (r, c) = self.shape;
        let mut out = Matrix::zeros(r, c);
        for (coef, b) in coeffs.into_iter().zip(&self.basis) {
            if coef != C64::new(0.0, 0.0) {
                out += b.matrix() * coef;
            }
        }
        out
    }

    /// Coefficients `c` with `Σ c_l b_l` the HS-orthogonal projection of `m` onto the span.
    pub fn coordinates(&self, m: &Matrix) -> Vector {
        let g = self.hs_gram();
        let rhs = Vector::from_fn(self.dim(), |j, _| linalg::inner(&self.basis[j], m));
        // G_{ij} = <b_i, b_j>^*, so the normal equations use Gᵀ.
        g.transpose().lu().solve(&rhs).unwrap_or_else(|| Vector::zeros(self.dim()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            shape: [usize; 2],
            basis: Vec<CMat>,
            #[serde(default = "generic")]
            label: SpaceLabel,
        }
        fn generic() -> SpaceLabel {
            SpaceLabel::Generic
        }
        let raw: Raw = serde_json::from_str(s)?;
        if raw.label == SpaceLabel::Oh {
            return Err(Error::Unsupported("OH_n has no concrete matrix presentation".into()));
        }
        let p = Self::new(raw.basis, raw.label)?;
        if p.shape != (raw.shape[0], raw.shape[1]) {
            return Err(Error::Shape(format!(
                "declared shape {:?} does not match basis shape {:?}",
                raw.shape, p.shape
            )));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({
            "shape": [self.shape.0, self.shape.1],
            "basis": self.basis,
            "label": self.label,
        }))
        .expect("presentation serializes")
    }
}

/// A finite-dimensional operator space: either a concrete presentation or the
/// coefficient-only model of OH_n.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpace {
    Concrete(Presentation),
    Oh(usize),
}

impl OperatorSpace {
    pub fn dim(&self) -> usize {
        match self {
            OperatorSpace::Concrete(p) => p.dim(),
            OperatorSpace::Oh(n) => *n,
        }
    }

    pub fn label(&self) -> SpaceLabel {
        match self {
            OperatorSpace::Concrete(p) => p.label(),
            OperatorSpace::Oh(_) => SpaceLabel::Oh,
        }
    }

    pub fn presentation(&self) -> Option<&Presentation> {
        match self {
            OperatorSpace::Concrete(p) => Some(p),
            OperatorSpace::Oh(_) => None,
        }
    }

    pub fn concrete(&self) -> Result<&Presentation> {
        self.presentation()
            .ok_or_else(|| Error::Unsupported("OH_n model is coefficient-only; no concrete realization".into()))
    }

    /// Norm of the element with the given coefficients.
    pub fn element_norm(&self, coeffs: impl IntoIterator<Item = C64>) -> f64 {
        match self {
            OperatorSpace::Concrete(p) => linalg::op_norm(&p.combine(coeffs)),
            OperatorSpace::Oh(_) => coeffs.into_iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    pub fn into_arc(self) -> Arc<Self> {
        Arc::new(self)
    }
}

impl From<Presentation> for OperatorSpace {
    fn from(p: Presentation) -> Self {
        OperatorSpace::Concrete(p)
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    space: Arc<OperatorSpace>,
    coeffs: Vector,
}

impl Element {
    pub fn new(space: Arc<OperatorSpace>, coeffs: Vector) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: coeffs.len() });
        }
        Ok(Self { space, coeffs })
    }

    pub fn coeffs(&self) -> &Vector {
        &self.coeffs
    }

    pub fn space(&self) -> &Arc<OperatorSpace> {
        &self.space
    }

    pub fn norm(&self) -> f64 {
        self.space.element_norm(self.coeffs.iter().copied())
    }
}

/// `Σ_i coeffs_i b_i`.
pub fn realize(e: &Element) -> Result<CMat> {
    let p = e.space.concrete()?;
    Ok(CMat::from_trusted(p.combine(e.coeffs.iter().copied())))
}

/// A family `x_1..x_k` stored as a `k × n` coefficient matrix (row `i` is `x_i`).
#[derive(Debug, Clone)]
pub struct TupleOfElements {
    space: Arc<OperatorSpace>,
    coeffs: Matrix,
}

impl TupleOfElements {
    pub fn new(space: Arc<OperatorSpace>, coeffs: Matrix) -> Result<Self> {
        if coeffs.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: coeffs.ncols() });
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NotFinite);
        }
        Ok(Self { space, coeffs })
    }

    /// The basis itself, `A = I_n`.
    pub fn canonical(space: Arc<OperatorSpace>) -> Self {
        let n = space.dim();
        Self { space, coeffs: Matrix::identity(n, n) }
    }

    pub fn empty(space: Arc<OperatorSpace>) -> Self {
        let n = space.dim();
        Self { space, coeffs: Matrix::zeros(0, n) }
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn space(&self) -> &Arc<OperatorSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn element(&self, i: usize) -> Element {
        Element { space: self.space.clone(), coeffs: self.coeffs.row(i).transpose() }
    }

    pub fn realize_all(&self) -> Result<Vec<Matrix>> {
        let p = self.space.concrete()?;
        Ok((0..self.len()).map(|i| p.combine(self.coeffs.row(i).iter().copied())).collect())
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { space: self.space.clone(), coeffs: &self.coeffs * c }
    }

    /// `A ↦ U A` for a `k × k` matrix `U`.
    pub fn mixed(&self, u: &Matrix) -> Result<Self> {
        if u.ncols() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: u.ncols() });
        }
        Ok(Self { space: self.space.clone(), coeffs: u * &self.coeffs })
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.space.dim() != other.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: other.space.dim() });
        }
        let (k1, k2, n) = (self.len(), other.len(), self.space.dim());
        let mut c = Matrix::zeros(k1 + k2, n);
        c.rows_mut(0, k1).copy_from(&self.coeffs);
        c.rows_mut(k1, k2).copy_from(&other.coeffs);
        Ok(Self { space: self.space.clone(), coeffs: c })
    }

    /// `Σ_i ‖x_i‖²` in the space's own norm.
    pub fn sum_sq_norms(&self) -> f64 {
        (0..self.len())
            .map(|i| self.space.element_norm(self.coeffs.row(i).iter().copied()).powi(2))
            .sum()
    }
}

/// `u = Σ_{ij} C_{ij} b_i ⊗ b̄_j`.
#[derive(Debug, Clone)]
pub struct PositiveTensor {
    space: Arc<OperatorSpace>,
    coeffs: Matrix,
}

impl PositiveTensor {
    pub fn new(space: Arc<OperatorSpace>, coeffs: Matrix) -> Result<Self> {
        let n = space.dim();
        if coeffs.shape() != (n, n) {
            return Err(Error::Shape(format!("coefficient matrix must be {n}x{n}")));
        }
        Ok(Self { space, coeffs })
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn space(&self) -> &Arc<OperatorSpace> {
        &self.space
    }
}

/// `C = Aᵀ Ā`, so that `Σ_m x_m ⊗ x̄_m = Σ C_{ij} b_i ⊗ b̄_j`.
pub fn gram_tuple(t: &TupleOfElements) -> PositiveTensor {
    PositiveTensor {
        space: t.space.clone(),
        coeffs: t.coeffs.transpose() * t.coeffs.map(|z| z.conj()),
    }
}

pub fn is_positive(u: &PositiveTensor) -> bool {
    let c = &u.coeffs;
    let scale = 1.0 + c.diagonal().iter().map(|z| z.re.abs()).sum::<f64>();
    if linalg::hermitian_residual(c) > PSD_TOL * scale {
        return false;
    }
    linalg::min_eigenvalue(c) >= -PSD_TOL * scale
}

/// Pairs basis members into block-diagonal matrices `diag(p.b_i, q.b_i)`.
pub fn direct_sum(p: &Presentation, q: &Presentation) -> Result<Presentation> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    let (r1, c1) = p.shape();
    let (r2, c2) = q.shape();
    let basis = p
        .basis()
        .iter()
        .zip(q.basis())
        .map(|(a, b)| {
            let mut m = Matrix::zeros(r1 + r2, c1 + c2);
            m.view_mut((0, 0), (r1, c1)).copy_from(a.matrix());
            m.view_mut((r1, c1), (r2, c2)).copy_from(b.matrix());
            CMat::from_trusted(m)
        })
        .collect();
    // Block-diagonal stacking of an independent family stays independent.
    Ok(Presentation { shape: (r1 + r2, c1 + c2), basis, label: SpaceLabel::Generic })
}

/// Skips the independence check. Only for block constructions whose
/// independence is inherited from another block.
#[cfg(test)]
pub(crate) fn presentation_unchecked(basis: Vec<CMat>, label: SpaceLabel) -> Presentation {
    let shape = basis[0].shape();
    Presentation { shape, basis, label }
}
