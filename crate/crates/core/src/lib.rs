//! Numerical invariants of finite-dimensional operator spaces.
//!
//! The crate computes minimal tensor norms of positive tensors `Σ x_i ⊗ x̄_i`,
//! norms in `E ⊗_min OH`, sandwich bounds on the (2,oh)-summing norm
//! (ascent witnesses from below, Pietsch-type certificates from above),
//! cb-distances to OH_n and completely bounded projections onto subspaces of
//! `M_d`.
//!
//! Spaces are concrete spans of complex matrices ([`Presentation`]) or the
//! coefficient-only model of OH_n. The sum space `R_n + C_n` is not modelled;
//! its (2,oh)-summing identity norm is known to be `√n`.

// `!(x > t)` guards are meant to catch NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod factorize;
pub mod linalg;
pub mod minnorm;
pub mod models;
pub mod search;
pub mod space;
pub mod summing;

pub use error::{Error, Result};
pub use linalg::{CMat, Matrix, Vector, C64};
pub use minnorm::{cb_norm_from_oh, min_norm, min_norm_psd_restricted, oh_norm, PsdAscentOptions, PsdOptimum};
pub use models::ModelKind;
pub use space::{
    direct_sum, gram_tuple, is_positive, realize, Element, OperatorSpace, PositiveTensor, Presentation, SpaceLabel,
    TupleOfElements,
};
pub use summing::{LowerWitness, SearchParams, TargetMap, UpperCertificate};
