//! Operator variational inference.
//!
//! Variational inference cast as a minimax problem over a variational family
//! `q(z; λ)` and a family of test functions `f_θ`. An operator `O^{p,q}` maps
//! each test function to a function whose expectation under `q` vanishes when
//! `q` equals the posterior; the objective is the worst case of `t(E_q[(O f)(z)])`
//! over test functions and is minimized over `λ`.
//!
//! The crate is `no_std` (with `alloc`). Everything that differentiates is built
//! as an [`autodiff::Graph`], whose derivatives are themselves graphs, so the
//! Langevin-Stein operator (which contains a score and a divergence) can be
//! differentiated again with respect to the variational and test-function
//! parameters.
//!
//! Module map:
//!
//! - [`autodiff`]: expression graphs, evaluation, source-to-source gradients.
//! - [`models`]: unnormalized log joints, including hierarchical models that
//!   support data subsampling.
//! - [`operators`]: Langevin-Stein, KL and discrete operators.
//! - [`variational`]: mean-field Gaussian and density-free variational programs.
//! - [`testfn`]: norm-bounded MLP test functions.
//! - [`optimizer`]: two-sample-set gradient estimators, Adam and the minimax loop.
//! - [`predictive`]: posterior-predictive scoring of held-out pixels.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
mod error;
pub mod models;
pub mod operators;
pub mod optimizer;
pub mod predictive;
pub mod rng;
pub mod testfn;
pub mod variational;

pub use error::{Error, Result};
