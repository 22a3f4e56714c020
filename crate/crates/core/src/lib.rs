//! Nonsymmetric entropy `S(p, β) = −Σ p(i)·ln(β_i·p(i))` and its continuous
//! analogue `S(ρ) = −∫ ρ(x)·ln(β(x)·ρ(x)) dx`.
//!
//! The crate evaluates the functional, solves for its maximizing
//! distributions (closed form on finite alphabets, Lagrange multipliers on
//! intervals), checks those solutions against independent brute-force
//! oracles, and fits Zipf and Mandelbrot rank-frequency laws to text.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`entropy`] | information measures, distributions, weights |
//! | [`discrete`] | closed-form maximizer, curvature and stationarity checks |
//! | [`continuous`] | weight functions, moment constraints, multiplier solver |
//! | [`quadrature`] | adaptive Gauss–Kronrod on (semi-)infinite intervals |
//! | [`oracle`] | grid search, projected gradient, maximum-principle checks |
//! | [`corpus`] | tokenizer, rank-frequency tables, Zipf/Mandelbrot fits |
//! | [`io`] | CSV and JSON formats |

// NaN must fail range checks, so `!(x > 0.0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod continuous;
pub mod corpus;
pub mod discrete;
pub mod entropy;
pub mod error;
pub mod io;
pub mod oracle;
pub mod quadrature;
pub mod rng;

pub use continuous::{ConstraintSet, MultiplierSolution, Support, WeightFunction};
pub use discrete::{DiscreteMaxEntSolution, HessianReport};
pub use entropy::{DiscreteDistribution, WeightFamily, WeightVector};
pub use error::{Error, Result};
