//! Coded compressed sensing (CCS) for unsourced multiple access.
//!
//! Messages are split into `n` sub-blocks, linked together by random parity
//! checks (the tree code), and each sub-block is sent through a compressed
//! sensing (CS) encoder in its own slot. The receiver recovers a list of
//! coded fragments per slot and stitches them back into messages with a tree
//! decoder, optionally followed by successive interference cancellation.
//!
//! The crate also carries the analysis that goes with the scheme: exact and
//! approximate expected numbers of surviving erroneous paths, decoding
//! complexity, parity-bit allocation, and a seeded Monte Carlo harness.
//!
//! Numeric code that does not need transcendental functions is generic over
//! [`Scalar`], so the same routines run in `f32`, `f64`, or exact dyadic
//! rationals ([`ExactProb`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod cs;
pub mod error;
pub mod gf2;
pub mod parityopt;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod treecode;

pub use error::{CcsError, Result};
pub use scalar::Scalar;

/// Working precision for simulation and optimization.
pub type Real = f64;

/// Exact rational probabilities (every quantity in the exact tree analysis is dyadic).
pub type ExactProb = num_rational::BigRational;

/// Probability generating function with floating-point masses.
pub type Pgf = analysis::exact::SparsePgf<f64>;

/// Probability generating function with exact rational masses.
pub type ExactPgf = analysis::exact::SparsePgf<ExactProb>;

/// Sensing matrix in double precision (simulation default).
pub type SensingMatrix64 = cs::SensingMatrix<f64>;

/// Sensing matrix in single precision (large presets, on-disk format).
pub type SensingMatrix32 = cs::SensingMatrix<f32>;
