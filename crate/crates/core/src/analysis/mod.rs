//! Expected surviving paths and decoding cost of the tree code.
//!
//! [`approx`] assumes fragments of distinct users never coincide; [`exact`]
//! drops that assumption and averages over message collisions too.

pub mod approx;
pub mod exact;
