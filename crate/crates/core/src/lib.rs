//! Exact combinatorics for moments, cumulants and chaos decompositions of
//! multiple Wiener–Itô integrals with respect to Gaussian and compensated
//! Poisson random measures on finite cell systems.
//!
//! The building blocks are the partition lattice ([`partitions`]), diagrams
//! and their partition classes ([`diagrams`]), moment/cumulant transforms
//! ([`cumulants`]) and symmetric cell kernels ([`kernels`]). The diagram
//! formulae and product formulae live in [`chaos`]; Monte Carlo realizations
//! in [`simulate`]; fourth-moment diagnostics in [`clt`].

pub mod chaos;
pub mod clt;
pub mod cumulants;
pub mod diagrams;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod partitions;
pub mod simulate;

pub use error::{Error, Result};
