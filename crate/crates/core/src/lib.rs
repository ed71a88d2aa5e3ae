//! Exact p-adic computer algebra on fake annuli.
//!
//! The crate is organised bottom-up: [`coeffring`] provides the truncated
//! unramified coefficient ring, [`monoval`] the lattice valuations, [`series`]
//! the sparse lattice-indexed series, and the remaining modules build
//! Frobenius structures, connections and the gauge solvers on top.

pub mod coeffring;
pub mod cohomology;
pub mod dmodule;
pub mod error;
pub mod frobenius;
pub mod monoval;
pub mod residue;
pub mod series;
pub mod solver;
pub mod text;

pub use coeffring::{CoeffRing, CoeffRingParams, Padic};
pub use cohomology::{H1Class, H1FinalForm};
pub use dmodule::{DModule, ResidualReport};
pub use error::{Error, Result};
pub use frobenius::FrobeniusLift;
pub use monoval::{AlgebraicReal, LambdaBound, LambdaValue, MonomialValuation, Point};
pub use residue::ResidueSeries;
pub use series::{Context, FakeSeries, SeriesMatrix};
pub use solver::GaugeReport;

/// Library version recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
