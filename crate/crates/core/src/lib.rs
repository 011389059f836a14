//! P-V curve tracing by multi-stage holomorphic embedding.
//!
//! Layers, bottom up:
//! - [`case_io`]: case files and the bus admittance matrix
//! - [`pf`]: rectangular power-flow residual, Jacobian and Newton solver
//! - [`series`]: truncated power series and Padé approximants
//! - [`hem`]: voltage series of the embedding variants
//! - [`hee`]: non-iterative correction of an inexact operating point
//! - [`tracer`]: the multi-stage P-V curve trace and piecewise curve queries
//! - [`cpf`]: continuation power flow baseline
//! - [`report`]: CSV/JSON data products

pub mod case_io;
pub mod cpf;
pub mod error;
pub mod hee;
pub mod hem;
pub mod linalg;
pub mod pf;
mod recursion;
pub mod report;
pub mod series;
pub mod tracer;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
