//! Exact symbolic computation engine for h-adic quantum vertex algebras.
//!
//! Everything is computed over the truncated ring Q[h]/(h^{N+1}) with exact
//! rational coefficients; series in the formal variable z are windowed Laurent
//! series whose soundness range is tracked through every operation.
//!
//! The crate realizes, at configurable truncation orders:
//! - the classical lattice vertex algebra on a weight-truncated Fock space,
//! - its quantum deformation V_Q^eta together with the Yang-Baxter operator,
//! - quantum affine sl2 at small level via twisted tensor powers of level 1,
//! - the quantum parafermion generators W_i(z),
//!
//! plus a registry of machine-checkable identities driven by the
//! `vertexforge` CLI.

pub mod config;
pub mod exactnum;
pub mod lattice;
pub mod parafermion;
pub mod qaffine;
pub mod qcalc;
pub mod qlattice;
pub mod registry;
pub mod report;
pub mod series;

pub use config::RunConfig;
pub use report::{Report, Status};
