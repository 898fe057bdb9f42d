//! Partitioned time integration for a two-subdomain advection-diffusion
//! transmission problem, with each subdomain advanced as either a full-order
//! finite element model (FOM) or a POD/Galerkin reduced-order model (ROM).
//!
//! The subdomains meet along a vertical interface where continuity is imposed
//! weakly through a Lagrange multiplier that plays the role of the interface
//! flux. Every explicit step recovers the multiplier from a dual Schur
//! complement of the coupled mass system and then advances the subdomains
//! independently, so FOM-FOM, ROM-ROM and ROM-FOM pairings share one driver.
//!
//! - [`numerics`]: dense SVD, SPD factorization, condition numbers
//! - [`mesh`]: uniform quad grids, vertical-split partitions, DoF ordering
//! - [`assembly`]: Q1 mass, flux and interface-constraint operators
//! - [`problem`]: coefficient fields, benchmark and manufactured setups
//! - [`fom`]: the single-domain reference solver and snapshot collection
//! - [`pod`]: energy-based basis selection, composite interface/interior bases
//! - [`ivr`]: the partitioned coupled solver with multiplier recovery
//! - [`metrics`]: broken-norm errors and interface traces
//! - [`io`], [`config`], [`driver`], [`verify`]: persistence, experiment
//!   configuration and the command-line pipeline

pub mod assembly;
pub mod config;
pub mod driver;
pub mod error;
pub mod fom;
pub mod io;
pub mod ivr;
pub mod mesh;
pub mod metrics;
pub mod numerics;
pub mod pod;
pub mod problem;
pub mod verify;

pub use error::{Error, Result};
