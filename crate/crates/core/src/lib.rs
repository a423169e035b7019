//! Numerical Morse theory for `f = ‖μ − α‖²` on quiver representation spaces.
//!
//! The crate provides the representation model and moment map, an adaptive
//! gradient-flow integrator, critical-point analysis, unstable-stratum and
//! flow-line tools, a lab for the deformation-retract construction on planar
//! scenes, closed invariant subvarieties, and configuration/archive I/O.

pub mod critical;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod moment;
pub mod ode;
pub mod quiver;
pub mod retract;
pub mod sampling;
pub mod strata;
pub mod variety;

pub use error::{Error, Result};
