//! Agent-based SIR epidemics on contact networks, coupled to a particle
//! filter that assimilates infected counts and feeds posterior rate
//! distributions back into the agent simulation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abm;
pub mod coupling;
pub mod error;
pub mod network;
pub mod ode;
pub mod rng;
pub mod scan;
pub mod smc;
pub mod stats;

pub use error::{Error, Result};
