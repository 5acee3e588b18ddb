//! Rank-n isomonodromy equation, Stokes matrices of the associated irregular
//! system, and the connection between the two caterpillar zones.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed;
pub mod connection;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod sample;
pub mod special;
pub mod stokes;

pub use error::Error;
