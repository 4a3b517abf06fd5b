//! Finite-difference simulation and verification of the parabolic–elliptic
//! transport-network system
//!
//! ```text
//! m_t − κΔm + |m|^{2(γ−1)} m = (m·∇p)∇p
//! −∇·[(I + m⊗m)∇p] = S
//! m = 0, p = 0 on the boundary
//! ```
//!
//! on a rectangle. [`grid`] holds the discrete calculus, [`pressure`] the
//! anisotropic elliptic solve, [`dynamics`] the IMEX time stepper,
//! [`analysis`] the energy bookkeeping, [`steady`] stationary states, decay
//! fits and parameter sweeps, and [`config`] the run configuration format.

pub mod acceptance;
pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod pressure;
pub mod steady;

pub use error::{BtnError, CgFailure, ErrorKind, Result};
