//! Time stepping of the conductance equation.
//!
//! Each step is IMEX: diffusion implicit, relaxation and activation explicit,
//!
//! ```text
//! (I − dt κ Δ_h) mⁿ⁺¹ = mⁿ + dt [ (mⁿ·∇pⁿ)∇pⁿ − |mⁿ|^{2(γ−1)} mⁿ ]
//! ```
//!
//! followed by the pressure solve for `mⁿ⁺¹`. Both components and the
//! pressure are SPD solves by preconditioned CG. The explicit terms are the
//! exact discrete gradients of the energy, so the scheme dissipates the
//! discrete energy up to `O(dt²)` per step.

mod sim;
mod terms;

pub use sim::{
    energy_tolerance, run, step, RunFailure, RunOutput, SimulationState, Simulator, StepReport,
    MAX_HALVINGS,
};
pub use terms::{
    activation, convexity_constant, monotonicity_lhs, reaction, reaction_prefactor,
    reaction_vector,
};
