//! Multi-adaptive Galerkin time stepping for ODE initial value problems.
//!
//! The library integrates systems `u' = f(u, t)`, `u(0) = u0` with the
//! continuous and discontinuous Galerkin methods cG(q)/dG(q), and with their
//! multi-adaptive variants mcG(q)/mdG(q) in which every solution component
//! carries its own adaptive time step sequence. Local intervals between
//! synchronized time levels are organized in recursively constructed time
//! slabs stored as flat arrays, solved by fixed-point iteration (direct,
//! damped, or dense Newton), and controlled by a residual-based step law with
//! stability factors obtained from a backward dual problem.
//!
//! The core is generic over the floating-point scalar through [`Real`];
//! concrete `f64` aliases are exported at the crate root.

pub mod adapt;
pub mod dual;
pub mod error;
pub mod integrate;
mod linalg;
pub mod method;
pub mod ode;
pub mod real;
pub mod slab;
pub mod solver;
pub mod trace;

pub use adapt::{
    accept_or_reject, adaptive_solve, controller, initial_step, mono_config,
    residual_on_element, slab_indicators, AdaptiveReport, SlabDecision, StepState,
};
pub use dual::{make_dual_system, solve_dual, stability_factors, DualRun};
pub use error::{Error, Result};
pub use integrate::{indicator_order, integrate, IntegratorConfig, Mode, RunReport};
pub use method::{update_element, MethodTable, Variant, MAX_ORDER};
pub use ode::{
    detect_sparsity, evaluate_component, exponential_decay, harmonic_oscillator,
    make_reaction_diffusion, make_wave_1d, wave_energy, BenchmarkProblem, BuiltProblem,
    OdeSystem, ProblemKind, SparsityPattern, StateView,
};
pub use real::Real;
pub use slab::{build_dependencies, create_time_slab, partition, SlabConfig, TimeSlab};
pub use solver::{
    damped_update, newton_solve_slab, seed_from_start, solve_slab, SlabStateAt, SolveOutcome,
    SolveReport, SolverConfig, Strategy,
};
pub use trace::{read_checkpoint, write_checkpoint, SlabRecord, SolutionTrace};

/// Concrete `f64` aliases for the common case.
pub type OdeSystem64 = ode::OdeSystem<f64>;
pub type MethodTable64 = method::MethodTable<f64>;
pub type TimeSlab64 = slab::TimeSlab<f64>;
pub type SolutionTrace64 = trace::SolutionTrace<f64>;
pub type IntegratorConfig64 = integrate::IntegratorConfig<f64>;

/// `f32` aliases.
pub type OdeSystem32 = ode::OdeSystem<f32>;
pub type MethodTable32 = method::MethodTable<f32>;
