//! Variational solution of discretized Poisson equations on a simulated
//! quantum register.
//!
//! The trial state `ψ(θ)` comes from a layered `Ry`/`CZ` ansatz. The energy
//! `E(θ) = −½ Re⟨ψ|f⟩² / ⟨ψ|A|ψ⟩` is evaluated from a small set of measured
//! observables, with `A` written as shifted tensor products of `I`, `X` and
//! `|0⟩⟨0|`. Minimizing `E` over `θ` drives `ψ` toward the direction of the
//! solution of `A u = f`.

pub mod ansatz;
pub mod classical;
pub mod cost;
pub mod error;
pub mod experiments;
pub mod gradient;
pub mod operators;
pub mod optimizer;
pub mod resources;
pub mod sampling;
pub mod source;
pub mod state;

pub use ansatz::{prepare_ansatz_state, AnsatzCircuit};
pub use classical::ClassicalSolution;
pub use cost::{cost, CostReport, Problem};
pub use error::{Error, Result};
pub use gradient::{cost_and_gradient, grad_cost, GradientReport};
pub use operators::{build_matrix, decompose, BoundaryCondition, ObservableTerm, PoissonOperator};
pub use optimizer::{minimize, run_trials, Mode, OptimizationConfig, OptimizationTrace, Terminal};
pub use resources::{count_cost_circuits, count_gradient_circuits, count_shift_resources, ResourceReport};
pub use sampling::{sample_cost, ShotEstimate};
pub use source::{prepare_source_state, SourceUnitary};
pub use state::{Gate, Statevector};
