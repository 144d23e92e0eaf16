//! Distributed dual decomposition for inequality-coupled convex programs.
//!
//! The library models separable convex programs whose agents are linked by a
//! shared coupling inequality, and provides:
//!
//! - problem types with structural validators ([`problem`]),
//! - an exact dense LP/QP kernel with deterministic pivoting ([`solver`]),
//! - time-varying mixing-weight schedules and their admissibility checks
//!   ([`network`]),
//! - the synchronous-rounds iteration engine with primal recovery and the
//!   refreshed running average ([`engine`]),
//! - post-run convergence diagnostics and bound checks ([`diagnostics`]).
//!
//! ```
//! use dualdecomp::engine::{run, RunConfig, StepSizeSchedule};
//! use dualdecomp::linalg::Mat;
//! use dualdecomp::network::static_metropolis_schedule;
//! use dualdecomp::problem::{
//!     AgentProblem, CouplingMap, CoupledProblem, ObjectiveForm, Polytope,
//! };
//!
//! // Two agents minimizing x1 + x2 subject to 1 - x1 - x2 <= 0 on unit
//! // boxes; the coupling right-hand side is split evenly.
//! let agent = |id: usize| {
//!     AgentProblem::new(
//!         id,
//!         ObjectiveForm::linear(vec![1.0]).unwrap(),
//!         CouplingMap::new(Mat::from_rows_flat(1, 1, vec![-1.0]), vec![-0.5]).unwrap(),
//!         Polytope::boxed(vec![0.0], vec![1.0]).unwrap(),
//!     )
//!     .unwrap()
//! };
//! let problem = CoupledProblem::new(vec![agent(0), agent(1)]).unwrap();
//! let schedule = static_metropolis_schedule(2, &[(0, 1)], None).unwrap();
//! let config = RunConfig {
//!     iterations: 2000,
//!     step_size: StepSizeSchedule::harmonic(1.0),
//!     ..Default::default()
//! };
//! let trace = run(&problem, &schedule, &config, None).unwrap();
//! // The dual estimates agree on the optimal multiplier (1 here).
//! assert!((trace.final_lambda[(0, 0)] - 1.0).abs() < 1e-2);
//! ```

// Dense kernels index row/column ranges directly throughout; iterator
// rewrites obscure the arithmetic.
#![allow(clippy::needless_range_loop)]

pub mod diagnostics;
pub mod engine;
pub mod linalg;
pub mod network;
pub mod problem;
pub mod solver;
