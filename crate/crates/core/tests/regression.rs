//! Exact-value regression baselines.
//!
//! Every pivoting rule, tie-break, and reduction order in the crate is
//! deterministic and the engine path uses only IEEE-exact operations
//! (+, -, *, /, sqrt), so these runs reproduce bit-for-bit across builds
//! and platforms. The frozen values catch unintended numerical changes;
//! an intentional algorithm change is expected to update them.

use dualdecomp::diagnostics::dual_gap_rate;
use dualdecomp::engine::{run, DiagnosticsLevel, RunConfig, StepSizeSchedule};
use dualdecomp::linalg::Mat;
use dualdecomp::network::static_metropolis_schedule;
use dualdecomp::problem::{AgentProblem, CoupledProblem, CouplingMap, ObjectiveForm, Polytope};

fn scalar_agent(id: usize, cost: f64, share: f64) -> AgentProblem {
    AgentProblem::new(
        id,
        ObjectiveForm::linear(vec![cost]).unwrap(),
        CouplingMap::new(Mat::from_rows_flat(1, 1, vec![-1.0]), vec![-share]).unwrap(),
        Polytope::boxed(vec![0.0], vec![1.0]).unwrap(),
    )
    .unwrap()
}

#[test]
fn two_agent_toy_after_200_rounds() {
    let p =
        CoupledProblem::new(vec![scalar_agent(0, 1.0, 0.5), scalar_agent(1, 1.0, 0.5)]).unwrap();
    let s = static_metropolis_schedule(2, &[(0, 1)], None).unwrap();
    let config = RunConfig {
        iterations: 200,
        ..Default::default()
    };
    let trace = run(&p, &s, &config, None).unwrap();
    let last = trace.records.last().unwrap();
    assert_eq!(trace.final_lambda[(0, 0)], 1.0000125605246986);
    assert_eq!(last.obj_hat, 0.6597457314020131);
    assert_eq!(last.sum_e_sq, 1.2499999999999467e-5);
}

#[test]
fn rate_statistic_bound_on_asymmetric_toy() {
    let p = CoupledProblem::new(vec![
        scalar_agent(0, 1.0, 0.5),
        scalar_agent(1, 1.3, 0.3),
        scalar_agent(2, 0.7, 0.2),
    ])
    .unwrap();
    let s = static_metropolis_schedule(3, &[(0, 1), (1, 2)], None).unwrap();
    let config = RunConfig {
        iterations: 10_000,
        step_size: StepSizeSchedule::harmonic(1.0),
        diagnostics: DiagnosticsLevel::Full,
        lambda_init: Some(Mat::from_rows_flat(3, 1, vec![1.5, 0.2, 0.8])),
        ..Default::default()
    };
    let trace = run(&p, &s, &config, None).unwrap();
    let points = dual_gap_rate(&trace).unwrap();
    let max_product = points
        .iter()
        .map(|pt| pt.product)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max_product, 0.34325544314033074);
}
