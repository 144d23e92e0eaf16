//! Exact dense LP/QP kernel and reference solvers.
//!
//! The simplex kernel backs the per-agent subproblem minimization, the
//! Slater/feasibility checks, and the centralized reference solves used as
//! test oracles. Solver workspaces hold mutable state and are meant to be
//! used one-per-thread; problems and solutions are immutable.

mod qp;
mod simplex;

pub use simplex::Simplex;

use crate::linalg::{self, dot, Mat};
use crate::problem::{AgentProblem, CoupledProblem, ObjectiveForm};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `min c^T x` subject to `C x <= d`, `lb <= x <= ub` with finite bounds.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub rows: Mat,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(
        cost: Vec<f64>,
        rows: Mat,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, SolveError> {
        let n = cost.len();
        if rows.ncols() != n || lower.len() != n || upper.len() != n || rows.nrows() != rhs.len() {
            return Err(SolveError::Invalid(format!(
                "inconsistent LP dimensions: n = {}, rows = {}x{}, rhs = {}, bounds = {}/{}",
                n,
                rows.nrows(),
                rows.ncols(),
                rhs.len(),
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..n {
            if !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(SolveError::Invalid(format!(
                    "variable {} must have finite bounds",
                    j
                )));
            }
            if lower[j] > upper[j] {
                return Err(SolveError::Invalid(format!(
                    "variable {}: lower bound exceeds upper bound",
                    j
                )));
            }
        }
        if !cost.iter().all(|v| v.is_finite())
            || !rhs.iter().all(|v| v.is_finite())
            || !rows.is_finite()
        {
            return Err(SolveError::Invalid("non-finite LP data".into()));
        }
        Ok(LpProblem {
            cost,
            rows,
            rhs,
            lower,
            upper,
        })
    }

    pub(crate) fn raw(
        cost: Vec<f64>,
        rows: Mat,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self {
        LpProblem {
            cost,
            rows,
            rhs,
            lower,
            upper,
        }
    }
}

/// Solution of an LP or QP solve.
///
/// `duals` are the nonnegative multipliers of the inequality rows, aligned
/// with row order. `rc_margin` is the smallest absolute reduced cost over the
/// non-fixed nonbasic variables at an LP optimum; a strictly positive value
/// certifies that the optimizer is unique (NaN for QP solves).
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub rc_margin: f64,
}

impl LpSolution {
    fn non_optimal(status: SolveStatus) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            duals: Vec::new(),
            rc_margin: f64::NAN,
        }
    }
}

/// Solve an LP from a cold start with deterministic pivoting.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution, SolveError> {
    Simplex::new(lp)?.solve()
}

/// Solve a convex QP `min 1/2 x^T Q x + q^T x` over `system` rows and box
/// bounds.
///
/// `quad` must be symmetric positive semidefinite; symmetry is checked here,
/// semidefiniteness is the caller's contract (objective forms validate it at
/// construction).
pub fn solve_qp(
    quad: &Mat,
    linear: &[f64],
    rows: &Mat,
    rhs: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<LpSolution, SolveError> {
    if quad.symmetry_defect() > 1e-12 {
        return Err(SolveError::Invalid(
            "quadratic term must be symmetric".into(),
        ));
    }
    qp::ActiveSetQp::new(quad, linear, rows, rhs, lower, upper)?.solve()
}

/// Local primal minimization: `argmin_{x in X_i} f_i(x) + lambda_hat^T g_i(x)`.
///
/// Deterministic under the fixed pivot rule; when the argmin is not a
/// singleton the solver's tie-break (nonbasic variables resting at their
/// lower bounds) is returned.
pub fn local_argmin(agent: &AgentProblem, lambda_hat: &[f64]) -> Result<Vec<f64>, SolveError> {
    if lambda_hat.len() != agent.coupling_dim() {
        return Err(SolveError::Invalid(format!(
            "lambda has {} entries, expected {}",
            lambda_hat.len(),
            agent.coupling_dim()
        )));
    }
    if lambda_hat.iter().any(|&v| v < 0.0) {
        return Err(SolveError::Invalid(
            "lambda must be componentwise nonnegative".into(),
        ));
    }
    let mut solver = AgentSolver::new(agent)?;
    let (_, x) = solver.minimize(lambda_hat)?;
    Ok(x)
}

/// Local subproblem minimizer: `min_{x in X_i} f_i(x) + lambda^T g_i(x)`.
///
/// The engine consumes this interface for its primal step, so callers with
/// structure the built-in LP/QP kernel cannot exploit may plug in their own
/// convex solver. Implementations may keep warm-start state across calls;
/// the engine never shares one oracle between agents or threads.
pub trait LocalOracle: Send {
    /// Returns the dual-function value `phi(lambda)` and a minimizer in the
    /// agent's feasible set.
    fn minimize(&mut self, lambda: &[f64]) -> Result<(f64, Vec<f64>), SolveError>;
}

impl LocalOracle for AgentSolver {
    fn minimize(&mut self, lambda: &[f64]) -> Result<(f64, Vec<f64>), SolveError> {
        AgentSolver::minimize(self, lambda)
    }
}

/// Reusable workspace for one agent's local primal minimizations.
///
/// The constraint system is fixed, so for linear objectives the previous
/// optimal basis stays primal feasible after a multiplier change and
/// re-solves typically take a handful of pivots. Quadratic objectives go
/// through the active-set solver from a cold start on every call.
pub struct AgentSolver {
    objective: ObjectiveForm,
    coupling_matrix: Mat,
    coupling_offset: Vec<f64>,
    backend: Backend,
}

enum Backend {
    Lp(Simplex),
    Qp {
        quad: Mat,
        rows: Mat,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl AgentSolver {
    pub fn new(agent: &AgentProblem) -> Result<Self, SolveError> {
        let backend = match agent.objective.quadratic_part() {
            None => {
                let lp = LpProblem::new(
                    agent.objective.linear_part().to_vec(),
                    agent.feasible.rows().clone(),
                    agent.feasible.rhs().to_vec(),
                    agent.feasible.lower().to_vec(),
                    agent.feasible.upper().to_vec(),
                )?;
                Backend::Lp(Simplex::new(&lp)?)
            }
            Some(quad) => Backend::Qp {
                quad: quad.clone(),
                rows: agent.feasible.rows().clone(),
                rhs: agent.feasible.rhs().to_vec(),
                lower: agent.feasible.lower().to_vec(),
                upper: agent.feasible.upper().to_vec(),
            },
        };
        Ok(AgentSolver {
            objective: agent.objective.clone(),
            coupling_matrix: agent.coupling.matrix().clone(),
            coupling_offset: agent.coupling.offset().to_vec(),
            backend,
        })
    }

    /// Minimize `f(x) + lambda^T g(x)` over the agent's feasible set.
    ///
    /// Returns the dual-function value `phi(lambda)` and the minimizer.
    pub fn minimize(&mut self, lambda: &[f64]) -> Result<(f64, Vec<f64>), SolveError> {
        let mut cost = self.objective.linear_part().to_vec();
        linalg::axpy(&mut cost, 1.0, &self.coupling_matrix.t_matvec(lambda));
        let sol = match &mut self.backend {
            Backend::Lp(simplex) => simplex.resolve_with_cost(&cost)?,
            Backend::Qp {
                quad,
                rows,
                rhs,
                lower,
                upper,
            } => qp::ActiveSetQp::new(quad, &cost, rows, rhs, lower, upper)?.solve()?,
        };
        match sol.status {
            SolveStatus::Optimal => {
                let x = sol.x;
                let g = {
                    let mut g = self.coupling_matrix.matvec(&x);
                    for (gi, bi) in g.iter_mut().zip(&self.coupling_offset) {
                        *gi -= bi;
                    }
                    g
                };
                let value = self.objective.eval(&x) + dot(lambda, &g);
                Ok((value, x))
            }
            SolveStatus::Infeasible => Err(SolveError::Infeasible),
            SolveStatus::Unbounded => Err(SolveError::Unbounded),
        }
    }

    /// The agent's coupling value `g(x) = A x - b`.
    pub fn coupling_value(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.coupling_matrix.matvec(x);
        for (gi, bi) in g.iter_mut().zip(&self.coupling_offset) {
            *gi -= bi;
        }
        g
    }
}

/// Optimal primal-dual pair of the coupled problem, solved centrally.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralizedReference {
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub f_star: f64,
    /// Duals of every stacked inequality row: the `p` coupling rows first,
    /// then each agent's polytope rows in agent order.
    pub row_duals: Vec<f64>,
    /// True when the solver certifies the primal optimizer is unique
    /// (strictly positive reduced costs at an LP optimum, or a positive
    /// definite objective).
    pub unique: bool,
}

/// Solve the stacked problem in one piece and read the coupling-row duals.
///
/// Used as the test oracle for the distributed algorithm; requires Slater's
/// condition for the multipliers to be meaningful.
pub fn solve_centralized(problem: &CoupledProblem) -> Result<CentralizedReference, SolveError> {
    let n = problem.total_dim();
    let p = problem.coupling_dim();
    let row_count: usize = p + problem
        .agents()
        .iter()
        .map(|a| a.feasible.rows().nrows())
        .sum::<usize>();
    let mut rows = Mat::zeros(row_count, n);
    let mut rhs = vec![0.0; row_count];
    // Coupling rows first so their duals are easy to read back.
    let mut offsets = Vec::with_capacity(problem.num_agents());
    let mut off = 0;
    for a in problem.agents() {
        offsets.push(off);
        off += a.dim();
    }
    for c in 0..p {
        let mut b_total = 0.0;
        for (a, &o) in problem.agents().iter().zip(&offsets) {
            let am = a.coupling.matrix();
            for j in 0..a.dim() {
                rows[(c, o + j)] = am[(c, j)];
            }
            b_total += a.coupling.offset()[c];
        }
        rhs[c] = b_total;
    }
    let mut r = p;
    for (a, &o) in problem.agents().iter().zip(&offsets) {
        let pr = a.feasible.rows();
        for i in 0..pr.nrows() {
            for j in 0..a.dim() {
                rows[(r, o + j)] = pr[(i, j)];
            }
            rhs[r] = a.feasible.rhs()[i];
            r += 1;
        }
    }
    let mut cost = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut any_quadratic = false;
    for a in problem.agents() {
        cost.extend_from_slice(a.objective.linear_part());
        lower.extend_from_slice(a.feasible.lower());
        upper.extend_from_slice(a.feasible.upper());
        any_quadratic |= !a.objective.is_linear();
    }

    let (sol, unique) = if any_quadratic {
        let mut quad = Mat::zeros(n, n);
        let mut min_eig = f64::INFINITY;
        for (a, &o) in problem.agents().iter().zip(&offsets) {
            match a.objective.quadratic_part() {
                Some(q) => {
                    for i in 0..a.dim() {
                        for j in 0..a.dim() {
                            quad[(o + i, o + j)] = q[(i, j)];
                        }
                    }
                    let (eigvals, _) = linalg::symmetric_eigen(q);
                    min_eig = min_eig.min(eigvals[0]);
                }
                None => min_eig = f64::NEG_INFINITY,
            }
        }
        let sol = solve_qp(&quad, &cost, &rows, &rhs, &lower, &upper)?;
        (sol, min_eig > 1e-9)
    } else {
        let lp = LpProblem::new(cost, rows, rhs, lower, upper)?;
        let sol = solve_lp(&lp)?;
        let unique = sol.rc_margin > 1e-9;
        (sol, unique)
    };

    match sol.status {
        SolveStatus::Optimal => {
            let lambda_star: Vec<f64> = sol.duals[..p]
                .iter()
                .map(|&v| if v < 0.0 { 0.0 } else { v })
                .collect();
            Ok(CentralizedReference {
                x_star: sol.x,
                lambda_star,
                f_star: sol.objective,
                row_duals: sol.duals,
                unique,
            })
        }
        SolveStatus::Infeasible => Err(SolveError::Infeasible),
        SolveStatus::Unbounded => Err(SolveError::Unbounded),
    }
}

/// Grid-search approximation of the centralized optimum.
///
/// Independent of the simplex path: enumerates the box lattice with
/// `grid_resolution` points per coordinate and keeps the best point whose
/// constraint violations stay within half a grid step (row-wise Lipschitz
/// slack), which guarantees the true optimum has a representative on the
/// relaxed lattice.
#[derive(Debug, Clone)]
pub struct BruteForceReference {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Upper bound on `f(lattice point) - f*` from objective Lipschitz
    /// constants and the grid spacing.
    pub objective_slack: f64,
    /// Feasibility slack granted to each coupling row.
    pub coupling_relax: Vec<f64>,
    /// Feasibility slack granted to each agent's polytope rows.
    pub polytope_relax: Vec<Vec<f64>>,
    pub grid_points: usize,
}

impl BruteForceReference {
    /// Certified bound on `f* - objective` from LP sensitivity: the
    /// reference duals price the feasibility slack the grid was granted.
    pub fn lower_slack(&self, reference: &CentralizedReference) -> f64 {
        let mut s = 0.0;
        for (l, r) in reference.lambda_star.iter().zip(&self.coupling_relax) {
            s += l * r;
        }
        let mut idx = reference.lambda_star.len();
        for agent_relax in &self.polytope_relax {
            for r in agent_relax {
                s += reference.row_duals[idx].max(0.0) * r;
                idx += 1;
            }
        }
        s
    }
}

pub fn brute_force_reference(
    problem: &CoupledProblem,
    grid_resolution: usize,
) -> Result<BruteForceReference, SolveError> {
    let n = problem.total_dim();
    if n > 8 {
        return Err(SolveError::Invalid(format!(
            "brute force limited to 8 variables, instance has {}",
            n
        )));
    }
    if grid_resolution < 2 {
        return Err(SolveError::Invalid("grid resolution must be >= 2".into()));
    }
    let total_points = (grid_resolution as f64).powi(n as i32);
    if total_points > 1e6 {
        return Err(SolveError::Invalid(format!(
            "grid would have {:.0} points (limit 1e6)",
            total_points
        )));
    }

    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for a in problem.agents() {
        lower.extend_from_slice(a.feasible.lower());
        upper.extend_from_slice(a.feasible.upper());
    }
    let spacing: Vec<f64> = (0..n)
        .map(|j| (upper[j] - lower[j]) / (grid_resolution - 1) as f64)
        .collect();

    // Row-wise feasibility slack: |row| . h/2.
    let p = problem.coupling_dim();
    let mut coupling_relax = vec![0.0; p];
    let mut offsets = Vec::new();
    let mut off = 0;
    for a in problem.agents() {
        offsets.push(off);
        off += a.dim();
    }
    for c in 0..p {
        let mut s = 0.0;
        for (a, &o) in problem.agents().iter().zip(&offsets) {
            for j in 0..a.dim() {
                s += a.coupling.matrix()[(c, j)].abs() * spacing[o + j] / 2.0;
            }
        }
        coupling_relax[c] = s;
    }
    let polytope_relax: Vec<Vec<f64>> = problem
        .agents()
        .iter()
        .zip(&offsets)
        .map(|(a, &o)| {
            (0..a.feasible.rows().nrows())
                .map(|i| {
                    (0..a.dim())
                        .map(|j| a.feasible.rows()[(i, j)].abs() * spacing[o + j] / 2.0)
                        .sum()
                })
                .collect()
        })
        .collect();

    // Objective Lipschitz bound over the box, per coordinate.
    let mut objective_slack = 0.0;
    for (a, &o) in problem.agents().iter().zip(&offsets) {
        for j in 0..a.dim() {
            let mut lj = a.objective.linear_part()[j].abs();
            if let Some(q) = a.objective.quadratic_part() {
                for k in 0..a.dim() {
                    lj += q[(j, k)].abs() * lower[o + k].abs().max(upper[o + k].abs());
                }
            }
            objective_slack += lj * spacing[o + j] / 2.0;
        }
    }

    let mut index = vec![0usize; n];
    let mut x = lower.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut points = 0usize;
    loop {
        points += 1;
        // Feasibility with relaxation.
        let mut ok = true;
        'feas: for (a, (&o, relax)) in problem
            .agents()
            .iter()
            .zip(offsets.iter().zip(&polytope_relax))
        {
            let xi = &x[o..o + a.dim()];
            for i in 0..a.feasible.rows().nrows() {
                if dot(a.feasible.rows().row(i), xi) - a.feasible.rhs()[i] > relax[i] + 1e-12 {
                    ok = false;
                    break 'feas;
                }
            }
        }
        if ok {
            let total = problem.total_coupling(&x);
            for c in 0..p {
                if total[c] > coupling_relax[c] + 1e-12 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let f = problem.total_objective(&x);
            match &best {
                None => best = Some((f, x.clone())),
                Some((bf, _)) if f < *bf => best = Some((f, x.clone())),
                _ => {}
            }
        }
        // Advance the mixed-radix counter.
        let mut j = 0;
        loop {
            if j == n {
                let (objective, xbest) = match best {
                    Some(b) => b,
                    None => return Err(SolveError::Infeasible),
                };
                return Ok(BruteForceReference {
                    x: xbest,
                    objective,
                    objective_slack,
                    coupling_relax,
                    polytope_relax,
                    grid_points: points,
                });
            }
            index[j] += 1;
            if index[j] < grid_resolution {
                x[j] = lower[j] + index[j] as f64 * spacing[j];
                break;
            }
            index[j] = 0;
            x[j] = lower[j];
            j += 1;
        }
    }
}
