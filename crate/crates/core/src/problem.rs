//! Separable convex programs with coupling constraints.
//!
//! A [`CoupledProblem`] is a collection of `m` agents, each owning a decision
//! vector of its own dimension, a linear or convex-quadratic objective, an
//! affine coupling map, and a compact polytopic feasible set. The agents are
//! tied together only through the shared inequality
//! `sum_i (A_i x_i - b_i) <= 0`.
//!
//! All types are immutable after construction and every operation here is
//! pure, so values can be shared freely across threads.

use crate::linalg::{self, dot, Mat};
use crate::solver::{self, LpProblem, SolveStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance below which the Slater margin is considered zero (solver noise
/// floor).
pub const SLATER_TOL: f64 = 1e-7;

const PSD_TOL: f64 = 1e-9;
const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid problem data: {0}")]
    Invalid(String),
    #[error("multiplier vector has a negative component at index {0}")]
    NegativeMultiplier(usize),
    #[error("agent {0}: feasible set is empty")]
    EmptyFeasibleSet(usize),
    #[error("agent {agent}: unbounded polytope (coordinate {coord} has no finite bound)")]
    UnboundedPolytope { agent: usize, coord: usize },
    #[error("solver failure: {0}")]
    Solver(#[from] solver::SolveError),
}

/// Objective of a single agent: `q^T x + 1/2 x^T Q x` with `Q` symmetric PSD
/// (absent for linear objectives).
#[derive(Debug, Clone)]
pub struct ObjectiveForm {
    linear: Vec<f64>,
    quadratic: Option<Mat>,
}

impl ObjectiveForm {
    pub fn linear(q: Vec<f64>) -> Result<Self, ProblemError> {
        if !q.iter().all(|v| v.is_finite()) {
            return Err(ProblemError::Invalid("non-finite objective".into()));
        }
        Ok(ObjectiveForm {
            linear: q,
            quadratic: None,
        })
    }

    pub fn quadratic(q: Vec<f64>, quad: Mat) -> Result<Self, ProblemError> {
        let n = q.len();
        if quad.nrows() != n || quad.ncols() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "quadratic term is {}x{}, expected {}x{}",
                quad.nrows(),
                quad.ncols(),
                n,
                n
            )));
        }
        if !q.iter().all(|v| v.is_finite()) || !quad.is_finite() {
            return Err(ProblemError::Invalid("non-finite objective".into()));
        }
        if quad.symmetry_defect() > SYM_TOL {
            return Err(ProblemError::Invalid(format!(
                "quadratic term is not symmetric (defect {:.3e})",
                quad.symmetry_defect()
            )));
        }
        if n > 0 {
            let (eigvals, _) = linalg::symmetric_eigen(&quad);
            if eigvals[0] < -PSD_TOL {
                return Err(ProblemError::Invalid(format!(
                    "quadratic term is not positive semidefinite (min eigenvalue {:.3e})",
                    eigvals[0]
                )));
            }
        }
        Ok(ObjectiveForm {
            linear: q,
            quadratic: Some(quad),
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn linear_part(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic_part(&self) -> Option<&Mat> {
        self.quadratic.as_ref()
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.is_none()
    }

    /// `q^T x + 1/2 x^T Q x`
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = dot(&self.linear, x);
        if let Some(quad) = &self.quadratic {
            v += 0.5 * dot(x, &quad.matvec(x));
        }
        v
    }

    /// `q + Q x`
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.linear.clone();
        if let Some(quad) = &self.quadratic {
            linalg::axpy(&mut g, 1.0, &quad.matvec(x));
        }
        g
    }
}

/// Affine contribution of one agent to the coupling constraint:
/// `g_i(x) = A_i x - b_i`.
#[derive(Debug, Clone)]
pub struct CouplingMap {
    matrix: Mat,
    offset: Vec<f64>,
}

impl CouplingMap {
    pub fn new(matrix: Mat, offset: Vec<f64>) -> Result<Self, ProblemError> {
        if matrix.nrows() != offset.len() {
            return Err(ProblemError::DimensionMismatch(format!(
                "coupling matrix has {} rows but offset has {} entries",
                matrix.nrows(),
                offset.len()
            )));
        }
        if !matrix.is_finite() || !offset.iter().all(|v| v.is_finite()) {
            return Err(ProblemError::Invalid("non-finite coupling data".into()));
        }
        Ok(CouplingMap { matrix, offset })
    }

    /// Trivial `p = 0` coupling.
    pub fn none(n: usize) -> Self {
        CouplingMap {
            matrix: Mat::zeros(0, n),
            offset: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.matrix.matvec(x);
        for (gi, bi) in g.iter_mut().zip(&self.offset) {
            *gi -= bi;
        }
        g
    }
}

/// Compact polytope `{ x : C x <= d, lb <= x <= ub }`.
///
/// Compactness is enforced syntactically: every coordinate must carry finite
/// lower and upper bounds.
#[derive(Debug, Clone)]
pub struct Polytope {
    rows: Mat,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Polytope {
    pub fn new(
        rows: Mat,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, ProblemError> {
        let n = lower.len();
        if upper.len() != n || rows.ncols() != n || rows.nrows() != rhs.len() {
            return Err(ProblemError::DimensionMismatch(
                "polytope pieces disagree on dimensions".into(),
            ));
        }
        if !rows.is_finite() || !rhs.iter().all(|v| v.is_finite()) {
            return Err(ProblemError::Invalid("non-finite polytope rows".into()));
        }
        for j in 0..n {
            if !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(ProblemError::UnboundedPolytope { agent: 0, coord: j });
            }
            if lower[j] > upper[j] {
                return Err(ProblemError::Invalid(format!(
                    "coordinate {}: lower bound {} exceeds upper bound {}",
                    j, lower[j], upper[j]
                )));
            }
        }
        Ok(Polytope {
            rows,
            rhs,
            lower,
            upper,
        })
    }

    /// A pure box `lb <= x <= ub`.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ProblemError> {
        let n = lower.len();
        Polytope::new(Mat::zeros(0, n), Vec::new(), lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn rows(&self) -> &Mat {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Number of inequalities including the box bounds.
    pub fn inequality_count(&self) -> usize {
        self.rows.nrows() + 2 * self.dim()
    }

    /// Largest constraint violation of `x` (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows.nrows() {
            worst = worst.max(dot(self.rows.row(i), x) - self.rhs[i]);
        }
        for j in 0..self.dim() {
            worst = worst.max(self.lower[j] - x[j]);
            worst = worst.max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Certify non-emptiness by a feasibility solve.
    pub fn certify_nonempty(&self) -> Result<Vec<f64>, ProblemError> {
        let lp = LpProblem::new(
            vec![0.0; self.dim()],
            self.rows.clone(),
            self.rhs.clone(),
            self.lower.clone(),
            self.upper.clone(),
        )?;
        let sol = solver::solve_lp(&lp)?;
        match sol.status {
            SolveStatus::Optimal => Ok(sol.x),
            _ => Err(ProblemError::EmptyFeasibleSet(0)),
        }
    }
}

/// One agent of a coupled problem: the tuple (objective, coupling, feasible
/// set).
#[derive(Debug, Clone)]
pub struct AgentProblem {
    pub id: usize,
    pub objective: ObjectiveForm,
    pub coupling: CouplingMap,
    pub feasible: Polytope,
}

impl AgentProblem {
    pub fn new(
        id: usize,
        objective: ObjectiveForm,
        coupling: CouplingMap,
        feasible: Polytope,
    ) -> Result<Self, ProblemError> {
        let n = objective.dim();
        if coupling.input_dim() != n || feasible.dim() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "agent {}: objective dim {}, coupling input dim {}, polytope dim {}",
                id,
                n,
                coupling.input_dim(),
                feasible.dim()
            )));
        }
        Ok(AgentProblem {
            id,
            objective,
            coupling,
            feasible,
        })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn coupling_dim(&self) -> usize {
        self.coupling.dim()
    }
}

/// The full coupled program over `m` agents.
#[derive(Debug, Clone)]
pub struct CoupledProblem {
    agents: Vec<AgentProblem>,
    coupling_dim: usize,
}

impl CoupledProblem {
    pub fn new(agents: Vec<AgentProblem>) -> Result<Self, ProblemError> {
        if agents.is_empty() {
            return Err(ProblemError::Invalid("need at least one agent".into()));
        }
        let p = agents[0].coupling_dim();
        for a in &agents {
            if a.coupling_dim() != p {
                return Err(ProblemError::DimensionMismatch(format!(
                    "agent {} has coupling dimension {}, expected {}",
                    a.id,
                    a.coupling_dim(),
                    p
                )));
            }
        }
        Ok(CoupledProblem {
            agents,
            coupling_dim: p,
        })
    }

    pub fn agents(&self) -> &[AgentProblem] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentProblem {
        &self.agents[i]
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn coupling_dim(&self) -> usize {
        self.coupling_dim
    }

    pub fn total_dim(&self) -> usize {
        self.agents.iter().map(|a| a.dim()).sum()
    }

    /// Split a stacked decision vector into per-agent slices.
    pub fn split<'a>(&self, x: &'a [f64]) -> Vec<&'a [f64]> {
        assert_eq!(x.len(), self.total_dim());
        let mut out = Vec::with_capacity(self.agents.len());
        let mut offset = 0;
        for a in &self.agents {
            out.push(&x[offset..offset + a.dim()]);
            offset += a.dim();
        }
        out
    }

    /// `sum_i f_i(x_i)` for a stacked decision vector.
    pub fn total_objective(&self, x: &[f64]) -> f64 {
        self.split(x)
            .iter()
            .zip(&self.agents)
            .map(|(xi, a)| a.objective.eval(xi))
            .sum()
    }

    /// `sum_i g_i(x_i)` for a stacked decision vector.
    pub fn total_coupling(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.coupling_dim];
        for (xi, a) in self.split(x).iter().zip(&self.agents) {
            linalg::axpy(&mut g, 1.0, &a.coupling.eval(xi));
        }
        g
    }
}

/// Certified uniform bound on `||g_i(x_i)||` over the feasible sets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GBound {
    pub value: f64,
}

/// `f_i(x)`
pub fn eval_objective(agent: &AgentProblem, x: &[f64]) -> Result<f64, ProblemError> {
    if x.len() != agent.dim() {
        return Err(ProblemError::DimensionMismatch(format!(
            "agent {}: x has {} entries, expected {}",
            agent.id,
            x.len(),
            agent.dim()
        )));
    }
    Ok(agent.objective.eval(x))
}

/// `g_i(x) = A_i x - b_i`
pub fn eval_coupling(agent: &AgentProblem, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
    if x.len() != agent.dim() {
        return Err(ProblemError::DimensionMismatch(format!(
            "agent {}: x has {} entries, expected {}",
            agent.id,
            x.len(),
            agent.dim()
        )));
    }
    Ok(agent.coupling.eval(x))
}

/// `L_i(x, lambda) = f_i(x) + lambda^T g_i(x)`; summing over agents yields the
/// full Lagrangian.
pub fn eval_local_lagrangian(
    agent: &AgentProblem,
    x: &[f64],
    lambda: &[f64],
) -> Result<f64, ProblemError> {
    if lambda.len() != agent.coupling_dim() {
        return Err(ProblemError::DimensionMismatch(format!(
            "agent {}: lambda has {} entries, expected {}",
            agent.id,
            lambda.len(),
            agent.coupling_dim()
        )));
    }
    if let Some(j) = lambda.iter().position(|&v| v < 0.0) {
        return Err(ProblemError::NegativeMultiplier(j));
    }
    let f = eval_objective(agent, x)?;
    let g = agent.coupling.eval(x);
    Ok(f + dot(lambda, &g))
}

/// Agent dual function `phi_i(lambda) = min_{x in X_i} L_i(x, lambda)`.
///
/// Returns the optimal value and a minimizer in `X_i`. The minimizer is the
/// solver's deterministic tie-break when the argmin is not a singleton.
pub fn eval_dual_function(
    agent: &AgentProblem,
    lambda: &[f64],
) -> Result<(f64, Vec<f64>), ProblemError> {
    if lambda.len() != agent.coupling_dim() {
        return Err(ProblemError::DimensionMismatch(format!(
            "agent {}: lambda has {} entries, expected {}",
            agent.id,
            lambda.len(),
            agent.coupling_dim()
        )));
    }
    if let Some(j) = lambda.iter().position(|&v| v < 0.0) {
        return Err(ProblemError::NegativeMultiplier(j));
    }
    // min f(x) + lambda^T (A x - b)  =  min (q + A^T lambda)^T x [+ quad] - lambda^T b
    let mut cost = agent.objective.linear_part().to_vec();
    linalg::axpy(&mut cost, 1.0, &agent.coupling.matrix().t_matvec(lambda));
    let constant = -dot(lambda, agent.coupling.offset());
    let x = match agent.objective.quadratic_part() {
        None => {
            let lp = LpProblem::new(
                cost,
                agent.feasible.rows().clone(),
                agent.feasible.rhs().to_vec(),
                agent.feasible.lower().to_vec(),
                agent.feasible.upper().to_vec(),
            )?;
            let sol = solver::solve_lp(&lp)?;
            match sol.status {
                SolveStatus::Optimal => sol.x,
                _ => return Err(ProblemError::EmptyFeasibleSet(agent.id)),
            }
        }
        Some(quad) => {
            let sol = solver::solve_qp(
                quad,
                &cost,
                agent.feasible.rows(),
                agent.feasible.rhs(),
                agent.feasible.lower(),
                agent.feasible.upper(),
            )?;
            match sol.status {
                SolveStatus::Optimal => sol.x,
                _ => return Err(ProblemError::EmptyFeasibleSet(agent.id)),
            }
        }
    };
    let value =
        agent.objective.eval(&x) + dot(lambda, &agent.coupling.matrix().matvec(&x)) + constant;
    Ok((value, x))
}

/// Result of the Slater-condition check.
#[derive(Debug, Clone)]
pub struct SlaterReport {
    pub holds: bool,
    /// Strictly feasible stacked point when `holds`.
    pub witness: Option<Vec<f64>>,
    /// Optimal interiority margin of the auxiliary program.
    pub margin: f64,
}

/// Check Slater's condition by an auxiliary margin-maximization LP.
///
/// The program maximizes `s` subject to every agent's polytope rows, the
/// coupling inequality `sum_i g_i(x_i) <= 0` (equality allowed: all coupling
/// components are affine here), and `lb + s <= x <= ub - s` on every
/// coordinate whose box has nonzero width. The condition is declared to hold
/// when the optimal margin exceeds [`SLATER_TOL`].
pub fn check_slater(problem: &CoupledProblem) -> Result<SlaterReport, ProblemError> {
    let n = problem.total_dim();
    let p = problem.coupling_dim();
    // Variables: stacked x (n entries) then the margin s.
    let mut width_cap = f64::INFINITY;
    let mut offsets = Vec::with_capacity(problem.num_agents());
    let mut off = 0;
    for a in problem.agents() {
        offsets.push(off);
        off += a.dim();
        for j in 0..a.dim() {
            let w = a.feasible.upper()[j] - a.feasible.lower()[j];
            if w > 0.0 {
                width_cap = width_cap.min(w / 2.0);
            }
        }
    }
    if !width_cap.is_finite() {
        // Every coordinate is pinned; margin unconstrained by boxes.
        width_cap = 1.0;
    }

    let total_rows: usize = problem
        .agents()
        .iter()
        .map(|a| a.feasible.rows().nrows())
        .sum();
    let margin_rows: usize = problem
        .agents()
        .iter()
        .map(|a| {
            (0..a.dim())
                .filter(|&j| a.feasible.upper()[j] > a.feasible.lower()[j])
                .count()
                * 2
        })
        .sum();
    let mut rows = Mat::zeros(total_rows + margin_rows + p, n + 1);
    let mut rhs = vec![0.0; rows.nrows()];
    let mut r = 0;
    for (a, &off) in problem.agents().iter().zip(&offsets) {
        let pr = a.feasible.rows();
        for i in 0..pr.nrows() {
            for j in 0..pr.ncols() {
                rows[(r, off + j)] = pr[(i, j)];
            }
            rhs[r] = a.feasible.rhs()[i];
            r += 1;
        }
    }
    for (a, &off) in problem.agents().iter().zip(&offsets) {
        for j in 0..a.dim() {
            let (lo, hi) = (a.feasible.lower()[j], a.feasible.upper()[j]);
            if hi > lo {
                // -x_j + s <= -lb_j
                rows[(r, off + j)] = -1.0;
                rows[(r, n)] = 1.0;
                rhs[r] = -lo;
                r += 1;
                // x_j + s <= ub_j
                rows[(r, off + j)] = 1.0;
                rows[(r, n)] = 1.0;
                rhs[r] = hi;
                r += 1;
            }
        }
    }
    for c in 0..p {
        let mut b_total = 0.0;
        for (a, &off) in problem.agents().iter().zip(&offsets) {
            let am = a.coupling.matrix();
            for j in 0..a.dim() {
                rows[(r, off + j)] = am[(c, j)];
            }
            b_total += a.coupling.offset()[c];
        }
        rhs[r] = b_total;
        r += 1;
    }
    debug_assert_eq!(r, rows.nrows());

    let mut cost = vec![0.0; n + 1];
    cost[n] = -1.0; // maximize s
    let mut lower = Vec::with_capacity(n + 1);
    let mut upper = Vec::with_capacity(n + 1);
    for a in problem.agents() {
        lower.extend_from_slice(a.feasible.lower());
        upper.extend_from_slice(a.feasible.upper());
    }
    lower.push(0.0);
    upper.push(width_cap.max(0.0));

    let lp = LpProblem::new(cost, rows, rhs, lower, upper)?;
    let sol = solver::solve_lp(&lp)?;
    match sol.status {
        SolveStatus::Optimal => {
            let margin = sol.x[n];
            let holds = margin > SLATER_TOL;
            Ok(SlaterReport {
                holds,
                witness: if holds {
                    Some(sol.x[..n].to_vec())
                } else {
                    None
                },
                margin,
            })
        }
        SolveStatus::Infeasible => Ok(SlaterReport {
            holds: false,
            witness: None,
            margin: f64::NEG_INFINITY,
        }),
        SolveStatus::Unbounded => Err(ProblemError::Invalid(
            "slater auxiliary program reported unbounded".into(),
        )),
    }
}

/// Compute a certified over-approximation `G >= max_i max_{x in X_i} ||g_i(x)||`.
///
/// Each coupling component is maximized in both directions over the agent's
/// polytope (2p LP solves per agent); the per-agent bound is the 2-norm of the
/// vector of per-component maxima, which dominates the true maximum norm.
pub fn compute_g_bound(problem: &CoupledProblem) -> Result<GBound, ProblemError> {
    let p = problem.coupling_dim();
    let mut g = 0.0f64;
    for a in problem.agents() {
        let mut sq = 0.0;
        for c in 0..p {
            let row: Vec<f64> = (0..a.dim()).map(|j| a.coupling.matrix()[(c, j)]).collect();
            let b = a.coupling.offset()[c];
            let mut comp_max = 0.0f64;
            for sign in [1.0, -1.0] {
                // maximize sign * (row . x - b)  ==  minimize -sign * row . x
                let cost: Vec<f64> = row.iter().map(|v| -sign * v).collect();
                let lp = LpProblem::new(
                    cost,
                    a.feasible.rows().clone(),
                    a.feasible.rhs().to_vec(),
                    a.feasible.lower().to_vec(),
                    a.feasible.upper().to_vec(),
                )?;
                let sol = solver::solve_lp(&lp)?;
                match sol.status {
                    SolveStatus::Optimal => {
                        let v = sign * (dot(&row, &sol.x) - b);
                        comp_max = comp_max.max(v);
                    }
                    SolveStatus::Infeasible => {
                        return Err(ProblemError::EmptyFeasibleSet(a.id));
                    }
                    SolveStatus::Unbounded => {
                        return Err(ProblemError::UnboundedPolytope {
                            agent: a.id,
                            coord: 0,
                        });
                    }
                }
            }
            sq += comp_max * comp_max;
        }
        g = g.max(sq.sqrt());
    }
    Ok(GBound { value: g })
}

// ---------------------------------------------------------------------------
// JSON problem files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ObjectiveJson {
    q: Vec<f64>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    quad: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct CouplingJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    d: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AgentJson {
    n: usize,
    objective: ObjectiveJson,
    coupling: CouplingJson,
    polytope: PolytopeJson,
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    m: usize,
    p: usize,
    agents: Vec<AgentJson>,
}

impl CoupledProblem {
    pub fn to_json(&self) -> String {
        let doc = ProblemJson {
            m: self.num_agents(),
            p: self.coupling_dim(),
            agents: self
                .agents
                .iter()
                .map(|a| AgentJson {
                    n: a.dim(),
                    objective: ObjectiveJson {
                        q: a.objective.linear_part().to_vec(),
                        quad: a.objective.quadratic_part().map(|m| m.to_nested()),
                    },
                    coupling: CouplingJson {
                        a: a.coupling.matrix().to_nested(),
                        b: a.coupling.offset().to_vec(),
                    },
                    polytope: PolytopeJson {
                        c: a.feasible.rows().to_nested(),
                        d: a.feasible.rhs().to_vec(),
                        lb: a.feasible.lower().to_vec(),
                        ub: a.feasible.upper().to_vec(),
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("problem serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let doc: ProblemJson =
            serde_json::from_str(text).map_err(|e| ProblemError::Invalid(e.to_string()))?;
        if doc.agents.len() != doc.m {
            return Err(ProblemError::Invalid(format!(
                "declared m = {} but file contains {} agents",
                doc.m,
                doc.agents.len()
            )));
        }
        let mut agents = Vec::with_capacity(doc.agents.len());
        for (id, aj) in doc.agents.into_iter().enumerate() {
            let n = aj.n;
            if aj.objective.q.len() != n {
                return Err(ProblemError::Invalid(format!(
                    "agent {}: objective dimension mismatch",
                    id
                )));
            }
            let objective = match aj.objective.quad {
                None => ObjectiveForm::linear(aj.objective.q)?,
                Some(qm) => {
                    let quad = Mat::from_nested(&qm, Some(n)).map_err(ProblemError::Invalid)?;
                    ObjectiveForm::quadratic(aj.objective.q, quad)?
                }
            };
            let a_mat = Mat::from_nested(&aj.coupling.a, Some(n)).map_err(ProblemError::Invalid)?;
            if a_mat.nrows() != doc.p {
                return Err(ProblemError::Invalid(format!(
                    "agent {}: coupling has {} rows, expected p = {}",
                    id,
                    a_mat.nrows(),
                    doc.p
                )));
            }
            let coupling = CouplingMap::new(a_mat, aj.coupling.b)?;
            let c_mat = Mat::from_nested(&aj.polytope.c, Some(n)).map_err(ProblemError::Invalid)?;
            let feasible = Polytope::new(c_mat, aj.polytope.d, aj.polytope.lb, aj.polytope.ub)
                .map_err(|e| match e {
                    ProblemError::UnboundedPolytope { coord, .. } => {
                        ProblemError::UnboundedPolytope { agent: id, coord }
                    }
                    other => other,
                })?;
            agents.push(AgentProblem::new(id, objective, coupling, feasible)?);
        }
        CoupledProblem::new(agents)
    }
}

/// Per-assumption validation report for a problem instance.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemReport {
    /// Objectives convex (PSD quadratic part) and all data affine: holds by
    /// construction, recorded for completeness.
    pub convexity_ok: bool,
    /// Every coordinate carries finite bounds and every feasible set is
    /// certified nonempty.
    pub compactness_ok: bool,
    /// Slater margin check.
    pub slater_ok: bool,
    pub slater_margin: f64,
    /// False when the margin program was skipped (instance too large); the
    /// condition is then unchecked rather than failed.
    pub slater_checked: bool,
    pub empty_agents: Vec<usize>,
}

impl ProblemReport {
    pub fn all_ok(&self) -> bool {
        self.convexity_ok && self.compactness_ok && self.slater_ok
    }
}

/// Run the structural assumption checks (convexity, compactness, Slater).
pub fn validate_problem(problem: &CoupledProblem) -> Result<ProblemReport, ProblemError> {
    validate_problem_bounded(problem, usize::MAX)
}

/// Like [`validate_problem`], but skip the Slater margin program when the
/// stacked dimension exceeds `slater_dim_limit` (its auxiliary LP carries
/// two interiority rows per coordinate and grows cubically). A skipped check
/// reports `slater_ok = true` with `slater_checked = false`.
pub fn validate_problem_bounded(
    problem: &CoupledProblem,
    slater_dim_limit: usize,
) -> Result<ProblemReport, ProblemError> {
    let mut empty_agents = Vec::new();
    for a in problem.agents() {
        if a.feasible.certify_nonempty().is_err() {
            empty_agents.push(a.id);
        }
    }
    let compactness_ok = empty_agents.is_empty();
    let run_slater = compactness_ok && problem.total_dim() <= slater_dim_limit;
    let slater = if run_slater {
        check_slater(problem)?
    } else {
        SlaterReport {
            holds: compactness_ok, // unchecked, not failed
            witness: None,
            margin: f64::NAN,
        }
    };
    Ok(ProblemReport {
        convexity_ok: true,
        compactness_ok,
        slater_ok: slater.holds,
        slater_margin: slater.margin,
        slater_checked: run_slater,
        empty_agents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min x on [0,1] with g(x) = -x (so lambda prices a >=-style constraint).
    fn scalar_agent() -> AgentProblem {
        AgentProblem::new(
            0,
            ObjectiveForm::linear(vec![1.0]).unwrap(),
            CouplingMap::new(Mat::from_rows_flat(1, 1, vec![-1.0]), vec![0.0]).unwrap(),
            Polytope::boxed(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn objective_evaluation() {
        let a = AgentProblem::new(
            0,
            ObjectiveForm::linear(vec![1.0, 1.0]).unwrap(),
            CouplingMap::none(2),
            Polytope::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(eval_objective(&a, &[0.0, 0.0]).unwrap(), 0.0);

        let b = AgentProblem::new(
            1,
            ObjectiveForm::linear(vec![1.0, 2.0]).unwrap(),
            CouplingMap::none(2),
            Polytope::boxed(vec![0.0, 0.0], vec![5.0, 5.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(eval_objective(&b, &[3.0, 1.0]).unwrap(), 5.0);

        let c = AgentProblem::new(
            2,
            ObjectiveForm::quadratic(vec![0.0, 0.0], Mat::identity(2)).unwrap(),
            CouplingMap::none(2),
            Polytope::boxed(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(eval_objective(&c, &[2.0, 0.0]).unwrap(), 2.0);

        assert!(matches!(
            eval_objective(&a, &[1.0]),
            Err(ProblemError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn coupling_evaluation() {
        let a = AgentProblem::new(
            0,
            ObjectiveForm::linear(vec![0.0]).unwrap(),
            CouplingMap::new(Mat::from_rows_flat(1, 1, vec![1.0]), vec![0.0]).unwrap(),
            Polytope::boxed(vec![0.0], vec![5.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(eval_coupling(&a, &[3.0]).unwrap(), vec![3.0]);

        let b = AgentProblem::new(
            1,
            ObjectiveForm::linear(vec![0.0, 0.0]).unwrap(),
            CouplingMap::new(Mat::from_rows_flat(1, 2, vec![1.0, 1.0]), vec![1.0]).unwrap(),
            Polytope::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(eval_coupling(&b, &[0.0, 0.0]).unwrap(), vec![-1.0]);

        let c = AgentProblem::new(
            2,
            ObjectiveForm::linear(vec![0.0]).unwrap(),
            CouplingMap::new(Mat::zeros(1, 1), vec![2.0]).unwrap(),
            Polytope::boxed(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(eval_coupling(&c, &[0.7]).unwrap(), vec![-2.0]);
    }

    #[test]
    fn local_lagrangian() {
        let a = scalar_agent();
        // lambda = 0 collapses to the objective.
        assert_eq!(
            eval_local_lagrangian(&a, &[0.3], &[0.0]).unwrap(),
            eval_objective(&a, &[0.3]).unwrap()
        );
        // f = x, g = -x, x = 1, lambda = 2 -> 1 + 2 * (-1) = -1
        assert_eq!(eval_local_lagrangian(&a, &[1.0], &[2.0]).unwrap(), -1.0);
        // Negative lambda rejected.
        assert!(matches!(
            eval_local_lagrangian(&a, &[1.0], &[-0.1]),
            Err(ProblemError::NegativeMultiplier(0))
        ));
        // Additivity across two agents.
        let b = scalar_agent();
        let l1 = eval_local_lagrangian(&a, &[0.25], &[1.5]).unwrap();
        let l2 = eval_local_lagrangian(&b, &[0.75], &[1.5]).unwrap();
        let sum_f = eval_objective(&a, &[0.25]).unwrap() + eval_objective(&b, &[0.75]).unwrap();
        let sum_g = eval_coupling(&a, &[0.25]).unwrap()[0] + eval_coupling(&b, &[0.75]).unwrap()[0];
        assert!((l1 + l2 - (sum_f + 1.5 * sum_g)).abs() < 1e-12);
    }

    #[test]
    fn dual_function_values() {
        let a = scalar_agent();
        // lambda = 0: min x on [0,1] = 0 at x = 0.
        let (v0, x0) = eval_dual_function(&a, &[0.0]).unwrap();
        assert!(v0.abs() < 1e-12);
        assert!(x0[0].abs() < 1e-12);
        // lambda = 2: min (1-2) x = -x on [0,1] -> x = 1, value -1.
        let (v2, x2) = eval_dual_function(&a, &[2.0]).unwrap();
        assert!((v2 + 1.0).abs() < 1e-12);
        assert!((x2[0] - 1.0).abs() < 1e-12);
        // lambda = 1: degenerate; deterministic tie-break keeps x at its
        // lower bound.
        let (v1, x1) = eval_dual_function(&a, &[1.0]).unwrap();
        assert!(v1.abs() < 1e-12);
        assert!(x1[0].abs() < 1e-12);
    }

    /// Two agents, coupling 1 - x1 - x2 <= 0 with X_i = [0,1].
    fn toy_two_agents() -> CoupledProblem {
        let agent = |id: usize| {
            AgentProblem::new(
                id,
                ObjectiveForm::linear(vec![1.0]).unwrap(),
                CouplingMap::new(Mat::from_rows_flat(1, 1, vec![-1.0]), vec![-0.5]).unwrap(),
                Polytope::boxed(vec![0.0], vec![1.0]).unwrap(),
            )
            .unwrap()
        };
        CoupledProblem::new(vec![agent(0), agent(1)]).unwrap()
    }

    #[test]
    fn slater_holds_on_toy() {
        let p = toy_two_agents();
        let rep = check_slater(&p).unwrap();
        assert!(rep.holds);
        let w = rep.witness.unwrap();
        // Witness satisfies its own certificate.
        let total = p.total_coupling(&w);
        assert!(total[0] <= 1e-12);
        for (xi, a) in p.split(&w).iter().zip(p.agents()) {
            assert!(a.feasible.lower()[0] + rep.margin <= xi[0] + 1e-9);
            assert!(xi[0] <= a.feasible.upper()[0] - rep.margin + 1e-9);
        }
    }

    #[test]
    fn slater_fails_when_coupling_unreachable() {
        // 1 - x1 <= 0 with X1 = [0, 0.5]: infeasible.
        let a = AgentProblem::new(
            0,
            ObjectiveForm::linear(vec![1.0]).unwrap(),
            CouplingMap::new(Mat::from_rows_flat(1, 1, vec![-1.0]), vec![-1.0]).unwrap(),
            Polytope::boxed(vec![0.0], vec![0.5]).unwrap(),
        )
        .unwrap();
        let p = CoupledProblem::new(vec![a]).unwrap();
        let rep = check_slater(&p).unwrap();
        assert!(!rep.holds);
        assert!(rep.witness.is_none());
    }

    #[test]
    fn slater_vacuous_without_coupling() {
        let a = AgentProblem::new(
            0,
            ObjectiveForm::linear(vec![1.0]).unwrap(),
            CouplingMap::none(1),
            Polytope::boxed(vec![0.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let p = CoupledProblem::new(vec![a]).unwrap();
        let rep = check_slater(&p).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn g_bound_examples() {
        // A = [[1]], b = [0], X = [0,1] -> G = 1.
        let mk = |a: Mat, b: Vec<f64>| {
            CoupledProblem::new(vec![AgentProblem::new(
                0,
                ObjectiveForm::linear(vec![0.0]).unwrap(),
                CouplingMap::new(a, b).unwrap(),
                Polytope::boxed(vec![0.0], vec![1.0]).unwrap(),
            )
            .unwrap()])
            .unwrap()
        };
        let g1 = compute_g_bound(&mk(Mat::from_rows_flat(1, 1, vec![1.0]), vec![0.0])).unwrap();
        assert!((g1.value - 1.0).abs() < 1e-9);

        let g2 = compute_g_bound(&mk(
            Mat::from_rows_flat(2, 1, vec![1.0, -1.0]),
            vec![0.0, 0.0],
        ))
        .unwrap();
        assert!((g2.value - 2f64.sqrt()).abs() < 1e-9);

        let g3 = compute_g_bound(&mk(Mat::zeros(1, 1), vec![5.0])).unwrap();
        assert!((g3.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn g_bound_dominates_box_corners() {
        let p = toy_two_agents();
        let g = compute_g_bound(&p).unwrap();
        for a in p.agents() {
            for corner in [[0.0], [1.0]] {
                let gi = a.coupling.eval(&corner);
                assert!(linalg::norm2(&gi) <= g.value + 1e-9);
            }
        }
    }

    #[test]
    fn bounded_validator_skips_large_slater_program() {
        let p = toy_two_agents();
        let checked = validate_problem_bounded(&p, 10).unwrap();
        assert!(checked.slater_checked);
        assert!(checked.all_ok());
        let skipped = validate_problem_bounded(&p, 1).unwrap();
        assert!(!skipped.slater_checked);
        assert!(skipped.all_ok()); // unchecked, not failed
        assert!(skipped.slater_margin.is_nan());
    }

    #[test]
    fn json_round_trip() {
        let p = toy_two_agents();
        let text = p.to_json();
        let q = CoupledProblem::from_json(&text).unwrap();
        assert_eq!(q.num_agents(), 2);
        assert_eq!(q.coupling_dim(), 1);
        assert_eq!(q.agent(0).coupling.offset(), &[-0.5]);
    }

    #[test]
    fn psd_rejection() {
        let bad = Mat::from_rows_flat(2, 2, vec![1.0, 0.0, 0.0, -1.0]);
        assert!(ObjectiveForm::quadratic(vec![0.0, 0.0], bad).is_err());
        let asym = Mat::from_rows_flat(2, 2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(ObjectiveForm::quadratic(vec![0.0, 0.0], asym).is_err());
    }

    #[test]
    fn polytope_requires_finite_bounds() {
        assert!(Polytope::boxed(vec![0.0], vec![f64::INFINITY]).is_err());
    }
}
