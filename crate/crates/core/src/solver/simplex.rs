//! Dense bounded-variable revised simplex.
//!
//! Solves `min c^T x` subject to `C x <= d` and finite box bounds
//! `lb <= x <= ub`. Slack variables turn the rows into equalities; the basis
//! inverse is kept explicitly and updated on every pivot, with a periodic
//! full refactorization to control drift.
//!
//! Pivoting is deterministic. Entering uses most-negative reduced cost with
//! smallest-index tie-breaks and falls back to Bland's rule (least-index
//! eligible) after a run of degenerate pivots, which preserves the
//! finite-termination guarantee: once a nondegenerate step occurs the
//! objective has strictly decreased, so no earlier basis can reappear.
//! Leaving always breaks ratio ties by least variable index, with artificial
//! variables ordered first so phase 1 drives them out eagerly.

use super::{LpProblem, LpSolution, SolveError, SolveStatus};

const RC_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const RATIO_TIE_TOL: f64 = 1e-12;
const SNAP_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 256;
const DEGENERATE_LIMIT: usize = 40;
const STEP_DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

/// Reusable simplex workspace bound to one constraint system.
///
/// The constraint data is fixed at construction; the cost vector may change
/// between solves, in which case the previous optimal basis stays primal
/// feasible and re-optimization is warm-started from it.
pub struct Simplex {
    n: usize,
    r: usize,
    /// Column-major constraint matrix (n x r) for O(1) column slices.
    cols: Vec<f64>,
    rhs: Vec<f64>,
    /// Bounds for structural variables then slacks then artificials.
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    /// Index of first artificial variable (== n + r).
    art_start: usize,
    num_art: usize,
    /// Row each artificial variable was created for.
    art_rows: Vec<usize>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    /// Explicit basis inverse, row-major r x r.
    binv: Vec<f64>,
    /// Values of the basic variables, aligned with `basis`.
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    has_feasible_basis: bool,
    infeas_tol: f64,
    // scratch
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Simplex {
    pub fn new(lp: &LpProblem) -> Result<Self, SolveError> {
        let n = lp.cost.len();
        let r = lp.rows.nrows();
        let flat = lp.rows.as_slice();
        let mut cols = vec![0.0; n * r];
        for i in 0..r {
            for j in 0..n {
                cols[j * r + i] = flat[i * n + j];
            }
        }
        let mut lb = lp.lower.clone();
        let mut ub = lp.upper.clone();
        lb.extend(std::iter::repeat_n(0.0, r));
        ub.extend(std::iter::repeat_n(f64::INFINITY, r));
        let d_scale = lp.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Simplex {
            n,
            r,
            cols,
            rhs: lp.rhs.clone(),
            lb,
            ub,
            cost: lp.cost.clone(),
            art_start: n + r,
            num_art: 0,
            art_rows: Vec::new(),
            basis: Vec::new(),
            state: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            pivots_since_refactor: 0,
            has_feasible_basis: false,
            infeas_tol: 1e-9 * (1.0 + d_scale),
            y: vec![0.0; r],
            w: vec![0.0; r],
        })
    }

    /// Cold solve: reset to the slack basis and run both phases.
    pub fn solve(&mut self) -> Result<LpSolution, SolveError> {
        self.has_feasible_basis = false;
        self.cold_start()?;
        if !self.has_feasible_basis {
            return Ok(LpSolution::non_optimal(SolveStatus::Infeasible));
        }
        self.optimize(false)
    }

    /// Re-optimize after swapping in a new cost vector.
    ///
    /// Constraints are unchanged, so a previously reached basis is still
    /// primal feasible and phase 1 can be skipped entirely.
    pub fn resolve_with_cost(&mut self, cost: &[f64]) -> Result<LpSolution, SolveError> {
        assert_eq!(cost.len(), self.n, "cost vector length mismatch");
        self.cost.clear();
        self.cost.extend_from_slice(cost);
        if !self.has_feasible_basis {
            return self.solve();
        }
        self.recompute_xb();
        if self.basic_bound_violation() > 1e-7 {
            // Accumulated drift: rebuild from scratch.
            return self.solve();
        }
        self.optimize(false)
    }

    fn var_cost(&self, v: usize, phase1: bool) -> f64 {
        if phase1 {
            if v >= self.art_start {
                1.0
            } else {
                0.0
            }
        } else if v < self.n {
            self.cost[v]
        } else {
            0.0
        }
    }

    /// Tie-break ordering: artificials first, then natural index.
    fn ord(&self, v: usize) -> usize {
        if v >= self.art_start {
            v - self.art_start
        } else {
            v + self.num_art
        }
    }

    fn col_slice(&self, j: usize) -> &[f64] {
        &self.cols[j * self.r..(j + 1) * self.r]
    }

    /// Column of variable `v` applied to `y` (dot product).
    fn rc_dot(&self, v: usize) -> f64 {
        if v < self.n {
            let col = self.col_slice(v);
            col.iter().zip(&self.y).map(|(a, b)| a * b).sum()
        } else if v < self.art_start {
            self.y[v - self.n]
        } else {
            -self.y[self.art_row(v)]
        }
    }

    fn art_row(&self, v: usize) -> usize {
        // Artificial variables remember their row through `basis` placement;
        // we track rows in `art_rows`.
        self.art_rows[v - self.art_start]
    }

    fn ftran(&mut self, v: usize) {
        // w = B^-1 A_v
        if v < self.n {
            let col = &self.cols[v * self.r..(v + 1) * self.r];
            for k in 0..self.r {
                let row = &self.binv[k * self.r..(k + 1) * self.r];
                self.w[k] = row.iter().zip(col).map(|(a, b)| a * b).sum();
            }
        } else if v < self.art_start {
            let j = v - self.n;
            for k in 0..self.r {
                self.w[k] = self.binv[k * self.r + j];
            }
        } else {
            let j = self.art_row(v);
            for k in 0..self.r {
                self.w[k] = -self.binv[k * self.r + j];
            }
        }
    }

    fn btran(&mut self, phase1: bool) {
        // y^T = c_B^T B^-1
        for i in 0..self.r {
            self.y[i] = 0.0;
        }
        for k in 0..self.r {
            let cb = self.var_cost(self.basis[k], phase1);
            if cb != 0.0 {
                let row = &self.binv[k * self.r..(k + 1) * self.r];
                for i in 0..self.r {
                    self.y[i] += cb * row[i];
                }
            }
        }
    }

    fn bound_value(&self, v: usize) -> f64 {
        match self.state[v] {
            VarState::AtLower => self.lb[v],
            VarState::AtUpper => self.ub[v],
            VarState::Basic => unreachable!("bound_value on basic variable"),
        }
    }

    fn recompute_xb(&mut self) {
        // xb = B^-1 (d - sum over nonbasic structural columns at their bound)
        let mut adj = self.rhs.clone();
        for j in 0..self.n {
            if self.state[j] != VarState::Basic {
                let v = self.bound_value(j);
                if v != 0.0 {
                    let col = self.col_slice(j);
                    for i in 0..self.r {
                        adj[i] -= col[i] * v;
                    }
                }
            }
        }
        // Nonbasic slacks and artificials sit at zero.
        for k in 0..self.r {
            let row = &self.binv[k * self.r..(k + 1) * self.r];
            self.xb[k] = row.iter().zip(&adj).map(|(a, b)| a * b).sum();
        }
        self.snap_xb();
    }

    fn snap_xb(&mut self) {
        for k in 0..self.r {
            let v = self.basis[k];
            if (self.xb[k] - self.lb[v]).abs() <= SNAP_TOL {
                self.xb[k] = self.lb[v];
            } else if self.ub[v].is_finite() && (self.xb[k] - self.ub[v]).abs() <= SNAP_TOL {
                self.xb[k] = self.ub[v];
            }
        }
    }

    fn basic_bound_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.r {
            let v = self.basis[k];
            worst = worst.max(self.lb[v] - self.xb[k]);
            if self.ub[v].is_finite() {
                worst = worst.max(self.xb[k] - self.ub[v]);
            }
        }
        worst
    }

    fn refactor(&mut self) -> Result<(), SolveError> {
        // Gauss-Jordan inversion of the current basis matrix.
        let r = self.r;
        if r == 0 {
            self.pivots_since_refactor = 0;
            return Ok(());
        }
        let mut aug = vec![0.0; r * 2 * r];
        for k in 0..r {
            let v = self.basis[k];
            if v < self.n {
                let col = self.col_slice(v);
                for i in 0..r {
                    aug[i * 2 * r + k] = col[i];
                }
            } else if v < self.art_start {
                aug[(v - self.n) * 2 * r + k] = 1.0;
            } else {
                aug[self.art_row(v) * 2 * r + k] = -1.0;
            }
        }
        for i in 0..r {
            aug[i * 2 * r + r + i] = 1.0;
        }
        for col in 0..r {
            let mut piv_row = col;
            let mut piv_val = aug[col * 2 * r + col].abs();
            for i in (col + 1)..r {
                let v = aug[i * 2 * r + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = i;
                }
            }
            if piv_val < 1e-12 {
                return Err(SolveError::Numerical(
                    "singular basis during refactorization".into(),
                ));
            }
            if piv_row != col {
                for j in 0..2 * r {
                    aug.swap(col * 2 * r + j, piv_row * 2 * r + j);
                }
            }
            let inv = 1.0 / aug[col * 2 * r + col];
            for j in 0..2 * r {
                aug[col * 2 * r + j] *= inv;
            }
            for i in 0..r {
                if i != col {
                    let f = aug[i * 2 * r + col];
                    if f != 0.0 {
                        for j in 0..2 * r {
                            aug[i * 2 * r + j] -= f * aug[col * 2 * r + j];
                        }
                    }
                }
            }
        }
        for i in 0..r {
            for j in 0..r {
                self.binv[i * self.r + j] = aug[i * 2 * r + r + j];
            }
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn cold_start(&mut self) -> Result<(), SolveError> {
        let r = self.r;
        self.num_art = 0;
        self.art_rows.clear();
        self.state = vec![VarState::AtLower; self.n + r];
        self.basis = (0..r).map(|i| self.n + i).collect();
        for k in 0..r {
            self.state[self.n + k] = VarState::Basic;
        }
        self.binv = vec![0.0; r * r];
        for i in 0..r {
            self.binv[i * r + i] = 1.0;
        }
        self.xb = vec![0.0; r];
        self.lb.truncate(self.n + r);
        self.ub.truncate(self.n + r);
        self.recompute_xb();

        // Rows whose slack came out negative get an artificial variable.
        let mut need_phase1 = false;
        for k in 0..r {
            if self.xb[k] < -self.infeas_tol {
                let art = self.art_start + self.num_art;
                self.num_art += 1;
                self.art_rows.push(k);
                self.lb.push(0.0);
                self.ub.push(f64::INFINITY);
                self.state[self.n + k] = VarState::AtLower;
                self.state.push(VarState::Basic);
                self.basis[k] = art;
                self.binv[k * r + k] = -1.0;
                self.xb[k] = -self.xb[k];
                need_phase1 = true;
            }
        }
        self.pivots_since_refactor = 0;
        if need_phase1 {
            let sol = self.optimize(true)?;
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::Unbounded => {
                    return Err(SolveError::Numerical(
                        "phase-1 objective reported unbounded".into(),
                    ));
                }
                SolveStatus::Infeasible => unreachable!(),
            }
            let art_mass: f64 = (0..r)
                .filter(|&k| self.basis[k] >= self.art_start)
                .map(|k| self.xb[k].max(0.0))
                .sum();
            if art_mass > self.infeas_tol {
                self.has_feasible_basis = false;
                return Ok(());
            }
            // Pin every artificial at zero for phase 2.
            for a in 0..self.num_art {
                let v = self.art_start + a;
                self.ub[v] = 0.0;
                if self.state[v] == VarState::AtUpper {
                    self.state[v] = VarState::AtLower;
                }
            }
        }
        self.has_feasible_basis = true;
        Ok(())
    }

    /// Price-and-pivot loop for one phase.
    fn optimize(&mut self, phase1: bool) -> Result<LpSolution, SolveError> {
        let max_iters = 2000 + 200 * (self.n + self.r);
        let mut degenerate_run = 0usize;
        for _iter in 0..max_iters {
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                self.recompute_xb();
            }
            self.btran(phase1);
            let bland = degenerate_run >= DEGENERATE_LIMIT;
            let entering = self.choose_entering(phase1, bland);
            let (q, dir) = match entering {
                None => {
                    return if phase1 {
                        Ok(LpSolution::non_optimal(SolveStatus::Optimal))
                    } else {
                        Ok(self.extract_solution())
                    };
                }
                Some(e) => e,
            };
            self.ftran(q);
            // Ratio test: the entering variable moves until it crosses its
            // own span or a basic variable hits a bound. Ties go to the
            // basic variable with the smallest ordering index; a pivot is
            // preferred over a bound flip on exact ties.
            let span = self.ub[q] - self.lb[q];
            let mut t_min = if span.is_finite() {
                span
            } else {
                f64::INFINITY
            };
            let mut leave: Option<(usize, VarState)> = None; // row, bound hit
            for k in 0..self.r {
                let rate = -dir * self.w[k];
                let v = self.basis[k];
                let (t, hit) = if rate < -PIVOT_TOL {
                    (
                        ((self.xb[k] - self.lb[v]) / -rate).max(0.0),
                        VarState::AtLower,
                    )
                } else if rate > PIVOT_TOL && self.ub[v].is_finite() {
                    (
                        ((self.ub[v] - self.xb[k]) / rate).max(0.0),
                        VarState::AtUpper,
                    )
                } else {
                    continue;
                };
                if t < t_min - RATIO_TIE_TOL {
                    t_min = t;
                    leave = Some((k, hit));
                } else if t <= t_min + RATIO_TIE_TOL {
                    let take = match leave {
                        None => true,
                        Some((kk, _)) => self.ord(v) < self.ord(self.basis[kk]),
                    };
                    if take {
                        t_min = t_min.min(t);
                        leave = Some((k, hit));
                    }
                }
            }
            if !t_min.is_finite() {
                return Ok(LpSolution::non_optimal(SolveStatus::Unbounded));
            }
            if t_min <= STEP_DEGENERATE {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            // Move basic variables.
            if t_min > 0.0 {
                for k in 0..self.r {
                    self.xb[k] -= dir * t_min * self.w[k];
                }
            }
            match leave {
                None => {
                    // Bound flip: entering variable crosses its whole span.
                    self.state[q] = match self.state[q] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        VarState::Basic => unreachable!(),
                    };
                    self.snap_xb();
                }
                Some((pr, hit)) => {
                    let leaving = self.basis[pr];
                    let entering_value = self.bound_value(q) + dir * t_min;
                    self.state[leaving] = hit;
                    // Snap the leaving variable's stored value exactly.
                    self.basis[pr] = q;
                    self.state[q] = VarState::Basic;
                    self.xb[pr] = entering_value;
                    // Artificials never come back once out.
                    if leaving >= self.art_start {
                        self.ub[leaving] = 0.0;
                        self.state[leaving] = VarState::AtLower;
                    }
                    // Update B^-1: eliminate w against the pivot row.
                    let piv = self.w[pr];
                    if piv.abs() < PIVOT_TOL {
                        return Err(SolveError::Numerical(format!(
                            "pivot element too small ({piv:.3e})"
                        )));
                    }
                    let r = self.r;
                    let inv = 1.0 / piv;
                    for j in 0..r {
                        self.binv[pr * r + j] *= inv;
                    }
                    for k in 0..r {
                        if k != pr {
                            let f = self.w[k];
                            if f != 0.0 {
                                for j in 0..r {
                                    self.binv[k * r + j] -= f * self.binv[pr * r + j];
                                }
                            }
                        }
                    }
                    self.pivots_since_refactor += 1;
                    self.snap_xb();
                }
            }
        }
        Err(SolveError::Numerical(format!(
            "simplex iteration limit exceeded ({max_iters})"
        )))
    }

    /// Entering-variable selection. Returns (variable, direction).
    fn choose_entering(&self, phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        // Scan in tie-break order: artificials first, then natural indices.
        let scan = (0..self.num_art)
            .map(|a| self.art_start + a)
            .chain(0..self.art_start);
        for v in scan {
            if self.state[v] == VarState::Basic {
                continue;
            }
            if self.ub[v] - self.lb[v] <= 0.0 {
                continue; // fixed
            }
            let rc = self.var_cost(v, phase1) - self.rc_dot(v);
            let (eligible, dir) = match self.state[v] {
                VarState::AtLower => (rc < -RC_TOL, 1.0),
                VarState::AtUpper => (rc > RC_TOL, -1.0),
                VarState::Basic => unreachable!(),
            };
            if !eligible {
                continue;
            }
            if bland {
                // Least-index eligible variable in the scan ordering.
                return Some((v, dir));
            }
            match best {
                None => best = Some((v, dir, rc)),
                Some((_, _, brc)) => {
                    if rc.abs() > brc.abs() {
                        best = Some((v, dir, rc));
                    }
                }
            }
        }
        best.map(|(v, dir, _)| (v, dir))
    }

    fn extract_solution(&mut self) -> LpSolution {
        let mut x = vec![0.0; self.n];
        for j in 0..self.n {
            if self.state[j] != VarState::Basic {
                x[j] = self.bound_value(j);
            }
        }
        for k in 0..self.r {
            let v = self.basis[k];
            if v < self.n {
                x[v] = self.xb[k];
            }
        }
        let objective = self.cost.iter().zip(&x).map(|(c, xi)| c * xi).sum::<f64>();
        // Duals from the final phase-2 prices: row dual = -y_row.
        self.btran(false);
        let duals: Vec<f64> = (0..self.r).map(|i| -self.y[i]).collect();
        // Strict reduced-cost margin over non-fixed nonbasic variables
        // (certifies uniqueness when positive).
        let mut rc_margin = f64::INFINITY;
        for v in 0..self.art_start {
            if self.state[v] == VarState::Basic || self.ub[v] - self.lb[v] <= 0.0 {
                continue;
            }
            let rc = self.var_cost(v, false) - self.rc_dot(v);
            rc_margin = rc_margin.min(rc.abs());
        }
        LpSolution {
            status: SolveStatus::Optimal,
            x,
            objective,
            duals,
            rc_margin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn lp(
        cost: Vec<f64>,
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> LpProblem {
        let n = cost.len();
        LpProblem::new(
            cost,
            Mat::from_nested(&rows, Some(n)).unwrap(),
            rhs,
            lower,
            upper,
        )
        .unwrap()
    }

    #[test]
    fn box_only_minimum() {
        // min x on [0,1], no rows -> x = 0.
        let p = lp(vec![1.0], vec![], vec![], vec![0.0], vec![1.0]);
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.x, vec![0.0]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn single_row_dual() {
        // min -x s.t. x <= 0.5, x in [0,1]: x = 0.5, row dual = 1.
        let p = lp(vec![-1.0], vec![vec![1.0]], vec![0.5], vec![0.0], vec![1.0]);
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        // x <= -1 with x in [0,1].
        let p = lp(vec![1.0], vec![vec![1.0]], vec![-1.0], vec![0.0], vec![1.0]);
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn phase1_then_phase2() {
        // min x1 + x2 s.t. 1 - x1 - x2 <= 0 (-x1 - x2 <= -1), x in [0,1]^2.
        let p = lp(
            vec![1.0, 1.0],
            vec![vec![-1.0, -1.0]],
            vec![-1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn warm_restart_after_cost_change() {
        let p = lp(
            vec![1.0, 2.0],
            vec![vec![-1.0, -1.0]],
            vec![-1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let mut s = Simplex::new(&p).unwrap();
        let first = s.solve().unwrap();
        assert!((first.objective - 1.0).abs() < 1e-9);
        assert!((first.x[0] - 1.0).abs() < 1e-9);
        // Flip the costs: optimum moves to the other vertex.
        let second = s.resolve_with_cost(&[2.0, 1.0]).unwrap();
        assert!((second.objective - 1.0).abs() < 1e-9);
        assert!((second.x[1] - 1.0).abs() < 1e-9);
        // And resolving with the same costs is reproducible bit-for-bit.
        let third = s.resolve_with_cost(&[2.0, 1.0]).unwrap();
        assert_eq!(second.x, third.x);
        assert_eq!(second.objective, third.objective);
    }

    #[test]
    fn degenerate_cost_stays_at_lower_bound() {
        // min 0 * x on [0,1]: the deterministic answer is the lower bound.
        let p = lp(vec![0.0], vec![], vec![], vec![0.0], vec![1.0]);
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.x, vec![0.0]);
    }

    #[test]
    fn upper_bounded_slack_rows() {
        // min -x1 - x2 s.t. x1 + x2 <= 1.25, x in [0,1]^2.
        let p = lp(
            vec![-1.0, -1.0],
            vec![vec![1.0, 1.0]],
            vec![1.25],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert!((sol.objective + 1.25).abs() < 1e-9);
        assert!((sol.x[0] + sol.x[1] - 1.25).abs() < 1e-9);
        assert!((sol.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // Beale's classic degenerate LP cycles under naive most-negative
        // pricing; the degenerate-run fallback to least-index pricing must
        // terminate it at the optimum -1/20.
        let p = lp(
            vec![-0.75, 150.0, -0.02, 6.0],
            vec![
                vec![0.25, -60.0, -1.0 / 25.0, 9.0],
                vec![0.5, -90.0, -1.0 / 50.0, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![0.0, 0.0, 1.0],
            vec![0.0; 4],
            vec![1e4; 4],
        );
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(
            (sol.objective + 0.05).abs() < 1e-9,
            "objective {}",
            sol.objective
        );
        assert!((sol.x[0] - 1.0 / 25.0).abs() < 1e-9);
        assert!((sol.x[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_variables_and_zero_rows() {
        // A pinned variable (lb == ub) and an all-zero row must not upset
        // the pivoting.
        let p = lp(
            vec![1.0, -1.0],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            vec![0.5, 1.5],
            vec![0.7, 0.0],
            vec![0.7, 1.0],
        );
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.x[0], 0.7);
        assert!((sol.x[1] - 0.8).abs() < 1e-9); // blocked by the second row
    }

    #[test]
    fn duplicated_rows_are_harmless() {
        let p = lp(
            vec![-1.0],
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![0.6, 0.6, 0.6],
            vec![0.0],
            vec![1.0],
        );
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert!((sol.x[0] - 0.6).abs() < 1e-9);
        // Complementarity holds for every copy; total dual weight prices
        // the constraint.
        let total: f64 = sol.duals.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(sol.duals.iter().all(|&d| d >= -1e-10));
    }

    #[test]
    fn equality_via_double_sided_rows() {
        // x1 + x2 = 1 encoded as two inequalities; min x1.
        let p = lp(
            vec![1.0, 0.0],
            vec![vec![1.0, 1.0], vec![-1.0, -1.0]],
            vec![1.0, -1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let sol = Simplex::new(&p).unwrap().solve().unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
    }
}
