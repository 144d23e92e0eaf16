//! Dense primal active-set method for convex quadratic programs.
//!
//! Solves `min 1/2 x^T Q x + q^T x` subject to `C x <= d` and box bounds,
//! with `Q` symmetric positive semidefinite. The box bounds are folded into
//! the general inequality system internally, a feasible vertex is obtained
//! from the LP kernel, and equality-constrained subproblems are solved by a
//! null-space method. Semidefinite directions (singular reduced Hessian) are
//! handled by stepping along the unbounded ray to the nearest blocking
//! constraint, which always exists because the feasible set is compact.

use super::simplex::Simplex;
use super::{LpProblem, LpSolution, SolveError, SolveStatus};
use crate::linalg::{dot, householder_qr, norm_inf, symmetric_eigen, Mat, Qr};

const ACTIVE_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-11;
const MULT_TOL: f64 = 1e-9;

pub struct ActiveSetQp<'a> {
    quad: &'a Mat,
    linear: &'a [f64],
    /// Stacked inequality rows: general rows, then x <= ub, then -x <= -lb.
    g: Mat,
    h: Vec<f64>,
    n: usize,
    /// Number of general (non-box) rows.
    num_general: usize,
}

impl<'a> ActiveSetQp<'a> {
    pub fn new(
        quad: &'a Mat,
        linear: &'a [f64],
        rows: &Mat,
        rhs: &[f64],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self, SolveError> {
        let n = linear.len();
        if quad.nrows() != n || quad.ncols() != n || rows.ncols() != n || rows.nrows() != rhs.len()
        {
            return Err(SolveError::Invalid("QP dimension mismatch".into()));
        }
        let num_general = rows.nrows();
        let total = num_general + 2 * n;
        let mut g = Mat::zeros(total, n);
        let mut h = vec![0.0; total];
        for i in 0..num_general {
            for j in 0..n {
                g[(i, j)] = rows[(i, j)];
            }
            h[i] = rhs[i];
        }
        for j in 0..n {
            g[(num_general + j, j)] = 1.0;
            h[num_general + j] = upper[j];
            g[(num_general + n + j, j)] = -1.0;
            h[num_general + n + j] = -lower[j];
        }
        Ok(ActiveSetQp {
            quad,
            linear,
            g,
            h,
            n,
            num_general,
        })
    }

    pub fn solve(&self) -> Result<LpSolution, SolveError> {
        // Feasible starting vertex from a zero-cost LP over the same set.
        let lp = LpProblem::raw(
            vec![0.0; self.n],
            self.sub_rows(),
            self.h[..self.num_general].to_vec(),
            self.box_lower(),
            self.box_upper(),
        );
        let start = Simplex::new(&lp)?.solve()?;
        match start.status {
            SolveStatus::Optimal => {}
            other => return Ok(LpSolution::non_optimal(other)),
        }
        let mut x = start.x;

        // Initial working set: active rows, greedily kept independent.
        let mut working: Vec<usize> = Vec::new();
        for i in 0..self.g.nrows() {
            if working.len() == self.n {
                break;
            }
            if (dot(self.g.row(i), &x) - self.h[i]).abs() <= ACTIVE_TOL
                && self.independent_with(&working, i)
            {
                working.push(i);
            }
        }

        let max_iter = 50 * (self.g.nrows() + self.n) + 100;
        for _iter in 0..max_iter {
            let grad = self.gradient(&x);
            let (p, is_ray) = self.eqp_direction(&working, &grad)?;
            if !is_ray && norm_inf(&p) <= STEP_TOL {
                // Stationary on the working set: check multipliers.
                let mu = self.multipliers(&working, &grad)?;
                let mut drop: Option<(usize, f64)> = None;
                for (pos, (&row, &m)) in working.iter().zip(&mu).enumerate() {
                    let _ = row;
                    if m < -MULT_TOL {
                        match drop {
                            None => drop = Some((pos, m)),
                            Some((_, best)) if m < best => drop = Some((pos, m)),
                            _ => {}
                        }
                    }
                }
                match drop {
                    None => {
                        return Ok(self.finish(x, &working, &mu));
                    }
                    Some((pos, _)) => {
                        working.remove(pos);
                    }
                }
                continue;
            }
            // Step length: full Newton step unless a constraint blocks; rays
            // must be blocked (compact feasible set).
            let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
            let mut block: Option<usize> = None;
            for i in 0..self.g.nrows() {
                if working.contains(&i) {
                    continue;
                }
                let gp = dot(self.g.row(i), &p);
                if gp > 1e-12 {
                    let slack = (self.h[i] - dot(self.g.row(i), &x)).max(0.0);
                    let a = slack / gp;
                    if a < alpha - 1e-15 {
                        alpha = a;
                        block = Some(i);
                    }
                }
            }
            if !alpha.is_finite() {
                return Err(SolveError::Numerical(
                    "unblocked ray on a supposedly compact feasible set".into(),
                ));
            }
            for j in 0..self.n {
                x[j] += alpha * p[j];
            }
            if let Some(i) = block {
                working.push(i);
                working.sort_unstable();
            }
        }
        Err(SolveError::Numerical(
            "active-set iteration limit exceeded".into(),
        ))
    }

    fn sub_rows(&self) -> Mat {
        let mut rows = Mat::zeros(self.num_general, self.n);
        for i in 0..self.num_general {
            for j in 0..self.n {
                rows[(i, j)] = self.g[(i, j)];
            }
        }
        rows
    }

    fn box_lower(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| -self.h[self.num_general + self.n + j])
            .collect()
    }

    fn box_upper(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.h[self.num_general + j]).collect()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.quad.matvec(x);
        for (gi, qi) in g.iter_mut().zip(self.linear) {
            *gi += qi;
        }
        g
    }

    fn working_transpose(&self, working: &[usize]) -> Mat {
        let mut gt = Mat::zeros(self.n, working.len());
        for (k, &row) in working.iter().enumerate() {
            for j in 0..self.n {
                gt[(j, k)] = self.g[(row, j)];
            }
        }
        gt
    }

    fn independent_with(&self, working: &[usize], candidate: usize) -> bool {
        let mut set = working.to_vec();
        set.push(candidate);
        let gt = self.working_transpose(&set);
        let Qr { r, .. } = householder_qr(&gt);
        let k = set.len();
        (0..k).all(|i| r[(i, i)].abs() > 1e-10)
    }

    /// Solve the equality-constrained subproblem on the working set.
    ///
    /// Returns the step direction and whether it is an unbounded ray of the
    /// subproblem (zero-curvature descent direction).
    fn eqp_direction(
        &self,
        working: &[usize],
        grad: &[f64],
    ) -> Result<(Vec<f64>, bool), SolveError> {
        let w = working.len();
        let nz = self.n - w;
        if nz == 0 {
            return Ok((vec![0.0; self.n], false));
        }
        let gt = self.working_transpose(working);
        let Qr { q, .. } = householder_qr(&gt);
        // Null-space basis: trailing columns of Q.
        let mut z = Mat::zeros(self.n, nz);
        for j in 0..nz {
            for i in 0..self.n {
                z[(i, j)] = q[(i, w + j)];
            }
        }
        // Reduced Hessian and gradient.
        let mut h = Mat::zeros(nz, nz);
        for a in 0..nz {
            let za = z.col(a);
            let qza = self.quad.matvec(&za);
            for b in 0..nz {
                let zb = z.col(b);
                h[(a, b)] = dot(&qza, &zb);
            }
        }
        // Symmetrize away round-off.
        for a in 0..nz {
            for b in (a + 1)..nz {
                let avg = 0.5 * (h[(a, b)] + h[(b, a)]);
                h[(a, b)] = avg;
                h[(b, a)] = avg;
            }
        }
        let gz: Vec<f64> = (0..nz).map(|j| dot(&z.col(j), grad)).collect();
        let (eigvals, eigvecs) = symmetric_eigen(&h);
        let eig_tol = eigvals.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 1e-10 + 1e-12;
        // Zero-curvature descent direction => ray.
        for i in 0..nz {
            if eigvals[i] <= eig_tol {
                let vi = eigvecs.col(i);
                let a = dot(&vi, &gz);
                if a.abs() > 1e-10 {
                    let sign = if a > 0.0 { -1.0 } else { 1.0 };
                    let dz: Vec<f64> = vi.iter().map(|v| sign * v).collect();
                    return Ok((z.matvec(&dz), true));
                }
            }
        }
        // Regular Newton step on the positive-curvature subspace.
        let mut pz = vec![0.0; nz];
        for i in 0..nz {
            if eigvals[i] > eig_tol {
                let vi = eigvecs.col(i);
                let coeff = -dot(&vi, &gz) / eigvals[i];
                for j in 0..nz {
                    pz[j] += coeff * vi[j];
                }
            }
        }
        Ok((z.matvec(&pz), false))
    }

    /// Least-squares multipliers for the working set: G_W^T mu = -grad.
    fn multipliers(&self, working: &[usize], grad: &[f64]) -> Result<Vec<f64>, SolveError> {
        let w = working.len();
        if w == 0 {
            return Ok(Vec::new());
        }
        let gt = self.working_transpose(working);
        let Qr { q, r } = householder_qr(&gt);
        // rhs = Q^T (-grad), then back-substitute R mu = rhs.
        let mut rhs = vec![0.0; w];
        for (i, item) in rhs.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..self.n {
                s += q[(k, i)] * -grad[k];
            }
            *item = s;
        }
        let mut mu = vec![0.0; w];
        for i in (0..w).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..w {
                s -= r[(i, j)] * mu[j];
            }
            let diag = r[(i, i)];
            if diag.abs() < 1e-12 {
                return Err(SolveError::Numerical(
                    "dependent working set in multiplier solve".into(),
                ));
            }
            mu[i] = s / diag;
        }
        Ok(mu)
    }

    fn finish(&self, x: Vec<f64>, working: &[usize], mu: &[f64]) -> LpSolution {
        let mut duals = vec![0.0; self.num_general];
        for (&row, &m) in working.iter().zip(mu) {
            if row < self.num_general {
                duals[row] = m.max(0.0);
            }
        }
        let objective = 0.5 * dot(&x, &self.quad.matvec(&x)) + dot(self.linear, &x);
        LpSolution {
            status: SolveStatus::Optimal,
            x,
            objective,
            duals,
            rc_margin: f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(
        quad: Vec<Vec<f64>>,
        linear: Vec<f64>,
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> LpSolution {
        let n = linear.len();
        let q = Mat::from_nested(&quad, Some(n)).unwrap();
        let c = Mat::from_nested(&rows, Some(n)).unwrap();
        ActiveSetQp::new(&q, &linear, &c, &rhs, &lower, &upper)
            .unwrap()
            .solve()
            .unwrap()
    }

    #[test]
    fn unconstrained_minimum_inside_box() {
        // Q = I, q = 0, box [-1,1]^2 -> x = 0.
        let sol = solve(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            vec![],
            vec![],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        );
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(norm_inf(&sol.x) < 1e-9);
        assert!(sol.objective.abs() < 1e-12);
    }

    #[test]
    fn clipped_scalar_projection() {
        // Q = I, q = [-4], box [0,1] -> x = 1 (projection of 4).
        let sol = solve(
            vec![vec![1.0]],
            vec![-4.0],
            vec![],
            vec![],
            vec![0.0],
            vec![1.0],
        );
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective - (0.5 - 4.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_hessian_reduces_to_lp() {
        // Q = 0: min -x1 - 2 x2 s.t. x1 + x2 <= 1, box [0,1]^2.
        let sol = solve(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![-1.0, -2.0],
            vec![vec![1.0, 1.0]],
            vec![1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let lp = LpProblem::new(
            vec![-1.0, -2.0],
            Mat::from_nested(&[vec![1.0, 1.0]], Some(2)).unwrap(),
            vec![1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let lp_sol = Simplex::new(&lp).unwrap().solve().unwrap();
        assert!((sol.objective - lp_sol.objective).abs() < 1e-9);
    }

    #[test]
    fn stationarity_with_active_row() {
        // min 1/2 (x1^2 + x2^2) - x1 - x2 s.t. x1 + x2 <= 1 on [0,2]^2.
        // Unconstrained optimum (1,1) violates the row; constrained optimum
        // is (0.5, 0.5) with row dual 0.5.
        let sol = solve(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![-1.0, -1.0],
            vec![vec![1.0, 1.0]],
            vec![1.0],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
        );
        assert!((sol.x[0] - 0.5).abs() < 1e-9);
        assert!((sol.x[1] - 0.5).abs() < 1e-9);
        assert!((sol.duals[0] - 0.5).abs() < 1e-9);
        // Stationarity: Qx + q + G^T mu = 0.
        let resid0 = sol.x[0] - 1.0 + sol.duals[0];
        assert!(resid0.abs() < 1e-9);
    }

    #[test]
    fn infeasible_qp_reported() {
        let sol = solve(
            vec![vec![1.0]],
            vec![0.0],
            vec![vec![1.0]],
            vec![-5.0],
            vec![0.0],
            vec![1.0],
        );
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }
}
