//! Post-run convergence diagnostics.
//!
//! Everything here is pure post-processing over an immutable [`RunTrace`]:
//! the consensus-error summability bound with its explicit constants, the
//! dual-objective consensus-gap rate statistic, and distances to a
//! centralized reference solution.

use crate::engine::RunTrace;
use crate::linalg::{norm2, sub, Mat};
use crate::solver::CentralizedReference;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid diagnostics input: {0}")]
    Invalid(String),
    #[error("trace does not carry {0}; re-run with full diagnostics")]
    MissingData(&'static str),
}

/// Arithmetic average of the agents' dual estimates.
pub fn consensus_average(lambdas: &Mat) -> Vec<f64> {
    let m = lambdas.nrows();
    assert!(m >= 1, "need at least one agent");
    let p = lambdas.ncols();
    let mut v = vec![0.0; p];
    for i in 0..m {
        for c in 0..p {
            v[c] += lambdas[(i, c)];
        }
    }
    for c in v.iter_mut() {
        *c /= m as f64;
    }
    v
}

/// Constants of the consensus-error summability bound.
///
/// `psi` and `q` depend only on the schedule constants `(eta, m, T)`;
/// `alpha2`/`alpha3` additionally use the chosen `alpha1`, the first-round
/// consensus errors, the first two step sizes, and the initial dual
/// estimates. `g_bound` and the empirical dual-norm bound `d_bound` ride
/// along for the checks that need them.
///
/// The geometric decay rate `q = (1 - eta^((m-1)T))^(1/((m-1)T))` sits so
/// close to one for large networks that the difference falls below machine
/// resolution; `one_minus_q` therefore carries the gap explicitly (computed
/// in log space) and `q` is the rounded display value. The alpha constants
/// grow like `psi^2 / (1-q)^2` and may overflow to infinity for very large
/// `(m-1)T`, in which case the bound check is vacuously true.
#[derive(Debug, Clone, Serialize)]
pub struct ConsensusBoundConstants {
    pub eta: f64,
    pub m: usize,
    pub t_window: usize,
    pub psi: f64,
    pub q: f64,
    /// Exact gap `1 - q`, strictly positive for any admissible schedule.
    pub one_minus_q: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub g_bound: f64,
    /// Empirical `sup_k max_i ||lambda_i(k)||` over the run.
    pub d_bound: f64,
}

/// Compute the bound constants from a schedule's `(eta, m, T)` and a run.
pub fn consensus_bound_constants(
    trace: &RunTrace,
    alpha1: f64,
    g_bound: f64,
) -> Result<ConsensusBoundConstants, DiagnosticsError> {
    let m = trace.m;
    let eta = trace.eta;
    let t = trace.t_window;
    if !(0.0..1.0).contains(&eta) || eta <= 0.0 {
        return Err(DiagnosticsError::Invalid(format!(
            "eta must lie in (0,1), got {eta}"
        )));
    }
    if t < 1 {
        return Err(DiagnosticsError::Invalid("T must be at least 1".into()));
    }
    if m < 2 {
        return Err(DiagnosticsError::Invalid(
            "consensus constants need m >= 2".into(),
        ));
    }
    if alpha1 <= 0.0 {
        return Err(DiagnosticsError::Invalid("alpha1 must be positive".into()));
    }
    if trace.records.len() < 2 {
        return Err(DiagnosticsError::Invalid(
            "need at least two iterations".into(),
        ));
    }
    let exponent = ((m - 1) * t) as f64;
    // eps = eta^((m-1)T) through log space: representable far below the
    // point where 1 - eps rounds to 1.
    let eps = (exponent * eta.ln()).exp();
    if eps <= 0.0 {
        return Err(DiagnosticsError::Invalid(format!(
            "decay constants are not representable for (m-1)T = {exponent} at eta = {eta}"
        )));
    }
    let decay = 1.0 - eps;
    let psi = 2.0 * (1.0 + 1.0 / eps) / decay;
    // 1 - q with q = decay^(1/(m-1)T): the direct formula cancels badly for
    // tiny eps, where the expansion 1 - q = eps/(m-1)T (1 + O(eps)) is exact
    // to machine precision.
    let one_minus_q = if eps > 1e-8 {
        1.0 - decay.powf(1.0 / exponent)
    } else {
        eps / exponent
    };
    let q = 1.0 - one_minus_q;
    let mf = m as f64;
    let alpha2 =
        (2.0 * mf / alpha1) * (mf * mf * psi * psi / (one_minus_q * one_minus_q) + 4.0);
    let sum_e1_sq = trace.records[0].sum_e_sq;
    let c0 = trace.records[0].c_k;
    let c1 = trace.records[1].c_k;
    let sum_lambda0: f64 = (0..m).map(|i| norm2(trace.initial_lambda.row(i))).sum();
    let alpha3 = alpha1 / 2.0 * sum_e1_sq
        + 2.0 * mf.powi(3) * psi * psi / (alpha1 * one_minus_q * one_minus_q) * c0 * c0
        + 2.0 * mf * psi * q / one_minus_q * c1 * sum_lambda0;
    // Empirical dual-norm bound over the run.
    let mut d_bound: f64 = (0..m)
        .map(|i| norm2(trace.initial_lambda.row(i)))
        .fold(0.0, f64::max);
    match &trace.lambda_history {
        Some(history) => {
            for mat in history {
                for i in 0..m {
                    d_bound = d_bound.max(norm2(mat.row(i)));
                }
            }
        }
        None => {
            for rec in &trace.records {
                // Without full history, bound via v(k) plus the disagreement.
                d_bound = d_bound.max(norm2(&rec.v) + rec.dual_disagreement);
            }
        }
    }
    debug_assert!(one_minus_q > 0.0 && one_minus_q < 1.0);
    debug_assert!(psi > 0.0);
    Ok(ConsensusBoundConstants {
        eta,
        m,
        t_window: t,
        psi,
        q,
        one_minus_q,
        alpha1,
        alpha2,
        alpha3,
        g_bound,
        d_bound,
    })
}

/// Per-horizon evaluation of the summability inequality.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckReport {
    /// `(N, lhs, rhs)` for every horizon up to the requested one.
    pub points: Vec<(usize, f64, f64)>,
    pub holds_for_all_n: bool,
    pub margin_min: f64,
}

impl BoundCheckReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "N,lhs,rhs")?;
        for (n, lhs, rhs) in &self.points {
            writeln!(out, "{},{},{}", n, lhs, rhs)?;
        }
        Ok(())
    }
}

/// Evaluate the consensus-error summability inequality for every horizon
/// `N' <= N`:
///
/// `2 sum_{k=1}^{N'} c(k) sum_i ||lambda_i(k+1) - v(k+1)||`
/// `  < alpha1 sum_{k=1}^{N'} sum_i ||e_i(k+1)||^2 + alpha2 sum_{k=1}^{N'} c(k)^2 + alpha3`.
pub fn check_consensus_bound(
    trace: &RunTrace,
    constants: &ConsensusBoundConstants,
    n: usize,
) -> Result<BoundCheckReport, DiagnosticsError> {
    if constants.m != trace.m {
        return Err(DiagnosticsError::Invalid(format!(
            "constants computed for m = {}, trace has m = {}",
            constants.m, trace.m
        )));
    }
    if (constants.eta - trace.eta).abs() > 1e-12 || constants.t_window != trace.t_window {
        return Err(DiagnosticsError::Invalid(
            "constants come from a different schedule than the trace".into(),
        ));
    }
    // Record k holds the (k+1)-indexed quantities; the sum starts at k = 1.
    if trace.records.len() < n + 1 {
        return Err(DiagnosticsError::Invalid(format!(
            "trace has {} iterations, need at least {}",
            trace.records.len(),
            n + 1
        )));
    }
    let mut lhs = 0.0;
    let mut rhs_e = 0.0;
    let mut rhs_c = 0.0;
    let mut points = Vec::with_capacity(n);
    let mut holds = true;
    let mut margin_min = f64::INFINITY;
    for horizon in 1..=n {
        let rec = &trace.records[horizon];
        lhs += 2.0 * rec.c_k * rec.sum_dual_dist_to_avg;
        rhs_e += constants.alpha1 * rec.sum_e_sq;
        rhs_c += constants.alpha2 * rec.c_k * rec.c_k;
        let rhs = rhs_e + rhs_c + constants.alpha3;
        let margin = rhs - lhs;
        margin_min = margin_min.min(margin);
        if margin <= 0.0 {
            holds = false;
        }
        points.push((horizon, lhs, rhs));
    }
    Ok(BoundCheckReport {
        points,
        holds_for_all_n: holds,
        margin_min,
    })
}

/// One point of the dual-gap rate statistic.
#[derive(Debug, Clone, Serialize)]
pub struct RatePoint {
    pub r: usize,
    /// Running minimum of `sum_i |phi_i(mixed_i(k)) - phi_i(v(k))|`.
    pub min_gap: f64,
    /// `sum_{k<=r} c(k)`.
    pub c_sum: f64,
    /// Their product; bounded when the gap decays at the guaranteed rate.
    pub product: f64,
}

/// Running minimum of the dual-objective consensus gap times the cumulative
/// step size. Requires full diagnostics (the gap is recorded per iteration).
pub fn dual_gap_rate(trace: &RunTrace) -> Result<Vec<RatePoint>, DiagnosticsError> {
    let mut out = Vec::with_capacity(trace.records.len());
    let mut min_gap = f64::INFINITY;
    let mut c_sum = 0.0;
    for rec in &trace.records {
        let gap = rec
            .phi_gap
            .ok_or(DiagnosticsError::MissingData("dual-function gap values"))?;
        min_gap = min_gap.min(gap);
        c_sum += rec.c_k;
        out.push(RatePoint {
            r: rec.k,
            min_gap,
            c_sum,
            product: min_gap * c_sum,
        });
    }
    Ok(out)
}

/// Per-iteration distance of the run to a centralized reference.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceDistance {
    pub k: usize,
    /// `max_i ||lambda_i(k+1) - lambda*||`.
    pub dual_dist: f64,
    /// Point distance `||x_hat - x*||`, reported only when the reference
    /// optimizer is certified unique.
    pub primal_dist: Option<f64>,
    /// Objective gap `|sum_i f_i(x_hat_i) - f*|` (always available).
    pub objective_gap: f64,
    /// Largest positive coupling violation of the averaged iterate.
    pub violation: f64,
}

/// Distances to the reference over the whole run.
///
/// The primal optimizer set may not be a singleton; in that case only the
/// (objective gap, violation) surrogate is reported. Dual distances need the
/// per-iteration estimates, so the trace must carry full diagnostics.
pub fn distance_to_reference(
    trace: &RunTrace,
    reference: &CentralizedReference,
) -> Result<Vec<ReferenceDistance>, DiagnosticsError> {
    if reference.lambda_star.len() != trace.p {
        return Err(DiagnosticsError::Invalid(format!(
            "reference has p = {}, trace has p = {}",
            reference.lambda_star.len(),
            trace.p
        )));
    }
    let history = trace
        .lambda_history
        .as_ref()
        .ok_or(DiagnosticsError::MissingData(
            "per-iteration dual estimates",
        ))?;
    let mut out = Vec::with_capacity(trace.records.len());
    for (idx, (rec, lambdas)) in trace.records.iter().zip(history).enumerate() {
        let mut dual_dist = 0.0f64;
        for i in 0..trace.m {
            dual_dist = dual_dist.max(norm2(&sub(lambdas.row(i), &reference.lambda_star)));
        }
        let primal_dist = if reference.unique {
            trace
                .x_hat_history
                .as_ref()
                .and_then(|h| h.get(idx))
                .map(|x_hat| norm2(&sub(x_hat, &reference.x_star)))
        } else {
            None
        };
        out.push(ReferenceDistance {
            k: rec.k,
            dual_dist,
            primal_dist,
            objective_gap: (rec.obj_hat - reference.f_star).abs(),
            violation: rec.viol_hat_max,
        });
    }
    Ok(out)
}
