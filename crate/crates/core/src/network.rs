//! Time-varying communication graphs and mixing-weight schedules.
//!
//! A [`WeightSchedule`] is a periodic sequence of m x m mixing matrices.
//! Entry `(i, j)` of the matrix at iteration `k` is the weight agent `i`
//! gives to agent `j`'s dual estimate, so the directed communication edge
//! `j -> i` is present exactly when that entry is positive. Admissibility
//! means: every matrix is doubly stochastic with self-weights and nonzero
//! entries at least `eta`, and the union graph over a horizon is strongly
//! connected with every recurring edge re-appearing within `T` iterations.

use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SUM_TOL: f64 = 1e-9;
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("graph is not connected: node {0} is isolated from the rest")]
    Disconnected(usize),
    #[error("requested weight floor {requested} exceeds realized minimum weight {realized}")]
    EtaFloor { requested: f64, realized: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Periodic schedule of mixing matrices with its declared constants.
#[derive(Debug, Clone)]
pub struct WeightSchedule {
    m: usize,
    matrices: Vec<Mat>,
    /// Realized weight floor: the smallest positive entry over all phases.
    eta: f64,
    /// Declared communication window (every recurring edge re-appears within
    /// this many iterations).
    t_window: usize,
}

impl WeightSchedule {
    /// Wrap explicit per-phase matrices.
    ///
    /// `eta` and `t_window` default to the realized minimum positive weight
    /// and the period, respectively.
    pub fn from_matrices(
        matrices: Vec<Mat>,
        eta: Option<f64>,
        t_window: Option<usize>,
    ) -> Result<Self, ScheduleError> {
        if matrices.is_empty() {
            return Err(ScheduleError::Invalid(
                "schedule needs at least one matrix".into(),
            ));
        }
        let m = matrices[0].nrows();
        for (idx, mat) in matrices.iter().enumerate() {
            if mat.nrows() != m || mat.ncols() != m {
                return Err(ScheduleError::DimensionMismatch(format!(
                    "phase {} matrix is {}x{}, expected {}x{}",
                    idx,
                    mat.nrows(),
                    mat.ncols(),
                    m,
                    m
                )));
            }
            if !mat.is_finite() {
                return Err(ScheduleError::Invalid(format!(
                    "phase {} matrix has non-finite entries",
                    idx
                )));
            }
        }
        let realized = realized_eta(&matrices);
        let period = matrices.len();
        Ok(WeightSchedule {
            m,
            matrices,
            eta: eta.unwrap_or(realized),
            t_window: t_window.unwrap_or(period),
        })
    }

    pub fn num_agents(&self) -> usize {
        self.m
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn t_window(&self) -> usize {
        self.t_window
    }

    /// Mixing matrix used at iteration `k`.
    pub fn at(&self, k: usize) -> &Mat {
        &self.matrices[k % self.matrices.len()]
    }

    pub fn phases(&self) -> &[Mat] {
        &self.matrices
    }

    pub fn to_json(&self) -> String {
        let doc = ScheduleJson::Explicit(ExplicitScheduleJson {
            m: self.m,
            period: self.matrices.len(),
            matrices: self.matrices.iter().map(|m| m.to_nested()).collect(),
            eta: Some(self.eta),
            t: Some(self.t_window),
        });
        serde_json::to_string_pretty(&doc).expect("schedule serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        let doc: ScheduleJson =
            serde_json::from_str(text).map_err(|e| ScheduleError::Invalid(e.to_string()))?;
        match doc {
            ScheduleJson::Alternating(alt) => {
                if alt.kind != "alternating" {
                    return Err(ScheduleError::Invalid(format!(
                        "unknown schedule type {:?}",
                        alt.kind
                    )));
                }
                alternating_partition_schedule(alt.m, &alt.edges_a, &alt.edges_b, alt.eta)
            }
            ScheduleJson::Explicit(exp) => {
                let mut mats = Vec::with_capacity(exp.matrices.len());
                for nested in &exp.matrices {
                    mats.push(
                        Mat::from_nested(nested, Some(exp.m)).map_err(ScheduleError::Invalid)?,
                    );
                }
                if exp.period != mats.len() {
                    return Err(ScheduleError::Invalid(format!(
                        "declared period {} but {} matrices given",
                        exp.period,
                        mats.len()
                    )));
                }
                WeightSchedule::from_matrices(mats, exp.eta, exp.t)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScheduleJson {
    Alternating(AlternatingScheduleJson),
    Explicit(ExplicitScheduleJson),
}

#[derive(Serialize, Deserialize)]
struct AlternatingScheduleJson {
    #[serde(rename = "type")]
    kind: String,
    m: usize,
    edges_a: Vec<(usize, usize)>,
    edges_b: Vec<(usize, usize)>,
    #[serde(default)]
    eta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ExplicitScheduleJson {
    m: usize,
    period: usize,
    matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    eta: Option<f64>,
    #[serde(default, rename = "T")]
    t: Option<usize>,
}

fn realized_eta(matrices: &[Mat]) -> f64 {
    let mut eta = f64::INFINITY;
    for mat in matrices {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                let v = mat[(i, j)];
                if v > ZERO_TOL {
                    eta = eta.min(v);
                }
            }
        }
    }
    if eta.is_finite() {
        eta
    } else {
        0.0
    }
}

/// Metropolis weights for an undirected edge list: `1 / (1 + max(deg_i,
/// deg_j))` on edges, remainder on the diagonal. Symmetric, hence doubly
/// stochastic, with strictly positive self-weights.
fn metropolis_matrix(m: usize, edges: &[(usize, usize)]) -> Result<Mat, ScheduleError> {
    let mut degree = vec![0usize; m];
    for &(a, b) in edges {
        if a >= m || b >= m {
            return Err(ScheduleError::Invalid(format!(
                "edge ({a}, {b}) out of range for m = {m}"
            )));
        }
        if a == b {
            return Err(ScheduleError::Invalid(format!("self-loop edge ({a}, {a})")));
        }
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut w = Mat::zeros(m, m);
    for &(a, b) in edges {
        let weight = 1.0 / (1.0 + degree[a].max(degree[b]) as f64);
        w[(a, b)] += weight;
        w[(b, a)] += weight;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(w)
}

/// Sinkhorn row/column balancing until both sums are within `tol` of one.
///
/// Metropolis matrices are already balanced; this is the correction pass for
/// matrices assembled from other sources.
pub fn sinkhorn_balance(mat: &mut Mat, tol: f64, max_iters: usize) -> Result<(), ScheduleError> {
    let m = mat.nrows();
    for _ in 0..max_iters {
        let mut worst = 0.0f64;
        for i in 0..m {
            let sum: f64 = mat.row(i).iter().sum();
            worst = worst.max((sum - 1.0).abs());
            if sum > ZERO_TOL {
                for j in 0..m {
                    mat[(i, j)] /= sum;
                }
            }
        }
        for j in 0..m {
            let sum: f64 = (0..m).map(|i| mat[(i, j)]).sum();
            worst = worst.max((sum - 1.0).abs());
            if sum > ZERO_TOL {
                for i in 0..m {
                    mat[(i, j)] /= sum;
                }
            }
        }
        if worst <= tol {
            return Ok(());
        }
    }
    Err(ScheduleError::Invalid(
        "sinkhorn balancing did not converge".into(),
    ))
}

fn undirected_components(m: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut comp: Vec<usize> = (0..m).collect();
    fn find(comp: &mut [usize], mut x: usize) -> usize {
        while comp[x] != x {
            comp[x] = comp[comp[x]];
            x = comp[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
        if ra != rb {
            comp[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..m).map(|i| find(&mut comp, i)).collect()
}

/// Period-2 schedule from two undirected edge groups activated alternately.
///
/// Each phase uses Metropolis weights followed by a Sinkhorn correction pass.
/// The union of the two groups must be connected. When the groups are
/// identical the schedule collapses to period 1. `eta_floor`, when given,
/// requires the realized minimum weight to be at least that large.
pub fn alternating_partition_schedule(
    m: usize,
    edges_a: &[(usize, usize)],
    edges_b: &[(usize, usize)],
    eta_floor: Option<f64>,
) -> Result<WeightSchedule, ScheduleError> {
    if m < 2 {
        return Err(ScheduleError::Invalid(
            "alternating schedule needs m >= 2".into(),
        ));
    }
    let union: Vec<(usize, usize)> = edges_a.iter().chain(edges_b).copied().collect();
    let comp = undirected_components(m, &union);
    if let Some(node) = (0..m).find(|&i| comp[i] != comp[0]) {
        return Err(ScheduleError::Disconnected(node));
    }
    let mut phases = Vec::new();
    let mut a = metropolis_matrix(m, edges_a)?;
    sinkhorn_balance(&mut a, 1e-12, 1000)?;
    phases.push(a);
    if edges_a != edges_b {
        let mut b = metropolis_matrix(m, edges_b)?;
        sinkhorn_balance(&mut b, 1e-12, 1000)?;
        phases.push(b);
    }
    let realized = realized_eta(&phases);
    if let Some(floor) = eta_floor {
        if realized < floor {
            return Err(ScheduleError::EtaFloor {
                requested: floor,
                realized,
            });
        }
    }
    let period = phases.len();
    WeightSchedule::from_matrices(phases, Some(realized), Some(period))
}

/// Constant Metropolis schedule over a connected undirected graph.
pub fn static_metropolis_schedule(
    m: usize,
    edges: &[(usize, usize)],
    eta_floor: Option<f64>,
) -> Result<WeightSchedule, ScheduleError> {
    if m == 0 {
        return Err(ScheduleError::Invalid("m must be positive".into()));
    }
    if m > 1 {
        let comp = undirected_components(m, edges);
        if let Some(node) = (0..m).find(|&i| comp[i] != comp[0]) {
            return Err(ScheduleError::Disconnected(node));
        }
    }
    let w = metropolis_matrix(m, edges)?;
    let realized = realized_eta(std::slice::from_ref(&w));
    if let Some(floor) = eta_floor {
        if realized < floor {
            return Err(ScheduleError::EtaFloor {
                requested: floor,
                realized,
            });
        }
    }
    WeightSchedule::from_matrices(vec![w], Some(realized), Some(1))
}

/// A single located admissibility violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleViolation {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ViolationKind {
    RowSum { sum: f64 },
    ColumnSum { sum: f64 },
    SelfWeight { weight: f64 },
    EntryBelowEta { weight: f64 },
    EntryOutOfRange { value: f64 },
    NotStronglyConnected,
    EdgeRecurrence { gap: usize },
}

/// Admissibility report over a finite horizon.
#[derive(Debug, Clone, Serialize)]
pub struct GraphReport {
    pub doubly_stochastic_ok: bool,
    pub self_weight_ok: bool,
    pub eta_ok: bool,
    pub strongly_connected_ok: bool,
    pub t_recurrence_ok: bool,
    pub violations: Vec<ScheduleViolation>,
}

impl GraphReport {
    pub fn all_ok(&self) -> bool {
        self.doubly_stochastic_ok
            && self.self_weight_ok
            && self.eta_ok
            && self.strongly_connected_ok
            && self.t_recurrence_ok
    }
}

/// Check every admissibility condition over `0..horizon`.
///
/// Strong connectivity is evaluated on the union of the per-iteration edge
/// sets over the horizon (a finite proxy for the persistent graph), and
/// every edge in that union must recur within the schedule's `T` window.
/// Violations are collected, never thrown.
pub fn validate_schedule(schedule: &WeightSchedule, horizon: usize) -> GraphReport {
    let m = schedule.num_agents();
    let eta = schedule.eta();
    let mut report = GraphReport {
        doubly_stochastic_ok: true,
        self_weight_ok: true,
        eta_ok: true,
        strongly_connected_ok: true,
        t_recurrence_ok: true,
        violations: Vec::new(),
    };
    for k in 0..horizon {
        let w = schedule.at(k);
        for i in 0..m {
            let sum: f64 = w.row(i).iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                report.doubly_stochastic_ok = false;
                report.violations.push(ScheduleViolation {
                    k,
                    i,
                    j: i,
                    kind: ViolationKind::RowSum { sum },
                });
            }
        }
        for j in 0..m {
            let sum: f64 = (0..m).map(|i| w[(i, j)]).sum();
            if (sum - 1.0).abs() > SUM_TOL {
                report.doubly_stochastic_ok = false;
                report.violations.push(ScheduleViolation {
                    k,
                    i: j,
                    j,
                    kind: ViolationKind::ColumnSum { sum },
                });
            }
        }
        for i in 0..m {
            for j in 0..m {
                let v = w[(i, j)];
                if !(-ZERO_TOL..=1.0 + SUM_TOL).contains(&v) {
                    report.doubly_stochastic_ok = false;
                    report.violations.push(ScheduleViolation {
                        k,
                        i,
                        j,
                        kind: ViolationKind::EntryOutOfRange { value: v },
                    });
                }
                if i == j {
                    if v < eta - ZERO_TOL {
                        report.self_weight_ok = false;
                        report.violations.push(ScheduleViolation {
                            k,
                            i,
                            j,
                            kind: ViolationKind::SelfWeight { weight: v },
                        });
                    }
                } else if v > ZERO_TOL && v < eta - ZERO_TOL {
                    report.eta_ok = false;
                    report.violations.push(ScheduleViolation {
                        k,
                        i,
                        j,
                        kind: ViolationKind::EntryBelowEta { weight: v },
                    });
                }
            }
        }
    }

    // Union graph over the horizon: communication edge j -> i when entry
    // (i, j) of some phase is positive.
    let mut present = vec![vec![false; m]; m]; // present[i][j]
    for k in 0..horizon.min(schedule.period()) {
        let w = schedule.at(k);
        for i in 0..m {
            for j in 0..m {
                if i != j && w[(i, j)] > ZERO_TOL {
                    present[i][j] = true;
                }
            }
        }
    }
    if horizon > 0 {
        let sccs = tarjan_scc(m, |from, to| present[to][from]);
        if sccs.len() > 1 {
            report.strongly_connected_ok = false;
            let mut largest = 0;
            for (idx, scc) in sccs.iter().enumerate() {
                if scc.len() > sccs[largest].len() {
                    largest = idx;
                }
            }
            for (idx, scc) in sccs.iter().enumerate() {
                if idx != largest {
                    for &node in scc {
                        report.violations.push(ScheduleViolation {
                            k: 0,
                            i: node,
                            j: node,
                            kind: ViolationKind::NotStronglyConnected,
                        });
                    }
                }
            }
        }
    }

    // T-recurrence: every union edge must appear in every length-T window.
    let t = schedule.t_window().max(1);
    if horizon >= t {
        for i in 0..m {
            for j in 0..m {
                if i == j || !present[i][j] {
                    continue;
                }
                let mut last: Option<usize> = None;
                let mut first_violation: Option<(usize, usize)> = None; // (window start, gap)
                for k in 0..horizon {
                    if schedule.at(k)[(i, j)] > ZERO_TOL {
                        let gap = match last {
                            None => k + 1,
                            Some(prev) => k - prev,
                        };
                        if gap > t && first_violation.is_none() {
                            let start = match last {
                                None => 0,
                                Some(prev) => prev + 1,
                            };
                            first_violation = Some((start, gap));
                        }
                        last = Some(k);
                    }
                }
                if let Some(prev) = last {
                    let tail_gap = horizon - prev;
                    if tail_gap > t && first_violation.is_none() {
                        first_violation = Some((prev + 1, tail_gap));
                    }
                }
                if let Some((start, gap)) = first_violation {
                    report.t_recurrence_ok = false;
                    report.violations.push(ScheduleViolation {
                        k: start,
                        i,
                        j,
                        kind: ViolationKind::EdgeRecurrence { gap },
                    });
                }
            }
        }
    }
    report
}

/// Strongly connected components (Tarjan), deterministic order.
fn tarjan_scc(m: usize, has_edge: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    struct State {
        index: Vec<Option<usize>>,
        lowlink: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next_index: usize,
        sccs: Vec<Vec<usize>>,
    }
    fn strongconnect(v: usize, m: usize, has_edge: &impl Fn(usize, usize) -> bool, st: &mut State) {
        st.index[v] = Some(st.next_index);
        st.lowlink[v] = st.next_index;
        st.next_index += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for w in 0..m {
            if w == v || !has_edge(v, w) {
                continue;
            }
            if st.index[w].is_none() {
                strongconnect(w, m, has_edge, st);
                st.lowlink[v] = st.lowlink[v].min(st.lowlink[w]);
            } else if st.on_stack[w] {
                st.lowlink[v] = st.lowlink[v].min(st.index[w].unwrap());
            }
        }
        if st.lowlink[v] == st.index[v].unwrap() {
            let mut scc = Vec::new();
            loop {
                let w = st.stack.pop().unwrap();
                st.on_stack[w] = false;
                scc.push(w);
                if w == v {
                    break;
                }
            }
            scc.sort_unstable();
            st.sccs.push(scc);
        }
    }
    let mut st = State {
        index: vec![None; m],
        lowlink: vec![0; m],
        on_stack: vec![false; m],
        stack: Vec::new(),
        next_index: 0,
        sccs: Vec::new(),
    };
    for v in 0..m {
        if st.index[v].is_none() {
            strongconnect(v, m, &has_edge, &mut st);
        }
    }
    st.sccs
}

/// Consensus mixing (one synchronous round): row `i` of the result is
/// `sum_j a^i_j(k) lambda_j(k)`.
///
/// Nonnegativity is preserved and, with doubly stochastic weights, so is the
/// column average of the estimates.
pub fn mix(schedule: &WeightSchedule, k: usize, estimates: &Mat) -> Result<Mat, ScheduleError> {
    let m = schedule.num_agents();
    if estimates.nrows() != m {
        return Err(ScheduleError::DimensionMismatch(format!(
            "estimates have {} rows, schedule has m = {}",
            estimates.nrows(),
            m
        )));
    }
    for i in 0..m {
        if estimates.row(i).iter().any(|&v| v < 0.0) {
            return Err(ScheduleError::Invalid(format!(
                "estimate row {} has a negative component",
                i
            )));
        }
    }
    let w = schedule.at(k);
    let p = estimates.ncols();
    let mut mixed = Mat::zeros(m, p);
    for i in 0..m {
        for j in 0..m {
            let a = w[(i, j)];
            if a != 0.0 {
                let row = estimates.row(j);
                let out = mixed.row_mut(i);
                for c in 0..p {
                    out[c] += a * row[c];
                }
            }
        }
    }
    Ok(mixed)
}
