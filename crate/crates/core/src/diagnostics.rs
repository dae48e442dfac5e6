//! Checks of computed trajectories against moment identities, invariance laws
//! and closed-form solutions.
//!
//! Each check returns an [`OracleReport`]. Checks that only make sense for
//! particular kernels or data return [`DiagnosticsError::KernelMismatch`] or
//! [`DiagnosticsError::NotApplicable`]; [`run_suite`] turns those into skipped
//! reports.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, integrate_from, IntegratorConfig, IntegratorError, Trajectory};
use crate::kernel::Kernel;
use crate::oracles::{self, SelfSimilarParams};
use crate::state::{ClusterState, InitialCondition};

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-12;
/// Below this elapsed time, sub-threshold positive entries inside the predicted
/// support are reported but do not fail the support check.
pub const DEFAULT_SUPPORT_T_MIN: f64 = 1e-3;
pub const DEFAULT_SIMPSON_PANELS: usize = 32;
pub const MAX_SIMPSON_PANELS: usize = 8192;
/// Agreement required between Simpson estimates at successive refinements.
pub const QUADRATURE_RTOL: f64 = 1e-10;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("{check} requires a constant kernel, got {kernel}")]
    KernelMismatch { check: &'static str, kernel: String },
    #[error("{check} does not apply: {reason}")]
    NotApplicable { check: &'static str, reason: String },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub kernel: String,
    pub initial_condition: Option<String>,
    pub n: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub grid_points: usize,
}

impl ReportContext {
    pub fn of(traj: &Trajectory) -> Self {
        ReportContext {
            kernel: traj.kernel.spec(),
            initial_condition: traj.initial_condition.as_ref().map(|ic| ic.to_string()),
            n: traj.n(),
            t_start: traj.first().t,
            t_end: traj.last().t,
            grid_points: traj.states.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub check: String,
    pub pass: bool,
    pub skipped: bool,
    /// Measured residual (relative error, violation count, ... per check).
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
    pub worst_index: Option<usize>,
    pub worst_time: Option<f64>,
    /// Observed support at the last grid time, for support checks.
    pub support: Option<Vec<usize>>,
    pub context: ReportContext,
}

impl OracleReport {
    fn measured(check: impl Into<String>, residual: f64, tolerance: f64, context: ReportContext) -> Self {
        OracleReport {
            check: check.into(),
            pass: residual <= tolerance,
            skipped: false,
            residual,
            tolerance,
            detail: String::new(),
            worst_index: None,
            worst_time: None,
            support: None,
            context,
        }
    }

    pub fn skipped(check: impl Into<String>, reason: impl Into<String>, context: ReportContext) -> Self {
        OracleReport {
            check: check.into(),
            pass: false,
            skipped: true,
            residual: 0.0,
            tolerance: 0.0,
            detail: reason.into(),
            worst_index: None,
            worst_time: None,
            support: None,
            context,
        }
    }

    pub fn failed(check: impl Into<String>, reason: impl Into<String>, context: ReportContext) -> Self {
        OracleReport {
            pass: false,
            skipped: false,
            ..OracleReport::skipped(check, reason, context)
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn at(mut self, index: Option<usize>, time: Option<f64>) -> Self {
        self.worst_index = index;
        self.worst_time = time;
        self
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.skipped {
            "SKIP"
        } else if self.pass {
            "PASS"
        } else {
            "FAIL"
        };
        write!(
            f,
            "[{status}] {}: residual {:.3e} (tolerance {:.1e})",
            self.check, self.residual, self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, " - {}", self.detail)?;
        }
        Ok(())
    }
}

/// Test sequence `g_j` in the weighted moment balance.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSequence {
    /// `g_j = 1`: cluster number.
    One,
    /// `g_j = j`: mass.
    Identity,
    /// `g_j = 1` for odd `j`, else 0.
    OddIndicator,
    /// `g_j = values[j - 1]`.
    Custom(Vec<f64>),
}

impl WeightSequence {
    pub fn name(&self) -> &'static str {
        match self {
            WeightSequence::One => "one",
            WeightSequence::Identity => "identity",
            WeightSequence::OddIndicator => "odd",
            WeightSequence::Custom(_) => "custom",
        }
    }

    fn values(&self, n: usize) -> Result<Vec<f64>, DiagnosticsError> {
        Ok(match self {
            WeightSequence::One => vec![1.0; n],
            WeightSequence::Identity => (1..=n).map(|j| j as f64).collect(),
            WeightSequence::OddIndicator => (1..=n).map(|j| (j % 2) as f64).collect(),
            WeightSequence::Custom(v) => {
                if v.len() < n || v.iter().any(|x| !x.is_finite()) {
                    return Err(DiagnosticsError::BadInput(format!(
                        "custom weights need {n} finite entries, got {}",
                        v.len()
                    )));
                }
                v[..n].to_vec()
            }
        })
    }
}

/// `sum_j g_j c_j`
fn weighted_sum(g: &[f64], c: &[f64]) -> f64 {
    g.iter().zip(c).map(|(g, c)| g * c).sum()
}

/// Right side of the weighted balance
/// `sum_j g_j c_j' = -sum_{k < j} (g_j - g_{j-k}) W(j,k) - sum_{k >= j} g_j W(j,k)`
/// with `W(j,k) = a(j,k) c_j c_k`, summed over `j, k` in `[1..N]`. This is
/// assembled from pair rates directly, not from the right-hand side vector.
fn weighted_balance(table: &[f64], g: &[f64], c: &[f64]) -> f64 {
    let n = c.len();
    let mut below = 0.0;
    let mut above = 0.0;
    for j in 1..=n {
        let cj = c[j - 1];
        if cj == 0.0 {
            continue;
        }
        let row = &table[(j - 1) * n..j * n];
        for k in 1..j {
            below += (g[j - 1] - g[j - k - 1]) * row[k - 1] * cj * c[k - 1];
        }
        for k in j..=n {
            above += g[j - 1] * row[k - 1] * cj * c[k - 1];
        }
    }
    -below - above
}

fn kernel_table(kernel: &Kernel, n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n * n];
    for j in 1..=n {
        for k in j..=n {
            let a = kernel.eval(j, k);
            table[(j - 1) * n + (k - 1)] = a;
            table[(k - 1) * n + (j - 1)] = a;
        }
    }
    table
}

fn composite_simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len() - 1;
    debug_assert!(m >= 2 && m.is_multiple_of(2));
    let mut sum = values[0] + values[m];
    for (i, v) in values.iter().enumerate().take(m).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * h / 3.0
}

/// Instantaneous weighted balance: `(sum_j g_j c_j', right side)` for one state.
pub fn instantaneous_balance(
    kernel: &Kernel,
    state: &ClusterState,
    g: &WeightSequence,
) -> Result<(f64, f64), DiagnosticsError> {
    let n = state.n();
    let gv = g.values(n)?;
    let d = crate::rhs::eval_naive(kernel, state).d;
    let lhs = weighted_sum(&gv, &d);
    let rhs = weighted_balance(&kernel_table(kernel, n), &gv, state.values());
    Ok((lhs, rhs))
}

/// Integrated weighted moment balance over each pair of consecutive grid times.
///
/// For each interval `[tau, t]` the change `sum g_j c_j(t) - sum g_j c_j(tau)`
/// read off the trajectory is compared with the time integral of the pair-rate
/// balance. The integral uses composite Simpson quadrature starting from
/// `panels` subintervals and doubling (up to [`MAX_SIMPSON_PANELS`]) until two
/// successive estimates agree to [`QUADRATURE_RTOL`]; states at the quadrature
/// nodes are obtained by integrating again from the stored state at `tau`.
/// The residual is `|change - integral| / max(|G(tau)|, |G(t)|)` (absolute
/// when both vanish), maximized over intervals.
pub fn moment_residual(
    traj: &Trajectory,
    g: &WeightSequence,
    tolerance: f64,
    panels: usize,
) -> Result<OracleReport, DiagnosticsError> {
    moment_residuals(traj, std::slice::from_ref(g), tolerance, panels).map(|mut v| v.remove(0))
}

struct IntervalBalance {
    /// `(|change - integral|, scale)` per weight
    errors: Vec<(f64, f64)>,
    panels: usize,
}

fn interval_balance(
    traj: &Trajectory,
    table: &[f64],
    gs: &[Vec<f64>],
    from: &ClusterState,
    to: &ClusterState,
    mut panels: usize,
) -> Result<IntervalBalance, DiagnosticsError> {
    let integrals = |panels: usize| -> Result<Vec<f64>, DiagnosticsError> {
        let h = (to.t - from.t) / panels as f64;
        let mut nodes: Vec<f64> = (0..=panels).map(|i| from.t + h * i as f64).collect();
        nodes[panels] = to.t;
        let sub = integrate_from(&traj.kernel, from.values().to_vec(), &nodes, &traj.config)?;
        Ok(gs
            .iter()
            .map(|g| {
                let rates: Vec<f64> = sub
                    .states
                    .iter()
                    .map(|s| weighted_balance(table, g, s.values()))
                    .collect();
                composite_simpson(&rates, h)
            })
            .collect())
    };
    let scales: Vec<(f64, f64)> = gs
        .iter()
        .map(|g| (weighted_sum(g, from.values()), weighted_sum(g, to.values())))
        .collect();
    let mut coarse = integrals(panels)?;
    while panels < MAX_SIMPSON_PANELS {
        let fine = integrals(2 * panels)?;
        panels *= 2;
        let settled = coarse.iter().zip(&fine).zip(&scales).all(|((c, f), (g0, g1))| {
            (f - c).abs() <= QUADRATURE_RTOL * g0.abs().max(g1.abs()).max(f.abs())
        });
        coarse = fine;
        if settled {
            break;
        }
    }
    let errors = coarse
        .iter()
        .zip(&scales)
        .map(|(integral, (g0, g1))| ((g1 - g0 - integral).abs(), g0.abs().max(g1.abs())))
        .collect();
    Ok(IntervalBalance { errors, panels })
}

/// [`moment_residual`] for several weights sharing the quadrature states.
pub fn moment_residuals(
    traj: &Trajectory,
    weights: &[WeightSequence],
    tolerance: f64,
    panels: usize,
) -> Result<Vec<OracleReport>, DiagnosticsError> {
    if panels < 2 || !panels.is_multiple_of(2) || panels > MAX_SIMPSON_PANELS {
        return Err(DiagnosticsError::BadInput(format!(
            "Simpson quadrature needs an even number of panels in [2, {MAX_SIMPSON_PANELS}], got {panels}"
        )));
    }
    let n = traj.n();
    let gs: Vec<Vec<f64>> = weights.iter().map(|g| g.values(n)).collect::<Result<_, _>>()?;
    let table = kernel_table(&traj.kernel, n);

    let intervals: Vec<IntervalBalance> = traj
        .states
        .par_windows(2)
        .map(|w| interval_balance(traj, &table, &gs, &w[0], &w[1], panels))
        .collect::<Result<_, _>>()?;
    let max_panels = intervals.iter().map(|b| b.panels).max().unwrap_or(0);

    let ctx = ReportContext::of(traj);
    Ok(weights
        .iter()
        .enumerate()
        .map(|(wi, g)| {
            let mut worst = 0.0f64;
            let mut worst_time = None;
            for (i, b) in intervals.iter().enumerate() {
                let (err, scale) = b.errors[wi];
                let rel = if scale > 0.0 { err / scale } else { err };
                if worst_time.is_none() || rel > worst {
                    worst = rel;
                    worst_time = Some(traj.states[i + 1].t);
                }
            }
            OracleReport::measured(format!("moment_balance[g={}]", g.name()), worst, tolerance, ctx.clone())
                .with_detail(format!(
                    "max relative residual of the integrated weighted balance over {} intervals, up to {max_panels} Simpson panels",
                    intervals.len()
                ))
                .at(None, worst_time)
        })
        .collect())
}

fn constant_kernel(traj: &Trajectory, check: &'static str) -> Result<f64, DiagnosticsError> {
    traj.kernel
        .constant_value()
        .ok_or_else(|| DiagnosticsError::KernelMismatch {
            check,
            kernel: traj.kernel.spec(),
        })
}

fn rel_err(observed: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        observed.abs()
    } else {
        (observed - expected).abs() / expected.abs()
    }
}

/// Odd-size cluster number against `nu_odd(0) / (1 + K nu_odd(0) t)`.
pub fn odd_count_check(traj: &Trajectory, tolerance: f64) -> Result<OracleReport, DiagnosticsError> {
    let k = constant_kernel(traj, "odd_count")?;
    let t0 = traj.first().t;
    let nu0 = traj.first().nu_odd();
    let (mut worst, mut at) = (0.0f64, t0);
    for s in &traj.states {
        let e = rel_err(s.nu_odd(), oracles::nu_odd_exact_k(nu0, s.t - t0, k));
        if e > worst {
            worst = e;
            at = s.t;
        }
    }
    Ok(
        OracleReport::measured("odd_count", worst, tolerance, ReportContext::of(traj))
            .with_detail(format!("nu_odd(0) = {nu0:.17e}; max relative error vs closed form"))
            .at(None, Some(at)),
    )
}

/// Cluster number inside `[nu0/(1 + K nu0 t), nu0/(1 + K nu0 t/2)]`, widened
/// by the relative `slack`.
pub fn nu_envelope_check(traj: &Trajectory, slack: f64) -> Result<OracleReport, DiagnosticsError> {
    let k = constant_kernel(traj, "nu_envelope")?;
    let t0 = traj.first().t;
    let nu0 = traj.first().nu();
    let (mut worst, mut at) = (0.0f64, t0);
    for s in &traj.states {
        let (lo, hi) = oracles::nu_bounds_k(nu0, s.t - t0, k);
        let nu = s.nu();
        let below = if nu < lo { (lo - nu) / lo } else { 0.0 };
        let above = if nu > hi { (nu - hi) / hi } else { 0.0 };
        let v = below.max(above);
        if v > worst {
            worst = v;
            at = s.t;
        }
    }
    Ok(
        OracleReport::measured("nu_envelope", worst, slack, ReportContext::of(traj))
            .with_detail("largest relative excursion of nu(t) outside its two-sided envelope")
            .at(None, Some(at)),
    )
}

/// Geometric data under a constant kernel against the self-similar solution,
/// for sizes `j <= j_max`.
pub fn self_similar_check(
    traj: &Trajectory,
    j_max: usize,
    tolerance: f64,
) -> Result<OracleReport, DiagnosticsError> {
    let k = constant_kernel(traj, "self_similar")?;
    let Some(InitialCondition::Geometric { a0, alpha }) = traj.initial_condition else {
        return Err(DiagnosticsError::NotApplicable {
            check: "self_similar",
            reason: "initial condition is not geometric".into(),
        });
    };
    let params = SelfSimilarParams::new(a0, alpha);
    let j_max = j_max.min(traj.n());
    let t0 = traj.first().t;
    let (mut worst, mut at, mut idx) = (0.0f64, t0, 1);
    for s in &traj.states {
        for j in 1..=j_max {
            let e = rel_err(s.get(j), oracles::self_similar_exact_k(&params, j, s.t - t0, k));
            if e > worst {
                (worst, at, idx) = (e, s.t, j);
            }
        }
    }
    Ok(
        OracleReport::measured("self_similar", worst, tolerance, ReportContext::of(traj))
            .with_detail(format!(
                "max relative error of c_j, j <= {j_max}, vs A0 alpha^j / (1 + beta K t), beta = {:.17e}",
                params.beta_rate()
            ))
            .at(Some(idx), Some(at)),
    )
}

/// Monodisperse data against `lambda / (1 + lambda a_pp t)`; every other
/// component must be exactly zero.
pub fn monodisperse_check(traj: &Trajectory, tolerance: f64) -> Result<OracleReport, DiagnosticsError> {
    let Some(InitialCondition::Monodisperse { p, lambda }) = traj.initial_condition else {
        return Err(DiagnosticsError::NotApplicable {
            check: "monodisperse",
            reason: "initial condition is not monodisperse".into(),
        });
    };
    let a_pp = traj.kernel.eval(p, p);
    let t0 = traj.first().t;
    let (mut worst, mut at) = (0.0f64, t0);
    let mut nonzero = 0usize;
    for s in &traj.states {
        let e = rel_err(s.get(p), oracles::monodisperse_exact(lambda, a_pp, s.t - t0));
        if e > worst {
            worst = e;
            at = s.t;
        }
        nonzero += s
            .values()
            .iter()
            .enumerate()
            .filter(|(i, v)| i + 1 != p && v.to_bits() != 0)
            .count();
    }
    let mut report = OracleReport::measured("monodisperse", worst, tolerance, ReportContext::of(traj))
        .with_detail(format!(
            "max relative error of c_{p}; {nonzero} off-index entries not exactly zero"
        ))
        .at(Some(p), Some(at));
    report.pass &= nonzero == 0;
    Ok(report)
}

/// Euclid over a set of positive integers.
pub fn gcd_of(values: &BTreeSet<usize>) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    values.iter().fold(0, |acc, &v| gcd(acc, v))
}

/// Positivity set predicted for `t > 0` from the initial positivity set `p`:
/// `m N ∩ [1, max p]` with `m = gcd(p)` when `p` has several elements, and `p`
/// itself when it has one.
pub fn predicted_support(p: &BTreeSet<usize>) -> BTreeSet<usize> {
    match (p.len(), p.last()) {
        (0, _) | (_, None) => BTreeSet::new(),
        (1, _) => p.clone(),
        (_, Some(&max)) => {
            let m = gcd_of(p);
            (1..=max / m).map(|i| i * m).collect()
        }
    }
}

/// Support law: at each grid time after the first, entries outside the
/// predicted support are exactly zero and entries inside exceed `threshold`.
/// Within `t_min` of the start, sub-threshold positive entries inside the
/// prediction are noted without failing.
pub fn support_invariance_check(
    traj: &Trajectory,
    threshold: f64,
    t_min: f64,
) -> Result<OracleReport, DiagnosticsError> {
    let initial = traj.first().support(0.0);
    if initial.is_empty() {
        return Err(DiagnosticsError::PreconditionViolated(
            "initial support is empty".into(),
        ));
    }
    let predicted = predicted_support(&initial);
    let t0 = traj.first().t;
    let mut violations = 0usize;
    let mut first: Option<(usize, f64, String)> = None;
    let mut early_notes = 0usize;
    let mut min_inside = f64::INFINITY;
    for s in traj.states.iter().skip(1) {
        for (i, &v) in s.values().iter().enumerate() {
            let j = i + 1;
            if predicted.contains(&j) {
                min_inside = min_inside.min(v);
                if v > threshold {
                    continue;
                }
                if v > 0.0 && s.t - t0 < t_min {
                    early_notes += 1;
                    continue;
                }
                violations += 1;
                first.get_or_insert((j, s.t, format!("c_{j} = {v:e} <= threshold inside predicted support")));
            } else if v.to_bits() != 0 {
                violations += 1;
                first.get_or_insert((j, s.t, format!("c_{j} = {v:e} is nonzero outside predicted support")));
            }
        }
    }
    let observed: Vec<usize> = traj.last().support(threshold).into_iter().collect();
    let m = gcd_of(&initial);
    let mut detail = format!(
        "initial support {:?}, gcd {m}, predicted {:?}; min entry inside prediction {min_inside:e}",
        initial, predicted
    );
    if early_notes > 0 {
        detail.push_str(&format!(
            "; {early_notes} sub-threshold positive entries before t_min = {t_min}"
        ));
    }
    let (idx, time) = match &first {
        Some((j, t, msg)) => {
            detail.push_str(&format!("; first violation at t = {t}: {msg}"));
            (Some(*j), Some(*t))
        }
        None => (None, None),
    };
    let mut report = OracleReport::measured("support_invariance", violations as f64, 0.0, ReportContext::of(traj))
        .with_detail(detail)
        .at(idx, time);
    report.support = Some(observed);
    Ok(report)
}

/// Long-time decay: passes when `max_j c_j < epsilon` at the last grid time.
/// Requires `a(j,j) > 0` for every `j` in the truncation.
pub fn decay_check(traj: &Trajectory, epsilon: f64) -> Result<OracleReport, DiagnosticsError> {
    if let Some(j) = (1..=traj.n()).find(|&j| !(traj.kernel.eval(j, j) > 0.0)) {
        return Err(DiagnosticsError::PreconditionViolated(format!(
            "diagonal rate a({j},{j}) = {} is not positive",
            traj.kernel.eval(j, j)
        )));
    }
    let last = traj.last();
    let (idx, max) = last
        .values()
        .iter()
        .enumerate()
        .fold((1, 0.0f64), |acc, (i, &v)| if v > acc.1 { (i + 1, v) } else { acc });
    let mut report = OracleReport::measured("decay", max, epsilon, ReportContext::of(traj))
        .with_detail(format!("max_j c_j(t = {}) = {max:e} at j = {idx}", last.t))
        .at(Some(idx), Some(last.t));
    report.pass = max < epsilon;
    Ok(report)
}

/// Tail moments `sum_{j >= m} j^p c_j` are nonincreasing in time for every
/// `m`, so never exceed their initial values. `m = 1` is number (`p = 0`) or
/// mass (`p = 1`) monotonicity. Violations beyond `slack * ||c(0)||_p` fail.
pub fn tail_moment_check(traj: &Trajectory, p: u32, slack: f64) -> OracleReport {
    let n = traj.n();
    let weight = |j: usize| if p == 0 { 1.0 } else { j as f64 };
    let tails = |s: &ClusterState| -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut acc = 0.0;
        for j in (1..=n).rev() {
            acc += weight(j) * s.get(j);
            out[j - 1] = acc;
        }
        out
    };
    let norm0 = traj.first().moment(p);
    let mut running_min = tails(traj.first());
    let (mut worst, mut at, mut idx) = (0.0f64, None, None);
    for s in traj.states.iter().skip(1) {
        for (m, v) in tails(s).into_iter().enumerate() {
            let excess = v - running_min[m];
            if excess > worst {
                (worst, at, idx) = (excess, Some(s.t), Some(m + 1));
            }
            running_min[m] = running_min[m].min(v);
        }
    }
    let residual = if norm0 > 0.0 { worst / norm0 } else { worst };
    let name = if p == 0 { "number_monotone" } else { "mass_monotone" };
    OracleReport::measured(name, residual, slack, ReportContext::of(traj))
        .with_detail(format!(
            "largest increase of a tail moment sum_(j>=m) j^{p} c_j relative to ||c(0)||_{p} = {norm0:.17e}"
        ))
        .at(idx, at)
}

/// Distances between runs at consecutive truncation sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub sizes: Vec<usize>,
    /// `distances[i] = max_t sum_{j <= N_i} j |c_j^{N_i}(t) - c_j^{N_{i+1}}(t)|`
    pub distances: Vec<f64>,
    pub report: OracleReport,
}

impl ConvergenceResult {
    pub fn nonincreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// Integrates at each truncation size (concurrently) and measures how much
/// consecutive sizes disagree in the first-moment norm. Passes when the
/// distances are nonincreasing along the ladder.
pub fn truncation_convergence(
    kernel: &Kernel,
    ic: &InitialCondition,
    sizes: &[usize],
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ConvergenceResult, DiagnosticsError> {
    if sizes.len() < 2 {
        return Err(DiagnosticsError::BadInput("need at least two truncation sizes".into()));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] == 0 {
        return Err(DiagnosticsError::BadInput(format!(
            "truncation sizes must be positive and strictly increasing, got {sizes:?}"
        )));
    }
    let runs: Vec<Trajectory> = sizes
        .par_iter()
        .map(|&n| integrate(kernel, ic, n, grid, cfg))
        .collect::<Result<_, _>>()?;
    let distances: Vec<f64> = runs
        .windows(2)
        .map(|pair| {
            let (small, large) = (&pair[0], &pair[1]);
            small
                .states
                .iter()
                .zip(&large.states)
                .map(|(a, b)| {
                    a.values()
                        .iter()
                        .zip(b.values())
                        .enumerate()
                        .map(|(i, (x, y))| (i + 1) as f64 * (x - y).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let violations = distances.windows(2).filter(|w| w[1] > w[0]).count();
    let ctx = ReportContext::of(&runs[0]);
    let table: Vec<String> = sizes
        .iter()
        .zip(&distances)
        .map(|(n, d)| format!("D({n}) = {d:e}"))
        .collect();
    let report = OracleReport::measured("truncation_convergence", violations as f64, 0.0, ctx)
        .with_detail(table.join(", "));
    Ok(ConvergenceResult {
        sizes: sizes.to_vec(),
        distances,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub t: f64,
    pub t_nu: f64,
    pub t_nu_odd: f64,
    /// `t c_j(t)` for `j = 1..j_max`
    pub t_c: Vec<f64>,
}

/// Rows `(t, t nu, t nu_odd, t c_1, ..., t c_jmax)` for a constant-kernel run.
pub fn scaling_diagnostics(traj: &Trajectory, j_max: usize) -> Result<Vec<ScalingRow>, DiagnosticsError> {
    constant_kernel(traj, "scaling")?;
    if j_max == 0 || j_max > traj.n() {
        return Err(DiagnosticsError::BadInput(format!(
            "j_max must lie in [1, {}], got {j_max}",
            traj.n()
        )));
    }
    Ok(traj
        .states
        .iter()
        .map(|s| ScalingRow {
            t: s.t,
            t_nu: s.t * s.nu(),
            t_nu_odd: s.t * s.nu_odd(),
            t_c: (1..=j_max).map(|j| s.t * s.get(j)).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Moments,
    Support,
    Oracles,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moments" => Ok(Suite::Moments),
            "support" => Ok(Suite::Support),
            "oracles" => Ok(Suite::Oracles),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite '{s}' (moments, support, oracles, all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub tolerance: f64,
    pub panels: usize,
    pub monotone_slack: f64,
    pub envelope_slack: f64,
    pub support_threshold: f64,
    pub support_t_min: f64,
    pub self_similar_j_max: usize,
    /// Include the decay check with this epsilon.
    pub decay_epsilon: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            tolerance: DEFAULT_TOLERANCE,
            panels: DEFAULT_SIMPSON_PANELS,
            monotone_slack: DEFAULT_MONOTONE_SLACK,
            envelope_slack: DEFAULT_TOLERANCE,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            support_t_min: DEFAULT_SUPPORT_T_MIN,
            self_similar_j_max: 20,
            decay_epsilon: None,
        }
    }
}

fn settle(check: &str, ctx: &ReportContext, r: Result<OracleReport, DiagnosticsError>) -> OracleReport {
    match r {
        Ok(report) => report,
        Err(
            e @ (DiagnosticsError::KernelMismatch { .. }
            | DiagnosticsError::NotApplicable { .. }
            | DiagnosticsError::PreconditionViolated(_)),
        ) => OracleReport::skipped(check, e.to_string(), ctx.clone()),
        Err(e) => OracleReport::failed(check, e.to_string(), ctx.clone()),
    }
}

/// Runs a suite of checks; inapplicable checks come back as skipped reports.
pub fn run_suite(traj: &Trajectory, suite: Suite, opts: &SuiteOptions) -> Vec<OracleReport> {
    let ctx = ReportContext::of(traj);
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Moments {
        let weights = [
            WeightSequence::One,
            WeightSequence::Identity,
            WeightSequence::OddIndicator,
        ];
        match moment_residuals(traj, &weights, opts.tolerance, opts.panels) {
            Ok(reports) => out.extend(reports),
            Err(e) => out.push(OracleReport::failed("moment_balance", e.to_string(), ctx.clone())),
        }
        out.push(tail_moment_check(traj, 0, opts.monotone_slack));
        out.push(tail_moment_check(traj, 1, opts.monotone_slack));
    }
    if all || suite == Suite::Support {
        out.push(settle(
            "support_invariance",
            &ctx,
            support_invariance_check(traj, opts.support_threshold, opts.support_t_min),
        ));
    }
    if all || suite == Suite::Oracles {
        out.push(settle("monodisperse", &ctx, monodisperse_check(traj, opts.tolerance)));
        out.push(settle(
            "self_similar",
            &ctx,
            self_similar_check(traj, opts.self_similar_j_max, opts.tolerance),
        ));
        out.push(settle("odd_count", &ctx, odd_count_check(traj, opts.tolerance)));
        out.push(settle("nu_envelope", &ctx, nu_envelope_check(traj, opts.envelope_slack)));
        if let Some(eps) = opts.decay_epsilon {
            out.push(settle("decay", &ctx, decay_check(traj, eps)));
        }
    }
    out
}
