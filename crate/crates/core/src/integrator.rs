//! Adaptive Dormand–Prince 5(4) integration of the truncated system.
//!
//! Steps are sized by the standard controller on a weighted RMS error norm.
//! A step that would drive any component below `-negativity_floor` is
//! rejected and retried with half the step; accepted components in
//! `(-negativity_floor, 0)` are set to exactly zero. Components whose
//! derivative is exactly zero stay bitwise unchanged, so supports evolve
//! exactly as the equations dictate.
//!
//! The RMS error norm averages over the active dimension: indices up to the
//! largest one occupied initially. Larger sizes can never be produced, so
//! their components stay exactly zero, and padding a compactly supported run
//! with a larger truncation reproduces it bit for bit (naive path).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Kernel;
use crate::rhs::{Rhs, RhsError, RhsPath, Summation};
use crate::state::{ClusterState, InitialCondition, StateError};

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Rhs(#[from] RhsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub negativity_floor: f64,
    pub rhs_path: RhsPath,
    pub summation: Summation,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            negativity_floor: 1e-14,
            rhs_path: RhsPath::Auto,
            summation: Summation::Plain,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(IntegratorError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("max_step", self.max_step)?;
        if !(self.negativity_floor >= 0.0 && self.negativity_floor.is_finite()) {
            return Err(IntegratorError::Config(format!(
                "negativity_floor must be finite and nonnegative, got {}",
                self.negativity_floor
            )));
        }
        Ok(())
    }

    /// Same configuration with both tolerances scaled by `factor`.
    pub fn with_tolerance_scale(mut self, factor: f64) -> Self {
        self.rel_tol *= factor;
        self.abs_tol *= factor;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted_steps: u64,
    /// Rejections from the error test.
    pub rejected_steps: u64,
    /// Rejections from the negativity test.
    pub negativity_rejections: u64,
    pub rhs_evaluations: u64,
    pub clamped_components: u64,
}

/// States at the requested output times, with the run's context.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<ClusterState>,
    pub stats: IntegratorStats,
    pub kernel: Kernel,
    pub initial_condition: Option<InitialCondition>,
    pub config: IntegratorConfig,
    /// Whether the FFT right-hand side was used.
    pub fast_rhs: bool,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states[0].n()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn first(&self) -> &ClusterState {
        &self.states[0]
    }

    pub fn last(&self) -> &ClusterState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Checks that `grid` is nonempty, finite, strictly increasing and starts at `t >= 0`.
pub fn validate_grid(grid: &[f64]) -> Result<(), IntegratorError> {
    let Some(&first) = grid.first() else {
        return Err(IntegratorError::Config("output grid is empty".into()));
    };
    if !(first >= 0.0) {
        return Err(IntegratorError::Config(format!(
            "output grid must start at t >= 0, got {first}"
        )));
    }
    if let Some(bad) = grid.iter().find(|t| !t.is_finite()) {
        return Err(IntegratorError::Config(format!("non-finite grid time {bad}")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(IntegratorError::Config(format!(
            "output grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Integrates from `ic` realized at size `n`, placed at `grid[0]`, and records
/// the state at every grid time.
pub fn integrate(
    kernel: &Kernel,
    ic: &InitialCondition,
    n: usize,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    let state = ic.realize(n)?;
    let mut traj = integrate_from(kernel, state.into_values(), grid, cfg)?;
    traj.initial_condition = Some(ic.clone());
    Ok(traj)
}

/// Integrates from concentrations `c0` at `grid[0]`.
pub fn integrate_from(
    kernel: &Kernel,
    c0: Vec<f64>,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    validate_grid(grid)?;
    cfg.validate()?;
    if c0.is_empty() {
        return Err(IntegratorError::Config("truncation size must be >= 1".into()));
    }
    if let Some(bad) = c0.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(IntegratorError::Config(format!(
            "initial concentrations must be finite and nonnegative, got {bad}"
        )));
    }
    let rhs = Rhs::new(kernel, c0.len(), cfg.rhs_path, cfg.summation)?;
    let fast_rhs = rhs.is_fast();
    let active = c0.iter().rposition(|c| *c != 0.0).map_or(1, |i| i + 1);
    let mut stepper = Stepper::new(rhs, *cfg, active);
    let mut y = c0;
    let mut states = Vec::with_capacity(grid.len());
    states.push(ClusterState::new(grid[0], y.clone()));
    for w in grid.windows(2) {
        stepper.advance(&mut y, w[0], w[1])?;
        states.push(ClusterState::new(w[1], y.clone()));
    }
    Ok(Trajectory {
        states,
        stats: stepper.stats,
        kernel: kernel.clone(),
        initial_condition: None,
        config: *cfg,
        fast_rhs,
    })
}

// Dormand–Prince 5(4) tableau.
// The system is autonomous, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

struct Stepper {
    rhs: Rhs,
    cfg: IntegratorConfig,
    stats: IntegratorStats,
    /// Divisor of the RMS norms.
    active: usize,
    /// Proposed size of the next step; `None` until the first step.
    h: Option<f64>,
    /// `f(y)` at the current point, valid when `fsal` is set.
    k: [Vec<f64>; 7],
    fsal: bool,
    stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Stepper {
    fn new(rhs: Rhs, cfg: IntegratorConfig, active: usize) -> Self {
        let n = rhs.n();
        Stepper {
            rhs,
            cfg,
            stats: IntegratorStats::default(),
            active,
            h: None,
            k: std::array::from_fn(|_| vec![0.0; n]),
            fsal: false,
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }

    fn f(&mut self, y: &[f64], slot: usize) {
        self.stats.rhs_evaluations += 1;
        let Stepper { rhs, k, .. } = self;
        rhs.eval(y, &mut k[slot]);
    }

    /// Classical starting-step heuristic from the first derivative magnitude.
    fn initial_step(&mut self, y: &[f64], span: f64) -> f64 {
        let d0 = weighted_rms(&self.cfg, self.active, y, y);
        let d1 = weighted_rms(&self.cfg, self.active, &self.k[0], y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for (s, (yi, fi)) in self.stage.iter_mut().zip(y.iter().zip(&self.k[0])) {
            *s = yi + h0 * fi;
        }
        let probe = self.stage.clone();
        self.f(&probe, 1);
        let diff: Vec<f64> = self.k[1].iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = weighted_rms(&self.cfg, self.active, &diff, y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(self.cfg.max_step)
    }

    /// Advances `y` from `t0` to exactly `t1`.
    fn advance(&mut self, y: &mut Vec<f64>, t0: f64, t1: f64) -> Result<(), IntegratorError> {
        let mut t = t0;
        if !self.fsal {
            self.f(y, 0);
            self.fsal = true;
        }
        if self.h.is_none() {
            self.h = Some(self.initial_step(y, t1 - t0));
        }
        let mut last_rejected = false;
        while t < t1 {
            let proposed = self.h.unwrap().min(self.cfg.max_step);
            let remaining = t1 - t;
            // Land exactly on t1, and avoid a sliver step just before it.
            let (h, lands) = if proposed >= remaining || remaining - proposed <= 1e-12 * t1.abs().max(1.0) {
                (remaining, true)
            } else {
                (proposed, false)
            };
            if h <= 8.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) || h < 1e-300 {
                return Err(IntegratorError::StepSizeUnderflow { t, h });
            }

            self.stages(y, h);
            let err = self.error_norm(y, h);
            let floor = self.cfg.negativity_floor;
            if err > 1.0 || !err.is_finite() {
                self.stats.rejected_steps += 1;
                let factor = if err.is_finite() {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
                } else {
                    MIN_FACTOR
                };
                self.h = Some(h * factor);
                last_rejected = true;
                continue;
            }
            if self.y_new.iter().any(|v| *v < -floor) {
                self.stats.negativity_rejections += 1;
                self.h = Some(0.5 * h);
                last_rejected = true;
                continue;
            }

            self.stats.accepted_steps += 1;
            let mut clamped = false;
            for v in &mut self.y_new {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped = true;
                    self.stats.clamped_components += 1;
                } else if *v == 0.0 {
                    // normalize -0.0
                    *v = 0.0;
                }
            }
            std::mem::swap(y, &mut self.y_new);
            if clamped {
                self.f(y, 0);
            } else {
                self.k.swap(0, 6);
            }
            t = if lands { t1 } else { t + h };

            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            // A step shortened to land on t1 keeps the controller's proposal.
            let base = if lands { proposed.max(h) } else { h };
            self.h = Some(base * factor);
        }
        Ok(())
    }

    /// Fills `k[1..7]` and the fifth-order solution `y_new`.
    fn stages(&mut self, y: &[f64], h: f64) {
        let n = y.len();
        macro_rules! stage {
            ($slot:expr, $( ($a:expr, $i:expr) ),+ ) => {{
                for idx in 0..n {
                    let mut acc = 0.0;
                    $( acc += $a * self.k[$i][idx]; )+
                    self.stage[idx] = y[idx] + h * acc;
                }
                let s = std::mem::take(&mut self.stage);
                self.f(&s, $slot);
                self.stage = s;
            }};
        }
        stage!(1, (A21, 0));
        stage!(2, (A31, 0), (A32, 1));
        stage!(3, (A41, 0), (A42, 1), (A43, 2));
        stage!(4, (A51, 0), (A52, 1), (A53, 2), (A54, 3));
        stage!(5, (A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4));
        for idx in 0..n {
            let acc = B1 * self.k[0][idx]
                + B3 * self.k[2][idx]
                + B4 * self.k[3][idx]
                + B5 * self.k[4][idx]
                + B6 * self.k[5][idx];
            self.y_new[idx] = y[idx] + h * acc;
        }
        let y_new = std::mem::take(&mut self.y_new);
        self.f(&y_new, 6);
        self.y_new = y_new;
    }

    fn error_norm(&self, y: &[f64], h: f64) -> f64 {
        let k = &self.k;
        let sum: f64 = (0..y.len())
            .map(|i| {
                let e = h
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                let w = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(self.y_new[i].abs());
                (e / w) * (e / w)
            })
            .sum();
        (sum / self.active as f64).sqrt()
    }
}

/// RMS of `v` weighted by `abs_tol + rel_tol |y|`, averaged over `active` entries.
fn weighted_rms(cfg: &IntegratorConfig, active: usize, v: &[f64], y: &[f64]) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(v, y)| {
            let w = cfg.abs_tol + cfg.rel_tol * y.abs();
            (v / w) * (v / w)
        })
        .sum();
    (sum / active as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const1() -> Kernel {
        Kernel::constant(1.0).unwrap()
    }

    #[test]
    fn monodisperse_unit() {
        let ic = InitialCondition::monodisperse(1, 1.0).unwrap();
        let traj = integrate(&const1(), &ic, 1, &[0.0, 1.0], &IntegratorConfig::default()).unwrap();
        assert!((traj.last().get(1) - 0.5).abs() <= 1e-8);
    }

    #[test]
    fn geometric_self_similar_at_three() {
        let ic = InitialCondition::geometric(1.0, 0.5).unwrap();
        let traj = integrate(&const1(), &ic, 64, &[0.0, 3.0], &IntegratorConfig::default()).unwrap();
        // beta = A0 alpha / (1 - alpha^2) = 2/3, so c_1(3) = 0.5 / 3
        assert!((traj.last().get(1) - 1.0 / 6.0).abs() <= 1e-6);
    }

    #[test]
    fn zero_state_stays_zero() {
        let ic = InitialCondition::explicit(vec![]).unwrap();
        let traj = integrate(
            &Kernel::product_power(1.0, 1.0).unwrap(),
            &ic,
            10,
            &[0.0, 1.0, 100.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        for s in &traj.states {
            assert!(s.values().iter().all(|v| v.to_bits() == 0));
        }
    }

    #[test]
    fn first_state_is_initial_condition() {
        let ic = InitialCondition::geometric(2.0, 0.3).unwrap();
        let traj = integrate(&const1(), &ic, 8, &[0.5, 1.0], &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.first().values(), ic.realize(8).unwrap().values());
        assert_eq!(traj.times(), vec![0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_grids_and_configs() {
        let ic = InitialCondition::monodisperse(1, 1.0).unwrap();
        let cfg = IntegratorConfig::default();
        for grid in [&[][..], &[-1.0, 1.0], &[0.0, 0.0], &[0.0, 2.0, 1.0], &[0.0, f64::NAN]] {
            assert!(matches!(
                integrate(&const1(), &ic, 2, grid, &cfg),
                Err(IntegratorError::Config(_))
            ));
        }
        let bad = IntegratorConfig {
            rel_tol: 0.0,
            ..cfg
        };
        assert!(matches!(
            integrate(&const1(), &ic, 2, &[0.0, 1.0], &bad),
            Err(IntegratorError::Config(_))
        ));
        let bad = IntegratorConfig {
            negativity_floor: -1.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_point_grid() {
        let ic = InitialCondition::monodisperse(2, 1.0).unwrap();
        let traj = integrate(&const1(), &ic, 3, &[0.0], &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.stats.accepted_steps, 0);
    }

    #[test]
    fn max_step_is_honoured() {
        let ic = InitialCondition::monodisperse(1, 1.0).unwrap();
        let cfg = IntegratorConfig {
            max_step: 0.01,
            ..Default::default()
        };
        let traj = integrate(&const1(), &ic, 1, &[0.0, 1.0], &cfg).unwrap();
        assert!(traj.stats.accepted_steps >= 100);
    }
}
