//! Closed-form solutions of the cluster-eating system.
//!
//! Everything except [`monodisperse_exact`] holds for the constant kernel
//! `a(j,k) = 1`. For a constant kernel `K` the same formulas apply with time
//! rescaled to `K t`: substituting `s = K t` turns the `K` system into the unit
//! one. The `*_k` variants take that rescaling into account.

use serde::{Deserialize, Serialize};

/// Parameters of the geometric self-similar family `c_j(t) = A0 alpha^j / (1 + beta t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarParams {
    pub a0: f64,
    pub alpha: f64,
}

impl SelfSimilarParams {
    /// # Panics
    /// If `a0 < 0` or `alpha` is outside `[0, 1)`.
    pub fn new(a0: f64, alpha: f64) -> Self {
        assert!(a0 >= 0.0 && a0.is_finite(), "A0 must be finite and nonnegative");
        assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
        SelfSimilarParams { a0, alpha }
    }

    /// Decay rate `beta = A0 alpha / (1 - alpha^2)`.
    pub fn beta_rate(&self) -> f64 {
        self.a0 * self.alpha / (1.0 - self.alpha * self.alpha)
    }
}

/// `c_p(t) = lambda / (1 + lambda a_pp t)` for data `lambda delta_{j,p}`; the
/// solution stays concentrated on `p` for any kernel.
pub fn monodisperse_exact(lambda: f64, a_pp: f64, t: f64) -> f64 {
    lambda / (1.0 + lambda * a_pp * t)
}

/// `c_j(t) = A0 alpha^j / (1 + beta t)` under the unit kernel.
pub fn self_similar_exact(params: &SelfSimilarParams, j: usize, t: f64) -> f64 {
    params.a0 * params.alpha.powi(j as i32) / (1.0 + params.beta_rate() * t)
}

/// [`self_similar_exact`] under the constant kernel `k`.
pub fn self_similar_exact_k(params: &SelfSimilarParams, j: usize, t: f64, k: f64) -> f64 {
    self_similar_exact(params, j, k * t)
}

/// `nu_odd(t) = nu_odd(0) / (1 + nu_odd(0) t)`, the solution of `nu_odd' = -nu_odd^2`.
pub fn nu_odd_exact(nu_odd_0: f64, t: f64) -> f64 {
    nu_odd_0 / (1.0 + nu_odd_0 * t)
}

pub fn nu_odd_exact_k(nu_odd_0: f64, t: f64, k: f64) -> f64 {
    nu_odd_exact(nu_odd_0, k * t)
}

/// Envelope `nu(0)/(1 + nu(0) t) <= nu(t) <= nu(0)/(1 + nu(0) t / 2)`, from
/// `-nu^2 <= nu' <= -nu^2 / 2`.
pub fn nu_bounds(nu_0: f64, t: f64) -> (f64, f64) {
    (nu_0 / (1.0 + nu_0 * t), nu_0 / (1.0 + 0.5 * nu_0 * t))
}

pub fn nu_bounds_k(nu_0: f64, t: f64, k: f64) -> (f64, f64) {
    nu_bounds(nu_0, k * t)
}

/// Large-time limits `(lim t c_j(t), lim t nu(t)) = ((1 - alpha^2) alpha^(j-1), 1 + alpha)`
/// of the self-similar family. They do not depend on `A0` (for `A0 > 0`).
pub fn scaling_limits(params: &SelfSimilarParams, j: usize) -> (f64, f64) {
    let a = params.alpha;
    ((1.0 - a * a) * a.powi(j as i32 - 1), 1.0 + a)
}
