//! Right-hand side of the truncated cluster-eating system
//!
//! ```text
//! dc_j/dt = sum_{k=1}^{N-j} a(j+k,k) c_{j+k} c_k  -  c_j sum_{k=1}^{N} a(j,k) c_k,   j = 1..N
//! ```
//!
//! The first (gain) sum is empty for `j = N`, and hence for `N = 1`.
//!
//! Two evaluation paths are provided. The naive path sums directly in
//! ascending `k` and is the reference. The fast path applies to separable
//! kernels `a(j,k) = K j^beta k^beta`: with `u_i = i^beta c_i` the gain is
//! `K sum_k u_{j+k} u_k`, the autocorrelation of `u` at lag `j`, computed with
//! an FFT in `O(N log N)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{index_power, Kernel};
use crate::state::ClusterState;

/// Truncations at least this large use the fast path under [`RhsPath::Auto`].
pub const AUTO_FAST_THRESHOLD: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RhsError {
    #[error("the fast path needs a separable kernel K j^beta k^beta, got {0}")]
    UnsupportedKernel(String),
    #[error("the fast path supports N <= {FAST_MAX_N}, got {0}")]
    TruncationTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsPath {
    Naive,
    Fast,
    /// Fast for separable kernels with `N >= AUTO_FAST_THRESHOLD`, naive otherwise.
    #[default]
    Auto,
}

impl FromStr for RhsPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(RhsPath::Naive),
            "fast" => Ok(RhsPath::Fast),
            "auto" => Ok(RhsPath::Auto),
            _ => Err(format!("unknown rhs path '{s}' (naive, fast, auto)")),
        }
    }
}

impl fmt::Display for RhsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhsPath::Naive => "naive",
            RhsPath::Fast => "fast",
            RhsPath::Auto => "auto",
        })
    }
}

/// Accumulation mode of the naive path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Summation {
    #[default]
    Plain,
    /// Compensated sums and error-free products; `dc_j/dt` is formed from
    /// gain and loss carried to about twice working precision.
    Compensated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsOutput {
    /// `d[j-1] = dc_j/dt`
    pub d: Vec<f64>,
    pub gain: Option<Vec<f64>>,
    pub loss: Option<Vec<f64>>,
}

/// Reference evaluation by direct double summation in ascending `k`, with
/// gain/loss decomposition.
pub fn eval_naive(kernel: &Kernel, state: &ClusterState) -> RhsOutput {
    eval_naive_with(kernel, state, Summation::Plain)
}

/// [`eval_naive`] with a chosen accumulation mode.
pub fn eval_naive_with(kernel: &Kernel, state: &ClusterState, summation: Summation) -> RhsOutput {
    Rhs::naive(kernel, state.n(), summation).eval_decomposed(state.values())
}

/// FFT evaluation for separable kernels, with gain/loss decomposition.
pub fn eval_fast(kernel: &Kernel, state: &ClusterState) -> Result<RhsOutput, RhsError> {
    let mut rhs = Rhs::fast(kernel, state.n())?;
    Ok(rhs.eval_decomposed(state.values()))
}

/// Reusable evaluator for a fixed kernel and truncation size.
pub struct Rhs {
    n: usize,
    imp: Imp,
    /// Gain and loss as unevaluated sums `hi + lo`.
    gain: Vec<TwoFloat>,
    loss: Vec<TwoFloat>,
}

enum Imp {
    Naive {
        /// Row-major `a(j,k)`, `table[(j-1)*n + (k-1)]`.
        table: Vec<f64>,
        summation: Summation,
    },
    Fast(Box<FastImp>),
}

/// Upper bound on the fixed-point precision of the quantized correlation input.
const MAX_FIXED_BITS: i32 = 60;
/// Largest truncation the fast path accepts: limb-pair correlations must stay
/// exactly representable in an f64.
pub const FAST_MAX_N: usize = 1 << 20;
/// Limb width; four limbs cover `MAX_FIXED_BITS`.
const LIMB_BITS: u32 = 15;
const LIMBS: usize = 4;
const GROUPS: usize = 2 * LIMBS - 1;

struct FastImp {
    k: f64,
    /// Fixed-point bits, chosen so that `sum_i q_i^2 < 2^126` for `|q_i| < 2^bits`.
    fixed_bits: i32,
    /// `i^beta`, `i = 1..N`
    weights: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Spectra of the limbs of the quantized sequence.
    limbs: Vec<Vec<Complex<f64>>>,
    /// Spectra of the limb-pair correlations, grouped by combined limb weight.
    groups: Vec<Vec<Complex<f64>>>,
    scratch: Vec<Complex<f64>>,
    u: Vec<TwoFloat>,
}

impl Rhs {
    pub fn new(
        kernel: &Kernel,
        n: usize,
        path: RhsPath,
        summation: Summation,
    ) -> Result<Self, RhsError> {
        match path {
            RhsPath::Naive => Ok(Rhs::naive(kernel, n, summation)),
            RhsPath::Fast => Rhs::fast(kernel, n),
            RhsPath::Auto => {
                if kernel.separable().is_some() && n >= AUTO_FAST_THRESHOLD {
                    Rhs::fast(kernel, n)
                } else {
                    Ok(Rhs::naive(kernel, n, summation))
                }
            }
        }
    }

    pub fn naive(kernel: &Kernel, n: usize, summation: Summation) -> Self {
        assert!(n >= 1);
        let mut table = vec![0.0; n * n];
        for j in 1..=n {
            for k in j..=n {
                let a = kernel.eval(j, k);
                table[(j - 1) * n + (k - 1)] = a;
                table[(k - 1) * n + (j - 1)] = a;
            }
        }
        Rhs {
            n,
            imp: Imp::Naive { table, summation },
            gain: vec![TwoFloat::ZERO; n],
            loss: vec![TwoFloat::ZERO; n],
        }
    }

    pub fn fast(kernel: &Kernel, n: usize) -> Result<Self, RhsError> {
        assert!(n >= 1);
        let (k, beta) = kernel
            .separable()
            .ok_or_else(|| RhsError::UnsupportedKernel(kernel.spec()))?;
        if n > FAST_MAX_N {
            return Err(RhsError::TruncationTooLarge(n));
        }
        let log_n = usize::BITS as i32 - (n - 1).leading_zeros() as i32;
        let fixed_bits = MAX_FIXED_BITS.min((126 - log_n) / 2);
        // Zero padding to >= 2N keeps the circular correlation free of wrap-around.
        let len = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Rhs {
            n,
            imp: Imp::Fast(Box::new(FastImp {
                k,
                fixed_bits,
                weights: (1..=n).map(|i| index_power(i, beta)).collect(),
                forward,
                inverse,
                limbs: vec![vec![Complex::default(); len]; LIMBS],
                groups: vec![vec![Complex::default(); len]; GROUPS],
                scratch: vec![Complex::default(); scratch_len],
                u: vec![TwoFloat::ZERO; n],
            })),
            gain: vec![TwoFloat::ZERO; n],
            loss: vec![TwoFloat::ZERO; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_fast(&self) -> bool {
        matches!(self.imp, Imp::Fast(_))
    }

    /// Writes `dc/dt` for concentrations `c` into `out`.
    pub fn eval(&mut self, c: &[f64], out: &mut [f64]) {
        assert_eq!(c.len(), self.n);
        assert_eq!(out.len(), self.n);
        self.fill_gain_loss(c);
        for ((d, g), l) in out.iter_mut().zip(&self.gain).zip(&self.loss) {
            // The high parts nearly cancel when gain ~ loss; subtract them first.
            *d = (g.hi - l.hi) + (g.lo - l.lo);
        }
    }

    pub fn eval_decomposed(&mut self, c: &[f64]) -> RhsOutput {
        let mut d = vec![0.0; self.n];
        self.eval(c, &mut d);
        RhsOutput {
            d,
            gain: Some(self.gain.iter().map(TwoFloat::value).collect()),
            loss: Some(self.loss.iter().map(TwoFloat::value).collect()),
        }
    }

    fn fill_gain_loss(&mut self, c: &[f64]) {
        let n = self.n;
        match &mut self.imp {
            Imp::Naive {
                table,
                summation: Summation::Plain,
            } => {
                for j in 1..=n {
                    let mut gain = 0.0;
                    for k in 1..=n - j {
                        gain += table[(j + k - 1) * n + (k - 1)] * c[j + k - 1] * c[k - 1];
                    }
                    let mut rate = 0.0;
                    for (a, ck) in table[(j - 1) * n..j * n].iter().zip(c) {
                        rate += a * ck;
                    }
                    self.gain[j - 1] = TwoFloat::from(gain);
                    self.loss[j - 1] = TwoFloat::from(c[j - 1] * rate);
                }
            }
            Imp::Naive {
                table,
                summation: Summation::Compensated,
            } => {
                for j in 1..=n {
                    let mut gain = TwoFloat::ZERO;
                    for k in 1..=n - j {
                        gain.add(TwoFloat::product(
                            table[(j + k - 1) * n + (k - 1)] * c[j + k - 1],
                            c[k - 1],
                        ));
                    }
                    let mut rate = TwoFloat::ZERO;
                    for (a, ck) in table[(j - 1) * n..j * n].iter().zip(c) {
                        rate.add(TwoFloat::product(*a, *ck));
                    }
                    self.gain[j - 1] = gain;
                    self.loss[j - 1] = rate.scale(c[j - 1]);
                }
            }
            Imp::Fast(f) => f.fill(c, &mut self.gain, &mut self.loss),
        }
    }
}

impl FastImp {
    /// Gain via an exact integer autocorrelation of `u_i = i^beta c_i`.
    ///
    /// `u` is quantized to `fixed_bits`-bit fixed point relative to its largest
    /// entry and split into `LIMB_BITS`-bit limbs. Each limb-pair correlation is
    /// an integer below 2^53, so rounding the FFT result recovers it exactly, and
    /// the limbs recombine in 128-bit integer arithmetic. Positive entries never
    /// quantize to zero, so a lag has zero gain exactly when no pair of positive
    /// entries contributes to it, as under the naive path.
    fn fill(&mut self, c: &[f64], gain: &mut [TwoFloat], loss: &mut [TwoFloat]) {
        let n = c.len();
        let len = self.scratch_len();

        let mut total = TwoFloat::ZERO;
        let mut max = 0.0f64;
        for i in 0..n {
            self.u[i] = TwoFloat::product(self.weights[i], c[i]);
            total.add(self.u[i]);
            max = max.max(self.u[i].hi.abs());
        }
        for j in 0..n {
            loss[j] = total.scale(self.k * self.weights[j]).scale(c[j]);
        }
        if max == 0.0 || self.k == 0.0 {
            gain.fill(TwoFloat::ZERO);
            return;
        }

        // 2^exp > max|u|, so every quantized magnitude lies in [0, 2^fixed_bits).
        // Intermediate integrator stages may carry small negative entries, so the
        // limbs are signed.
        let exp = max.log2().floor() as i32 + 1;
        let up = 2f64.powi(self.fixed_bits - exp);
        for limb in &mut self.limbs {
            limb.fill(Complex::default());
        }
        for (i, u) in self.u.iter().enumerate() {
            let mut q = (u.hi * up).trunc() as i64;
            if q == 0 && u.hi != 0.0 {
                q = u.hi.signum() as i64;
            }
            let (sign, mag) = (q.signum() as f64, q.unsigned_abs());
            for (p, limb) in self.limbs.iter_mut().enumerate() {
                let bits = (mag >> (LIMB_BITS * p as u32)) & ((1 << LIMB_BITS) - 1);
                limb[i] = Complex::new(sign * bits as f64, 0.0);
            }
        }
        for limb in &mut self.limbs {
            self.forward.process_with_scratch(limb, &mut self.scratch);
        }

        // corr(x_p, x_r)[j] = sum_i x_p[i+j] x_r[i] has spectrum X_p conj(X_r):
        // conjugation is the index reversal that turns convolution into correlation.
        for g in &mut self.groups {
            g.fill(Complex::default());
        }
        for p in 0..LIMBS {
            for r in 0..LIMBS {
                let group = &mut self.groups[p + r];
                for ((z, a), b) in group.iter_mut().zip(&self.limbs[p]).zip(&self.limbs[r]) {
                    *z += a * b.conj();
                }
            }
        }
        for g in &mut self.groups {
            self.inverse.process_with_scratch(g, &mut self.scratch);
        }

        let norm = 1.0 / len as f64;
        let down = 2f64.powi(exp - self.fixed_bits);
        let unit = self.k * down * down;
        for j in 1..=n {
            let mut exact: i128 = 0;
            if j < n {
                for (s, g) in self.groups.iter().enumerate() {
                    let v = (g[j].re * norm).round() as i128;
                    exact += v << (LIMB_BITS as usize * s);
                }
            }
            gain[j - 1] = if exact == 0 {
                TwoFloat::ZERO
            } else {
                let hi = exact as f64;
                let lo = (exact - hi as i128) as f64;
                TwoFloat { hi, lo }.scale(unit)
            };
        }
    }

    fn scratch_len(&self) -> usize {
        self.limbs[0].len()
    }
}

/// Unevaluated sum `hi + lo` with `|lo|` at most about one ulp of `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TwoFloat {
    hi: f64,
    lo: f64,
}

impl TwoFloat {
    const ZERO: TwoFloat = TwoFloat { hi: 0.0, lo: 0.0 };

    /// Exact product of two doubles.
    #[inline]
    fn product(a: f64, b: f64) -> Self {
        let hi = a * b;
        TwoFloat {
            hi,
            lo: a.mul_add(b, -hi),
        }
    }

    /// Compensated accumulation of another unevaluated sum.
    #[inline]
    fn add(&mut self, x: TwoFloat) {
        let s = self.hi + x.hi;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x.hi - bp);
        self.hi = s;
        self.lo += err + x.lo;
    }

    #[inline]
    fn scale(self, f: f64) -> Self {
        let p = TwoFloat::product(self.hi, f);
        TwoFloat {
            hi: p.hi,
            lo: p.lo + self.lo * f,
        }
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

impl From<f64> for TwoFloat {
    fn from(hi: f64) -> Self {
        TwoFloat { hi, lo: 0.0 }
    }
}
