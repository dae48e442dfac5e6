//! Rate coefficients `a(j, k)` of the cluster-eating reaction `(j) + (k) -> (|j - k|)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{self, KernelAst, ParseError};

/// Default side of the square grid on which expression kernels are checked.
pub const DEFAULT_VALIDATION_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("invalid kernel spec '{0}': expected const:K, product:K,beta or expr:<expression>")]
    BadSpec(String),
    #[error("invalid kernel parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("kernel is not symmetric: a({j},{k}) = {a_jk} but a({k},{j}) = {a_kj}")]
    AsymmetricKernel {
        j: usize,
        k: usize,
        a_jk: f64,
        a_kj: f64,
    },
    #[error("kernel is negative: a({j},{k}) = {value}")]
    NegativeKernel { j: usize, k: usize, value: f64 },
    #[error("kernel evaluation failed at ({j},{k}): {reason}")]
    EvaluationError {
        j: usize,
        k: usize,
        reason: &'static str,
    },
}

#[derive(Debug, Clone)]
pub enum Kernel {
    /// `a(j, k) = K`
    Constant { k: f64 },
    /// `a(j, k) = K (j k)^beta`, `0 <= beta <= 1`
    ProductPower { k: f64, beta: f64 },
    /// User expression, checked symmetric and nonnegative on a sample grid.
    Expression { ast: Arc<KernelAst>, source: String },
}

/// Admissibility regime of a kernel, from tightest to loosest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GrowthClass {
    /// `a(j, k) <= K`
    Bounded,
    /// `a(j, k) <= K (j k)^(1/2)`; the uniqueness regime.
    SqrtProduct,
    /// `a(j, k) <= K j k`; the existence regime.
    LinearProduct,
    Unverified,
}

impl fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthClass::Bounded => "bounded",
            GrowthClass::SqrtProduct => "sqrt-product",
            GrowthClass::LinearProduct => "linear-product",
            GrowthClass::Unverified => "unverified",
        })
    }
}

impl Kernel {
    pub fn constant(k: f64) -> Result<Self, KernelError> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(KernelError::BadParameter(format!(
                "constant K must be finite and nonnegative, got {k}"
            )));
        }
        Ok(Kernel::Constant { k })
    }

    pub fn product_power(k: f64, beta: f64) -> Result<Self, KernelError> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(KernelError::BadParameter(format!(
                "product K must be finite and nonnegative, got {k}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(KernelError::BadParameter(format!(
                "product exponent beta must lie in [0, 1], got {beta}"
            )));
        }
        Ok(Kernel::ProductPower { k, beta })
    }

    /// Parses `source` and validates it on `[1..grid]^2`.
    pub fn expression(source: &str, grid: usize) -> Result<Self, KernelError> {
        let ast = parser::parse(source)?;
        let mut kernel = validate_kernel(ast, grid)?;
        if let Kernel::Expression { source: s, .. } = &mut kernel {
            *s = source.trim().to_string();
        }
        Ok(kernel)
    }

    /// Parses a CLI kernel spec, validating expressions on `[1..grid]^2`.
    pub fn from_spec(spec: &str, grid: usize) -> Result<Self, KernelError> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| KernelError::BadSpec(spec.to_string()))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| KernelError::BadSpec(spec.to_string()))
        };
        match kind.trim() {
            "const" => Kernel::constant(num(rest)?),
            "product" => {
                let (k, beta) = rest
                    .split_once(',')
                    .ok_or_else(|| KernelError::BadSpec(spec.to_string()))?;
                Kernel::product_power(num(k)?, num(beta)?)
            }
            "expr" => Kernel::expression(rest, grid),
            _ => Err(KernelError::BadSpec(spec.to_string())),
        }
    }

    /// `a(j, k)` for `j, k >= 1`. Expressions are evaluated with ordered
    /// arguments, so the result is exactly symmetric.
    #[inline]
    pub fn eval(&self, j: usize, k: usize) -> f64 {
        debug_assert!(j >= 1 && k >= 1);
        match self {
            Kernel::Constant { k: c } => *c,
            Kernel::ProductPower { k: c, beta } => c * power((j * k) as f64, *beta),
            Kernel::Expression { ast, .. } => ast.eval(j.min(k) as f64, j.max(k) as f64),
        }
    }

    /// `Some((K, beta))` when `a(j, k) = K j^beta k^beta`.
    pub fn separable(&self) -> Option<(f64, f64)> {
        match self {
            Kernel::Constant { k } => Some((*k, 0.0)),
            Kernel::ProductPower { k, beta } => Some((*k, *beta)),
            Kernel::Expression { .. } => None,
        }
    }

    /// The constant `K` when the kernel is a built-in constant kernel.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Kernel::Constant { k } => Some(*k),
            _ => None,
        }
    }

    /// Classifies the kernel's growth. Built-in forms are classified from their
    /// parameters; expressions are sampled on `[1..sample_limit]^2`.
    ///
    /// A regime `a <= K w(j, k)` is accepted for an expression when the largest
    /// ratio `a / w` over the full grid exceeds the largest ratio over the
    /// half-size grid by at most 5%, i.e. the ratio shows no growth trend.
    pub fn classify_growth(&self, sample_limit: usize) -> GrowthClass {
        match self {
            Kernel::Constant { .. } => GrowthClass::Bounded,
            Kernel::ProductPower { k, beta } => {
                if *k == 0.0 || *beta == 0.0 {
                    GrowthClass::Bounded
                } else if *beta <= 0.5 {
                    GrowthClass::SqrtProduct
                } else {
                    GrowthClass::LinearProduct
                }
            }
            Kernel::Expression { .. } => {
                let limit = sample_limit.max(2);
                let candidates = [
                    (GrowthClass::Bounded, 0.0),
                    (GrowthClass::SqrtProduct, 0.5),
                    (GrowthClass::LinearProduct, 1.0),
                ];
                for (class, beta) in candidates {
                    let full = self.max_ratio(limit, beta);
                    let half = self.max_ratio((limit / 2).max(1), beta);
                    match (full, half) {
                        (Some(full), Some(half)) if full <= 1.05 * half || full == 0.0 => {
                            return class;
                        }
                        _ => {}
                    }
                }
                GrowthClass::Unverified
            }
        }
    }

    fn max_ratio(&self, limit: usize, beta: f64) -> Option<f64> {
        let mut max = 0.0f64;
        for j in 1..=limit {
            for k in 1..=limit {
                let r = self.eval(j, k) / power((j * k) as f64, beta);
                if !r.is_finite() {
                    return None;
                }
                max = max.max(r);
            }
        }
        Some(max)
    }

    /// Spec string that reproduces this kernel.
    pub fn spec(&self) -> String {
        match self {
            Kernel::Constant { k } => format!("const:{k}"),
            Kernel::ProductPower { k, beta } => format!("product:{k},{beta}"),
            Kernel::Expression { source, .. } => format!("expr:{source}"),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec())
    }
}

impl FromStr for Kernel {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kernel::from_spec(s, DEFAULT_VALIDATION_GRID)
    }
}

#[inline]
fn power(x: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        1.0
    } else if beta == 1.0 {
        x
    } else if beta == 0.5 {
        x.sqrt()
    } else {
        x.powf(beta)
    }
}

/// `j^beta` with the same special cases as [`Kernel::eval`].
#[inline]
pub(crate) fn index_power(j: usize, beta: f64) -> f64 {
    power(j as f64, beta)
}

/// Relative tolerance of the symmetry test in [`validate_kernel`].
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Checks an expression on `[1..grid]^2` and wraps it as a kernel.
///
/// The grid is scanned row by row; the first failing pair is reported. Every
/// value must be finite and nonnegative, and `a(j, k)` must equal `a(k, j)` up
/// to [`SYMMETRY_RTOL`], which absorbs rounding from evaluation order (e.g.
/// `(x + j) + k` vs `(x + k) + j`).
pub fn validate_kernel(ast: KernelAst, grid: usize) -> Result<Kernel, KernelError> {
    let grid = grid.max(2);
    for j in 1..=grid {
        for k in 1..=grid {
            let v = ast.eval(j as f64, k as f64);
            if v.is_nan() {
                return Err(KernelError::EvaluationError {
                    j,
                    k,
                    reason: "result is not a number (division by zero or invalid power)",
                });
            }
            if v.is_infinite() {
                return Err(KernelError::EvaluationError {
                    j,
                    k,
                    reason: "result is infinite (division by zero)",
                });
            }
            if k > j {
                let w = ast.eval(k as f64, j as f64);
                if w.is_finite() && (v - w).abs() > SYMMETRY_RTOL * v.abs().max(w.abs()) {
                    return Err(KernelError::AsymmetricKernel {
                        j,
                        k,
                        a_jk: v,
                        a_kj: w,
                    });
                }
            }
            if v < 0.0 {
                return Err(KernelError::NegativeKernel { j, k, value: v });
            }
        }
    }
    let source = ast.to_string();
    Ok(Kernel::Expression {
        ast: Arc::new(ast),
        source,
    })
}
