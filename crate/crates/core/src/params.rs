//! Constants of the construction: validation, defaults and derived values.
//!
//! Every other module reads its constants from a validated [`Parameters`]
//! value; nothing downstream re-checks the admissibility inequalities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{c, Real};

/// Default blow-up-region width when the configuration leaves it out.
pub const DEFAULT_K0: f64 = 2.0;
/// Default shrinking-set amplitude.
pub const DEFAULT_A: f64 = 20.0;
/// Default initial similarity time.
pub const DEFAULT_S0: f64 = 20.0;

/// Tolerance used when both `s0` and `t_blowup` are supplied and must agree.
const CLOCK_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{name}` must be finite (got {value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("only dimension N = 1 is supported (got {0})")]
    UnsupportedDimension(usize),
    #[error("p must exceed 3 (p > 3), got p = {p}")]
    PNotAboveThree { p: f64 },
    #[error("q must exceed N(p-1)/2 + 1 = {lower}, got q = {q}")]
    QTooSmall { q: f64, lower: f64 },
    #[error("q must be below N(p-1)/2 + (p+1)/2 = {upper}, got q = {q}")]
    QTooLarge { q: f64, upper: f64 },
    #[error("beta must satisfy 0 <= beta when mu = 0, got beta = {beta}")]
    BetaNegative { beta: f64 },
    #[error("beta must exceed N/(q-1) = {lower} when mu != 0, got beta = {beta}")]
    BetaBelowNonlocal { beta: f64, lower: f64 },
    #[error("beta must be below 2/(p-1) = {upper}, got beta = {beta}")]
    BetaTooLarge { beta: f64, upper: f64 },
    #[error("eps1 must lie in (0, 1/2], got eps1 = {eps1}")]
    Eps1OutOfRange { eps1: f64 },
    #[error("alpha must lie in (0, 1/2), got alpha = {alpha}")]
    AlphaOutOfRange { alpha: f64 },
    #[error("eps must satisfy 0 < eps < min(1, eps1/beta) = {upper}, got eps = {eps}")]
    EpsOutOfRange { eps: f64, upper: f64 },
    #[error("K0 must satisfy K0 >= 1, got K0 = {k0}")]
    K0TooSmall { k0: f64 },
    #[error("A must satisfy A >= 1, got A = {a}")]
    ATooSmall { a: f64 },
    #[error("s0 must satisfy s0 > 1, got s0 = {s0}")]
    S0TooSmall { s0: f64 },
    #[error("T = {t} is not exp(-s0) = {expected}")]
    ClockMismatch { t: f64, expected: f64 },
}

/// Unvalidated parameter values as read from a configuration source.
///
/// `eps`, `k0`, `a_const`, `s0`, `t_blowup` and `dim` are optional; the rest
/// are required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawParameters<T> {
    pub p: Option<T>,
    pub q: Option<T>,
    pub mu: Option<T>,
    pub dim: Option<usize>,
    pub beta: Option<T>,
    pub eps1: Option<T>,
    pub alpha: Option<T>,
    pub eps: Option<T>,
    pub k0: Option<T>,
    pub a_const: Option<T>,
    pub s0: Option<T>,
    pub t_blowup: Option<T>,
}

impl<T: Real> RawParameters<T> {
    /// The reference desk-scale set: p = 5, q = 4, mu = 1, beta = 0.4,
    /// eps1 = 0.25, alpha = 0.4 with the default K0, A and s0.
    pub fn desk_default() -> Self {
        Self {
            p: Some(c(5.0)),
            q: Some(c(4.0)),
            mu: Some(c(1.0)),
            dim: Some(1),
            beta: Some(c(0.4)),
            eps1: Some(c(0.25)),
            alpha: Some(c(0.4)),
            eps: None,
            k0: Some(c(DEFAULT_K0)),
            a_const: Some(c(DEFAULT_A)),
            s0: Some(c(DEFAULT_S0)),
            t_blowup: None,
        }
    }
}

/// A validated parameter set. Construct through [`validate_parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters<T> {
    pub p: T,
    pub q: T,
    pub mu: T,
    pub dim: usize,
    pub beta: T,
    pub eps1: T,
    pub alpha: T,
    pub eps: T,
    pub k0: T,
    pub a_const: T,
    pub s0: T,
    pub t_blowup: T,
}

/// Constants computed from a validated set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants<T> {
    /// Decay rate of the nonlocal perturbation in similarity time.
    pub gamma: T,
    /// Constant stationary state `(p-1)^{-1/(p-1)}`.
    pub kappa: T,
    /// Curvature coefficient `(p-1)^2/(4p)` of the profile.
    pub b_coeff: T,
}

/// One line of the admissibility checklist printed by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub label: String,
    pub holds: bool,
}

/// `eps = min(1, eps1/beta) / 2`, with `beta = 0` read as `min(1, inf) = 1`.
pub fn default_eps<T: Real>(eps1: T, beta: T) -> T {
    upper_eps(eps1, beta) * c(0.5)
}

fn upper_eps<T: Real>(eps1: T, beta: T) -> T {
    if beta > T::zero() {
        T::one().min(eps1 / beta)
    } else {
        T::one()
    }
}

fn required<T: Real>(v: Option<T>, name: &'static str) -> Result<T, ParamError> {
    let v = v.ok_or(ParamError::Missing(name))?;
    finite(v, name)
}

fn finite<T: Real>(v: T, name: &'static str) -> Result<T, ParamError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParamError::NonFinite { name, value: v.to_f64_lossy() })
    }
}

/// Checks every admissibility inequality, fills `eps`, `s0`/`T` and the
/// optional defaults, and returns the completed set.
pub fn validate_parameters<T: Real>(raw: RawParameters<T>) -> Result<Parameters<T>, ParamError> {
    let f = |x: T| x.to_f64_lossy();
    let p = required(raw.p, "p")?;
    let q = required(raw.q, "q")?;
    let mu = required(raw.mu, "mu")?;
    let beta = required(raw.beta, "beta")?;
    let eps1 = required(raw.eps1, "eps1")?;
    let alpha = required(raw.alpha, "alpha")?;
    let dim = raw.dim.unwrap_or(1);
    if dim != 1 {
        return Err(ParamError::UnsupportedDimension(dim));
    }
    let n = T::from_usize_lossy(dim);
    let half = c::<T>(0.5);

    if p <= c(3.0) {
        return Err(ParamError::PNotAboveThree { p: f(p) });
    }
    let q_lower = n * (p - T::one()) * half + T::one();
    let q_upper = n * (p - T::one()) * half + (p + T::one()) * half;
    if q <= q_lower {
        return Err(ParamError::QTooSmall { q: f(q), lower: f(q_lower) });
    }
    if q >= q_upper {
        return Err(ParamError::QTooLarge { q: f(q), upper: f(q_upper) });
    }
    let beta_upper = c::<T>(2.0) / (p - T::one());
    if mu == T::zero() {
        if beta < T::zero() {
            return Err(ParamError::BetaNegative { beta: f(beta) });
        }
    } else {
        let beta_lower = n / (q - T::one());
        if beta <= beta_lower {
            return Err(ParamError::BetaBelowNonlocal { beta: f(beta), lower: f(beta_lower) });
        }
    }
    if beta >= beta_upper {
        return Err(ParamError::BetaTooLarge { beta: f(beta), upper: f(beta_upper) });
    }
    if !(eps1 > T::zero() && eps1 <= half) {
        return Err(ParamError::Eps1OutOfRange { eps1: f(eps1) });
    }
    if !(alpha > T::zero() && alpha < half) {
        return Err(ParamError::AlphaOutOfRange { alpha: f(alpha) });
    }
    let eps_upper = upper_eps(eps1, beta);
    let eps = match raw.eps {
        Some(e) => finite(e, "eps")?,
        None => default_eps(eps1, beta),
    };
    if !(eps > T::zero() && eps < eps_upper) {
        return Err(ParamError::EpsOutOfRange { eps: f(eps), upper: f(eps_upper) });
    }
    let k0 = finite(raw.k0.unwrap_or_else(|| c(DEFAULT_K0)), "k0")?;
    if k0 < T::one() {
        return Err(ParamError::K0TooSmall { k0: f(k0) });
    }
    let a_const = finite(raw.a_const.unwrap_or_else(|| c(DEFAULT_A)), "a_const")?;
    if a_const < T::one() {
        return Err(ParamError::ATooSmall { a: f(a_const) });
    }
    let (s0, t_blowup) = match (raw.s0, raw.t_blowup) {
        (Some(s0), None) => {
            let s0 = finite(s0, "s0")?;
            (s0, (-s0).exp())
        }
        (None, Some(t)) => {
            let t = finite(t, "t_blowup")?;
            (-t.ln(), t)
        }
        (Some(s0), Some(t)) => {
            let s0 = finite(s0, "s0")?;
            let t = finite(t, "t_blowup")?;
            let expected = (-s0).exp();
            if ((t - expected) / expected).abs() > c(CLOCK_REL_TOL) {
                return Err(ParamError::ClockMismatch { t: f(t), expected: f(expected) });
            }
            (s0, expected)
        }
        (None, None) => {
            let s0 = c::<T>(DEFAULT_S0);
            (s0, (-s0).exp())
        }
    };
    if !(s0 > T::one()) {
        return Err(ParamError::S0TooSmall { s0: f(s0) });
    }
    Ok(Parameters { p, q, mu, dim, beta, eps1, alpha, eps, k0, a_const, s0, t_blowup })
}

impl<T: Real> Parameters<T> {
    /// Re-runs validation on an existing set; an accepted set comes back unchanged.
    pub fn revalidate(&self) -> Result<Self, ParamError> {
        validate_parameters(self.to_raw())
    }

    pub fn to_raw(&self) -> RawParameters<T> {
        RawParameters {
            p: Some(self.p),
            q: Some(self.q),
            mu: Some(self.mu),
            dim: Some(self.dim),
            beta: Some(self.beta),
            eps1: Some(self.eps1),
            alpha: Some(self.alpha),
            eps: Some(self.eps),
            k0: Some(self.k0),
            a_const: Some(self.a_const),
            s0: Some(self.s0),
            t_blowup: None,
        }
    }

    pub fn derived(&self) -> DerivedConstants<T> {
        derive_constants(self)
    }

    /// Same set with a different `eps1`; `eps` is re-derived from the default rule.
    pub fn with_eps1(&self, eps1: T) -> Result<Self, ParamError> {
        let mut raw = self.to_raw();
        raw.eps1 = Some(eps1);
        raw.eps = None;
        validate_parameters(raw)
    }

    /// Exponent `1 - beta/2 - eps1` of the weighted error rate.
    pub fn rate_exponent(&self) -> T {
        T::one() - self.beta * c(0.5) - self.eps1
    }

    /// Every admissibility inequality with its truth value, in a fixed order.
    pub fn checklist(&self) -> Vec<InequalityCheck> {
        checklist_of(&self.to_raw())
    }
}

/// Checklist for a possibly invalid raw set; missing values count as failing.
pub fn checklist_of<T: Real>(raw: &RawParameters<T>) -> Vec<InequalityCheck> {
    let n = T::from_usize_lossy(raw.dim.unwrap_or(1));
    let half = c::<T>(0.5);
    let mut out = Vec::new();
    let mut push = |label: String, holds: bool| out.push(InequalityCheck { label, holds });
    let p = raw.p;
    let q = raw.q;
    push("N = 1".into(), raw.dim.unwrap_or(1) == 1);
    push(format!("p > 3 (p = {})", show(p)), p.is_some_and(|p| p > c(3.0)));
    match (p, q) {
        (Some(p), Some(q)) => {
            let lo = n * (p - T::one()) * half + T::one();
            let hi = n * (p - T::one()) * half + (p + T::one()) * half;
            push(format!("N(p-1)/2 + 1 = {lo} < q = {q}"), q > lo);
            push(format!("q = {q} < N(p-1)/2 + (p+1)/2 = {hi}"), q < hi);
        }
        _ => {
            push("N(p-1)/2 + 1 < q".into(), false);
            push("q < N(p-1)/2 + (p+1)/2".into(), false);
        }
    }
    match (p, q, raw.beta, raw.mu) {
        (Some(p), Some(q), Some(beta), Some(mu)) => {
            let upper = c::<T>(2.0) / (p - T::one());
            if mu == T::zero() {
                push(format!("mu = 0: 0 <= beta = {beta}"), beta >= T::zero());
            } else {
                let lower = n / (q - T::one());
                push(format!("mu != 0: N/(q-1) = {lower} < beta = {beta}"), beta > lower);
            }
            push(format!("beta = {beta} < 2/(p-1) = {upper}"), beta < upper);
        }
        _ => push("beta range".into(), false),
    }
    push(
        format!("0 < eps1 = {} <= 1/2", show(raw.eps1)),
        raw.eps1.is_some_and(|e| e > T::zero() && e <= half),
    );
    push(
        format!("0 < alpha = {} < 1/2", show(raw.alpha)),
        raw.alpha.is_some_and(|a| a > T::zero() && a < half),
    );
    match (raw.eps1, raw.beta) {
        (Some(eps1), Some(beta)) => {
            let upper = upper_eps(eps1, beta);
            let eps = raw.eps.unwrap_or_else(|| default_eps(eps1, beta));
            push(
                format!("0 < eps = {eps} < min(1, eps1/beta) = {upper}"),
                eps > T::zero() && eps < upper,
            );
        }
        _ => push("0 < eps < min(1, eps1/beta)".into(), false),
    }
    let k0 = raw.k0.unwrap_or_else(|| c(DEFAULT_K0));
    push(format!("K0 = {k0} >= 1"), k0 >= T::one());
    let a = raw.a_const.unwrap_or_else(|| c(DEFAULT_A));
    push(format!("A = {a} >= 1"), a >= T::one());
    let s0 = raw
        .s0
        .or_else(|| raw.t_blowup.map(|t| -t.ln()))
        .unwrap_or_else(|| c(DEFAULT_S0));
    push(format!("s0 = {s0} > 1"), s0 > T::one());
    out
}

fn show<T: Real>(v: Option<T>) -> String {
    v.map_or_else(|| "missing".to_string(), |v| v.to_string())
}

/// `gamma = (p-q)/(p-1) + (N-1)/2`, `kappa = (p-1)^{-1/(p-1)}`, `b = (p-1)^2/(4p)`.
pub fn derive_constants<T: Real>(params: &Parameters<T>) -> DerivedConstants<T> {
    let p = params.p;
    let n = T::from_usize_lossy(params.dim);
    let pm1 = p - T::one();
    DerivedConstants {
        gamma: (p - params.q) / pm1 + (n - T::one()) * c(0.5),
        kappa: pm1.powf(-T::one() / pm1),
        b_coeff: pm1 * pm1 / (c::<T>(4.0) * p),
    }
}
