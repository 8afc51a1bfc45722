//! Intermediate profile `f`, corrected profile `phi`, potential `V` and the
//! prescribed initial data.

use serde::Serialize;

use crate::params::Parameters;
use crate::scalar::{c, Real};
use crate::spectral::blowup_cutoff_chi;

/// A profile value and its `y`-derivative at one `(y, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint<T> {
    pub y: T,
    pub s: T,
    pub value: T,
    pub gradient: T,
}

/// `phi` with the partial derivatives needed by the remainder term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiJet<T> {
    pub value: T,
    pub dy: T,
    pub dyy: T,
    pub ds: T,
}

/// `e^{-1/x}` and its first two derivatives, zero for `x <= 0`.
fn gluing<T: Real>(x: T) -> (T, T, T) {
    if x <= T::zero() {
        return (T::zero(), T::zero(), T::zero());
    }
    let e = (-x.recip()).exp();
    if e == T::zero() {
        return (T::zero(), T::zero(), T::zero());
    }
    let x2 = x * x;
    let d1 = e / x2;
    let d2 = e * (T::one() - c::<T>(2.0) * x) / (x2 * x2);
    (e, d1, d2)
}

/// Smooth cutoff: 1 on `|x| <= 1`, 0 on `|x| >= 2`, monotone bridge built
/// from `e^{-1/x}` gluing.
pub fn cutoff_chi0<T: Real>(x: T) -> T {
    cutoff_chi0_jet(x).0
}

/// `(chi0, chi0', chi0'')` at `x`.
pub fn cutoff_chi0_jet<T: Real>(x: T) -> (T, T, T) {
    let r = x.abs();
    if r <= T::one() {
        return (T::one(), T::zero(), T::zero());
    }
    if r >= c(2.0) {
        return (T::zero(), T::zero(), T::zero());
    }
    let (a, da, dda) = gluing(c::<T>(2.0) - r);
    let (b, db, ddb) = gluing(r - T::one());
    // d/dr of a(2 - r) flips the sign of the first derivative.
    let da = -da;
    let sum = a + b;
    let num = da * b - a * db;
    let value = a / sum;
    let d1 = num / (sum * sum);
    let d2 = (dda * b - a * ddb) / (sum * sum) - c::<T>(2.0) * num * (da + db) / (sum * sum * sum);
    let sign = if x < T::zero() { -T::one() } else { T::one() };
    (value, sign * d1, d2)
}

/// Closed-form evaluator for the profiles of one parameter set.
#[derive(Debug, Clone, Copy)]
pub struct Profile<T> {
    p: T,
    /// `1/(p-1)`
    inv_pm1: T,
    b: T,
    kappa: T,
    eps: T,
    dim: T,
    k0: T,
    a_const: T,
}

impl<T: Real> Profile<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        let d = params.derived();
        Self {
            p: params.p,
            inv_pm1: T::one() / (params.p - T::one()),
            b: d.b_coeff,
            kappa: d.kappa,
            eps: params.eps,
            dim: T::from_usize_lossy(params.dim),
            k0: params.k0,
            a_const: params.a_const,
        }
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn b_coeff(&self) -> T {
        self.b
    }

    /// `f(z) = (p - 1 + b z^2)^{-1/(p-1)}`
    pub fn f(&self, z: T) -> T {
        (self.p - T::one() + self.b * z * z).powf(-self.inv_pm1)
    }

    pub fn f_prime(&self, z: T) -> T {
        let d = self.p - T::one() + self.b * z * z;
        -self.inv_pm1 * d.powf(-self.inv_pm1 - T::one()) * c::<T>(2.0) * self.b * z
    }

    pub fn f_second(&self, z: T) -> T {
        let a = self.inv_pm1;
        let d = self.p - T::one() + self.b * z * z;
        let two_bz = c::<T>(2.0) * self.b * z;
        -c::<T>(2.0) * a * self.b * d.powf(-a - T::one())
            + a * (a + T::one()) * d.powf(-a - c(2.0)) * two_bz * two_bz
    }

    /// `g_eps(s) = s^{1/2 + eps}`, the width of the correction cutoff.
    pub fn g_eps(&self, s: T) -> T {
        s.powf(c::<T>(0.5) + self.eps)
    }

    /// Amplitude `kappa N / (2 p s)` of the cutoff correction.
    pub fn correction_amplitude(&self, s: T) -> T {
        self.kappa * self.dim / (c::<T>(2.0) * self.p * s)
    }

    /// The correction term `kappa N/(2ps) chi0(y/g_eps(s))` alone.
    pub fn correction(&self, y: T, s: T) -> T {
        self.correction_amplitude(s) * cutoff_chi0(y / self.g_eps(s))
    }

    pub fn phi(&self, y: T, s: T) -> T {
        self.f(y / s.sqrt()) + self.correction(y, s)
    }

    pub fn phi_point(&self, y: T, s: T) -> ProfilePoint<T> {
        let jet = self.phi_jet(y, s);
        ProfilePoint { y, s, value: jet.value, gradient: jet.dy }
    }

    /// `phi` and its analytic derivatives in `y` (first, second) and `s`.
    pub fn phi_jet(&self, y: T, s: T) -> PhiJet<T> {
        let sq = s.sqrt();
        let z = y / sq;
        let g = self.g_eps(s);
        let zz = y / g;
        let amp = self.correction_amplitude(s);
        let (ch, ch1, ch2) = cutoff_chi0_jet(zz);
        let fp = self.f_prime(z);
        let half = c::<T>(0.5);
        let g_log_rate = (half + self.eps) / s;
        PhiJet {
            value: self.f(z) + amp * ch,
            dy: fp / sq + amp * ch1 / g,
            dyy: self.f_second(z) / s + amp * ch2 / (g * g),
            ds: -fp * z * half / s - amp * ch / s - amp * ch1 * zz * g_log_rate,
        }
    }

    /// `V = p phi^{p-1} - p/(p-1)`
    pub fn potential(&self, y: T, s: T) -> T {
        self.p * self.phi(y, s).powf(self.p - T::one()) - self.p * self.inv_pm1
    }

    /// `(A/s0^2)(d0 h0(y) + d1 h1(y)) chi(2y, s0)`
    pub fn initial_data(&self, d0: T, d1: T, s0: T, y: T) -> T {
        self.a_const / (s0 * s0) * (d0 + d1 * y) * blowup_cutoff_chi(c::<T>(2.0) * y, s0, self.k0)
    }

    /// Remainder term evaluated straight from its defining expression,
    /// `phi_yy - y phi_y / 2 - phi/(p-1) + phi^p - phi_s`.
    pub fn remainder_direct(&self, y: T, s: T) -> T {
        let j = self.phi_jet(y, s);
        j.dyy - c::<T>(0.5) * y * j.dy - j.value * self.inv_pm1 + j.value.powf(self.p) - j.ds
    }

    /// The same remainder regrouped with the profile identity of `f`; returns
    /// the two groups `(R_i, R_ii)`.
    pub fn remainder_split(&self, y: T, s: T) -> (T, T) {
        let sq = s.sqrt();
        let z = y / sq;
        let g = self.g_eps(s);
        let zz = y / g;
        let amp = self.correction_amplitude(s);
        let (ch, ch1, ch2) = cutoff_chi0_jet(zz);
        let half = c::<T>(0.5);
        let f = self.f(z);
        let r_i = self.f_second(z) / s + z * self.f_prime(z) * half / s + (f + amp * ch).powf(self.p)
            - f.powf(self.p);
        let g_log_rate = (half + self.eps) / s;
        let r_ii = amp
            * (ch2 / (g * g) - (half - g_log_rate) * zz * ch1 + (T::one() / s - self.inv_pm1) * ch);
        (r_i, r_ii)
    }

    pub fn remainder(&self, y: T, s: T) -> T {
        let (a, b) = self.remainder_split(y, s);
        a + b
    }

    /// Residual of `-z f'/2 - f/(p-1) + f^p = 0`.
    pub fn profile_ode_residual(&self, z: T) -> T {
        let f = self.f(z);
        -c::<T>(0.5) * z * self.f_prime(z) - f * self.inv_pm1 + f.powf(self.p)
    }
}

pub fn f_profile<T: Real>(z: T, params: &Parameters<T>) -> T {
    Profile::new(params).f(z)
}

pub fn f_gradient<T: Real>(z: T, params: &Parameters<T>) -> T {
    Profile::new(params).f_prime(z)
}

/// `(phi, d phi/dy)` at `(y, s)`.
pub fn phi<T: Real>(y: T, s: T, params: &Parameters<T>) -> (T, T) {
    let pt = Profile::new(params).phi_point(y, s);
    (pt.value, pt.gradient)
}

pub fn potential_v<T: Real>(y: T, s: T, params: &Parameters<T>) -> T {
    Profile::new(params).potential(y, s)
}

pub fn initial_data_psi<T: Real>(d0: T, d1: T, s0: T, y: T, params: &Parameters<T>) -> T {
    Profile::new(params).initial_data(d0, d1, s0, y)
}
