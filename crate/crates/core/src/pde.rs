//! Finite-difference discretisation of the `v`-equation and its IMEX time
//! stepper.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{fd_weights, Field, Grid};
use crate::params::Parameters;
use crate::profile::Profile;
use crate::scalar::{c, Real};

pub use crate::grid::{GridError, GridSpec};

pub const DEFAULT_STEP: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("tridiagonal solve hit a zero pivot at row {0}")]
    LinearSolve(usize),
    #[error("step rejected at s = {s}: sup|v| went from {before} to {after}")]
    StepRejected { s: f64, before: f64, after: f64 },
    #[error("non-finite values at s = {0}")]
    NonFinite(f64),
    #[error("step size must be positive")]
    BadStep,
}

/// Which right-hand-side pieces are active. Tests switch pieces off to
/// isolate the linear flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermSwitches {
    pub potential: bool,
    pub nonlinear: bool,
    pub remainder: bool,
    pub nonlocal: bool,
}

impl Default for TermSwitches {
    fn default() -> Self {
        Self { potential: true, nonlinear: true, remainder: true, nonlocal: true }
    }
}

impl TermSwitches {
    pub fn linear(potential: bool) -> Self {
        Self { potential, nonlinear: false, remainder: false, nonlocal: false }
    }
}

/// Three-point coefficients of `L = d_yy - y/2 d_y + 1` per node; the two
/// end rows use four-point one-sided stencils.
#[derive(Debug, Clone)]
pub struct LinearOperator<T> {
    grid: Arc<Grid<T>>,
    lo: Vec<T>,
    di: Vec<T>,
    up: Vec<T>,
    left: [T; 4],
    right: [T; 4],
}

impl<T: Real> LinearOperator<T> {
    pub fn new(grid: Arc<Grid<T>>) -> Self {
        let y = grid.nodes();
        let n = y.len();
        let half = c::<T>(0.5);
        let mut lo = vec![T::zero(); n];
        let mut di = vec![T::zero(); n];
        let mut up = vec![T::zero(); n];
        for i in 1..n - 1 {
            let hm = y[i] - y[i - 1];
            let hp = y[i + 1] - y[i];
            let two = c::<T>(2.0);
            let d2 = [two / (hm * (hm + hp)), -two / (hm * hp), two / (hp * (hm + hp))];
            let d1 = [-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))];
            lo[i] = d2[0] - half * y[i] * d1[0];
            di[i] = d2[1] - half * y[i] * d1[1] + T::one();
            up[i] = d2[2] - half * y[i] * d1[2];
        }
        let row = |x0: T, xs: &[T], at: usize| {
            let w = fd_weights(x0, xs, 2);
            let mut out = [T::zero(); 4];
            for j in 0..4 {
                out[j] = w[2][j] - half * x0 * w[1][j] + if j == at { T::one() } else { T::zero() };
            }
            out
        };
        let left = row(y[0], &y[0..4], 0);
        let right = row(y[n - 1], &y[n - 4..n], 3);
        Self { grid, lo, di, up, left, right }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let n = v.len();
        let mut out = vec![T::zero(); n];
        for i in 1..n - 1 {
            out[i] = self.lo[i] * v[i - 1] + self.di[i] * v[i] + self.up[i] * v[i + 1];
        }
        out[0] = (0..4).map(|j| self.left[j] * v[j]).sum();
        out[n - 1] = (0..4).map(|j| self.right[j] * v[n - 4 + j]).sum();
        out
    }
}

/// `L v = v'' - y v'/2 + v` on the grid of `v`.
#[allow(non_snake_case)]
pub fn discrete_L<T: Real>(v: &Field<T>) -> Field<T> {
    let op = LinearOperator::new(v.grid().clone());
    Field::new(v.grid().clone(), op.apply(v.values()))
}

/// Profile samples at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSamples<T> {
    pub s: T,
    pub value: Vec<T>,
    pub dy: Vec<T>,
}

impl<T: Real> ProfileSamples<T> {
    pub fn new(profile: &Profile<T>, grid: &Grid<T>, s: T) -> Self {
        let (value, dy) = grid
            .nodes()
            .iter()
            .map(|&y| {
                let pt = profile.phi_point(y, s);
                (pt.value, pt.gradient)
            })
            .unzip();
        Self { s, value, dy }
    }
}

fn b_pointwise<T: Real>(v: T, phi: T, p: T) -> T {
    let w = v + phi;
    let phi_pm1 = phi.powf(p - T::one());
    w.abs().powf(p - T::one()) * w - phi_pm1 * phi - p * phi_pm1 * v
}

/// `B(v) = |v + phi|^{p-1}(v + phi) - phi^p - p phi^{p-1} v`
#[allow(non_snake_case)]
pub fn term_B<T: Real>(v: &Field<T>, s: T, params: &Parameters<T>) -> Field<T> {
    let phi = ProfileSamples::new(&Profile::new(params), v.grid(), s);
    let values = v.values().iter().zip(&phi.value).map(|(&v, &f)| b_pointwise(v, f, params.p)).collect();
    Field::new(v.grid().clone(), values)
}

/// Remainder `R(y, s)` produced by `phi` not solving the equation exactly.
#[allow(non_snake_case)]
pub fn term_R<T: Real>(y: T, s: T, params: &Parameters<T>) -> T {
    Profile::new(params).remainder(y, s)
}

/// Running trapezoid sums of `|w|^{q-1}` so that the integral over
/// `(-|y|, |y|)` is a difference of two table entries.
#[derive(Debug, Clone)]
pub struct NonlocalIntegral<T> {
    grid: Arc<Grid<T>>,
    integrand: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Real> NonlocalIntegral<T> {
    pub fn new(w: &Field<T>, q: T) -> Self {
        let integrand: Vec<T> = w.values().iter().map(|v| v.abs().powf(q - T::one())).collect();
        Self::from_integrand(w.grid().clone(), integrand)
    }

    fn from_integrand(grid: Arc<Grid<T>>, integrand: Vec<T>) -> Self {
        let y = grid.nodes();
        let mut cumulative = Vec::with_capacity(y.len());
        let mut acc = T::zero();
        cumulative.push(acc);
        for i in 1..y.len() {
            acc = acc + c::<T>(0.5) * (integrand[i] + integrand[i - 1]) * (y[i] - y[i - 1]);
            cumulative.push(acc);
        }
        Self { grid, integrand, cumulative }
    }

    pub fn at_node(&self, i: usize) -> T {
        let j = self.grid.mirror(i);
        (self.cumulative[i] - self.cumulative[j]).abs()
    }

    /// Integral over `(-|y|, |y|)`; linear integrand inside a cell.
    pub fn at(&self, y: T) -> T {
        let r = y.abs().min(self.grid.half_width());
        let half = c::<T>(0.5);
        let partial = |x: T| {
            let nodes = self.grid.nodes();
            let i = self.grid.locate(x);
            let h = nodes[i + 1] - nodes[i];
            let t = (x - nodes[i]) / h;
            let fx = self.integrand[i] + t * (self.integrand[i + 1] - self.integrand[i]);
            self.cumulative[i] + half * (self.integrand[i] + fx) * (x - nodes[i])
        };
        partial(r) - partial(-r)
    }
}

pub fn nonlocal_integral<T: Real>(w: &Field<T>, y: T, params: &Parameters<T>) -> T {
    NonlocalIntegral::new(w, params.q).at(y)
}

fn n_values<T: Real>(v: &Field<T>, phi: &ProfileSamples<T>, params: &Parameters<T>) -> Vec<T> {
    let n = v.values().len();
    if params.mu == T::zero() {
        return vec![T::zero(); n];
    }
    let gamma = params.derived().gamma;
    let factor = params.mu * (-gamma * phi.s).exp();
    let w: Vec<T> = v.values().iter().zip(&phi.value).map(|(&a, &b)| a + b).collect();
    let integral = NonlocalIntegral::new(&Field::new(v.grid().clone(), w), params.q);
    let dv = v.grid().derivative(v.values());
    (0..n).map(|i| factor * (dv[i] + phi.dy[i]).abs() * integral.at_node(i)).collect()
}

/// `N = mu e^{-gamma s} |v_y + phi_y| int_{(-|y|,|y|)} |v + phi|^{q-1}`
#[allow(non_snake_case)]
pub fn term_N<T: Real>(v: &Field<T>, s: T, params: &Parameters<T>) -> Field<T> {
    let phi = ProfileSamples::new(&Profile::new(params), v.grid(), s);
    Field::new(v.grid().clone(), n_values(v, &phi, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    pub s: T,
    pub v: Field<T>,
    pub step_size: T,
}

impl<T: Real> SolverState<T> {
    pub fn new(s: T, v: Field<T>, step_size: T) -> Self {
        Self { s, v, step_size }
    }
}

/// Crank-Nicolson on `(L + V)`, explicit `B` and `N` at `s_n`, `R` at the
/// half step. End rows impose `v ~ |y|^{-beta}` between the last two nodes.
#[derive(Debug, Clone)]
pub struct Solver<T> {
    params: Parameters<T>,
    profile: Profile<T>,
    op: LinearOperator<T>,
    switches: TermSwitches,
    end_ratio: T,
}

impl<T: Real> Solver<T> {
    pub fn new(params: &Parameters<T>, grid: Arc<Grid<T>>, switches: TermSwitches) -> Self {
        let y = grid.nodes();
        let end_ratio = (y[1].abs() / y[0].abs()).powf(params.beta);
        Self {
            params: *params,
            profile: Profile::new(params),
            op: LinearOperator::new(grid),
            switches,
            end_ratio,
        }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.op.grid()
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn profile(&self) -> &Profile<T> {
        &self.profile
    }

    pub fn switches(&self) -> TermSwitches {
        self.switches
    }

    fn potential_at(&self, s: T) -> Vec<T> {
        let p = self.params.p;
        let shift = p / (p - T::one());
        self.grid()
            .nodes()
            .iter()
            .map(|&y| p * self.profile.phi(y, s).powf(p - T::one()) - shift)
            .collect()
    }

    /// Explicit forcing `B(v) + R + N` for a step starting at `s`.
    pub fn forcing(&self, v: &Field<T>, s: T, ds: T) -> Vec<T> {
        let n = v.values().len();
        let mut f = vec![T::zero(); n];
        let sw = self.switches;
        if sw.nonlinear || sw.nonlocal {
            let phi = ProfileSamples::new(&self.profile, self.grid(), s);
            if sw.nonlinear {
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi = *fi + b_pointwise(v.values()[i], phi.value[i], self.params.p);
                }
            }
            if sw.nonlocal {
                for (fi, nv) in f.iter_mut().zip(n_values(v, &phi, &self.params)) {
                    *fi = *fi + nv;
                }
            }
        }
        if sw.remainder {
            let mid = s + c::<T>(0.5) * ds;
            for (fi, &y) in f.iter_mut().zip(self.grid().nodes()) {
                *fi = *fi + self.profile.remainder(y, mid);
            }
        }
        f
    }

    pub fn step(&self, state: &SolverState<T>) -> Result<SolverState<T>, SolverError> {
        let ds = state.step_size;
        if ds <= T::zero() {
            return Err(SolverError::BadStep);
        }
        let next = self.step_values(state.v.values(), state.s, ds)?;
        let v = Field::new(self.grid().clone(), next);
        let s_new = state.s + ds;
        if !v.is_finite() {
            return Err(SolverError::NonFinite(s_new.to_f64_lossy()));
        }
        let (before, after) = (state.v.sup(), v.sup());
        if after > c::<T>(2.0) * before && after > self.profile.kappa() {
            return Err(SolverError::StepRejected {
                s: s_new.to_f64_lossy(),
                before: before.to_f64_lossy(),
                after: after.to_f64_lossy(),
            });
        }
        Ok(SolverState { s: s_new, v, step_size: ds })
    }

    fn step_values(&self, v: &[T], s: T, ds: T) -> Result<Vec<T>, SolverError> {
        let n = v.len();
        let half = c::<T>(0.5) * ds;
        let field = Field::new(self.grid().clone(), v.to_vec());
        let force = self.forcing(&field, s, ds);
        let (v_old, v_new) = if self.switches.potential {
            (self.potential_at(s), self.potential_at(s + ds))
        } else {
            (vec![T::zero(); n], vec![T::zero(); n])
        };
        let lv = self.op.apply(v);
        let mut rhs = vec![T::zero(); n];
        let mut a = vec![T::zero(); n];
        let mut b = vec![T::one(); n];
        let mut cc = vec![T::zero(); n];
        for i in 1..n - 1 {
            rhs[i] = v[i] + half * (lv[i] + v_old[i] * v[i]) + ds * force[i];
            a[i] = -half * self.op.lo[i];
            b[i] = T::one() - half * (self.op.di[i] + v_new[i]);
            cc[i] = -half * self.op.up[i];
        }
        cc[0] = -self.end_ratio;
        a[n - 1] = -self.end_ratio;
        thomas(&a, &b, &cc, &rhs)
    }

    /// Integrates to `s_target` with fixed steps (last one shortened).
    pub fn advance(&self, state: SolverState<T>, s_target: T) -> Result<SolverState<T>, SolverError> {
        let mut st = state;
        let tiny = st.step_size * c(1e-9);
        while st.s < s_target - tiny {
            let ds = st.step_size.min(s_target - st.s);
            let full = st.step_size;
            st.step_size = ds;
            st = self.step(&st)?;
            st.step_size = full;
        }
        Ok(st)
    }
}

/// Tridiagonal solve; `a` is the sub-diagonal, `c` the super-diagonal.
pub fn thomas<T: Real>(a: &[T], b: &[T], c: &[T], d: &[T]) -> Result<Vec<T>, SolverError> {
    let n = d.len();
    let mut cp = vec![T::zero(); n];
    let mut dp = vec![T::zero(); n];
    if b[0] == T::zero() {
        return Err(SolverError::LinearSolve(0));
    }
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        if m == T::zero() {
            return Err(SolverError::LinearSolve(i));
        }
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    Ok(x)
}

/// `theta(s)` from `d_s theta = (L + V) theta`, `theta(sigma) = g`; with
/// `potential_on = false` the flow of `L` alone.
pub fn linear_propagate<T: Real>(
    g: &Field<T>,
    sigma: T,
    s: T,
    params: &Parameters<T>,
    potential_on: bool,
    step_size: T,
) -> Result<Field<T>, SolverError> {
    let solver = Solver::new(params, g.grid().clone(), TermSwitches::linear(potential_on));
    let st = solver.advance(SolverState::new(sigma, g.clone(), step_size), s)?;
    Ok(st.v)
}

/// Observed orders of the full solver on a short smoke run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceOrders {
    pub spatial: f64,
    pub temporal: f64,
    /// Successive sup differences `(coarse, fine)` behind each order.
    pub spatial_diffs: (f64, f64),
    pub temporal_diffs: (f64, f64),
}

/// Runs the full equation from `d0 = d1 = 0.1` over one unit of `s`
/// on three nested grids (fixed `ds`) and with three steps (fixed grid),
/// comparing on the coarse nodes with `|y| <= 15`.
pub fn smoke_orders(params: &Parameters<f64>) -> Result<ConvergenceOrders, SolverError> {
    let s0 = params.s0;
    let prof = Profile::new(params);
    let spec = |refine| GridSpec { half_width: 40.0, h0: 0.2, cap: 0.8, dense_zone: None, refine };
    let run = |refine: u32, ds: f64| -> Result<Field<f64>, SolverError> {
        let g = Arc::new(Grid::graded(&spec(refine)).expect("smoke grid"));
        let v = Field::from_fn(g.clone(), |y| prof.initial_data(0.1, 0.1, s0, y));
        let solver = Solver::new(params, g, TermSwitches::default());
        Ok(solver.advance(SolverState::new(s0, v, ds), s0 + 1.0)?.v)
    };
    let coarse = Grid::<f64>::graded(&spec(0)).expect("smoke grid");
    let probe: Vec<f64> = coarse.nodes().iter().copied().filter(|y| y.abs() <= 15.0).collect();
    let diff = |a: &Field<f64>, b: &Field<f64>| probe.iter().map(|&y| (a.at(y) - b.at(y)).abs()).fold(0.0, f64::max);

    let x: Vec<Field<f64>> = (0..3).map(|r| run(r, 0.005)).collect::<Result<_, _>>()?;
    let sd = (diff(&x[0], &x[1]), diff(&x[1], &x[2]));
    let t: Vec<Field<f64>> = [0.02, 0.01, 0.005].iter().map(|&ds| run(0, ds)).collect::<Result<_, _>>()?;
    let td = (diff(&t[0], &t[1]), diff(&t[1], &t[2]));
    Ok(ConvergenceOrders {
        spatial: (sd.0 / sd.1).log2(),
        temporal: (td.0 / td.1).log2(),
        spatial_diffs: sd,
        temporal_diffs: td,
    })
}

/// Snapshot rows `s,y,v,w,dv` for one state.
pub fn write_snapshot<T: Real>(
    out: &mut impl Write,
    state: &SolverState<T>,
    profile: &Profile<T>,
) -> std::io::Result<()> {
    let dv = state.v.grid().derivative(state.v.values());
    for (i, &y) in state.v.grid().nodes().iter().enumerate() {
        let v = state.v.values()[i];
        writeln!(out, "{},{},{},{},{}", state.s, y, v, v + profile.phi(y, state.s), dv[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate_parameters, RawParameters};
    use crate::spectral::hermite_h;

    fn params() -> Parameters<f64> {
        validate_parameters(RawParameters::desk_default()).unwrap()
    }

    fn grid(l: f64, h0: f64) -> Arc<Grid<f64>> {
        Arc::new(
            Grid::graded(&GridSpec { half_width: l, h0, cap: 5.0 * h0, dense_zone: None, refine: 0 })
                .unwrap(),
        )
    }

    #[test]
    fn eigenrelation_exact_up_to_quadratics() {
        let g = grid(30.0, 0.05);
        for m in 0..=2 {
            let h = Field::from_fn(g.clone(), |y| hermite_h(m, y));
            let lh = discrete_L(&h);
            let lam = 1.0 - m as f64 / 2.0;
            for (i, &y) in g.nodes().iter().enumerate() {
                let r = lh.values()[i] - lam * h.values()[i];
                assert!(r.abs() < 1e-6 * (1.0 + y * y), "m={m} y={y} r={r}");
            }
        }
    }

    #[test]
    fn eigenrelation_cubic_quartic_converge_second_order() {
        // Three-point differences are exact only through quadratics; for
        // h3, h4 the residual must fall like h^2.
        let resid = |h0: f64, m: usize| {
            let g = grid(10.0, h0);
            let h = Field::from_fn(g.clone(), |y| hermite_h(m, y));
            let lh = discrete_L(&h);
            let lam = 1.0 - m as f64 / 2.0;
            g.nodes()
                .iter()
                .enumerate()
                .filter(|(_, y)| y.abs() <= 5.0)
                .map(|(i, _)| (lh.values()[i] - lam * h.values()[i]).abs())
                .fold(0.0, f64::max)
        };
        for m in [3, 4] {
            let (a, b) = (resid(0.04, m), resid(0.02, m));
            let order = (a / b).log2();
            assert!(order > 1.8, "m={m} order {order}");
            assert!(b < 0.5, "m={m} residual {b}");
        }
    }

    #[test]
    fn b_vanishes_on_zero_and_is_quadratic() {
        let p = params();
        let g = grid(20.0, 0.1);
        assert_eq!(term_B(&Field::zeros(g.clone()), 30.0, &p).sup(), 0.0);
        let prof = Profile::new(&p);
        let mut ratios = Vec::new();
        for amp in [1e-1, 1e-2, 1e-3] {
            let v = Field::from_fn(g.clone(), |y| amp * (0.3 * y).cos());
            let b = term_B(&v, 30.0, &p);
            for (i, &y) in g.nodes().iter().enumerate() {
                let vi = v.values()[i];
                if vi.abs() < 1e-12 {
                    continue;
                }
                let phi = prof.phi(y, 30.0);
                // Taylor oracle: B = p(p-1)/2 (phi + theta v)^{p-2} v^2, theta in (0,1).
                let lo = (0..=100)
                    .map(|k| 0.5 * p.p * (p.p - 1.0) * (phi + k as f64 / 100.0 * vi).powf(p.p - 2.0) * vi * vi)
                    .fold(f64::INFINITY, f64::min);
                let hi = (0..=100)
                    .map(|k| 0.5 * p.p * (p.p - 1.0) * (phi + k as f64 / 100.0 * vi).powf(p.p - 2.0) * vi * vi)
                    .fold(0.0, f64::max);
                let bi = b.values()[i];
                assert!(bi >= lo * (1.0 - 1e-6) - 1e-15 && bi <= hi * (1.0 + 1e-6) + 1e-15);
                ratios.push(bi.abs() / (vi * vi));
            }
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(max < 0.5 * 5.0 * 4.0 * 1.2f64.powi(3));
    }

    #[test]
    fn b_preserves_parity() {
        let p = params();
        let g = grid(20.0, 0.1);
        let v = Field::from_fn(g, |y| 0.05 * (-(y * y) / 10.0).exp());
        assert_eq!(term_B(&v, 25.0, &p).odd_part_sup(), 0.0);
    }

    #[test]
    fn remainder_bounded_by_c_over_s() {
        let p = params();
        let g = grid(120.0, 0.05);
        let vals: Vec<f64> = [20.0, 40.0, 80.0, 120.0, 200.0]
            .iter()
            .map(|&s| s * g.nodes().iter().map(|&y| term_R(y, s, &p).abs()).fold(0.0, f64::max))
            .collect();
        let max = vals.iter().cloned().fold(0.0, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 10.0, "{vals:?}");
    }

    #[test]
    fn remainder_without_cutoff_reduces_to_profile_terms() {
        let p = params();
        let prof = Profile::new(&p);
        let s = 1e4;
        let g = prof.g_eps(s);
        assert!(2.0 * g < s.sqrt() * 100.0);
        // Choose |y| >= 2 g_eps with |y|/sqrt(s) small enough.
        let y = 2.5 * g;
        let z = y / s.sqrt();
        let expect = prof.f_second(z) / s + z * prof.f_prime(z) / (2.0 * s);
        assert!((term_R(y, s, &p) - expect).abs() < 1e-15);
    }

    #[test]
    fn nonlocal_integral_examples() {
        let p = params();
        let g = grid(10.0, 0.05);
        let cst = Field::from_fn(g.clone(), |_| 0.7);
        let expect = |y: f64| 2.0 * y.abs() * 0.7f64.powf(p.q - 1.0);
        for y in [0.0, 0.33, -2.0, 7.77] {
            assert!((nonlocal_integral(&cst, y, &p) - expect(y)).abs() < 1e-13);
        }
        let ni = NonlocalIntegral::new(&Field::from_fn(g.clone(), |y| y.abs()), 2.0);
        assert!(ni.at(0.0).abs() < 1e-15);
        let one = g.nodes().iter().position(|&y| (y - 1.0).abs() < 0.03).unwrap();
        let y1 = g.nodes()[one];
        assert!((ni.at_node(one) - y1 * y1).abs() < 1e-12);
        let uni = Arc::new(Grid::<f64>::uniform(4.0, 40).unwrap());
        let ni = NonlocalIntegral::new(&Field::from_fn(uni, |y| y.abs()), 2.0);
        assert!((ni.at(1.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn n_vanishes_without_perturbation() {
        let mut raw = RawParameters::desk_default();
        raw.mu = Some(0.0);
        let p = validate_parameters(raw).unwrap();
        let g = grid(20.0, 0.1);
        let v = Field::from_fn(g, |y| 0.01 * (0.2 * y).sin());
        assert_eq!(term_N(&v, 25.0, &p).sup(), 0.0);
    }

    #[test]
    fn n_is_even_for_even_data() {
        let p = params();
        let g = grid(20.0, 0.1);
        let v = Field::from_fn(g, |y| 0.01 * (0.2 * y).cos());
        let nf = term_N(&v, 25.0, &p);
        assert!(nf.sup() > 0.0);
        assert!(nf.odd_part_sup() <= 1e-12 * nf.sup());
    }

    #[test]
    fn eigenflow_of_l() {
        let p = params();
        let g = grid(40.0, 0.05);
        let basis = crate::spectral::HermiteBasis::<f64>::standard();
        for m in 0..=2 {
            let h = Field::from_fn(g.clone(), |y| hermite_h(m, y));
            let out = linear_propagate(&h, 20.0, 21.0, &p, false, 1e-2).unwrap();
            let lam = 1.0 - m as f64 / 2.0;
            let got = basis.coefficient(&out, m);
            assert!((got / lam.exp() - 1.0).abs() < 1e-4, "m={m}: {got}");
            // Away from the outflow boundary the whole profile scales.
            for (i, &y) in g.nodes().iter().enumerate() {
                if y.abs() < 20.0 {
                    let rel = (out.values()[i] - lam.exp() * h.values()[i]).abs() / (1.0 + y * y);
                    assert!(rel < 1e-4, "m={m} y={y}");
                }
            }
        }
    }

    #[test]
    fn full_equation_preserves_parity() {
        let p = params();
        let g = grid(40.0, 0.1);
        let solver = Solver::new(&p, g.clone(), TermSwitches::default());
        let prof = Profile::new(&p);
        let v0 = Field::from_fn(g, |y| prof.initial_data(0.7, 0.0, 20.0, y));
        let mut st = SolverState::new(20.0, v0, 1e-2);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            st = solver.step(&st).unwrap();
            worst = worst.max(st.v.odd_part_sup() / st.v.sup());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn thomas_solves_small_system() {
        let a = [0.0f64, 1.0, 1.0];
        let b = [4.0, 4.0, 4.0];
        let cc = [1.0, 1.0, 0.0];
        let x = [1.0f64, -2.0, 3.0];
        let d = [4.0 * 1.0 - 2.0, 1.0 - 8.0 + 3.0, -2.0 + 12.0];
        let got = thomas(&a, &b, &cc, &d).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn snapshot_has_one_row_per_node() {
        let p = params();
        let g = grid(10.0, 0.1);
        let st = SolverState::new(20.0, Field::zeros(g.clone()), 0.01);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &st, &Profile::new(&p)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), g.len());
        assert!(text.lines().all(|l| l.split(',').count() == 5));
    }
}
