//! Post-processing of recorded trajectories: rate fits, boundedness of the
//! measured constants, physical-variable reconstruction, final profile and
//! gradient witness.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, Grid, GridSpec};
use crate::params::Parameters;
use crate::profile::Profile;
use crate::scalar::Real;
use crate::spectral::{decompose, project_minus_norm, HermiteBasis};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("window too short: [{lo}, {hi}] spans less than one decade in s")]
    WindowTooShort { lo: f64, hi: f64 },
    #[error("fewer than {needed} usable samples in [{lo}, {hi}]")]
    TooFewSamples { needed: usize, lo: f64, hi: f64 },
    #[error("x = 0 is the blow-up point")]
    BlowupPoint,
    #[error("condition eps1 <= 1/2 - beta/2 not met")]
    ConditionNotMet,
}

/// Modes and shrinking-set ratios, one row per time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub s: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub minus_norm: f64,
    pub outer_sup: f64,
    pub outer_weighted: f64,
    pub r_g0: f64,
    pub r_g1: f64,
    pub r_g2: f64,
    pub r_g_minus: f64,
    pub r_g_e: f64,
    pub r_g_e_weighted: f64,
}

impl ModeSample {
    pub fn ratios(&self) -> [f64; 6] {
        [self.r_g0, self.r_g1, self.r_g2, self.r_g_minus, self.r_g_e, self.r_g_e_weighted]
    }

    pub fn mode(&self, m: usize) -> f64 {
        [self.v0, self.v1, self.v2][m]
    }
}

/// Heavier per-sample measurements, recorded on a coarser cadence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSample {
    pub s: f64,
    /// `sup (1+|y|^beta)|v|`
    pub n0: f64,
    /// `sup (1+|y|^beta)|v_y|`
    pub n1: f64,
    /// `sup (1+|y|^beta)|w - f(y/sqrt s)|`
    pub err_u: f64,
    /// `sup (1+|y|^beta)|w_y - f'(y/sqrt s)/sqrt s|`
    pub err_grad: f64,
    pub sup_n: f64,
    /// `sup (1+|y|^beta)|N (1 - chi)|`
    pub sup_n_outer_weighted: f64,
    /// `w_y` at `y = sqrt(s)`, the image of the witness curve.
    pub witness_dyw: f64,
    pub w_center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub s: f64,
    pub v: Vec<f64>,
}

/// A correction `delta (A/s^2) chi(2y, s)` applied at a stage boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kick {
    pub s: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub d0: f64,
    pub d1: f64,
    pub grid: Vec<f64>,
    pub modes: Vec<ModeSample>,
    pub metrics: Vec<MetricSample>,
    pub snapshots: Vec<Snapshot>,
    pub kicks: Vec<Kick>,
}

impl TrajectoryRecord {
    pub fn last_s(&self) -> Option<f64> {
        self.modes.last().map(|m| m.s)
    }

    pub fn is_increasing(&self) -> bool {
        self.modes.windows(2).all(|w| w[1].s > w[0].s)
            && self.metrics.windows(2).all(|w| w[1].s > w[0].s)
            && self.snapshots.windows(2).all(|w| w[1].s > w[0].s)
    }

    /// Appends `other`, dropping rows of `other` not strictly after ours.
    pub fn extend(&mut self, other: TrajectoryRecord) {
        let cut = |last: Option<f64>, s: f64| last.is_none_or(|l| s > l + 1e-12);
        let lm = self.modes.last().map(|m| m.s);
        self.modes.extend(other.modes.into_iter().filter(|m| cut(lm, m.s)));
        let lm = self.metrics.last().map(|m| m.s);
        self.metrics.extend(other.metrics.into_iter().filter(|m| cut(lm, m.s)));
        let lm = self.snapshots.last().map(|m| m.s);
        self.snapshots.extend(other.snapshots.into_iter().filter(|m| cut(lm, m.s)));
        self.kicks.extend(other.kicks);
    }

    /// Largest membership ratio over all samples.
    pub fn max_ratio(&self) -> f64 {
        self.modes.iter().flat_map(|m| m.ratios()).fold(0.0, f64::max)
    }
}

/// Least-squares fit `value ~ constant * s^{-exponent}` in log-log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub quantity: String,
    pub window: (f64, f64),
    pub samples: Vec<(f64, f64)>,
    pub exponent: f64,
    pub constant: f64,
    /// Root-mean-square log residual.
    pub residual: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// Fits `value ~ C s^{-e}` on samples with `s` in `window`. The window must
/// span a decade; shorter windows give log corrections too much weight.
pub fn fit_power_law(quantity: &str, samples: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit, AnalysisError> {
    let (lo, hi) = window;
    if hi < 10.0 * lo {
        return Err(AnalysisError::WindowTooShort { lo, hi });
    }
    let used: Vec<(f64, f64)> =
        samples.iter().copied().filter(|&(s, v)| s >= lo && s <= hi && v > 0.0 && v.is_finite()).collect();
    if used.len() < 3 {
        return Err(AnalysisError::TooFewSamples { needed: 3, lo, hi });
    }
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let (slope, icpt, rms) = least_squares(&xs, &ys);
    Ok(RateFit {
        quantity: quantity.to_string(),
        window,
        samples: used,
        exponent: -slope,
        constant: icpt.exp(),
        residual: rms,
    })
}

/// Boundedness of a measured constant: sups over unit-length blocks of `s`,
/// then max/min of the block sups. Empty blocks are skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessCheck {
    pub quantity: String,
    pub window: (f64, f64),
    pub max: f64,
    pub min: f64,
    pub ratio: f64,
    pub identically_zero: bool,
}

impl BoundednessCheck {
    pub fn passes(&self, limit: f64) -> bool {
        self.identically_zero || (self.ratio.is_finite() && self.ratio < limit)
    }
}

pub fn block_boundedness(quantity: &str, samples: &[(f64, f64)], block: f64) -> BoundednessCheck {
    let lo = samples.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut sups: Vec<f64> = Vec::new();
    if lo.is_finite() && hi >= lo {
        let nblocks = (((hi - lo) / block).floor() as usize).max(1);
        let mut slots: Vec<Option<f64>> = vec![None; nblocks];
        for &(s, v) in samples {
            let k = (((s - lo) / block) as usize).min(nblocks - 1);
            slots[k] = Some(slots[k].map_or(v.abs(), |m| m.max(v.abs())));
        }
        sups = slots.into_iter().flatten().collect();
    }
    let max = sups.iter().cloned().fold(0.0, f64::max);
    let min = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    BoundednessCheck {
        quantity: quantity.to_string(),
        window: (lo, hi),
        max,
        min,
        ratio: max / min,
        identically_zero: max == 0.0,
    }
}

/// Physical fields at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSlice {
    pub t: f64,
    /// `T - t = e^{-s}`, kept separately because `t` rounds to `T`.
    pub time_to_blowup: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub grad_u: Vec<f64>,
}

pub fn to_physical<T: Real>(v: &Field<T>, s: T, params: &Parameters<T>) -> PhysicalSlice {
    let prof = Profile::new(params);
    let a = 1.0 / (params.p.to_f64_lossy() - 1.0);
    let sf = s.to_f64_lossy();
    let dv = v.grid().derivative(v.values());
    let (mut x, mut u, mut gu) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &y) in v.grid().nodes().iter().enumerate() {
        let pt = prof.phi_point(y, s);
        let w = (v.values()[i] + pt.value).to_f64_lossy();
        let wy = (dv[i] + pt.gradient).to_f64_lossy();
        x.push(y.to_f64_lossy() * (-sf / 2.0).exp());
        u.push((sf * a).exp() * w);
        gu.push((sf * (a + 0.5)).exp() * wy);
    }
    let tau = (-sf).exp();
    PhysicalSlice { t: params.t_blowup.to_f64_lossy() - tau, time_to_blowup: tau, x, u, grad_u: gu }
}

/// Inverse of [`to_physical`] on values: `(y, w)` from `(x, u)` at time `s`.
pub fn to_similarity(x: f64, u: f64, s: f64, p: f64) -> (f64, f64) {
    (x * (s / 2.0).exp(), u * (-s / (p - 1.0)).exp())
}

/// `E(s)` and gradient analogue fits against `1 - beta/2 - eps1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRates {
    pub target: f64,
    pub value_fit: RateFit,
    pub gradient_fit: RateFit,
}

pub fn theorem1_error_rates<T: Real>(
    record: &TrajectoryRecord,
    params: &Parameters<T>,
    window: (f64, f64),
) -> Result<ErrorRates, AnalysisError> {
    let e: Vec<(f64, f64)> = record.metrics.iter().map(|m| (m.s, m.err_u)).collect();
    let g: Vec<(f64, f64)> = record.metrics.iter().map(|m| (m.s, m.err_grad)).collect();
    Ok(ErrorRates {
        target: params.rate_exponent().to_f64_lossy(),
        value_fit: fit_power_law("sup (1+|y|^beta)|w - f|", &e, window)?,
        gradient_fit: fit_power_law("sup (1+|y|^beta)|d_y(w - f)|", &g, window)?,
    })
}

/// Grid for evaluating `R` alone over `s <= s_max`.
pub fn remainder_grid(params: &Parameters<f64>, s_max: f64) -> Arc<Grid<f64>> {
    let l = 4.0 * params.k0 * s_max.sqrt();
    Arc::new(
        Grid::graded(&GridSpec { half_width: l, h0: 0.05, cap: 0.25, dense_zone: None, refine: 0 })
            .expect("valid remainder grid"),
    )
}

/// Measured constants of `R` over `s_values`: `s sup|R|`,
/// `s^{5/2} sup |R_-|/(1+|y|^3)` and `s^{1-beta/2-eps1} sup (1+|y|^beta)|R_e|`.
pub fn remainder_rows(params: &Parameters<f64>, s_values: &[f64], grid: &Arc<Grid<f64>>) -> [Vec<(f64, f64)>; 3] {
    let prof = Profile::new(params);
    let basis = HermiteBasis::<f64>::standard();
    let mut rows: [Vec<(f64, f64)>; 3] = Default::default();
    let e = params.rate_exponent();
    for &s in s_values {
        let r = Field::from_fn(grid.clone(), |y| prof.remainder(y, s));
        rows[0].push((s, s * r.sup()));
        if let Ok(dec) = decompose(&r, s, &basis, params.k0) {
            rows[1].push((s, s.powf(2.5) * project_minus_norm(&dec)));
            let w = dec.v_e.weighted_sup(|y| 1.0 + y.abs().powf(params.beta));
            rows[2].push((s, s.powf(e) * w));
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermReport {
    pub remainder: BoundednessCheck,
    pub remainder_minus: BoundednessCheck,
    pub remainder_outer: BoundednessCheck,
    pub nonlocal: BoundednessCheck,
    pub nonlocal_outer: BoundednessCheck,
}

impl TermReport {
    pub fn rows(&self) -> [&BoundednessCheck; 5] {
        [&self.remainder, &self.remainder_minus, &self.remainder_outer, &self.nonlocal, &self.nonlocal_outer]
    }
}

/// `R` rows over `r_window` (sampled every unit of `s`) and `N` rows
/// `e^{gamma s/2} sup|N|` over the recorded run.
pub fn remainder_and_newterm_report(
    record: &TrajectoryRecord,
    params: &Parameters<f64>,
    r_window: (f64, f64),
) -> TermReport {
    let n = (r_window.1 - r_window.0).floor() as usize;
    let s_values: Vec<f64> = (0..=n).map(|k| r_window.0 + k as f64).collect();
    let grid = remainder_grid(params, r_window.1);
    let [r, rm, re] = remainder_rows(params, &s_values, &grid);
    let gamma = params.derived().gamma;
    let nrow: Vec<(f64, f64)> = record.metrics.iter().map(|m| (m.s, (gamma * m.s / 2.0).exp() * m.sup_n)).collect();
    let nerow: Vec<(f64, f64)> =
        record.metrics.iter().map(|m| (m.s, (gamma * m.s / 2.0).exp() * m.sup_n_outer_weighted)).collect();
    TermReport {
        remainder: block_boundedness("s sup|R|", &r, 1.0),
        remainder_minus: block_boundedness("s^(5/2) sup|R_-|/(1+|y|^3)", &rm, 1.0),
        remainder_outer: block_boundedness("s^(1-beta/2-eps1) sup(1+|y|^beta)|R_e|", &re, 1.0),
        nonlocal: block_boundedness("e^(gamma s/2) sup|N|", &nrow, 1.0),
        nonlocal_outer: block_boundedness("e^(gamma s/2) sup(1+|y|^beta)|N_e|", &nerow, 1.0),
    }
}

/// Mode-ODE residual series. Samples next to a kick are skipped: the
/// difference quotient would straddle the jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeOdeReport {
    /// `s^2 |v0' - v0|`
    pub mode0: BoundednessCheck,
    /// `s^2 |v1' - v1/2|`
    pub mode1: BoundednessCheck,
    /// `s^3 |v2' + 2 v2 / s|`
    pub mode2: BoundednessCheck,
}

pub fn mode_ode_report(record: &TrajectoryRecord) -> ModeOdeReport {
    let m = &record.modes;
    let near_kick = |a: f64, b: f64| record.kicks.iter().any(|k| k.s >= a - 1e-9 && k.s <= b + 1e-9);
    let mut rows: [Vec<(f64, f64)>; 3] = Default::default();
    for i in 1..m.len().saturating_sub(1) {
        let (a, b, c) = (&m[i - 1], &m[i], &m[i + 1]);
        if near_kick(a.s, c.s) {
            continue;
        }
        let h = c.s - a.s;
        let d = |k: usize| (c.mode(k) - a.mode(k)) / h;
        let s = b.s;
        rows[0].push((s, s * s * (d(0) - b.v0).abs()));
        rows[1].push((s, s * s * (d(1) - 0.5 * b.v1).abs()));
        rows[2].push((s, s.powi(3) * (d(2) + 2.0 * b.v2 / s).abs()));
    }
    // symmetrized runs leave v1 at roundoff; treat that as zero
    let scale = |k: usize| m.iter().map(|x| x.mode(k).abs()).fold(0.0, f64::max);
    let mut mode1 = block_boundedness("s^2 |v1' - v1/2|", &rows[1], 1.0);
    if scale(1) <= 1e-12 * scale(0) {
        mode1.identically_zero = true;
    }
    ModeOdeReport {
        mode0: block_boundedness("s^2 |v0' - v0|", &rows[0], 1.0),
        mode1,
        mode2: block_boundedness("s^3 |v2' + 2 v2/s|", &rows[2], 1.0),
    }
}

/// One `x` of the final-profile table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalProfilePoint {
    pub x: f64,
    pub s_last: f64,
    pub u_star: f64,
    pub target: f64,
    pub ratio: f64,
    /// `|u(x, t(s_k)) - u(x, t(s_{k-1}))|` over the snapshots covering `x`.
    pub increments: Vec<f64>,
    /// `|d_x u|` at `s_last`.
    pub grad_u: f64,
    /// `|d_x u| |x|^{(p+1)/(p-1)} |log|x||^{-((p+1)/(2(p-1)) - alpha)}`
    pub grad_scaled: f64,
}

impl FinalProfilePoint {
    /// Increments over the last `k` covered snapshots decrease.
    pub fn increments_decreasing(&self, k: usize) -> bool {
        let n = self.increments.len();
        if n < 2 {
            return false;
        }
        let tail = &self.increments[n.saturating_sub(k)..];
        tail.windows(2).all(|w| w[1] < w[0])
    }
}

/// `u*(x)` as `u(x, t(s_last(x)))` with `s_last(x)` the latest snapshot for
/// which `y = x e^{s/2}` stays within `coverage * L`.
pub fn final_profile(
    record: &TrajectoryRecord,
    xs: &[f64],
    params: &Parameters<f64>,
    coverage: f64,
) -> Result<Vec<FinalProfilePoint>, AnalysisError> {
    let grid = Arc::new(Grid::from_nodes(record.grid.clone()).expect("recorded grid is valid"));
    let reach = coverage * grid.half_width();
    let prof = Profile::new(params);
    let p = params.p;
    let a = 1.0 / (p - 1.0);
    let b = prof.b_coeff();
    let mut out = Vec::new();
    for &x in xs {
        if x == 0.0 {
            return Err(AnalysisError::BlowupPoint);
        }
        let covered: Vec<&Snapshot> =
            record.snapshots.iter().filter(|sn| x.abs() * (sn.s / 2.0).exp() <= reach).collect();
        let Some(last) = covered.last() else { continue };
        let eval = |sn: &Snapshot| {
            let y = x * (sn.s / 2.0).exp();
            let v = Field::new(grid.clone(), sn.v.clone());
            let dv = v.gradient();
            let pt = prof.phi_point(y, sn.s);
            let u = (sn.s * a).exp() * (v.at(y) + pt.value);
            let gu = (sn.s * (a + 0.5)).exp() * (dv.at(y) + pt.gradient);
            (u, gu)
        };
        let us: Vec<f64> = covered.iter().map(|sn| eval(sn).0).collect();
        let increments = us.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let (u_star, gu) = eval(last);
        let lx = x.abs().ln().abs();
        let target = (2.0 * lx / (b * x * x)).powf(a);
        let gexp = (p + 1.0) / (2.0 * (p - 1.0)) - params.alpha;
        out.push(FinalProfilePoint {
            x,
            s_last: last.s,
            u_star,
            target,
            ratio: u_star / target,
            increments,
            grad_u: gu.abs(),
            grad_scaled: gu.abs() * x.abs().powf((p + 1.0) / (p - 1.0)) * lx.powf(-gexp),
        });
    }
    Ok(out)
}

/// Fit of the witness `|d_x u(xi(t), t)| sqrt|log(T-t)|` against `T - t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessFit {
    /// Exponent of `T - t` (expected `-(1/2 + 1/(p-1))`).
    pub exponent: f64,
    pub expected_exponent: f64,
    /// Limit of `(T-t)^{1/2+1/(p-1)} sqrt|log(T-t)| |d_x u(xi)|`.
    pub limit_constant: f64,
    /// `|f'(1)|`
    pub reference: f64,
    pub monotone: bool,
    pub residual: f64,
    pub samples: Vec<(f64, f64)>,
}

pub fn gradient_blowup_witness(
    record: &TrajectoryRecord,
    params: &Parameters<f64>,
    window: (f64, f64),
) -> Result<WitnessFit, AnalysisError> {
    if params.eps1 > 0.5 - params.beta / 2.0 + 1e-15 {
        return Err(AnalysisError::ConditionNotMet);
    }
    let a = 1.0 / (params.p - 1.0);
    let used: Vec<&MetricSample> = record.metrics.iter().filter(|m| m.s >= window.0 && m.s <= window.1).collect();
    if used.len() < 3 {
        return Err(AnalysisError::TooFewSamples { needed: 3, lo: window.0, hi: window.1 });
    }
    // log G = (a + 1/2) s + log|w_y(sqrt s)|; against log(T-t) = -s.
    let xs: Vec<f64> = used.iter().map(|m| -m.s).collect();
    let ys: Vec<f64> = used.iter().map(|m| (a + 0.5) * m.s + m.witness_dyw.abs().ln() + 0.5 * m.s.ln()).collect();
    let (slope, _, rms) = least_squares(&xs, &ys);
    let tail = &used[used.len().saturating_sub(used.len() / 10 + 1)..];
    let limit = tail.iter().map(|m| m.witness_dyw.abs() * m.s.sqrt()).sum::<f64>() / tail.len() as f64;
    let g: Vec<f64> = used.iter().zip(&ys).map(|(m, y)| y - 0.5 * m.s.ln()).collect();
    Ok(WitnessFit {
        exponent: slope,
        expected_exponent: -(0.5 + a),
        limit_constant: limit,
        reference: Profile::new(params).f_prime(1.0).abs(),
        monotone: g.windows(2).all(|w| w[1] > w[0]),
        residual: rms,
        samples: used.iter().map(|m| (m.s, m.witness_dyw)).collect(),
    })
}

/// One checked inequality of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEntry {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub window: (f64, f64),
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<GateEntry>,
    /// Checks that were not applicable, with the reason.
    pub skipped: Vec<String>,
}

impl VerificationReport {
    pub fn push(&mut self, e: GateEntry) {
        self.entries.push(e);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failed(&self) -> Vec<&GateEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }
}

pub fn bounded_gate(check: &BoundednessCheck, limit: f64) -> GateEntry {
    GateEntry {
        name: check.quantity.clone(),
        measured: check.ratio,
        target: 1.0,
        tolerance: limit,
        window: check.window,
        pass: check.passes(limit),
        note: format!("block-sup max/min < {limit}; max {:.4e}, min {:.4e}", check.max, check.min),
    }
}

pub fn exponent_gate(name: &str, fit: &RateFit, target: f64, tol: f64) -> GateEntry {
    GateEntry {
        name: name.to_string(),
        measured: fit.exponent,
        target,
        tolerance: tol,
        window: fit.window,
        pass: (fit.exponent - target).abs() <= tol,
        note: format!("constant {:.4e}, rms log residual {:.3e}", fit.constant, fit.residual),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate_parameters, RawParameters};

    fn params() -> Parameters<f64> {
        validate_parameters(RawParameters::desk_default()).unwrap()
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let samples: Vec<(f64, f64)> = (0..200).map(|k| 20.0 + k as f64).map(|s| (s, 3.0 * s.powf(-0.55))).collect();
        let fit = fit_power_law("x", &samples, (20.0, 200.0)).unwrap();
        assert!((fit.exponent - 0.55).abs() < 1e-12);
        assert!((fit.constant - 3.0).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn short_window_is_refused() {
        let samples = vec![(22.0, 1.0), (25.0, 0.9), (30.0, 0.8)];
        assert_eq!(
            fit_power_law("x", &samples, (22.0, 30.0)),
            Err(AnalysisError::WindowTooShort { lo: 22.0, hi: 30.0 })
        );
    }

    #[test]
    fn target_exponents() {
        let p = params();
        assert!((p.rate_exponent() - 0.55).abs() < 1e-15);
        let mut raw = RawParameters::desk_default();
        raw.mu = Some(0.0);
        raw.beta = Some(0.0);
        let p0 = validate_parameters(raw).unwrap();
        assert!((p0.rate_exponent() - 0.75f64).abs() < 1e-15);
    }

    #[test]
    fn block_boundedness_uses_block_sups() {
        let s: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 * 0.1, if k % 10 == 0 { 0.0 } else { 1.0 + k as f64 / 100.0 })).collect();
        let c = block_boundedness("q", &s, 1.0);
        assert!(c.ratio < 2.0 && c.passes(10.0));
        let z: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.0)).collect();
        assert!(block_boundedness("z", &z, 1.0).passes(10.0));
    }

    #[test]
    fn physical_round_trip() {
        let p = params();
        let g = Arc::new(Grid::<f64>::uniform(10.0, 50).unwrap());
        let v = Field::from_fn(g.clone(), |y| 1e-3 * (0.3 * y).cos());
        let s = 27.0;
        let phys = to_physical(&v, s, &p);
        let prof = Profile::new(&p);
        for (i, &y) in g.nodes().iter().enumerate() {
            let (yb, wb) = to_similarity(phys.x[i], phys.u[i], s, p.p);
            let w = v.values()[i] + prof.phi(y, s);
            assert!((yb - y).abs() <= 1e-12 * y.abs().max(1.0));
            assert!((wb - w).abs() <= 1e-12 * w.abs());
        }
        assert!((phys.time_to_blowup - (-s).exp()).abs() < 1e-30);
        // (T-t)^{1/(p-1)} u(0,t) = w(0,s)
        let c = g.center();
        assert!((phys.u[c] * phys.time_to_blowup.powf(0.25) - (v.values()[c] + prof.phi(0.0, s))).abs() < 1e-12);
    }

    #[test]
    fn remainder_rows_are_bounded_on_desk_window() {
        let p = params();
        let s: Vec<f64> = (0..=18).map(|k| 20.0 + 10.0 * k as f64).collect();
        let grid = remainder_grid(&p, 200.0);
        let rows = remainder_rows(&p, &s, &grid);
        for (k, row) in rows.iter().enumerate() {
            let c = block_boundedness("r", row, 1.0);
            assert!(c.passes(10.0), "row {k}: {c:?}");
        }
    }

    #[test]
    fn mode_ode_residual_zero_for_exact_flow() {
        // v0 = e^{s-20} c solves v0' = v0 exactly; v2 = c/s^2 solves v2' = -2 v2/s.
        let modes: Vec<ModeSample> = (0..500)
            .map(|k| {
                let s = 20.0 + 0.01 * k as f64;
                ModeSample {
                    s,
                    v0: 1e-6 * (s - 20.0).exp(),
                    v1: 0.0,
                    v2: 1e-3 / (s * s),
                    minus_norm: 0.0,
                    outer_sup: 0.0,
                    outer_weighted: 0.0,
                    r_g0: 0.0,
                    r_g1: 0.0,
                    r_g2: 0.0,
                    r_g_minus: 0.0,
                    r_g_e: 0.0,
                    r_g_e_weighted: 0.0,
                }
            })
            .collect();
        let rec = TrajectoryRecord { modes, ..Default::default() };
        let r = mode_ode_report(&rec);
        assert!(r.mode0.max < 1e-3 * 400.0 * 1e-6 * 150.0);
        assert!(r.mode1.identically_zero);
        assert!(r.mode2.max < 1e-6);
    }

    #[test]
    fn final_profile_rejects_origin() {
        let rec = TrajectoryRecord { grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0], ..Default::default() };
        assert_eq!(final_profile(&rec, &[0.0], &params(), 0.9), Err(AnalysisError::BlowupPoint));
    }

    #[test]
    fn witness_requires_condition() {
        let p = params().with_eps1(0.5).unwrap();
        assert_eq!(
            gradient_blowup_witness(&TrajectoryRecord::default(), &p, (0.0, 1.0)),
            Err(AnalysisError::ConditionNotMet)
        );
    }

    #[test]
    fn witness_on_exact_profile() {
        let p = params();
        let prof = Profile::new(&p);
        let metrics: Vec<MetricSample> = (0..200)
            .map(|k| {
                let s = 22.0 + k as f64;
                MetricSample {
                    s,
                    n0: 0.0,
                    n1: 0.0,
                    err_u: 0.0,
                    err_grad: 0.0,
                    sup_n: 0.0,
                    sup_n_outer_weighted: 0.0,
                    witness_dyw: prof.f_prime(1.0) / s.sqrt(),
                    w_center: 0.0,
                }
            })
            .collect();
        let rec = TrajectoryRecord { metrics, ..Default::default() };
        let w = gradient_blowup_witness(&rec, &p, (22.0, 221.0)).unwrap();
        assert!((w.exponent + 0.75).abs() < 1e-10);
        assert!((w.limit_constant / w.reference - 1.0).abs() < 1e-12);
        assert!(w.monotone);
    }

    #[test]
    fn record_extend_drops_overlap() {
        let mk = |s: f64| ModeSample {
            s,
            v0: 0.0,
            v1: 0.0,
            v2: 0.0,
            minus_norm: 0.0,
            outer_sup: 0.0,
            outer_weighted: 0.0,
            r_g0: 0.0,
            r_g1: 0.0,
            r_g2: 0.0,
            r_g_minus: 0.0,
            r_g_e: 0.0,
            r_g_e_weighted: 0.0,
        };
        let mut a = TrajectoryRecord { modes: vec![mk(1.0), mk(2.0)], ..Default::default() };
        let b = TrajectoryRecord { modes: vec![mk(2.0), mk(3.0)], kicks: vec![Kick { s: 2.0, delta: 1e-6 }], ..Default::default() };
        a.extend(b);
        assert_eq!(a.modes.len(), 3);
        assert!(a.is_increasing());
        assert_eq!(a.kicks.len(), 1);
    }
}
