//! Finite-dimensional shooting on the expanding modes: run classification,
//! coarse scans, bisection of `d0` (and optionally `d1`), transversality of
//! exits and staged continuation past the single-parameter precision limit.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{Kick, MetricSample, ModeSample, Snapshot, TrajectoryRecord};
use crate::grid::{Field, Grid, GridError, GridSpec};
use crate::params::Parameters;
use crate::pde::{Solver, SolverError, SolverState, TermSwitches, DEFAULT_STEP};
use crate::profile::Profile;
use crate::scalar::{c, Real};
use crate::shrinking::{membership, Bound, MembershipReport};
use crate::spectral::{blowup_cutoff_chi, decompose, HermiteBasis, SpectralError};

/// Solver and recording settings shared by every run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub ds: f64,
    pub h0: f64,
    pub cap: f64,
    /// `L = extent_factor * K0 * sqrt(s_horizon)`
    pub extent_factor: f64,
    pub quadrature_order: usize,
    pub refine: u32,
    pub snapshot_every: f64,
    /// Metrics are taken every this many steps.
    pub metric_every: usize,
    /// Runs that start exactly even are re-symmetrized after every step.
    /// Rounding otherwise seeds an odd part that mode 1 amplifies as
    /// `e^{s/2}`.
    pub enforce_parity: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            ds: DEFAULT_STEP,
            h0: 0.05,
            cap: 0.25,
            extent_factor: 4.0,
            quadrature_order: crate::spectral::DEFAULT_QUADRATURE_ORDER,
            refine: 0,
            snapshot_every: 1.0,
            metric_every: 10,
            enforce_parity: true,
        }
    }
}

impl SimulationSettings {
    pub fn grid_spec(&self, params: &Parameters<f64>, s_horizon: f64) -> GridSpec {
        let k0 = params.k0;
        GridSpec {
            half_width: self.extent_factor * k0 * s_horizon.sqrt(),
            h0: self.h0,
            cap: self.cap,
            dense_zone: Some((0.8 * k0 * params.s0.sqrt(), 1.1 * 2.0 * k0 * s_horizon.sqrt())),
            refine: self.refine,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ShootError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("search rectangle must lie in [-2, 2]^2 with lo < hi")]
    BadRectangle,
    #[error("no sign change of the mode-0 exit over the coarse scan")]
    NoSignChange(Vec<ScanEntry>),
    #[error("horizon {s_end} not reached; longest survivor d0 = {best_d0:e} exits at s = {best_s_exit}")]
    HorizonNotReached { s_end: f64, best_d0: f64, best_d1: f64, best_s_exit: f64 },
    #[error("exit on {0} is not an expanding mode")]
    NotApplicable(String),
}

/// Which bound was crossed, or a solver failure counted as an exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitMode {
    Bound(Bound),
    Numerical,
}

impl ExitMode {
    pub fn label(self) -> &'static str {
        match self {
            ExitMode::Bound(b) => b.label(),
            ExitMode::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub survived: bool,
    pub s_exit: Option<f64>,
    pub exit_mode: Option<ExitMode>,
    /// Sign of the exiting quantity at `s_exit`; for survivors the sign of
    /// `v0` at the horizon.
    pub exit_sign: i32,
    /// `v_m'` at the exit for exits on modes 0 and 1.
    pub crossing_derivative: Option<f64>,
    /// `v0` at the exit or at the horizon; drives the bisection.
    pub v0_last: f64,
    pub s_last: f64,
}

impl RunOutcome {
    /// The sign bisection uses: `v0` at the exit or at the horizon.
    pub fn shooting_sign(&self) -> i32 {
        sign(self.v0_last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRectangle {
    pub d0_lo: f64,
    pub d0_hi: f64,
    pub d1_lo: f64,
    pub d1_hi: f64,
}

impl SearchRectangle {
    pub fn full() -> Self {
        Self { d0_lo: -2.0, d0_hi: 2.0, d1_lo: -2.0, d1_hi: 2.0 }
    }

    pub fn validate(&self) -> Result<(), ShootError> {
        let inside = |x: f64| (-2.0..=2.0).contains(&x);
        if [self.d0_lo, self.d0_hi, self.d1_lo, self.d1_hi].into_iter().all(inside)
            && self.d0_lo < self.d0_hi
            && self.d1_lo <= self.d1_hi
        {
            Ok(())
        } else {
            Err(ShootError::BadRectangle)
        }
    }

    /// `n` equally spaced values of `d0`.
    pub fn d0_scan(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n).map(|k| self.d0_lo + (self.d0_hi - self.d0_lo) * k as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub d0: f64,
    pub d1: f64,
    pub outcome: RunOutcome,
}

impl ScanEntry {
    pub fn csv_header() -> &'static str {
        "d0,d1,s_exit,exit_mode,exit_sign"
    }

    pub fn csv_row(&self) -> String {
        let o = &self.outcome;
        format!(
            "{:e},{:e},{},{},{}",
            self.d0,
            self.d1,
            o.s_exit.map_or(String::new(), |s| format!("{s}")),
            o.exit_mode.map_or("", |m| m.label()),
            o.exit_sign
        )
    }
}

/// Bisection controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingSettings {
    pub scan_points: usize,
    pub tolerance: f64,
    /// Extra horizon a candidate must also survive.
    pub lookahead: f64,
    /// Stage length of the kick continuation.
    pub stage: f64,
    /// Look-ahead of a stage; longer than `lookahead` because the kick must
    /// leave little unstable component for the next stage.
    pub stage_lookahead: f64,
    /// Kicks are searched in `[-kick_range, kick_range]` (units of `A/s^2`).
    pub kick_range: f64,
    pub kick_tolerance: f64,
}

impl Default for ShootingSettings {
    fn default() -> Self {
        Self { scan_points: 17, tolerance: 1e-14, lookahead: 2.0, stage: 5.0, stage_lookahead: 6.0, kick_range: 1e-2, kick_tolerance: 1e-12 }
    }
}

fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// One configured experiment: grid, solver and projection tables.
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    params: Parameters<T>,
    settings: SimulationSettings,
    solver: Solver<T>,
    basis: HermiteBasis<T>,
}

/// Where a run stopped.
#[derive(Debug, Clone)]
pub struct RunEnd<T> {
    pub outcome: RunOutcome,
    pub state: SolverState<T>,
}

impl<T: Real> Simulation<T> {
    pub fn new(params: &Parameters<T>, settings: SimulationSettings, s_horizon: f64) -> Result<Self, ShootError> {
        let pf = Parameters {
            p: params.p.to_f64_lossy(),
            q: params.q.to_f64_lossy(),
            mu: params.mu.to_f64_lossy(),
            dim: params.dim,
            beta: params.beta.to_f64_lossy(),
            eps1: params.eps1.to_f64_lossy(),
            alpha: params.alpha.to_f64_lossy(),
            eps: params.eps.to_f64_lossy(),
            k0: params.k0.to_f64_lossy(),
            a_const: params.a_const.to_f64_lossy(),
            s0: params.s0.to_f64_lossy(),
            t_blowup: params.t_blowup.to_f64_lossy(),
        };
        let g64 = Grid::<f64>::graded(&settings.grid_spec(&pf, s_horizon))?;
        let grid = Grid::from_nodes(g64.nodes().iter().map(|&y| c::<T>(y)).collect())?;
        Ok(Self::with_grid(params, settings, Arc::new(grid)))
    }

    pub fn with_grid(params: &Parameters<T>, settings: SimulationSettings, grid: Arc<Grid<T>>) -> Self {
        Self {
            params: *params,
            settings,
            solver: Solver::new(params, grid, TermSwitches::default()),
            basis: HermiteBasis::new(10, settings.quadrature_order),
        }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.solver.grid()
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn settings(&self) -> &SimulationSettings {
        &self.settings
    }

    pub fn solver(&self) -> &Solver<T> {
        &self.solver
    }

    pub fn profile(&self) -> &Profile<T> {
        self.solver.profile()
    }

    /// `psi_{s0, d0, d1}` at `s0`.
    pub fn initial_state(&self, d0: T, d1: T) -> SolverState<T> {
        let s0 = self.params.s0;
        let prof = self.profile();
        let v = Field::from_fn(self.grid().clone(), |y| prof.initial_data(d0, d1, s0, y));
        SolverState::new(s0, v, c(self.settings.ds))
    }

    /// Adds `delta (A/s^2) chi(2y, s)` to `state`.
    pub fn kicked(&self, state: &SolverState<T>, delta: T) -> SolverState<T> {
        let s = state.s;
        let amp = self.params.a_const / (s * s) * delta;
        let k0 = self.params.k0;
        let mut out = state.clone();
        for (v, &y) in out.v.values_mut().iter_mut().zip(self.grid().nodes()) {
            *v = *v + amp * blowup_cutoff_chi(c::<T>(2.0) * y, s, k0);
        }
        out
    }

    pub fn observe(&self, state: &SolverState<T>) -> Result<(MembershipReport<T>, ModeSample), ShootError> {
        let dec = decompose(&state.v, state.s, &self.basis, self.params.k0)?;
        let rep = membership(&dec, state.s, &self.params);
        let beta = self.params.beta;
        let f = |x: T| x.to_f64_lossy();
        let r = rep.ratios;
        let sample = ModeSample {
            s: f(state.s),
            v0: f(dec.v0),
            v1: f(dec.v1),
            v2: f(dec.v2),
            minus_norm: f(crate::spectral::project_minus_norm(&dec)),
            outer_sup: f(dec.v_e.sup()),
            outer_weighted: f(dec.v_e.weighted_sup(|y| T::one() + y.abs().powf(beta))),
            r_g0: f(r[0]),
            r_g1: f(r[1]),
            r_g2: f(r[2]),
            r_g_minus: f(r[3]),
            r_g_e: f(r[4]),
            r_g_e_weighted: f(r[5]),
        };
        Ok((rep, sample))
    }

    pub fn metrics(&self, state: &SolverState<T>) -> MetricSample {
        let s = state.s;
        let prof = self.profile();
        let grid = self.grid();
        let beta = self.params.beta;
        let sq = s.sqrt();
        let dv = grid.derivative(state.v.values());
        let n = crate::pde::term_N(&state.v, s, &self.params);
        let (mut n0, mut n1, mut eu, mut eg, mut sn, mut snw) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for (i, &y) in grid.nodes().iter().enumerate() {
            let wt = T::one() + y.abs().powf(beta);
            let v = state.v.values()[i];
            let pt = prof.phi_point(y, s);
            let z = y / sq;
            n0 = n0.max(wt * v.abs());
            n1 = n1.max(wt * dv[i].abs());
            eu = eu.max(wt * (v + pt.value - prof.f(z)).abs());
            eg = eg.max(wt * (dv[i] + pt.gradient - prof.f_prime(z) / sq).abs());
            let ni = n.values()[i].abs();
            sn = sn.max(ni);
            snw = snw.max(wt * ni * (T::one() - blowup_cutoff_chi(y, s, self.params.k0)));
        }
        let dvf = Field::new(grid.clone(), dv);
        let f = |x: T| x.to_f64_lossy();
        MetricSample {
            s: f(s),
            n0: f(n0),
            n1: f(n1),
            err_u: f(eu),
            err_grad: f(eg),
            sup_n: f(sn),
            sup_n_outer_weighted: f(snw),
            witness_dyw: f(dvf.at(sq) + prof.phi_point(sq, s).gradient),
            w_center: f(state.v.at(T::zero()) + prof.phi(T::zero(), s)),
        }
    }

    fn snapshot(&self, state: &SolverState<T>) -> Snapshot {
        Snapshot { s: state.s.to_f64_lossy(), v: state.v.values().iter().map(|x| x.to_f64_lossy()).collect() }
    }

    /// Integrates from `state` to `s_end`. With `stop_on_exit` the run ends
    /// two steps after the first sample outside the set (the extra samples
    /// feed the crossing derivative). `record`, when given, receives every
    /// mode sample plus metrics and snapshots at their cadence.
    pub fn run(
        &self,
        state: SolverState<T>,
        s_end: f64,
        stop_on_exit: bool,
        mut record: Option<&mut TrajectoryRecord>,
    ) -> Result<RunEnd<T>, ShootError> {
        let ds = self.settings.ds;
        let start = state.s.to_f64_lossy();
        let nsteps = ((s_end - start) / ds - 1e-9).ceil().max(0.0) as usize;
        let snap_stride = ((self.settings.snapshot_every / ds).round() as usize).max(1);
        let metric_stride = self.settings.metric_every.max(1);
        let even = self.settings.enforce_parity && state.v.odd_part_sup() == T::zero();
        let mut st = state;
        let mut samples: Vec<ModeSample> = Vec::new();
        let mut exit: Option<(usize, Bound)> = None;
        let mut numerical = false;
        for k in 0..=nsteps {
            let (rep, sample) = self.observe(&st)?;
            samples.push(sample);
            if let Some(rec) = record.as_deref_mut() {
                rec.modes.push(sample);
                if k % metric_stride == 0 {
                    rec.metrics.push(self.metrics(&st));
                }
                if k % snap_stride == 0 {
                    rec.snapshots.push(self.snapshot(&st));
                }
            }
            if exit.is_none() && !rep.inside {
                exit = Some((samples.len() - 1, rep.dominant()));
            }
            if let Some((ke, _)) = exit {
                if stop_on_exit && samples.len() >= ke + 3 {
                    break;
                }
            }
            if k == nsteps {
                break;
            }
            let target = (start + (k + 1) as f64 * ds).min(s_end);
            let mut next = st.clone();
            next.step_size = c::<T>(target) - st.s;
            match self.solver.step(&next) {
                Ok(mut ns) => {
                    ns.step_size = c(ds);
                    if even {
                        symmetrize(&mut ns.v);
                    }
                    st = ns;
                }
                Err(SolverError::LinearSolve(_)) | Err(SolverError::NonFinite(_)) | Err(SolverError::StepRejected { .. }) => {
                    numerical = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let last = *samples.last().expect("at least one sample");
        let outcome = match (exit, numerical) {
            (Some((ke, b)), _) => {
                let m = b.positive_mode().unwrap_or(match b {
                    Bound::Mode2 => 2,
                    _ => usize::MAX,
                });
                let value = if m <= 2 { samples[ke].mode(m) } else { 1.0 };
                RunOutcome {
                    survived: false,
                    s_exit: Some(samples[ke].s),
                    exit_mode: Some(ExitMode::Bound(b)),
                    exit_sign: sign(value),
                    crossing_derivative: b.positive_mode().and_then(|m| crossing_derivative(&samples, ke, m)),
                    v0_last: samples[ke].v0,
                    s_last: last.s,
                }
            }
            (None, true) => RunOutcome {
                survived: false,
                s_exit: Some(last.s),
                exit_mode: Some(ExitMode::Numerical),
                exit_sign: sign(last.v0),
                crossing_derivative: None,
                v0_last: last.v0,
                s_last: last.s,
            },
            (None, false) => RunOutcome {
                survived: true,
                s_exit: None,
                exit_mode: None,
                exit_sign: sign(last.v0),
                crossing_derivative: None,
                v0_last: last.v0,
                s_last: last.s,
            },
        };
        Ok(RunEnd { outcome, state: st })
    }

    fn grid_record(&self, d0: f64, d1: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            d0,
            d1,
            grid: self.grid().nodes().iter().map(|y| y.to_f64_lossy()).collect(),
            ..Default::default()
        }
    }

    /// Runs `psi_{d0, d1}` to `s_end`, stopping at the first exit.
    pub fn classify_run(&self, d0: f64, d1: f64, s_end: f64) -> Result<(RunOutcome, TrajectoryRecord), ShootError> {
        let mut rec = self.grid_record(d0, d1);
        let end = self.run(self.initial_state(c(d0), c(d1)), s_end, true, Some(&mut rec))?;
        Ok((end.outcome, rec))
    }

    /// Outcome only; no recording.
    pub fn outcome(&self, d0: f64, d1: f64, s_end: f64) -> Result<RunOutcome, ShootError> {
        Ok(self.run(self.initial_state(c(d0), c(d1)), s_end, true, None)?.outcome)
    }
}

fn symmetrize<T: Real>(v: &mut Field<T>) {
    let grid = v.grid().clone();
    let vals = v.values_mut();
    for i in 0..grid.center() {
        let j = grid.mirror(i);
        let m = c::<T>(0.5) * (vals[i] + vals[j]);
        vals[i] = m;
        vals[j] = m;
    }
}

/// `v_m'` at sample `k`: centered when both neighbours exist, one-sided
/// three-point otherwise.
pub fn crossing_derivative(samples: &[ModeSample], k: usize, m: usize) -> Option<f64> {
    let n = samples.len();
    let v = |i: usize| samples[i].mode(m);
    if k >= 1 && k + 1 < n {
        Some((v(k + 1) - v(k - 1)) / (samples[k + 1].s - samples[k - 1].s))
    } else if k + 2 < n {
        let h = samples[k + 1].s - samples[k].s;
        Some((-3.0 * v(k) + 4.0 * v(k + 1) - v(k + 2)) / (2.0 * h))
    } else if k >= 2 {
        let h = samples[k].s - samples[k - 1].s;
        Some((3.0 * v(k) - 4.0 * v(k - 1) + v(k - 2)) / (2.0 * h))
    } else {
        None
    }
}

/// `sign(v_m(s1)) v_m'(s1) > 0` for exits on an expanding mode.
pub fn transverse_check(record: &TrajectoryRecord, outcome: &RunOutcome) -> Result<bool, ShootError> {
    let mode = match outcome.exit_mode {
        Some(ExitMode::Bound(b)) => b,
        Some(ExitMode::Numerical) => return Err(ShootError::NotApplicable("numerical".into())),
        None => return Err(ShootError::NotApplicable("survivor".into())),
    };
    let m = mode.positive_mode().ok_or_else(|| ShootError::NotApplicable(mode.label().into()))?;
    let s1 = outcome.s_exit.expect("exited run has s_exit");
    let k = record
        .modes
        .iter()
        .position(|x| (x.s - s1).abs() < 1e-9)
        .ok_or_else(|| ShootError::NotApplicable("exit sample missing".into()))?;
    let d = crossing_derivative(&record.modes, k, m).ok_or_else(|| ShootError::NotApplicable("too few samples".into()))?;
    Ok(record.modes[k].mode(m).signum() * d > 0.0)
}

/// Classifies every `(d0, d1)` of `points`; candidates run on the current
/// rayon pool.
pub fn coarse_scan<T: Real>(sim: &Simulation<T>, points: &[(f64, f64)], s_end: f64) -> Result<Vec<ScanEntry>, ShootError> {
    points
        .par_iter()
        .map(|&(d0, d1)| Ok(ScanEntry { d0, d1, outcome: sim.outcome(d0, d1, s_end)? }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingResult {
    pub d0: f64,
    pub d1: f64,
    pub scan: Vec<ScanEntry>,
    /// Every bisection candidate in order.
    pub history: Vec<ScanEntry>,
    pub outcome: RunOutcome,
    pub record: TrajectoryRecord,
}

/// Bisects `d0` on `[lo, hi]` (signs differ) at fixed `d1` until a
/// candidate survives to `s_end + lookahead` or the bracket is below
/// `tolerance`.
pub fn bisect_d0<T: Real>(
    sim: &Simulation<T>,
    mut lo: f64,
    mut hi: f64,
    d1: f64,
    s_end: f64,
    settings: &ShootingSettings,
    history: &mut Vec<ScanEntry>,
) -> Result<(f64, RunOutcome), ShootError> {
    let horizon = s_end + settings.lookahead;
    let lo_sign = sim.outcome(lo, d1, horizon)?.shooting_sign();
    let mut best: Option<(f64, RunOutcome)> = None;
    while hi - lo > settings.tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let o = sim.outcome(mid, d1, horizon)?;
        history.push(ScanEntry { d0: mid, d1, outcome: o });
        let better = best.as_ref().is_none_or(|(_, b)| o.s_last > b.s_last);
        if better {
            best = Some((mid, o));
        }
        if o.survived {
            return Ok((mid, o));
        }
        if o.shooting_sign() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (d0, o) = best.ok_or(ShootError::BadRectangle)?;
    Err(ShootError::HorizonNotReached { s_end, best_d0: d0, best_d1: d1, best_s_exit: o.s_last })
}

/// Default search: `d1 = 0` (clamped into the rectangle), coarse scan over
/// `d0`, bisection on the first sign change of `v0`.
pub fn find_blowup_data<T: Real>(
    sim: &Simulation<T>,
    rect: SearchRectangle,
    s_end: f64,
    settings: &ShootingSettings,
    scan_d0: Option<&[f64]>,
) -> Result<ShootingResult, ShootError> {
    rect.validate()?;
    let d1 = 0f64.clamp(rect.d1_lo, rect.d1_hi);
    let d0s = scan_d0.map(|x| x.to_vec()).unwrap_or_else(|| rect.d0_scan(settings.scan_points));
    let pts: Vec<(f64, f64)> = d0s.iter().map(|&d| (d, d1)).collect();
    let scan = coarse_scan(sim, &pts, s_end)?;
    let bracket = scan
        .windows(2)
        .find(|w| w[0].outcome.shooting_sign() * w[1].outcome.shooting_sign() < 0)
        .map(|w| (w[0].d0, w[1].d0));
    let Some((lo, hi)) = bracket else {
        if let Some(e) = scan.iter().find(|e| e.outcome.survived) {
            let (outcome, record) = sim.classify_run(e.d0, d1, s_end)?;
            return Ok(ShootingResult { d0: e.d0, d1, scan, history: Vec::new(), outcome, record });
        }
        return Err(ShootError::NoSignChange(scan));
    };
    let mut history = Vec::new();
    let (d0, _) = bisect_d0(sim, lo, hi, d1, s_end, settings, &mut history)?;
    let (outcome, record) = sim.classify_run(d0, d1, s_end)?;
    Ok(ShootingResult { d0, d1, scan, history, outcome, record })
}

/// Nested search on `(d0, d1)`: the inner bisection fixes `d0(d1)`, the
/// outer one bisects `d1` on the sign of `v1` where that run leaves.
pub fn find_blowup_data_2d<T: Real>(
    sim: &Simulation<T>,
    rect: SearchRectangle,
    s_end: f64,
    settings: &ShootingSettings,
    outer_tolerance: f64,
) -> Result<ShootingResult, ShootError> {
    rect.validate()?;
    let mut history = Vec::new();
    let inner = |d1: f64, history: &mut Vec<ScanEntry>| -> Result<(f64, RunOutcome), ShootError> {
        let d0s = rect.d0_scan(settings.scan_points);
        let mut prev: Option<(f64, i32)> = None;
        for d0 in d0s {
            let o = sim.outcome(d0, d1, s_end + settings.lookahead)?;
            history.push(ScanEntry { d0, d1, outcome: o });
            if let Some((pd, ps)) = prev {
                if ps * o.shooting_sign() < 0 {
                    return match bisect_d0(sim, pd, d0, d1, s_end, settings, history) {
                        Ok(r) => Ok(r),
                        Err(ShootError::HorizonNotReached { best_d0, .. }) => {
                            Ok((best_d0, sim.outcome(best_d0, d1, s_end + settings.lookahead)?))
                        }
                        Err(e) => Err(e),
                    };
                }
            }
            prev = Some((d0, o.shooting_sign()));
        }
        Err(ShootError::NoSignChange(history.clone()))
    };
    let v1_sign = |d0: f64, d1: f64| -> Result<i32, ShootError> {
        let (_, rec) = sim.classify_run(d0, d1, s_end + settings.lookahead)?;
        Ok(sign(rec.modes.last().map_or(0.0, |m| m.v1)))
    };
    let (mut lo, mut hi) = (rect.d1_lo, rect.d1_hi);
    let (d0_lo, o_lo) = inner(lo, &mut history)?;
    if o_lo.survived {
        let (outcome, record) = sim.classify_run(d0_lo, lo, s_end)?;
        return Ok(ShootingResult { d0: d0_lo, d1: lo, scan: Vec::new(), history, outcome, record });
    }
    let s_lo = v1_sign(d0_lo, lo)?;
    let mut found = (d0_lo, lo);
    while hi - lo > outer_tolerance {
        let mid = 0.5 * (lo + hi);
        let (d0, o) = inner(mid, &mut history)?;
        found = (d0, mid);
        if o.survived {
            break;
        }
        if v1_sign(d0, mid)? == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (outcome, record) = sim.classify_run(found.0, found.1, s_end)?;
    if !outcome.survived {
        return Err(ShootError::HorizonNotReached {
            s_end,
            best_d0: found.0,
            best_d1: found.1,
            best_s_exit: outcome.s_last,
        });
    }
    Ok(ShootingResult { d0: found.0, d1: found.1, scan: Vec::new(), history, outcome, record })
}

/// Continues a survivor from `state` to `s_target` in stages. At each stage
/// start a kick `delta (A/s^2) chi(2y, s)` is bisected so the kicked state
/// survives the stage plus the look-ahead; the stage is then recorded.
pub fn extend_survivor<T: Real>(
    sim: &Simulation<T>,
    mut state: SolverState<T>,
    s_target: f64,
    settings: &ShootingSettings,
    record: &mut TrajectoryRecord,
) -> Result<SolverState<T>, ShootError> {
    while state.s.to_f64_lossy() < s_target - 1e-9 {
        let s = state.s.to_f64_lossy();
        let stage_end = (s + settings.stage).min(s_target);
        let horizon = stage_end + settings.stage_lookahead;
        let signal = |delta: f64| -> Result<RunOutcome, ShootError> {
            Ok(sim.run(sim.kicked(&state, c(delta)), horizon, true, None)?.outcome)
        };
        let mut range = settings.kick_range;
        let mut lo_sign = signal(-range)?.shooting_sign();
        while lo_sign == signal(range)?.shooting_sign() && range < 2.0 {
            range *= 10.0;
            lo_sign = signal(-range)?.shooting_sign();
        }
        let (mut lo, mut hi) = (-range, range);
        let mut delta = 0.0;
        let mut best_s = f64::NEG_INFINITY;
        while hi - lo > settings.kick_tolerance {
            let mid = 0.5 * (lo + hi);
            let o = signal(mid)?;
            if o.s_last > best_s {
                best_s = o.s_last;
                delta = mid;
            }
            if o.survived {
                break;
            }
            if o.shooting_sign() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let kicked = sim.kicked(&state, c(delta));
        record.kicks.push(Kick { s, delta });
        let mut stage = TrajectoryRecord::default();
        let end = sim.run(kicked, stage_end, true, Some(&mut stage))?;
        if !end.outcome.survived {
            record.extend(stage);
            return Err(ShootError::HorizonNotReached {
                s_end: s_target,
                best_d0: record.d0,
                best_d1: record.d1,
                best_s_exit: end.outcome.s_last,
            });
        }
        record.extend(stage);
        state = end.state;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate_parameters, RawParameters};

    fn params() -> Parameters<f64> {
        validate_parameters(RawParameters::desk_default()).unwrap()
    }

    fn sim(s_h: f64) -> Simulation<f64> {
        let st = SimulationSettings { h0: 0.1, cap: 0.5, ..Default::default() };
        Simulation::new(&params(), st, s_h).unwrap()
    }

    fn synthetic(v0: impl Fn(f64) -> f64, s1: f64) -> (TrajectoryRecord, RunOutcome) {
        let modes: Vec<ModeSample> = (-5..=2)
            .map(|k| {
                let s = s1 + 0.01 * k as f64;
                ModeSample {
                    s,
                    v0: v0(s),
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
                }
            })
            .collect();
        let o = RunOutcome {
            survived: false,
            s_exit: Some(s1),
            exit_mode: Some(ExitMode::Bound(Bound::Mode0)),
            exit_sign: 1,
            crossing_derivative: None,
            v0_last: v0(s1),
            s_last: s1,
        };
        (TrajectoryRecord { modes, ..Default::default() }, o)
    }

    #[test]
    fn tangent_exit_is_not_transverse() {
        let a = 20.0;
        let (rec, o) = synthetic(|s| a / (s * s), 25.0);
        assert_eq!(transverse_check(&rec, &o), Ok(false));
    }

    #[test]
    fn outward_exit_is_transverse() {
        let (a, s1) = (20.0, 25.0);
        let (rec, o) = synthetic(|s| a / (s * s) * (s / s1).powi(3), s1);
        assert_eq!(transverse_check(&rec, &o), Ok(true));
        let (rec, mut o) = synthetic(|s| -a / (s * s) * (s / s1).powi(3), s1);
        o.exit_sign = -1;
        assert_eq!(transverse_check(&rec, &o), Ok(true));
    }

    #[test]
    fn non_expanding_exit_not_applicable() {
        let (rec, mut o) = synthetic(|_| 0.0, 25.0);
        o.exit_mode = Some(ExitMode::Bound(Bound::Mode2));
        assert!(matches!(transverse_check(&rec, &o), Err(ShootError::NotApplicable(_))));
    }

    #[test]
    fn rectangle_validation() {
        assert!(SearchRectangle::full().validate().is_ok());
        let bad = SearchRectangle { d0_lo: -3.0, ..SearchRectangle::full() };
        assert_eq!(bad.validate(), Err(ShootError::BadRectangle));
        let d = SearchRectangle::full().d0_scan(17);
        assert_eq!(d.len(), 17);
        assert_eq!(d[8], 0.0);
    }

    #[test]
    fn large_positive_d0_exits_up_on_mode0() {
        let sim = sim(30.0);
        let (o, rec) = sim.classify_run(2.0, 0.0, 30.0).unwrap();
        assert_eq!(o.exit_mode, Some(ExitMode::Bound(Bound::Mode0)));
        assert_eq!(o.exit_sign, 1);
        assert!(o.crossing_derivative.unwrap() > 0.0);
        assert_eq!(transverse_check(&rec, &o), Ok(true));
        let (o, rec) = sim.classify_run(-2.0, 0.0, 30.0).unwrap();
        assert_eq!(o.exit_sign, -1);
        assert_eq!(transverse_check(&rec, &o), Ok(true));
    }

    #[test]
    fn even_data_keeps_v1_zero() {
        let sim = sim(25.0);
        let (_, rec) = sim.classify_run(0.3, 0.0, 22.0).unwrap();
        assert!(rec.modes.iter().all(|m| m.v1.abs() < 1e-12));
    }

    #[test]
    fn kick_matches_initial_data_shape() {
        let sim = sim(25.0);
        let zero = sim.initial_state(0.0, 0.0);
        let k = sim.kicked(&zero, 0.5);
        let d = sim.initial_state(0.5, 0.0);
        for (a, b) in k.v.values().iter().zip(d.v.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
