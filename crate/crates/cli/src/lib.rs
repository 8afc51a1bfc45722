//! Subcommands of the `blowup` binary. Each `cmd_*` writes its files into
//! the manifest's output directory and returns the process exit code.

pub mod io;
pub mod manifest;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

use blowup_core::analysis::TrajectoryRecord;
use blowup_core::params::{validate_parameters, ParamError, Parameters};
use blowup_core::shooting::{
    extend_survivor, find_blowup_data, transverse_check, ScanEntry, SearchRectangle, ShootError, Simulation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::io::{write_csv_with_header, write_json, write_trajectory, Provenance, RUN_JSON};
use crate::manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NO_SURVIVOR: i32 = 3;
pub const EXIT_GATES_FAILED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Shoot(#[from] ShootError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Params(_) => EXIT_INVALID,
            _ => EXIT_ERROR,
        }
    }
}

fn say(out: &mut dyn Write, msg: std::fmt::Arguments) {
    let _ = out.write_fmt(msg);
    let _ = out.write_all(b"\n");
}

pub fn horizon(m: &RunManifest, params: &Parameters<f64>) -> f64 {
    m.s_end.unwrap_or(params.s0 + 10.0)
}

/// Prints derived constants and the checklist; 0 iff valid, 2 otherwise.
pub fn cmd_validate(m: &RunManifest, out: &mut dyn Write) -> i32 {
    if m.params.eps.is_none() {
        if let (Some(e1), Some(b)) = (m.params.eps1, m.params.beta) {
            say(out, format_args!("eps not set; using eps = min(1, eps1/beta)/2 = {}", blowup_core::params::default_eps(e1, b)));
        }
    }
    for c in blowup_core::params::checklist_of(&m.params) {
        say(out, format_args!("[{}] {}", if c.holds { "ok" } else { "FAIL" }, c.label));
    }
    match validate_parameters(m.params.clone()) {
        Ok(p) => {
            let d = p.derived();
            say(out, format_args!("gamma = {}", d.gamma));
            say(out, format_args!("kappa = {}", d.kappa));
            say(out, format_args!("b = {}", d.b_coeff));
            say(out, format_args!("eps = {}", p.eps));
            say(out, format_args!("rate exponent 1 - beta/2 - eps1 = {}", p.rate_exponent()));
            EXIT_OK
        }
        Err(e) => {
            say(out, format_args!("invalid parameters: {e}"));
            EXIT_INVALID
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SimulateSummary {
    d0: f64,
    d1: f64,
    s_end: f64,
    outcome: blowup_core::shooting::RunOutcome,
}

/// One `(d0, d1)` run to the horizon, recorded in full (no stop at exit).
pub fn cmd_simulate(m: &RunManifest, d0: f64, d1: f64, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = validate_parameters(m.params.clone())?;
    let s_end = horizon(m, &params);
    let sim = Simulation::new(&params, m.simulation, s_end)?;
    let prov = Provenance::new(&params);
    let mut rec = TrajectoryRecord { d0, d1, grid: sim.grid().nodes().to_vec(), ..Default::default() };
    let end = sim.run(sim.initial_state(d0, d1), s_end, false, Some(&mut rec))?;
    write_trajectory(&m.out, &prov, &rec, &params)?;
    write_json(&m.out.join(RUN_JSON), &prov, &SimulateSummary { d0, d1, s_end, outcome: end.outcome })?;
    say(out, format_args!("run to s = {}: {}", end.outcome.s_last, describe(&end.outcome)));
    Ok(EXIT_OK)
}

fn describe(o: &blowup_core::shooting::RunOutcome) -> String {
    match (o.survived, o.exit_mode) {
        (true, _) => "inside the shrinking set throughout".into(),
        (false, Some(mode)) => format!("left through {} at s = {} (sign {})", mode.label(), o.s_exit.unwrap_or(f64::NAN), o.exit_sign),
        (false, None) => "left".into(),
    }
}

/// Scan points over the rectangle; interior points moved by a seeded
/// fraction of the spacing when `jitter > 0`.
pub fn scan_points(m: &RunManifest) -> Vec<f64> {
    let rect = SearchRectangle::full();
    let mut d = rect.d0_scan(m.shooting.scan_points);
    if m.jitter > 0.0 && d.len() > 2 {
        let h = d[1] - d[0];
        let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
        let n = d.len();
        for x in &mut d[1..n - 1] {
            *x += m.jitter * h * rng.random_range(-1.0..1.0);
        }
    }
    d
}

/// What `shoot` produced, files aside.
#[derive(Debug, Clone)]
pub struct ShootArtifacts {
    pub params: Parameters<f64>,
    pub s_end: f64,
    pub scan: Vec<ScanEntry>,
    pub history: Vec<ScanEntry>,
    /// Transversality of every scan exit on an expanding mode.
    pub transverse: Vec<(f64, bool)>,
    pub d0: Option<f64>,
    pub d1: f64,
    pub record: TrajectoryRecord,
    pub survived_to: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct FoundSummary {
    d0: Option<f64>,
    d1: f64,
    s_end: f64,
    survived_to: f64,
    max_ratio_to_horizon: f64,
    kicks: usize,
    transverse_exits: usize,
    non_transverse_exits: usize,
    failure: Option<String>,
}

/// Runs the search (and the staged continuation when `s_extend` is set).
pub fn shoot(m: &RunManifest, params: &Parameters<f64>) -> Result<ShootArtifacts, CliError> {
    let s_end = horizon(m, params);
    let s_ext = m.s_extend.unwrap_or(s_end).max(s_end);
    let sim = Simulation::new(params, m.simulation, s_ext)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(m.workers).build().map_err(CliError::other)?;
    let d0s = scan_points(m);
    let found = pool.install(|| find_blowup_data(&sim, SearchRectangle::full(), s_end, &m.shooting, Some(&d0s)));
    let mut art = ShootArtifacts {
        params: *params,
        s_end,
        scan: Vec::new(),
        history: Vec::new(),
        transverse: Vec::new(),
        d0: None,
        d1: 0.0,
        record: TrajectoryRecord { grid: sim.grid().nodes().to_vec(), ..Default::default() },
        survived_to: params.s0,
        failure: None,
    };
    let result = match found {
        Ok(r) => r,
        Err(ShootError::NoSignChange(scan)) => {
            art.scan = scan;
            art.failure = Some("no sign change of the mode-0 exit over the scan".into());
            return Ok(art);
        }
        Err(ShootError::HorizonNotReached { best_d0, best_d1, best_s_exit, .. }) => {
            let (_, rec) = sim.classify_run(best_d0, best_d1, s_end)?;
            art.d0 = Some(best_d0);
            art.d1 = best_d1;
            art.record = rec;
            art.survived_to = best_s_exit;
            art.failure = Some(format!("horizon not reached at tolerance; best candidate exits at s = {best_s_exit}"));
            return Ok(art);
        }
        Err(e) => return Err(e.into()),
    };
    // Scan exits are re-run with recording for the transversality check.
    for e in &result.scan {
        if matches!(e.outcome.exit_mode, Some(blowup_core::shooting::ExitMode::Bound(b)) if b.positive_mode().is_some()) {
            let (o, rec) = sim.classify_run(e.d0, e.d1, s_end)?;
            art.transverse.push((e.d0, transverse_check(&rec, &o).unwrap_or(false)));
        }
    }
    art.scan = result.scan;
    art.history = result.history;
    art.d0 = Some(result.d0);
    art.d1 = result.d1;
    if s_ext > s_end {
        let mut rec = TrajectoryRecord { d0: result.d0, d1: result.d1, grid: sim.grid().nodes().to_vec(), ..Default::default() };
        match extend_survivor(&sim, sim.initial_state(result.d0, result.d1), s_ext, &m.shooting, &mut rec) {
            Ok(_) => art.survived_to = s_ext,
            Err(ShootError::HorizonNotReached { best_s_exit, .. }) => {
                art.survived_to = best_s_exit;
                art.failure = Some(format!("staged continuation left the set at s = {best_s_exit}"));
            }
            Err(e) => return Err(e.into()),
        }
        art.record = rec;
    } else {
        art.survived_to = if result.outcome.survived { s_end } else { result.outcome.s_last };
        art.record = result.record;
    }
    Ok(art)
}

pub fn write_shoot(dir: &Path, art: &ShootArtifacts) -> Result<(), CliError> {
    let prov = Provenance::new(&art.params);
    let rows: Vec<String> = art.scan.iter().chain(&art.history).map(|e| e.csv_row()).collect();
    let path = dir.join("scan.csv");
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut text = format!("{}\n{}\n", prov.header_line(), ScanEntry::csv_header());
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    let transverse: Vec<_> = art.transverse.iter().map(|&(d0, ok)| TransverseRow { d0, transverse: ok }).collect();
    write_csv_with_header(&dir.join("transverse.csv"), &prov, "d0,transverse", &transverse)?;
    write_trajectory(dir, &prov, &art.record, &art.params)?;
    let max_ratio = art
        .record
        .modes
        .iter()
        .filter(|s| s.s <= art.s_end + 1e-9)
        .flat_map(|s| s.ratios())
        .fold(0.0, f64::max);
    let summary = FoundSummary {
        d0: art.d0,
        d1: art.d1,
        s_end: art.s_end,
        survived_to: art.survived_to,
        max_ratio_to_horizon: max_ratio,
        kicks: art.record.kicks.len(),
        transverse_exits: art.transverse.iter().filter(|t| t.1).count(),
        non_transverse_exits: art.transverse.iter().filter(|t| !t.1).count(),
        failure: art.failure.clone(),
    };
    write_json(&dir.join(RUN_JSON), &prov, &summary)
}

#[derive(Serialize)]
struct TransverseRow {
    d0: f64,
    transverse: bool,
}

pub fn cmd_shoot(m: &RunManifest, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = match validate_parameters(m.params.clone()) {
        Ok(p) => p,
        Err(e) => {
            say(out, format_args!("invalid parameters: {e}"));
            return Ok(EXIT_INVALID);
        }
    };
    let art = shoot(m, &params)?;
    write_shoot(&m.out, &art)?;
    match (&art.failure, art.d0) {
        (None, Some(d0)) => {
            say(out, format_args!("d0 = {d0:e}, d1 = {}; inside the set up to s = {}", art.d1, art.survived_to));
            Ok(EXIT_OK)
        }
        (msg, _) => {
            say(out, format_args!("no surviving candidate: {}", msg.as_deref().unwrap_or("unknown")));
            Ok(EXIT_NO_SURVIVOR)
        }
    }
}

pub fn cmd_analyze(m: &RunManifest, trajectory: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = validate_parameters(m.params.clone())?;
    let record = io::read_trajectory(trajectory)?;
    let v = verify::verify(&record, &params, m)?;
    verify::write_verification(&m.out, &params, &v)?;
    Ok(verify::summarize(&v.report, out))
}

/// validate, shoot, analyze, and the optional `eps1` comparison.
pub fn cmd_report(m: &RunManifest, out: &mut dyn Write) -> Result<i32, CliError> {
    let code = cmd_validate(m, out);
    if code != EXIT_OK {
        return Ok(code);
    }
    let params = validate_parameters(m.params.clone())?;
    let art = shoot(m, &params)?;
    write_shoot(&m.out, &art)?;
    if art.failure.is_some() {
        say(out, format_args!("no surviving candidate: {}", art.failure.as_deref().unwrap_or("")));
        return Ok(EXIT_NO_SURVIVOR);
    }
    let mut v = verify::verify(&art.record, &params, m)?;
    verify::add_transverse_gate(&mut v.report, &art.transverse);
    if let Some(e1) = m.analysis.compare_eps1 {
        let alt_params = params.with_eps1(e1)?;
        let alt = shoot(m, &alt_params)?;
        let alt_dir = m.out.join(format!("eps1_{e1}"));
        write_shoot(&alt_dir, &alt)?;
        verify::add_ordering_gate(&mut v, &alt.record, &alt_params, m);
    }
    verify::write_verification(&m.out, &params, &v)?;
    Ok(verify::summarize(&v.report, out))
}
