//! Gates of the verification report and the plot tables behind them.

use std::io::Write;
use std::path::Path;

use blowup_core::analysis::{
    bounded_gate, exponent_gate, final_profile, gradient_blowup_witness, mode_ode_report,
    remainder_and_newterm_report, theorem1_error_rates, AnalysisError, FinalProfilePoint, GateEntry, ModeOdeReport,
    TermReport, ErrorRates, TrajectoryRecord, VerificationReport, WitnessFit,
};
use blowup_core::params::Parameters;
use serde::Serialize;

use crate::io::{write_csv, write_json, Provenance};
use crate::manifest::RunManifest;
use crate::{CliError, EXIT_GATES_FAILED, EXIT_OK};

pub const VALUE_TOL: f64 = 0.15;
pub const GRADIENT_TOL: f64 = 0.2;
pub const WITNESS_TOL: f64 = 0.05;
pub const WITNESS_CONSTANT_TOL: f64 = 0.3;
pub const PROFILE_BAND: (f64, f64) = (0.5, 2.0);
pub const ORDERING_GAP: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub report: VerificationReport,
    pub fit_window: (f64, f64),
    pub rates: Option<ErrorRates>,
    pub terms: TermReport,
    pub modes: ModeOdeReport,
    pub profile: Vec<FinalProfilePoint>,
    pub witness: Option<WitnessFit>,
}

/// Configured window, else `[s0 + 2, 10 (s0 + 2)]`, cut at the end of the
/// record.
pub fn fit_window(m: &RunManifest, params: &Parameters<f64>, record: &TrajectoryRecord) -> (f64, f64) {
    let (lo, hi) = m.analysis.fit_window.unwrap_or((params.s0 + 2.0, 10.0 * (params.s0 + 2.0)));
    let last = record.metrics.last().map_or(lo, |x| x.s);
    (lo, hi.min(last))
}

fn failed(name: &str, window: (f64, f64), note: String) -> GateEntry {
    GateEntry { name: name.into(), measured: f64::NAN, target: f64::NAN, tolerance: f64::NAN, window, pass: false, note }
}

/// `x` samples log-spaced over the decade below the largest `x` still
/// covered five units before the last snapshot.
pub fn profile_xs(record: &TrajectoryRecord, coverage: f64, n: usize) -> Vec<f64> {
    let (Some(last), Some(l)) = (record.snapshots.last(), record.grid.last()) else {
        return Vec::new();
    };
    let x_hi = coverage * l * (-(last.s - 5.0) / 2.0).exp();
    let n = n.max(2);
    (0..n).map(|k| x_hi * 10f64.powf(-(k as f64) / (n - 1) as f64)).collect()
}

pub fn verify(record: &TrajectoryRecord, params: &Parameters<f64>, m: &RunManifest) -> Result<Verification, CliError> {
    let a = &m.analysis;
    let limit = a.boundedness_limit;
    let mut report = VerificationReport::default();
    let s_end = crate::horizon(m, params);

    let max_ratio = record.modes.iter().filter(|x| x.s <= s_end + 1e-9).flat_map(|x| x.ratios()).fold(0.0, f64::max);
    let reached = record.modes.last().map_or(params.s0, |x| x.s);
    report.push(GateEntry {
        name: "membership ratios <= 1".into(),
        measured: max_ratio,
        target: 1.0,
        tolerance: 0.0,
        window: (params.s0, s_end),
        pass: max_ratio <= 1.0 && reached >= s_end - 1e-9,
        note: format!("record reaches s = {reached}"),
    });

    let terms = remainder_and_newterm_report(record, params, a.remainder_window);
    for row in terms.rows() {
        report.push(bounded_gate(row, limit));
    }

    let modes = mode_ode_report(record);
    report.push(bounded_gate(&modes.mode0, limit));
    report.push(bounded_gate(&modes.mode2, limit));
    if modes.mode1.identically_zero {
        report.skipped.push(format!("{}: identically zero (even data)", modes.mode1.quantity));
    } else {
        report.push(bounded_gate(&modes.mode1, limit));
    }

    let window = fit_window(m, params, record);
    let rates = match theorem1_error_rates(record, params, window) {
        Ok(r) => {
            report.push(exponent_gate("exponent of sup (1+|y|^beta)|w - f|", &r.value_fit, r.target, VALUE_TOL));
            report.push(exponent_gate("exponent of sup (1+|y|^beta)|d_y(w - f)|", &r.gradient_fit, r.target, GRADIENT_TOL));
            Some(r)
        }
        Err(e) => {
            report.push(failed("exponent of sup (1+|y|^beta)|w - f|", window, e.to_string()));
            report.push(failed("exponent of sup (1+|y|^beta)|d_y(w - f)|", window, e.to_string()));
            None
        }
    };

    let xs = profile_xs(record, a.coverage, a.x_points);
    let profile = final_profile(record, &xs, params, a.coverage).unwrap_or_default();
    if profile.is_empty() {
        report.push(failed("final profile ratio", (0.0, 0.0), "no covered x".into()));
    } else {
        let worst = profile.iter().map(|p| p.ratio).fold(1.0f64, |w, r| if r.ln().abs() > w.ln().abs() { r } else { w });
        let in_band = profile.iter().all(|p| p.ratio >= PROFILE_BAND.0 && p.ratio <= PROFILE_BAND.1);
        let xw = (xs[xs.len() - 1], xs[0]);
        report.push(GateEntry {
            name: "final profile ratio in [0.5, 2]".into(),
            measured: worst,
            target: 1.0,
            tolerance: 1.0,
            window: xw,
            pass: in_band,
            note: "worst ratio over the covered decade of |x|".into(),
        });
        let decreasing = profile.iter().filter(|p| p.increments_decreasing(4)).count();
        report.push(GateEntry {
            name: "Cauchy increments decrease in s".into(),
            measured: decreasing as f64,
            target: profile.len() as f64,
            tolerance: 0.0,
            window: xw,
            pass: decreasing == profile.len(),
            note: "count of x whose last four increments decrease".into(),
        });
        let g: Vec<(f64, f64)> = profile.iter().map(|p| (p.x, p.grad_scaled)).collect();
        let gmax = g.iter().map(|p| p.1).fold(0.0, f64::max);
        let gmin = g.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        report.push(GateEntry {
            name: "final gradient bound".into(),
            measured: gmax / gmin,
            target: 1.0,
            tolerance: limit,
            window: xw,
            pass: (gmax / gmin).is_finite() && gmax / gmin < limit,
            note: "max/min of |u*_x| |x|^((p+1)/(p-1)) |log|x||^-((p+1)/(2(p-1)) - alpha)".into(),
        });
    }

    let witness = match gradient_blowup_witness(record, params, window) {
        Ok(w) => {
            report.push(GateEntry {
                name: "witness exponent of T - t".into(),
                measured: w.exponent,
                target: w.expected_exponent,
                tolerance: WITNESS_TOL,
                window,
                pass: (w.exponent - w.expected_exponent).abs() <= WITNESS_TOL,
                note: format!("rms log residual {:.3e}", w.residual),
            });
            let rel = w.limit_constant / w.reference;
            report.push(GateEntry {
                name: "witness constant / |f'(1)|".into(),
                measured: rel,
                target: 1.0,
                tolerance: WITNESS_CONSTANT_TOL,
                window,
                pass: (rel - 1.0).abs() <= WITNESS_CONSTANT_TOL,
                note: format!("limit {:.5e}, |f'(1)| {:.5e}", w.limit_constant, w.reference),
            });
            report.push(GateEntry {
                name: "witness gradient increases".into(),
                measured: if w.monotone { 1.0 } else { 0.0 },
                target: 1.0,
                tolerance: 0.0,
                window,
                pass: w.monotone,
                note: String::new(),
            });
            Some(w)
        }
        Err(AnalysisError::ConditionNotMet) => {
            report.skipped.push("gradient witness: eps1 > 1/2 - beta/2".into());
            None
        }
        Err(e) => {
            report.push(failed("witness exponent of T - t", window, e.to_string()));
            None
        }
    };

    Ok(Verification { report, fit_window: window, rates, terms, modes, profile, witness })
}

pub fn add_transverse_gate(report: &mut VerificationReport, transverse: &[(f64, bool)]) {
    let bad = transverse.iter().filter(|t| !t.1).count();
    report.push(GateEntry {
        name: "scan exits are transverse".into(),
        measured: bad as f64,
        target: 0.0,
        tolerance: 0.0,
        window: (-2.0, 2.0),
        pass: bad == 0 && !transverse.is_empty(),
        note: format!("{} exits on expanding modes checked", transverse.len()),
    });
}

/// `exponent(eps1) - exponent(other eps1) > 0.1` on the same window.
pub fn add_ordering_gate(v: &mut Verification, other: &TrajectoryRecord, other_params: &Parameters<f64>, m: &RunManifest) {
    let window = v.fit_window;
    let name = format!("exponent gap against eps1 = {}", other_params.eps1);
    let fit = theorem1_error_rates(other, other_params, (window.0, window.1.min(fit_window(m, other_params, other).1)));
    match (&v.rates, fit) {
        (Some(mine), Ok(theirs)) => {
            let gap = mine.value_fit.exponent - theirs.value_fit.exponent;
            v.report.push(GateEntry {
                name,
                measured: gap,
                target: ORDERING_GAP,
                tolerance: 0.0,
                window,
                pass: gap > ORDERING_GAP,
                note: format!(
                    "exponents {:.4} vs {:.4}; targets {:.4} vs {:.4}",
                    mine.value_fit.exponent,
                    theirs.value_fit.exponent,
                    mine.target,
                    theirs.target
                ),
            });
        }
        (_, Err(e)) => v.report.push(failed(&name, window, e.to_string())),
        (None, _) => v.report.push(failed(&name, window, "no fit for this run".into())),
    }
}

#[derive(Serialize)]
struct FitRow<'a> {
    quantity: &'a str,
    s: f64,
    value: f64,
}

#[derive(Serialize)]
struct ProfileRow {
    x: f64,
    s_last: f64,
    u_star: f64,
    target: f64,
    ratio: f64,
    last_increment: f64,
    grad_scaled: f64,
}

pub fn write_verification(dir: &Path, params: &Parameters<f64>, v: &Verification) -> Result<(), CliError> {
    let prov = Provenance::new(params);
    write_json(&dir.join("report.json"), &prov, v)?;
    let mut fits = Vec::new();
    if let Some(r) = &v.rates {
        for f in [&r.value_fit, &r.gradient_fit] {
            fits.extend(f.samples.iter().map(|&(s, value)| FitRow { quantity: &f.quantity, s, value }));
        }
    }
    if let Some(w) = &v.witness {
        fits.extend(w.samples.iter().map(|&(s, value)| FitRow { quantity: "witness w_y(sqrt s)", s, value }));
    }
    write_csv(&dir.join("fits.csv"), &prov, &fits)?;
    let rows: Vec<ProfileRow> = v
        .profile
        .iter()
        .map(|p| ProfileRow {
            x: p.x,
            s_last: p.s_last,
            u_star: p.u_star,
            target: p.target,
            ratio: p.ratio,
            last_increment: p.increments.last().copied().unwrap_or(f64::NAN),
            grad_scaled: p.grad_scaled,
        })
        .collect();
    write_csv(&dir.join("final_profile.csv"), &prov, &rows)
}

/// One line per gate; 0 when every gate passes, 4 otherwise.
pub fn summarize(report: &VerificationReport, out: &mut dyn Write) -> i32 {
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{} {}: measured {:.5e} (target {:.5e}, tol {:.3e}) {}",
            if e.pass { "PASS" } else { "FAIL" },
            e.name,
            e.measured,
            e.target,
            e.tolerance,
            e.note
        );
    }
    for s in &report.skipped {
        let _ = writeln!(out, "SKIP {s}");
    }
    let failed = report.failed();
    if failed.is_empty() {
        EXIT_OK
    } else {
        let names: Vec<&str> = failed.iter().map(|e| e.name.as_str()).collect();
        let _ = writeln!(out, "failed gates: {}", names.join("; "));
        EXIT_GATES_FAILED
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use blowup_core::analysis::{MetricSample, Snapshot};

    fn record(s_last: f64) -> TrajectoryRecord {
        let grid = vec![-10.0, -5.0, 0.0, 5.0, 10.0];
        let snapshots = (20..=s_last as usize).map(|s| Snapshot { s: s as f64, v: vec![0.0; 5] }).collect();
        let metrics = vec![MetricSample { s: 20.0, ..Default::default() }, MetricSample { s: s_last, ..Default::default() }];
        TrajectoryRecord { grid, snapshots, metrics, ..Default::default() }
    }

    #[test]
    fn fit_window_defaults_to_a_decade_and_is_cut_at_the_record() {
        let p = blowup_core::params::validate_parameters(blowup_core::params::RawParameters::desk_default()).unwrap();
        let m = RunManifest::default();
        assert_eq!(fit_window(&m, &p, &record(300.0)), (22.0, 220.0));
        assert_eq!(fit_window(&m, &p, &record(30.0)), (22.0, 30.0));
    }

    #[test]
    fn profile_xs_span_one_decade_inside_coverage() {
        let rec = record(40.0);
        let xs = profile_xs(&rec, 0.9, 5);
        assert_eq!(xs.len(), 5);
        let hi = 0.9 * 10.0 * (-(40.0 - 5.0) / 2.0f64).exp();
        assert!((xs[0] / hi - 1.0).abs() < 1e-12);
        assert!((xs[0] / xs[4] - 10.0).abs() < 1e-9);
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
        assert!(profile_xs(&TrajectoryRecord::default(), 0.9, 5).is_empty());
    }

    #[test]
    fn summary_exit_code_tracks_failures() {
        let gate = |pass| GateEntry {
            name: "g".into(),
            measured: 1.0,
            target: 1.0,
            tolerance: 0.0,
            window: (0.0, 1.0),
            pass,
            note: String::new(),
        };
        let mut r = VerificationReport::default();
        r.push(gate(true));
        let mut out = Vec::new();
        assert_eq!(summarize(&r, &mut out), EXIT_OK);
        r.push(gate(false));
        r.skipped.push("x".into());
        let mut out = Vec::new();
        assert_eq!(summarize(&r, &mut out), EXIT_GATES_FAILED);
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("FAIL g") && text.contains("SKIP x") && text.contains("failed gates: g"));
    }
}
