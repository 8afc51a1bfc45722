//! One line per acceptance criterion. Solver self-checks (1, 2, 3, 6, 11)
//! abort the target when they fail; the measured research rows (4, 5, 7, 8,
//! 9, 10) are printed as PASS or FAIL with their numbers.

use std::time::Instant;

use blowup_cli::manifest::RunManifest;
use blowup_cli::verify::{add_ordering_gate, add_transverse_gate, verify, Verification};
use blowup_cli::shoot;
use blowup_core::analysis::GateEntry;
use blowup_core::grid::{Field, Grid, GridSpec};
use blowup_core::params::{validate_parameters, Parameters, RawParameters};
use blowup_core::pde::{linear_propagate, smoke_orders};
use blowup_core::profile::Profile;
use blowup_core::spectral::{hermite_h, hermite_norm_sq, inner_product_rho, HermiteBasis};
use std::sync::Arc;

struct Line {
    id: u32,
    pass: bool,
    hard: bool,
    text: String,
}

fn line(id: u32, pass: bool, hard: bool, text: String) -> Line {
    println!("criterion {id:>2} {} {text}", if pass { "PASS" } else { "FAIL" });
    Line { id, pass, hard, text }
}

fn gates<'a>(v: &'a Verification, prefix: &[&str]) -> Vec<&'a GateEntry> {
    v.report.entries.iter().filter(|e| prefix.iter().any(|p| e.name.starts_with(p))).collect()
}

fn show(g: &[&GateEntry]) -> String {
    g.iter()
        .map(|e| format!("[{} {}: {:.4e} vs {:.4e}]", if e.pass { "ok" } else { "x" }, e.name, e.measured, e.target))
        .collect::<Vec<_>>()
        .join(" ")
}

fn spectral() -> Line {
    let b = HermiteBasis::<f64>::new(10, 64);
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    for n in 0..=10 {
        for m in 0..=10 {
            let ip = inner_product_rho(&|y| hermite_h(n, y), &|y| hermite_h(m, y), &b);
            let delta = if n == m { hermite_norm_sq(n) } else { 0.0 };
            worst_abs = worst_abs.max((ip - delta).abs());
            worst = worst.max((ip - delta).abs() / (hermite_norm_sq(n) * hermite_norm_sq(m)).sqrt());
        }
    }
    line(1, worst < 1e-10, true, format!("normalised Gram error {worst:.2e} (absolute {worst_abs:.2e}), n,m <= 10"))
}

fn eigenflow(p: &Parameters<f64>) -> Line {
    let g = Arc::new(
        Grid::graded(&GridSpec { half_width: 40.0, h0: 0.05, cap: 0.25, dense_zone: None, refine: 0 }).unwrap(),
    );
    let basis = HermiteBasis::<f64>::standard();
    let mut worst = 0.0f64;
    for m in 0..=2 {
        let h = Field::from_fn(g.clone(), |y| hermite_h(m, y));
        let out = linear_propagate(&h, p.s0, p.s0 + 1.0, p, false, 1e-2).unwrap();
        let lam = 1.0 - m as f64 / 2.0;
        worst = worst.max((basis.coefficient(&out, m) / lam.exp() - 1.0).abs());
    }
    line(2, worst < 1e-4, true, format!("relative error of e^(1-m/2) growth over one unit {worst:.2e}"))
}

fn profile_identity(p: &Parameters<f64>) -> Line {
    let pr = Profile::new(p);
    let worst = (0..=50_000).map(|k| pr.profile_ode_residual(k as f64 * 1e-3).abs()).fold(0.0, f64::max);
    line(3, worst < 1e-12, true, format!("sup |-z f'/2 - f/(p-1) + f^p| on [0, 50] = {worst:.2e}"))
}

fn orders(p: &Parameters<f64>) -> Line {
    let o = smoke_orders(p).unwrap();
    line(
        11,
        o.spatial >= 1.8 && o.temporal >= 0.9,
        true,
        format!("spatial {:.3}, temporal {:.3} (diffs {:?}, {:?})", o.spatial, o.temporal, o.spatial_diffs, o.temporal_diffs),
    )
}

fn main() {
    let t = Instant::now();
    let p = validate_parameters(RawParameters::<f64>::desk_default()).unwrap();
    let mut lines = vec![spectral(), eigenflow(&p), profile_identity(&p), orders(&p)];

    let mut m = RunManifest::default();
    m.s_extend = Some(10.0 * (p.s0 + 2.0));
    m.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let art = shoot(&m, &p).expect("shoot");
    let mut v = verify(&art.record, &p, &m).expect("verify");
    add_transverse_gate(&mut v.report, &art.transverse);

    let member = gates(&v, &["membership", "scan exits"]);
    lines.push(line(
        6,
        art.failure.is_none() && member.iter().all(|e| e.pass),
        true,
        format!("d0 = {:e}, d1 = {}; {}", art.d0.unwrap_or(f64::NAN), art.d1, show(&member)),
    ));
    let r = gates(&v, &["s sup|R|", "s^(5/2)", "s^(1-beta/2-eps1)"]);
    lines.push(line(4, r.iter().all(|e| e.pass), false, show(&r)));
    let n = gates(&v, &["e^(gamma s/2)"]);
    lines.push(line(5, n.iter().all(|e| e.pass), false, show(&n)));
    let modes = gates(&v, &["s^2 |v0'", "s^2 |v1'", "s^3 |v2'"]);
    lines.push(line(7, modes.iter().all(|e| e.pass), false, show(&modes)));

    let alt_p = p.with_eps1(0.5).unwrap();
    let alt = shoot(&m, &alt_p).expect("shoot at eps1 = 1/2");
    let alt_v = verify(&alt.record, &alt_p, &m).expect("verify at eps1 = 1/2");
    add_ordering_gate(&mut v, &alt.record, &alt_p, &m);
    let mut rates = gates(&v, &["exponent"]);
    let alt_rates = gates(&alt_v, &["exponent of sup (1+|y|^beta)|w - f|"]);
    let own = rates.iter().all(|e| e.pass);
    rates.extend(alt_rates);
    lines.push(line(8, own && rates.iter().all(|e| e.pass), false, format!("{} (second value row is eps1 = 1/2)", show(&rates))));

    let prof = gates(&v, &["final profile", "Cauchy"]);
    lines.push(line(9, !prof.is_empty() && prof.iter().all(|e| e.pass), false, show(&prof)));
    let wit = gates(&v, &["witness"]);
    lines.push(line(10, !wit.is_empty() && wit.iter().all(|e| e.pass), false, show(&wit)));

    lines.sort_by_key(|l| l.id);
    println!("summary after {:.0} s:", t.elapsed().as_secs_f64());
    for l in &lines {
        println!("  {:>2} {}", l.id, if l.pass { "PASS" } else { "FAIL" });
    }
    let broken: Vec<&Line> = lines.iter().filter(|l| l.hard && !l.pass).collect();
    if !broken.is_empty() {
        for l in &broken {
            eprintln!("self-check {} failed: {}", l.id, l.text);
        }
        std::process::exit(1);
    }
}
