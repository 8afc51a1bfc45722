//! Output files: CSV series and JSON summaries, each with a provenance
//! header, and the reader that turns a trajectory directory back into a
//! record.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use blowup_core::analysis::{Kick, MetricSample, ModeSample, Snapshot, TrajectoryRecord};
use blowup_core::params::Parameters;
use blowup_core::profile::Profile;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = concat!("blowup ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub params_sha256: String,
}

impl Provenance {
    pub fn new(params: &Parameters<f64>) -> Self {
        let canon = serde_json::to_string(params).expect("parameters serialize");
        let digest = Sha256::digest(canon.as_bytes());
        Self { version: VERSION.to_string(), params_sha256: hex::encode(digest) }
    }

    pub fn header_line(&self) -> String {
        format!("# {} params-sha256={}", self.version, self.params_sha256)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

/// Serializes `rows` as CSV under a `#` provenance line.
pub fn write_csv<R: Serialize>(path: &Path, prov: &Provenance, rows: &[R]) -> Result<(), CliError> {
    let mut f = create(path)?;
    writeln!(f, "{}", prov.header_line()).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Header-only CSV when there are no rows yet.
pub fn write_csv_with_header<R: Serialize>(path: &Path, prov: &Provenance, header: &str, rows: &[R]) -> Result<(), CliError> {
    if rows.is_empty() {
        let mut f = create(path)?;
        writeln!(f, "{}\n{}", prov.header_line(), header).map_err(|e| CliError::io(path, e))?;
        return Ok(());
    }
    write_csv(path, prov, rows)
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> Result<(), CliError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, &WithProvenance { provenance: prov, body })?;
    writeln!(f).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SnapshotRow {
    s: f64,
    y: f64,
    v: f64,
    w: f64,
    dv: f64,
}

pub const MODES_CSV: &str = "modes.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SNAPSHOTS_CSV: &str = "snapshots.csv";
pub const KICKS_CSV: &str = "kicks.csv";
pub const RUN_JSON: &str = "run.json";
pub const SCHEMA_TXT: &str = "schema.txt";

pub const SCHEMA: &str = "\
# Column reference for the CSV outputs. Every file starts with one
# `# blowup <version> params-sha256=<hash>` line.

modes.csv         one row per time step
  s               similarity time
  v0, v1, v2      projections on h0 = 1, h1 = y, h2 = y^2 - 2
  minus_norm      sup |v_-| / (1 + |y|^3)
  outer_sup       sup |v_e|
  outer_weighted  sup (1 + |y|^beta) |v_e|
  r_*             measured / bound for g0, g1, g2, g_minus, g_e, g_e_weighted

metrics.csv       every metric_every steps
  n0, n1          sup (1 + |y|^beta) |v|, sup (1 + |y|^beta) |v_y|
  err_u           sup (1 + |y|^beta) |w - f(y / sqrt s)|
  err_grad        sup (1 + |y|^beta) |w_y - f'(y / sqrt s) / sqrt s|
  sup_n           sup |N|
  sup_n_outer_weighted  sup (1 + |y|^beta) |N (1 - chi)|
  witness_dyw     w_y at y = sqrt s
  w_center        w(0, s)

snapshots.csv     every snapshot_every units of s
  s, y, v, w, dv  w = v + phi, dv = centered difference of v

kicks.csv         staged continuation
  s, delta        v += delta (A / s^2) chi(2y, s) at s

scan.csv          coarse scan and bisection candidates
  d0, d1, s_exit, exit_mode, exit_sign
  exit_mode is g0 .. g_e_weighted, numerical, or empty for survivors

final_profile.csv
  x, s_last, u_star, target, ratio, last_increment, grad_scaled

fits.csv          rate-fit samples
  quantity, s, value
";

pub fn write_schema(dir: &Path, prov: &Provenance) -> Result<(), CliError> {
    let path = dir.join(SCHEMA_TXT);
    let mut f = create(&path)?;
    write!(f, "{}\n{}", prov.header_line(), SCHEMA).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

/// Writes modes, metrics, snapshots and kicks of `record` into `dir`.
pub fn write_trajectory(dir: &Path, prov: &Provenance, record: &TrajectoryRecord, params: &Parameters<f64>) -> Result<(), CliError> {
    write_csv(&dir.join(MODES_CSV), prov, &record.modes)?;
    write_csv(&dir.join(METRICS_CSV), prov, &record.metrics)?;
    write_csv_with_header(&dir.join(KICKS_CSV), prov, "s,delta", &record.kicks)?;
    let prof = Profile::new(params);
    let grid = blowup_core::grid::Grid::from_nodes(record.grid.clone()).map_err(CliError::other)?;
    let mut rows = Vec::with_capacity(record.snapshots.len() * record.grid.len());
    for sn in &record.snapshots {
        let dv = grid.derivative(&sn.v);
        for (i, &y) in record.grid.iter().enumerate() {
            rows.push(SnapshotRow { s: sn.s, y, v: sn.v[i], w: sn.v[i] + prof.phi(y, sn.s), dv: dv[i] });
        }
    }
    write_csv_with_header(&dir.join(SNAPSHOTS_CSV), prov, "s,y,v,w,dv", &rows)?;
    write_schema(dir, prov)
}

/// Reads a directory written by [`write_trajectory`].
pub fn read_trajectory(dir: &Path) -> Result<TrajectoryRecord, CliError> {
    let modes: Vec<ModeSample> = read_csv(&dir.join(MODES_CSV))?;
    let metrics: Vec<MetricSample> = read_csv(&dir.join(METRICS_CSV))?;
    let kicks: Vec<Kick> = read_csv(&dir.join(KICKS_CSV))?;
    let rows: Vec<SnapshotRow> = read_csv(&dir.join(SNAPSHOTS_CSV))?;
    let mut by_s: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_s.entry(r.s.to_bits()).or_insert((r.s, Vec::new(), Vec::new()));
        e.1.push(r.y);
        e.2.push(r.v);
    }
    let mut snaps: Vec<(f64, Vec<f64>, Vec<f64>)> = by_s.into_values().collect();
    snaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grid = snaps.first().map(|s| s.1.clone()).unwrap_or_default();
    let (mut d0, mut d1) = (0.0, 0.0);
    if let Ok(text) = std::fs::read_to_string(dir.join(RUN_JSON)) {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
            d0 = v["d0"].as_f64().unwrap_or(0.0);
            d1 = v["d1"].as_f64().unwrap_or(0.0);
        }
    }
    Ok(TrajectoryRecord {
        d0,
        d1,
        grid,
        modes,
        metrics,
        snapshots: snaps.into_iter().map(|(s, _, v)| Snapshot { s, v }).collect(),
        kicks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use blowup_core::params::{validate_parameters, RawParameters};
    use blowup_core::shooting::{Simulation, SimulationSettings};

    #[test]
    fn trajectory_round_trips_through_csv() {
        let p = validate_parameters(RawParameters::desk_default()).unwrap();
        let settings = SimulationSettings { snapshot_every: 0.25, metric_every: 5, ..Default::default() };
        let sim = Simulation::new(&p, settings, 21.0).unwrap();
        let mut rec = TrajectoryRecord { d0: 0.3, grid: sim.grid().nodes().to_vec(), ..Default::default() };
        sim.run(sim.initial_state(0.3, 0.0), 20.5, false, Some(&mut rec)).unwrap();
        rec.kicks.push(Kick { s: 20.25, delta: -1.5e-4 });

        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new(&p);
        write_trajectory(dir.path(), &prov, &rec, &p).unwrap();
        std::fs::write(dir.path().join(RUN_JSON), "{\"d0\": 0.3, \"d1\": 0.0}").unwrap();
        let back = read_trajectory(dir.path()).unwrap();
        assert_eq!(back, rec);

        for f in [MODES_CSV, METRICS_CSV, SNAPSHOTS_CSV, KICKS_CSV] {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
            assert_eq!(text.lines().next().unwrap(), prov.header_line());
        }
        assert!(dir.path().join(SCHEMA_TXT).exists());
    }

    #[test]
    fn hash_follows_parameters() {
        let p = validate_parameters(RawParameters::desk_default()).unwrap();
        let q = p.with_eps1(0.5).unwrap();
        assert_eq!(Provenance::new(&p), Provenance::new(&p));
        assert_ne!(Provenance::new(&p).params_sha256, Provenance::new(&q).params_sha256);
        assert_eq!(Provenance::new(&p).params_sha256.len(), 64);
    }
}
