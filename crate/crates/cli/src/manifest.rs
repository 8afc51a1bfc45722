//! Run manifests: `key = value` lines, `#` starts a comment. A
//! `parameters = PATH` line pulls in another file of the same format,
//! resolved relative to the including file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use blowup_core::params::RawParameters;
use blowup_core::shooting::{ShootingSettings, SimulationSettings};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("`{key}` = {value} outside {range}")]
    OutOfRange { key: String, value: f64, range: &'static str },
}

/// Window settings for the post-processing stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisSettings {
    /// Rate-fit window; `None` means `[s0 + 2, 10 (s0 + 2)]`.
    pub fit_window: Option<(f64, f64)>,
    pub remainder_window: (f64, f64),
    /// Fraction of the half-width usable for the final profile.
    pub coverage: f64,
    /// Number of `x` samples per covered decade.
    pub x_points: usize,
    pub boundedness_limit: f64,
    /// When set, `report` repeats the run at this `eps1` and checks the
    /// exponent ordering.
    pub compare_eps1: Option<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            fit_window: None,
            remainder_window: (20.0, 200.0),
            coverage: 0.9,
            x_points: 8,
            boundedness_limit: 10.0,
            compare_eps1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub source: Option<PathBuf>,
    pub params: RawParameters<f64>,
    pub simulation: SimulationSettings,
    pub shooting: ShootingSettings,
    pub analysis: AnalysisSettings,
    /// Survival horizon; `None` means `s0 + 10`.
    pub s_end: Option<f64>,
    /// Target of the staged continuation; `None` means no continuation.
    pub s_extend: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
    /// Relative jitter of interior scan points (fraction of the spacing).
    pub jitter: f64,
    pub workers: usize,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            source: None,
            params: RawParameters::desk_default(),
            simulation: SimulationSettings::default(),
            shooting: ShootingSettings::default(),
            analysis: AnalysisSettings::default(),
            s_end: None,
            s_extend: None,
            out: PathBuf::from("out"),
            seed: 0,
            jitter: 0.0,
            workers: 1,
        }
    }
}

fn read_pairs(path: &Path, depth: usize, into: &mut BTreeMap<String, String>) -> Result<(), ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ManifestError::Syntax { path: path.into(), line: k + 1 })?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key == "parameters" && depth < 4 {
            let inc = path.parent().unwrap_or(Path::new(".")).join(&value);
            read_pairs(&inc, depth + 1, into)?;
        } else {
            into.insert(key, value);
        }
    }
    Ok(())
}

fn num(key: &str, v: &str) -> Result<f64, ManifestError> {
    v.parse::<f64>().map_err(|_| ManifestError::BadValue { key: key.into(), value: v.into() })
}

fn int(key: &str, v: &str) -> Result<u64, ManifestError> {
    v.parse::<u64>().map_err(|_| ManifestError::BadValue { key: key.into(), value: v.into() })
}

fn check(key: &str, value: f64, ok: bool, range: &'static str) -> Result<(), ManifestError> {
    if ok {
        Ok(())
    } else {
        Err(ManifestError::OutOfRange { key: key.into(), value, range })
    }
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self, ManifestError> {
        let mut pairs = BTreeMap::new();
        read_pairs(path, 0, &mut pairs)?;
        let mut m = Self::from_pairs(&pairs)?;
        m.source = Some(path.to_path_buf());
        Ok(m)
    }

    pub fn from_text(text: &str) -> Result<Self, ManifestError> {
        let dir = parse_text(text)?;
        Self::from_pairs(&dir)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ManifestError> {
        let mut m = Self::default();
        m.params.eps = None;
        for (key, v) in pairs {
            let k = key.as_str();
            let p = &mut m.params;
            match k {
                "p" => p.p = Some(num(k, v)?),
                "q" => p.q = Some(num(k, v)?),
                "mu" => p.mu = Some(num(k, v)?),
                "dim" => p.dim = Some(int(k, v)? as usize),
                "beta" => p.beta = Some(num(k, v)?),
                "eps1" => p.eps1 = Some(num(k, v)?),
                "alpha" => p.alpha = Some(num(k, v)?),
                "eps" => p.eps = Some(num(k, v)?),
                "k0" => p.k0 = Some(num(k, v)?),
                "a_const" | "A" => p.a_const = Some(num(k, v)?),
                "s0" => p.s0 = Some(num(k, v)?),
                "t_blowup" => p.t_blowup = Some(num(k, v)?),
                "ds" => m.simulation.ds = num(k, v)?,
                "h0" => m.simulation.h0 = num(k, v)?,
                "cap" => m.simulation.cap = num(k, v)?,
                "extent_factor" => m.simulation.extent_factor = num(k, v)?,
                "quadrature_order" => m.simulation.quadrature_order = int(k, v)? as usize,
                "refine" => m.simulation.refine = int(k, v)? as u32,
                "snapshot_every" => m.simulation.snapshot_every = num(k, v)?,
                "metric_every" => m.simulation.metric_every = int(k, v)? as usize,
                "scan_points" => m.shooting.scan_points = int(k, v)? as usize,
                "tolerance" => m.shooting.tolerance = num(k, v)?,
                "lookahead" => m.shooting.lookahead = num(k, v)?,
                "stage" => m.shooting.stage = num(k, v)?,
                "stage_lookahead" => m.shooting.stage_lookahead = num(k, v)?,
                "kick_range" => m.shooting.kick_range = num(k, v)?,
                "kick_tolerance" => m.shooting.kick_tolerance = num(k, v)?,
                "fit_lo" => m.analysis.fit_window = Some((num(k, v)?, m.analysis.fit_window.map_or(f64::NAN, |w| w.1))),
                "fit_hi" => m.analysis.fit_window = Some((m.analysis.fit_window.map_or(f64::NAN, |w| w.0), num(k, v)?)),
                "remainder_lo" => m.analysis.remainder_window.0 = num(k, v)?,
                "remainder_hi" => m.analysis.remainder_window.1 = num(k, v)?,
                "coverage" => m.analysis.coverage = num(k, v)?,
                "x_points" => m.analysis.x_points = int(k, v)? as usize,
                "boundedness_limit" => m.analysis.boundedness_limit = num(k, v)?,
                "compare_eps1" => m.analysis.compare_eps1 = Some(num(k, v)?),
                "s_end" => m.s_end = Some(num(k, v)?),
                "s_extend" => m.s_extend = Some(num(k, v)?),
                "out" => m.out = PathBuf::from(v),
                "seed" => m.seed = int(k, v)?,
                "jitter" => m.jitter = num(k, v)?,
                "workers" => m.workers = int(k, v)? as usize,
                _ => return Err(ManifestError::UnknownKey(key.clone())),
            }
        }
        if let Some((lo, hi)) = m.analysis.fit_window {
            if lo.is_nan() || hi.is_nan() {
                return Err(ManifestError::BadValue { key: "fit_lo/fit_hi".into(), value: "both required".into() });
            }
        }
        m.check_ranges()?;
        Ok(m)
    }

    /// Settings ranges; parameter inequalities are checked by validation.
    pub fn check_ranges(&self) -> Result<(), ManifestError> {
        let s = &self.simulation;
        check("ds", s.ds, s.ds > 0.0 && s.ds <= 0.1, "(0, 0.1]")?;
        check("h0", s.h0, s.h0 > 0.0 && s.h0 <= 1.0, "(0, 1]")?;
        check("cap", s.cap, s.cap >= s.h0 && s.cap <= 2.0, "[h0, 2]")?;
        check("extent_factor", s.extent_factor, s.extent_factor >= 2.0, ">= 2")?;
        let qo = s.quadrature_order as f64;
        check("quadrature_order", qo, (16..=200).contains(&s.quadrature_order), "[16, 200]")?;
        check("refine", s.refine as f64, s.refine <= 4, "[0, 4]")?;
        check("jitter", self.jitter, (0.0..0.5).contains(&self.jitter), "[0, 0.5)")?;
        check("workers", self.workers as f64, self.workers >= 1, ">= 1")?;
        check("coverage", self.analysis.coverage, self.analysis.coverage > 0.0 && self.analysis.coverage <= 1.0, "(0, 1]")?;
        Ok(())
    }
}

fn parse_text(text: &str) -> Result<BTreeMap<String, String>, ManifestError> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| ManifestError::Syntax { path: PathBuf::from("<string>"), line: k + 1 })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let m = RunManifest::from_text("p = 5 # exponent\n\n# full comment\nbeta=0.3\nds = 0.005\nseed = 7\n").unwrap();
        assert_eq!(m.params.p, Some(5.0));
        assert_eq!(m.params.beta, Some(0.3));
        assert_eq!(m.params.eps, None);
        assert_eq!(m.simulation.ds, 0.005);
        assert_eq!(m.seed, 7);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunManifest::from_text("bogus = 1"), Err(ManifestError::UnknownKey(_))));
        assert!(matches!(RunManifest::from_text("p 5"), Err(ManifestError::Syntax { .. })));
        assert!(matches!(RunManifest::from_text("p = five"), Err(ManifestError::BadValue { .. })));
        assert!(matches!(RunManifest::from_text("ds = 0.5"), Err(ManifestError::OutOfRange { .. })));
        assert!(matches!(RunManifest::from_text("fit_lo = 22"), Err(ManifestError::BadValue { .. })));
    }

    #[test]
    fn includes_parameter_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.cfg"), "p = 7\nq = 6\n").unwrap();
        std::fs::write(dir.path().join("run.cfg"), "parameters = p.cfg\nq = 5\n").unwrap();
        let m = RunManifest::from_file(&dir.path().join("run.cfg")).unwrap();
        assert_eq!(m.params.p, Some(7.0));
        assert_eq!(m.params.q, Some(5.0));
    }
}
