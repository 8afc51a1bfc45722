//! The shrinking set: bounds on the five decomposition components and the
//! weighted `W^{1,inf}_beta` norms.

use serde::{Deserialize, Serialize};

use crate::grid::Field;
use crate::params::Parameters;
use crate::scalar::{c, Real};
use crate::spectral::{blowup_cutoff_chi, project_minus_norm, ModeDecomposition};

/// Width of the "on the boundary" band below ratio 1.
pub const BOUNDARY_BAND: f64 = 1e-9;

/// The six bounds, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bound {
    Mode0,
    Mode1,
    Mode2,
    Minus,
    OuterPlain,
    OuterWeighted,
}

impl Bound {
    pub const ALL: [Bound; 6] =
        [Bound::Mode0, Bound::Mode1, Bound::Mode2, Bound::Minus, Bound::OuterPlain, Bound::OuterWeighted];

    pub fn label(self) -> &'static str {
        match self {
            Bound::Mode0 => "g0",
            Bound::Mode1 => "g1",
            Bound::Mode2 => "g2",
            Bound::Minus => "g_minus",
            Bound::OuterPlain => "g_e",
            Bound::OuterWeighted => "g_e_weighted",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == s)
    }

    /// Index of the eigenmode for `Mode0` / `Mode1`.
    pub fn positive_mode(self) -> Option<usize> {
        match self {
            Bound::Mode0 => Some(0),
            Bound::Mode1 => Some(1),
            _ => None,
        }
    }
}

/// Right-hand sides of the six inequalities at time `s`.
pub fn bound_values<T: Real>(s: T, params: &Parameters<T>) -> [T; 6] {
    let a = params.a_const;
    let e1 = params.eps1;
    let s2 = s * s;
    [
        a / s2,
        a / s2,
        a * a * s.ln() / s2,
        a / s.powf(c::<T>(2.5) - e1),
        a * a / s.powf(T::one() - e1),
        a * a / s.powf(params.rate_exponent()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport<T> {
    pub s: T,
    pub inside: bool,
    pub on_boundary: bool,
    /// `|measured| / bound`, in [`Bound::ALL`] order.
    pub ratios: [T; 6],
    pub exit_mode: Option<Bound>,
}

impl<T: Real> MembershipReport<T> {
    pub fn ratio(&self, b: Bound) -> T {
        self.ratios[b as usize]
    }

    pub fn max_ratio(&self) -> T {
        self.ratios.iter().fold(T::zero(), |m, &r| m.max(r))
    }

    /// Bound with the largest ratio; earlier bounds win ties.
    pub fn dominant(&self) -> Bound {
        let mut best = Bound::Mode0;
        for b in Bound::ALL {
            if self.ratio(b) > self.ratio(best) {
                best = b;
            }
        }
        best
    }

    pub fn csv_header() -> &'static str {
        "s,inside,on_boundary,r_g0,r_g1,r_g2,r_g_minus,r_g_e,r_g_e_weighted,exit_mode"
    }

    pub fn csv_row(&self) -> String {
        let r: Vec<String> = self.ratios.iter().map(|x| format!("{:e}", x.to_f64_lossy())).collect();
        format!(
            "{},{},{},{},{}",
            self.s,
            self.inside,
            self.on_boundary,
            r.join(","),
            self.exit_mode.map_or("", |b| b.label())
        )
    }
}

/// The six measured quantities in [`Bound::ALL`] order.
pub fn measured<T: Real>(dec: &ModeDecomposition<T>, params: &Parameters<T>) -> [T; 6] {
    let beta = params.beta;
    [
        dec.v0.abs(),
        dec.v1.abs(),
        dec.v2.abs(),
        project_minus_norm(dec),
        dec.v_e.sup(),
        dec.v_e.weighted_sup(|y| T::one() + y.abs().powf(beta)),
    ]
}

pub fn membership<T: Real>(dec: &ModeDecomposition<T>, s: T, params: &Parameters<T>) -> MembershipReport<T> {
    let m = measured(dec, params);
    let b = bound_values(s, params);
    let mut ratios = [T::zero(); 6];
    for i in 0..6 {
        ratios[i] = m[i] / b[i];
    }
    let inside = ratios.iter().all(|&r| r <= T::one());
    let band = T::one() - c::<T>(BOUNDARY_BAND);
    let on_boundary = inside && ratios.iter().any(|&r| r >= band);
    let mut report = MembershipReport { s, inside, on_boundary, ratios, exit_mode: None };
    if !inside {
        report.exit_mode = Some(report.dominant());
    }
    report
}

/// `(sup (1+|y|^beta)|g|, sup (1+|y|^beta)|g_y|)`
pub fn weighted_norm_beta<T: Real>(g: &Field<T>, grad_g: &Field<T>, params: &Parameters<T>) -> (T, T) {
    let beta = params.beta;
    let w = |y: T| T::one() + y.abs().powf(beta);
    (g.weighted_sup(w), grad_g.weighted_sup(w))
}

/// Sup norms of the reassembled field: inner (`|y| <= 2 K0 sqrt s`) and
/// global, plain and `(1+|y|^beta)`-weighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupBounds<T> {
    pub inner: T,
    pub global: T,
    pub inner_weighted: T,
    pub global_weighted: T,
}

pub fn derived_sup_bounds<T: Real>(dec: &ModeDecomposition<T>, s: T, params: &Parameters<T>) -> SupBounds<T> {
    let g = dec.reconstruct();
    let radius = c::<T>(2.0) * params.k0 * s.sqrt();
    let beta = params.beta;
    let mut out = SupBounds { inner: T::zero(), global: T::zero(), inner_weighted: T::zero(), global_weighted: T::zero() };
    for (&y, &v) in g.grid().nodes().iter().zip(g.values()) {
        let a = v.abs();
        let aw = a * (T::one() + y.abs().powf(beta));
        out.global = out.global.max(a);
        out.global_weighted = out.global_weighted.max(aw);
        if y.abs() <= radius {
            out.inner = out.inner.max(a);
            out.inner_weighted = out.inner_weighted.max(aw);
        }
    }
    out
}

/// A field `amp * h0 * chi` used by tests and diagnostics.
pub fn mode0_bump<T: Real>(grid: &std::sync::Arc<crate::grid::Grid<T>>, amp: T, s: T, k0: T) -> Field<T> {
    Field::from_fn(grid.clone(), |y| amp * blowup_cutoff_chi(y, s, k0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use crate::params::{validate_parameters, RawParameters};
    use crate::spectral::{decompose, HermiteBasis};
    use std::sync::Arc;

    fn setup() -> (Parameters<f64>, Arc<Grid<f64>>, HermiteBasis<f64>) {
        let p = validate_parameters(RawParameters::desk_default()).unwrap();
        let g = Arc::new(
            Grid::graded(&GridSpec { half_width: 40.0, h0: 0.05, cap: 0.25, dense_zone: None, refine: 0 })
                .unwrap(),
        );
        (p, g, HermiteBasis::standard())
    }

    #[test]
    fn zero_field_is_inside() {
        let (p, g, b) = setup();
        let dec = decompose(&Field::zeros(g), 20.0, &b, p.k0).unwrap();
        let r = membership(&dec, 20.0, &p);
        assert!(r.inside && !r.on_boundary && r.exit_mode.is_none());
        assert_eq!(r.ratios, [0.0; 6]);
        let sb = derived_sup_bounds(&dec, 20.0, &p);
        assert_eq!(sb, SupBounds { inner: 0.0, global: 0.0, inner_weighted: 0.0, global_weighted: 0.0 });
    }

    #[test]
    fn doubled_mode0_exits_on_mode0() {
        let (p, g, b) = setup();
        let s = 20.0;
        let v = mode0_bump(&g, 2.0 * p.a_const / (s * s), s, p.k0);
        let dec = decompose(&v, s, &b, p.k0).unwrap();
        let r = membership(&dec, s, &p);
        assert!(!r.inside);
        assert_eq!(r.exit_mode, Some(Bound::Mode0));
        assert!((r.ratio(Bound::Mode0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ties_break_in_listed_order() {
        let r = MembershipReport { s: 1.0, inside: false, on_boundary: false, ratios: [1.5, 1.5, 0.0, 0.0, 3.0, 3.0], exit_mode: None };
        assert_eq!(r.dominant(), Bound::OuterPlain);
        let r = MembershipReport { ratios: [2.0, 2.0, 0.0, 0.0, 0.0, 0.0], ..r };
        assert_eq!(r.dominant(), Bound::Mode0);
    }

    #[test]
    fn boundary_band_flags_near_one() {
        let (p, g, b) = setup();
        let s = 20.0;
        let v = mode0_bump(&g, p.a_const / (s * s) * (1.0 - 1e-12), s, p.k0);
        let r = membership(&decompose(&v, s, &b, p.k0).unwrap(), s, &p);
        assert!(r.inside && r.on_boundary);
    }

    #[test]
    fn initial_data_inside_strictly_except_positive_modes() {
        let (p, g, b) = setup();
        let prof = crate::profile::Profile::new(&p);
        for d0 in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let v = Field::from_fn(g.clone(), |y| prof.initial_data(d0, 0.3, p.s0, y));
            let r = membership(&decompose(&v, p.s0, &b, p.k0).unwrap(), p.s0, &p);
            assert!(r.inside, "d0={d0}: {:?}", r.ratios);
            for bd in [Bound::Mode2, Bound::Minus, Bound::OuterPlain, Bound::OuterWeighted] {
                assert!(r.ratio(bd) < 1.0);
            }
            // psi_e vanishes identically: chi(2y) lives where chi = 1.
            assert_eq!(r.ratio(Bound::OuterPlain), 0.0);
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let (p, g, _) = setup();
        let f = Field::from_fn(g.clone(), |y: f64| 1.0 / (1.0 + y.abs().powf(p.beta)));
        let (n0, _) = weighted_norm_beta(&f, &f.gradient(), &p);
        assert!((n0 - 1.0).abs() < 1e-15);
        let z = Field::zeros(g);
        assert_eq!(weighted_norm_beta(&z, &z, &p), (0.0, 0.0));
    }

    #[test]
    fn monotone_in_a_and_eps1() {
        let (p, g, b) = setup();
        let s = 30.0;
        let v = Field::from_fn(g, |y: f64| 0.004 * (-(y * y) / 30.0).exp() + 1e-4 * (0.5 * y).cos());
        let dec = decompose(&v, s, &b, p.k0).unwrap();
        let mut prev_inside = false;
        for a in [1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0] {
            let mut raw = p.to_raw();
            raw.a_const = Some(a);
            let pa = validate_parameters(raw).unwrap();
            let inside = membership(&dec, s, &pa).inside;
            assert!(!prev_inside || inside, "lost membership at A={a}");
            prev_inside = inside;
        }
        assert!(prev_inside);
        let mut prev_inside = false;
        for e1 in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5] {
            let pe = p.with_eps1(e1).unwrap();
            let inside = membership(&dec, s, &pe).inside;
            assert!(!prev_inside || inside, "lost membership at eps1={e1}");
            prev_inside = inside;
        }
    }

    #[test]
    fn half_eps1_matches_prior_bounds() {
        let (p, _, _) = setup();
        let p = p.with_eps1(0.5).unwrap();
        let (a, beta) = (p.a_const, p.beta);
        for s in [20.0f64, 77.0, 400.0] {
            let expect = [
                a / (s * s),
                a / (s * s),
                a * a * s.ln() / (s * s),
                a / (s * s),
                a * a / s.sqrt(),
                a * a / s.powf(0.5 - beta / 2.0),
            ];
            let got = bound_values(s, &p);
            for i in 0..6 {
                assert!((got[i] / expect[i] - 1.0).abs() < 1e-14, "bound {i} at s={s}");
            }
        }
    }

    #[test]
    fn csv_row_round_trips_labels() {
        for b in Bound::ALL {
            assert_eq!(Bound::from_label(b.label()), Some(b));
        }
        let r = MembershipReport { s: 2.0, inside: false, on_boundary: false, ratios: [0.0, 0.0, 2.0, 0.0, 0.0, 0.0], exit_mode: Some(Bound::Mode2) };
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), MembershipReport::<f64>::csv_header().split(',').count());
        assert!(row.ends_with("g2"));
    }
}
