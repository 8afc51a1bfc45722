//! Hermite eigenfunctions of `L` in `L^2_rho`, Gauss quadrature for
//! `rho(y) = e^{-y^2/4}/sqrt(4 pi)` and the five-part decomposition.

use thiserror::Error;

use crate::grid::Field;
use crate::params::Parameters;
use crate::profile::cutoff_chi0;
use crate::scalar::{c, Real};

pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("grid half-width {half_width} does not cover the cutoff support 2*K0*sqrt(s) = {needed}")]
    GridTooSmall { half_width: f64, needed: f64 },
}

/// `h_m(y) = sum_k m!/(k!(m-2k)!) (-1)^k y^{m-2k}`
pub fn hermite_h<T: Real>(m: usize, y: T) -> T {
    let mut coeff = 1.0f64;
    let mut acc = T::zero();
    let mut k = 0;
    while 2 * k <= m {
        acc = acc + c::<T>(coeff) * y.powi((m - 2 * k) as i32);
        let top = ((m - 2 * k) * (m - 2 * k).saturating_sub(1)) as f64;
        k += 1;
        coeff *= -top / k as f64;
    }
    acc
}

/// `||h_m||^2_rho = 2^m m!`
pub fn hermite_norm_sq(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * 2.0 * k as f64)
}

/// Eigenvalue `1 - m/2` of `L` on `h_m`.
pub fn eigenvalue(m: usize) -> f64 {
    1.0 - m as f64 / 2.0
}

/// Physicists' Gauss-Hermite rule for `e^{-t^2}` by Newton iteration on
/// the orthonormal recurrence.
fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Anything that can be evaluated at a point.
pub trait Sampled<T> {
    fn sample(&self, y: T) -> T;
}

impl<T: Real, F: Fn(T) -> T> Sampled<T> for F {
    fn sample(&self, y: T) -> T {
        self(y)
    }
}

impl<T: Real> Sampled<T> for Field<T> {
    fn sample(&self, y: T) -> T {
        self.at(y)
    }
}

/// Quadrature nodes and weights for `rho` plus the Hermite tables at them.
#[derive(Debug, Clone)]
pub struct HermiteBasis<T> {
    pub max_degree: usize,
    pub quadrature_order: usize,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    /// `table[m][i] = h_m(nodes[i])`
    table: Vec<Vec<T>>,
}

impl<T: Real> HermiteBasis<T> {
    pub fn new(max_degree: usize, quadrature_order: usize) -> Self {
        let (t, w) = gauss_hermite(quadrature_order);
        let scale = std::f64::consts::PI.sqrt().recip();
        // y = 2t maps e^{-t^2} onto rho.
        let nodes: Vec<T> = t.iter().map(|&t| c(2.0 * t)).collect();
        let weights: Vec<T> = w.iter().map(|&w| c(w * scale)).collect();
        let table = (0..=max_degree)
            .map(|m| t.iter().map(|&t| c(hermite_h(m, 2.0 * t))).collect())
            .collect();
        Self { max_degree, quadrature_order, nodes, weights, table }
    }

    pub fn standard() -> Self {
        Self::new(10, DEFAULT_QUADRATURE_ORDER)
    }

    /// `int g rho dy`
    pub fn integrate(&self, g: &impl Sampled<T>) -> T {
        self.nodes.iter().zip(&self.weights).map(|(&y, &w)| w * g.sample(y)).sum()
    }

    /// `v_m = <g, h_m>_rho / ||h_m||^2`
    pub fn coefficient(&self, g: &impl Sampled<T>, m: usize) -> T {
        let vals: Vec<T> = self.nodes.iter().map(|&y| g.sample(y)).collect();
        self.coefficient_from_values(&vals, m)
    }

    fn coefficient_from_values(&self, vals: &[T], m: usize) -> T {
        let row = &self.table[m];
        let s: T = vals.iter().zip(&self.weights).zip(row).map(|((&v, &w), &h)| v * w * h).sum();
        s / c(hermite_norm_sq(m))
    }
}

pub fn inner_product_rho<T: Real>(
    g1: &impl Sampled<T>,
    g2: &impl Sampled<T>,
    basis: &HermiteBasis<T>,
) -> T {
    basis.integrate(&|y: T| g1.sample(y) * g2.sample(y))
}

/// `chi(y, s) = chi0(|y| / (K0 sqrt(s)))`
pub fn blowup_cutoff_chi<T: Real>(y: T, s: T, k0: T) -> T {
    cutoff_chi0(y.abs() / (k0 * s.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeDecomposition<T> {
    pub s: T,
    pub v0: T,
    pub v1: T,
    pub v2: T,
    pub v_minus: Field<T>,
    pub v_e: Field<T>,
}

impl<T: Real> ModeDecomposition<T> {
    pub fn modes(&self) -> [T; 3] {
        [self.v0, self.v1, self.v2]
    }

    /// `v0 h0 + v1 h1 + v2 h2 + v_- + v_e` on the grid.
    pub fn reconstruct(&self) -> Field<T> {
        let grid = self.v_e.grid().clone();
        let values = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                self.v0 + self.v1 * y + self.v2 * hermite_h(2, y)
                    + self.v_minus.values()[i]
                    + self.v_e.values()[i]
            })
            .collect();
        Field::new(grid, values)
    }
}

/// Split `v` into its three leading modes, the inner remainder and the
/// outer part at time `s`.
pub fn decompose<T: Real>(
    v: &Field<T>,
    s: T,
    basis: &HermiteBasis<T>,
    k0: T,
) -> Result<ModeDecomposition<T>, SpectralError> {
    let grid = v.grid().clone();
    let needed = c::<T>(2.0) * k0 * s.sqrt();
    if grid.half_width() < needed {
        return Err(SpectralError::GridTooSmall {
            half_width: grid.half_width().to_f64_lossy(),
            needed: needed.to_f64_lossy(),
        });
    }
    let chi: Vec<T> = grid.nodes().iter().map(|&y| blowup_cutoff_chi(y, s, k0)).collect();
    let inner: Vec<T> = v.values().iter().zip(&chi).map(|(&a, &b)| a * b).collect();
    let at_nodes: Vec<T> = basis.nodes.iter().map(|&y| grid.interpolate(&inner, y)).collect();
    let v0 = basis.coefficient_from_values(&at_nodes, 0);
    let v1 = basis.coefficient_from_values(&at_nodes, 1);
    let v2 = basis.coefficient_from_values(&at_nodes, 2);
    let minus = grid
        .nodes()
        .iter()
        .zip(&inner)
        .map(|(&y, &b)| b - v0 - v1 * y - v2 * hermite_h(2, y))
        .collect();
    let outer = v.values().iter().zip(&chi).map(|(&a, &x)| a * (T::one() - x)).collect();
    Ok(ModeDecomposition {
        s,
        v0,
        v1,
        v2,
        v_minus: Field::new(grid.clone(), minus),
        v_e: Field::new(grid, outer),
    })
}

pub fn decompose_with<T: Real>(
    v: &Field<T>,
    s: T,
    basis: &HermiteBasis<T>,
    params: &Parameters<T>,
) -> Result<ModeDecomposition<T>, SpectralError> {
    decompose(v, s, basis, params.k0)
}

/// `sup |v_-| / (1 + |y|^3)` over the grid.
pub fn project_minus_norm<T: Real>(dec: &ModeDecomposition<T>) -> T {
    dec.v_minus.weighted_sup(|y| (T::one() + y.abs().powi(3)).recip())
}
