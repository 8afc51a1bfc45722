//! Symmetric graded grids in `y` and fields sampled on them.

use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{c, Real};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs an odd node count >= 5 (got {0})")]
    TooFewNodes(usize),
    #[error("grid nodes must be strictly increasing and symmetric about 0")]
    NotSymmetric,
    #[error("grid spacing settings must be positive")]
    BadSpacing,
}

/// Finite-difference weights for derivatives `0..=order` at `x0` from the
/// stencil `xs` (Fornberg's recursion). `out[m][j]` multiplies `f(xs[j])`.
pub fn fd_weights<T: Real>(x0: T, xs: &[T], order: usize) -> Vec<Vec<T>> {
    let n = xs.len();
    let mut w = vec![vec![T::zero(); n]; order + 1];
    w[0][0] = T::one();
    let mut c1 = T::one();
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 = c2 * c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let kk = T::from_usize_lossy(k);
                    w[k][i] = c1 * (kk * w[k - 1][i - 1] - c5 * w[k][i - 1]) / c2;
                }
                w[0][i] = -c1 * c5 * w[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                let kk = T::from_usize_lossy(k);
                w[k][j] = (c4 * w[k][j] - kk * w[k - 1][j]) / c3;
            }
            w[0][j] = c4 * w[0][j] / c3;
        }
        c1 = c2;
    }
    w
}

/// Spacing law of the graded mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Half-width `L`.
    pub half_width: f64,
    /// Spacing at the origin.
    pub h0: f64,
    /// Upper cap of the spacing.
    pub cap: f64,
    /// Zone `[a, b]` of doubled density (cutoff transition), if any.
    pub dense_zone: Option<(f64, f64)>,
    /// Each level halves every spacing.
    pub refine: u32,
}

impl GridSpec {
    fn spacing(&self, y: f64) -> f64 {
        let grow = (1.0 + y * y).powf(0.25);
        let mut sp = self.h0 * grow / (1.0 + (grow * self.h0 / self.cap).powi(4)).powf(0.25);
        if let Some((a, b)) = self.dense_zone {
            let bump = 0.5 * (((y - a) / 1.0).tanh() - ((y - b) / 1.0).tanh());
            sp /= 1.0 + bump;
        }
        sp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nodes: Vec<T>,
}

impl<T: Real> Grid<T> {
    /// Takes nodes sorted ascending, closed under negation, odd count.
    pub fn from_nodes(nodes: Vec<T>) -> Result<Self, GridError> {
        let n = nodes.len();
        if n < 5 || n % 2 == 0 {
            return Err(GridError::TooFewNodes(n));
        }
        for i in 0..n {
            if nodes[i] != -nodes[n - 1 - i] || (i > 0 && nodes[i] <= nodes[i - 1]) {
                return Err(GridError::NotSymmetric);
            }
        }
        Ok(Self { nodes })
    }

    pub fn uniform(half_width: T, half_count: usize) -> Result<Self, GridError> {
        let h = half_width / T::from_usize_lossy(half_count);
        let half: Vec<T> = (1..=half_count).map(|k| h * T::from_usize_lossy(k)).collect();
        Self::from_nodes(mirror(&half))
    }

    /// Graded mesh: the map `xi -> y` solves `dy/dxi = spacing(y)` (RK4),
    /// so every refinement level samples the same smooth map.
    pub fn graded(spec: &GridSpec) -> Result<Self, GridError> {
        if !(spec.h0 > 0.0 && spec.cap >= spec.h0 && spec.half_width > spec.h0) {
            return Err(GridError::BadSpacing);
        }
        let l = spec.half_width;
        // Total xi-length: integral of 1/spacing over [0, L].
        let m = 20_000;
        let dy = l / m as f64;
        let mut xi_total = 0.0;
        for k in 0..m {
            let y = k as f64 * dy;
            xi_total += dy / 6.0
                * (1.0 / spec.spacing(y)
                    + 4.0 / spec.spacing(y + 0.5 * dy)
                    + 1.0 / spec.spacing(y + dy));
        }
        let half_count = (xi_total.ceil() as usize).max(2) << spec.refine;
        let dxi = xi_total / half_count as f64;
        let sub = 4;
        let h = dxi / sub as f64;
        let mut y = 0.0;
        let mut half = Vec::with_capacity(half_count);
        for _ in 0..half_count {
            for _ in 0..sub {
                let k1 = spec.spacing(y);
                let k2 = spec.spacing(y + 0.5 * h * k1);
                let k3 = spec.spacing(y + 0.5 * h * k2);
                let k4 = spec.spacing(y + h * k3);
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            half.push(y);
        }
        let scale = l / y;
        let half: Vec<T> = half.iter().map(|&v| c(v * scale)).collect();
        Self::from_nodes(mirror(&half))
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn half_width(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index of `-y_i`.
    pub fn mirror(&self, i: usize) -> usize {
        self.nodes.len() - 1 - i
    }

    pub fn center(&self) -> usize {
        self.nodes.len() / 2
    }

    /// Largest spacing.
    pub fn max_spacing(&self) -> T {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(T::zero(), T::max)
    }

    /// Index `i` with `nodes[i] <= y < nodes[i+1]`, clamped to valid cells.
    pub fn locate(&self, y: T) -> usize {
        let n = self.nodes.len();
        match self.nodes.binary_search_by(|v| v.partial_cmp(&y).expect("finite node")) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Four-point Lagrange interpolation, zero outside `[-L, L]`.
    pub fn interpolate(&self, values: &[T], y: T) -> T {
        let n = self.nodes.len();
        if y < self.nodes[0] || y > self.nodes[n - 1] {
            return T::zero();
        }
        let i = self.locate(y);
        let start = i.saturating_sub(1).min(n - 4);
        let xs = &self.nodes[start..start + 4];
        let mut acc = T::zero();
        for j in 0..4 {
            let mut l = T::one();
            for k in 0..4 {
                if k != j {
                    l = l * (y - xs[k]) / (xs[j] - xs[k]);
                }
            }
            acc = acc + l * values[start + j];
        }
        acc
    }

    /// Second-order first derivative of grid samples.
    pub fn derivative(&self, values: &[T]) -> Vec<T> {
        let n = self.nodes.len();
        let y = &self.nodes;
        let mut d = vec![T::zero(); n];
        for i in 1..n - 1 {
            let hm = y[i] - y[i - 1];
            let hp = y[i + 1] - y[i];
            d[i] = -hp / (hm * (hm + hp)) * values[i - 1]
                + (hp - hm) / (hm * hp) * values[i]
                + hm / (hp * (hm + hp)) * values[i + 1];
        }
        let wl = fd_weights(y[0], &y[0..3], 1);
        d[0] = (0..3).map(|j| wl[1][j] * values[j]).sum();
        let wr = fd_weights(y[n - 1], &y[n - 3..n], 1);
        d[n - 1] = (0..3).map(|j| wr[1][j] * values[n - 3 + j]).sum();
        d
    }
}

fn mirror<T: Real>(half: &[T]) -> Vec<T> {
    let mut out: Vec<T> = half.iter().rev().map(|&v| -v).collect();
    out.push(T::zero());
    out.extend_from_slice(half);
    out
}

/// Real values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Self {
        assert_eq!(grid.len(), values.len(), "field length must match grid");
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len();
        Self::new(grid, vec![T::zero(); n])
    }

    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes().iter().map(|&y| f(y)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, f: impl Fn(T, T) -> T) -> Self {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&y, &v)| f(y, v)).collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn gradient(&self) -> Self {
        Self::new(self.grid.clone(), self.grid.derivative(&self.values))
    }

    pub fn at(&self, y: T) -> T {
        self.grid.interpolate(&self.values, y)
    }

    pub fn sup(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `sup |weight(y) * v(y)|`.
    pub fn weighted_sup(&self, weight: impl Fn(T) -> T) -> T {
        self.grid
            .nodes()
            .iter()
            .zip(&self.values)
            .fold(T::zero(), |m, (&y, &v)| m.max((weight(y) * v).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `sup |v(y) - v(-y)| / 2`
    pub fn odd_part_sup(&self) -> T {
        let n = self.values.len();
        (0..n).fold(T::zero(), |m, i| m.max((self.values[i] - self.values[n - 1 - i]).abs()))
            * c(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(refine: u32) -> GridSpec {
        GridSpec { half_width: 40.0, h0: 0.05, cap: 0.25, dense_zone: Some((7.0, 15.0)), refine }
    }

    #[test]
    fn fornberg_matches_textbook() {
        let xs = [-1.0, 0.0, 1.0];
        let w = fd_weights(0.0, &xs, 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        let xs = [0.0f64, 1.0, 2.0, 3.0];
        let w = fd_weights(0.0, &xs, 2);
        let expect = [2.0, -5.0, 4.0, -1.0];
        for j in 0..4 {
            assert!((w[2][j] - expect[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn graded_grid_is_symmetric_and_graded() {
        let g: Grid<f64> = Grid::graded(&spec(0)).unwrap();
        let n = g.len();
        assert_eq!(n % 2, 1);
        assert_eq!(g.nodes()[g.center()], 0.0);
        assert!((g.half_width() - 40.0).abs() < 1e-12);
        for i in 0..n {
            assert_eq!(g.nodes()[i], -g.nodes()[g.mirror(i)]);
        }
        let c = g.center();
        let h_origin = g.nodes()[c + 1] - g.nodes()[c];
        let h_far = g.nodes()[n - 1] - g.nodes()[n - 2];
        assert!(h_origin < 0.06 && h_far > 0.15 && h_far < 0.26);
    }

    #[test]
    fn refinement_halves_spacing() {
        let a: Grid<f64> = Grid::graded(&spec(0)).unwrap();
        let b: Grid<f64> = Grid::graded(&spec(1)).unwrap();
        assert_eq!(b.len() - 1, 2 * (a.len() - 1));
        let ratio = a.max_spacing() / b.max_spacing();
        assert!((ratio - 2.0).abs() < 0.01);
    }

    #[test]
    fn rejects_asymmetric_nodes() {
        let e = Grid::from_nodes(vec![-2.0, -1.0, 0.0, 1.0, 3.0]).unwrap_err();
        assert_eq!(e, GridError::NotSymmetric);
        assert!(Grid::from_nodes(vec![-1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn derivative_exact_on_quadratics() {
        let g = Arc::new(Grid::<f64>::graded(&spec(0)).unwrap());
        let f = Field::from_fn(g.clone(), |y| 3.0 * y * y - y + 2.0);
        let d = f.gradient();
        for (&y, &v) in g.nodes().iter().zip(d.values()) {
            assert!((v - (6.0 * y - 1.0)).abs() < 1e-8 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn interpolation_exact_on_cubics() {
        let g = Arc::new(Grid::<f64>::graded(&spec(0)).unwrap());
        let f = Field::from_fn(g.clone(), |y| y * y * y - 2.0 * y);
        for k in 0..100 {
            let y = -39.9 + 0.797 * k as f64;
            let exact = y * y * y - 2.0 * y;
            assert!((f.at(y) - exact).abs() < 1e-9 * (1.0 + exact.abs()));
        }
        assert_eq!(f.at(41.0), 0.0);
    }
}
