//! Composite Gauss–Legendre rules on intervals, boxes and box faces.
//!
//! Every integral in the crate (boundary Gram entries, initial-state
//! projections, bi-orthonormality checks) goes through these rules. The
//! panel count is chosen by the caller from the highest mode index involved;
//! see [`panels_for_mode`].

use crate::error::{Error, Result};
use crate::plant::Face;

/// Points per panel used throughout.
pub const DEFAULT_ORDER: usize = 16;

/// Panels per half-wavelength of the highest mode.
pub const PANELS_PER_HALF_WAVE: usize = 8;

/// Panel count over one side of the box for modes up to index `k_max`.
pub fn panels_for_mode(k_max: usize) -> usize {
    PANELS_PER_HALF_WAVE * k_max.max(1)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * d * d);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule on `[a, b]` with equal panels.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let base = GaussLegendre::new(order);
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + h * p as f64;
            let mid = lo + 0.5 * h;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Tensor product of composite rules over a box.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    axes: Vec<CompositeRule>,
}

impl TensorGrid {
    pub fn new(lengths: &[f64], panels: &[usize], order: usize) -> Self {
        let axes = lengths
            .iter()
            .zip(panels)
            .map(|(&l, &p)| CompositeRule::new(0.0, l, p, order))
            .collect();
        Self { axes }
    }

    pub fn axes(&self) -> &[CompositeRule] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(CompositeRule::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every node in row-major order (last axis fastest).
    pub fn for_each(&self, mut f: impl FnMut(&[f64], f64)) {
        let d = self.axes.len();
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        let total = self.len();
        for _ in 0..total {
            let mut w = 1.0;
            for (axis, rule) in self.axes.iter().enumerate() {
                point[axis] = rule.nodes[idx[axis]];
                w *= rule.weights[idx[axis]];
            }
            f(&point, w);
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < self.axes[axis].len() {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(|x, w| acc += w * f(x));
        acc
    }
}

/// Quadrature nodes on the control face Γ₁.
///
/// For `d = 1` the face is a single point and the measure is counting
/// measure, so inner products reduce to products of endpoint values.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl BoundaryGrid {
    /// Builds the grid on `face` of the box `[0, lengths]`, with
    /// `panels[i]` panels along each in-face axis `i` (normal axis ignored).
    pub fn new(lengths: &[f64], face: Face, panels: &[usize], order: usize) -> Self {
        let d = lengths.len();
        let fixed = face.coordinate(lengths);
        if d == 1 {
            return Self {
                points: vec![vec![fixed]],
                weights: vec![1.0],
            };
        }
        let in_face: Vec<usize> = (0..d).filter(|&i| i != face.axis).collect();
        let rules: Vec<CompositeRule> = in_face
            .iter()
            .map(|&i| CompositeRule::new(0.0, lengths[i], panels[i], order))
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; rules.len()];
        let total: usize = rules.iter().map(CompositeRule::len).product();
        for _ in 0..total {
            let mut p = vec![0.0; d];
            p[face.axis] = fixed;
            let mut w = 1.0;
            for (r, rule) in rules.iter().enumerate() {
                p[in_face[r]] = rule.nodes[idx[r]];
                w *= rule.weights[idx[r]];
            }
            points.push(p);
            weights.push(w);
            for r in (0..rules.len()).rev() {
                idx[r] += 1;
                if idx[r] < rules[r].len() {
                    break;
                }
                idx[r] = 0;
            }
        }
        Self { points, weights }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points.iter().map(|p| f(p)).collect()
    }

    /// `⟨f, g⟩_{L²(Γ₁)}` from samples on this grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        for s in [f, g] {
            if s.len() != self.len() {
                return Err(Error::GridMismatch {
                    expected: self.len(),
                    got: s.len(),
                });
            }
        }
        let value: f64 = self
            .weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum();
        if !value.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite boundary inner product ({value})"
            )));
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Side;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(DEFAULT_ORDER);
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        // degree 30 is within 2n - 1 = 31
        let integral: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x.powi(30))
            .sum();
        assert!((integral - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn odd_order_has_center_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.nodes[2], 0.0);
        assert!((rule.weights[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn sin_squared_over_half_period() {
        let grid = BoundaryGrid::new(
            &[PI, PI],
            Face::new(1, Side::Lower),
            &[panels_for_mode(1), 1],
            DEFAULT_ORDER,
        );
        let s = grid.sample(|p| p[0].sin());
        assert!((grid.inner(&s, &s).unwrap() - PI / 2.0).abs() < 1e-12);
        let zero = vec![0.0; grid.len()];
        assert_eq!(grid.inner(&zero, &s).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_face_is_counting_measure() {
        let grid = BoundaryGrid::new(&[PI], Face::new(0, Side::Upper), &[1], DEFAULT_ORDER);
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.points()[0], vec![PI]);
        assert_eq!(grid.inner(&[3.0], &[-2.0]).unwrap(), -6.0);
    }

    #[test]
    fn mismatched_samples_are_rejected() {
        let grid = BoundaryGrid::new(&[1.0, 1.0], Face::new(0, Side::Lower), &[1, 2], 4);
        let err = grid.inner(&[1.0; 3], &[1.0; 8]).unwrap_err();
        assert!(matches!(err, Error::GridMismatch { expected: 8, got: 3 }));
    }

    #[test]
    fn tensor_grid_volume() {
        let grid = TensorGrid::new(&[1.0, 2.0, 3.0], &[1, 2, 3], 4);
        assert!((grid.integrate(|_| 1.0) - 6.0).abs() < 1e-13);
        assert!((grid.integrate(|x| x[0] * x[1] * x[2]) - 0.5 * 2.0 * 4.5).abs() < 1e-12);
    }
}
