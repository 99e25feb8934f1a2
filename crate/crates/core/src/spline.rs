//! Cubic-spline interpolation with analytic derivatives.
//!
//! One-dimensional splines use not-a-knot boundary conditions, which
//! reproduce cubic polynomials exactly; natural boundaries would bias the
//! second derivative by O(10⁻³) on the node counts used here, which is the
//! quantity everything downstream differentiates. Two-dimensional surfaces
//! are tensor products of the same 1D scheme.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("need at least {needed} nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("nodes must be strictly increasing")]
    NotSorted,
    #[error("node/value count mismatch: {nodes} nodes vs {values} values")]
    LengthMismatch { nodes: usize, values: usize },
    #[error("point {point} outside the interpolation hull [{lo}, {hi}]")]
    OutOfHull { point: f64, lo: f64, hi: f64 },
    #[error("linear solve for spline moments failed: {0}")]
    SolverFailure(String),
}

/// Piecewise-cubic interpolant through (xs, ys) with not-a-knot ends.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the nodes.
    moments: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self, SplineError> {
        let n = xs.len();
        if ys.len() != n {
            return Err(SplineError::LengthMismatch { nodes: n, values: ys.len() });
        }
        if n < 4 {
            return Err(SplineError::TooFewNodes { needed: 4, got: n });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SplineError::NotSorted);
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut a = Array2::<f64>::zeros((n, n));
        let mut b = Array1::<f64>::zeros(n);
        // third-derivative continuity across the first and last interior node
        a[[0, 0]] = h[1];
        a[[0, 1]] = -(h[0] + h[1]);
        a[[0, 2]] = h[0];
        a[[n - 1, n - 3]] = h[n - 2];
        a[[n - 1, n - 2]] = -(h[n - 3] + h[n - 2]);
        a[[n - 1, n - 1]] = h[n - 3];
        for i in 1..n - 1 {
            a[[i, i - 1]] = h[i - 1] / 6.0;
            a[[i, i]] = (h[i - 1] + h[i]) / 3.0;
            a[[i, i + 1]] = h[i] / 6.0;
            b[i] = (ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1];
        }
        crate::kernel::ensure_single_threaded_blas();
        let moments = a
            .solve_into(b)
            .map_err(|e| SplineError::SolverFailure(e.to_string()))?;
        Ok(Self { xs: xs.to_vec(), ys: ys.to_vec(), moments: moments.to_vec() })
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn locate(&self, x: f64) -> Result<(usize, f64), SplineError> {
        let (lo, hi) = (self.lo(), self.hi());
        let slack = 1e-12 * (hi - lo).abs().max(1.0);
        if x < lo - slack || x > hi + slack {
            return Err(SplineError::OutOfHull { point: x, lo, hi });
        }
        let x = x.clamp(lo, hi);
        let idx = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        };
        Ok((idx, x))
    }

    pub fn value(&self, x: f64) -> Result<f64, SplineError> {
        let (i, x) = self.locate(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        Ok(a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a.powi(3) - a) * self.moments[i] + (b.powi(3) - b) * self.moments[i + 1]) * h * h
                / 6.0)
    }

    pub fn deriv1(&self, x: f64) -> Result<f64, SplineError> {
        let (i, x) = self.locate(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        Ok((self.ys[i + 1] - self.ys[i]) / h
            - (3.0 * a * a - 1.0) * h * self.moments[i] / 6.0
            + (3.0 * b * b - 1.0) * h * self.moments[i + 1] / 6.0)
    }

    pub fn deriv2(&self, x: f64) -> Result<f64, SplineError> {
        let (i, x) = self.locate(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        Ok(a * self.moments[i] + b * self.moments[i + 1])
    }
}

/// Value and second derivatives of a 2D interpolant at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDerivs {
    pub value: f64,
    pub dxx: f64,
    pub dyy: f64,
    pub dxy: f64,
}

/// Tensor-product bicubic interpolant on a rectangular grid.
#[derive(Debug, Clone)]
pub struct BicubicSpline {
    xs: Vec<f64>,
    /// One y-spline per x-node row.
    rows: Vec<CubicSpline>,
}

impl BicubicSpline {
    /// `values[i][j]` is the sample at `(xs[i], ys[j])`.
    pub fn new(xs: &[f64], ys: &[f64], values: &Array2<f64>) -> Result<Self, SplineError> {
        if values.nrows() != xs.len() || values.ncols() != ys.len() {
            return Err(SplineError::LengthMismatch {
                nodes: xs.len() * ys.len(),
                values: values.len(),
            });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SplineError::NotSorted);
        }
        if xs.len() < 4 {
            return Err(SplineError::TooFewNodes { needed: 4, got: xs.len() });
        }
        let rows = (0..xs.len())
            .map(|i| CubicSpline::new(ys, values.row(i).to_vec().as_slice()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { xs: xs.to_vec(), rows })
    }

    /// Interpolated value together with ∂xx, ∂yy and the mixed ∂xy.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<SurfaceDerivs, SplineError> {
        let vals: Vec<f64> = self.rows.iter().map(|s| s.value(y)).collect::<Result<_, _>>()?;
        let dy: Vec<f64> = self.rows.iter().map(|s| s.deriv1(y)).collect::<Result<_, _>>()?;
        let dyy: Vec<f64> = self.rows.iter().map(|s| s.deriv2(y)).collect::<Result<_, _>>()?;
        let sx_v = CubicSpline::new(&self.xs, &vals)?;
        let sx_dy = CubicSpline::new(&self.xs, &dy)?;
        let sx_dyy = CubicSpline::new(&self.xs, &dyy)?;
        Ok(SurfaceDerivs {
            value: sx_v.value(x)?,
            dxx: sx_v.deriv2(x)?,
            dyy: sx_dyy.value(x)?,
            dxy: sx_dy.deriv1(x)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn reproduces_nodes_exactly() {
        let xs = grid(0.85, 1.15, 11);
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(4) - 2.0 * x).collect();
        let s = CubicSpline::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.value(*x).unwrap() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_on_cubics() {
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x.powi(3);
        let xs = grid(-1.0, 2.0, 9);
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let s = CubicSpline::new(&xs, &ys).unwrap();
        for x in [-0.93, 0.0, 0.41, 1.37, 1.99] {
            assert_abs_diff_eq!(s.value(x).unwrap(), f(x), epsilon = 1e-11);
            assert_abs_diff_eq!(s.deriv1(x).unwrap(), -1.0 + x - 0.75 * x * x, epsilon = 1e-10);
            assert_abs_diff_eq!(s.deriv2(x).unwrap(), 1.0 - 1.5 * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadratic_second_derivative_is_exact() {
        let c = 1.5;
        let xs = grid(0.85, 1.15, 11);
        let ys: Vec<f64> = xs.iter().map(|&x| c * x * x).collect();
        let s = CubicSpline::new(&xs, &ys).unwrap();
        for x in [0.85, 0.9, 1.0, 1.12, 1.15] {
            assert_abs_diff_eq!(s.deriv2(x).unwrap(), 2.0 * c, epsilon = 1e-9);
        }
    }

    #[test]
    fn second_derivative_accuracy_on_powers() {
        let xs = grid(0.85, 1.15, 11);
        let cases: [(fn(f64) -> f64, fn(f64) -> f64); 3] = [
            (|x| x * x, |_| 2.0),
            (|x| x.powi(3), |x| 6.0 * x),
            (|x| x.powi(4), |x| 12.0 * x * x),
        ];
        for (f, d2) in cases {
            let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
            let s = CubicSpline::new(&xs, &ys).unwrap();
            let got = s.deriv2(1.0).unwrap();
            let expect = d2(1.0);
            assert!(
                (got - expect).abs() / expect.abs() < 1e-3,
                "d2 = {got}, expected {expect}"
            );
        }
    }

    #[test]
    fn out_of_hull_is_an_error() {
        let xs = grid(0.0, 1.0, 5);
        let ys = vec![0.0; 5];
        let s = CubicSpline::new(&xs, &ys).unwrap();
        assert!(matches!(s.value(1.5), Err(SplineError::OutOfHull { .. })));
        assert!(matches!(s.deriv2(-0.1), Err(SplineError::OutOfHull { .. })));
        assert!(s.value(1.0).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            CubicSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]),
            Err(SplineError::TooFewNodes { .. })
        ));
        assert!(matches!(
            CubicSpline::new(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4]),
            Err(SplineError::NotSorted)
        ));
        assert!(matches!(
            CubicSpline::new(&[0.0, 1.0, 2.0, 3.0], &[0.0; 3]),
            Err(SplineError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bicubic_quadratic_with_mixed_term() {
        let (c, g) = (1.5, 0.8);
        let xs = grid(0.5, 0.8, 9);
        let ys = grid(0.5, 0.8, 9);
        let mut values = Array2::<f64>::zeros((9, 9));
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                values[[i, j]] = c * (x * x + y * y) + g * x * y;
            }
        }
        let s = BicubicSpline::new(&xs, &ys, &values).unwrap();
        let d = s.evaluate(0.63, 0.63).unwrap();
        assert_abs_diff_eq!(d.value, c * 2.0 * 0.63 * 0.63 + g * 0.63 * 0.63, epsilon = 1e-10);
        assert_abs_diff_eq!(d.dxx, 2.0 * c, epsilon = 1e-9);
        assert_abs_diff_eq!(d.dyy, 2.0 * c, epsilon = 1e-9);
        assert_abs_diff_eq!(d.dxy, g, epsilon = 1e-9);
    }

    #[test]
    fn bicubic_exact_on_bicubic_polynomial() {
        let f = |x: f64, y: f64| x.powi(3) * y * y + 2.0 * x * y - y.powi(3);
        let xs = grid(-1.0, 1.0, 10);
        let ys = grid(-1.0, 1.0, 10);
        let mut values = Array2::<f64>::zeros((10, 10));
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                values[[i, j]] = f(x, y);
            }
        }
        let s = BicubicSpline::new(&xs, &ys, &values).unwrap();
        let (x, y) = (0.31, -0.47);
        let d = s.evaluate(x, y).unwrap();
        assert_abs_diff_eq!(d.value, f(x, y), epsilon = 1e-10);
        assert_abs_diff_eq!(d.dxx, 6.0 * x * y * y, epsilon = 1e-9);
        assert_abs_diff_eq!(d.dyy, 2.0 * x.powi(3) - 6.0 * y, epsilon = 1e-9);
        assert_abs_diff_eq!(d.dxy, 6.0 * x * x * y + 2.0, epsilon = 1e-9);
    }
}
