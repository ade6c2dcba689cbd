use crate::error::{ensure_domain, Result};

/// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Quadrature sub-intervals per spline segment in the arclength table.
const TABLE_STEPS: usize = 32;

/// Natural cubic spline through 2-D points, parameterized by cumulative chord length.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    points: Vec<[f64; 2]>,
    knots: Vec<f64>,
    /// Second derivatives at the knots, per coordinate.
    second: Vec<[f64; 2]>,
    /// `(t, arclength)` samples, strictly increasing in both.
    table: Vec<(f64, f64)>,
}

impl CubicSpline {
    /// Fits a spline through `points` (at least 4, pairwise distinct).
    pub fn fit(points: &[[f64; 2]]) -> Result<Self> {
        ensure_domain!(points.len() >= 4, "a lane spline needs at least 4 points, got {}", points.len());
        for (i, p) in points.iter().enumerate() {
            ensure_domain!(p[0].is_finite() && p[1].is_finite(), "control point {i} is not finite");
            for (j, q) in points[..i].iter().enumerate() {
                ensure_domain!(p != q, "control points {j} and {i} coincide");
            }
        }
        let mut knots = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            knots.push(knots.last().unwrap() + d);
        }
        let second = natural_second_derivatives(&knots, points);
        let mut spline = Self {
            points: points.to_vec(),
            knots,
            second,
            table: Vec::new(),
        };
        spline.table = spline.build_table();
        Ok(spline)
    }

    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn parameter_range(&self) -> (f64, f64) {
        (0.0, *self.knots.last().unwrap())
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.knots.len() - 1;
        match self.knots.partition_point(|k| *k <= t) {
            0 => 0,
            i => (i - 1).min(n - 1),
        }
    }

    /// Point at parameter `t`, clamped to the parameter range.
    pub fn point(&self, t: f64) -> [f64; 2] {
        let (t0, t1) = self.parameter_range();
        let t = t.clamp(t0, t1);
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let mut out = [0.0; 2];
        for (d, o) in out.iter_mut().enumerate() {
            let (y0, y1) = (self.points[i][d], self.points[i + 1][d]);
            let (m0, m1) = (self.second[i][d], self.second[i + 1][d]);
            *o = a * y0 + b * y1 + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        }
        out
    }

    pub fn derivative(&self, t: f64) -> [f64; 2] {
        let (t0, t1) = self.parameter_range();
        let t = t.clamp(t0, t1);
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let mut out = [0.0; 2];
        for (d, o) in out.iter_mut().enumerate() {
            let (y0, y1) = (self.points[i][d], self.points[i + 1][d]);
            let (m0, m1) = (self.second[i][d], self.second[i + 1][d]);
            *o = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        }
        out
    }

    fn speed(&self, t: f64) -> f64 {
        let [dx, dy] = self.derivative(t);
        (dx * dx + dy * dy).sqrt()
    }

    /// Arclength between parameters `a <= b` inside one smooth piece.
    fn quad(&self, a: f64, b: f64) -> f64 {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }

    fn build_table(&self) -> Vec<(f64, f64)> {
        let mut table = vec![(0.0, 0.0)];
        let mut s = 0.0;
        for w in self.knots.windows(2) {
            let step = (w[1] - w[0]) / TABLE_STEPS as f64;
            for k in 0..TABLE_STEPS {
                let a = w[0] + step * k as f64;
                let b = if k + 1 == TABLE_STEPS { w[1] } else { a + step };
                s += self.quad(a, b);
                table.push((b, s));
            }
        }
        table
    }

    pub fn length(&self) -> f64 {
        self.table.last().unwrap().1
    }

    /// Arclength from the start to parameter `t`.
    pub fn arclength_at(&self, t: f64) -> f64 {
        let (t0, t1) = self.parameter_range();
        let t = t.clamp(t0, t1);
        let i = self.table.partition_point(|(tt, _)| *tt <= t).saturating_sub(1);
        let (ta, sa) = self.table[i];
        if t == ta {
            return sa;
        }
        sa + self.quad(ta, t)
    }

    /// Parameter at which the arclength from the start equals `s`.
    pub fn parameter_at_length(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = self.table.partition_point(|(_, ss)| *ss <= s).saturating_sub(1);
        let (ta, sa) = self.table[i];
        if s == sa || i + 1 == self.table.len() {
            return ta;
        }
        let (tb, sb) = self.table[i + 1];
        // Linear guess, then Newton on the in-cell integral, kept inside the cell.
        let mut t = ta + (tb - ta) * (s - sa) / (sb - sa);
        for _ in 0..8 {
            let err = sa + self.quad(ta, t) - s;
            let v = self.speed(t);
            if v <= 0.0 || err.abs() < 1e-15 {
                break;
            }
            t = (t - err / v).clamp(ta, tb);
        }
        t
    }

    /// Point at normalized arclength `u ∈ [0, 1]`.
    pub fn point_at_fraction(&self, u: f64) -> [f64; 2] {
        self.point(self.parameter_at_length(u.clamp(0.0, 1.0) * self.length()))
    }

    /// Normalized arclength of control point `i`.
    pub fn knot_fraction(&self, i: usize) -> f64 {
        self.arclength_at(self.knots[i]) / self.length()
    }
}

/// Solves the natural-spline tridiagonal system for both coordinates (Thomas algorithm).
fn natural_second_derivatives(t: &[f64], p: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = t.len();
    let mut m = vec![[0.0; 2]; n];
    let inner = n - 2;
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    for d in 0..2 {
        let mut diag = vec![0.0; inner];
        let mut rhs = vec![0.0; inner];
        let mut upper = vec![0.0; inner];
        for k in 0..inner {
            let i = k + 1;
            diag[k] = 2.0 * (h[i - 1] + h[i]);
            upper[k] = h[i];
            rhs[k] = 6.0 * ((p[i + 1][d] - p[i][d]) / h[i] - (p[i][d] - p[i - 1][d]) / h[i - 1]);
        }
        for k in 1..inner {
            let lower = h[k];
            let f = lower / diag[k - 1];
            diag[k] -= f * upper[k - 1];
            rhs[k] -= f * rhs[k - 1];
        }
        for k in (0..inner).rev() {
            let next = if k + 1 < inner { m[k + 2][d] } else { 0.0 };
            m[k + 1][d] = (rhs[k] - upper[k] * next) / diag[k];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_control_points() {
        let pts = [[0.1, 0.2], [0.3, 0.5], [0.5, 0.45], [0.8, 0.9], [0.85, 0.3]];
        let s = CubicSpline::fit(&pts).unwrap();
        for (k, p) in s.knots().iter().zip(pts) {
            let q = s.point(*k);
            assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_points_give_straight_segment() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.5, 2.5], [3.0, 3.0]];
        let s = CubicSpline::fit(&pts).unwrap();
        assert!((s.length() - 3.0 * 2f64.sqrt()).abs() < 1e-6);
        let mid = s.point_at_fraction(0.5);
        assert!((mid[0] - 1.5).abs() < 1e-6 && (mid[1] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn natural_boundary_has_zero_curvature_at_ends() {
        let pts = [[0.0, 0.0], [1.0, 2.0], [2.0, -1.0], [3.0, 0.5]];
        let s = CubicSpline::fit(&pts).unwrap();
        assert_eq!(s.second[0], [0.0, 0.0]);
        assert_eq!(s.second[3], [0.0, 0.0]);
    }

    #[test]
    fn arclength_inverse_round_trip() {
        let pts = [[0.0, 0.0], [0.2, 0.4], [0.5, 0.5], [0.9, 0.1], [1.0, 0.6]];
        let s = CubicSpline::fit(&pts).unwrap();
        for k in 0..=20 {
            let len = s.length() * k as f64 / 20.0;
            let t = s.parameter_at_length(len);
            assert!((s.arclength_at(t) - len).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_few_or_duplicate_points() {
        assert!(CubicSpline::fit(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(CubicSpline::fit(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 0.0]]).is_err());
    }
}
