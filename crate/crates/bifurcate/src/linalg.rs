//! Small fixed-size linear algebra for the plane: 2-vectors as `[f64; 2]`
//! and symmetric 2x2 matrices with a closed-form eigendecomposition.

/// Symmetric 2x2 matrix `[[a, b], [b, d]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat2 {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl SymMat2 {
    pub fn new(a: f64, b: f64, d: f64) -> Self {
        Self { a, b, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.b
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a * v[0] + self.b * v[1],
            self.b * v[0] + self.d * v[1],
        ]
    }

    /// Eigenvalues (ascending) and matching unit eigenvectors.
    ///
    /// Closed form: lambda = m +- sqrt(((a-d)/2)^2 + b^2) with m = trace/2.
    /// Eigenvectors are exact for diagonal input, so invariant-axis
    /// computations stay on the axis to the last bit.
    pub fn eigen(&self) -> Eigen2 {
        let m = 0.5 * (self.a + self.d);
        let h = 0.5 * (self.a - self.d);
        let rad = (h * h + self.b * self.b).sqrt();
        let (lo, hi) = (m - rad, m + rad);
        let v_hi = if self.b == 0.0 {
            if self.a >= self.d {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            }
        } else {
            // (A - hi*I) v = 0; pick the better-conditioned row.
            let r1 = [hi - self.d, self.b];
            let r2 = [self.b, hi - self.a];
            if norm(r1) >= norm(r2) {
                unit(r1)
            } else {
                unit(r2)
            }
        };
        let v_lo = rot90(v_hi);
        Eigen2 {
            values: [lo, hi],
            vectors: [v_lo, v_hi],
        }
    }
}

/// Eigendecomposition of a symmetric 2x2 matrix: `values[i]` goes with
/// `vectors[i]`, values sorted ascending, vectors orthonormal.
#[derive(Clone, Copy, Debug)]
pub struct Eigen2 {
    pub values: [f64; 2],
    pub vectors: [[f64; 2]; 2],
}

pub fn dot(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

pub fn cross(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

pub fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub fn sub(u: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    [u[0] - v[0], u[1] - v[1]]
}

pub fn add(u: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    [u[0] + v[0], u[1] + v[1]]
}

pub fn scale(v: [f64; 2], s: f64) -> [f64; 2] {
    [v[0] * s, v[1] * s]
}

pub fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = norm(v);
    [v[0] / n, v[1] / n]
}

/// Counter-clockwise quarter turn.
pub fn rot90(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// Solve the general 2x2 system `m x = rhs` by Cramer's rule.
/// Returns `None` when the determinant is numerically zero.
pub fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m[0][0].abs() + m[0][1].abs() + m[1][0].abs() + m[1][1].abs();
    if det.abs() <= 1e-300 || det.abs() < 1e-16 * scale * scale {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (rhs[1] * m[0][0] - rhs[0] * m[1][0]) / det,
    ])
}

/// Distance from `p` to the segment `[a, b]`.
pub fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return norm(sub(p, a));
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    norm(sub(p, add(a, scale(ab, t))))
}

/// Distance from `p` to a polyline (finite for >= 1 point).
pub fn dist_to_polyline(p: [f64; 2], pts: &[[f64; 2]]) -> f64 {
    match pts.len() {
        0 => f64::INFINITY,
        1 => norm(sub(p, pts[0])),
        _ => pts
            .windows(2)
            .map(|w| dist_to_segment(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Proper (interior) intersection of segments `[a1,a2]` and `[b1,b2]`.
pub fn segment_intersection(
    a1: [f64; 2],
    a2: [f64; 2],
    b1: [f64; 2],
    b2: [f64; 2],
) -> Option<[f64; 2]> {
    let r = sub(a2, a1);
    let s = sub(b2, b1);
    let denom = cross(r, s);
    if denom.abs() < 1e-14 * (norm(r) * norm(s)).max(1e-300) {
        return None;
    }
    let qp = sub(b1, a1);
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    let eps = 1e-12;
    if t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps {
        Some(add(a1, scale(r, t)))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_diagonal_is_exact() {
        let e = SymMat2::new(2.0, 0.0, -2.0).eigen();
        assert_eq!(e.values, [-2.0, 2.0]);
        assert_eq!(e.vectors[1], [1.0, 0.0]);
        assert_eq!(e.vectors[0], [0.0, 1.0]);
    }

    #[test]
    fn eigen_reflection_matrix() {
        // [[c, s], [s, -c]] has eigenvalues +-1 with the +1 axis at half angle.
        let phi = 0.7_f64;
        let m = SymMat2::new(phi.cos(), phi.sin(), -phi.cos());
        let e = m.eigen();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let v = e.vectors[1];
        let ang = v[1].atan2(v[0]);
        let half = phi / 2.0;
        let d = (ang - half).rem_euclid(std::f64::consts::PI);
        assert!(d < 1e-12 || (std::f64::consts::PI - d) < 1e-12);
        // residual check
        let mv = m.mul_vec(v);
        assert!(norm(sub(mv, v)) < 1e-14);
    }

    #[test]
    fn solve2_matches_direct() {
        let m = [[3.0, 1.0], [-2.0, 4.0]];
        let x = solve2(m, [5.0, -6.0]).unwrap();
        assert!((3.0 * x[0] + x[1] - 5.0).abs() < 1e-12);
        assert!((-2.0 * x[0] + 4.0 * x[1] + 6.0).abs() < 1e-12);
        assert!(solve2([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0]).is_none());
    }

    #[test]
    fn segment_intersection_basic() {
        let p = segment_intersection([-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]).unwrap();
        assert!(norm(p) < 1e-14);
        assert!(segment_intersection([-1.0, 0.0], [1.0, 0.0], [-1.0, 1.0], [1.0, 1.0]).is_none());
    }
}
