//! Simplex geometry in two and three dimensions.

use crate::Point;

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn midpoint(a: &Point, b: &Point) -> Point {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ]
}

/// Signed volume (2D: area) of the simplex spanned by `pts[0..=dim]`.
pub fn signed_volume(pts: &[Point], dim: usize) -> f64 {
    let e1 = sub(&pts[1], &pts[0]);
    let e2 = sub(&pts[2], &pts[0]);
    if dim == 2 {
        0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
    } else {
        let e3 = sub(&pts[3], &pts[0]);
        dot(&e1, &cross(&e2, &e3)) / 6.0
    }
}

pub fn volume(pts: &[Point], dim: usize) -> f64 {
    signed_volume(pts, dim).abs()
}

/// Measure of a (dim-1)-face: edge length in 2D, triangle area in 3D.
pub fn face_measure(pts: &[Point], dim: usize) -> f64 {
    if dim == 2 {
        distance(&pts[0], &pts[1])
    } else {
        0.5 * norm(&cross(&sub(&pts[1], &pts[0]), &sub(&pts[2], &pts[0])))
    }
}

/// Largest vertex-to-vertex distance.
pub fn diameter(pts: &[Point]) -> f64 {
    let mut h = 0.0_f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            h = h.max(distance(&pts[i], &pts[j]));
        }
    }
    h
}

/// Radius of the inscribed ball: `d * |T| / sum of face measures`.
pub fn inradius(pts: &[Point], dim: usize) -> f64 {
    let vol = volume(pts, dim);
    let mut boundary = 0.0;
    let mut face = [[0.0; 3]; 3];
    for skip in 0..=dim {
        let mut k = 0;
        for (i, p) in pts.iter().take(dim + 1).enumerate() {
            if i != skip {
                face[k] = *p;
                k += 1;
            }
        }
        boundary += face_measure(&face[..dim], dim);
    }
    dim as f64 * vol / boundary
}

/// Gradients of the barycentric coordinate functions of a nondegenerate simplex.
pub fn barycentric_gradients(pts: &[Point], dim: usize) -> [Point; 4] {
    let mut grads = [[0.0; 3]; 4];
    if dim == 2 {
        let e1 = sub(&pts[1], &pts[0]);
        let e2 = sub(&pts[2], &pts[0]);
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        // rows of the inverse Jacobian
        grads[1] = [e2[1] / det, -e2[0] / det, 0.0];
        grads[2] = [-e1[1] / det, e1[0] / det, 0.0];
    } else {
        let e1 = sub(&pts[1], &pts[0]);
        let e2 = sub(&pts[2], &pts[0]);
        let e3 = sub(&pts[3], &pts[0]);
        let det = dot(&e1, &cross(&e2, &e3));
        let c23 = cross(&e2, &e3);
        let c31 = cross(&e3, &e1);
        let c12 = cross(&e1, &e2);
        grads[1] = [c23[0] / det, c23[1] / det, c23[2] / det];
        grads[2] = [c31[0] / det, c31[1] / det, c31[2] / det];
        grads[3] = [c12[0] / det, c12[1] / det, c12[2] / det];
    }
    for k in 0..3 {
        grads[0][k] = -(1..=dim).map(|i| grads[i][k]).sum::<f64>();
    }
    grads
}

/// Barycentric coordinates of `x` with respect to the simplex `pts[0..=dim]`.
pub fn barycentric(pts: &[Point], dim: usize, x: &Point) -> [f64; 4] {
    let grads = barycentric_gradients(pts, dim);
    let rel = sub(x, &pts[0]);
    let mut lambda = [0.0; 4];
    let mut rest = 1.0;
    for i in 1..=dim {
        lambda[i] = dot(&grads[i], &rel);
        rest -= lambda[i];
    }
    lambda[0] = rest;
    lambda
}

/// Map barycentric coordinates back to a physical point.
pub fn from_barycentric(pts: &[Point], dim: usize, lambda: &[f64]) -> Point {
    let mut x = [0.0; 3];
    for i in 0..=dim {
        for k in 0..3 {
            x[k] += lambda[i] * pts[i][k];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_reproduce_linear_functions() {
        let pts = [
            [0.1, 0.2, 0.0],
            [1.3, 0.1, 0.2],
            [0.2, 1.1, -0.3],
            [0.4, 0.3, 0.9],
        ];
        let g = barycentric_gradients(&pts, 3);
        // f(x) = 2x - y + 3z, sum f(x_i) grad(lambda_i) must equal (2, -1, 3)
        let f = |p: &Point| 2.0 * p[0] - p[1] + 3.0 * p[2];
        let mut grad = [0.0; 3];
        for i in 0..4 {
            for k in 0..3 {
                grad[k] += f(&pts[i]) * g[i][k];
            }
        }
        assert!((grad[0] - 2.0).abs() < 1e-12);
        assert!((grad[1] + 1.0).abs() < 1e-12);
        assert!((grad[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn barycentric_round_trip() {
        let pts = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.5, 1.5, 0.0]];
        let x = [0.7, 0.4, 0.0];
        let l = barycentric(&pts, 2, &x);
        let y = from_barycentric(&pts, 2, &l[..3]);
        assert!(distance(&x, &y) < 1e-14);
        assert!((l[0] + l[1] + l[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inradius_of_unit_right_triangle() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let r = inradius(&pts, 2);
        assert!((r - (2.0 - 2.0_f64.sqrt()) / 2.0).abs() < 1e-14);
    }
}
