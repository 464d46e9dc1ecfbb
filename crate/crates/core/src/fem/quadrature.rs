//! Simplex quadrature rules in barycentric coordinates. Weights are
//! normalized to sum to one, so an integral is `|T| * sum(w_q f(x_q))`.

#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub order: usize,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn centroid(dim: usize) -> Self {
        let w = 1.0 / (dim + 1) as f64;
        let mut p = [0.0; 4];
        p[..=dim].fill(w);
        Self { points: vec![p], weights: vec![1.0], order: 1 }
    }

    /// 3-point (2D) or 4-point (3D) rule of degree 2.
    pub fn order2(dim: usize) -> Self {
        if dim == 2 {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Self {
                points: vec![[a, b, b, 0.0], [b, a, b, 0.0], [b, b, a, 0.0]],
                weights: vec![1.0 / 3.0; 3],
                order: 2,
            }
        } else {
            let s5 = 5.0_f64.sqrt();
            let a = (5.0 + 3.0 * s5) / 20.0;
            let b = (5.0 - s5) / 20.0;
            Self {
                points: vec![[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
                weights: vec![0.25; 4],
                order: 2,
            }
        }
    }

    /// Degree-5 rule: the 7-point Radon rule on triangles, a 4x4x3 collapsed
    /// Gauss-Legendre product on tetrahedra.
    pub fn order5(dim: usize) -> Self {
        if dim == 2 {
            let s15 = 15.0_f64.sqrt();
            let a1 = (6.0 - s15) / 21.0;
            let b1 = (9.0 + 2.0 * s15) / 21.0;
            let w1 = (155.0 - s15) / 1200.0;
            let a2 = (6.0 + s15) / 21.0;
            let b2 = (9.0 - 2.0 * s15) / 21.0;
            let w2 = (155.0 + s15) / 1200.0;
            let third = 1.0 / 3.0;
            Self {
                points: vec![
                    [third, third, third, 0.0],
                    [b1, a1, a1, 0.0],
                    [a1, b1, a1, 0.0],
                    [a1, a1, b1, 0.0],
                    [b2, a2, a2, 0.0],
                    [a2, b2, a2, 0.0],
                    [a2, a2, b2, 0.0],
                ],
                weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
                order: 5,
            }
        } else {
            Self::collapsed_tetrahedron(4, 4, 3, 5)
        }
    }

    /// Conical product rule on the reference tetrahedron via the Duffy map
    /// `x = u, y = v(1-u), z = w(1-u)(1-v)`.
    fn collapsed_tetrahedron(nu: usize, nv: usize, nw: usize, order: usize) -> Self {
        let (xu, wu) = gauss_legendre_unit(nu);
        let (xv, wv) = gauss_legendre_unit(nv);
        let (xw, ww) = gauss_legendre_unit(nw);
        let mut points = Vec::with_capacity(nu * nv * nw);
        let mut weights = Vec::with_capacity(nu * nv * nw);
        for (u, wtu) in xu.iter().zip(&wu) {
            for (v, wtv) in xv.iter().zip(&wv) {
                for (w, wtw) in xw.iter().zip(&ww) {
                    let x = *u;
                    let y = v * (1.0 - u);
                    let z = w * (1.0 - u) * (1.0 - v);
                    let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                    points.push([1.0 - x - y - z, x, y, z]);
                    // reference volume is 1/6
                    weights.push(6.0 * wtu * wtv * wtw * jac);
                }
            }
        }
        Self { points, weights, order }
    }

    /// Composite rule: apply `self` on each child of `levels` rounds of
    /// regular (red) subdivision of the reference simplex.
    pub fn subdivided(&self, dim: usize, levels: usize) -> Self {
        let mut children: Vec<[[f64; 4]; 4]> = vec![reference_corners(dim)];
        for _ in 0..levels {
            children = children.iter().flat_map(|c| red_children(c, dim)).collect();
        }
        let scale = 1.0 / children.len() as f64;
        let mut points = Vec::with_capacity(children.len() * self.len());
        let mut weights = Vec::with_capacity(children.len() * self.len());
        for child in &children {
            for (p, w) in self.points.iter().zip(&self.weights) {
                let mut q = [0.0; 4];
                for (i, corner) in child.iter().take(dim + 1).enumerate() {
                    for k in 0..=dim {
                        q[k] += p[i] * corner[k];
                    }
                }
                points.push(q);
                weights.push(w * scale);
            }
        }
        Self { points, weights, order: self.order }
    }
}

fn reference_corners(dim: usize) -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for (i, row) in c.iter_mut().enumerate().take(dim + 1) {
        row[i] = 1.0;
    }
    c
}

fn mid(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2]), 0.5 * (a[3] + b[3])]
}

/// Regular subdivision into 4 triangles or 8 tetrahedra (Bey's rule).
fn red_children(c: &[[f64; 4]; 4], dim: usize) -> Vec<[[f64; 4]; 4]> {
    let z = [0.0; 4];
    if dim == 2 {
        let (m01, m02, m12) = (mid(&c[0], &c[1]), mid(&c[0], &c[2]), mid(&c[1], &c[2]));
        vec![
            [c[0], m01, m02, z],
            [m01, c[1], m12, z],
            [m02, m12, c[2], z],
            [m01, m12, m02, z],
        ]
    } else {
        let m01 = mid(&c[0], &c[1]);
        let m02 = mid(&c[0], &c[2]);
        let m03 = mid(&c[0], &c[3]);
        let m12 = mid(&c[1], &c[2]);
        let m13 = mid(&c[1], &c[3]);
        let m23 = mid(&c[2], &c[3]);
        vec![
            [c[0], m01, m02, m03],
            [m01, c[1], m12, m13],
            [m02, m12, c[2], m23],
            [m03, m13, m23, c[3]],
            [m01, m02, m03, m13],
            [m01, m02, m12, m13],
            [m02, m03, m13, m23],
            [m02, m12, m13, m23],
        ]
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
