//! Numerical integration on triangles.
//!
//! Symmetric rules are tabulated for degrees up to 6 (the assembly default;
//! integrands of products of cubic derivatives never exceed degree 6).
//! Higher degrees, used for error norms against non-polynomial solutions,
//! fall back to a collapsed Gauss-Legendre product rule, which is exact for
//! the requested total degree but not symmetric.

use crate::bb::BbError;
use crate::geometry::{signed_area, Pt};
use crate::scalar::Real;

/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights sum to one; a physical integral is `area * sum(w_i * f(x_i))`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<S: Real> {
    pub nodes: Vec<[S; 3]>,
    pub weights: Vec<S>,
    pub degree: usize,
}

impl<S: Real> QuadratureRule<S> {
    /// A rule with exactness at least `degree`.
    pub fn with_degree(degree: usize) -> Result<Self, BbError> {
        if degree == 0 || degree > 20 {
            return Err(BbError::UnsupportedQuadratureDegree(degree));
        }
        Ok(match degree {
            1 => Self::from_f64(vec![([1.0 / 3.0, 1.0 / 3.0], 1.0)], 1),
            2 => Self::symmetric(&[Orbit::Three(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0)], 2),
            3 | 4 => Self::symmetric(
                &[
                    Orbit::Three(0.816847572980459, 0.091576213509771, 0.109951743655322),
                    Orbit::Three(0.108103018168070, 0.445948490915965, 0.223381589678011),
                ],
                4,
            ),
            5 => Self::symmetric(
                &[
                    Orbit::One(0.225),
                    Orbit::Three(0.059715871789770, 0.470142064105115, 0.132394152788506),
                    Orbit::Three(0.797426985353087, 0.101286507323456, 0.125939180544827),
                ],
                5,
            ),
            6 => Self::symmetric(
                &[
                    Orbit::Three(0.873821971016996, 0.063089014491502, 0.050844906370207),
                    Orbit::Three(0.501426509658179, 0.249286745170910, 0.116786275726379),
                    Orbit::Six(
                        0.636502499121399,
                        0.310352451033785,
                        0.053145049844816,
                        0.082851075618374,
                    ),
                ],
                6,
            ),
            d => Self::collapsed_product(d),
        })
    }

    fn from_f64(pts: Vec<([f64; 2], f64)>, degree: usize) -> Self {
        let mut nodes = Vec::with_capacity(pts.len());
        let mut weights = Vec::with_capacity(pts.len());
        for ([l1, l2], w) in pts {
            nodes.push([S::of(l1), S::of(l2), S::of(1.0 - l1 - l2)]);
            weights.push(S::of(w));
        }
        Self {
            nodes,
            weights,
            degree,
        }
    }

    fn symmetric(orbits: &[Orbit], degree: usize) -> Self {
        let mut pts: Vec<([f64; 2], f64)> = Vec::new();
        for orbit in orbits {
            match *orbit {
                Orbit::One(w) => pts.push(([1.0 / 3.0, 1.0 / 3.0], w)),
                Orbit::Three(a, b, w) => {
                    pts.push(([a, b], w));
                    pts.push(([b, a], w));
                    pts.push(([b, b], w));
                }
                Orbit::Six(a, b, c, w) => {
                    for perm in [[a, b], [a, c], [b, a], [b, c], [c, a], [c, b]] {
                        pts.push((perm, w));
                    }
                }
            }
        }
        Self::from_f64(pts, degree)
    }

    /// Collapsed Gauss-Legendre product rule, exact for total degree `d`.
    fn collapsed_product(d: usize) -> Self {
        let nu = (d + 2) / 2; // 2*nu - 1 >= d
        let nv = (d + 3) / 2; // handles the extra Jacobian factor (1 - v)
        let (xu, wu) = gauss_legendre_01(nu);
        let (xv, wv) = gauss_legendre_01(nv);
        let mut pts = Vec::with_capacity(nu * nv);
        for (u, cu) in xu.iter().zip(&wu) {
            for (v, cv) in xv.iter().zip(&wv) {
                // (u, v) in the unit square maps to (x, y) = (u(1-v), v);
                // the Jacobian is (1 - v). Weights are normalized so they
                // sum to one on the reference triangle (area one half).
                let x = u * (1.0 - v);
                let y = *v;
                let w = cu * cv * (1.0 - v) * 2.0;
                pts.push(([x, y], w));
            }
        }
        Self::from_f64(pts, d)
    }

    /// Integrates `f` over the physical triangle `corners`.
    pub fn integrate<F: FnMut(&Pt<S>) -> S>(&self, corners: &[Pt<S>; 3], mut f: F) -> S {
        let area = signed_area(&corners[0], &corners[1], &corners[2]).abs();
        let mut acc = S::zero();
        for (b, w) in self.nodes.iter().zip(&self.weights) {
            let p = Pt::from(
                corners[0].coords * b[0] + corners[1].coords * b[1] + corners[2].coords * b[2],
            );
            acc += *w * f(&p);
        }
        acc * area
    }

    /// Physical quadrature points on a triangle.
    pub fn points_on<'a>(
        &'a self,
        corners: &'a [Pt<S>; 3],
    ) -> impl Iterator<Item = (Pt<S>, S)> + 'a {
        let area = signed_area(&corners[0], &corners[1], &corners[2]).abs();
        self.nodes.iter().zip(&self.weights).map(move |(b, w)| {
            let p = Pt::from(
                corners[0].coords * b[0] + corners[1].coords * b[1] + corners[2].coords * b[2],
            );
            (p, *w * area)
        })
    }
}

enum Orbit {
    One(f64),
    /// Point (a, b, b) and its three permutations, each with weight w.
    Three(f64, f64, f64),
    /// All six permutations of (a, b, c), each with weight w.
    Six(f64, f64, f64, f64),
}

/// Gauss-Legendre nodes and weights on [0, 1].
fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (x + 1.0));
        weights.push(0.5 * w);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
