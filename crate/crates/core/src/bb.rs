//! Cubic Bernstein-Bezier machinery on triangles: evaluation, derivatives,
//! blossoms, and smoothness-jump measurement across shared edges.

use crate::geometry::{barycentric, barycentric_dir, Pt, Vec2};
use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BbError {
    #[error("derivative order {0}+{1} exceeds polynomial degree 3")]
    OrderTooHigh(usize, usize),
    #[error("patches do not share the requested edge")]
    EdgeNotShared,
    #[error("unsupported quadrature degree {0}")]
    UnsupportedQuadratureDegree(usize),
}

/// Number of Bernstein coefficients of a bivariate polynomial of `degree`.
#[inline]
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Canonical position of the multi-index `(i, j, k)` with `i + j + k = d`:
/// `i` descending, then `j` descending.
#[inline]
pub const fn mi_index(i: usize, j: usize, k: usize) -> usize {
    let d = i + j + k;
    (d - i) * (d - i + 1) / 2 + (d - i - j)
}

/// Multi-indices of degree `d` in canonical order.
pub fn multi_indices(d: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(coeff_count(d));
    for i in (0..=d).rev() {
        for j in (0..=d - i).rev() {
            out.push([i, j, d - i - j]);
        }
    }
    out
}

/// Domain point (Greville abscissa) of a multi-index on a triangle.
pub fn domain_point<S: Real>(corners: &[Pt<S>; 3], mi: [usize; 3], d: usize) -> Pt<S> {
    let w = S::of_usize(d);
    Pt::from(
        (corners[0].coords * S::of_usize(mi[0])
            + corners[1].coords * S::of_usize(mi[1])
            + corners[2].coords * S::of_usize(mi[2]))
            / w,
    )
}

/// One de Casteljau step: degree `d` coefficients combined with barycentric
/// weights `b` give degree `d - 1` coefficients.
fn decasteljau_step<S: Real>(coeffs: &[S], d: usize, b: &[S; 3]) -> Vec<S> {
    let mut out = vec![S::zero(); coeff_count(d - 1)];
    for (pos, mi) in multi_indices(d - 1).into_iter().enumerate() {
        let [i, j, k] = mi;
        out[pos] = b[0] * coeffs[mi_index(i + 1, j, k)]
            + b[1] * coeffs[mi_index(i, j + 1, k)]
            + b[2] * coeffs[mi_index(i, j, k + 1)];
    }
    out
}

fn eval_bary<S: Real>(coeffs: &[S], degree: usize, b: &[S; 3]) -> S {
    if degree == 0 {
        return coeffs[0];
    }
    let mut cur = coeffs.to_vec();
    for d in (1..=degree).rev() {
        cur = decasteljau_step(&cur, d, b);
    }
    cur[0]
}

/// Polynomial of degree <= 3 on a triangle in Bernstein-Bezier form.
///
/// Derivatives of a [`BBPatch`] are carried by the same structure with a
/// lower degree.
#[derive(Debug, Clone, PartialEq)]
pub struct BBPoly<S: Real> {
    pub corners: [Pt<S>; 3],
    pub degree: usize,
    pub coeffs: Vec<S>,
}

/// Cubic Bernstein-Bezier patch: 10 coefficients in canonical order
/// (3,0,0), (2,1,0), (2,0,1), (1,2,0), (1,1,1), (1,0,2), (0,3,0), (0,2,1),
/// (0,1,2), (0,0,3).
pub type BBPatch<S> = BBPoly<S>;

impl<S: Real> BBPoly<S> {
    pub fn new(corners: [Pt<S>; 3], degree: usize, coeffs: Vec<S>) -> Self {
        assert_eq!(coeffs.len(), coeff_count(degree));
        Self {
            corners,
            degree,
            coeffs,
        }
    }

    pub fn cubic(corners: [Pt<S>; 3], coeffs: [S; 10]) -> Self {
        Self::new(corners, 3, coeffs.to_vec())
    }

    pub fn constant(corners: [Pt<S>; 3], value: S) -> Self {
        Self::new(corners, 3, vec![value; 10])
    }

    pub fn zero(corners: [Pt<S>; 3]) -> Self {
        Self::constant(corners, S::zero())
    }

    /// Evaluates the polynomial at `p` (polynomial extension outside the
    /// triangle is allowed).
    pub fn eval(&self, p: &Pt<S>) -> S {
        let b = barycentric(&self.corners, p);
        eval_bary(&self.coeffs, self.degree, &b)
    }

    /// Directional derivative as a patch of one degree lower.
    pub fn derivative_dir(&self, u: &Vec2<S>) -> BBPoly<S> {
        assert!(self.degree >= 1);
        let a = barycentric_dir(&self.corners, u);
        let d = self.degree;
        let mut out = vec![S::zero(); coeff_count(d - 1)];
        for (pos, mi) in multi_indices(d - 1).into_iter().enumerate() {
            let [i, j, k] = mi;
            out[pos] = S::of_usize(d)
                * (a[0] * self.coeffs[mi_index(i + 1, j, k)]
                    + a[1] * self.coeffs[mi_index(i, j + 1, k)]
                    + a[2] * self.coeffs[mi_index(i, j, k + 1)]);
        }
        BBPoly::new(self.corners, d - 1, out)
    }

    /// Cartesian derivative `D_x^a D_y^b` as a lower-degree patch.
    pub fn derivative(&self, a: usize, b: usize) -> Result<BBPoly<S>, BbError> {
        if a + b > self.degree {
            return Err(BbError::OrderTooHigh(a, b));
        }
        let ex = Vec2::new(S::one(), S::zero());
        let ey = Vec2::new(S::zero(), S::one());
        let mut cur = self.clone();
        for _ in 0..a {
            cur = cur.derivative_dir(&ex);
        }
        for _ in 0..b {
            cur = cur.derivative_dir(&ey);
        }
        Ok(cur)
    }

    /// Blossom (polar form) evaluated at `degree` point arguments.
    pub fn blossom(&self, args: &[Pt<S>]) -> S {
        assert_eq!(args.len(), self.degree);
        let mut cur = self.coeffs.clone();
        let mut d = self.degree;
        for p in args {
            let b = barycentric(&self.corners, p);
            cur = decasteljau_step(&cur, d, &b);
            d -= 1;
        }
        cur[0]
    }

    pub fn max_abs_coeff(&self) -> S {
        self.coeffs
            .iter()
            .fold(S::zero(), |m, c| if c.abs() > m { c.abs() } else { m })
    }
}

/// Linear functional on the 10 cubic coefficients of a patch, built by
/// probing the functional with unit coefficient vectors.
pub fn probe_row<S: Real, F: FnMut(&BBPatch<S>) -> S>(
    corners: &[Pt<S>; 3],
    mut f: F,
) -> [S; 10] {
    let mut row = [S::zero(); 10];
    let mut coeffs = [S::zero(); 10];
    for m in 0..10 {
        coeffs[m] = S::one();
        let patch = BBPatch::cubic(*corners, coeffs);
        row[m] = f(&patch);
        coeffs[m] = S::zero();
    }
    row
}

/// Cubic polynomial in monomial form `sum c[a][b] x^a y^b`, `a + b <= 3`,
/// with coefficients ordered 1, x, y, x2, xy, y2, x3, x2y, xy2, y3.
#[derive(Debug, Clone, Copy)]
pub struct MonomialCubic<S: Real>(pub [S; 10]);

impl<S: Real> MonomialCubic<S> {
    const EXPONENTS: [(usize, usize); 10] = [
        (0, 0),
        (1, 0),
        (0, 1),
        (2, 0),
        (1, 1),
        (0, 2),
        (3, 0),
        (2, 1),
        (1, 2),
        (0, 3),
    ];

    pub fn eval(&self, p: &Pt<S>) -> S {
        let mut acc = S::zero();
        for (c, (a, b)) in self.0.iter().zip(Self::EXPONENTS) {
            acc += *c * p.x.powi(a as i32) * p.y.powi(b as i32);
        }
        acc
    }
}

/// Exact conversion of a cubic in monomial form to Bernstein-Bezier form on
/// a triangle, via collocation at the ten domain points.
pub fn poly_to_bb<S: Real>(poly: &MonomialCubic<S>, corners: &[Pt<S>; 3]) -> BBPatch<S> {
    use nalgebra::{DMatrix, DVector};
    let mis = multi_indices(3);
    let pts: Vec<Pt<S>> = mis.iter().map(|&mi| domain_point(corners, mi, 3)).collect();
    // Bernstein collocation matrix at the domain points.
    let mut b = DMatrix::<S>::zeros(10, 10);
    for (r, p) in pts.iter().enumerate() {
        let row = probe_row(corners, |patch| patch.eval(p));
        for c in 0..10 {
            b[(r, c)] = row[c];
        }
    }
    let rhs = DVector::from_iterator(10, pts.iter().map(|p| poly.eval(p)));
    let sol = b.lu().solve(&rhs).expect("collocation matrix is invertible");
    let mut coeffs = [S::zero(); 10];
    for m in 0..10 {
        coeffs[m] = sol[m];
    }
    BBPatch::cubic(*corners, coeffs)
}

fn corner_near<S: Real>(corners: &[Pt<S>; 3], p: &Pt<S>, tol: S) -> bool {
    corners.iter().any(|c| (c - p).norm() <= tol)
}

/// Maximum jump of the function (order 0), the gradient (order 1), or all
/// Cartesian second derivatives (order 2) across a shared edge, sampled at
/// `samples` uniformly spaced points and normalized by
/// `max(1, max |coefficient|)` of the two patches.
pub fn smoothness_residual<S: Real>(
    fa: &BBPatch<S>,
    fb: &BBPatch<S>,
    edge: (&Pt<S>, &Pt<S>),
    order: usize,
    samples: usize,
) -> Result<S, BbError> {
    let (p, q) = edge;
    let len = (q - p).norm();
    let tol = S::of(1e-9) * len;
    if !(corner_near(&fa.corners, p, tol)
        && corner_near(&fa.corners, q, tol)
        && corner_near(&fb.corners, p, tol)
        && corner_near(&fb.corners, q, tol))
    {
        return Err(BbError::EdgeNotShared);
    }
    let scale = {
        let m = fa.max_abs_coeff().max(fb.max_abs_coeff());
        if m > S::one() {
            m
        } else {
            S::one()
        }
    };
    let derivs: Vec<(usize, usize)> = match order {
        0 => vec![(0, 0)],
        1 => vec![(1, 0), (0, 1)],
        2 => vec![(2, 0), (1, 1), (0, 2)],
        _ => return Err(BbError::OrderTooHigh(order, 0)),
    };
    let mut max_jump = S::zero();
    for (a, b) in derivs {
        let da = fa.derivative(a, b)?;
        let db = fb.derivative(a, b)?;
        for s in 0..samples {
            let t = if samples == 1 {
                S::of(0.5)
            } else {
                S::of_usize(s) / S::of_usize(samples - 1)
            };
            let x = Pt::from(p.coords + (q - p) * t);
            let jump = (da.eval(&x) - db.eval(&x)).abs();
            if jump > max_jump {
                max_jump = jump;
            }
        }
    }
    Ok(max_jump / scale)
}
