//! The three applications: least-squares fitting, the Poisson problem with
//! homogeneous Dirichlet conditions, and the clamped biharmonic problem,
//! together with Sobolev error norms and convergence studies.

use crate::assembly::{assemble_load, assemble_matrix, restrict, AssemblyError, Restriction};
use crate::basis::{build_basis, classify_boundary, BasisError, BoundaryClass, SplineBasis, SplineFunction};
use crate::extraction::{ExtractionChain, ExtractionError};
use crate::geometry::Pt;
use crate::mesh::{MeshError, Triangulation};
use crate::psrefine::{PsError, PsRefinement, SplitStrategy};
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;
use crate::sparse::{BandedCholesky, SparseError};
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ps(#[from] PsError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SparseError),
    #[error(transparent)]
    Bb(#[from] crate::bb::BbError),
    #[error("solver residual {residual} exceeds the tolerance {limit}")]
    ResidualTooLarge { residual: f64, limit: f64 },
    #[error("manufactured derivatives disagree with finite differences ({0})")]
    DerivativeValidation(String),
}

// ---------------------------------------------------------------------------
// Trigonometric polynomials: closed under differentiation of any order
// ---------------------------------------------------------------------------

/// Sum of terms `amp * sin(kx x + ky y + phase)`.
#[derive(Debug, Clone)]
pub struct TrigPoly<S: Real> {
    pub terms: Vec<TrigTerm<S>>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrigTerm<S: Real> {
    pub amp: S,
    pub kx: S,
    pub ky: S,
    pub phase: S,
}

impl<S: Real> TrigPoly<S> {
    pub fn wave(amp: S, kx: S, ky: S, phase: S) -> Self {
        Self {
            terms: vec![TrigTerm { amp, kx, ky, phase }],
        }
    }

    pub fn eval(&self, p: &Pt<S>) -> S {
        self.terms
            .iter()
            .fold(S::zero(), |acc, t| {
                acc + t.amp * (t.kx * p.x + t.ky * p.y + t.phase).sin()
            })
    }

    /// `D_x^a D_y^b`: each term picks up `kx^a ky^b` and a quarter-period
    /// phase shift per derivative order.
    pub fn derivative(&self, a: usize, b: usize) -> Self {
        let half_pi = S::PI() / S::of(2.0);
        let terms = self
            .terms
            .iter()
            .map(|t| TrigTerm {
                amp: t.amp * t.kx.powi(a as i32) * t.ky.powi(b as i32),
                kx: t.kx,
                ky: t.ky,
                phase: t.phase + half_pi * S::of_usize(a + b),
            })
            .collect();
        Self { terms }
    }

    /// Squared-frequency multiplication: the bilaplacian of each plane wave
    /// is `(kx^2 + ky^2)^2` times itself.
    pub fn bilaplacian(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let k2 = t.kx * t.kx + t.ky * t.ky;
                TrigTerm {
                    amp: t.amp * k2 * k2,
                    ..*t
                }
            })
            .collect();
        Self { terms }
    }

    /// Multiplies by `cos(kx x + ky y)` using the product-to-sum identity.
    pub fn mul_cos(&self, kx: S, ky: S) -> Self {
        let half = S::of(0.5);
        let mut terms = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            terms.push(TrigTerm {
                amp: t.amp * half,
                kx: t.kx + kx,
                ky: t.ky + ky,
                phase: t.phase,
            });
            terms.push(TrigTerm {
                amp: t.amp * half,
                kx: t.kx - kx,
                ky: t.ky - ky,
                phase: t.phase,
            });
        }
        Self { terms }
    }

    pub fn scaled(&self, factor: S) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| TrigTerm {
                amp: t.amp * factor,
                ..*t
            })
            .collect();
        Self { terms }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().copied());
        Self { terms }
    }
}

// ---------------------------------------------------------------------------
// Manufactured cases
// ---------------------------------------------------------------------------

/// The problem family a manufactured case is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    LeastSquares,
    Poisson,
    Biharmonic,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::LeastSquares => "fit",
            ProblemKind::Poisson => "poisson",
            ProblemKind::Biharmonic => "biharmonic",
        }
    }
}

/// A manufactured solution on the unit square with closed-form derivatives
/// and the right-hand side of its problem.
pub struct ManufacturedCase<S: Real> {
    pub name: &'static str,
    pub kind: ProblemKind,
    detail: CaseDetail<S>,
}

enum CaseDetail<S: Real> {
    /// sin(7 pi (1-x)(1-y))
    OscillatingSheet,
    /// 16 x(1-x) y(1-y) cos(16 pi ((x-1/2)^2 + (y-1/2)^2))
    RadialRipple,
    /// sin(2 pi (2x - y)) sin^4(pi x) sin^4(pi y), as a trig polynomial
    ClampedWave { u: TrigPoly<S>, f: TrigPoly<S> },
}

impl<S: Real> ManufacturedCase<S> {
    pub fn least_squares_case() -> Self {
        Self {
            name: "lsq-oscillating-sheet",
            kind: ProblemKind::LeastSquares,
            detail: CaseDetail::OscillatingSheet,
        }
    }

    pub fn poisson_case() -> Self {
        Self {
            name: "poisson-radial-ripple",
            kind: ProblemKind::Poisson,
            detail: CaseDetail::RadialRipple,
        }
    }

    pub fn biharmonic_case() -> Self {
        let pi = S::PI();
        let two_pi = S::of(2.0) * pi;
        // sin^4(t) = 3/8 - 1/2 cos(2t) + 1/8 cos(4t), applied in x and y to
        // the carrier wave sin(2 pi (2x - y)).
        let carrier = TrigPoly::wave(S::one(), S::of(4.0) * pi, -two_pi, S::zero());
        let apply_sin4 = |t: &TrigPoly<S>, kx: S, ky: S| -> TrigPoly<S> {
            t.scaled(S::of(3.0 / 8.0))
                .plus(&t.mul_cos(kx, ky).scaled(S::of(-0.5)))
                .plus(&t.mul_cos(kx + kx, ky + ky).scaled(S::of(1.0 / 8.0)))
        };
        let u = apply_sin4(&apply_sin4(&carrier, two_pi, S::zero()), S::zero(), two_pi);
        let f = u.bilaplacian();
        Self {
            name: "biharmonic-clamped-wave",
            kind: ProblemKind::Biharmonic,
            detail: CaseDetail::ClampedWave { u, f },
        }
    }

    pub fn for_problem(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::LeastSquares => Self::least_squares_case(),
            ProblemKind::Poisson => Self::poisson_case(),
            ProblemKind::Biharmonic => Self::biharmonic_case(),
        }
    }

    pub fn u(&self, p: &Pt<S>) -> S {
        match &self.detail {
            CaseDetail::OscillatingSheet => sheet_parts::<S>(p).0,
            CaseDetail::RadialRipple => ripple_parts::<S>(p).0,
            CaseDetail::ClampedWave { u, .. } => u.eval(p),
        }
    }

    /// Gradient `(u_x, u_y)`.
    pub fn grad(&self, p: &Pt<S>) -> [S; 2] {
        match &self.detail {
            CaseDetail::OscillatingSheet => {
                let (_, g) = sheet_parts::<S>(p);
                g
            }
            CaseDetail::RadialRipple => {
                let (_, g, _) = ripple_grad_hess::<S>(p);
                g
            }
            CaseDetail::ClampedWave { u, .. } => {
                [u.derivative(1, 0).eval(p), u.derivative(0, 1).eval(p)]
            }
        }
    }

    /// Hessian `(u_xx, u_xy, u_yy)`.
    pub fn hess(&self, p: &Pt<S>) -> [S; 3] {
        match &self.detail {
            CaseDetail::OscillatingSheet => sheet_hess::<S>(p),
            CaseDetail::RadialRipple => {
                let (_, _, h) = ripple_grad_hess::<S>(p);
                h
            }
            CaseDetail::ClampedWave { u, .. } => [
                u.derivative(2, 0).eval(p),
                u.derivative(1, 1).eval(p),
                u.derivative(0, 2).eval(p),
            ],
        }
    }

    /// Problem right-hand side: the target itself for fitting, `-lap u` for
    /// the second-order problem, `lap^2 u` for the fourth-order problem.
    pub fn rhs(&self, p: &Pt<S>) -> S {
        match &self.detail {
            CaseDetail::OscillatingSheet => self.u(p),
            CaseDetail::RadialRipple => {
                let (_, _, h) = ripple_grad_hess::<S>(p);
                -(h[0] + h[2])
            }
            CaseDetail::ClampedWave { f, .. } => f.eval(p),
        }
    }

    /// Validates the closed-form derivatives against five-point central
    /// finite differences at 100 deterministic sample points, and the
    /// biharmonic right-hand side against second differences of the
    /// Laplacian. Relative agreement of 1e-6 is required.
    pub fn validate_derivatives(&self) -> Result<(), ProblemError> {
        let mut worst = (0.0f64, "");
        let mut check = |label: &'static str, got: f64, want: f64| {
            let rel = (got - want).abs() / (1.0 + want.abs());
            if rel > worst.0 {
                worst = (rel, label);
            }
        };
        let h1 = 1e-5;
        let h2 = 3.0e-5;
        for i in 0..10 {
            for j in 0..10 {
                let x = 0.05 + 0.09 * i as f64 + 0.013 * ((j % 3) as f64);
                let y = 0.05 + 0.09 * j as f64 + 0.007 * ((i % 4) as f64);
                let p = Pt::new(S::of(x), S::of(y));
                let u = |dx: f64, dy: f64| -> f64 {
                    self.u(&Pt::new(S::of(x + dx), S::of(y + dy))).to_f64_lossy()
                };
                let g = self.grad(&p).map(|v| v.to_f64_lossy());
                check("u_x", g[0], five_point(|t| u(t, 0.0), h1));
                check("u_y", g[1], five_point(|t| u(0.0, t), h1));
                let hs = self.hess(&p).map(|v| v.to_f64_lossy());
                let gx = |dx: f64, dy: f64| -> f64 {
                    self.grad(&Pt::new(S::of(x + dx), S::of(y + dy)))[0].to_f64_lossy()
                };
                let gy = |dx: f64, dy: f64| -> f64 {
                    self.grad(&Pt::new(S::of(x + dx), S::of(y + dy)))[1].to_f64_lossy()
                };
                check("u_xx", hs[0], five_point(|t| gx(t, 0.0), h2));
                check("u_xy", hs[1], five_point(|t| gx(0.0, t), h2));
                check("u_yy", hs[2], five_point(|t| gy(0.0, t), h2));
                if self.kind == ProblemKind::Biharmonic {
                    let lap = |dx: f64, dy: f64| -> f64 {
                        let h = self.hess(&Pt::new(S::of(x + dx), S::of(y + dy)));
                        (h[0] + h[2]).to_f64_lossy()
                    };
                    let want = five_point_second(|t| lap(t, 0.0), 1e-4)
                        + five_point_second(|t| lap(0.0, t), 1e-4);
                    check("lap^2 u", self.rhs(&p).to_f64_lossy(), want);
                }
            }
        }
        if worst.0 > 1e-6 {
            return Err(ProblemError::DerivativeValidation(format!(
                "{} off by {:.3e}",
                worst.1, worst.0
            )));
        }
        Ok(())
    }
}

fn five_point<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn five_point_second<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
}

/// sin(7 pi (1-x)(1-y)) and its gradient.
fn sheet_parts<S: Real>(p: &Pt<S>) -> (S, [S; 2]) {
    let c = S::of(7.0) * S::PI();
    let (mx, my) = (S::one() - p.x, S::one() - p.y);
    let g = c * mx * my;
    let (sin_g, cos_g) = (g.sin(), g.cos());
    (sin_g, [cos_g * (-c * my), cos_g * (-c * mx)])
}

fn sheet_hess<S: Real>(p: &Pt<S>) -> [S; 3] {
    let c = S::of(7.0) * S::PI();
    let (mx, my) = (S::one() - p.x, S::one() - p.y);
    let g = c * mx * my;
    let (gx, gy) = (-c * my, -c * mx);
    let (sin_g, cos_g) = (g.sin(), g.cos());
    [
        -sin_g * gx * gx,
        -sin_g * gx * gy + cos_g * c,
        -sin_g * gy * gy,
    ]
}

/// 16 x(1-x) y(1-y) cos(16 pi ((x-1/2)^2 + (y-1/2)^2)) with derivatives.
fn ripple_parts<S: Real>(p: &Pt<S>) -> (S, S, S) {
    let half = S::of(0.5);
    let s = (p.x - half) * (p.x - half) + (p.y - half) * (p.y - half);
    let theta = S::of(16.0) * S::PI() * s;
    let poly = S::of(16.0) * p.x * (S::one() - p.x) * p.y * (S::one() - p.y);
    (poly * theta.cos(), poly, theta)
}

fn ripple_grad_hess<S: Real>(p: &Pt<S>) -> (S, [S; 2], [S; 3]) {
    let one = S::one();
    let half = S::of(0.5);
    let c16 = S::of(16.0);
    let x = p.x;
    let y = p.y;
    let poly = c16 * x * (one - x) * y * (one - y);
    let px = c16 * (one - S::of(2.0) * x) * y * (one - y);
    let py = c16 * x * (one - x) * (one - S::of(2.0) * y);
    let pxx = -S::of(32.0) * y * (one - y);
    let pyy = -S::of(32.0) * x * (one - x);
    let pxy = c16 * (one - S::of(2.0) * x) * (one - S::of(2.0) * y);
    let s = (x - half) * (x - half) + (y - half) * (y - half);
    let theta = c16 * S::PI() * s;
    let tx = S::of(32.0) * S::PI() * (x - half);
    let ty = S::of(32.0) * S::PI() * (y - half);
    let txx = S::of(32.0) * S::PI();
    let (sin_t, cos_t) = (theta.sin(), theta.cos());
    let phi = cos_t;
    let phix = -sin_t * tx;
    let phiy = -sin_t * ty;
    let phixx = -cos_t * tx * tx - sin_t * txx;
    let phiyy = -cos_t * ty * ty - sin_t * txx;
    let phixy = -cos_t * tx * ty;
    let u = poly * phi;
    let grad = [px * phi + poly * phix, py * phi + poly * phiy];
    let hess = [
        pxx * phi + S::of(2.0) * px * phix + poly * phixx,
        pxy * phi + px * phiy + py * phix + poly * phixy,
        pyy * phi + S::of(2.0) * py * phiy + poly * phiyy,
    ];
    (u, grad, hess)
}

// ---------------------------------------------------------------------------
// Pipeline: basis + extraction + boundary flags for one refinement level
// ---------------------------------------------------------------------------

/// Everything needed to run the three problems in the three spaces over one
/// Powell-Sabin refinement.
pub struct Pipeline<S: Real> {
    pub basis: SplineBasis<S>,
    pub chain: ExtractionChain,
    /// Boundary classification per space, recomputed from the extracted
    /// functions' own coefficients.
    pub flags: [Vec<BoundaryClass>; 3],
}

impl<S: Real> Pipeline<S> {
    pub fn from_ps(ps: PsRefinement<S>) -> Result<Self, ProblemError> {
        let basis = build_basis(ps)?;
        let chain = ExtractionChain::build(&basis)?;
        let flags0 = basis.boundary_class.clone();
        let mut flags = [flags0, Vec::new(), Vec::new()];
        for r in [1usize, 2] {
            let mats = chain.materialize(&basis, r);
            let refs: Vec<&SplineFunction<S>> = mats.iter().collect();
            flags[r] = classify_boundary(&basis.ps, &refs);
        }
        Ok(Self {
            basis,
            chain,
            flags,
        })
    }

    pub fn build(
        mesh: &Triangulation<S>,
        level: usize,
        strategy: SplitStrategy,
    ) -> Result<Self, ProblemError> {
        let refined = mesh.uniform_refine(level)?;
        let ps = PsRefinement::build(refined, strategy)?;
        Self::from_ps(ps)
    }

    /// Converts space-`r` coefficients to full-space coefficients.
    pub fn to_full_space(&self, r: usize, coeffs: &DVector<S>) -> Result<DVector<S>, ProblemError> {
        let mut out = coeffs.clone();
        for h in self.chain.extended_to(r).into_iter().rev() {
            out = h.apply_transpose(&out)?;
        }
        Ok(out)
    }
}

/// The bilinear form and data vector of one problem, assembled once over
/// the full space; reduced-space systems are obtained by congruence with
/// the extended extraction matrices, so the element loop runs once.
pub struct ProblemForms<S: Real> {
    pub kind: ProblemKind,
    pub form0: crate::sparse::CsrMatrix<S>,
    pub load0: DVector<S>,
    pub quad: QuadratureConfig,
}

impl<S: Real> ProblemForms<S> {
    pub fn assemble(
        pipe: &Pipeline<S>,
        kind: ProblemKind,
        case: &ManufacturedCase<S>,
        quad: QuadratureConfig,
    ) -> Result<Self, ProblemError> {
        let blocks: &[(usize, usize, usize)] = match kind {
            ProblemKind::LeastSquares => &[(0, 0, 0)],
            ProblemKind::Poisson => &[(1, 1, 1), (0, 0, 1)],
            ProblemKind::Biharmonic => &[(2, 2, 2), (2, 0, 2), (0, 2, 2), (0, 0, 2)],
        };
        let mut form0: Option<crate::sparse::CsrMatrix<S>> = None;
        for &(alpha, beta, gamma) in blocks {
            let m = assemble_matrix(&pipe.basis, &pipe.chain, 0, alpha, beta, gamma, quad.assembly)?;
            form0 = Some(match form0 {
                None => m.matrix,
                Some(s) => s.add(&m.matrix),
            });
        }
        let load0 = assemble_load(&pipe.basis, &pipe.chain, 0, &|p| case.rhs(p), quad.norms)?;
        Ok(Self {
            kind,
            form0: form0.expect("at least one block"),
            load0,
            quad,
        })
    }

    /// System and data in space `r` via the extraction chain.
    pub fn in_space(
        &self,
        pipe: &Pipeline<S>,
        r: usize,
    ) -> Result<(crate::assembly::SystemMatrix<S>, DVector<S>), ProblemError> {
        let mut matrix = self.form0.clone();
        let mut load = self.load0.clone();
        for h in pipe.chain.extended_to(r) {
            matrix = h.congruence(&matrix)?;
            load = h.apply(&load)?;
        }
        Ok((
            crate::assembly::SystemMatrix {
                matrix,
                space: r,
                orders: (0, 0, 0),
                quadrature_degree: self.quad.assembly,
            },
            load,
        ))
    }

    /// Solves the problem in space `r`: unrestricted for fitting, zero
    /// trace for the second-order problem, zero trace and normal
    /// derivative for the fourth-order problem.
    pub fn solve(
        &self,
        pipe: &Pipeline<S>,
        r: usize,
        case: &ManufacturedCase<S>,
    ) -> Result<SolveResult<S>, ProblemError> {
        let (system, load) = self.in_space(pipe, r)?;
        let (residual_limit, need_trace, need_normal) = match self.kind {
            ProblemKind::LeastSquares => (1e-12, false, false),
            ProblemKind::Poisson => (1e-12, true, false),
            ProblemKind::Biharmonic => (1e-10, true, true),
        };
        let (matrix, reduced_load, restriction) = if need_trace || need_normal {
            restrict(&system, &load, &pipe.flags[r], need_trace, need_normal)?
        } else {
            let n = system.matrix.nrows;
            (
                system.matrix.clone(),
                load.clone(),
                Restriction {
                    keep: (0..n).collect(),
                    full_dim: n,
                },
            )
        };
        let (reduced, residual) = solve_spd(&matrix, &reduced_load, residual_limit)?;
        let coeffs = restriction.scatter(&reduced);
        let (errors, energy_error) = error_norms(pipe, r, &coeffs, case, self.quad.norms)?;
        Ok(SolveResult {
            space: r,
            ndof: restriction.keep.len(),
            coeffs,
            errors,
            energy_error,
            solver_residual: residual,
        })
    }
}

/// Quadrature degrees: exact assembly for products of cubics, higher-order
/// rules for data terms and error norms.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub assembly: usize,
    pub norms: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            assembly: 6,
            norms: 12,
        }
    }
}

/// Result of one solve: coefficients in the chosen space, the number of
/// degrees of freedom, errors, and the linear-solver residual.
#[derive(Debug)]
pub struct SolveResult<S: Real> {
    pub space: usize,
    pub ndof: usize,
    pub coeffs: DVector<S>,
    pub errors: ErrorNorms<S>,
    pub energy_error: S,
    pub solver_residual: S,
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorNorms<S: Real> {
    pub l2: S,
    pub h1: S,
    pub h2: S,
}

/// Full Sobolev error norms of `s - u` by elementwise quadrature, plus the
/// problem-specific energy seminorm of the error.
pub fn error_norms<S: Real>(
    pipe: &Pipeline<S>,
    r: usize,
    coeffs: &DVector<S>,
    case: &ManufacturedCase<S>,
    norm_degree: usize,
) -> Result<(ErrorNorms<S>, S), ProblemError> {
    let full = pipe.to_full_space(r, coeffs)?;
    let s = pipe.basis.combine(&full);
    let ps = &pipe.basis.ps;
    let rule = QuadratureRule::<S>::with_degree(norm_degree)?;
    let mut l2 = S::zero();
    let mut h1 = S::zero();
    let mut h2 = S::zero();
    let mut energy = S::zero();
    for m in 0..ps.micro_triangles.len() {
        let corners = ps.micro_corners(m);
        let patch = match s.patch(ps, m) {
            Some(p) => p,
            None => crate::bb::BBPatch::zero(corners),
        };
        let dx = patch.derivative(1, 0)?;
        let dy = patch.derivative(0, 1)?;
        let dxx = patch.derivative(2, 0)?;
        let dxy = patch.derivative(1, 1)?;
        let dyy = patch.derivative(0, 2)?;
        for (p, w) in rule.points_on(&corners) {
            let e0 = patch.eval(&p) - case.u(&p);
            let g = case.grad(&p);
            let ex = dx.eval(&p) - g[0];
            let ey = dy.eval(&p) - g[1];
            let hs = case.hess(&p);
            let exx = dxx.eval(&p) - hs[0];
            let exy = dxy.eval(&p) - hs[1];
            let eyy = dyy.eval(&p) - hs[2];
            l2 += w * e0 * e0;
            h1 += w * (ex * ex + ey * ey);
            h2 += w * (exx * exx + exy * exy + eyy * eyy);
            energy += w
                * match case.kind {
                    ProblemKind::LeastSquares => e0 * e0,
                    ProblemKind::Poisson => ex * ex + ey * ey,
                    ProblemKind::Biharmonic => (exx + eyy) * (exx + eyy),
                };
        }
    }
    let norms = ErrorNorms {
        l2: l2.sqrt(),
        h1: (l2 + h1).sqrt(),
        h2: (l2 + h1 + h2).sqrt(),
    };
    Ok((norms, energy.sqrt()))
}

fn solve_spd<S: Real>(
    matrix: &crate::sparse::CsrMatrix<S>,
    rhs: &DVector<S>,
    residual_limit: f64,
) -> Result<(DVector<S>, S), ProblemError> {
    let chol = BandedCholesky::factor(matrix)?;
    let (x, residual) = chol.solve(matrix, rhs);
    if residual.to_f64_lossy() > residual_limit {
        return Err(ProblemError::ResidualTooLarge {
            residual: residual.to_f64_lossy(),
            limit: residual_limit,
        });
    }
    Ok((x, residual))
}

/// Least-squares approximation of the case's target in space `r`.
pub fn least_squares_fit<S: Real>(
    pipe: &Pipeline<S>,
    r: usize,
    case: &ManufacturedCase<S>,
    quad: QuadratureConfig,
) -> Result<SolveResult<S>, ProblemError> {
    ProblemForms::assemble(pipe, ProblemKind::LeastSquares, case, quad)?.solve(pipe, r, case)
}

/// Galerkin solution of the homogeneous-Dirichlet second-order problem in
/// the zero-trace subspace of space `r`.
pub fn solve_poisson<S: Real>(
    pipe: &Pipeline<S>,
    r: usize,
    case: &ManufacturedCase<S>,
    quad: QuadratureConfig,
) -> Result<SolveResult<S>, ProblemError> {
    ProblemForms::assemble(pipe, ProblemKind::Poisson, case, quad)?.solve(pipe, r, case)
}

/// Galerkin solution of the clamped fourth-order problem in the subspace of
/// space `r` with zero trace and zero normal derivative.
pub fn solve_biharmonic<S: Real>(
    pipe: &Pipeline<S>,
    r: usize,
    case: &ManufacturedCase<S>,
    quad: QuadratureConfig,
) -> Result<SolveResult<S>, ProblemError> {
    ProblemForms::assemble(pipe, ProblemKind::Biharmonic, case, quad)?.solve(pipe, r, case)
}

/// Dispatches one problem in one space.
pub fn run_problem<S: Real>(
    pipe: &Pipeline<S>,
    kind: ProblemKind,
    r: usize,
    case: &ManufacturedCase<S>,
    quad: QuadratureConfig,
) -> Result<SolveResult<S>, ProblemError> {
    ProblemForms::assemble(pipe, kind, case, quad)?.solve(pipe, r, case)
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub problem: String,
    pub space: usize,
    pub level: usize,
    pub ndof: usize,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub rate_h2: Option<f64>,
    #[serde(skip)]
    pub energy_error: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub strategy: String,
    pub quadrature_assembly: usize,
    pub quadrature_norms: usize,
    pub solver_residuals: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl ConvergenceReport {
    /// CSV in the fixed column layout
    /// `problem,space,level,ndof,l2,h1,h2,rate_l2,rate_h1,rate_h2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("problem,space,level,ndof,l2,h1,h2,rate_l2,rate_h1,rate_h2\n");
        let fmt_rate = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.6}"));
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.12e},{:.12e},{:.12e},{},{},{}\n",
                row.problem,
                row.space,
                row.level,
                row.ndof,
                row.l2,
                row.h1,
                row.h2,
                fmt_rate(row.rate_l2),
                fmt_rate(row.rate_h1),
                fmt_rate(row.rate_h2),
            ));
        }
        out
    }
}

/// Runs one problem for every requested space over a list of levels and
/// tabulates errors with observed rates between consecutive levels.
pub fn convergence_study<S: Real>(
    mesh: &Triangulation<S>,
    kind: ProblemKind,
    spaces: &[usize],
    levels: &[usize],
    strategy: SplitStrategy,
    quad: QuadratureConfig,
) -> Result<ConvergenceReport, ProblemError> {
    let mut reports = convergence_studies(mesh, &[kind], spaces, levels, strategy, quad)?;
    Ok(reports.pop().expect("one report per problem"))
}

/// Runs several problems over the same refinements, building each level's
/// basis and extraction chain once.
pub fn convergence_studies<S: Real>(
    mesh: &Triangulation<S>,
    kinds: &[ProblemKind],
    spaces: &[usize],
    levels: &[usize],
    strategy: SplitStrategy,
    quad: QuadratureConfig,
) -> Result<Vec<ConvergenceReport>, ProblemError> {
    let cases: Vec<ManufacturedCase<S>> = kinds
        .iter()
        .map(|&k| ManufacturedCase::<S>::for_problem(k))
        .collect();
    for case in &cases {
        case.validate_derivatives()?;
    }
    let mut reports: Vec<ConvergenceReport> = kinds
        .iter()
        .map(|k| ConvergenceReport {
            problem: k.name().to_string(),
            strategy: strategy.name().to_string(),
            quadrature_assembly: quad.assembly,
            quadrature_norms: quad.norms,
            solver_residuals: Vec::new(),
            rows: Vec::new(),
        })
        .collect();
    for &level in levels {
        let pipe = Pipeline::build(mesh, level, strategy)?;
        for ((kind, case), report) in kinds.iter().zip(&cases).zip(&mut reports) {
            let forms = ProblemForms::assemble(&pipe, *kind, case, quad)?;
            for &r in spaces {
                let result = forms.solve(&pipe, r, case)?;
                report
                    .solver_residuals
                    .push(result.solver_residual.to_f64_lossy());
                report.rows.push(ReportRow {
                    problem: kind.name().to_string(),
                    space: r,
                    level,
                    ndof: result.ndof,
                    l2: result.errors.l2.to_f64_lossy(),
                    h1: result.errors.h1.to_f64_lossy(),
                    h2: result.errors.h2.to_f64_lossy(),
                    rate_l2: None,
                    rate_h1: None,
                    rate_h2: None,
                    energy_error: result.energy_error.to_f64_lossy(),
                });
            }
        }
    }
    for report in &mut reports {
        fill_rates(&mut report.rows);
    }
    Ok(reports)
}

/// Observed rates between consecutive levels of the same space, measured
/// against the mesh size h proportional to NDOF^(-1/2) (the discretization
/// resolution of the space itself).
fn fill_rates(rows: &mut [ReportRow]) {
    for i in 0..rows.len() {
        let (space, level) = (rows[i].space, rows[i].level);
        let prev = rows[..i]
            .iter()
            .filter(|r| r.space == space && r.level < level)
            .next_back()
            .cloned();
        if let Some(prev) = prev {
            let ratio = (rows[i].ndof as f64 / prev.ndof as f64).sqrt().ln();
            let rate = |e_coarse: f64, e_fine: f64| (e_coarse / e_fine).ln() / ratio;
            rows[i].rate_l2 = Some(rate(prev.l2, rows[i].l2));
            rows[i].rate_h1 = Some(rate(prev.h1, rows[i].h1));
            rows[i].rate_h2 = Some(rate(prev.h2, rows[i].h2));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bb::MonomialCubic;
    use approx::assert_relative_eq;

    fn unit_square() -> Triangulation<f64> {
        Triangulation::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.0, 0.0),
                Pt::new(1.0, 1.0),
                Pt::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn manufactured_cases_validate() {
        ManufacturedCase::<f64>::least_squares_case()
            .validate_derivatives()
            .unwrap();
        ManufacturedCase::<f64>::poisson_case()
            .validate_derivatives()
            .unwrap();
        ManufacturedCase::<f64>::biharmonic_case()
            .validate_derivatives()
            .unwrap();
    }

    #[test]
    fn poisson_case_satisfies_dirichlet_conditions() {
        let case = ManufacturedCase::<f64>::poisson_case();
        for i in 0..50 {
            let t = i as f64 / 49.0;
            for p in [
                Pt::new(t, 0.0),
                Pt::new(t, 1.0),
                Pt::new(0.0, t),
                Pt::new(1.0, t),
            ] {
                assert!(case.u(&p).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn biharmonic_case_satisfies_clamped_conditions() {
        let case = ManufacturedCase::<f64>::biharmonic_case();
        for i in 0..50 {
            let t = i as f64 / 49.0;
            for p in [
                Pt::new(t, 0.0),
                Pt::new(t, 1.0),
                Pt::new(0.0, t),
                Pt::new(1.0, t),
            ] {
                assert!(case.u(&p).abs() <= 1e-10, "u={} at {p:?}", case.u(&p));
                let g = case.grad(&p);
                let normal = if p.x == 0.0 || p.x == 1.0 { g[0] } else { g[1] };
                assert!(normal.abs() <= 1e-9, "normal derivative {normal} at {p:?}");
            }
        }
    }

    #[test]
    fn constant_fit_gives_unit_coefficients() {
        let pipe = Pipeline::build(&unit_square(), 1, SplitStrategy::PreferBarycenter).unwrap();
        for r in 0..3 {
            let gram = assemble_matrix(&pipe.basis, &pipe.chain, r, 0, 0, 0, 6).unwrap();
            let load = assemble_load(&pipe.basis, &pipe.chain, r, &|_| 1.0, 12).unwrap();
            let (c, _) = solve_spd(&gram.matrix, &load, 1e-12).unwrap();
            for v in c.iter() {
                assert_relative_eq!(*v, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cubic_fit_is_exact_in_all_spaces() {
        let pipe = Pipeline::build(&unit_square(), 1, SplitStrategy::PreferBarycenter).unwrap();
        let mono = MonomialCubic([0.3, -1.2, 0.5, 0.0, 2.0, -0.7, 1.1, 0.4, -0.9, 0.25]);
        for r in 0..3 {
            let gram = assemble_matrix(&pipe.basis, &pipe.chain, r, 0, 0, 0, 6).unwrap();
            let load =
                assemble_load(&pipe.basis, &pipe.chain, r, &|p| mono.eval(p), 12).unwrap();
            let (c, _) = solve_spd(&gram.matrix, &load, 1e-12).unwrap();
            // L2 error against the cubic.
            let full = pipe.to_full_space(r, &c).unwrap();
            let s = pipe.basis.combine(&full);
            let rule = QuadratureRule::<f64>::with_degree(12).unwrap();
            let mut err2 = 0.0;
            for m in 0..pipe.basis.ps.micro_triangles.len() {
                let corners = pipe.basis.ps.micro_corners(m);
                let patch = s.patch(&pipe.basis.ps, m).unwrap();
                for (p, w) in rule.points_on(&corners) {
                    let e = patch.eval(&p) - mono.eval(&p);
                    err2 += w * e * e;
                }
            }
            assert!(err2.sqrt() <= 1e-10, "space {r}: L2 error {}", err2.sqrt());
        }
    }

    #[test]
    fn poisson_zero_rhs_gives_zero_solution() {
        let pipe = Pipeline::build(&unit_square(), 1, SplitStrategy::PreferBarycenter).unwrap();
        let case = ManufacturedCase::<f64>::poisson_case();
        // Zero right-hand side through a custom assembly.
        let a = assemble_matrix(&pipe.basis, &pipe.chain, 0, 1, 1, 1, 6).unwrap();
        let b = assemble_matrix(&pipe.basis, &pipe.chain, 0, 0, 0, 1, 6).unwrap();
        let system = crate::assembly::SystemMatrix {
            matrix: a.matrix.add(&b.matrix),
            space: 0,
            orders: (1, 1, 1),
            quadrature_degree: 6,
        };
        let zero_load = DVector::zeros(system.matrix.nrows);
        let (matrix, reduced, _) = restrict(&system, &zero_load, &pipe.flags[0], true, false).unwrap();
        let (x, _) = solve_spd(&matrix, &reduced, 1e-12).unwrap();
        assert!(x.abs().max() <= 1e-14);
        let _ = case;
    }

    #[test]
    fn error_norm_closed_forms() {
        // u = x against the zero spline: L2 = sqrt(1/3), H1 = sqrt(1/3 + 1)
        // on the unit square; computed with the norm quadrature machinery.
        let pipe = Pipeline::build(&unit_square(), 1, SplitStrategy::PreferBarycenter).unwrap();
        let rule = QuadratureRule::<f64>::with_degree(12).unwrap();
        let ps = &pipe.basis.ps;
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for m in 0..ps.micro_triangles.len() {
            let corners = ps.micro_corners(m);
            for (p, w) in rule.points_on(&corners) {
                l2 += w * p.x * p.x;
                h1 += w;
            }
        }
        assert_relative_eq!(l2.sqrt(), (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!((l2 + h1).sqrt(), (4.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        // The zero spline has zero norms through the same code path.
        let zero = DVector::<f64>::zeros(pipe.chain.dim(0));
        let case = ManufacturedCase::<f64>::least_squares_case();
        let (norms, energy) = error_norms(&pipe, 0, &zero, &case, 12).unwrap();
        assert!(norms.l2 > 0.0 && norms.h1 >= norms.l2 && norms.h2 >= norms.h1);
        assert_relative_eq!(energy, norms.l2, epsilon = 1e-13);
    }

    #[test]
    fn convergence_smoke_least_squares() {
        let report = convergence_study(
            &unit_square(),
            ProblemKind::LeastSquares,
            &[0],
            &[1, 2],
            SplitStrategy::PreferBarycenter,
            QuadratureConfig::default(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[1].l2 < report.rows[0].l2);
        assert!(report.rows[1].rate_l2.is_some());
        let csv = report.to_csv();
        assert!(csv.starts_with("problem,space,level,ndof"));
        assert_eq!(csv.lines().count(), 3);
    }
}
