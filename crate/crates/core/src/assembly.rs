//! Elementwise Galerkin assembly: derivative-product matrices and load
//! vectors over the full basis, congruence transport to the reduced
//! spaces, and boundary restriction.

use crate::basis::{BoundaryClass, SplineBasis, SplineFunction};
use crate::bb::BBPoly;
use crate::extraction::{ExtractionChain, ExtractionError};
use crate::psrefine::PsRefinement;
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("invalid derivative orders (alpha {alpha}, beta {beta}, gamma {gamma})")]
    InvalidOrders {
        alpha: usize,
        beta: usize,
        gamma: usize,
    },
    #[error("boundary restriction removes every function")]
    EmptyRestriction,
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Quadrature(#[from] crate::bb::BbError),
}

/// Assembled symmetric sparse matrix over the basis of one space, with the
/// metadata that identifies the integrand.
#[derive(Debug, Clone)]
pub struct SystemMatrix<S: Real> {
    pub matrix: CsrMatrix<S>,
    pub space: usize,
    /// `(alpha, beta, gamma)`: integrand `D^a S . D^b S` with `a = (alpha,
    /// gamma - alpha)` and `b = (beta, gamma - beta)`.
    pub orders: (usize, usize, usize),
    pub quadrature_degree: usize,
}

/// Per-micro-triangle list of active functions, precomputed once per
/// function family.
pub struct ActiveMap {
    pub per_micro: Vec<Vec<usize>>,
}

impl ActiveMap {
    pub fn build<S: Real>(n_micro: usize, functions: &[&SplineFunction<S>]) -> Self {
        let mut per_micro = vec![Vec::new(); n_micro];
        for (i, f) in functions.iter().enumerate() {
            for &m in f.patches.keys() {
                per_micro[m].push(i);
            }
        }
        Self { per_micro }
    }
}

/// Integrates `D^(alpha, gamma-alpha) f_i . D^(beta, gamma-beta) f_j` over
/// the domain for an arbitrary family of sparse splines.
pub fn assemble_product_matrix<S: Real>(
    ps: &PsRefinement<S>,
    functions: &[&SplineFunction<S>],
    active: &ActiveMap,
    alpha: usize,
    beta: usize,
    gamma: usize,
    quadrature_degree: usize,
) -> Result<CsrMatrix<S>, AssemblyError> {
    if alpha > gamma || beta > gamma || gamma > 2 {
        return Err(AssemblyError::InvalidOrders { alpha, beta, gamma });
    }
    let rule = QuadratureRule::<S>::with_degree(quadrature_degree)?;
    let n = functions.len();
    let same = alpha == beta;
    let mut triplets: Vec<(usize, usize, S)> = Vec::new();
    for m in 0..ps.micro_triangles.len() {
        let ids = &active.per_micro[m];
        if ids.is_empty() {
            continue;
        }
        let corners = ps.micro_corners(m);
        let pts: Vec<(crate::geometry::Pt<S>, S)> = rule.points_on(&corners).collect();
        // Evaluate the required derivative of every active function at all
        // quadrature points.
        let eval_block = |da: usize, db: usize| -> Vec<Vec<S>> {
            ids.iter()
                .map(|&i| {
                    let patch = functions[i].patch(ps, m).expect("active function has patch");
                    let d: BBPoly<S> = patch.derivative(da, db).expect("orders within degree");
                    pts.iter().map(|(p, _)| d.eval(p)).collect()
                })
                .collect()
        };
        let left = eval_block(alpha, gamma - alpha);
        let right = if same {
            None
        } else {
            Some(eval_block(beta, gamma - beta))
        };
        let right_ref = right.as_ref().unwrap_or(&left);
        for (a, &i) in ids.iter().enumerate() {
            for (b, &j) in ids.iter().enumerate() {
                let mut acc = S::zero();
                for (q, (_, w)) in pts.iter().enumerate() {
                    acc += *w * left[a][q] * right_ref[b][q];
                }
                triplets.push((i, j, acc));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, triplets))
}

/// Load vector `integral of f_i * g` for a family of sparse splines.
pub fn assemble_load_for<S: Real>(
    ps: &PsRefinement<S>,
    functions: &[&SplineFunction<S>],
    active: &ActiveMap,
    g: &dyn Fn(&crate::geometry::Pt<S>) -> S,
    quadrature_degree: usize,
) -> Result<DVector<S>, AssemblyError> {
    let rule = QuadratureRule::<S>::with_degree(quadrature_degree)?;
    let mut load = DVector::zeros(functions.len());
    for m in 0..ps.micro_triangles.len() {
        let ids = &active.per_micro[m];
        if ids.is_empty() {
            continue;
        }
        let corners = ps.micro_corners(m);
        for (p, w) in rule.points_on(&corners) {
            let gv = g(&p);
            if gv == S::zero() {
                continue;
            }
            for &i in ids {
                let patch = functions[i].patch(ps, m).expect("active function has patch");
                load[i] += w * gv * patch.eval(&p);
            }
        }
    }
    Ok(load)
}

/// Assembles the full-space matrix and transports it to space `r` by
/// congruence with the extended extraction matrices.
pub fn assemble_matrix<S: Real>(
    basis: &SplineBasis<S>,
    chain: &ExtractionChain,
    r: usize,
    alpha: usize,
    beta: usize,
    gamma: usize,
    quadrature_degree: usize,
) -> Result<SystemMatrix<S>, AssemblyError> {
    let functions: Vec<&SplineFunction<S>> = basis.functions.iter().map(|f| &f.spline).collect();
    let active = ActiveMap::build(basis.ps.micro_triangles.len(), &functions);
    let mut matrix = assemble_product_matrix(
        &basis.ps,
        &functions,
        &active,
        alpha,
        beta,
        gamma,
        quadrature_degree,
    )?;
    for h in chain.extended_to(r) {
        matrix = h.congruence(&matrix)?;
    }
    Ok(SystemMatrix {
        matrix,
        space: r,
        orders: (alpha, beta, gamma),
        quadrature_degree,
    })
}

/// Assembles the load vector in the full space and transports it to space
/// `r` by the extended extraction matrices.
pub fn assemble_load<S: Real>(
    basis: &SplineBasis<S>,
    chain: &ExtractionChain,
    r: usize,
    g: &dyn Fn(&crate::geometry::Pt<S>) -> S,
    quadrature_degree: usize,
) -> Result<DVector<S>, AssemblyError> {
    let functions: Vec<&SplineFunction<S>> = basis.functions.iter().map(|f| &f.spline).collect();
    let active = ActiveMap::build(basis.ps.micro_triangles.len(), &functions);
    let mut load = assemble_load_for(&basis.ps, &functions, &active, g, quadrature_degree)?;
    for h in chain.extended_to(r) {
        load = h.apply(&load)?;
    }
    Ok(load)
}

/// Index bookkeeping of a boundary restriction.
#[derive(Debug, Clone)]
pub struct Restriction {
    pub keep: Vec<usize>,
    pub full_dim: usize,
}

impl Restriction {
    /// Scatters reduced coefficients back to the full space with zeros on
    /// the removed functions.
    pub fn scatter<S: Real>(&self, reduced: &DVector<S>) -> DVector<S> {
        let mut full = DVector::zeros(self.full_dim);
        for (i, &old) in self.keep.iter().enumerate() {
            full[old] = reduced[i];
        }
        full
    }
}

/// Removes the rows/columns of functions that lack the required zero
/// boundary behavior.
pub fn restrict<S: Real>(
    system: &SystemMatrix<S>,
    load: &DVector<S>,
    class: &[BoundaryClass],
    require_zero_trace: bool,
    require_zero_normal: bool,
) -> Result<(CsrMatrix<S>, DVector<S>, Restriction), AssemblyError> {
    assert_eq!(class.len(), system.matrix.nrows);
    let keep: Vec<usize> = class
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            (!require_zero_trace || c.zero_trace)
                && (!require_zero_normal || c.zero_normal_deriv)
        })
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(AssemblyError::EmptyRestriction);
    }
    let matrix = system.matrix.restrict(&keep);
    let reduced_load = DVector::from_iterator(keep.len(), keep.iter().map(|&i| load[i]));
    Ok((
        matrix,
        reduced_load,
        Restriction {
            keep,
            full_dim: system.matrix.nrows,
        },
    ))
}
