//! Small dense semidefinite programs.
//!
//! Problems are stated as maximizations over Hermitian (or real symmetric)
//! PSD blocks and bounded scalars, with affine constraints built from trace
//! inner products. [`InteriorPointSolver`] is the built-in backend; any other
//! conic solver can be plugged in through [`ConicSolver`].

mod dump;
mod error;
mod ipm;
mod model;
mod standard;

pub use dump::write_triplets;
pub use error::SdpError;
pub use model::{
    entry_selector, trace_inner, AffineExpr, BlockId, CMatrix, Constraint, Field, PsdBlock,
    ScalarId, ScalarVar, SdpProblem, Sense,
};

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    /// Stalled with residuals and gap within a factor of 100 of
    /// the tolerances.
    NearOptimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative duality gap.
    pub gap: f64,
    /// Relative primal and dual residual.
    pub feas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gap: 1e-7,
            feas: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// One Hermitian matrix per block, in block order.
    pub blocks: Vec<CMatrix>,
    pub scalars: Vec<f64>,
    /// Objective of the maximization, constant included.
    pub objective_value: f64,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Multipliers of the user constraints (minimization convention, scaled
    /// back to the constraint rows as written).
    pub duals: Vec<f64>,
    /// Complementarity measure `μ` at each iterate.
    pub merit: Vec<f64>,
}

impl SdpSolution {
    pub fn block(&self, id: BlockId) -> &CMatrix {
        &self.blocks[id.0]
    }

    pub fn scalar(&self, id: ScalarId) -> f64 {
        self.scalars[id.0]
    }

    pub fn value(&self, e: &AffineExpr) -> f64 {
        e.evaluate(&self.blocks, &self.scalars)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Optimal or stalled close enough to optimal to be used.
    pub fn is_usable(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

/// Backend seam: anything that can solve an [`SdpProblem`].
pub trait ConicSolver: Send + Sync {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution, SdpError>;
}

#[derive(Debug, Clone, Copy)]
pub struct InteriorPointSolver {
    pub tolerances: Tolerances,
    pub max_iter: usize,
}

impl Default for InteriorPointSolver {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            max_iter: 200,
        }
    }
}

impl InteriorPointSolver {
    pub fn new(tolerances: Tolerances, max_iter: usize) -> Self {
        Self {
            tolerances,
            max_iter,
        }
    }
}

impl ConicSolver for InteriorPointSolver {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution, SdpError> {
        problem.validate()?;
        let sf = standard::StandardForm::from_problem(problem);
        let out = ipm::solve(&sf, &self.tolerances, self.max_iter);

        let blocks: Vec<CMatrix> = out
            .x
            .blocks
            .iter()
            .zip(&sf.fields)
            .map(|(y, f)| standard::unembed(y, *f))
            .collect();
        let scalars: Vec<f64> = sf
            .scalar_maps
            .iter()
            .map(|m| {
                m.offset
                    + m.terms
                        .iter()
                        .map(|(i, c)| c * out.x.lin[*i])
                        .sum::<f64>()
            })
            .collect();
        let duals = DVector::from_fn(sf.user_rows, |i, _| {
            out.y[i] * sf.row_scale[i] * sf.obj_scale
        });
        let objective_value = problem.objective.evaluate(&blocks, &scalars);
        Ok(SdpSolution {
            status: out.status,
            blocks,
            scalars,
            objective_value,
            duality_gap: out.rel_gap,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
            iterations: out.iterations,
            duals: duals.iter().copied().collect(),
            merit: out.merit,
        })
    }
}

/// Largest violation of the problem's constraints and scalar bounds at the
/// given point, each normalized by `1 + |rhs|`.
pub fn max_constraint_violation(problem: &SdpProblem, blocks: &[CMatrix], scalars: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for c in &problem.constraints {
        let v = c.expr.evaluate(blocks, scalars);
        let viol = match c.sense {
            Sense::Eq => (v - c.rhs).abs(),
            Sense::Le => (v - c.rhs).max(0.0),
            Sense::Ge => (c.rhs - v).max(0.0),
        };
        worst = worst.max(viol / (1.0 + c.rhs.abs()));
    }
    for (s, var) in scalars.iter().zip(&problem.scalars) {
        worst = worst.max((var.lower - s).max(0.0) / (1.0 + var.lower.abs().min(1e300)));
        worst = worst.max((s - var.upper).max(0.0) / (1.0 + var.upper.abs().min(1e300)));
    }
    worst
}
