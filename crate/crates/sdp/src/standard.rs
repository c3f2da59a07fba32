//! Lowering of an [`SdpProblem`] to the real standard form
//!
//! ```text
//! min c'x   s.t.  A x = b,   x ∈ S₊^{n_1} × … × S₊^{n_p} × R₊^{l}
//! ```
//!
//! Complex Hermitian blocks of order `n` become real symmetric blocks of order
//! `2n` through `X ↦ [[Re X, -Im X], [Im X, Re X]]`; coefficient matrices map
//! the same way with a factor ½ so that trace inner products are preserved.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::model::{CMatrix, Field, SdpProblem, Sense};

/// Real symmetric coefficient, stored densely or as a full (both triangles)
/// list of nonzeros.
#[derive(Debug, Clone)]
pub(crate) enum SymMat {
    Dense(DMatrix<f64>),
    Sparse(Vec<(usize, usize, f64)>),
}

impl SymMat {
    fn from_dense(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        if nnz <= 2 * n {
            let mut entries = Vec::with_capacity(nnz);
            for j in 0..n {
                for i in 0..n {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        entries.push((i, j, v));
                    }
                }
            }
            SymMat::Sparse(entries)
        } else {
            SymMat::Dense(m)
        }
    }

    pub(crate) fn dot(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            SymMat::Dense(a) => a.dot(x),
            SymMat::Sparse(e) => e.iter().map(|&(i, j, v)| v * x[(i, j)]).sum(),
        }
    }

    pub(crate) fn add_scaled_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        match self {
            SymMat::Dense(a) => *target += a * scale,
            SymMat::Sparse(e) => {
                for &(i, j, v) in e {
                    target[(i, j)] += scale * v;
                }
            }
        }
    }

    pub(crate) fn sq_norm(&self) -> f64 {
        match self {
            SymMat::Dense(a) => a.norm_squared(),
            SymMat::Sparse(e) => e.iter().map(|&(_, _, v)| v * v).sum(),
        }
    }

    fn scale(&mut self, f: f64) {
        match self {
            SymMat::Dense(a) => *a *= f,
            SymMat::Sparse(e) => e.iter_mut().for_each(|t| t.2 *= f),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StdRow {
    pub blocks: Vec<(usize, SymMat)>,
    pub lin: Vec<(usize, f64)>,
}

/// How a user scalar is recovered: `value = offset + Σ coef · x_lin[idx]`.
#[derive(Debug, Clone)]
pub(crate) struct ScalarMap {
    pub offset: f64,
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub dims: Vec<usize>,
    pub n_lin: usize,
    pub rows: Vec<StdRow>,
    pub b: DVector<f64>,
    pub c_blocks: Vec<DMatrix<f64>>,
    pub c_lin: DVector<f64>,
    /// Row scaling applied for equilibration: row_i(original) = row_i(stored) / row_scale[i].
    pub row_scale: Vec<f64>,
    /// Stored objective is the original one divided by this factor.
    pub obj_scale: f64,
    pub scalar_maps: Vec<ScalarMap>,
    pub user_rows: usize,
    pub fields: Vec<Field>,
}

fn embed(c: &CMatrix, field: Field) -> DMatrix<f64> {
    let n = c.nrows();
    match field {
        Field::Real => DMatrix::from_fn(n, n, |i, j| c[(i, j)].re),
        Field::Complex => {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            for j in 0..n {
                for i in 0..n {
                    let v = c[(i, j)] * 0.5;
                    m[(i, j)] = v.re;
                    m[(n + i, n + j)] = v.re;
                    m[(i, n + j)] = -v.im;
                    m[(n + i, j)] = v.im;
                }
            }
            m
        }
    }
}

/// Inverse of the real embedding for a primal block value.
pub(crate) fn unembed(y: &DMatrix<f64>, field: Field) -> CMatrix {
    match field {
        Field::Real => y.map(|v| Complex64::new(v, 0.0)),
        Field::Complex => {
            let n = y.nrows() / 2;
            CMatrix::from_fn(n, n, |i, j| {
                Complex64::new(
                    0.5 * (y[(i, j)] + y[(n + i, n + j)]),
                    0.5 * (y[(n + i, j)] - y[(i, n + j)]),
                )
            })
        }
    }
}

impl StandardForm {
    pub(crate) fn from_problem(p: &SdpProblem) -> Self {
        let fields: Vec<Field> = p.blocks.iter().map(|b| b.field).collect();
        let dims: Vec<usize> = p
            .blocks
            .iter()
            .map(|b| match b.field {
                Field::Real => b.dim,
                Field::Complex => 2 * b.dim,
            })
            .collect();

        let mut n_lin = 0usize;
        let mut scalar_maps = Vec::with_capacity(p.scalars.len());
        // (lin index, upper - lower) for doubly bounded scalars
        let mut upper_rows = Vec::new();
        for s in &p.scalars {
            let map = match (s.lower.is_finite(), s.upper.is_finite()) {
                (true, ub_finite) => {
                    let idx = n_lin;
                    n_lin += 1;
                    if ub_finite {
                        upper_rows.push((idx, s.upper - s.lower));
                    }
                    ScalarMap {
                        offset: s.lower,
                        terms: vec![(idx, 1.0)],
                    }
                }
                (false, true) => {
                    let idx = n_lin;
                    n_lin += 1;
                    ScalarMap {
                        offset: s.upper,
                        terms: vec![(idx, -1.0)],
                    }
                }
                (false, false) => {
                    let idx = n_lin;
                    n_lin += 2;
                    ScalarMap {
                        offset: 0.0,
                        terms: vec![(idx, 1.0), (idx + 1, -1.0)],
                    }
                }
            };
            scalar_maps.push(map);
        }

        // Lower an affine expression: returns per-block dense accumulations,
        // linear coefficients, and constant.
        let lower = |e: &crate::model::AffineExpr,
                     n_lin: usize|
         -> (Vec<Option<CMatrix>>, Vec<f64>, f64) {
            let mut blocks: Vec<Option<CMatrix>> = vec![None; p.blocks.len()];
            for (id, c) in &e.blocks {
                match &mut blocks[id.0] {
                    Some(acc) => *acc += c,
                    slot => *slot = Some(c.clone()),
                }
            }
            let mut lin = vec![0.0; n_lin];
            let mut constant = e.constant;
            for (id, a) in &e.scalars {
                let m = &scalar_maps[id.0];
                constant += a * m.offset;
                for &(idx, coef) in &m.terms {
                    lin[idx] += a * coef;
                }
            }
            (blocks, lin, constant)
        };

        let n_slack = p
            .constraints
            .iter()
            .filter(|c| c.sense != Sense::Eq)
            .count()
            + upper_rows.len();
        let total_lin = n_lin + n_slack;

        let mut rows = Vec::new();
        let mut b = Vec::new();
        let mut slack = n_lin;
        for c in &p.constraints {
            let (blocks, lin, constant) = lower(&c.expr, total_lin);
            let mut row = StdRow::default();
            for (bi, m) in blocks.into_iter().enumerate() {
                if let Some(m) = m {
                    let r = embed(&m, fields[bi]);
                    if r.iter().any(|v| *v != 0.0) {
                        row.blocks.push((bi, SymMat::from_dense(r)));
                    }
                }
            }
            row.lin = lin
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect();
            match c.sense {
                Sense::Eq => {}
                Sense::Le => {
                    row.lin.push((slack, 1.0));
                    slack += 1;
                }
                Sense::Ge => {
                    row.lin.push((slack, -1.0));
                    slack += 1;
                }
            }
            rows.push(row);
            b.push(c.rhs - constant);
        }
        let user_rows = rows.len();
        for (idx, width) in upper_rows {
            rows.push(StdRow {
                blocks: vec![],
                lin: vec![(idx, 1.0), (slack, 1.0)],
            });
            slack += 1;
            b.push(width);
        }

        let (oblocks, olin, _) = lower(&p.objective, total_lin);
        let c_blocks: Vec<DMatrix<f64>> = oblocks
            .into_iter()
            .enumerate()
            .map(|(bi, m)| match m {
                Some(m) => -embed(&m, fields[bi]),
                None => DMatrix::zeros(dims[bi], dims[bi]),
            })
            .collect();
        let c_lin = DVector::from_iterator(total_lin, olin.iter().map(|v| -v));

        let mut sf = StandardForm {
            dims,
            n_lin: total_lin,
            rows,
            b: DVector::from_vec(b),
            c_blocks,
            c_lin,
            row_scale: vec![],
            obj_scale: 1.0,
            scalar_maps,
            user_rows,
            fields,
        };
        sf.equilibrate();
        sf
    }

    fn equilibrate(&mut self) {
        self.row_scale = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter_mut().enumerate() {
            let nrm2: f64 = row.blocks.iter().map(|(_, m)| m.sq_norm()).sum::<f64>()
                + row.lin.iter().map(|(_, v)| v * v).sum::<f64>();
            let f = if nrm2 > 0.0 { 1.0 / nrm2.sqrt() } else { 1.0 };
            for (_, m) in &mut row.blocks {
                m.scale(f);
            }
            for (_, v) in &mut row.lin {
                *v *= f;
            }
            self.b[i] *= f;
            self.row_scale.push(f);
        }
        let cn = self
            .c_blocks
            .iter()
            .map(|m| m.norm_squared())
            .sum::<f64>()
            .max(self.c_lin.norm_squared())
            .sqrt();
        if cn > 1.0 {
            self.obj_scale = cn;
            for m in &mut self.c_blocks {
                *m /= cn;
            }
            self.c_lin /= cn;
        }
    }

    pub(crate) fn m(&self) -> usize {
        self.rows.len()
    }
}
