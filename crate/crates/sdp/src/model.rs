//! Modeling layer: PSD block variables, bounded scalars and affine constraints
//! built from trace inner products `Tr(C X)` with constant Hermitian `C`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::SdpError;

pub type CMatrix = DMatrix<Complex64>;

/// Entry field of a PSD block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScalarId(pub usize);

#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
    pub field: Field,
}

#[derive(Debug, Clone)]
pub struct ScalarVar {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// `Σ Tr(C_b X_b) + Σ a_j x_j + constant`.
#[derive(Debug, Clone, Default)]
pub struct AffineExpr {
    pub blocks: Vec<(BlockId, CMatrix)>,
    pub scalars: Vec<(ScalarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            ..Self::default()
        }
    }

    pub fn scalar(id: ScalarId, coef: f64) -> Self {
        Self::new().plus_scalar(id, coef)
    }

    pub fn plus_trace(mut self, block: BlockId, coef: CMatrix) -> Self {
        self.blocks.push((block, coef));
        self
    }

    pub fn plus_scalar(mut self, id: ScalarId, coef: f64) -> Self {
        self.scalars.push((id, coef));
        self
    }

    pub fn plus_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn add(mut self, other: AffineExpr) -> Self {
        self.blocks.extend(other.blocks);
        self.scalars.extend(other.scalars);
        self.constant += other.constant;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for (_, c) in &mut self.blocks {
            *c *= Complex64::new(factor, 0.0);
        }
        for (_, a) in &mut self.scalars {
            *a *= factor;
        }
        self.constant *= factor;
        self
    }

    /// Evaluates the expression at given block and scalar values.
    pub fn evaluate(&self, blocks: &[CMatrix], scalars: &[f64]) -> f64 {
        let mut v = self.constant;
        for (b, c) in &self.blocks {
            v += trace_inner(c, &blocks[b.0]);
        }
        for (s, a) in &self.scalars {
            v += a * scalars[s.0];
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// `expr (sense) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: AffineExpr,
    pub sense: Sense,
    pub rhs: f64,
    pub label: String,
}

/// A maximization problem over PSD blocks and bounded scalars.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub blocks: Vec<PsdBlock>,
    pub scalars: Vec<ScalarVar>,
    pub objective: AffineExpr,
    pub constraints: Vec<Constraint>,
}

/// Real part of `Tr(A X)`; exact for Hermitian arguments.
pub fn trace_inner(a: &CMatrix, x: &CMatrix) -> f64 {
    // Tr(A X) = Σ_ij A_ij X_ji
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let p = a[(i, j)] * x[(j, i)];
            acc += p.re;
        }
    }
    acc
}

/// Matrix with a single symmetric entry such that `Tr(E X) = Re X[i,j]`.
pub fn entry_selector(dim: usize, i: usize, j: usize) -> CMatrix {
    let mut e = CMatrix::zeros(dim, dim);
    if i == j {
        e[(i, i)] = Complex64::new(1.0, 0.0);
    } else {
        e[(i, j)] = Complex64::new(0.5, 0.0);
        e[(j, i)] = Complex64::new(0.5, 0.0);
    }
    e
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize, field: Field) -> BlockId {
        self.blocks.push(PsdBlock {
            name: name.into(),
            dim,
            field,
        });
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_scalar(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> ScalarId {
        self.scalars.push(ScalarVar {
            name: name.into(),
            lower,
            upper,
        });
        ScalarId(self.scalars.len() - 1)
    }

    pub fn block(&self, id: BlockId) -> Result<&PsdBlock, SdpError> {
        self.blocks.get(id.0).ok_or(SdpError::UnknownBlock(id.0))
    }

    pub fn block_by_name(&self, name: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.name == name).map(BlockId)
    }

    /// The affine term `Tr(quad_form · X_block)`.
    pub fn lifted(&self, block: BlockId, quad_form: CMatrix) -> Result<AffineExpr, SdpError> {
        let b = self.block(block)?;
        check_coef(b, &quad_form)?;
        Ok(AffineExpr::new().plus_trace(block, quad_form))
    }

    pub fn maximize(&mut self, objective: AffineExpr) {
        self.objective = objective;
    }

    pub fn constrain(&mut self, expr: AffineExpr, sense: Sense, rhs: f64, label: impl Into<String>) {
        self.constraints.push(Constraint {
            expr,
            sense,
            rhs,
            label: label.into(),
        });
    }

    /// Adds `x · y ≥ 1` with `x, y ≥ 0`, i.e. `x⁻¹ ≤ y`, as the 2×2 block
    /// `[[x, 1], [1, y]] ⪰ 0`.
    pub fn add_reciprocal_bound(&mut self, x: AffineExpr, y: AffineExpr, label: &str) -> BlockId {
        let z = self.add_block(format!("recip[{label}]"), 2, Field::Real);
        let sel = |i, j| entry_selector(2, i, j);
        self.constrain(
            AffineExpr::new().plus_trace(z, sel(0, 0)).add(x.scaled(-1.0)),
            Sense::Eq,
            0.0,
            format!("{label}:x"),
        );
        self.constrain(
            AffineExpr::new().plus_trace(z, sel(1, 1)).add(y.scaled(-1.0)),
            Sense::Eq,
            0.0,
            format!("{label}:y"),
        );
        self.constrain(
            AffineExpr::new().plus_trace(z, sel(0, 1)),
            Sense::Eq,
            1.0,
            format!("{label}:one"),
        );
        z
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        for s in &self.scalars {
            if s.lower.is_nan() || s.upper.is_nan() || s.lower > s.upper {
                return Err(SdpError::InvalidBounds {
                    name: s.name.clone(),
                    lower: s.lower,
                    upper: s.upper,
                });
            }
        }
        self.validate_expr(&self.objective, "objective")?;
        for c in &self.constraints {
            self.validate_expr(&c.expr, &c.label)?;
            if !c.rhs.is_finite() {
                return Err(SdpError::NonFinite {
                    context: format!("rhs of `{}`", c.label),
                });
            }
        }
        Ok(())
    }

    fn validate_expr(&self, e: &AffineExpr, context: &str) -> Result<(), SdpError> {
        for (id, c) in &e.blocks {
            let b = self.block(*id)?;
            check_coef(b, c)?;
        }
        for (id, a) in &e.scalars {
            if id.0 >= self.scalars.len() {
                return Err(SdpError::UnknownScalar(id.0));
            }
            if !a.is_finite() {
                return Err(SdpError::NonFinite {
                    context: context.to_string(),
                });
            }
        }
        if !e.constant.is_finite() {
            return Err(SdpError::NonFinite {
                context: context.to_string(),
            });
        }
        Ok(())
    }
}

fn check_coef(b: &PsdBlock, c: &CMatrix) -> Result<(), SdpError> {
    if c.nrows() != b.dim || c.ncols() != b.dim {
        return Err(SdpError::DimensionMismatch {
            block: b.name.clone(),
            expected: b.dim,
            rows: c.nrows(),
            cols: c.ncols(),
        });
    }
    let mut scale: f64 = 0.0;
    let mut asym: f64 = 0.0;
    let mut imag: f64 = 0.0;
    for i in 0..b.dim {
        for j in 0..b.dim {
            let v = c[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(SdpError::NonFinite {
                    context: format!("coefficient on block `{}`", b.name),
                });
            }
            scale = scale.max(v.norm());
            asym = asym.max((v - c[(j, i)].conj()).norm());
            imag = imag.max(v.im.abs());
        }
    }
    if asym > 1e-10 * scale.max(1e-300) && asym > 0.0 {
        return Err(SdpError::NotHermitian {
            block: b.name.clone(),
            asymmetry: asym,
        });
    }
    if b.field == Field::Real && imag > 1e-12 * scale.max(1e-300) && imag > 0.0 {
        return Err(SdpError::ComplexCoefficientOnRealBlock {
            block: b.name.clone(),
            imag,
        });
    }
    Ok(())
}
