use std::io::{self, Write};

use crate::model::{AffineExpr, Field, SdpProblem, Sense};

/// Writes a plain-text sparse triplet dump of `problem`.
///
/// Header lines start with `#`. Each section opens with `objective` or
/// `constraint <index> <sense> <rhs> <label>`, followed by one line per
/// nonzero: `<block> <row> <col> <re> <im>` for matrix entries (upper
/// triangle, zero-based) and `scalar <index> <coef>` for scalar terms.
pub fn write_triplets<W: Write>(problem: &SdpProblem, mut out: W) -> io::Result<()> {
    writeln!(out, "# blocks {}", problem.blocks.len())?;
    for (i, b) in problem.blocks.iter().enumerate() {
        let field = match b.field {
            Field::Real => "real",
            Field::Complex => "complex",
        };
        writeln!(out, "# block {i} {} {} {field}", b.name, b.dim)?;
    }
    for (i, s) in problem.scalars.iter().enumerate() {
        writeln!(out, "# scalar {i} {} {:e} {:e}", s.name, s.lower, s.upper)?;
    }
    writeln!(out, "objective {:e}", problem.objective.constant)?;
    write_expr(&mut out, &problem.objective)?;
    for (k, c) in problem.constraints.iter().enumerate() {
        let sense = match c.sense {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        writeln!(
            out,
            "constraint {k} {sense} {:e} {}",
            c.rhs - c.expr.constant,
            c.label
        )?;
        write_expr(&mut out, &c.expr)?;
    }
    Ok(())
}

fn write_expr<W: Write>(out: &mut W, e: &AffineExpr) -> io::Result<()> {
    for (b, m) in &e.blocks {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    writeln!(out, "{} {} {} {:e} {:e}", b.0, i, j, v.re, v.im)?;
                }
            }
        }
    }
    for (s, a) in &e.scalars {
        if *a != 0.0 {
            writeln!(out, "scalar {} {:e}", s.0, a)?;
        }
    }
    Ok(())
}
