//! Homogeneous self-dual primal-dual interior-point method with
//! Nesterov–Todd scaling and Mehrotra predictor-corrector steps.
//!
//! The embedding solved is
//!
//! ```text
//! A x − b τ = 0,   c τ − Aᵀy − s = 0,   bᵀy − cᵀx − κ = 0,
//! x, s ∈ K,  τ, κ ≥ 0,
//! ```
//!
//! so optimality, primal infeasibility and dual infeasibility are all read off
//! the same iterate sequence.

use nalgebra::{DMatrix, DVector};

const NEAR_OPTIMAL_FACTOR: f64 = 100.0;

use crate::standard::{StandardForm, SymMat};
use crate::{SolveStatus, Tolerances};

#[derive(Debug, Clone)]
pub(crate) struct ConeVec {
    pub blocks: Vec<DMatrix<f64>>,
    pub lin: DVector<f64>,
}

impl ConeVec {
    fn zeros(dims: &[usize], n_lin: usize) -> Self {
        Self {
            blocks: dims.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
            lin: DVector::zeros(n_lin),
        }
    }

    fn identity(dims: &[usize], n_lin: usize) -> Self {
        Self {
            blocks: dims.iter().map(|&n| DMatrix::identity(n, n)).collect(),
            lin: DVector::from_element(n_lin, 1.0),
        }
    }

    fn dot(&self, o: &ConeVec) -> f64 {
        self.blocks
            .iter()
            .zip(&o.blocks)
            .map(|(a, b)| a.dot(b))
            .sum::<f64>()
            + self.lin.dot(&o.lin)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, o: &ConeVec) {
        for (x, y) in self.blocks.iter_mut().zip(&o.blocks) {
            *x += y * a;
        }
        self.lin.axpy(a, &o.lin, 1.0);
    }

    fn scaled(&self, a: f64) -> ConeVec {
        ConeVec {
            blocks: self.blocks.iter().map(|m| m * a).collect(),
            lin: &self.lin * a,
        }
    }

    fn symmetrize(&mut self) {
        for m in &mut self.blocks {
            let t = m.transpose();
            *m += t;
            *m *= 0.5;
        }
    }
}

fn apply_a(sf: &StandardForm, x: &ConeVec) -> DVector<f64> {
    DVector::from_iterator(
        sf.m(),
        sf.rows.iter().map(|row| {
            row.blocks
                .iter()
                .map(|(b, m)| m.dot(&x.blocks[*b]))
                .sum::<f64>()
                + row.lin.iter().map(|(i, v)| v * x.lin[*i]).sum::<f64>()
        }),
    )
}

fn apply_at(sf: &StandardForm, y: &DVector<f64>) -> ConeVec {
    let mut out = ConeVec::zeros(&sf.dims, sf.n_lin);
    for (i, row) in sf.rows.iter().enumerate() {
        let yi = y[i];
        if yi == 0.0 {
            continue;
        }
        for (b, m) in &row.blocks {
            m.add_scaled_to(&mut out.blocks[*b], yi);
        }
        for (j, v) in &row.lin {
            out.lin[*j] += yi * v;
        }
    }
    out
}

/// NT scaling of one PSD block: `Rᵀ S R = R⁻¹ X R⁻ᵀ = diag(λ)`, `W = R Rᵀ`.
struct PsdScaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lambda: DVector<f64>,
    w: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<PsdScaling> {
    let lx = x.clone().cholesky()?.unpack();
    let ls = s.clone().cholesky()?.unpack();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return None;
    }
    let inv_sqrt = lambda.map(|l| 1.0 / l.sqrt());
    let mut r = &lx * vt.transpose();
    for (j, f) in inv_sqrt.iter().enumerate() {
        r.column_mut(j).scale_mut(*f);
    }
    let mut rinv = u.transpose() * ls.transpose();
    for (i, f) in inv_sqrt.iter().enumerate() {
        rinv.row_mut(i).scale_mut(*f);
    }
    let w = &r * r.transpose();
    Some(PsdScaling { r, rinv, lambda, w })
}

struct Scaling {
    psd: Vec<PsdScaling>,
    /// `sqrt(x / s)` for the nonnegative orthant.
    lin_w: DVector<f64>,
    lin_lambda: DVector<f64>,
}

impl Scaling {
    fn apply_w(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            blocks: self
                .psd
                .iter()
                .zip(&v.blocks)
                .map(|(sc, d)| &sc.w * d * &sc.w)
                .collect(),
            lin: v.lin.component_mul(&self.lin_w).component_mul(&self.lin_w),
        }
    }

    /// Scaled primal direction `R⁻¹ dX R⁻ᵀ`.
    fn scale_primal(&self, dx: &ConeVec) -> ConeVec {
        ConeVec {
            blocks: self
                .psd
                .iter()
                .zip(&dx.blocks)
                .map(|(sc, d)| &sc.rinv * d * sc.rinv.transpose())
                .collect(),
            lin: dx.lin.component_div(&self.lin_w),
        }
    }

    /// Scaled dual direction `Rᵀ dS R`.
    fn scale_dual(&self, ds: &ConeVec) -> ConeVec {
        ConeVec {
            blocks: self
                .psd
                .iter()
                .zip(&ds.blocks)
                .map(|(sc, d)| sc.r.transpose() * d * &sc.r)
                .collect(),
            lin: ds.lin.component_mul(&self.lin_w),
        }
    }

    /// Solves `λ ∘ U = V` and returns `R U Rᵀ` (and `w v / λ` on the orthant).
    fn complementarity_rhs(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            blocks: self
                .psd
                .iter()
                .zip(&v.blocks)
                .map(|(sc, vb)| {
                    let n = vb.nrows();
                    let u = DMatrix::from_fn(n, n, |i, j| {
                        2.0 * vb[(i, j)] / (sc.lambda[i] + sc.lambda[j])
                    });
                    &sc.r * u * sc.r.transpose()
                })
                .collect(),
            lin: DVector::from_fn(v.lin.len(), |j, _| {
                self.lin_w[j] * v.lin[j] / self.lin_lambda[j]
            }),
        }
    }

    /// `−λ∘λ` in scaled coordinates.
    fn neg_lambda_sq(&self) -> ConeVec {
        ConeVec {
            blocks: self
                .psd
                .iter()
                .map(|sc| DMatrix::from_diagonal(&sc.lambda.map(|l| -l * l)))
                .collect(),
            lin: self.lin_lambda.map(|l| -l * l),
        }
    }

    /// Largest `α ≤ cap` keeping `λ + α d ⪰ 0` for a scaled direction.
    fn max_step(&self, d: &ConeVec, cap: f64) -> f64 {
        let mut alpha = cap;
        for (sc, db) in self.psd.iter().zip(&d.blocks) {
            let n = db.nrows();
            let m = DMatrix::from_fn(n, n, |i, j| {
                db[(i, j)] / (sc.lambda[i] * sc.lambda[j]).sqrt()
            });
            let m = (&m + m.transpose()) * 0.5;
            let lmin = m.symmetric_eigenvalues().min();
            if lmin < 0.0 {
                alpha = alpha.min(-1.0 / lmin);
            }
        }
        for (l, dv) in self.lin_lambda.iter().zip(d.lin.iter()) {
            if *dv < 0.0 {
                alpha = alpha.min(-l / dv);
            }
        }
        alpha
    }
}

fn compute_scaling(x: &ConeVec, s: &ConeVec) -> Option<Scaling> {
    let psd = x
        .blocks
        .iter()
        .zip(&s.blocks)
        .map(|(xb, sb)| nt_scaling(xb, sb))
        .collect::<Option<Vec<_>>>()?;
    if x.lin.iter().chain(s.lin.iter()).any(|v| !(*v > 0.0)) {
        return None;
    }
    Some(Scaling {
        psd,
        lin_w: x.lin.zip_map(&s.lin, |a, b| (a / b).sqrt()),
        lin_lambda: x.lin.zip_map(&s.lin, |a, b| (a * b).sqrt()),
    })
}

/// Schur complement `A W Aᵀ`.
fn schur(sf: &StandardForm, sc: &Scaling) -> DMatrix<f64> {
    let m = sf.m();
    let mut out = DMatrix::zeros(m, m);
    let nb = sf.dims.len();
    // rows touching each block
    let mut touching: Vec<Vec<(usize, &SymMat)>> = vec![Vec::new(); nb];
    for (i, row) in sf.rows.iter().enumerate() {
        for (b, mat) in &row.blocks {
            touching[*b].push((i, mat));
        }
    }
    for (b, list) in touching.iter().enumerate() {
        let w = &sc.psd[b].w;
        let sandwiched: Vec<Option<DMatrix<f64>>> = list
            .iter()
            .map(|(_, a)| match a {
                SymMat::Dense(a) => Some(w * a * w),
                SymMat::Sparse(_) => None,
            })
            .collect();
        for p in 0..list.len() {
            let (i, ai) = list[p];
            for q in p..list.len() {
                let (j, aj) = list[q];
                let v = match (&sandwiched[p], &sandwiched[q]) {
                    (Some(ti), _) => aj.dot(ti),
                    (None, Some(tj)) => ai.dot(tj),
                    (None, None) => {
                        let (SymMat::Sparse(ei), SymMat::Sparse(ej)) = (ai, aj) else {
                            unreachable!()
                        };
                        let mut acc = 0.0;
                        for &(p1, q1, a) in ei {
                            for &(r1, s1, c) in ej {
                                acc += a * c * w[(p1, r1)] * w[(s1, q1)];
                            }
                        }
                        acc
                    }
                };
                out[(i, j)] += v;
                if i != j {
                    out[(j, i)] += v;
                }
            }
        }
    }
    let w2 = sc.lin_w.component_mul(&sc.lin_w);
    for (i, ri) in sf.rows.iter().enumerate() {
        for (j, rj) in sf.rows.iter().enumerate().skip(i) {
            let mut acc = 0.0;
            for (a, va) in &ri.lin {
                for (c, vc) in &rj.lin {
                    if a == c {
                        acc += va * vc * w2[*a];
                    }
                }
            }
            if acc != 0.0 {
                out[(i, j)] += acc;
                if i != j {
                    out[(j, i)] += acc;
                }
            }
        }
    }
    out
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(mut m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let dmax = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        let reg = 1e-14 * dmax.max(1e-300);
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(c) = m.clone().cholesky() {
            return Some(Factor::Chol(c));
        }
        for i in 0..n {
            m[(i, i)] += 1e-10 * dmax.max(1e-300);
        }
        if let Some(c) = m.clone().cholesky() {
            return Some(Factor::Chol(c));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(Factor::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Chol(c) => c.solve(b),
            Factor::Lu(l) => l.solve(b).unwrap_or_else(|| DVector::zeros(b.len())),
        }
    }
}

pub(crate) struct IpmOutcome {
    pub status: SolveStatus,
    pub x: ConeVec,
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
    pub merit: Vec<f64>,
}

struct Residuals {
    p: DVector<f64>,
    d: ConeVec,
    g: f64,
}

pub(crate) fn solve(sf: &StandardForm, tol: &Tolerances, max_iter: usize) -> IpmOutcome {
    let m = sf.m();
    let nu = sf.dims.iter().sum::<usize>() + sf.n_lin;
    let c = ConeVec {
        blocks: sf.c_blocks.clone(),
        lin: sf.c_lin.clone(),
    };
    let b = &sf.b;
    let bnorm = b.norm();
    let cnorm = c.norm();

    let mut x = ConeVec::identity(&sf.dims, sf.n_lin);
    let mut s = ConeVec::identity(&sf.dims, sf.n_lin);
    let mut y = DVector::zeros(m);
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let mut merit = Vec::new();

    let residuals = |x: &ConeVec, y: &DVector<f64>, s: &ConeVec, tau: f64, kappa: f64| {
        let p = apply_a(sf, x) - b * tau;
        let mut d = c.scaled(tau);
        d.axpy(-1.0, &apply_at(sf, y));
        d.axpy(-1.0, s);
        let g = b.dot(y) - c.dot(x) - kappa;
        Residuals { p, d, g }
    };

    let mut best: Option<(f64, ConeVec, DVector<f64>, f64, (f64, f64, f64))> = None;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    for iter in 0..=max_iter {
        let res = residuals(&x, &y, &s, tau, kappa);
        let mu = (x.dot(&s) + tau * kappa) / (nu as f64 + 1.0);
        merit.push(mu);

        // termination
        let pobj = c.dot(&x) / tau;
        let dobj = b.dot(&y) / tau;
        let mut aty_s = apply_at(sf, &y);
        aty_s.axpy(1.0, &s);
        let pres = (apply_a(sf, &x) / tau - b).norm() / (1.0 + bnorm);
        let dres = {
            let mut r = aty_s.scaled(1.0 / tau);
            r.axpy(-1.0, &c);
            r.norm() / (1.0 + cnorm)
        };
        let compl = x.dot(&s) / (tau * tau);
        let rel_gap = (pobj - dobj).abs().max(compl) / pobj.abs().min(dobj.abs()).max(1.0);
        last = (pres, dres, rel_gap);
        let score = pres.max(dres) + rel_gap;
        if best.as_ref().map_or(true, |bst| score < bst.0) {
            best = Some((score, x.clone(), y.clone(), tau, (pres, dres, rel_gap)));
        }
        if pres <= tol.feas && dres <= tol.feas && rel_gap <= tol.gap {
            return IpmOutcome {
                status: SolveStatus::Optimal,
                x: x.scaled(1.0 / tau),
                y: &y / tau,
                iterations: iter,
                primal_residual: pres,
                dual_residual: dres,
                rel_gap,
                merit,
            };
        }
        let by = b.dot(&y);
        if by > 0.0 && aty_s.norm() / by <= tol.feas {
            return IpmOutcome {
                status: SolveStatus::Infeasible,
                x,
                y,
                iterations: iter,
                primal_residual: pres,
                dual_residual: dres,
                rel_gap,
                merit,
            };
        }
        let cx = c.dot(&x);
        if cx < 0.0 && apply_a(sf, &x).norm() / (-cx) <= tol.feas {
            return IpmOutcome {
                status: SolveStatus::Unbounded,
                x,
                y,
                iterations: iter,
                primal_residual: pres,
                dual_residual: dres,
                rel_gap,
                merit,
            };
        }
        if iter == max_iter {
            break;
        }

        let Some(sc) = compute_scaling(&x, &s) else {
            break;
        };
        let Some(fac) = Factor::new(schur(sf, &sc)) else {
            break;
        };

        let wc = sc.apply_w(&c);
        let y2 = fac.solve(&(apply_a(sf, &wc) + b));
        let mut x2 = sc.apply_w(&apply_at(sf, &y2));
        x2.axpy(-1.0, &wc);
        let denom = b.dot(&y2) - c.dot(&x2) + kappa / tau;
        let wd = sc.apply_w(&res.d);

        let direction = |eta: f64, v: &ConeVec, t: f64| {
            let mut u = sc.complementarity_rhs(v);
            u.symmetrize();
            let rhs1 = -(&res.p * eta) - apply_a(sf, &u) + apply_a(sf, &wd) * eta;
            let y1 = fac.solve(&rhs1);
            let mut x1 = u;
            x1.axpy(-eta, &wd);
            x1.axpy(1.0, &sc.apply_w(&apply_at(sf, &y1)));
            let dtau = (-eta * res.g - b.dot(&y1) + c.dot(&x1) + t / tau) / denom;
            let dy = y1 + &y2 * dtau;
            let mut dx = x1;
            dx.axpy(dtau, &x2);
            let mut ds = c.scaled(dtau);
            ds.axpy(-1.0, &apply_at(sf, &dy));
            ds.axpy(eta, &res.d);
            let dkappa = (t - kappa * dtau) / tau;
            dx.symmetrize();
            ds.symmetrize();
            (dx, dy, ds, dtau, dkappa)
        };

        let step_len = |dx: &ConeVec, ds: &ConeVec, dtau: f64, dkappa: f64| {
            let dxs = sc.scale_primal(dx);
            let dss = sc.scale_dual(ds);
            let mut a = sc.max_step(&dxs, 1e6).min(sc.max_step(&dss, 1e6));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            (a, dxs, dss)
        };

        // predictor
        let v_aff = sc.neg_lambda_sq();
        let (dxa, _dya, dsa, dtaua, dkappaa) = direction(1.0, &v_aff, -tau * kappa);
        let (alpha_aff, dxs_a, dss_a) = step_len(&dxa, &dsa, dtaua, dkappaa);
        let alpha_aff = alpha_aff.min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut v = v_aff;
        for (vb, (a, bm)) in v.blocks.iter_mut().zip(dxs_a.blocks.iter().zip(&dss_a.blocks)) {
            let prod = a * bm;
            let sym = (&prod + prod.transpose()) * 0.5;
            *vb -= sym;
            for i in 0..vb.nrows() {
                vb[(i, i)] += sigma * mu;
            }
        }
        for j in 0..v.lin.len() {
            v.lin[j] += sigma * mu - dxs_a.lin[j] * dss_a.lin[j];
        }
        let t = -tau * kappa + sigma * mu - dtaua * dkappaa;
        let (dx, dy, ds, dtau, dkappa) = direction(1.0 - sigma, &v, t);
        let (alpha_max, _, _) = step_len(&dx, &ds, dtau, dkappa);
        let alpha = (0.99 * alpha_max).min(1.0);
        if !(alpha > 1e-12) {
            break;
        }
        x.axpy(alpha, &dx);
        s.axpy(alpha, &ds);
        y.axpy(alpha, &dy, 1.0);
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau > 0.0 && kappa > 0.0) {
            break;
        }
    }

    let ((pres, dres, rel_gap), xb, yb, tb) = match best {
        Some((_, xb, yb, tb, r)) => (r, xb, yb, tb),
        None => (last, x, y, tau),
    };
    let near = pres <= tol.feas * NEAR_OPTIMAL_FACTOR && dres <= tol.feas * NEAR_OPTIMAL_FACTOR && rel_gap <= tol.gap * NEAR_OPTIMAL_FACTOR;
    IpmOutcome {
        status: if near { SolveStatus::NearOptimal } else { SolveStatus::MaxIter },
        x: xb.scaled(1.0 / tb),
        y: &yb / tb,
        iterations: merit.len().saturating_sub(1),
        primal_residual: pres,
        dual_residual: dres,
        rel_gap,
        merit,
    }
}
