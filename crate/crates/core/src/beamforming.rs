//! Precoder subproblem: for a fixed surface, the penalized SDP over the
//! lifted precoders `W_k` with the rate bound, reciprocal, interference and
//! power constraints.
//!
//! Variables are normalized: `W̃_k = W_k / P_max`, signal and interference
//! powers are divided by `σ²`, and the amplification budget by `P_o`.

use mfris_sdp::{AffineExpr, BlockId, ConicSolver, Field, ScalarId, SdpProblem, SdpSolution, Sense, SolveStatus};
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::ModelError;
use crate::lifted::{
    amplification_form, channel_form, lift_surface_vector, rank_violation, sca_rate_bound,
    spectral_penalty_linearization, LiftedPoint, Scenario,
};
use crate::system::{combined_channel, RisProfile};
use crate::{CMatrix, CVector};

/// Smallest normalized signal power used as an expansion point.
pub(crate) const MIN_SIGNAL: f64 = 1e-6;

/// `(Ĥ_k, D_k)` for every user under a vector-form profile.
pub fn lift_channel_forms(channels: &ChannelSet, profile: &RisProfile) -> (Vec<CMatrix>, Vec<CMatrix>) {
    (0..channels.num_users())
        .map(|k| {
            let h = combined_channel(channels, profile, k);
            let v = lift_surface_vector(&profile.coefficients(profile.side_of(k)));
            (h.adjoint() * &h, amplification_form(&channels.bs_to_ris, &v))
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfIterate {
    /// Precoder matrices in mW.
    pub w: Vec<CMatrix>,
    /// Auxiliary variables in normalized units (`A σ²`, `B / σ²`).
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub r: Vec<f64>,
    /// Leading eigenvectors of the previous iterate used by the penalty.
    pub leading_eigvec: Vec<CVector>,
    pub penalty_eta: f64,
}

/// Variable handles of a built precoder subproblem.
#[derive(Debug, Clone)]
pub struct P3Vars {
    pub w: Vec<BlockId>,
    pub a: Vec<ScalarId>,
    pub b: Vec<ScalarId>,
    pub r: Vec<ScalarId>,
    pub leading_eigvec: Vec<CVector>,
}

/// Builds the precoder SDP around `prev` (surface fixed at `prev.v`).
pub fn build_p3(
    sc: &Scenario,
    prev: &LiftedPoint,
    order: &[usize],
    eta: f64,
    xi: f64,
) -> Result<(SdpProblem, P3Vars), ModelError> {
    let k = sc.num_users();
    let n = sc.num_antennas();
    if prev.w.len() != k || prev.w.iter().any(|w| w.shape() != (n, n)) {
        return Err(ModelError::DimensionMismatch {
            what: "precoder matrices".into(),
            expected: n,
            got: prev.w.first().map_or(0, |w| w.nrows()),
        });
    }
    if !(eta > 0.0) {
        return Err(ModelError::InvalidArgument(format!("penalty factor must be positive, got {eta}")));
    }
    let b = &sc.budget;
    let ps = sc.power_scale();
    let sigma2 = b.noise_user;
    let ev = sc.evaluate(prev, order);
    let mut p = SdpProblem::new();

    let w: Vec<BlockId> = (0..k).map(|u| p.add_block(format!("W{u}"), n, Field::Complex)).collect();
    let a: Vec<ScalarId> = (0..k).map(|u| p.add_scalar(format!("A{u}"), 0.0, f64::INFINITY)).collect();
    let bb: Vec<ScalarId> = (0..k).map(|u| p.add_scalar(format!("B{u}"), 0.0, f64::INFINITY)).collect();
    let r: Vec<ScalarId> = (0..k).map(|u| p.add_scalar(format!("R{u}"), b.rate_min, f64::INFINITY)).collect();

    let mut pos = vec![0; k];
    for (i, u) in order.iter().enumerate() {
        pos[*u] = i;
    }

    let mut objective = AffineExpr::new();
    let mut leading = Vec::with_capacity(k);
    let gain = Complex64::new(ps / sigma2, 0.0);
    for u in 0..k {
        let v = sc.user_surface(prev, u);
        let hh = channel_form(sc.link(u), &v) * gain;

        let s0 = (ev.signal[u] / sigma2).max(MIN_SIGNAL);
        let i0 = ev.interference[u] / sigma2;
        let bound = sca_rate_bound(1.0 / s0, i0)?;
        p.constrain(
            AffineExpr::scalar(r[u], 1.0)
                .plus_scalar(a[u], bound.slope_a)
                .plus_scalar(bb[u], bound.slope_b),
            Sense::Le,
            bound.intercept(),
            format!("rate{u}"),
        );

        p.add_reciprocal_bound(
            AffineExpr::scalar(a[u], 1.0),
            AffineExpr::new().plus_trace(w[u], hh.clone()),
            &format!("signal{u}"),
        );

        let mut interf = AffineExpr::scalar(bb[u], 1.0);
        for i in &order[pos[u] + 1..] {
            interf = interf.plus_trace(w[*i], -hh.clone());
        }
        let ris_noise: f64 = sc.channels.ris_to_user[u]
            .iter()
            .enumerate()
            .map(|(m, g)| g.norm_sqr() * v[(m, m)].re)
            .sum();
        p.constrain(interf, Sense::Ge, b.noise_ris * ris_noise / sigma2 + 1.0, format!("interference{u}"));

        let lin = spectral_penalty_linearization(&(&prev.w[u] / Complex64::new(ps, 0.0)));
        objective = objective
            .plus_scalar(r[u], 1.0)
            .plus_trace(w[u], lin.penalty_matrix() * Complex64::new(-1.0 / eta, 0.0));
        leading.push(lin.direction);
    }
    objective = objective.plus_constant(-ev.violation_v.iter().sum::<f64>() / xi);
    p.maximize(objective);

    let id = CMatrix::identity(n, n);
    let total = w.iter().fold(AffineExpr::new(), |e, wk| e.plus_trace(*wk, id.clone()));
    p.constrain(total, Sense::Le, b.p_max / ps, "transmit power");

    if sc.limits.any_active() {
        let po = if b.p_amplify > 0.0 { b.p_amplify } else { 1.0 };
        let mut amp = AffineExpr::new();
        let mut noise = 0.0;
        for u in 0..k {
            if !sc.served_by_surface(u) {
                continue;
            }
            let v = sc.user_surface(prev, u);
            amp = amp.plus_trace(w[u], amplification_form(&sc.channels.bs_to_ris, &v) * Complex64::new(ps / po, 0.0));
            noise += b.noise_ris * (0..sc.num_elements()).map(|m| v[(m, m)].re).sum::<f64>();
        }
        p.constrain(amp, Sense::Le, (b.p_amplify - noise) / po, "amplification power");
    }

    Ok((
        p,
        P3Vars {
            w,
            a,
            b: bb,
            r,
            leading_eigvec: leading,
        },
    ))
}

pub(crate) fn check_status(sol: &SdpSolution, context: &str) -> Result<(), ModelError> {
    match sol.status {
        SolveStatus::Optimal | SolveStatus::NearOptimal => Ok(()),
        SolveStatus::Infeasible => Err(ModelError::Infeasible(context.into())),
        s => Err(ModelError::SolverFailed {
            status: format!("{s:?}"),
            context: context.into(),
        }),
    }
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Solves the precoder subproblem and returns the new iterate together with
/// the raw solver answer.
pub fn solve_p3(
    sc: &Scenario,
    prev: &LiftedPoint,
    order: &[usize],
    eta: f64,
    xi: f64,
    solver: &dyn ConicSolver,
) -> Result<(BfIterate, SdpSolution), ModelError> {
    let (problem, vars) = build_p3(sc, prev, order, eta, xi)?;
    if sc.budget.p_max == 0.0 {
        return zero_power_iterate(sc, problem, vars, eta);
    }
    let sol = solver.solve(&problem)?;
    check_status(&sol, "precoder subproblem")?;
    let ps = Complex64::new(sc.power_scale(), 0.0);
    let it = BfIterate {
        w: vars.w.iter().map(|id| hermitize(sol.block(*id)) * ps).collect(),
        a: vars.a.iter().map(|id| sol.scalar(*id)).collect(),
        b: vars.b.iter().map(|id| sol.scalar(*id)).collect(),
        r: vars.r.iter().map(|id| sol.scalar(*id)).collect(),
        leading_eigvec: vars.leading_eigvec,
        penalty_eta: eta,
    };
    Ok((it, sol))
}

/// With no transmit power the only candidate is `W = 0`, which carries no
/// rate; the conic problem has an empty interior and is not handed to the
/// solver.
fn zero_power_iterate(
    sc: &Scenario,
    problem: SdpProblem,
    vars: P3Vars,
    eta: f64,
) -> Result<(BfIterate, SdpSolution), ModelError> {
    if sc.budget.rate_min > 0.0 {
        return Err(ModelError::Infeasible(
            "positive rate floor with zero transmit power".into(),
        ));
    }
    let k = sc.num_users();
    let n = sc.num_antennas();
    let mut blocks: Vec<CMatrix> = problem.blocks.iter().map(|b| CMatrix::zeros(b.dim, b.dim)).collect();
    let mut scalars = vec![0.0; problem.scalars.len()];
    // interference bound at its floor, reciprocal blocks left at zero
    for c in &problem.constraints {
        if c.label.starts_with("interference") {
            if let Some((id, _)) = c.expr.scalars.first() {
                scalars[id.0] = c.rhs;
            }
        }
    }
    for id in &vars.w {
        blocks[id.0] = CMatrix::zeros(n, n);
    }
    let objective_value = problem.objective.evaluate(&blocks, &scalars);
    let it = BfIterate {
        w: vec![CMatrix::zeros(n, n); k],
        a: vec![0.0; k],
        b: vars.b.iter().map(|id| scalars[id.0]).collect(),
        r: vec![0.0; k],
        leading_eigvec: vars.leading_eigvec,
        penalty_eta: eta,
    };
    let sol = SdpSolution {
        status: SolveStatus::Optimal,
        blocks,
        scalars,
        objective_value,
        duality_gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        duals: vec![],
        merit: vec![],
    };
    Ok((it, sol))
}

/// `w_k = √λ₁(W_k) e₁(W_k)`; refused when the rank-one violation of
/// `W_k / P_max` exceeds `threshold`.
pub fn extract_beamformers(sc: &Scenario, w: &[CMatrix], threshold: f64) -> Result<Vec<CVector>, ModelError> {
    let ps = Complex64::new(sc.power_scale(), 0.0);
    w.iter()
        .map(|wk| {
            let violation = rank_violation(&(wk / ps));
            if violation > threshold {
                return Err(ModelError::ExtractionRefused { violation, threshold });
            }
            Ok(leading_vector(wk))
        })
        .collect()
}

pub(crate) fn leading_vector(m: &CMatrix) -> CVector {
    let (l, e) = crate::lifted::leading_eigenpair(m);
    e * Complex64::new(l.max(0.0).sqrt(), 0.0)
}
