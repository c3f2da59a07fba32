//! Surface subproblem: for fixed precoders, the penalized SDP over the
//! lifted surface vectors `V_p = [u_p; 1][u_p; 1]ᴴ` of the active sides.
//!
//! Users on the same side share one surface vector, so there is one PSD
//! variable per active side. Variables are normalized as `V = D Ṽ D` with
//! `D = diag(√β_max, …, √β_max, 1)`.

use mfris_sdp::{entry_selector, AffineExpr, BlockId, ConicSolver, Field, ScalarId, SdpProblem, SdpSolution, Sense};
use num_complex::Complex64;

use crate::beamforming::{check_status, hermitize, MIN_SIGNAL};
use crate::channel::ChannelSet;
use crate::error::ModelError;
use crate::lifted::{
    gain_form, leading_eigenpair, link_matrix, rank_violation, sca_rate_bound, signal_form,
    spectral_penalty_linearization, surface_noise_form, surface_power_form, LiftedPoint, Scenario,
};
use crate::system::{BeamformerSet, RisProfile, Side};
use crate::{CMatrix, CVector};

/// Constant matrices of the lifted surface model.
#[derive(Debug, Clone)]
pub struct LiftedRisData {
    /// `signal[k][i] = F(w_i)` on user `k`'s link: `Tr(V signal[k][i]) = |ĥ_k w_i|²`.
    pub signal: Vec<Vec<CMatrix>>,
    /// `Q̄_k`.
    pub noise: Vec<CMatrix>,
    /// `Ḡ_k`: `Tr(V Ḡ_k) = ‖Θ H w_k‖² + σ_s² Σ β_m`.
    pub power: Vec<CMatrix>,
    /// `R̄_k`: `Tr(V R̄_k) = ‖ĥ_k‖²`.
    pub gain: Vec<CMatrix>,
}

pub fn lift_ris_forms(channels: &ChannelSet, beams: &BeamformerSet, noise_ris: f64) -> LiftedRisData {
    let k = channels.num_users();
    let ww: Vec<CMatrix> = beams.precoders.iter().map(|w| w * w.adjoint()).collect();
    let links: Vec<CMatrix> = (0..k).map(|u| link_matrix(channels, u)).collect();
    LiftedRisData {
        signal: links.iter().map(|l| ww.iter().map(|w| signal_form(l, w)).collect()).collect(),
        noise: channels.ris_to_user.iter().map(surface_noise_form).collect(),
        power: ww.iter().map(|w| surface_power_form(&channels.bs_to_ris, w, noise_ris)).collect(),
        gain: links.iter().map(gain_form).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisIterate {
    /// Lifted surfaces in physical units, per side (`None` when inactive).
    pub v: [Option<CMatrix>; 2],
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub r: Vec<f64>,
    pub leading_eigvec: [Option<CVector>; 2],
    pub penalty_xi: f64,
}

#[derive(Debug, Clone)]
pub struct P5Vars {
    pub v: [Option<BlockId>; 2],
    pub a: Vec<ScalarId>,
    pub b: Vec<ScalarId>,
    pub r: Vec<ScalarId>,
    pub leading_eigvec: [Option<CVector>; 2],
}

/// Builds the surface SDP around `prev` (precoders fixed at `prev.w`).
pub fn build_p5(
    sc: &Scenario,
    prev: &LiftedPoint,
    order: &[usize],
    eta: f64,
    xi: f64,
) -> Result<(SdpProblem, P5Vars), ModelError> {
    if !sc.limits.any_active() {
        return Err(ModelError::InvalidArgument("no active surface side".into()));
    }
    if !(xi > 0.0) {
        return Err(ModelError::InvalidArgument(format!("penalty factor must be positive, got {xi}")));
    }
    let k = sc.num_users();
    let m = sc.num_elements();
    for side in Side::ALL {
        if sc.limits.is_active(side) {
            match &prev.v[side.index()] {
                Some(v) if v.shape() == (m + 1, m + 1) => {}
                _ => {
                    return Err(ModelError::DimensionMismatch {
                        what: format!("lifted surface of {side:?} side"),
                        expected: m + 1,
                        got: prev.v[side.index()].as_ref().map_or(0, |v| v.nrows()),
                    })
                }
            }
        }
    }
    let b = &sc.budget;
    let sigma2 = b.noise_user;
    let s = sc.surface_scale();
    let ev = sc.evaluate(prev, order);
    let mut p = SdpProblem::new();

    let v: [Option<BlockId>; 2] = Side::ALL.map(|side| {
        sc.limits
            .is_active(side)
            .then(|| p.add_block(format!("V{}", side_tag(side)), m + 1, Field::Complex))
    });
    let a: Vec<ScalarId> = (0..k).map(|u| p.add_scalar(format!("A{u}"), 0.0, f64::INFINITY)).collect();
    let bb: Vec<ScalarId> = (0..k).map(|u| p.add_scalar(format!("B{u}"), 0.0, f64::INFINITY)).collect();
    let r: Vec<ScalarId> = (0..k).map(|u| p.add_scalar(format!("R{u}"), b.rate_min, f64::INFINITY)).collect();

    let mut pos = vec![0; k];
    for (i, u) in order.iter().enumerate() {
        pos[*u] = i;
    }

    // `Tr(C V)` as an expression in the normalized variable, or a constant
    // for users reached only through the direct link.
    let term = |u: usize, c: &CMatrix, factor: f64| -> AffineExpr {
        let side = sc.user_side[u];
        match v[side.index()] {
            Some(id) => AffineExpr::new().plus_trace(id, sc.surface_congruence(c, false) * Complex64::new(factor, 0.0)),
            None => AffineExpr::constant(factor * c[(m, m)].re),
        }
    };

    let mut objective = AffineExpr::new();
    for u in 0..k {
        let link = sc.link(u);
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

        let f = signal_form(link, &prev.w[u]);
        p.add_reciprocal_bound(AffineExpr::scalar(a[u], 1.0), term(u, &f, 1.0 / sigma2), &format!("signal{u}"));

        let mut interferers = CMatrix::zeros(sc.num_antennas(), sc.num_antennas());
        for i in &order[pos[u] + 1..] {
            interferers += &prev.w[*i];
        }
        let mut c = signal_form(link, &interferers);
        c += surface_noise_form(&sc.channels.ris_to_user[u]) * Complex64::new(b.noise_ris, 0.0);
        let interf = term(u, &c, 1.0 / sigma2);
        p.constrain(
            AffineExpr::scalar(bb[u], 1.0).add(interf.scaled(-1.0)),
            Sense::Ge,
            1.0,
            format!("interference{u}"),
        );
        objective = objective.plus_scalar(r[u], 1.0);
    }

    // amplification power
    let po = if b.p_amplify > 0.0 { b.p_amplify } else { 1.0 };
    let mut amp = AffineExpr::new();
    for u in 0..k {
        if sc.served_by_surface(u) {
            let g = surface_power_form(&sc.channels.bs_to_ris, &prev.w[u], b.noise_ris);
            amp = amp.add(term(u, &g, 1.0 / po));
        }
    }
    p.constrain(amp, Sense::Le, b.p_amplify / po, "amplification power");

    // lift structure and amplitude limits
    for id in v.iter().flatten() {
        p.constrain(
            AffineExpr::new().plus_trace(*id, entry_selector(m + 1, m, m)),
            Sense::Eq,
            1.0,
            format!("corner{}", id.0),
        );
    }
    for e in 0..m {
        let sel = entry_selector(m + 1, e, e) * Complex64::new(s, 0.0);
        let sum = v.iter().flatten().fold(AffineExpr::new(), |acc, id| acc.plus_trace(*id, sel.clone()));
        p.constrain(sum, Sense::Le, sc.limits.beta_max, format!("amplitude{e}"));
    }

    // decoding order
    let gscale = ev.gains.iter().copied().fold(0.0, f64::max);
    if gscale > 0.0 {
        for pair in order.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let lhs = term(lo, sc.gain_form(lo), 1.0 / gscale).add(term(hi, sc.gain_form(hi), -1.0 / gscale));
            if lhs.blocks.is_empty() {
                continue;
            }
            p.constrain(lhs, Sense::Le, 0.0, format!("order{lo}<{hi}"));
        }
    }

    let mut leading: [Option<CVector>; 2] = [None, None];
    for side in Side::ALL {
        if let (Some(id), Some(vp)) = (v[side.index()], &prev.v[side.index()]) {
            let lin = spectral_penalty_linearization(&sc.surface_congruence(vp, true));
            objective = objective.plus_trace(id, lin.penalty_matrix() * Complex64::new(-1.0 / xi, 0.0));
            leading[side.index()] = Some(lin.direction);
        }
    }
    objective = objective.plus_constant(-ev.violation_w.iter().sum::<f64>() / eta);
    p.maximize(objective);

    Ok((
        p,
        P5Vars {
            v,
            a,
            b: bb,
            r,
            leading_eigvec: leading,
        },
    ))
}

fn side_tag(side: Side) -> &'static str {
    match side {
        Side::Reflection => "r",
        Side::Transmission => "t",
    }
}

pub fn solve_p5(
    sc: &Scenario,
    prev: &LiftedPoint,
    order: &[usize],
    eta: f64,
    xi: f64,
    solver: &dyn ConicSolver,
) -> Result<(RisIterate, SdpSolution), ModelError> {
    let (problem, vars) = build_p5(sc, prev, order, eta, xi)?;
    if sc.limits.beta_max == 0.0 {
        return closed_surface_iterate(sc, prev, order, problem, vars, xi);
    }
    let sol = solver.solve(&problem)?;
    check_status(&sol, "surface subproblem")?;
    let v = vars.v.map(|id| id.map(|id| sc.surface_congruence(&hermitize(sol.block(id)), false)));
    let it = RisIterate {
        v,
        a: vars.a.iter().map(|id| sol.scalar(*id)).collect(),
        b: vars.b.iter().map(|id| sol.scalar(*id)).collect(),
        r: vars.r.iter().map(|id| sol.scalar(*id)).collect(),
        leading_eigvec: vars.leading_eigvec,
        penalty_xi: xi,
    };
    Ok((it, sol))
}

/// With `β_max = 0` the only admissible lift is `diag(0, …, 0, 1)`; the
/// feasible set has no interior and is resolved without the solver.
fn closed_surface_iterate(
    sc: &Scenario,
    prev: &LiftedPoint,
    order: &[usize],
    problem: SdpProblem,
    vars: P5Vars,
    xi: f64,
) -> Result<(RisIterate, SdpSolution), ModelError> {
    let m = sc.num_elements();
    let v = vars.v.map(|id| id.map(|_| crate::lifted::dark_surface(m)));
    let point = LiftedPoint { w: prev.w.clone(), v: v.clone() };
    let ev = sc.evaluate(&point, order);
    if ev.rates.iter().any(|r| *r < sc.budget.rate_min - crate::system::FEASIBILITY_TOL) {
        return Err(ModelError::Infeasible("rate floor not met with a closed surface".into()));
    }
    let sigma2 = sc.budget.noise_user;
    let mut blocks: Vec<CMatrix> = problem.blocks.iter().map(|b| CMatrix::zeros(b.dim, b.dim)).collect();
    for (id, vp) in vars.v.iter().zip(&v) {
        if let (Some(id), Some(vp)) = (id, vp) {
            blocks[id.0] = vp.clone();
        }
    }
    let mut scalars = vec![0.0; problem.scalars.len()];
    for u in 0..sc.num_users() {
        scalars[vars.a[u].0] = sigma2 / ev.signal[u].max(f64::MIN_POSITIVE);
        scalars[vars.b[u].0] = ev.interference[u] / sigma2;
        scalars[vars.r[u].0] = ev.rates[u];
    }
    let it = RisIterate {
        v,
        a: vars.a.iter().map(|id| scalars[id.0]).collect(),
        b: vars.b.iter().map(|id| scalars[id.0]).collect(),
        r: ev.rates.clone(),
        leading_eigvec: vars.leading_eigvec,
        penalty_xi: xi,
    };
    let sol = SdpSolution {
        status: mfris_sdp::SolveStatus::Optimal,
        objective_value: ev.sum_rate + problem.objective.constant,
        blocks,
        scalars,
        duality_gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        duals: vec![],
        merit: vec![],
    };
    Ok((it, sol))
}

/// Rank-one surface profile from lifted surfaces in physical units.
///
/// The leading eigenvector of each normalized `Ṽ_p` is rotated so that its
/// last entry is 1; amplitudes are clipped to `[0, β_max]` and scaled down
/// per element where `β_t + β_r` exceeds `β_max`. Refused when a rank-one
/// violation exceeds `threshold`.
pub fn extract_ris_profile(sc: &Scenario, v: &[Option<CMatrix>; 2], threshold: f64) -> Result<RisProfile, ModelError> {
    let m = sc.num_elements();
    let beta_max = sc.limits.beta_max;
    let root_s = sc.surface_scale().sqrt();
    let mut coef = [CVector::zeros(m), CVector::zeros(m)];
    for side in Side::ALL {
        let Some(vp) = (if sc.limits.is_active(side) { v[side.index()].as_ref() } else { None }) else {
            continue;
        };
        let vt = sc.surface_congruence(vp, true);
        let violation = rank_violation(&vt);
        if violation > threshold {
            return Err(ModelError::ExtractionRefused { violation, threshold });
        }
        let (_, e) = leading_eigenpair(&vt);
        let last = e[m];
        if last.norm() < 1e-8 * e.norm().max(f64::MIN_POSITIVE) {
            return Err(ModelError::DegenerateLift(last.norm()));
        }
        coef[side.index()] = CVector::from_fn(m, |i, _| e[i] / last * root_s);
    }
    let mut profile = RisProfile::from_coefficients(&coef[0], &coef[1], beta_max, sc.user_side.clone());
    for e in 0..m {
        profile.beta_r[e] = profile.beta_r[e].clamp(0.0, beta_max);
        profile.beta_t[e] = profile.beta_t[e].clamp(0.0, beta_max);
        let total = profile.beta_r[e] + profile.beta_t[e];
        if total > beta_max {
            let f = beta_max / total;
            profile.beta_r[e] *= f;
            profile.beta_t[e] *= f;
        }
    }
    Ok(profile)
}
