//! Lifted (semidefinite) form of the signal model.
//!
//! With `v = [u; 1]` and the link matrix `L_k = [diag(g_kᴴ) H; h_kᴴ]`
//! ((M+1)×N), the combined channel is `ĥ_k = vᵀ L_k`. Every quantity of the
//! rate expressions is then bilinear in `W = w wᴴ` and `V = v vᴴ`:
//!
//! ```text
//! |ĥ_k w|² = Tr(Lᴴ conj(V) L W) = Tr(conj(L W Lᴴ) V)
//! ‖ĥ_k‖²   = Tr(conj(L Lᴴ) V)
//! ```
//!
//! which stays meaningful when `W` and `V` are not rank one. Both
//! subproblems linearize the same joint function, evaluated here.

use mfris_sdp::trace_inner;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::ModelError;
use crate::system::{achievable_rate, BeamformerSet, PowerBudget, RisProfile, Side};
use crate::{CMatrix, CVector};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Amplitude cap and which surface sides may carry signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceLimits {
    pub beta_max: f64,
    /// Indexed by [`Side::index`].
    pub active: [bool; 2],
}

impl SurfaceLimits {
    pub fn is_active(&self, side: Side) -> bool {
        self.active[side.index()]
    }

    pub fn any_active(&self) -> bool {
        self.active.iter().any(|a| *a)
    }
}

/// `L_k = [diag(g_kᴴ) H; h_kᴴ]`.
pub fn link_matrix(channels: &ChannelSet, user: usize) -> CMatrix {
    let (m, n) = channels.bs_to_ris.shape();
    let g = &channels.ris_to_user[user];
    let h = &channels.direct[user];
    CMatrix::from_fn(m + 1, n, |i, j| {
        if i < m {
            g[i].conj() * channels.bs_to_ris[(i, j)]
        } else {
            h[j].conj()
        }
    })
}

/// `v vᴴ` with `v = [u; 1]`.
pub fn lift_surface_vector(u: &CVector) -> CMatrix {
    let m = u.len();
    let v = CVector::from_fn(m + 1, |i, _| if i < m { u[i] } else { Complex64::new(1.0, 0.0) });
    &v * v.adjoint()
}

/// Lifted surface of a dark side: `diag(0, …, 0, 1)`.
pub fn dark_surface(num_elements: usize) -> CMatrix {
    let mut v = CMatrix::zeros(num_elements + 1, num_elements + 1);
    v[(num_elements, num_elements)] = Complex64::new(1.0, 0.0);
    v
}

/// `Ĥ_k(V) = Lᴴ conj(V) L`, equal to `ĥ_kᴴ ĥ_k` for rank-one `V`.
pub fn channel_form(link: &CMatrix, v: &CMatrix) -> CMatrix {
    link.adjoint() * v.conjugate() * link
}

/// `D(V) = Hᴴ diag(V_mm) H`, equal to `(HᴴΘ)(HᴴΘ)ᴴ` for rank-one `V`.
pub fn amplification_form(bs_to_ris: &CMatrix, v: &CMatrix) -> CMatrix {
    let m = bs_to_ris.nrows();
    let scaled = CMatrix::from_fn(m, bs_to_ris.ncols(), |i, j| bs_to_ris[(i, j)] * v[(i, i)].re);
    bs_to_ris.adjoint() * scaled
}

/// `F(W) = conj(L W Lᴴ)`, so that `Tr(F V) = Tr(Ĥ(V) W)`.
pub fn signal_form(link: &CMatrix, w: &CMatrix) -> CMatrix {
    (link * w * link.adjoint()).conjugate()
}

/// `R̄ = conj(L Lᴴ)`, so that `Tr(R̄ V) = ‖ĥ‖²`.
pub fn gain_form(link: &CMatrix) -> CMatrix {
    (link * link.adjoint()).conjugate()
}

/// `Q̄_k = diag(|g_k,m|², 0)`.
pub fn surface_noise_form(g: &CVector) -> CMatrix {
    let m = g.len();
    CMatrix::from_diagonal(&CVector::from_fn(m + 1, |i, _| {
        Complex64::new(if i < m { g[i].norm_sqr() } else { 0.0 }, 0.0)
    }))
}

/// `Ḡ(W) = diag((H W Hᴴ)_mm + σ_s², 0)`.
pub fn surface_power_form(bs_to_ris: &CMatrix, w: &CMatrix, noise_ris: f64) -> CMatrix {
    let m = bs_to_ris.nrows();
    let hw = bs_to_ris * w;
    CMatrix::from_diagonal(&CVector::from_fn(m + 1, |i, _| {
        if i < m {
            let d: Complex64 = hw.row(i).iter().zip(bs_to_ris.row(i).iter()).map(|(a, b)| a * b.conj()).sum();
            Complex64::new(d.re + noise_ris, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let e = sym.symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn leading_eigenpair(m: &CMatrix) -> (f64, CVector) {
    let (vals, vecs) = hermitian_eigen(m);
    let (i, l) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    (l, vecs.column(i).into_owned())
}

/// `‖X‖* − ‖X‖₂` for Hermitian `X`.
pub fn rank_violation(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (vals, _) = hermitian_eigen(m);
    let nuclear: f64 = vals.iter().map(|v| v.abs()).sum();
    let spectral = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    (nuclear - spectral).max(0.0)
}

/// First-order upper bound of `‖W‖* − ‖W‖₂` around `W_prev`:
/// `‖W‖* − ‖W_prev‖₂ − Tr(e eᴴ (W − W_prev))`.
#[derive(Debug, Clone)]
pub struct SpectralLinearization {
    pub direction: CVector,
    pub spectral_norm: f64,
    pub expansion_point: CMatrix,
}

impl SpectralLinearization {
    pub fn value(&self, w: &CMatrix) -> f64 {
        let (vals, _) = hermitian_eigen(w);
        let nuclear: f64 = vals.iter().map(|v| v.abs()).sum();
        let e = &self.direction;
        let delta = w - &self.expansion_point;
        nuclear - self.spectral_norm - (e.adjoint() * delta * e)[0].re
    }

    /// `I − e eᴴ`: for PSD `W` the bound equals `Tr((I − e eᴴ) W)`.
    pub fn penalty_matrix(&self) -> CMatrix {
        let n = self.direction.len();
        CMatrix::identity(n, n) - &self.direction * self.direction.adjoint()
    }
}

/// Linearization of the spectral norm at `w_prev`. For the zero matrix the
/// first standard basis vector is used as the (sub)gradient direction.
pub fn spectral_penalty_linearization(w_prev: &CMatrix) -> SpectralLinearization {
    let n = w_prev.nrows();
    let (l, e) = leading_eigenpair(w_prev);
    let zero = w_prev.iter().all(|c| *c == Complex64::new(0.0, 0.0));
    let direction = if zero || !(l > 0.0) {
        CVector::from_fn(n, |i, _| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0))
    } else {
        e
    };
    SpectralLinearization {
        direction,
        spectral_norm: l.max(0.0),
        expansion_point: w_prev.clone(),
    }
}

/// Affine lower bound of `log₂(1 + 1/(A B))` around `(A₀, B₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaBound {
    pub a0: f64,
    pub b0: f64,
    pub value_at_point: f64,
    /// Bound = value_at_point − slope_a (A − A₀) − slope_b (B − B₀).
    pub slope_a: f64,
    pub slope_b: f64,
}

impl ScaBound {
    pub fn value(&self, a: f64, b: f64) -> f64 {
        self.value_at_point - self.slope_a * (a - self.a0) - self.slope_b * (b - self.b0)
    }

    /// Constant of the bound when written as `c − slope_a A − slope_b B`.
    pub fn intercept(&self) -> f64 {
        self.value_at_point + self.slope_a * self.a0 + self.slope_b * self.b0
    }
}

pub fn sca_rate_bound(a0: f64, b0: f64) -> Result<ScaBound, ModelError> {
    if !(a0 > 0.0 && b0 > 0.0) || !a0.is_finite() || !b0.is_finite() {
        return Err(ModelError::InvalidArgument(format!(
            "expansion point must be positive, got A={a0}, B={b0}"
        )));
    }
    let ab = a0 * b0;
    Ok(ScaBound {
        a0,
        b0,
        value_at_point: (1.0 / ab).ln_1p() * LOG2_E,
        slope_a: LOG2_E / (a0 * (1.0 + ab)),
        slope_b: LOG2_E / (b0 * (1.0 + ab)),
    })
}

/// A point of the lifted problem: precoder matrices `W_k` (mW) and the
/// lifted surface `V_p` of every active side.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    pub w: Vec<CMatrix>,
    pub v: [Option<CMatrix>; 2],
}

/// Channel data and constraints shared by both subproblems.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub channels: ChannelSet,
    pub budget: PowerBudget,
    pub limits: SurfaceLimits,
    pub user_side: Vec<Side>,
    links: Vec<CMatrix>,
    gain_forms: Vec<CMatrix>,
}

/// Lifted evaluation of a point under a given decoding order.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedEval {
    /// `|ĥ_k w_k|²` per user.
    pub signal: Vec<f64>,
    /// Interference plus surface and receiver noise per user.
    pub interference: Vec<f64>,
    pub rates: Vec<f64>,
    /// `‖ĥ_k‖²` per user.
    pub gains: Vec<f64>,
    pub sum_rate: f64,
    pub transmit_power: f64,
    pub amplification_power: f64,
    /// Rank-one violation of each normalized `W_k`.
    pub violation_w: Vec<f64>,
    /// Rank-one violation of each normalized `V_p` (0 for inactive sides).
    pub violation_v: [f64; 2],
}

impl LiftedEval {
    /// Penalized objective `Σ R_k − (1/η) Σ viol(W_k) − (1/ξ) Σ viol(V_p)`.
    pub fn objective(&self, eta: f64, xi: f64) -> f64 {
        self.sum_rate - self.violation_w.iter().sum::<f64>() / eta - self.violation_v.iter().sum::<f64>() / xi
    }

    pub fn max_violation_w(&self) -> f64 {
        self.violation_w.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_violation_v(&self) -> f64 {
        self.violation_v[0].max(self.violation_v[1])
    }
}

impl Scenario {
    pub fn new(
        channels: ChannelSet,
        budget: PowerBudget,
        limits: SurfaceLimits,
        user_side: Vec<Side>,
    ) -> Result<Self, ModelError> {
        budget.validate()?;
        if !(budget.noise_user > 0.0) {
            return Err(ModelError::InvalidArgument("receiver noise power must be positive".into()));
        }
        if !(limits.beta_max >= 0.0) || !limits.beta_max.is_finite() {
            return Err(ModelError::InvalidArgument(format!(
                "beta_max must be finite and non-negative, got {}",
                limits.beta_max
            )));
        }
        let k = channels.num_users();
        if user_side.len() != k {
            return Err(ModelError::DimensionMismatch {
                what: "user side assignment".into(),
                expected: k,
                got: user_side.len(),
            });
        }
        let (m, n) = channels.bs_to_ris.shape();
        for u in 0..k {
            if channels.direct[u].len() != n {
                return Err(ModelError::DimensionMismatch {
                    what: format!("direct channel of user {u}"),
                    expected: n,
                    got: channels.direct[u].len(),
                });
            }
            if channels.ris_to_user[u].len() != m {
                return Err(ModelError::DimensionMismatch {
                    what: format!("surface channel of user {u}"),
                    expected: m,
                    got: channels.ris_to_user[u].len(),
                });
            }
        }
        let links: Vec<CMatrix> = (0..k).map(|u| link_matrix(&channels, u)).collect();
        let gain_forms = links.iter().map(gain_form).collect();
        Ok(Self {
            channels,
            budget,
            limits,
            user_side,
            links,
            gain_forms,
        })
    }

    pub fn num_users(&self) -> usize {
        self.channels.num_users()
    }

    pub fn num_antennas(&self) -> usize {
        self.channels.num_antennas()
    }

    pub fn num_elements(&self) -> usize {
        self.channels.num_elements()
    }

    pub fn link(&self, user: usize) -> &CMatrix {
        &self.links[user]
    }

    pub fn gain_form(&self, user: usize) -> &CMatrix {
        &self.gain_forms[user]
    }

    /// Whether `user` is reached through an active surface side.
    pub fn served_by_surface(&self, user: usize) -> bool {
        self.limits.is_active(self.user_side[user])
    }

    /// Scale `s` of the surface normalization `V = D Ṽ D`,
    /// `D = diag(√s, …, √s, 1)`.
    pub fn surface_scale(&self) -> f64 {
        if self.limits.beta_max > 0.0 {
            self.limits.beta_max
        } else {
            1.0
        }
    }

    /// Scale of the precoder normalization `W = P_max W̃`.
    pub fn power_scale(&self) -> f64 {
        if self.budget.p_max > 0.0 {
            self.budget.p_max
        } else {
            1.0
        }
    }

    /// `D X D` with the surface normalization matrix (`inverse` applies `D⁻¹`).
    pub fn surface_congruence(&self, x: &CMatrix, inverse: bool) -> CMatrix {
        let m = self.num_elements();
        let s = self.surface_scale().sqrt();
        let d = if inverse { 1.0 / s } else { s };
        CMatrix::from_fn(m + 1, m + 1, |i, j| {
            let f = if i < m { d } else { 1.0 } * if j < m { d } else { 1.0 };
            x[(i, j)] * f
        })
    }

    fn dark(&self) -> CMatrix {
        dark_surface(self.num_elements())
    }

    /// Lifted surface seen by `user`.
    pub fn user_surface(&self, point: &LiftedPoint, user: usize) -> CMatrix {
        let side = self.user_side[user];
        match (&point.v[side.index()], self.limits.is_active(side)) {
            (Some(v), true) => v.clone(),
            _ => self.dark(),
        }
    }

    /// Lifts a vector-form pair.
    pub fn lift(&self, beams: &BeamformerSet, profile: &RisProfile) -> LiftedPoint {
        let w = beams.precoders.iter().map(|x| x * x.adjoint()).collect();
        let v = Side::ALL.map(|side| {
            self.limits
                .is_active(side)
                .then(|| lift_surface_vector(&profile.coefficients(side)))
        });
        LiftedPoint { w, v }
    }

    pub fn evaluate(&self, point: &LiftedPoint, order: &[usize]) -> LiftedEval {
        let k = self.num_users();
        let b = &self.budget;
        let mut signal = vec![0.0; k];
        let mut interference = vec![0.0; k];
        let mut gains = vec![0.0; k];
        let mut amplification_power = 0.0;
        let mut pos = vec![0; k];
        for (p, u) in order.iter().enumerate() {
            pos[*u] = p;
        }
        for u in 0..k {
            let v = self.user_surface(point, u);
            let hh = channel_form(&self.links[u], &v);
            signal[u] = trace_inner(&hh, &point.w[u]);
            let noise_ris: f64 = self.channels.ris_to_user[u]
                .iter()
                .enumerate()
                .map(|(m, g)| g.norm_sqr() * v[(m, m)].re)
                .sum();
            interference[u] = order[pos[u] + 1..]
                .iter()
                .map(|i| trace_inner(&hh, &point.w[*i]))
                .sum::<f64>()
                + b.noise_ris * noise_ris
                + b.noise_user;
            gains[u] = trace_inner(&self.gain_forms[u], &v);
            if self.served_by_surface(u) {
                amplification_power += trace_inner(
                    &surface_power_form(&self.channels.bs_to_ris, &point.w[u], b.noise_ris),
                    &v,
                );
            }
        }
        let rates: Vec<f64> = signal
            .iter()
            .zip(&interference)
            .map(|(s, i)| achievable_rate(s.max(0.0) / i))
            .collect();
        let ps = self.power_scale();
        let violation_w = point.w.iter().map(|w| rank_violation(&(w / Complex64::new(ps, 0.0)))).collect();
        let violation_v = [0, 1].map(|i| match &point.v[i] {
            Some(v) if self.limits.active[i] => rank_violation(&self.surface_congruence(v, true)),
            _ => 0.0,
        });
        LiftedEval {
            sum_rate: rates.iter().sum(),
            signal,
            interference,
            rates,
            gains,
            transmit_power: point.w.iter().map(|w| w.trace().re).sum(),
            amplification_power,
            violation_w,
            violation_v,
        }
    }

    /// Ascending order of the lifted gains `Tr(R̄_k V)`.
    pub fn order(&self, point: &LiftedPoint) -> Vec<usize> {
        let gains: Vec<f64> = (0..self.num_users())
            .map(|u| trace_inner(&self.gain_forms[u], &self.user_surface(point, u)))
            .collect();
        crate::system::order_by_gain(&gains)
    }
}
