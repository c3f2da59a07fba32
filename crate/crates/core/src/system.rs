//! Signal model: surface coefficients, combined channels, SINR, rates,
//! power consumption and feasibility of a (precoder, surface) pair.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::ModelError;
use crate::{CMatrix, CRowVector, CVector};

/// Feasibility tolerance shared by all slack checks.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Reflection,
    Transmission,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Reflection, Side::Transmission];

    pub fn index(self) -> usize {
        match self {
            Side::Reflection => 0,
            Side::Transmission => 1,
        }
    }

    /// Users on circle 0 (between BS and surface) are served by reflection,
    /// users on circle 1 by transmission.
    pub fn from_circle(circle: usize) -> Side {
        if circle == 0 {
            Side::Reflection
        } else {
            Side::Transmission
        }
    }
}

/// Per-element amplitudes and phases on both sides of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisProfile {
    pub beta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub theta_r: Vec<f64>,
    pub beta_max: f64,
    pub user_side: Vec<Side>,
}

impl RisProfile {
    /// All-dark surface (`Θ_k = 0` for every user).
    pub fn dark(num_elements: usize, beta_max: f64, user_side: Vec<Side>) -> Self {
        Self {
            beta_t: vec![0.0; num_elements],
            beta_r: vec![0.0; num_elements],
            theta_t: vec![0.0; num_elements],
            theta_r: vec![0.0; num_elements],
            beta_max,
            user_side,
        }
    }

    /// Builds a profile from complex coefficient vectors `u_r`, `u_t`
    /// (`√β e^{jθ}`), wrapping phases into `[0, 2π)`.
    pub fn from_coefficients(
        u_r: &CVector,
        u_t: &CVector,
        beta_max: f64,
        user_side: Vec<Side>,
    ) -> Self {
        let amp = |u: &CVector| u.iter().map(|c| c.norm_sqr()).collect::<Vec<_>>();
        let phase = |u: &CVector| u.iter().map(|c| wrap_phase(c.arg())).collect::<Vec<_>>();
        Self {
            beta_t: amp(u_t),
            beta_r: amp(u_r),
            theta_t: phase(u_t),
            theta_r: phase(u_r),
            beta_max,
            user_side,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.beta_t.len()
    }

    pub fn beta(&self, side: Side) -> &[f64] {
        match side {
            Side::Reflection => &self.beta_r,
            Side::Transmission => &self.beta_t,
        }
    }

    pub fn theta(&self, side: Side) -> &[f64] {
        match side {
            Side::Reflection => &self.theta_r,
            Side::Transmission => &self.theta_t,
        }
    }

    /// `u_p = [√β_m^p e^{jθ_m^p}]`.
    pub fn coefficients(&self, side: Side) -> CVector {
        let (b, t) = (self.beta(side), self.theta(side));
        CVector::from_iterator(
            b.len(),
            b.iter()
                .zip(t)
                .map(|(b, t)| Complex64::from_polar(b.max(0.0).sqrt(), *t)),
        )
    }

    pub fn side_of(&self, user: usize) -> Side {
        self.user_side[user]
    }

    /// Largest violation of the amplitude bounds (0 when they hold).
    pub fn amplitude_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..self.num_elements() {
            let (t, r) = (self.beta_t[m], self.beta_r[m]);
            worst = worst
                .max(-t)
                .max(-r)
                .max(t - self.beta_max)
                .max(r - self.beta_max)
                .max(t + r - self.beta_max);
        }
        worst
    }

    fn validate(&self, m: usize, k: usize) -> Result<(), ModelError> {
        for (what, len) in [
            ("beta_t", self.beta_t.len()),
            ("beta_r", self.beta_r.len()),
            ("theta_t", self.theta_t.len()),
            ("theta_r", self.theta_r.len()),
        ] {
            if len != m {
                return Err(ModelError::DimensionMismatch {
                    what: format!("profile {what}"),
                    expected: m,
                    got: len,
                });
            }
        }
        if self.user_side.len() != k {
            return Err(ModelError::DimensionMismatch {
                what: "profile user_side".into(),
                expected: k,
                got: self.user_side.len(),
            });
        }
        Ok(())
    }
}

pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    #[serde(with = "crate::complex_serde::vectors")]
    pub precoders: Vec<CVector>,
}

impl BeamformerSet {
    pub fn zeros(num_users: usize, num_antennas: usize) -> Self {
        Self {
            precoders: vec![CVector::zeros(num_antennas); num_users],
        }
    }

    pub fn total_power(&self) -> f64 {
        self.precoders.iter().map(|w| w.norm_squared()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            precoders: self
                .precoders
                .iter()
                .map(|w| w * Complex64::new(factor, 0.0))
                .collect(),
        }
    }
}

/// Power limits, noise powers (all mW) and the per-user rate floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub p_max: f64,
    pub p_amplify: f64,
    pub noise_ris: f64,
    pub noise_user: f64,
    pub rate_min: f64,
}

impl PowerBudget {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("p_max", self.p_max),
            ("p_amplify", self.p_amplify),
            ("noise_ris", self.noise_ris),
            ("noise_user", self.noise_user),
            ("rate_min", self.rate_min),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `Θ_k = diag(u_p)` for the side serving `user`.
pub fn surface_matrix(profile: &RisProfile, user: usize) -> CMatrix {
    CMatrix::from_diagonal(&profile.coefficients(profile.side_of(user)))
}

/// `ĥ_k = h_kᴴ + g_kᴴ Θ_k H`.
pub fn combined_channel(channels: &ChannelSet, profile: &RisProfile, user: usize) -> CRowVector {
    let u = profile.coefficients(profile.side_of(user));
    let g = &channels.ris_to_user[user];
    let mut out = channels.direct[user].adjoint();
    for (m, row) in channels.bs_to_ris.row_iter().enumerate() {
        let c = g[m].conj() * u[m];
        if c != Complex64::new(0.0, 0.0) {
            out += row * c;
        }
    }
    out
}

fn channel_gains(channels: &ChannelSet, profile: &RisProfile) -> Vec<f64> {
    (0..channels.num_users())
        .map(|k| combined_channel(channels, profile, k).norm_squared())
        .collect()
}

/// Users sorted by ascending `‖ĥ_k‖²`, ties kept in index order.
pub fn order_by_gain(gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|a, b| gains[*a].total_cmp(&gains[*b]));
    order
}

/// Decoding order: the permutation ranking users by combined channel gain.
pub fn decoding_order(channels: &ChannelSet, profile: &RisProfile) -> Vec<usize> {
    order_by_gain(&channel_gains(channels, profile))
}

/// Expected power of the amplified surface noise at `user`: `σ_s² ‖g_kᴴ Θ_k‖²`.
pub fn ris_noise_power(channels: &ChannelSet, profile: &RisProfile, budget: &PowerBudget, user: usize) -> f64 {
    let beta = profile.beta(profile.side_of(user));
    budget.noise_ris
        * channels.ris_to_user[user]
            .iter()
            .zip(beta)
            .map(|(g, b)| g.norm_sqr() * b)
            .sum::<f64>()
}

/// SINR of `user` (original index) when users decode in `order`; the users
/// ranked after `user` interfere with it.
pub fn sinr(
    channels: &ChannelSet,
    profile: &RisProfile,
    beams: &BeamformerSet,
    budget: &PowerBudget,
    user: usize,
    order: &[usize],
) -> f64 {
    let h = combined_channel(channels, profile, user);
    let pos = order
        .iter()
        .position(|&u| u == user)
        .expect("user missing from decoding order");
    let signal = (&h * &beams.precoders[user])[0].norm_sqr();
    let interference: f64 = order[pos + 1..]
        .iter()
        .map(|&i| (&h * &beams.precoders[i])[0].norm_sqr())
        .sum();
    signal / (interference + ris_noise_power(channels, profile, budget, user) + budget.noise_user)
}

pub fn achievable_rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// `Σ_k (‖Θ_k H w_k‖² + σ_s² ‖Θ_k‖_F²)`, the noise term counted once per user.
pub fn amplification_power(
    channels: &ChannelSet,
    profile: &RisProfile,
    beams: &BeamformerSet,
    budget: &PowerBudget,
) -> f64 {
    let mut total = 0.0;
    for (k, w) in beams.precoders.iter().enumerate() {
        let beta = profile.beta(profile.side_of(k));
        let hw = &channels.bs_to_ris * w;
        total += hw
            .iter()
            .zip(beta)
            .map(|(x, b)| b * (x.norm_sqr() + budget.noise_ris))
            .sum::<f64>();
    }
    total
}

/// Per-user rates under the decoding order implied by the channel gains.
pub fn user_rates(
    channels: &ChannelSet,
    profile: &RisProfile,
    beams: &BeamformerSet,
    budget: &PowerBudget,
) -> Vec<f64> {
    let order = decoding_order(channels, profile);
    (0..channels.num_users())
        .map(|k| achievable_rate(sinr(channels, profile, beams, budget, k, &order)))
        .collect()
}

pub fn sum_rate(channels: &ChannelSet, profile: &RisProfile, beams: &BeamformerSet, budget: &PowerBudget) -> f64 {
    user_rates(channels, profile, beams, budget).iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `P_max − Σ‖w_k‖²` (mW).
    pub transmit_power: f64,
    /// `P_o − amplification power` (mW).
    pub amplification_power: f64,
    /// Minus the largest amplitude-bound violation.
    pub amplitude: f64,
    /// `R_k − R_min` per user (bit/s/Hz).
    pub qos: Vec<f64>,
    /// Smallest normalized gain gap between consecutive users of the order
    /// checked; non-negative when the order ranks gains ascending.
    pub ordering: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn worst_slack(&self) -> f64 {
        self.qos
            .iter()
            .copied()
            .chain([self.transmit_power, self.amplification_power, self.amplitude, self.ordering])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Slack of every constraint of the sum-rate problem. Rates are evaluated
/// under `assumed_order` when given (whose consistency with the gains is
/// checked), otherwise under the gain-sorted order.
pub fn check_feasibility(
    channels: &ChannelSet,
    profile: &RisProfile,
    beams: &BeamformerSet,
    budget: &PowerBudget,
    assumed_order: Option<&[usize]>,
) -> Result<FeasibilityReport, ModelError> {
    let k = channels.num_users();
    profile.validate(channels.num_elements(), k)?;
    if beams.precoders.len() != k {
        return Err(ModelError::DimensionMismatch {
            what: "number of precoders".into(),
            expected: k,
            got: beams.precoders.len(),
        });
    }
    let gains = channel_gains(channels, profile);
    let order = match assumed_order {
        Some(o) => {
            let mut sorted = o.to_vec();
            sorted.sort_unstable();
            if sorted != (0..k).collect::<Vec<_>>() {
                return Err(ModelError::InvalidArgument(format!(
                    "{o:?} is not a permutation of 0..{k}"
                )));
            }
            o.to_vec()
        }
        None => order_by_gain(&gains),
    };
    let scale = gains.iter().copied().fold(0.0, f64::max);
    let ordering = order
        .windows(2)
        .map(|p| {
            if scale > 0.0 {
                (gains[p[1]] - gains[p[0]]) / scale
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min);
    let ordering = if ordering.is_finite() { ordering } else { 0.0 };
    let qos = (0..k)
        .map(|u| achievable_rate(sinr(channels, profile, beams, budget, u, &order)) - budget.rate_min)
        .collect::<Vec<_>>();
    let mut report = FeasibilityReport {
        transmit_power: budget.p_max - beams.total_power(),
        amplification_power: budget.p_amplify - amplification_power(channels, profile, beams, budget),
        amplitude: -profile.amplitude_violation(),
        qos,
        ordering,
        feasible: false,
    };
    report.feasible = report.worst_slack() >= -FEASIBILITY_TOL;
    Ok(report)
}
