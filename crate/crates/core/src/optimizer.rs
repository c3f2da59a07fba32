//! Penalty-based alternating optimization: an outer loop that tightens the
//! rank-one penalties and an inner loop alternating the precoder and surface
//! subproblems, plus the architecture presets used for comparison.

use std::f64::consts::TAU;
use std::time::Instant;

use mfris_sdp::{ConicSolver, SdpSolution};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beamforming::{extract_beamformers, solve_p3};
use crate::channel::ChannelSet;
use crate::error::ModelError;
use crate::lifted::{LiftedEval, LiftedPoint, Scenario, SurfaceLimits};
use crate::surface::{extract_ris_profile, solve_p5};
use crate::system::{
    achievable_rate, amplification_power, check_feasibility, combined_channel, decoding_order, ris_noise_power, sinr,
    BeamformerSet, FeasibilityReport, PowerBudget, RisProfile, Side,
};
use crate::CVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct AlgorithmConfig {
    /// Relative change of the objective that ends an inner loop.
    pub delta: f64,
    pub max_inner_iter: usize,
    pub eta_init: f64,
    pub xi_init: f64,
    /// Penalty decay per outer iteration.
    pub mu: f64,
    /// Rank-one violation threshold.
    pub epsilon: f64,
    pub max_outer_iter: usize,
    pub random_start_attempts: usize,
    pub seed: u64,
    /// Record wall-clock times in traces (off for reproducible output).
    pub record_timing: bool,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_inner_iter: 30,
            eta_init: 10.0,
            xi_init: 10.0,
            mu: 0.5,
            epsilon: 1e-6,
            max_outer_iter: 15,
            random_start_attempts: 100,
            seed: 0,
            record_timing: true,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidArgument(msg));
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu must lie in (0, 1), got {}", self.mu));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.eta_init > 0.0 && self.xi_init > 0.0) {
            return bad("initial penalty factors must be positive".into());
        }
        if self.max_inner_iter == 0 || self.max_outer_iter == 0 || self.random_start_attempts == 0 {
            return bad("iteration and attempt limits must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitecturePreset {
    MfRis,
    SfRisReflect,
    SfRisTransmit,
    ActiveRis,
    StarRis,
    NoRis,
}

impl ArchitecturePreset {
    pub const ALL: [ArchitecturePreset; 6] = [
        ArchitecturePreset::MfRis,
        ArchitecturePreset::SfRisReflect,
        ArchitecturePreset::SfRisTransmit,
        ArchitecturePreset::ActiveRis,
        ArchitecturePreset::StarRis,
        ArchitecturePreset::NoRis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitecturePreset::MfRis => "mf_ris",
            ArchitecturePreset::SfRisReflect => "sf_ris_reflect",
            ArchitecturePreset::SfRisTransmit => "sf_ris_transmit",
            ArchitecturePreset::ActiveRis => "active_ris",
            ArchitecturePreset::StarRis => "star_ris",
            ArchitecturePreset::NoRis => "no_ris",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Amplitude cap and active sides of a preset, given the configured `β_max`.
pub fn apply_preset(preset: ArchitecturePreset, beta_max: f64) -> SurfaceLimits {
    use ArchitecturePreset::*;
    let (beta_max, active) = match preset {
        MfRis => (beta_max, [true, true]),
        SfRisReflect => (1.0, [true, false]),
        SfRisTransmit => (1.0, [false, true]),
        ActiveRis => (beta_max, [true, false]),
        StarRis => (1.0, [true, true]),
        NoRis => (0.0, [false, false]),
    };
    SurfaceLimits { beta_max, active }
}

/// Feasible starting point with the auxiliary variables at equality:
/// `a[k] = 1 / |ĥ_k w_k|²` and `b[k]` the interference-plus-noise power.
#[derive(Debug, Clone)]
pub struct InitialPoint {
    pub beams: BeamformerSet,
    pub profile: RisProfile,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub attempts: usize,
}

fn random_profile<R: Rng>(rng: &mut R, m: usize, limits: &SurfaceLimits, user_side: &[Side]) -> RisProfile {
    let mut p = RisProfile::dark(m, limits.beta_max, user_side.to_vec());
    let [r_on, t_on] = limits.active;
    for e in 0..m {
        let split: f64 = rng.gen();
        let (br, bt) = match (r_on, t_on) {
            (true, true) => (limits.beta_max * split, limits.beta_max * (1.0 - split)),
            (true, false) => (limits.beta_max, 0.0),
            (false, true) => (0.0, limits.beta_max),
            (false, false) => (0.0, 0.0),
        };
        p.beta_r[e] = br;
        p.beta_t[e] = bt;
        p.theta_r[e] = if r_on { rng.gen_range(0.0..TAU) } else { 0.0 };
        p.theta_t[e] = if t_on { rng.gen_range(0.0..TAU) } else { 0.0 };
    }
    p
}

/// Random precoders around the matched filter of each user's combined
/// channel, powered by back-substitution along the decoding order so that
/// every rate floor holds with equality, then scaled up to `P_max`.
/// Returns `None` when the floors need more than `P_max`.
fn random_beams<R: Rng>(
    rng: &mut R,
    channels: &ChannelSet,
    profile: &RisProfile,
    budget: &PowerBudget,
) -> Option<BeamformerSet> {
    let k = channels.num_users();
    let n = channels.num_antennas();
    let gamma = 2f64.powf(budget.rate_min) - 1.0;
    let heads: Vec<_> = (0..k).map(|u| combined_channel(channels, profile, u)).collect();
    let dirs: Vec<CVector> = heads
        .iter()
        .map(|h| {
            let mf = h.adjoint();
            let mf_norm = mf.norm();
            let rho: f64 = rng.gen();
            let z = CVector::from_fn(n, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let d = if mf_norm > 0.0 { mf / Complex64::new(mf_norm, 0.0) } else { CVector::zeros(n) }
                + z * Complex64::new(rho / (2.0 * n as f64).sqrt(), 0.0);
            let norm = d.norm();
            d / Complex64::new(norm, 0.0)
        })
        .collect();
    let order = decoding_order(channels, profile);
    let gain = |u: usize, i: usize| (&heads[u] * &dirs[i])[0].norm_sqr();
    let mut power = vec![0.0; k];
    for (pos, &u) in order.iter().enumerate().rev() {
        let interference: f64 = order[pos + 1..].iter().map(|&i| power[i] * gain(u, i)).sum();
        let noise = ris_noise_power(channels, profile, budget, u) + budget.noise_user;
        let g = gain(u, u);
        if gamma > 0.0 && !(g > 0.0) {
            return None;
        }
        power[u] = if gamma > 0.0 { gamma * (interference + noise) / g } else { 0.0 };
    }
    let total: f64 = power.iter().sum();
    if total > budget.p_max {
        return None;
    }
    let power: Vec<f64> = if total > 0.0 {
        power.iter().map(|p| p * budget.p_max / total).collect()
    } else {
        vec![budget.p_max / k as f64; k]
    };
    Some(BeamformerSet {
        precoders: dirs.into_iter().zip(power).map(|(d, p)| d * Complex64::new(p.sqrt(), 0.0)).collect(),
    })
}

/// Scales precoders (and, if the surface noise alone exceeds the budget,
/// the amplitudes) so that the transmit and amplification budgets hold.
pub fn fit_to_budget(
    channels: &ChannelSet,
    budget: &PowerBudget,
    mut beams: BeamformerSet,
    mut profile: RisProfile,
) -> (BeamformerSet, RisProfile) {
    let total = beams.total_power();
    if total > budget.p_max {
        beams = beams.scaled((budget.p_max / total).sqrt());
    }
    let amp = amplification_power(channels, &profile, &beams, budget);
    if amp > budget.p_amplify {
        let noise = amplification_power(channels, &profile, &BeamformerSet::zeros(beams.precoders.len(), channels.num_antennas()), budget);
        let signal = amp - noise;
        if noise < budget.p_amplify && signal > 0.0 {
            beams = beams.scaled(((budget.p_amplify - noise) / signal).sqrt());
        } else {
            let f = budget.p_amplify / amp;
            for b in profile.beta_r.iter_mut().chain(profile.beta_t.iter_mut()) {
                *b *= f;
            }
        }
    }
    (beams, profile)
}

fn auxiliaries(channels: &ChannelSet, profile: &RisProfile, beams: &BeamformerSet, budget: &PowerBudget) -> (Vec<f64>, Vec<f64>) {
    let order = decoding_order(channels, profile);
    (0..channels.num_users())
        .map(|k| {
            let h = combined_channel(channels, profile, k);
            let s = (&h * &beams.precoders[k])[0].norm_sqr();
            let g = sinr(channels, profile, beams, budget, k, &order);
            let interference = if g > 0.0 {
                s / g
            } else {
                let pos = order.iter().position(|u| *u == k).unwrap();
                order[pos + 1..]
                    .iter()
                    .map(|i| (&h * &beams.precoders[*i])[0].norm_sqr())
                    .sum::<f64>()
                    + ris_noise_power(channels, profile, budget, k)
                    + budget.noise_user
            };
            (1.0 / s, interference)
        })
        .unzip()
}

/// Draws random precoders and surface profiles until one satisfies every
/// constraint.
pub fn initialize_feasible(
    channels: &ChannelSet,
    budget: &PowerBudget,
    limits: &SurfaceLimits,
    user_side: &[Side],
    config: &AlgorithmConfig,
) -> Result<InitialPoint, ModelError> {
    let m = channels.num_elements();
    // Separate streams keep the precoder draws of a seed identical across
    // presets and element counts.
    let mut surface_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut beam_rng = ChaCha8Rng::seed_from_u64(config.seed);
    beam_rng.set_stream(1);
    let mut worst = f64::NEG_INFINITY;
    for attempt in 1..=config.random_start_attempts {
        let profile = random_profile(&mut surface_rng, m, limits, user_side);
        let Some(beams) = random_beams(&mut beam_rng, channels, &profile, budget) else {
            continue;
        };
        let (beams, profile) = fit_to_budget(channels, budget, beams, profile);
        let report = check_feasibility(channels, &profile, &beams, budget, None)?;
        if report.feasible {
            let (a, b) = auxiliaries(channels, &profile, &beams, budget);
            return Ok(InitialPoint {
                beams,
                profile,
                a,
                b,
                attempts: attempt,
            });
        }
        worst = worst.max(report.worst_slack());
    }
    Err(ModelError::InitializationFailed {
        attempts: config.random_start_attempts,
        reason: if worst.is_finite() {
            format!("best worst-case constraint slack {worst:.3e}")
        } else {
            "rate floors need more than the transmit budget".into()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    P3,
    P5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub step: Step,
    /// Lifted sum rate after the step.
    pub sum_rate: f64,
    /// Penalized objective after the step.
    pub objective: f64,
    pub penalty_w: f64,
    pub penalty_v: f64,
    pub violation_w: f64,
    pub violation_v: f64,
    /// `Σ Tr W_k − P_max` (mW).
    pub transmit_excess: f64,
    /// Amplification power minus `P_o` (mW).
    pub amplification_excess: f64,
    pub solver_residual: f64,
    pub solver_gap: f64,
    pub solver_iterations: usize,
    /// Whether the step was kept; steps that lower the objective are
    /// discarded.
    pub accepted: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub eta: f64,
    pub xi: f64,
    pub inner_iterations: usize,
    pub objective: f64,
    pub violation_w: f64,
    pub violation_v: f64,
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxOuterIterations,
    SolverFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub preset: ArchitecturePreset,
    pub initial_sum_rate: f64,
    pub initial_attempts: usize,
    pub records: Vec<IterationRecord>,
    pub outer: Vec<OuterRecord>,
    pub final_sum_rate: f64,
    pub status: RunStatus,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub beams: BeamformerSet,
    pub profile: RisProfile,
    pub sum_rate: f64,
    pub user_rates: Vec<f64>,
    /// Decoding order the rates are evaluated under: the order of the last
    /// subproblems, which may differ from a fresh sort when gains tie.
    pub order: Vec<usize>,
    pub feasibility: FeasibilityReport,
    pub status: RunStatus,
    /// Last lifted iterate.
    pub lifted: LiftedPoint,
    /// Rank-one violations of the last lifted iterate (normalized units).
    pub violation_w: f64,
    pub violation_v: f64,
    pub inner_iterations: usize,
    pub trace: IterationTrace,
}

impl RunOutput {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn ms(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }
}

fn record(
    sc: &Scenario,
    ev: &LiftedEval,
    (outer, inner, step): (usize, usize, Step),
    (eta, xi): (f64, f64),
    sol: &SdpSolution,
    clock: &Clock,
) -> IterationRecord {
    let penalty_w = ev.violation_w.iter().sum::<f64>();
    let penalty_v = ev.violation_v.iter().sum::<f64>();
    IterationRecord {
        outer,
        inner,
        step,
        sum_rate: ev.sum_rate,
        objective: ev.objective(eta, xi),
        penalty_w,
        penalty_v,
        violation_w: ev.max_violation_w(),
        violation_v: ev.max_violation_v(),
        transmit_excess: ev.transmit_power - sc.budget.p_max,
        amplification_excess: ev.amplification_power - sc.budget.p_amplify,
        solver_residual: sol.primal_residual,
        solver_gap: sol.duality_gap,
        solver_iterations: sol.iterations,
        accepted: true,
        wall_ms: clock.ms(),
    }
}

/// Runs the alternating optimization for one channel realization and
/// architecture.
///
/// Errors are reserved for invalid inputs and failed initialization; a
/// subproblem failure ends the run early and is reported in the status,
/// with the last accepted iterate returned.
pub fn run_algorithm(
    channels: &ChannelSet,
    budget: &PowerBudget,
    preset: ArchitecturePreset,
    beta_max: f64,
    user_side: &[Side],
    config: &AlgorithmConfig,
    solver: &dyn ConicSolver,
) -> Result<RunOutput, ModelError> {
    config.validate()?;
    let clock = Clock {
        start: Instant::now(),
        enabled: config.record_timing,
    };
    let limits = apply_preset(preset, beta_max);
    let sc = Scenario::new(channels.clone(), *budget, limits, user_side.to_vec())?;
    let init = initialize_feasible(channels, budget, &limits, user_side, config)?;
    let initial_sum_rate = crate::system::sum_rate(channels, &init.profile, &init.beams, budget);

    let mut point = sc.lift(&init.beams, &init.profile);
    let mut order = sc.order(&point);
    let (mut eta, mut xi) = (config.eta_init, config.xi_init);
    let mut records = Vec::new();
    let mut outers = Vec::new();
    let mut status = RunStatus::MaxOuterIterations;
    let mut inner_total = 0;
    let surface_active = limits.any_active() && limits.beta_max > 0.0;

    'outer: for outer in 0..config.max_outer_iter {
        let mut j_cur = sc.evaluate(&point, &order).objective(eta, xi);
        let mut inner_done = 0;
        for inner in 1..=config.max_inner_iter {
            inner_done = inner;
            inner_total += 1;
            let j_start = j_cur;
            let steps: &[Step] = if surface_active { &[Step::P3, Step::P5] } else { &[Step::P3] };
            for &step in steps {
                let solved = match step {
                    Step::P3 => solve_p3(&sc, &point, &order, eta, xi, solver).map(|(it, sol)| {
                        (LiftedPoint { w: it.w, v: point.v.clone() }, sol)
                    }),
                    Step::P5 => solve_p5(&sc, &point, &order, eta, xi, solver).map(|(it, sol)| {
                        (LiftedPoint { w: point.w.clone(), v: it.v }, sol)
                    }),
                };
                let (candidate, sol) = match solved {
                    Ok(c) => c,
                    Err(e) => {
                        status = RunStatus::SolverFailure(e.to_string());
                        break 'outer;
                    }
                };
                let ev = sc.evaluate(&candidate, &order);
                let mut rec = record(&sc, &ev, (outer, inner, step), (eta, xi), &sol, &clock);
                // The previous point is feasible for the subproblem, so a
                // decrease can only come from solver inaccuracy.
                rec.accepted = rec.objective >= j_cur;
                if rec.accepted {
                    point = candidate;
                    j_cur = rec.objective;
                }
                records.push(rec);
            }
            let change = ((j_cur - j_start) / j_start.abs().max(f64::MIN_POSITIVE)).abs();
            if change < config.delta {
                break;
            }
        }
        let ev = sc.evaluate(&point, &order);
        outers.push(OuterRecord {
            outer,
            eta,
            xi,
            inner_iterations: inner_done,
            objective: ev.objective(eta, xi),
            violation_w: ev.max_violation_w(),
            violation_v: ev.max_violation_v(),
            order: order.clone(),
        });
        order = sc.order(&point);
        if ev.max_violation_w() <= config.epsilon && ev.max_violation_v() <= config.epsilon {
            status = RunStatus::Converged;
            break;
        }
        eta *= config.mu;
        xi *= config.mu;
    }

    let order = outers.last().map_or(order, |o| o.order.clone());
    let last = sc.evaluate(&point, &order);
    let threshold = if status == RunStatus::Converged { config.epsilon } else { f64::INFINITY };
    let beams = BeamformerSet {
        precoders: extract_beamformers(&sc, &point.w, threshold)?,
    };
    let profile = if surface_active {
        extract_ris_profile(&sc, &point.v, threshold)?
    } else {
        RisProfile::dark(sc.num_elements(), limits.beta_max, user_side.to_vec())
    };
    let (beams, profile) = fit_to_budget(channels, budget, beams, profile);
    let rates: Vec<f64> = (0..sc.num_users())
        .map(|k| achievable_rate(sinr(channels, &profile, &beams, budget, k, &order)))
        .collect();
    let sum_rate = rates.iter().sum();
    let feasibility = check_feasibility(channels, &profile, &beams, budget, Some(&order))?;
    let trace = IterationTrace {
        preset,
        initial_sum_rate,
        initial_attempts: init.attempts,
        records,
        outer: outers,
        final_sum_rate: sum_rate,
        status: status.clone(),
        wall_ms: clock.ms(),
    };
    Ok(RunOutput {
        beams,
        profile,
        sum_rate,
        user_rates: rates,
        order,
        feasibility,
        status,
        lifted: point,
        violation_w: last.max_violation_w(),
        violation_v: last.max_violation_v(),
        inner_iterations: inner_total,
        trace,
    })
}
