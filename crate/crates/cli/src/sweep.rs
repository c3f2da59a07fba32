//! Monte-Carlo sweeps over one scenario variable.

use std::time::Instant;

use mfris_core::channel::{generate_channels, place_users, ChannelSet, RicianConfig};
use mfris_core::optimizer::{run_algorithm, AlgorithmConfig, ArchitecturePreset, IterationTrace};
use mfris_core::system::Side;
use mfris_core::ModelError;
use mfris_sdp::ConicSolver;

use crate::config::{ExperimentConfig, SeedMode, SweepPoint, SweepVariable};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("every run at {variable} = {value} failed; first error: {first}")]
    AllFailed {
        variable: SweepVariable,
        value: f64,
        first: String,
    },
    #[error("building scenario at {variable} = {value}: {source}")]
    Scenario {
        variable: SweepVariable,
        value: f64,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub sweep_value: f64,
    pub preset: ArchitecturePreset,
    pub trial: usize,
    /// `None` when the run failed.
    pub sum_rate: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
    pub trace: Option<IterationTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub sweep_value: f64,
    pub preset: ArchitecturePreset,
    pub mean: f64,
    pub stderr: f64,
    pub rates: Vec<f64>,
    pub failures: usize,
    pub converged: usize,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub trials: Vec<TrialResult>,
    pub cells: Vec<CellSummary>,
}

impl SweepResult {
    pub fn cell(&self, sweep_value: f64, preset: ArchitecturePreset) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.sweep_value == sweep_value && c.preset == preset)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed for a trial; identical for every preset at the same
/// `(point, trial)`.
pub fn trial_seed(base: u64, mode: SeedMode, point: usize, trial: usize) -> u64 {
    let point = match mode {
        SeedMode::Paired => 0,
        SeedMode::PerPoint => point as u64 + 1,
    };
    splitmix64(splitmix64(splitmix64(base) ^ point) ^ trial as u64)
}

/// Channels and user sides for one `(point, trial)`.
pub fn realization(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    seed: u64,
) -> Result<(ChannelSet, Vec<Side>), ModelError> {
    let geometry = place_users(cfg.bs, point.ris, cfg.circle_centers, cfg.radius, cfg.users_per_circle, seed)?;
    let channels = generate_channels(
        &geometry,
        &cfg.path_loss,
        &RicianConfig {
            k_factor_db: cfg.k_factor_db,
            seed,
        },
        cfg.los,
        cfg.antennas,
        point.elements,
    )?;
    let sides = geometry.user_circle.iter().map(|c| Side::from_circle(*c)).collect();
    Ok((channels, sides))
}

/// Mean and standard error of the successful runs of each
/// `(sweep value, preset)` cell, in first-seen order.
pub fn summarize(trials: &[TrialResult]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    let mut iters: Vec<usize> = Vec::new();
    for t in trials {
        let idx = match cells
            .iter()
            .position(|c| c.sweep_value == t.sweep_value && c.preset == t.preset)
        {
            Some(i) => i,
            None => {
                cells.push(CellSummary {
                    sweep_value: t.sweep_value,
                    preset: t.preset,
                    mean: f64::NAN,
                    stderr: f64::NAN,
                    rates: Vec::new(),
                    failures: 0,
                    converged: 0,
                    mean_iterations: f64::NAN,
                });
                iters.push(0);
                cells.len() - 1
            }
        };
        let c = &mut cells[idx];
        match t.sum_rate {
            Some(r) => {
                c.rates.push(r);
                iters[idx] += t.iterations;
            }
            None => c.failures += 1,
        }
        if t.converged {
            c.converged += 1;
        }
    }
    for (c, total_iters) in cells.iter_mut().zip(iters) {
        let n = c.rates.len();
        if n == 0 {
            continue;
        }
        let mean = c.rates.iter().sum::<f64>() / n as f64;
        c.mean = mean;
        c.stderr = if n > 1 {
            let var = c.rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        c.mean_iterations = total_iters as f64 / n as f64;
    }
    cells
}

/// Runs every `(point, trial, preset)` combination. Individual failures are
/// recorded; the sweep stops only when every run at a point fails.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    solver: &dyn ConicSolver,
    mut progress: impl FnMut(&TrialResult),
) -> Result<SweepResult, SweepError> {
    let mut trials = Vec::new();
    for (pi, point) in cfg.points.iter().enumerate() {
        let mut first_error = None;
        let mut successes = 0;
        for trial in 0..cfg.trials {
            let seed = trial_seed(cfg.seed, cfg.seed_mode, pi, trial);
            let (channels, sides) = realization(cfg, point, seed).map_err(|source| SweepError::Scenario {
                variable: cfg.sweep_variable,
                value: point.value,
                source,
            })?;
            let budget = mfris_core::system::PowerBudget {
                p_max: point.p_max,
                ..cfg.budget
            };
            let algorithm = AlgorithmConfig {
                seed,
                record_timing: cfg.record_timing,
                ..cfg.algorithm
            };
            for &preset in &cfg.presets {
                let start = Instant::now();
                let out = run_algorithm(&channels, &budget, preset, cfg.beta_max, &sides, &algorithm, solver);
                let wall_ms = if cfg.record_timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                let result = match out {
                    Ok(out) => {
                        successes += 1;
                        TrialResult {
                            sweep_value: point.value,
                            preset,
                            trial,
                            sum_rate: Some(out.sum_rate),
                            converged: out.converged(),
                            iterations: out.inner_iterations,
                            wall_ms,
                            error: None,
                            trace: Some(out.trace),
                        }
                    }
                    Err(e) => {
                        first_error.get_or_insert_with(|| e.to_string());
                        TrialResult {
                            sweep_value: point.value,
                            preset,
                            trial,
                            sum_rate: None,
                            converged: false,
                            iterations: 0,
                            wall_ms,
                            error: Some(e.to_string()),
                            trace: None,
                        }
                    }
                };
                progress(&result);
                trials.push(result);
            }
        }
        if successes == 0 {
            return Err(SweepError::AllFailed {
                variable: cfg.sweep_variable,
                value: point.value,
                first: first_error.unwrap_or_default(),
            });
        }
    }
    let cells = summarize(&trials);
    Ok(SweepResult {
        variable: cfg.sweep_variable,
        trials,
        cells,
    })
}
