//! Experiment configuration: TOML ingestion, defaults and validation.
//!
//! Every field is optional; omitted ones take the reference scenario
//! values. Decibel quantities are converted to linear milliwatts or ratios
//! once, in [`RawConfig::validate`].

use std::fmt;
use std::path::Path;

use mfris_core::channel::{LosModel, PathLossModel, Position3D};
use mfris_core::optimizer::{AlgorithmConfig, ArchitecturePreset};
use mfris_core::system::PowerBudget;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "pMaxDbm")]
    PMaxDbm,
    #[serde(rename = "elementCount")]
    ElementCount,
    #[serde(rename = "risYCoord")]
    RisYCoord,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PMaxDbm => "pMaxDbm",
            SweepVariable::ElementCount => "elementCount",
            SweepVariable::RisYCoord => "risYCoord",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::PMaxDbm, Self::ElementCount, Self::RisYCoord]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How trial seeds relate across sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// Trial `t` uses the same channel seed at every sweep point.
    #[default]
    Paired,
    /// Seeds also depend on the sweep point index.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub bs: [f64; 3],
    pub ris: [f64; 3],
    pub circle_centers: [[f64; 3]; 2],
    pub radius: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            bs: [0.0, 0.0, 0.0],
            ris: [0.0, 50.0, 20.0],
            circle_centers: [[0.0, 45.0, 0.0], [0.0, 55.0, 0.0]],
            radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub users: i64,
    pub antennas: i64,
    pub elements: i64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            users: 6,
            antennas: 16,
            elements: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub p_max_dbm: f64,
    pub p_amplify_dbm: f64,
    pub beta_max_db: f64,
    pub noise_ris_dbm: f64,
    pub noise_user_dbm: f64,
    /// bit/s/Hz
    pub rate_min: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            p_max_dbm: 20.0,
            p_amplify_dbm: 10.0,
            beta_max_db: 22.0,
            noise_ris_dbm: -80.0,
            noise_user_dbm: -80.0,
            rate_min: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub k_factor_db: f64,
    pub los: LosModel,
    pub path_loss: PathLossModel,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            k_factor_db: 3.0,
            los: LosModel::Steering,
            path_loss: PathLossModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub record_timing: bool,
    pub seed_mode: SeedMode,
    pub write_traces: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            record_timing: true,
            seed_mode: SeedMode::Paired,
            write_traces: true,
        }
    }
}

/// Configuration as written in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub seed: u64,
    pub trials: i64,
    pub presets: Vec<String>,
    pub geometry: GeometrySection,
    pub system: SystemSection,
    pub budget: BudgetSection,
    pub channel: ChannelSection,
    pub algorithm: AlgorithmConfig,
    /// Without a sweep the base configuration is run as a single
    /// `pMaxDbm` point.
    pub sweep: Option<SweepSection>,
    pub output: OutputSection,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 10,
            presets: ArchitecturePreset::ALL.iter().map(|p| p.name().to_string()).collect(),
            geometry: GeometrySection::default(),
            system: SystemSection::default(),
            budget: BudgetSection::default(),
            channel: ChannelSection::default(),
            algorithm: AlgorithmConfig::default(),
            sweep: None,
            output: OutputSection::default(),
        }
    }
}

/// One point of a sweep with the swept quantity already applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    /// mW
    pub p_max: f64,
    pub elements: usize,
    pub ris: Position3D,
}

/// Validated configuration in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub presets: Vec<ArchitecturePreset>,
    pub bs: Position3D,
    pub ris: Position3D,
    pub circle_centers: [Position3D; 2],
    pub radius: f64,
    pub users_per_circle: [usize; 2],
    pub antennas: usize,
    pub elements: usize,
    pub budget: PowerBudget,
    pub beta_max: f64,
    pub k_factor_db: f64,
    pub los: LosModel,
    pub path_loss: PathLossModel,
    pub algorithm: AlgorithmConfig,
    pub sweep_variable: SweepVariable,
    pub points: Vec<SweepPoint>,
    pub record_timing: bool,
    pub seed_mode: SeedMode,
    pub write_traces: bool,
}

impl ExperimentConfig {
    pub fn num_users(&self) -> usize {
        self.users_per_circle[0] + self.users_per_circle[1]
    }
}

fn position(field: &str, p: [f64; 3]) -> Result<Position3D, ConfigError> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(Position3D::new(p[0], p[1], p[2]))
    } else {
        Err(invalid(field, "coordinates must be finite"))
    }
}

fn positive_count(field: &str, v: i64) -> Result<usize, ConfigError> {
    if v >= 1 {
        Ok(v as usize)
    } else {
        Err(invalid(field, format!("must be at least 1, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be finite, got {v}")))
    }
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<ExperimentConfig, ConfigError> {
        let trials = positive_count("trials", self.trials)?;
        if self.presets.is_empty() {
            return Err(invalid("presets", "at least one preset is required"));
        }
        let mut presets = Vec::with_capacity(self.presets.len());
        for (i, name) in self.presets.iter().enumerate() {
            let p = ArchitecturePreset::from_name(name)
                .ok_or_else(|| invalid(format!("presets[{i}]"), format!("unknown preset {name:?}")))?;
            if presets.contains(&p) {
                return Err(invalid(format!("presets[{i}]"), format!("duplicate preset {name:?}")));
            }
            presets.push(p);
        }

        let g = &self.geometry;
        let bs = position("geometry.bs", g.bs)?;
        let ris = position("geometry.ris", g.ris)?;
        let circle_centers = [
            position("geometry.circle_centers[0]", g.circle_centers[0])?,
            position("geometry.circle_centers[1]", g.circle_centers[1])?,
        ];
        if !(g.radius > 0.0 && g.radius.is_finite()) {
            return Err(invalid("geometry.radius", format!("must be positive, got {}", g.radius)));
        }

        let users = positive_count("system.users", self.system.users)?;
        let antennas = positive_count("system.antennas", self.system.antennas)?;
        let elements = positive_count("system.elements", self.system.elements)?;

        let b = &self.budget;
        for (field, v) in [
            ("budget.p_max_dbm", b.p_max_dbm),
            ("budget.p_amplify_dbm", b.p_amplify_dbm),
            ("budget.beta_max_db", b.beta_max_db),
            ("budget.noise_ris_dbm", b.noise_ris_dbm),
            ("budget.noise_user_dbm", b.noise_user_dbm),
        ] {
            finite(field, v)?;
        }
        if !(b.rate_min >= 0.0 && b.rate_min.is_finite()) {
            return Err(invalid("budget.rate_min", format!("must be non-negative, got {}", b.rate_min)));
        }
        let beta_max = db_to_linear(b.beta_max_db);
        if beta_max < 1.0 {
            return Err(invalid("budget.beta_max_db", format!("must be at least 0 dB, got {}", b.beta_max_db)));
        }
        let budget = PowerBudget {
            p_max: db_to_linear(b.p_max_dbm),
            p_amplify: db_to_linear(b.p_amplify_dbm),
            noise_ris: db_to_linear(b.noise_ris_dbm),
            noise_user: db_to_linear(b.noise_user_dbm),
            rate_min: b.rate_min,
        };

        finite("channel.k_factor_db", self.channel.k_factor_db)?;
        self.channel
            .path_loss
            .validate()
            .map_err(|e| invalid("channel.path_loss", e))?;
        self.algorithm.validate().map_err(|e| invalid("algorithm", e))?;

        let (sweep_variable, values) = match &self.sweep {
            Some(s) => (s.variable, s.values.clone()),
            None => (SweepVariable::PMaxDbm, vec![b.p_max_dbm]),
        };
        if values.is_empty() {
            return Err(invalid("sweep.values", "must not be empty"));
        }
        for (i, v) in values.iter().enumerate() {
            finite(&format!("sweep.values[{i}]"), *v)?;
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("sweep.values", "must be strictly ascending"));
        }
        let mut points = Vec::with_capacity(values.len());
        for (i, &value) in values.iter().enumerate() {
            let mut p = SweepPoint {
                value,
                p_max: budget.p_max,
                elements,
                ris,
            };
            match sweep_variable {
                SweepVariable::PMaxDbm => p.p_max = db_to_linear(value),
                SweepVariable::ElementCount => {
                    if value < 1.0 || value.fract() != 0.0 {
                        return Err(invalid(
                            format!("sweep.values[{i}]"),
                            format!("element count must be a positive integer, got {value}"),
                        ));
                    }
                    p.elements = value as usize;
                }
                SweepVariable::RisYCoord => p.ris = Position3D::new(ris.x, value, ris.z),
            }
            points.push(p);
        }

        Ok(ExperimentConfig {
            seed: self.seed,
            trials,
            presets,
            bs,
            ris,
            circle_centers,
            radius: g.radius,
            users_per_circle: [users.div_ceil(2), users / 2],
            antennas,
            elements,
            budget,
            beta_max,
            k_factor_db: self.channel.k_factor_db,
            los: self.channel.los,
            path_loss: self.channel.path_loss,
            algorithm: self.algorithm,
            sweep_variable,
            points,
            record_timing: self.output.record_timing,
            seed_mode: self.output.seed_mode,
            write_traces: self.output.write_traces,
        })
    }

    /// Small built-in configuration that finishes in about a minute.
    pub fn demo() -> Self {
        Self {
            system: SystemSection {
                users: 4,
                antennas: 4,
                elements: 8,
            },
            trials: 10,
            sweep: Some(SweepSection {
                variable: SweepVariable::PMaxDbm,
                values: vec![0.0, 10.0, 20.0],
            }),
            output: OutputSection {
                record_timing: false,
                ..OutputSection::default()
            },
            ..Self::default()
        }
    }
}
