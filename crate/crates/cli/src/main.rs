use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mfris_cli::{output, run_sweep, RawConfig};
use mfris_sdp::InteriorPointSolver;

#[derive(Parser)]
#[command(name = "mfris", version, about = "Sum-rate sweeps for surface-aided NOMA downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a config and print the resolved values.
    Validate { config: PathBuf },
    /// Run the built-in desk-scale sweep.
    Demo {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<i64>,
    /// Comma-separated preset names, e.g. mf_ris,star_ris.
    #[arg(long, value_delimiter = ',')]
    preset: Option<Vec<String>>,
}

impl Overrides {
    fn apply(&self, raw: &mut RawConfig) {
        if let Some(s) = self.seed {
            raw.seed = s;
        }
        if let Some(t) = self.trials {
            raw.trials = t;
        }
        if let Some(p) = &self.preset {
            raw.presets = p.clone();
        }
    }
}

fn execute(mut raw: RawConfig, overrides: &Overrides) -> Result<()> {
    overrides.apply(&mut raw);
    let cfg = raw.validate()?;
    let total = cfg.points.len() * cfg.trials * cfg.presets.len();
    eprintln!(
        "sweeping {} over {:?}: {} presets x {} trials ({} runs), K={} N={} M={}",
        cfg.sweep_variable,
        cfg.points.iter().map(|p| p.value).collect::<Vec<_>>(),
        cfg.presets.len(),
        cfg.trials,
        total,
        cfg.num_users(),
        cfg.antennas,
        cfg.elements,
    );
    let solver = InteriorPointSolver::default();
    let start = Instant::now();
    let mut done = 0;
    let result = run_sweep(&cfg, &solver, |t| {
        done += 1;
        match (&t.sum_rate, &t.error) {
            (Some(r), _) => eprintln!(
                "[{done}/{total}] {}={} {} trial {}: {:.4} bit/s/Hz{}",
                cfg.sweep_variable,
                t.sweep_value,
                t.preset.name(),
                t.trial,
                r,
                if t.converged { "" } else { " (not converged)" }
            ),
            (None, e) => eprintln!(
                "[{done}/{total}] {}={} {} trial {}: failed: {}",
                cfg.sweep_variable,
                t.sweep_value,
                t.preset.name(),
                t.trial,
                e.as_deref().unwrap_or("unknown")
            ),
        }
    })?;
    output::write_all(&overrides.out, &result, cfg.write_traces)
        .with_context(|| format!("writing results to {}", overrides.out.display()))?;
    for c in &result.cells {
        eprintln!(
            "{}={} {:<16} mean {:.4} ± {:.4} ({} failed)",
            cfg.sweep_variable,
            c.sweep_value,
            c.preset.name(),
            c.mean,
            c.stderr,
            c.failures
        );
    }
    eprintln!(
        "wrote {} in {:.1} s",
        overrides.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let raw = RawConfig::from_file(&config)?;
            execute(raw, &overrides)
        }
        Command::Validate { config } => {
            let raw = RawConfig::from_file(&config)?;
            let cfg = raw.validate()?;
            println!("{cfg:#?}");
            Ok(())
        }
        Command::Demo { overrides } => execute(RawConfig::demo(), &overrides),
    }
}
