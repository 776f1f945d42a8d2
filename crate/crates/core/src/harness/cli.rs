//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::presets::{all_presets, preset_by_name};
use super::raster::{read_snapshot_csv, render_raster, RasterChannel};
use super::scenario::{run_scenario, ScenarioOptions};
use super::sweep::{run_sweep, SweepSpec};
use super::HarnessError;
use crate::model::{SelectionMode, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "firmsim", version, about = "Spatial firm-demography simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Select {
    Argmax,
    Logit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Channel {
    Old,
    New,
    Total,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its output files.
    Run {
        /// Scenario config (JSON).
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        config: Option<PathBuf>,
        /// Model preset: 1-7 or text-lambda.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u32>,
        #[arg(long, default_value = "firmsim-out")]
        out: PathBuf,
        #[arg(long)]
        snapshot_every: Option<u32>,
        #[arg(long, value_enum)]
        select: Option<Select>,
        /// Existing-city relocation probability, in percent.
        #[arg(long)]
        lambda2: Option<f64>,
        /// Vacant-cell relocation probability, in percent.
        #[arg(long)]
        lambda3: Option<f64>,
        #[arg(long)]
        phi: Option<f64>,
    },
    /// Run a lambda2 x lambda3 sweep with replicates.
    Sweep {
        #[arg(long, default_value = "4")]
        model: String,
        /// Comma-separated percentages.
        #[arg(long, value_delimiter = ',', default_value = "7,11,15,19")]
        lambda2: Vec<f64>,
        /// Comma-separated percentages.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5")]
        lambda3: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        replicates: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        steps: Option<u32>,
        #[arg(long, default_value = "firmsim-sweep")]
        out: PathBuf,
    },
    /// Print the seven model presets as JSON.
    Presets,
    /// Render a snapshot CSV as a PGM image.
    Render {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value = "total")]
        channel: Channel,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<SimConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    SimConfig::from_json(&text).map_err(|e| HarnessError::Parse { path: path.clone(), message: e.to_string() })
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let out_err = |e: std::io::Error| HarnessError::io(&PathBuf::from("<stdout>"), e);
    match command {
        Command::Run { config, model, seed, steps, out, snapshot_every, select, lambda2, lambda3, phi } => {
            let mut cfg = match (config, model) {
                (Some(path), _) => load_config(&path)?,
                (None, Some(name)) => preset_by_name(&name)?.config,
                (None, None) => unreachable!("clap requires --config or --model"),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = steps {
                cfg.steps = t;
            }
            if let Some(m) = select {
                cfg.selection_mode = match m {
                    Select::Argmax => SelectionMode::ArgmaxImprove,
                    Select::Logit => SelectionMode::LogitSample,
                };
            }
            if lambda2.is_some() || lambda3.is_some() {
                let l2 = lambda2.map_or(cfg.lambda2, |p| p / 100.0);
                let l3 = lambda3.map_or(cfg.lambda3, |p| p / 100.0);
                cfg = cfg.with_relocation(l2, l3);
            }
            if let Some(p) = phi {
                cfg.phi = p;
            }
            let cfg = crate::model::validate_config(cfg)?;
            let output = run_scenario(cfg, &out, ScenarioOptions { snapshot_every })?;
            let s = &output.summary;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            writeln!(
                stdout,
                "wrote {} files to {}: N={} (old {}, new {}), L({})={}, growth R2={}",
                output.files.len(),
                output.dir.display(),
                s.final_n_total,
                s.final_n_old,
                s.final_n_new,
                s.metric_distance,
                fmt(s.final_l),
                fmt(s.growth_fit.as_ref().and_then(|g| g.fit.r_squared)),
            )
            .map_err(out_err)?;
        }
        Command::Sweep { model, lambda2, lambda3, replicates, seed, steps, out } => {
            let mut base = preset_by_name(&model)?.config;
            if let Some(t) = steps {
                base.steps = t;
            }
            let spec =
                SweepSpec { base, lambda2_values: lambda2, lambda3_values: lambda3, replicates, base_seed: seed };
            let result = run_sweep(&spec, &out)?;
            for m in &result.means {
                writeln!(stdout, "lambda2={}% lambda3={}% mean L={:.3}", m.lambda2_pct, m.lambda3_pct, m.mean_l)
                    .map_err(out_err)?;
            }
        }
        Command::Presets => {
            let json = serde_json::to_string_pretty(&all_presets()).expect("presets serialize");
            writeln!(stdout, "{json}").map_err(out_err)?;
        }
        Command::Render { snapshot, channel, out } => {
            let grid = read_snapshot_csv(&snapshot)?;
            let channel = match channel {
                Channel::Old => RasterChannel::Old,
                Channel::New => RasterChannel::New,
                Channel::Total => RasterChannel::Total,
            };
            render_raster(&grid, &out, channel)?;
        }
    }
    Ok(())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on usage errors, 2 on runtime failures.
pub fn cli_main<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_usage_error() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
