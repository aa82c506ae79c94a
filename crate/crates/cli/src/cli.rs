use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use selfpulse::exec::{with_jobs, Exec};

use crate::commands::{self, Context};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::Format;

pub const DEFAULT_OUT: &str = "selfpulse-out";

/// Analysis toolkit for the parametric self-pulsing opto-mechanical oscillator.
#[derive(Debug, Parser)]
#[command(name = "selfpulse", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Omit to replay the manifest given with --config.
    #[command(subcommand)]
    pub command: Option<CommandArgs>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON config file or a run manifest to replay.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses all cores, 1 runs sequentially).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Emit gnuplot scripts instead of SVG for figures.
    #[arg(long, global = true)]
    pub gnuplot: bool,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Fixed point, Jacobian spectrum and classification.
    FixedPoint(commands::system::FixedPointArgs),
    /// Integrate the semiclassical equations.
    Simulate(commands::system::SimulateArgs),
    /// Hopf threshold and frequency, closed form and bisection.
    Hopf(commands::system::HopfArgs),
    /// Center-manifold prediction of the limit cycle against integration.
    LimitCycle(commands::cycle::LimitCycleArgs),
    /// Linearized noise spectrum below threshold.
    Spectrum(commands::noise::SpectrumArgs),
    /// Monte-Carlo phase diffusion on the limit cycle.
    PhaseDiffusion(commands::noise::PhaseDiffusionArgs),
    /// Predicted and integrated limit cycles per (κ, γ) panel.
    Figure1(commands::cycle::Figure1Args),
    /// |S_33| curves for several drives below threshold.
    Figure2(commands::noise::Figure2Args),
    /// Tabulate derived quantities over a (κ, γ) grid.
    Sweep(commands::sweep::SweepArgs),
}

impl CommandArgs {
    pub fn name(&self) -> &'static str {
        use commands::Command;
        match self {
            CommandArgs::FixedPoint(_) => commands::system::FixedPointParams::NAME,
            CommandArgs::Simulate(_) => commands::system::SimulateParams::NAME,
            CommandArgs::Hopf(_) => commands::system::HopfParams::NAME,
            CommandArgs::LimitCycle(_) => commands::cycle::LimitCycleParams::NAME,
            CommandArgs::Spectrum(_) => commands::noise::SpectrumParams::NAME,
            CommandArgs::PhaseDiffusion(_) => commands::noise::PhaseDiffusionParams::NAME,
            CommandArgs::Figure1(_) => commands::cycle::Figure1Params::NAME,
            CommandArgs::Figure2(_) => commands::noise::Figure2Params::NAME,
            CommandArgs::Sweep(_) => commands::sweep::SweepParams::NAME,
        }
    }

    /// Flags given on the command line, as a JSON object.
    pub fn overrides(&self) -> Result<Map<String, Value>> {
        let v = match self {
            CommandArgs::FixedPoint(a) => serde_json::to_value(a),
            CommandArgs::Simulate(a) => serde_json::to_value(a),
            CommandArgs::Hopf(a) => serde_json::to_value(a),
            CommandArgs::LimitCycle(a) => serde_json::to_value(a),
            CommandArgs::Spectrum(a) => serde_json::to_value(a),
            CommandArgs::PhaseDiffusion(a) => serde_json::to_value(a),
            CommandArgs::Figure1(a) => serde_json::to_value(a),
            CommandArgs::Figure2(a) => serde_json::to_value(a),
            CommandArgs::Sweep(a) => serde_json::to_value(a),
        }?;
        match v {
            Value::Object(m) => Ok(m),
            _ => unreachable!("argument structs serialise to objects"),
        }
    }
}

/// Settings read from `--config`: either a plain JSON object mixing global
/// keys with command parameters, or a run manifest.
#[derive(Debug, Default)]
struct ConfigFile {
    command: Option<String>,
    params: Map<String, Value>,
    seed: Option<u64>,
    jobs: Option<usize>,
    format: Option<Format>,
    out: Option<PathBuf>,
    gnuplot: Option<bool>,
}

const GLOBAL_KEYS: [&str; 5] = ["seed", "jobs", "format", "out", "gnuplot"];

impl ConfigFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(mut map) = value else {
            bail!("config {} must be a JSON object", path.display());
        };
        if map.contains_key("command") {
            let m: RunManifest = serde_json::from_value(Value::Object(map))
                .with_context(|| format!("parsing run manifest {}", path.display()))?;
            let Value::Object(params) = m.params else {
                bail!("manifest params must be an object");
            };
            return Ok(ConfigFile {
                command: Some(m.command),
                params,
                seed: Some(m.seed),
                jobs: Some(m.jobs),
                format: Some(m.format),
                out: None,
                gnuplot: Some(m.gnuplot),
            });
        }
        let mut cfg = ConfigFile::default();
        for key in GLOBAL_KEYS {
            let Some(v) = map.remove(key) else { continue };
            let bad = || format!("invalid value for '{key}' in config");
            match key {
                "seed" => cfg.seed = Some(serde_json::from_value(v).with_context(bad)?),
                "jobs" => cfg.jobs = Some(serde_json::from_value(v).with_context(bad)?),
                "format" => cfg.format = Some(serde_json::from_value(v).with_context(bad)?),
                "out" => cfg.out = Some(serde_json::from_value(v).with_context(bad)?),
                _ => cfg.gnuplot = Some(serde_json::from_value(v).with_context(bad)?),
            }
        }
        cfg.params = map;
        Ok(cfg)
    }
}

/// Runs a parsed command line and returns the JSON summary.
pub fn execute(cli: Cli) -> Result<String> {
    let start = Instant::now();
    let g = cli.global;
    let cfg = match &g.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let (name, overrides) = match (&cli.command, &cfg.command) {
        (Some(c), Some(m)) if c.name() != m => {
            bail!(
                "manifest is for '{m}' but the command line asks for '{}'",
                c.name()
            )
        }
        (Some(c), _) => (c.name().to_string(), c.overrides()?),
        (None, Some(m)) => (m.clone(), Map::new()),
        (None, None) => {
            bail!("no command given (pass a subcommand, or a run manifest via --config)")
        }
    };
    let mut params = cfg.params;
    params.extend(overrides);

    let seed = g.seed.or(cfg.seed).unwrap_or(0);
    let jobs = g.jobs.or(cfg.jobs).unwrap_or(0);
    let format = g.format.or(cfg.format).unwrap_or_default();
    let gnuplot = g.gnuplot || cfg.gnuplot.unwrap_or(false);
    let out = g
        .out
        .or(cfg.out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    if gnuplot && format != Format::Csv {
        bail!("--gnuplot reads CSV data; use --format csv");
    }
    let ctx = Context {
        seed,
        format,
        gnuplot,
        exec: if jobs == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
    };
    let run = with_jobs(jobs, || commands::dispatch(&name, params, &ctx))?;

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut summary = serde_json::to_string_pretty(&run.outcome.summary)?;
    summary.push('\n');
    let mut files = run.outcome.files;
    files.push(("summary.json".to_string(), summary.clone().into_bytes()));
    for (file, bytes) in &files {
        let path = out.join(file);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let manifest = RunManifest::new(
        &name,
        run.params,
        seed,
        jobs,
        format,
        gnuplot,
        &files,
        start.elapsed(),
    );
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(summary.trim_end().to_string())
}
