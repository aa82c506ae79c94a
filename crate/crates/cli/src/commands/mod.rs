use std::str::FromStr;

use anyhow::{Context as _, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use selfpulse::exec::Exec;
use selfpulse::model::Realization;
use selfpulse::ode::OdeOptions;
use selfpulse::SystemParams;

use crate::output::Format;
use crate::plot::Figure;

pub mod cycle;
pub mod noise;
pub mod sweep;
pub mod system;

/// Overrides the integrator's default relative tolerance.
pub const TOL_ENV: &str = "SELFPULSE_DEFAULT_TOL";

#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub format: Format,
    pub gnuplot: bool,
    pub exec: Exec,
}

/// What a command produced: a JSON summary and named files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Value,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    /// Adds a figure as SVG, or as a gnuplot script when requested.
    pub fn add_figure(&mut self, stem: &str, fig: &Figure, ctx: &Context) {
        if ctx.gnuplot {
            let script = fig.to_gnuplot(&format!("{stem}.svg"));
            self.files.push((format!("{stem}.gp"), script.into_bytes()));
        } else {
            self.files
                .push((format!("{stem}.svg"), fig.to_svg().into_bytes()));
        }
    }
}

/// A command's resolved parameters. Missing keys take the `Default` value;
/// `resolve` fills anything that depends on the environment so the
/// manifest records the values actually used.
pub trait Command: Serialize + DeserializeOwned {
    const NAME: &'static str;

    fn resolve(&mut self) -> Result<()> {
        Ok(())
    }

    fn run(&self, ctx: &Context) -> Result<Outcome>;
}

pub struct Run {
    pub params: Value,
    pub outcome: Outcome,
}

fn execute<C: Command>(params: Map<String, Value>, ctx: &Context) -> Result<Run> {
    let mut p: C = serde_json::from_value(Value::Object(params))
        .with_context(|| format!("invalid parameters for '{}'", C::NAME))?;
    p.resolve()?;
    let outcome = p.run(ctx)?;
    Ok(Run {
        params: serde_json::to_value(&p)?,
        outcome,
    })
}

pub fn dispatch(name: &str, params: Map<String, Value>, ctx: &Context) -> Result<Run> {
    match name {
        system::FixedPointParams::NAME => execute::<system::FixedPointParams>(params, ctx),
        system::SimulateParams::NAME => execute::<system::SimulateParams>(params, ctx),
        system::HopfParams::NAME => execute::<system::HopfParams>(params, ctx),
        cycle::LimitCycleParams::NAME => execute::<cycle::LimitCycleParams>(params, ctx),
        cycle::Figure1Params::NAME => execute::<cycle::Figure1Params>(params, ctx),
        noise::SpectrumParams::NAME => execute::<noise::SpectrumParams>(params, ctx),
        noise::PhaseDiffusionParams::NAME => execute::<noise::PhaseDiffusionParams>(params, ctx),
        noise::Figure2Params::NAME => execute::<noise::Figure2Params>(params, ctx),
        sweep::SweepParams::NAME => execute::<sweep::SweepParams>(params, ctx),
        other => anyhow::bail!("unknown command '{other}'"),
    }
}

/// Default relative tolerance, honouring [`TOL_ENV`].
pub fn default_rel_tol() -> Result<f64> {
    match std::env::var(TOL_ENV) {
        Ok(s) => {
            let v: f64 = s
                .trim()
                .parse()
                .with_context(|| format!("{TOL_ENV}={s:?} is not a number"))?;
            anyhow::ensure!(v > 0.0 && v < 1.0, "{TOL_ENV} must lie in (0, 1), got {v}");
            Ok(v)
        }
        Err(_) => Ok(OdeOptions::default().rel_tol),
    }
}

pub fn ode_options(rel_tol: f64, abs_tol: f64) -> Result<OdeOptions> {
    let o = OdeOptions::with_tolerances(rel_tol, abs_tol);
    o.validate()?;
    Ok(o)
}

/// System parameters from the flat key set; a realization block, when
/// given, fixes χ. `dynamics_only` admits the lossless case κ = 0.
pub fn system_params(
    kappa: f64,
    gamma: f64,
    chi: Option<f64>,
    epsilon: f64,
    realization: Option<&Realization>,
    dynamics_only: bool,
) -> Result<SystemParams> {
    let chi = match (realization, chi) {
        (Some(r), explicit) => {
            let derived = r.drive_map(kappa)?.chi;
            if let Some(c) = explicit {
                anyhow::ensure!(
                    (c - derived).abs() <= 1e-12 * derived.abs().max(1.0),
                    "chi = {c} conflicts with the value {derived} derived from the realization"
                );
            }
            derived
        }
        (None, c) => c.unwrap_or(1.0),
    };
    let p = SystemParams {
        kappa,
        gamma,
        chi,
        epsilon,
        nbar: 0.0,
    };
    if dynamics_only {
        p.validate_dynamics()?;
    } else {
        p.validate()?;
    }
    Ok(p)
}

/// Two numbers written `a,b` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair<T>(pub [T; 2]);

impl<T: FromStr> FromStr for Pair<T> {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected 'a,b', got {s:?}"))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse {x:?} in {s:?}"))
        };
        Ok(Pair([parse(a)?, parse(b)?]))
    }
}

pub fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}
