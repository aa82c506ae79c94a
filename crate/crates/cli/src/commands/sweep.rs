use std::str::FromStr;

use anyhow::{bail, Context as _, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use selfpulse::center_manifold::{lyapunov_coefficient, radial_growth_rate};
use selfpulse::noise::phase_diffusion_constant;
use selfpulse::semiclassics::hopf_threshold;

use super::{Command, Context, Outcome};
use crate::output::Table;

/// One grid axis: `min:max:count`, or a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| self.min + step * k as f64)
            .collect()
    }
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {x:?} in grid {s:?}"))
        };
        let axis = match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                Axis {
                    min: v,
                    max: v,
                    count: 1,
                }
            }
            [a, b, n] => Axis {
                min: num(a)?,
                max: num(b)?,
                count: n
                    .trim()
                    .parse()
                    .with_context(|| format!("bad count {n:?} in grid {s:?}"))?,
            },
            _ => bail!("grid {s:?} is not 'min:max:count' or a single value"),
        };
        if axis.count == 0 {
            bail!("grid {s:?} is empty");
        }
        if !(axis.min.is_finite() && axis.max.is_finite()) || axis.max < axis.min {
            bail!("grid {s:?} needs finite min <= max");
        }
        if axis.count == 1 && axis.max != axis.min {
            bail!("grid {s:?} has one point but distinct end points");
        }
        Ok(axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Quantity {
    EpsilonH,
    OmegaH,
    BetaI0h,
    AlphaI0h,
    D,
    A,
    DPhi,
}

impl Quantity {
    fn column(self) -> &'static str {
        match self {
            Quantity::EpsilonH => "epsilon_h",
            Quantity::OmegaH => "omega_h",
            Quantity::BetaI0h => "beta_i0h",
            Quantity::AlphaI0h => "alpha_i0h",
            Quantity::D => "d",
            Quantity::A => "a",
            Quantity::DPhi => "d_phi",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SweepArgs {
    /// κ axis as `min:max:count` or a single value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<String>,
    /// γ axis as `min:max:count` or a single value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    /// Columns to compute, comma separated.
    #[arg(long, value_delimiter = ',', value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantities: Option<Vec<Quantity>>,
    /// Offset above threshold used for d_phi.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub kappa: String,
    pub gamma: String,
    pub quantities: Vec<Quantity>,
    pub delta_epsilon: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            kappa: "0.1:10:100".into(),
            gamma: "0".into(),
            quantities: vec![
                Quantity::EpsilonH,
                Quantity::OmegaH,
                Quantity::D,
                Quantity::A,
            ],
            delta_epsilon: 0.05,
        }
    }
}

fn evaluate(q: Quantity, kappa: f64, gamma: f64, delta_epsilon: f64) -> selfpulse::Result<f64> {
    Ok(match q {
        Quantity::EpsilonH => hopf_threshold(kappa, gamma)?.epsilon_h,
        Quantity::OmegaH => hopf_threshold(kappa, gamma)?.omega_h,
        Quantity::BetaI0h => hopf_threshold(kappa, gamma)?.beta_i0h,
        Quantity::AlphaI0h => hopf_threshold(kappa, gamma)?.alpha_i0h,
        Quantity::D => radial_growth_rate(kappa, gamma)?.d,
        Quantity::A => lyapunov_coefficient(kappa, gamma)?.a,
        Quantity::DPhi => phase_diffusion_constant(kappa, gamma, delta_epsilon)?.exact,
    })
}

impl Command for SweepParams {
    const NAME: &'static str = "sweep";

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        let ks = self.kappa.parse::<Axis>()?.values();
        let gs = self.gamma.parse::<Axis>()?.values();
        if self.quantities.is_empty() {
            bail!("no quantities requested");
        }
        let ng = gs.len();
        let rows = ctx
            .exec
            .try_map(ks.len() * ng, |n| -> selfpulse::Result<Vec<f64>> {
                let (k, g) = (ks[n / ng], gs[n % ng]);
                let mut row = vec![k, g];
                for q in &self.quantities {
                    row.push(evaluate(*q, k, g, self.delta_epsilon)?);
                }
                Ok(row)
            })?;
        let mut cols = vec!["kappa".to_string(), "gamma".to_string()];
        cols.extend(self.quantities.iter().map(|q| q.column().to_string()));
        let mut table = Table::with_columns(cols);
        for r in rows {
            table.push(r);
        }
        Ok(Outcome {
            summary: json!({ "rows": table.rows.len(), "columns": table.columns }),
            files: vec![table.file("sweep", ctx.format)?],
        })
    }
}
