use anyhow::{bail, ensure, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use selfpulse::center_manifold::{
    cm_report, compare_with_integration, normal_form_transform, CycleComparison, OrbitRun,
};
use selfpulse::io::TRAJECTORY_HEADER;
use selfpulse::semiclassics::hopf_threshold;

use super::{default_rel_tol, ode_options, to_json, Command, Context, Outcome, Pair};
use crate::output::Table;
use crate::plot::{DataRef, Figure, Marker, Series, Style, PALETTE};

/// Mean of `| |(u,v)| − A | / A` over the post-transient samples.
pub fn radial_gap(c: &CycleComparison, transient_fraction: f64) -> Result<f64> {
    let p = &c.prediction;
    let nf = normal_form_transform(p.kappa, p.gamma)?;
    let tr = &c.trajectory;
    let cut = transient_fraction * tr.times[tr.len() - 1];
    let (mut sum, mut n) = (0.0, 0usize);
    for (t, y) in tr.times.iter().zip(&tr.states) {
        if *t >= cut {
            let (u, v) = nf.to_normal(y[0], y[2]);
            sum += (u.hypot(v) - p.amplitude).abs();
            n += 1;
        }
    }
    ensure!(n > 0, "no samples after the transient");
    Ok(sum / (n as f64 * p.amplitude))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct LimitCycleArgs {
    /// Optical decay rate κ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Mechanical decay rate γ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Distance above threshold as a fraction of ε_h.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_fraction: Option<f64>,
    /// Absolute distance above threshold; overrides --delta-fraction.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_epsilon: Option<f64>,
    /// Run length in radial growth times `1/(dΔε)`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_times: Option<f64>,
    /// Output samples per period of the cycle.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_period: Option<usize>,
    /// Fraction of the record discarded as transient.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_fraction: Option<f64>,
    /// Relative integrator tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// Absolute integrator tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitCycleParams {
    pub kappa: f64,
    pub gamma: f64,
    pub delta_fraction: f64,
    pub delta_epsilon: Option<f64>,
    pub growth_times: f64,
    pub samples_per_period: usize,
    pub transient_fraction: f64,
    pub rel_tol: Option<f64>,
    pub abs_tol: f64,
}

impl Default for LimitCycleParams {
    fn default() -> Self {
        let run = OrbitRun::default();
        LimitCycleParams {
            kappa: 1.0,
            gamma: 0.1,
            delta_fraction: 0.01,
            delta_epsilon: None,
            growth_times: run.growth_times,
            samples_per_period: run.samples_per_period,
            transient_fraction: run.transient_fraction,
            rel_tol: None,
            abs_tol: 1e-12,
        }
    }
}

impl Command for LimitCycleParams {
    const NAME: &'static str = "limit-cycle";

    fn resolve(&mut self) -> Result<()> {
        if self.rel_tol.is_none() {
            self.rel_tol = Some(default_rel_tol()?);
        }
        if self.delta_epsilon.is_none() {
            let eh = hopf_threshold(self.kappa, self.gamma)?.epsilon_h;
            self.delta_epsilon = Some(self.delta_fraction * eh);
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        let de = self.delta_epsilon.unwrap_or_default();
        let report = cm_report(self.kappa, self.gamma)?;
        let run = OrbitRun {
            growth_times: self.growth_times,
            samples_per_period: self.samples_per_period,
            transient_fraction: self.transient_fraction,
        };
        let opts = ode_options(self.rel_tol.unwrap_or(1e-9), self.abs_tol)?;
        let c = compare_with_integration(self.kappa, self.gamma, de, &run, &opts)?;
        let gap = radial_gap(&c, self.transient_fraction)?;

        let mut traj = Table::new(TRAJECTORY_HEADER);
        for (t, y) in c.trajectory.times.iter().zip(&c.trajectory.states) {
            traj.push(vec![*t, y[0], y[1], y[2], y[3]]);
        }
        let mut pred = Table::new("theta,beta_r,beta_i,alpha_r,alpha_i");
        for k in 0..=200 {
            let th = std::f64::consts::TAU * k as f64 / 200.0;
            let y = c.prediction.orbit(th);
            pred.push(vec![th, y[0], y[1], y[2], y[3]]);
        }
        let summary = json!({
            "cm_report": to_json(&report)?,
            "prediction": to_json(&c.prediction)?,
            "measurement": to_json(&c.measurement)?,
            "normal_form": to_json(&c.normal_form)?,
            "amplitude_error": c.amplitude_error,
            "period_error": c.period_error,
            "radial_gap": gap,
        });
        Ok(Outcome {
            summary,
            files: vec![
                traj.file("trajectory", ctx.format)?,
                pred.file("prediction", ctx.format)?,
            ],
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Figure1Args {
    /// A `kappa,gamma` panel; repeat for several (default: the four
    /// reference pairs).
    #[arg(long = "pair", value_name = "KAPPA,GAMMA")]
    #[serde(rename = "pairs", skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<Pair<f64>>>,
    /// Distances above threshold as fractions of ε_h.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_fractions: Option<Vec<f64>>,
    /// Integration length in units of the radial growth time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_times: Option<f64>,
    /// Output samples per period of the cycle.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_period: Option<usize>,
    /// Fraction of the record discarded as transient.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_fraction: Option<f64>,
    /// Relative integrator tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// Absolute integrator tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

pub const FIGURE1_PAIRS: [[f64; 2]; 4] = [[1.0, 0.0], [1.0, 0.1], [0.5, 0.0], [0.5, 0.5]];
/// Not given with the figure; spans near-threshold to clearly separated
/// cycles.
pub const FIGURE1_DELTA_FRACTIONS: [f64; 3] = [0.05, 0.10, 0.20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Params {
    pub pairs: Vec<Pair<f64>>,
    pub delta_fractions: Vec<f64>,
    pub growth_times: f64,
    pub samples_per_period: usize,
    pub transient_fraction: f64,
    pub rel_tol: Option<f64>,
    pub abs_tol: f64,
}

impl Default for Figure1Params {
    fn default() -> Self {
        let run = OrbitRun::default();
        Figure1Params {
            pairs: FIGURE1_PAIRS.iter().map(|p| Pair(*p)).collect(),
            delta_fractions: FIGURE1_DELTA_FRACTIONS.to_vec(),
            growth_times: run.growth_times,
            samples_per_period: run.samples_per_period,
            transient_fraction: run.transient_fraction,
            rel_tol: None,
            abs_tol: 1e-12,
        }
    }
}

struct Curve {
    delta_epsilon: f64,
    comparison: Option<CycleComparison>,
}

impl Command for Figure1Params {
    const NAME: &'static str = "figure1";

    fn resolve(&mut self) -> Result<()> {
        if self.rel_tol.is_none() {
            self.rel_tol = Some(default_rel_tol()?);
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        if self.pairs.is_empty() {
            bail!("no (kappa, gamma) pairs given");
        }
        if self.delta_fractions.is_empty() {
            bail!("the delta-epsilon list is empty");
        }
        if let Some(f) = self
            .delta_fractions
            .iter()
            .find(|f| !(**f >= 0.0) || !f.is_finite())
        {
            bail!("delta fractions must be >= 0, got {f}");
        }
        let run = OrbitRun {
            growth_times: self.growth_times,
            samples_per_period: self.samples_per_period,
            transient_fraction: self.transient_fraction,
        };
        let opts = ode_options(self.rel_tol.unwrap_or(1e-9), self.abs_tol)?;
        let hopf = self
            .pairs
            .iter()
            .map(|p| hopf_threshold(p.0[0], p.0[1]))
            .collect::<selfpulse::Result<Vec<_>>>()?;
        let nd = self.delta_fractions.len();
        let curves = ctx
            .exec
            .try_map(self.pairs.len() * nd, |k| -> selfpulse::Result<Curve> {
                let (i, j) = (k / nd, k % nd);
                let [kappa, gamma] = self.pairs[i].0;
                let delta_epsilon = self.delta_fractions[j] * hopf[i].epsilon_h;
                let comparison = if delta_epsilon > 0.0 {
                    Some(compare_with_integration(
                        kappa,
                        gamma,
                        delta_epsilon,
                        &run,
                        &opts,
                    )?)
                } else {
                    None
                };
                Ok(Curve {
                    delta_epsilon,
                    comparison,
                })
            })?;

        let mut out = Outcome::default();
        let mut panels = Vec::new();
        for (i, pair) in self.pairs.iter().enumerate() {
            let [kappa, gamma] = pair.0;
            let mut fig = Figure {
                title: format!("κ = {kappa}, γ = {gamma}"),
                x_label: "β_r".into(),
                y_label: "α_r".into(),
                ..Default::default()
            };
            let mut rows = Vec::new();
            for (j, frac) in self.delta_fractions.iter().enumerate() {
                let curve = &curves[i * nd + j];
                let color = PALETTE[j % PALETTE.len()];
                let stem = format!("fig1_p{i}_d{j}");
                let Some(c) = &curve.comparison else {
                    // at threshold the prediction collapses onto the fixed point
                    fig.markers.push(Marker {
                        at: [0.0, 0.0],
                        label: "Δε = 0".into(),
                        color,
                    });
                    let mut t = Table::new("theta,beta_r,alpha_r");
                    t.push(vec![0.0, 0.0, 0.0]);
                    out.files
                        .push(t.file(&format!("{stem}_prediction"), ctx.format)?);
                    rows.push(json!({
                        "delta_fraction": frac,
                        "delta_epsilon": 0.0,
                        "amplitude": 0.0,
                        "radial_gap": null,
                    }));
                    continue;
                };
                let tr = &c.trajectory;
                let cut = self.transient_fraction * tr.times[tr.len() - 1];
                let mut num = Table::new("t,beta_r,alpha_r");
                for (t, y) in tr.times.iter().zip(&tr.states).filter(|(t, _)| **t >= cut) {
                    num.push(vec![*t, y[0], y[2]]);
                }
                let mut pred = Table::new("theta,beta_r,alpha_r");
                for k in 0..=200 {
                    let th = std::f64::consts::TAU * k as f64 / 200.0;
                    let y = c.prediction.orbit(th);
                    pred.push(vec![th, y[0], y[2]]);
                }
                let label = format!("Δε = {frac}·ε_h");
                fig.series.push(Series {
                    label: format!("{label} numerical"),
                    style: Style::Solid,
                    color,
                    points: num.rows.iter().map(|r| [r[1], r[2]]).collect(),
                    source: Some(DataRef {
                        file: format!("{stem}_numerical.csv"),
                        x: 2,
                        y: 3,
                    }),
                });
                fig.series.push(Series {
                    label: format!("{label} prediction"),
                    style: Style::Dashed,
                    color,
                    points: pred.rows.iter().map(|r| [r[1], r[2]]).collect(),
                    source: Some(DataRef {
                        file: format!("{stem}_prediction.csv"),
                        x: 2,
                        y: 3,
                    }),
                });
                out.files
                    .push(num.file(&format!("{stem}_numerical"), ctx.format)?);
                out.files
                    .push(pred.file(&format!("{stem}_prediction"), ctx.format)?);
                rows.push(json!({
                    "delta_fraction": frac,
                    "delta_epsilon": curve.delta_epsilon,
                    "amplitude": c.prediction.amplitude,
                    "radial_gap": radial_gap(c, self.transient_fraction)?,
                    "amplitude_error": c.amplitude_error,
                    "period_error": c.period_error,
                }));
            }
            out.add_figure(&format!("fig1_p{i}"), &fig, ctx);
            panels.push(json!({
                "kappa": kappa,
                "gamma": gamma,
                "epsilon_h": hopf[i].epsilon_h,
                "curves": rows,
            }));
        }
        out.summary = json!({ "panels": panels });
        Ok(out)
    }
}
