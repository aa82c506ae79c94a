use anyhow::{bail, ensure, Result};
use clap::Args;
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use selfpulse::model::Realization;
use selfpulse::noise::{
    phase_diffusion_constant, spectral_peak, spectrum_scan, stationary_covariance, LinearNoiseModel,
};
use selfpulse::semiclassics::hopf_threshold;
use selfpulse::stochastic::{
    simulate_limit_cycle_noise, PhaseMode, PhaseNoiseOptions, SdeConfig, MIN_MEMBERS,
};

use super::{system_params, to_json, Command, Context, Outcome, Pair};
use crate::output::{Format, Table};
use crate::plot::{DataRef, Figure, Marker, Series, Style, PALETTE};
use crate::NumericalFailure;

fn rows(m: &Matrix4<f64>) -> Vec<Vec<f64>> {
    (0..4)
        .map(|i| (0..4).map(|j| m[(i, j)]).collect())
        .collect()
}

fn peak_json(r: Result<selfpulse::noise::SpectralPeak, selfpulse::Error>) -> Result<Value> {
    Ok(match r {
        Ok(p) => to_json(&p)?,
        Err(e) => json!({ "error": e.to_string() }),
    })
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SpectrumArgs {
    /// Optical decay rate κ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Mechanical decay rate γ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Coupling χ; defaults to 1, i.e. rates already in units of χ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    /// Mechanical drive ε.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Lower end of the ω grid.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    /// Upper end of the ω grid.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    /// Number of ω grid points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Extra matrix element `i,j` (1-based) to export; repeatable.
    #[arg(long = "pair", value_name = "I,J")]
    #[serde(rename = "pairs", skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<Pair<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub kappa: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<Realization>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    pub pairs: Vec<Pair<usize>>,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            kappa: 1.0,
            gamma: 0.1,
            chi: None,
            epsilon: 0.13,
            realization: None,
            omega_min: -2.0,
            omega_max: 2.0,
            points: 4001,
            pairs: Vec::new(),
        }
    }
}

impl Command for SpectrumParams {
    const NAME: &'static str = "spectrum";

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        let p = system_params(
            self.kappa,
            self.gamma,
            self.chi,
            self.epsilon,
            self.realization.as_ref(),
            false,
        )?;
        let extra: Vec<(usize, usize)> = self
            .pairs
            .iter()
            .map(|Pair([i, j])| {
                ensure!(
                    (1..=4).contains(i) && (1..=4).contains(j),
                    "pair indices are 1..4, got {i},{j}"
                );
                Ok((i - 1, j - 1))
            })
            .collect::<Result<_>>()?;
        let model = LinearNoiseModel::new(&p)?;
        let spec = spectrum_scan(
            &model,
            self.omega_min,
            self.omega_max,
            self.points,
            ctx.exec,
        )?;
        let mut header = selfpulse::io::SPECTRUM_HEADER.to_string();
        for (i, j) in &extra {
            let tag = format!("S{}{}", i + 1, j + 1);
            header.push_str(&format!(",{tag}_re,{tag}_im,{tag}_abs"));
        }
        let mut table = Table::new(&header);
        for (w, s) in spec.omega.iter().zip(&spec.s) {
            let mut row = vec![*w];
            for &(i, j) in std::iter::once(&(2, 2)).chain(&extra) {
                let z = s[(i, j)];
                row.extend([z.re, z.im, z.norm()]);
            }
            table.push(row);
        }
        let summary = json!({
            "epsilon": p.epsilon,
            "epsilon_h": model.epsilon_h,
            "peak": peak_json(spectral_peak(&spec, 2, 2))?,
            "covariance": rows(&stationary_covariance(&model)?),
        });
        Ok(Outcome {
            summary,
            files: vec![table.file("spectrum", ctx.format)?],
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Figure2Args {
    /// Optical decay rate κ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Mechanical decay rate γ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Drives to plot, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// Lower end of the ω grid.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    /// Upper end of the ω grid.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    /// Number of ω grid points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure2Params {
    pub kappa: f64,
    pub gamma: f64,
    pub epsilons: Vec<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for Figure2Params {
    fn default() -> Self {
        Figure2Params {
            kappa: 1.0,
            gamma: 0.1,
            epsilons: vec![0.01, 0.05, 0.13],
            omega_min: -2.0,
            omega_max: 2.0,
            points: 4001,
        }
    }
}

impl Command for Figure2Params {
    const NAME: &'static str = "figure2";

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        if self.epsilons.is_empty() {
            bail!("the epsilon list is empty");
        }
        let eh = hopf_threshold(self.kappa, self.gamma)?.epsilon_h;
        let mut curves = Vec::new();
        for &e in &self.epsilons {
            if e.abs() >= eh {
                return Err(NumericalFailure(format!(
                    "epsilon = {e} is at or above the Hopf threshold epsilon_h = {eh}; no stationary spectrum exists there"
                ))
                .into());
            }
            let p = system_params(self.kappa, self.gamma, None, e, None, false)?;
            let model = LinearNoiseModel::new(&p)?;
            curves.push(spectrum_scan(
                &model,
                self.omega_min,
                self.omega_max,
                self.points,
                ctx.exec,
            )?);
        }
        let mut cols = vec!["omega".to_string()];
        cols.extend((0..curves.len()).map(|k| format!("S33_abs_{}", k + 1)));
        let mut table = Table::with_columns(cols);
        for (n, w) in curves[0].omega.iter().enumerate() {
            let mut row = vec![*w];
            row.extend(curves.iter().map(|c| c.s[n][(2, 2)].norm()));
            table.push(row);
        }
        let mut fig = Figure {
            title: format!("|S_33(ω)|, κ = {}, γ = {}", self.kappa, self.gamma),
            x_label: "ω".into(),
            y_label: "|S_33|".into(),
            ..Default::default()
        };
        let mut summary_curves = Vec::new();
        for (k, (c, e)) in curves.iter().zip(&self.epsilons).enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            fig.series.push(Series {
                label: format!("ε = {e}"),
                style: Style::Solid,
                color,
                points: table.rows.iter().map(|r| [r[0], r[k + 1]]).collect(),
                source: Some(DataRef {
                    file: "figure2.csv".into(),
                    x: 1,
                    y: k + 2,
                }),
            });
            let peak = spectral_peak(c, 2, 2);
            if let Ok(p) = &peak {
                fig.markers.push(Marker {
                    at: [p.omega_peak, p.height],
                    label: format!("ω = {:.3}", p.omega_peak),
                    color,
                });
            }
            summary_curves.push(json!({ "epsilon": e, "peak": peak_json(peak)? }));
        }
        let mut out = Outcome {
            summary: json!({ "epsilon_h": eh, "curves": summary_curves }),
            files: vec![table.file("figure2", ctx.format)?],
        };
        out.add_figure("figure2", &fig, ctx);
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PhaseDiffusionArgs {
    /// Optical decay rate κ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Mechanical decay rate γ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Drive above threshold, ε − ε_h.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_epsilon: Option<f64>,
    /// Euler–Maruyama step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Number of ensemble members.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ensemble: Option<usize>,
    /// Phase model: planar normal form or full four-dimensional flow.
    #[arg(long, value_parser = ["planar", "full"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Quadrature noise intensity (default 1/κ).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Planar mode: also diffuse the radius.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial_noise: Option<bool>,
    /// Record every n-th step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiffusionParams {
    pub kappa: f64,
    pub gamma: f64,
    pub delta_epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_ensemble: usize,
    pub mode: PhaseMode,
    pub s: Option<f64>,
    pub radial_noise: bool,
    pub sample_every: usize,
}

impl Default for PhaseDiffusionParams {
    fn default() -> Self {
        PhaseDiffusionParams {
            kappa: 1.0,
            gamma: 0.0,
            delta_epsilon: 0.05,
            dt: 0.01,
            t_end: 200.0,
            n_ensemble: 500,
            mode: PhaseMode::Planar,
            s: None,
            radial_noise: false,
            sample_every: 5,
        }
    }
}

impl Command for PhaseDiffusionParams {
    const NAME: &'static str = "phase-diffusion";

    fn resolve(&mut self) -> Result<()> {
        if self.s.is_none() {
            ensure!(self.kappa > 0.0, "kappa must be > 0, got {}", self.kappa);
            self.s = Some(1.0 / self.kappa);
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        ensure!(self.dt > 0.0 && self.t_end > self.dt, "need 0 < dt < t_end");
        ensure!(
            self.n_ensemble >= MIN_MEMBERS,
            "n_ensemble = {} is below the {MIN_MEMBERS} members the fit needs",
            self.n_ensemble
        );
        let cfg = SdeConfig {
            dt: self.dt,
            n_steps: (self.t_end / self.dt).round() as usize,
            n_ensemble: self.n_ensemble,
            seed: ctx.seed,
            burn_in: 0.0,
        };
        let opts = PhaseNoiseOptions {
            mode: self.mode,
            s: self.s.unwrap_or(1.0 / self.kappa),
            radial_noise: self.radial_noise,
            sample_every: self.sample_every,
        };
        let mut rec = simulate_limit_cycle_noise(
            self.kappa,
            self.gamma,
            self.delta_epsilon,
            &cfg,
            &opts,
            ctx.exec,
        )?;
        let fit = rec.fit(ctx.seed)?;
        let closed = phase_diffusion_constant(self.kappa, self.gamma, self.delta_epsilon)?;
        let file = match ctx.format {
            Format::Csv => {
                let mut buf = Vec::new();
                selfpulse::io::write_phase_record(&mut buf, &rec)?;
                ("phase.csv".to_string(), buf)
            }
            Format::Json => {
                let mut t = Table::new(selfpulse::io::PHASE_HEADER);
                for (t_, v, n) in rec.variance_curve() {
                    t.push(vec![t_, v, n as f64]);
                }
                t.file("phase", Format::Json)?
            }
        };
        let summary = json!({
            "fit": to_json(&fit)?,
            "closed_form": to_json(&closed)?,
            "ratio": fit.d_phi / closed.exact,
            "amplitude": rec.amplitude,
            "flagged": rec.flagged.iter().filter(|f| **f).count(),
            "n_members": rec.phases.len(),
        });
        Ok(Outcome {
            summary,
            files: vec![file],
        })
    }
}
