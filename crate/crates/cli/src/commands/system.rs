use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use selfpulse::io::TRAJECTORY_HEADER;
use selfpulse::model::Realization;
use selfpulse::semiclassics::{self, fixed_point, stability};
use selfpulse::SystemParams;

use super::{default_rel_tol, ode_options, system_params, to_json, Command, Context, Outcome};
use crate::output::Table;

/// Hopf point of `p` in its own units (rates scaled back by χ).
fn physical_hopf(p: &SystemParams) -> Result<(f64, f64)> {
    let u = p.rescale_to_unit_chi()?;
    let h = semiclassics::hopf_threshold(u.kappa, u.gamma)?;
    Ok((h.epsilon_h * p.chi, h.omega_h * p.chi))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct FixedPointArgs {
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointParams {
    pub kappa: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<Realization>,
}

impl Default for FixedPointParams {
    fn default() -> Self {
        FixedPointParams {
            kappa: 1.0,
            gamma: 0.1,
            chi: None,
            epsilon: 0.13,
            realization: None,
        }
    }
}

impl Command for FixedPointParams {
    const NAME: &'static str = "fixed-point";

    fn run(&self, _ctx: &Context) -> Result<Outcome> {
        let p = system_params(
            self.kappa,
            self.gamma,
            self.chi,
            self.epsilon,
            self.realization.as_ref(),
            false,
        )?;
        let fp = fixed_point(&p)?;
        let st = stability(&fp, &p);
        let (epsilon_h, omega_h) = physical_hopf(&p)?;
        let report = json!({
            "kappa": p.kappa,
            "gamma": p.gamma,
            "chi": p.chi,
            "epsilon": p.epsilon,
            "beta_i0": fp.beta_i0,
            "alpha_i0": fp.alpha_i0,
            "residual": fp.residual,
            "classification": st.classification,
            "eigenvalues": st.eigenvalues,
            "max_real_part": st.max_real_part,
            "epsilon_h": epsilon_h,
            "omega_h": omega_h,
        });
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        Ok(Outcome {
            files: vec![("fixed_point.json".into(), text.into_bytes())],
            summary: report,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SimulateArgs {
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
    /// Initial state `beta_r,beta_i,alpha_r,alpha_i` (default: fixed point
    /// plus a small kick).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// Final time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Output samples, including both end points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Relative integrator tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// Absolute integrator tolerance.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    /// Fraction of the record discarded as transient.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub kappa: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<Realization>,
    pub y0: Option<[f64; 4]>,
    pub t_end: f64,
    pub samples: usize,
    pub rel_tol: Option<f64>,
    pub abs_tol: f64,
    pub transient_fraction: f64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            kappa: 1.0,
            gamma: 0.1,
            chi: None,
            epsilon: 0.25,
            realization: None,
            y0: None,
            t_end: 500.0,
            samples: 5001,
            rel_tol: None,
            abs_tol: 1e-12,
            transient_fraction: 0.5,
        }
    }
}

impl SimulateParams {
    fn system(&self) -> Result<SystemParams> {
        system_params(
            self.kappa,
            self.gamma,
            self.chi,
            self.epsilon,
            self.realization.as_ref(),
            true,
        )
    }
}

impl Command for SimulateParams {
    const NAME: &'static str = "simulate";

    fn resolve(&mut self) -> Result<()> {
        if self.rel_tol.is_none() {
            self.rel_tol = Some(default_rel_tol()?);
        }
        if self.y0.is_none() {
            let p = self.system()?;
            let base = fixed_point(&p).map(|f| f.state()).unwrap_or([0.0; 4]);
            self.y0 = Some([base[0] + 0.01, base[1], base[2] + 0.01, base[3]]);
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> Result<Outcome> {
        let p = self.system()?;
        anyhow::ensure!(
            self.t_end > 0.0 && self.t_end.is_finite(),
            "t_end must be > 0"
        );
        anyhow::ensure!(self.samples >= 2, "samples must be at least 2");
        let opts = ode_options(self.rel_tol.unwrap_or(1e-9), self.abs_tol)?;
        let y0 = self.y0.unwrap_or_default();
        let times = semiclassics::uniform_times(0.0, self.t_end, self.samples);
        let traj = semiclassics::integrate(y0, &p, &times, &opts)?;
        let mut table = Table::new(TRAJECTORY_HEADER);
        for (t, y) in traj.times.iter().zip(&traj.states) {
            table.push(vec![*t, y[0], y[1], y[2], y[3]]);
        }
        let limit_cycle = match semiclassics::detect_limit_cycle(&traj, self.transient_fraction) {
            Ok(m) => to_json(&m)?,
            Err(e) => json!({ "error": e.to_string() }),
        };
        let n0 = traj.state(0).excitation_number();
        let n1 = traj.state(traj.len() - 1).excitation_number();
        let summary = json!({
            "samples": traj.len(),
            "final_state": traj.last(),
            "excitation_number": [n0, n1],
            "limit_cycle": limit_cycle,
        });
        Ok(Outcome {
            summary,
            files: vec![table.file("trajectory", ctx.format)?],
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct HopfArgs {
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
    /// Bisection tolerance on ε (in χ = 1 units).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfParams {
    pub kappa: f64,
    pub gamma: f64,
    pub chi: f64,
    pub tol: f64,
}

impl Default for HopfParams {
    fn default() -> Self {
        HopfParams {
            kappa: 1.0,
            gamma: 0.1,
            chi: 1.0,
            tol: 1e-12,
        }
    }
}

impl Command for HopfParams {
    const NAME: &'static str = "hopf";

    fn run(&self, _ctx: &Context) -> Result<Outcome> {
        let p = system_params(self.kappa, self.gamma, Some(self.chi), 0.0, None, false)?;
        let u = p.rescale_to_unit_chi()?;
        let h = semiclassics::hopf_threshold(u.kappa, u.gamma)?;
        let bisected = semiclassics::locate_hopf_by_bisection(u.kappa, u.gamma, self.tol)?;
        let at = p.with_epsilon(h.epsilon_h * p.chi);
        let fp = fixed_point(&at)?;
        let st = stability(&fp, &at);
        let lead = st
            .eigenvalues
            .iter()
            .max_by(|a, b| {
                a.re.total_cmp(&b.re)
                    .then(a.im.abs().total_cmp(&b.im.abs()))
            })
            .copied()
            .unwrap_or_default();
        let summary = json!({
            "kappa": p.kappa,
            "gamma": p.gamma,
            "chi": p.chi,
            "epsilon_h": h.epsilon_h * p.chi,
            "epsilon_h_bisection": bisected * p.chi,
            "omega_h": h.omega_h * p.chi,
            "omega_h_eigenvalue": lead.im.abs(),
            "leading_real_part": lead.re,
            "beta_i0h": fp.beta_i0,
            "alpha_i0h": fp.alpha_i0,
        });
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        Ok(Outcome {
            files: vec![("hopf.json".into(), text.into_bytes())],
            summary,
        })
    }
}
