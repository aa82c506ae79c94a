//! Model parameters, physical realisations and the semiclassical state.
//!
//! The dynamical core works with four rates `(κ, γ, χ, ε)`. Two physical
//! systems map onto them: a harmonically trapped atom at a node of a cavity
//! standing wave, and a dielectric membrane at an extremum of the cavity
//! frequency. Both yield a quadratic coupling `G a†a (b + b†)²`; with the
//! cavity driven on its red two-phonon sideband the effective parametric
//! rate is `χ = G |ᾱ|`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in SI units (J s).
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Unit system used by the realisation parameter maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Si,
    /// ħ = 1.
    Scaled,
}

impl Units {
    pub fn hbar(self) -> f64 {
        match self {
            Units::Si => HBAR_SI,
            Units::Scaled => 1.0,
        }
    }
}

/// Rates of the scaled model. `nbar` is carried for completeness but only
/// the zero-temperature bath is supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Optical amplitude decay rate.
    pub kappa: f64,
    /// Mechanical amplitude decay rate.
    pub gamma: f64,
    /// Effective parametric coupling.
    pub chi: f64,
    /// Mechanical drive strength.
    pub epsilon: f64,
    #[serde(default)]
    pub nbar: f64,
}

impl SystemParams {
    pub fn new(kappa: f64, gamma: f64, chi: f64, epsilon: f64) -> Result<Self> {
        let p = SystemParams {
            kappa,
            gamma,
            chi,
            epsilon,
            nbar: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for the bare interaction, `κ = γ = ε = 0`. Only valid for
    /// time integration.
    pub fn conservative(chi: f64) -> Self {
        SystemParams {
            kappa: 0.0,
            gamma: 0.0,
            chi,
            epsilon: 0.0,
            nbar: 0.0,
        }
    }

    /// Parameters in units where χ = 1.
    pub fn scaled(kappa: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        Self::new(kappa, gamma, 1.0, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_dynamics()?;
        if self.kappa <= 0.0 {
            return Err(Error::domain(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Weaker check for time integration only: the undamped cavity
    /// `κ = 0` is allowed since the flow itself is well defined there.
    pub fn validate_dynamics(&self) -> Result<()> {
        let all = [self.kappa, self.gamma, self.chi, self.epsilon, self.nbar];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("parameters must be finite"));
        }
        if self.kappa < 0.0 {
            return Err(Error::domain(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::domain(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.chi <= 0.0 {
            return Err(Error::domain(format!("chi must be > 0, got {}", self.chi)));
        }
        if self.nbar != 0.0 {
            return Err(Error::domain(format!(
                "only a zero-temperature mechanical bath is supported (nbar = {})",
                self.nbar
            )));
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        SystemParams { epsilon, ..self }
    }

    /// Divides every rate by χ. A solution of the rescaled system at time
    /// `τ` is the original solution at time `τ / χ`.
    pub fn rescale_to_unit_chi(&self) -> Result<Self> {
        if !(self.chi > 0.0) {
            return Err(Error::domain(format!(
                "chi must be > 0 to rescale, got {}",
                self.chi
            )));
        }
        let c = self.chi;
        Ok(SystemParams {
            kappa: self.kappa / c,
            gamma: self.gamma / c,
            chi: 1.0,
            epsilon: self.epsilon / c,
            nbar: self.nbar,
        })
    }
}

/// Lamb-Dicke parameter `k sqrt(ħ / 2mν)` in SI units.
pub fn lamb_dicke(k_wave: f64, mass: f64, nu: f64) -> Result<f64> {
    lamb_dicke_in(Units::Si, k_wave, mass, nu)
}

pub fn lamb_dicke_in(units: Units, k_wave: f64, mass: f64, nu: f64) -> Result<f64> {
    if !(mass > 0.0) || !(nu > 0.0) {
        return Err(Error::domain(format!(
            "mass and nu must be > 0 (mass = {mass}, nu = {nu})"
        )));
    }
    Ok(k_wave * (units.hbar() / (2.0 * mass * nu)).sqrt())
}

/// Trapped atom at a node of the cavity standing wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomRealization {
    /// Single-photon Rabi frequency.
    pub g: f64,
    /// Atom-cavity detuning Δ.
    #[serde(rename = "Delta")]
    pub atom_detuning: f64,
    /// Trap frequency.
    pub nu: f64,
    pub mass: f64,
    pub k_wave: f64,
    /// Cavity drive amplitude as `[re, im]`.
    pub epsilon_c: [f64; 2],
    /// Cavity drive detuning δ = ω_c − ω.
    pub delta: f64,
    #[serde(default)]
    pub units: Units,
}

/// Membrane at an extremum of the cavity frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembraneRealization {
    pub mass: f64,
    pub nu: f64,
    /// Second derivative of ω_c(x) at x = 0.
    pub curvature: f64,
    pub epsilon_c: [f64; 2],
    pub delta: f64,
    #[serde(default)]
    pub units: Units,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Realization {
    Atom(AtomRealization),
    Membrane(MembraneRealization),
}

impl Realization {
    pub fn drive(&self) -> Complex64 {
        let e = match self {
            Realization::Atom(a) => a.epsilon_c,
            Realization::Membrane(m) => m.epsilon_c,
        };
        Complex64::new(e[0], e[1])
    }

    pub fn drive_detuning(&self) -> f64 {
        match self {
            Realization::Atom(a) => a.delta,
            Realization::Membrane(m) => m.delta,
        }
    }

    pub fn mechanical_frequency(&self) -> f64 {
        match self {
            Realization::Atom(a) => a.nu,
            Realization::Membrane(m) => m.nu,
        }
    }

    /// Effective drive after rotating the cavity phase so that ᾱ is real.
    pub fn drive_map(&self, kappa: f64) -> Result<DriveMap> {
        let g = coupling_strength(self)?;
        let alpha_bar = steady_cavity_amplitude(self.drive(), kappa, self.drive_detuning())?;
        Ok(DriveMap {
            coupling: g,
            alpha_bar_abs: alpha_bar.norm(),
            drive_phase: alpha_bar.arg(),
            chi: effective_coupling(g, alpha_bar),
        })
    }
}

/// Result of mapping a realisation onto the parametric model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveMap {
    pub coupling: f64,
    pub alpha_bar_abs: f64,
    /// Phase of ᾱ before it is rotated away.
    pub drive_phase: f64,
    pub chi: f64,
}

/// Quadratic opto-mechanical coupling `G`.
///
/// Atom: `η² g² / Δ`. Membrane: `(ħ / 4νm) ∂²ω_c/∂x²`.
pub fn coupling_strength(realization: &Realization) -> Result<f64> {
    match realization {
        Realization::Atom(a) => {
            if a.atom_detuning == 0.0 || !a.atom_detuning.is_finite() {
                return Err(Error::domain("atom-cavity detuning Delta must be nonzero"));
            }
            let eta = lamb_dicke_in(a.units, a.k_wave, a.mass, a.nu)?;
            Ok(eta * eta * a.g * a.g / a.atom_detuning)
        }
        Realization::Membrane(m) => {
            if !(m.mass > 0.0) || !(m.nu > 0.0) {
                return Err(Error::domain("membrane mass and nu must be > 0"));
            }
            Ok(m.units.hbar() / (4.0 * m.nu * m.mass) * m.curvature)
        }
    }
}

/// Steady coherent amplitude of the driven empty cavity, `−iε_c / (κ/2 − iδ)`.
pub fn steady_cavity_amplitude(epsilon_c: Complex64, kappa: f64, delta: f64) -> Result<Complex64> {
    if !(kappa > 0.0) {
        return Err(Error::domain(format!("kappa must be > 0, got {kappa}")));
    }
    let i = Complex64::i();
    Ok(-i * epsilon_c / Complex64::new(kappa / 2.0, -delta))
}

/// `χ = G |ᾱ|`; the phase of ᾱ is absorbed into the cavity drive.
pub fn effective_coupling(coupling: f64, alpha_bar: Complex64) -> f64 {
    coupling * alpha_bar.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandCheck {
    pub resolved: bool,
    /// `2ν / κ`.
    pub margin: f64,
}

/// Resolved-sideband condition `2ν > κ`.
pub fn resolved_sideband_check(nu: f64, kappa: f64) -> Result<SidebandCheck> {
    if !(nu > 0.0) || !(kappa > 0.0) {
        return Err(Error::domain("nu and kappa must be > 0"));
    }
    let margin = 2.0 * nu / kappa;
    Ok(SidebandCheck {
        resolved: margin > 1.0,
        margin,
    })
}

/// Complex cavity and mechanical amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SemiclassicalState {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl SemiclassicalState {
    pub fn new(alpha: Complex64, beta: Complex64) -> Self {
        SemiclassicalState { alpha, beta }
    }

    /// Real view ordered `(β_r, β_i, α_r, α_i)`.
    pub fn to_real(self) -> [f64; 4] {
        [self.beta.re, self.beta.im, self.alpha.re, self.alpha.im]
    }

    pub fn from_real(y: [f64; 4]) -> Self {
        SemiclassicalState {
            beta: Complex64::new(y[0], y[1]),
            alpha: Complex64::new(y[2], y[3]),
        }
    }

    /// `2|α|² + |β|²`, conserved by the bare interaction.
    pub fn excitation_number(&self) -> f64 {
        2.0 * self.alpha.norm_sqr() + self.beta.norm_sqr()
    }
}

/// Flat JSON parameter document.
///
/// ```json
/// { "kappa": 1.0, "gamma": 0.1, "chi": 1.0, "epsilon": 0.13 }
/// ```
///
/// With a `realization` block χ is derived from it; an explicit `chi` must
/// then agree with the derived value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub kappa: f64,
    pub gamma: f64,
    #[serde(default)]
    pub chi: Option<f64>,
    pub epsilon: f64,
    #[serde(default)]
    pub nbar: Option<f64>,
    #[serde(default)]
    pub realization: Option<Realization>,
}

impl ParamsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self) -> Result<SystemParams> {
        let chi = match (&self.realization, self.chi) {
            (Some(r), explicit) => {
                let derived = r.drive_map(self.kappa)?.chi;
                if let Some(c) = explicit {
                    if (c - derived).abs() > 1e-12 * derived.abs().max(1.0) {
                        return Err(Error::config(format!(
                            "chi = {c} conflicts with the value {derived} derived from the realization"
                        )));
                    }
                }
                derived
            }
            (None, Some(c)) => c,
            (None, None) => 1.0,
        };
        let p = SystemParams {
            kappa: self.kappa,
            gamma: self.gamma,
            chi,
            epsilon: self.epsilon,
            nbar: self.nbar.unwrap_or(0.0),
        };
        p.validate()?;
        Ok(p)
    }
}
