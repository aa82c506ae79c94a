//! Center-manifold reduction at the Hopf point and the resulting
//! prediction of the self-pulsing orbit.
//!
//! At `ε = ε_h` the Jacobian splits into a center block acting on
//! `c = (β_r, α_r)` (eigenvalues `±iω_h`) and a stable block acting on the
//! offsets `s = (β_i − β_i0h, α_i − α_i0h)`. The manifold is sought as
//! `s = h(c)` with `h` a pair of quadratic forms
//!
//! ```text
//! h1 = A1 β_r² + B1 β_r α_r + C1 α_r²
//! h2 = A2 β_r² + B2 β_r α_r + C2 α_r²
//! ```
//!
//! whose coefficients follow from the quadratic-order tangency condition
//! `Dh(c) L_c c − L_s h(c) = (2β_r α_r, β_r²)`. Substituting `h` into the
//! center equations leaves a planar cubic system; the linear change of
//! variables [`NormalFormTransform`] turns its linear part into a rotation,
//! from which the cubic radial coefficient `a` follows by the standard
//! planar Hopf formula. Everything here is in χ = 1 units.

use nalgebra::{Matrix2, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::semiclassics::{self, check_rates, HopfPoint, Trajectory};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientSource {
    TangencySolve,
    PrintedFormula,
}

/// Quadratic manifold coefficients; `h1` gives the `β_i` offset and `h2`
/// the `α_i` offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmCoefficients {
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    /// Common denominator of the closed forms.
    pub denominator: f64,
    pub source: CoefficientSource,
}

impl CmCoefficients {
    fn h1(&self) -> [f64; 3] {
        [self.a1, self.b1, self.c1]
    }

    fn h2(&self) -> [f64; 3] {
        [self.a2, self.b2, self.c2]
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a1, self.b1, self.c1, self.a2, self.b2, self.c2]
    }
}

/// `D = κ²(4γ+3κ)(32γ³+96κγ²+72κ²γ+17κ³)`.
pub fn denominator(kappa: f64, gamma: f64) -> f64 {
    let (k, g) = (kappa, gamma);
    k * k
        * (4.0 * g + 3.0 * k)
        * (32.0 * g.powi(3) + 96.0 * k * g * g + 72.0 * k * k * g + 17.0 * k.powi(3))
}

/// Center and stable blocks of the Jacobian at the Hopf point.
pub fn hopf_blocks(kappa: f64, gamma: f64) -> Result<(HopfPoint, Matrix2<f64>, Matrix2<f64>)> {
    let hp = semiclassics::hopf_threshold(kappa, gamma)?;
    let j = semiclassics::jacobian(&hp.fixed_point(), &hp.params());
    let center = Matrix2::new(j[(0, 0)], j[(0, 2)], j[(2, 0)], j[(2, 2)]);
    let stable = Matrix2::new(j[(1, 1)], j[(1, 3)], j[(3, 1)], j[(3, 3)]);
    Ok((hp, center, stable))
}

// Quadratic terms of the (β_i, α_i) equations restricted to s = 0:
// 2 β_r α_r and β_r², as coefficient triples over (β_r², β_r α_r, α_r²).
const STABLE_FORCING: [[f64; 3]; 2] = [[0.0, 2.0, 0.0], [1.0, 0.0, 0.0]];

/// Solves the 6×6 tangency system for the manifold coefficients.
pub fn cm_coefficients(kappa: f64, gamma: f64) -> Result<CmCoefficients> {
    check_rates(kappa, gamma)?;
    let (_, lc, ls) = hopf_blocks(kappa, gamma)?;
    let (p, q, r, s) = (lc[(0, 0)], lc[(0, 1)], lc[(1, 0)], lc[(1, 1)]);
    // Lie derivative of the monomials (x², xy, y²) along ẋ = px+qy, ẏ = rx+sy,
    // column j holds d/dt of monomial j in the monomial basis
    let lie = SMatrix::<f64, 3, 3>::new(2.0 * p, r, 0.0, 2.0 * q, p + s, 2.0 * r, 0.0, q, 2.0 * s);
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    let mut rhs = SVector::<f64, 6>::zeros();
    for i in 0..2 {
        for a in 0..3 {
            for b in 0..3 {
                m[(3 * i + a, 3 * i + b)] += lie[(a, b)];
            }
            for j in 0..2 {
                m[(3 * i + a, 3 * j + a)] -= ls[(i, j)];
            }
            rhs[3 * i + a] = STABLE_FORCING[i][a];
        }
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("center-manifold tangency system is singular"))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(
            "center-manifold tangency system is singular",
        ));
    }
    Ok(CmCoefficients {
        a1: sol[0],
        b1: sol[1],
        c1: sol[2],
        a2: sol[3],
        b2: sol[4],
        c2: sol[5],
        denominator: denominator(kappa, gamma),
        source: CoefficientSource::TangencySolve,
    })
}

/// Closed-form coefficients. The `A1` numerator is read as
/// `−2√2 sqrt(κ(κ+γ)) κ (27κ³+92γκ²+96κγ²+16γ³)`.
pub fn printed_coefficients(kappa: f64, gamma: f64) -> Result<CmCoefficients> {
    check_rates(kappa, gamma)?;
    let (k, g) = (kappa, gamma);
    let d = denominator(k, g);
    let root = SQRT2 * (k * (k + g)).sqrt();
    let f = 2.0 * g + 3.0 * k;
    Ok(CmCoefficients {
        a1: -2.0
            * root
            * k
            * (27.0 * k.powi(3) + 92.0 * g * k * k + 96.0 * k * g * g + 16.0 * g.powi(3))
            / d,
        b1: 4.0 * k * k * (11.0 * k * k + 34.0 * k * g + 32.0 * g * g) * f / d,
        c1: -4.0 * f * root * k * (k * k + 2.0 * k * g + 4.0 * g * g) / d,
        a2: 2.0
            * k
            * (5.0 * k.powi(3) + 24.0 * g * k * k + 32.0 * k * g * g + 16.0 * g.powi(3))
            * f
            / d,
        b2: -8.0 * f * root * k * k * (2.0 * k + 5.0 * g) / d,
        c2: 8.0 * (k + 2.0 * g) * (5.0 * k + 2.0 * g) * k * (k + g) * f / d,
        denominator: d,
        source: CoefficientSource::PrintedFormula,
    })
}

/// Offsets `(β_i − β_i0h, α_i − α_i0h)` on the quadratic manifold.
pub fn evaluate_manifold(cm: &CmCoefficients, beta_r: f64, alpha_r: f64) -> (f64, f64) {
    let q =
        |c: [f64; 3]| c[0] * beta_r * beta_r + c[1] * beta_r * alpha_r + c[2] * alpha_r * alpha_r;
    (q(cm.h1()), q(cm.h2()))
}

/// Largest violation of the tangency equation over points on the unit
/// circle, obtained by direct substitution.
pub fn tangency_residual(cm: &CmCoefficients, kappa: f64, gamma: f64) -> Result<f64> {
    let (_, lc, ls) = hopf_blocks(kappa, gamma)?;
    let mut worst = 0.0f64;
    for k in 0..32 {
        let th = std::f64::consts::TAU * k as f64 / 32.0;
        let (x, y) = (th.cos(), th.sin());
        let (xd, yd) = (
            lc[(0, 0)] * x + lc[(0, 1)] * y,
            lc[(1, 0)] * x + lc[(1, 1)] * y,
        );
        let (h1, h2) = evaluate_manifold(cm, x, y);
        let grad = |c: [f64; 3]| (2.0 * c[0] * x + c[1] * y, c[1] * x + 2.0 * c[2] * y);
        let (g1x, g1y) = grad(cm.h1());
        let (g2x, g2y) = grad(cm.h2());
        let r1 = g1x * xd + g1y * yd - (ls[(0, 0)] * h1 + ls[(0, 1)] * h2) - 2.0 * x * y;
        let r2 = g2x * xd + g2y * yd - (ls[(1, 0)] * h1 + ls[(1, 1)] * h2) - x * x;
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    Ok(worst)
}

/// Homogeneous bivariate polynomial, coefficients ordered by increasing
/// power of the second variable: `c[j]` multiplies `x^(n−j) y^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Homogeneous(pub Vec<f64>);

impl Homogeneous {
    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.degree() as i32;
        self.0
            .iter()
            .enumerate()
            .map(|(j, c)| c * x.powi(n - j as i32) * y.powi(j as i32))
            .sum()
    }

    pub fn mul(&self, other: &Homogeneous) -> Homogeneous {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Homogeneous(out)
    }

    pub fn add_scaled(&self, s: f64, other: &Homogeneous) -> Homogeneous {
        Homogeneous(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Homogeneous {
        Homogeneous(self.0.iter().map(|a| s * a).collect())
    }

    /// `p(m00 u + m01 v, m10 u + m11 v)` as a polynomial in `(u, v)`.
    pub fn compose_linear(&self, m: &Matrix2<f64>) -> Homogeneous {
        let lx = Homogeneous(vec![m[(0, 0)], m[(0, 1)]]);
        let ly = Homogeneous(vec![m[(1, 0)], m[(1, 1)]]);
        let n = self.degree();
        let mut out = Homogeneous(vec![0.0; n + 1]);
        for (j, c) in self.0.iter().enumerate() {
            let mut term = Homogeneous(vec![*c]);
            for _ in 0..n - j {
                term = term.mul(&lx);
            }
            for _ in 0..j {
                term = term.mul(&ly);
            }
            out = out.add_scaled(1.0, &term);
        }
        out
    }
}

/// Cubic part of the center dynamics after substituting the manifold:
/// `β̇_r ⊃ 2(h1 α_r − β_r h2)`, `α̇_r ⊃ −2 β_r h1`.
pub fn reduced_cubic_field(cm: &CmCoefficients) -> [Homogeneous; 2] {
    let x = Homogeneous(vec![1.0, 0.0]);
    let y = Homogeneous(vec![0.0, 1.0]);
    let h1 = Homogeneous(cm.h1().to_vec());
    let h2 = Homogeneous(cm.h2().to_vec());
    let f1 = h1.mul(&y).add_scaled(-1.0, &x.mul(&h2)).scale(2.0);
    let f2 = x.mul(&h1).scale(-2.0);
    [f1, f2]
}

/// Linear map `(β_r, α_r)ᵀ = T (u, v)ᵀ` with
/// `T = [[0, 2β_i0h], [ω_h, −κ/2]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormTransform {
    pub matrix: Matrix2<f64>,
    pub inverse: Matrix2<f64>,
    pub beta_i0h: f64,
    pub omega_h: f64,
    pub kappa: f64,
}

pub fn normal_form_transform(kappa: f64, gamma: f64) -> Result<NormalFormTransform> {
    let hp = semiclassics::hopf_threshold(kappa, gamma)?;
    let (b, w) = (hp.beta_i0h, hp.omega_h);
    let s = 2.0 * w; // sqrt(κ(κ+2γ))
    let matrix = Matrix2::new(0.0, 2.0 * b, w, -kappa / 2.0);
    // u = 2α_r/s + κβ_r/(2 s β_i0h), v = β_r/(2β_i0h)
    let inverse = Matrix2::new(kappa / (2.0 * s * b), 2.0 / s, 1.0 / (2.0 * b), 0.0);
    Ok(NormalFormTransform {
        matrix,
        inverse,
        beta_i0h: b,
        omega_h: w,
        kappa,
    })
}

impl NormalFormTransform {
    pub fn to_normal(&self, beta_r: f64, alpha_r: f64) -> (f64, f64) {
        let m = &self.inverse;
        (
            m[(0, 0)] * beta_r + m[(0, 1)] * alpha_r,
            m[(1, 0)] * beta_r + m[(1, 1)] * alpha_r,
        )
    }

    pub fn from_normal(&self, u: f64, v: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[(0, 0)] * u + m[(0, 1)] * v, m[(1, 0)] * u + m[(1, 1)] * v)
    }
}

/// Cubic normal-form field `(u̇, v̇) = (−ω v, ω u) + (F_u, F_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormField {
    pub omega_h: f64,
    /// Coefficients of `u³, u²v, uv², v³` in `u̇`.
    pub cubic_u: [f64; 4],
    /// Same for `v̇`.
    pub cubic_v: [f64; 4],
}

impl NormalFormField {
    /// First Lyapunov coefficient of a rotation plus cubic terms,
    /// `(F_uuu + F_uvv + G_uuv + G_vvv)/16`.
    pub fn lyapunov_coefficient(&self) -> f64 {
        (3.0 * self.cubic_u[0] + self.cubic_u[2] + self.cubic_v[1] + 3.0 * self.cubic_v[3]) / 8.0
    }

    pub fn eval(&self, u: f64, v: f64) -> (f64, f64) {
        let p = |c: &[f64; 4]| Homogeneous(c.to_vec()).eval(u, v);
        (
            -self.omega_h * v + p(&self.cubic_u),
            self.omega_h * u + p(&self.cubic_v),
        )
    }
}

/// Builds the normal-form cubic field by explicit composition of the
/// reduced cubic field with the linear transform.
pub fn normal_form_field(cm: &CmCoefficients, nf: &NormalFormTransform) -> NormalFormField {
    let [f1, f2] = reduced_cubic_field(cm);
    let g1 = f1.compose_linear(&nf.matrix);
    let g2 = f2.compose_linear(&nf.matrix);
    let ti = &nf.inverse;
    let fu = g1.scale(ti[(0, 0)]).add_scaled(ti[(0, 1)], &g2);
    let fv = g1.scale(ti[(1, 0)]).add_scaled(ti[(1, 1)], &g2);
    let arr = |h: Homogeneous| [h.0[0], h.0[1], h.0[2], h.0[3]];
    NormalFormField {
        omega_h: nf.omega_h,
        cubic_u: arr(fu),
        cubic_v: arr(fv),
    }
}

/// Radial growth coefficient of the unfolded normal form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRate {
    /// `d = sqrt(8κ(κ+γ)) / (κ(3κ+4γ))`: `Re λ ≈ d Δε` near ε_h.
    pub d: f64,
    /// `∂ trace/∂ε` of the center block at ε_h; equals `2d`.
    pub trace_derivative: f64,
}

pub fn radial_growth_rate(kappa: f64, gamma: f64) -> Result<GrowthRate> {
    check_rates(kappa, gamma)?;
    let d = (8.0 * kappa * (kappa + gamma)).sqrt() / (kappa * (3.0 * kappa + 4.0 * gamma));
    Ok(GrowthRate {
        d,
        trace_derivative: 2.0 * d,
    })
}

/// Trace of the `(β_r, α_r)` block of the Jacobian at the fixed point,
/// `4β_i0(ε)²/κ − (κ+γ)/2`.
pub fn center_trace(kappa: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    let fp = semiclassics::fixed_point(&SystemParams::scaled(kappa, gamma, epsilon)?)?;
    Ok(4.0 * fp.beta_i0 * fp.beta_i0 / kappa - 0.5 * (kappa + gamma))
}

/// Closed form for the cubic radial coefficient `a`.
pub fn lyapunov_closed_form(kappa: f64, gamma: f64) -> f64 {
    let (k, g) = (kappa, gamma);
    let num = k
        * k
        * (k + g)
        * (99.0 * k.powi(4)
            + 490.0 * g * k.powi(3)
            + 808.0 * k * k * g * g
            + 512.0 * k * g.powi(3)
            + 128.0 * g.powi(4));
    let den = 4.0
        * (128.0 * k * k * g.powi(4)
            + 480.0 * k.powi(3) * g.powi(3)
            + 51.0 * k.powi(6)
            + 284.0 * k.powi(5) * g
            + 576.0 * k.powi(4) * g * g);
    -num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCoefficient {
    /// Closed-form value (returned as `a`).
    pub a: f64,
    /// From the composed normal-form field.
    pub numeric: f64,
    pub relative_difference: f64,
    pub agrees: bool,
}

pub fn lyapunov_coefficient(kappa: f64, gamma: f64) -> Result<LyapunovCoefficient> {
    check_rates(kappa, gamma)?;
    let a = lyapunov_closed_form(kappa, gamma);
    let cm = cm_coefficients(kappa, gamma)?;
    let nf = normal_form_transform(kappa, gamma)?;
    let numeric = normal_form_field(&cm, &nf).lyapunov_coefficient();
    let relative_difference = ((a - numeric) / a).abs();
    let agrees = relative_difference <= 1e-6;
    if !agrees {
        log::warn!(
            "closed-form a = {a} disagrees with normal-form value {numeric} (kappa = {kappa}, gamma = {gamma})"
        );
    }
    Ok(LyapunovCoefficient {
        a,
        numeric,
        relative_difference,
        agrees,
    })
}

/// Normal-form amplitude `A = sqrt(d Δε / |a|)`.
pub fn amplitude(kappa: f64, gamma: f64, delta_epsilon: f64) -> Result<f64> {
    if !(delta_epsilon > 0.0) {
        return Err(Error::domain(format!(
            "delta_epsilon must be > 0, got {delta_epsilon}"
        )));
    }
    let d = radial_growth_rate(kappa, gamma)?.d;
    Ok((d * delta_epsilon / lyapunov_closed_form(kappa, gamma).abs()).sqrt())
}

/// Small-γ form of the amplitude, `(1/κ) sqrt(136√2 Δε / 99)`, exact at γ = 0.
pub fn amplitude_small_gamma(kappa: f64, delta_epsilon: f64) -> f64 {
    (136.0 * SQRT2 * delta_epsilon / 99.0).sqrt() / kappa
}

/// Predicted orbit for `ε = ε_h + Δε`, truncated at `O(sqrt Δε)` in the
/// real parts and `O(Δε)` in the imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCyclePrediction {
    pub kappa: f64,
    pub gamma: f64,
    pub delta_epsilon: f64,
    /// Amplitude in normal-form units.
    pub amplitude: f64,
    pub omega_h: f64,
    pub beta_i0h: f64,
    /// Constant `β_i` on the orbit.
    pub beta_i: f64,
    /// Constant `α_i` on the orbit.
    pub alpha_i: f64,
}

impl LimitCyclePrediction {
    /// Orbit point at phase `θ`:
    /// `β_r = 2β_i0h A cos θ`, `α_r = ω_h A sin θ − (κA/2) cos θ`.
    /// Returned in real-view order `(β_r, β_i, α_r, α_i)`.
    pub fn orbit(&self, theta: f64) -> [f64; 4] {
        let (s, c) = theta.sin_cos();
        let a = self.amplitude;
        [
            2.0 * self.beta_i0h * a * c,
            self.beta_i,
            self.omega_h * a * s - 0.5 * self.kappa * a * c,
            self.alpha_i,
        ]
    }

    /// State at time `t`. In these coordinates the flow advances the orbit
    /// phase `θ` at rate `−ω_h`, i.e. `(u, v) = A(sin θ, cos θ)` turns
    /// clockwise.
    pub fn state_at(&self, t: f64, phase: f64) -> [f64; 4] {
        self.orbit(phase - self.omega_h * t)
    }

    /// Amplitude of `β_r` in the original variables, `2|β_i0h| A`.
    pub fn beta_r_amplitude(&self) -> f64 {
        2.0 * self.beta_i0h.abs() * self.amplitude
    }

    /// Amplitude of `α_r`, `A sqrt(ω_h² + κ²/4)`.
    pub fn alpha_r_amplitude(&self) -> f64 {
        self.amplitude * (self.omega_h.powi(2) + 0.25 * self.kappa * self.kappa).sqrt()
    }

    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega_h
    }

    pub fn params(&self) -> Result<SystemParams> {
        let eh = semiclassics::hopf_threshold(self.kappa, self.gamma)?.epsilon_h;
        SystemParams::scaled(self.kappa, self.gamma, eh + self.delta_epsilon)
    }
}

/// Drives above `WARN_FRACTION · ε_h` are outside the regime where the
/// truncated prediction is expected to hold.
pub const WARN_FRACTION: f64 = 0.2;

pub fn predict_limit_cycle(
    kappa: f64,
    gamma: f64,
    delta_epsilon: f64,
) -> Result<LimitCyclePrediction> {
    check_rates(kappa, gamma)?;
    if !(delta_epsilon > 0.0) || !delta_epsilon.is_finite() {
        return Err(Error::domain(format!(
            "delta_epsilon must be > 0, got {delta_epsilon}"
        )));
    }
    let hp = semiclassics::hopf_threshold(kappa, gamma)?;
    if delta_epsilon > WARN_FRACTION * hp.epsilon_h {
        log::warn!(
            "delta_epsilon = {delta_epsilon} exceeds {WARN_FRACTION}·epsilon_h = {}; the prediction is a near-threshold expansion",
            WARN_FRACTION * hp.epsilon_h
        );
    }
    let k34 = 3.0 * kappa + 4.0 * gamma;
    Ok(LimitCyclePrediction {
        kappa,
        gamma,
        delta_epsilon,
        amplitude: amplitude(kappa, gamma, delta_epsilon)?,
        omega_h: hp.omega_h,
        beta_i0h: hp.beta_i0h,
        beta_i: hp.beta_i0h - 2.0 * delta_epsilon / k34,
        alpha_i: hp.alpha_i0h
            - 2.0 * (2.0 * kappa * (kappa + gamma)).sqrt() * delta_epsilon / (kappa * k34),
    })
}

/// Radius of a measured orbit in normal-form coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFormAmplitude {
    /// Time-averaged `sqrt(u² + v²)` over whole periods.
    pub mean_radius: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub periods: usize,
}

impl NormalFormAmplitude {
    /// `max | |(u,v)| − A | / A` over the measured window.
    pub fn circularity_error(&self, predicted: f64) -> f64 {
        ((self.max_radius - predicted).abs()).max((self.min_radius - predicted).abs()) / predicted
    }
}

/// Measures the orbit radius in the Hopf-point normal-form coordinates
/// between the first and last section crossings after the transient.
pub fn measure_normal_form_amplitude(
    traj: &Trajectory,
    transient_fraction: f64,
) -> Result<NormalFormAmplitude> {
    let p = traj.params.rescale_to_unit_chi()?;
    let nf = normal_form_transform(p.kappa, p.gamma)?;
    let t0 = traj.times[0];
    let t_cut = t0 + transient_fraction * (traj.times[traj.len() - 1] - t0);
    let first = traj.times.partition_point(|&t| t < t_cut);
    let cr = semiclassics::section_crossings(traj, first);
    if cr.len() < 2 {
        return Err(Error::numerical(
            "fewer than two section crossings; no periodic orbit",
        ));
    }
    let (ta, tb) = (cr[0].time, cr[cr.len() - 1].time);
    let radius = |y: &[f64; 4]| {
        let (u, v) = nf.to_normal(y[0], y[2]);
        u.hypot(v)
    };
    let (mut acc, mut w) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in first..traj.len() - 1 {
        let (s0, s1) = (traj.times[i].max(ta), traj.times[i + 1].min(tb));
        if s1 <= s0 {
            continue;
        }
        let r0 = radius(&traj.interpolate(i, s0));
        let rm = radius(&traj.interpolate(i, 0.5 * (s0 + s1)));
        let r1 = radius(&traj.interpolate(i, s1));
        acc += (s1 - s0) * (r0 + 4.0 * rm + r1) / 6.0;
        w += s1 - s0;
        lo = lo.min(r0).min(rm).min(r1);
        hi = hi.max(r0).max(rm).max(r1);
    }
    Ok(NormalFormAmplitude {
        mean_radius: acc / w,
        min_radius: lo,
        max_radius: hi,
        periods: cr.len() - 1,
    })
}

/// Integration settings for [`compare_with_integration`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitRun {
    /// Length of the run in units of the radial time `1/(dΔε)`.
    pub growth_times: f64,
    pub samples_per_period: usize,
    pub transient_fraction: f64,
}

impl Default for OrbitRun {
    fn default() -> Self {
        OrbitRun {
            growth_times: 8.0,
            samples_per_period: 40,
            transient_fraction: 0.6,
        }
    }
}

/// Integrated orbit against the prediction at the same drive.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleComparison {
    pub prediction: LimitCyclePrediction,
    pub measurement: semiclassics::LimitCycleMeasurement,
    pub normal_form: NormalFormAmplitude,
    /// `|A_measured − A| / A`.
    pub amplitude_error: f64,
    /// `|T_measured − 2π/ω_h| / (2π/ω_h)`, when a period was found.
    pub period_error: Option<f64>,
    pub trajectory: Trajectory,
}

/// Integrates from the predicted orbit at `ε_h + Δε` and measures the
/// settled cycle.
pub fn compare_with_integration(
    kappa: f64,
    gamma: f64,
    delta_epsilon: f64,
    run: &OrbitRun,
    opts: &crate::ode::OdeOptions,
) -> Result<CycleComparison> {
    let prediction = predict_limit_cycle(kappa, gamma, delta_epsilon)?;
    let d = radial_growth_rate(kappa, gamma)?.d;
    let period = prediction.period();
    let duration = run.growth_times / (d * delta_epsilon);
    let n = ((duration / period) * run.samples_per_period as f64).ceil() as usize + 1;
    let params = prediction.params()?;
    let times = semiclassics::uniform_times(0.0, duration, n);
    let trajectory = semiclassics::integrate(prediction.orbit(0.0), &params, &times, opts)?;
    let measurement = semiclassics::detect_limit_cycle(&trajectory, run.transient_fraction)?;
    let normal_form = measure_normal_form_amplitude(&trajectory, run.transient_fraction)?;
    let amplitude_error =
        (normal_form.mean_radius - prediction.amplitude).abs() / prediction.amplitude;
    let period_error = measurement.period.map(|p| (p - period).abs() / period);
    Ok(CycleComparison {
        prediction,
        measurement,
        normal_form,
        amplitude_error,
        period_error,
        trajectory,
    })
}

/// Summary of the reduction, serialisable as the CM report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmReport {
    pub kappa: f64,
    pub gamma: f64,
    pub beta_i0h: f64,
    pub alpha_i0h: f64,
    pub coefficients: CmCoefficients,
    pub d: f64,
    pub a: f64,
    pub omega_h: f64,
    pub epsilon_h: f64,
}

pub fn cm_report(kappa: f64, gamma: f64) -> Result<CmReport> {
    let hp = semiclassics::hopf_threshold(kappa, gamma)?;
    Ok(CmReport {
        kappa,
        gamma,
        beta_i0h: hp.beta_i0h,
        alpha_i0h: hp.alpha_i0h,
        coefficients: cm_coefficients(kappa, gamma)?,
        d: radial_growth_rate(kappa, gamma)?.d,
        a: lyapunov_coefficient(kappa, gamma)?.a,
        omega_h: hp.omega_h,
        epsilon_h: hp.epsilon_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn denominator_at_unit_kappa() {
        assert_eq!(denominator(1.0, 0.0), 51.0);
    }

    #[test]
    fn tangency_solve_satisfies_equations() {
        for &(k, g) in &[(1.0, 0.0), (1.0, 0.1), (0.5, 0.0), (0.5, 0.5), (3.0, 1.7)] {
            let cm = cm_coefficients(k, g).unwrap();
            assert!(tangency_residual(&cm, k, g).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn printed_forms_match_solve() {
        for &(k, g) in &[(1.0, 0.0), (1.0, 0.1), (0.5, 0.5), (2.0, 0.3), (0.1, 0.05)] {
            let a = cm_coefficients(k, g).unwrap().as_array();
            let b = printed_coefficients(k, g).unwrap().as_array();
            for i in 0..6 {
                assert_relative_eq!(a[i], b[i], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn manifold_is_tangent_and_homogeneous() {
        let cm = cm_coefficients(1.0, 0.1).unwrap();
        assert_eq!(evaluate_manifold(&cm, 0.0, 0.0), (0.0, 0.0));
        // gradient at the origin vanishes
        let h = 1e-7;
        let (a, b) = evaluate_manifold(&cm, h, 0.0);
        assert!(a.abs() / h < 1e-5 && b.abs() / h < 1e-5);
        let (x, y, l) = (0.3, -0.7, 2.5);
        let (p1, p2) = evaluate_manifold(&cm, x, y);
        let (q1, q2) = evaluate_manifold(&cm, l * x, l * y);
        assert_relative_eq!(q1, l * l * p1, max_relative = 1e-14);
        assert_relative_eq!(q2, l * l * p2, max_relative = 1e-14);
    }

    #[test]
    fn transform_inverse_and_rotation() {
        for &(k, g) in &[(1.0, 0.0), (1.0, 0.1), (0.5, 0.5)] {
            let nf = normal_form_transform(k, g).unwrap();
            let id = nf.matrix * nf.inverse;
            assert!((id - Matrix2::identity()).abs().max() < 1e-12);
            let (_, lc, _) = hopf_blocks(k, g).unwrap();
            let rot = nf.inverse * lc * nf.matrix;
            let w = nf.omega_h;
            let expect = Matrix2::new(0.0, -w, w, 0.0);
            assert!((rot - expect).abs().max() < 1e-10, "{rot}");
        }
        let nf = normal_form_transform(1.0, 0.0).unwrap();
        assert!((nf.beta_i0h + 0.353553).abs() < 1e-6);
    }

    #[test]
    fn composition_matches_pointwise_evaluation() {
        let cm = cm_coefficients(1.0, 0.1).unwrap();
        let nf = normal_form_transform(1.0, 0.1).unwrap();
        let field = normal_form_field(&cm, &nf);
        let [f1, f2] = reduced_cubic_field(&cm);
        for &(u, v) in &[(0.3, 0.1), (-0.2, 0.5), (1.0, -1.0)] {
            let (x, y) = nf.from_normal(u, v);
            let (bx, by) = (f1.eval(x, y), f2.eval(x, y));
            let ti = nf.inverse;
            let fu = ti[(0, 0)] * bx + ti[(0, 1)] * by;
            let fv = ti[(1, 0)] * bx + ti[(1, 1)] * by;
            let (eu, ev) = field.eval(u, v);
            assert_relative_eq!(eu + nf.omega_h * v, fu, max_relative = 1e-12);
            assert_relative_eq!(ev - nf.omega_h * u, fv, max_relative = 1e-12);
        }
    }

    #[test]
    fn lyapunov_coefficient_values() {
        let l = lyapunov_coefficient(1.0, 0.0).unwrap();
        assert_relative_eq!(l.a, -33.0 / 68.0, max_relative = 1e-14);
        assert!(l.agrees);
        let l = lyapunov_coefficient(1.0, 0.1).unwrap();
        assert!((l.a - (-0.502801)).abs() < 1e-6, "{}", l.a);
        assert!(l.relative_difference < 1e-10);
    }

    #[test]
    fn growth_rate_values() {
        assert_relative_eq!(radial_growth_rate(1.0, 0.0).unwrap().d, 2.0 * SQRT2 / 3.0);
        assert!((radial_growth_rate(1.0, 0.0).unwrap().d - 0.942809).abs() < 1e-6);
        assert!((radial_growth_rate(1.0, 0.1).unwrap().d - 0.872494).abs() < 1e-6);
    }

    #[test]
    fn trace_derivative_from_fixed_point_branch() {
        for &(k, g) in &[(1.0, 0.0), (1.0, 0.1), (0.5, 0.5)] {
            let eh = semiclassics::hopf_threshold(k, g).unwrap().epsilon_h;
            assert!(center_trace(k, g, eh).unwrap().abs() < 1e-12);
            let h = 1e-6;
            let fd = (center_trace(k, g, eh + h).unwrap() - center_trace(k, g, eh - h).unwrap())
                / (2.0 * h);
            let gr = radial_growth_rate(k, g).unwrap();
            assert!(
                (fd - gr.trace_derivative).abs() < 1e-6,
                "{fd} vs {}",
                gr.trace_derivative
            );
        }
    }

    #[test]
    fn amplitude_routes_agree() {
        let a = amplitude(1.0, 0.0, 0.01).unwrap();
        assert!((a - 0.139383).abs() < 1e-6, "{a}");
        assert_relative_eq!(a, amplitude_small_gamma(1.0, 0.01), max_relative = 1e-14);
        assert!(amplitude(1.0, 0.0, 0.0).is_err());
        assert!(predict_limit_cycle(1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn amplitude_scales_as_square_root() {
        let xs = [1e-6, 1e-5, 1e-4, 1e-3];
        for w in xs.windows(2) {
            let slope = (amplitude(1.0, 0.1, w[1]).unwrap() / amplitude(1.0, 0.1, w[0]).unwrap())
                .ln()
                / (w[1] / w[0]).ln();
            assert_relative_eq!(slope, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn predicted_orbit_geometry() {
        let p = predict_limit_cycle(1.0, 0.1, 0.005).unwrap();
        let nf = normal_form_transform(1.0, 0.1).unwrap();
        let mut max_br: f64 = 0.0;
        for i in 0..360 {
            let y = p.orbit(i as f64 * std::f64::consts::TAU / 360.0);
            let (u, v) = nf.to_normal(y[0], y[2]);
            assert_relative_eq!(u.hypot(v), p.amplitude, max_relative = 1e-12);
            max_br = max_br.max(y[0].abs());
        }
        assert_relative_eq!(max_br, p.beta_r_amplitude(), max_relative = 1e-9);
    }

    #[test]
    fn report_serialises_with_named_coefficients() {
        let r = cm_report(1.0, 0.1).unwrap();
        let v = serde_json::to_value(r).unwrap();
        for key in ["A1", "B1", "C1", "A2", "B2", "C2"] {
            assert!(v["coefficients"][key].is_number());
        }
        for key in [
            "kappa",
            "gamma",
            "beta_i0h",
            "alpha_i0h",
            "d",
            "a",
            "omega_h",
            "epsilon_h",
        ] {
            assert!(v[key].is_number(), "{key}");
        }
    }
}
