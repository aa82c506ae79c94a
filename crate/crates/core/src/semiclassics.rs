//! Semiclassical dynamics: vector field, integration, the fixed point and
//! its stability, the Hopf point, and limit-cycle detection.
//!
//! Real coordinates are ordered `(β_r, β_i, α_r, α_i)` throughout.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SemiclassicalState, SystemParams};
use crate::ode::{self, OdeOptions};

/// Eigenvalues with `|Re λ|` below this are treated as marginal.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Right-hand side of the real-form equations of motion.
///
/// With χ = 1 this is
/// `β̇_r = 2(β_i α_r − β_r α_i) − γβ_r/2`,
/// `β̇_i = 2(β_r α_r + β_i α_i) − γβ_i/2 − ε`,
/// `α̇_r = −2β_r β_i − κα_r/2`,
/// `α̇_i = β_r² − β_i² − κα_i/2`;
/// a general χ multiplies the interaction terms.
#[inline]
pub fn vector_field(y: &[f64; 4], p: &SystemParams) -> [f64; 4] {
    let [br, bi, ar, ai] = *y;
    let c = p.chi;
    let hg = 0.5 * p.gamma;
    let hk = 0.5 * p.kappa;
    [
        2.0 * c * (bi * ar - br * ai) - hg * br,
        2.0 * c * (br * ar + bi * ai) - hg * bi - p.epsilon,
        -2.0 * c * br * bi - hk * ar,
        c * (br * br - bi * bi) - hk * ai,
    ]
}

/// Complex form: `α̇ = iχβ² − κα/2`, `β̇ = 2iχβ*α − iε − γβ/2`.
pub fn complex_vector_field(s: &SemiclassicalState, p: &SystemParams) -> SemiclassicalState {
    let i = Complex64::i();
    let alpha_dot = i * p.chi * s.beta * s.beta - 0.5 * p.kappa * s.alpha;
    let beta_dot =
        2.0 * i * p.chi * s.beta.conj() * s.alpha - i * p.epsilon - 0.5 * p.gamma * s.beta;
    SemiclassicalState::new(alpha_dot, beta_dot)
}

/// Analytic Jacobian of [`vector_field`] at an arbitrary state.
pub fn jacobian_at(y: &[f64; 4], p: &SystemParams) -> Matrix4<f64> {
    let [br, bi, ar, ai] = *y;
    let c = p.chi;
    let hg = 0.5 * p.gamma;
    let hk = 0.5 * p.kappa;
    Matrix4::new(
        -2.0 * c * ai - hg,
        2.0 * c * ar,
        2.0 * c * bi,
        -2.0 * c * br,
        2.0 * c * ar,
        2.0 * c * ai - hg,
        2.0 * c * br,
        2.0 * c * bi,
        -2.0 * c * bi,
        -2.0 * c * br,
        -hk,
        0.0,
        2.0 * c * br,
        -2.0 * c * bi,
        0.0,
        -hk,
    )
}

/// Sampled solution of the semiclassical equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Real views `(β_r, β_i, α_r, α_i)`.
    pub states: Vec<[f64; 4]>,
    pub params: SystemParams,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<[f64; 4]>, params: SystemParams) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::domain("times and states differ in length"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "trajectory times must be strictly increasing",
            ));
        }
        Ok(Trajectory {
            times,
            states,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> SemiclassicalState {
        SemiclassicalState::from_real(self.states[i])
    }

    pub fn last(&self) -> Option<[f64; 4]> {
        self.states.last().copied()
    }

    /// Hermite interpolation between samples `i` and `i + 1`, using the
    /// vector field for the endpoint derivatives.
    pub fn interpolate(&self, i: usize, t: f64) -> [f64; 4] {
        let (y0, y1) = (&self.states[i], &self.states[i + 1]);
        let f0 = vector_field(y0, &self.params);
        let f1 = vector_field(y1, &self.params);
        ode::hermite(self.times[i], y0, &f0, self.times[i + 1], y1, &f1, t)
    }
}

/// Integrates from `state0` at `sample_times[0]`, reporting the state at
/// every sample time.
pub fn integrate(
    state0: [f64; 4],
    params: &SystemParams,
    sample_times: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory> {
    params.validate_dynamics()?;
    let Some(&t0) = sample_times.first() else {
        return Err(Error::domain("at least one sample time is required"));
    };
    let p = *params;
    let states = ode::solve_at(|_, y| vector_field(y, &p), t0, state0, sample_times, opts)?;
    Trajectory::new(sample_times.to_vec(), states, p)
}

/// `n` uniformly spaced samples over `[t0, t1]`.
pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => {
            let dt = (t1 - t0) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { t1 } else { t0 + dt * i as f64 })
                .collect()
        }
    }
}

/// The unique equilibrium `(0, β_i0, 0, α_i0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub beta_i0: f64,
    pub alpha_i0: f64,
    /// `|(4/κ)β_i0³ + (γ/2)β_i0 + ε|` in χ = 1 units.
    pub residual: f64,
}

impl FixedPoint {
    pub fn state(&self) -> [f64; 4] {
        [0.0, self.beta_i0, 0.0, self.alpha_i0]
    }
}

/// Left side of `(4/κ)x³ + (γ/2)x + ε = 0` (χ = 1 units).
pub fn fixed_point_cubic(x: f64, kappa: f64, gamma: f64, epsilon: f64) -> f64 {
    4.0 / kappa * x * x * x + 0.5 * gamma * x + epsilon
}

/// Solves the fixed-point cubic by Newton iteration safeguarded with
/// bisection. General χ is handled by rescaling; the fixed point itself is
/// invariant under the time rescaling.
pub fn fixed_point(params: &SystemParams) -> Result<FixedPoint> {
    params.validate()?;
    let s = params.rescale_to_unit_chi()?;
    let (kappa, gamma, eps) = (s.kappa, s.gamma, s.epsilon);
    if eps == 0.0 {
        return Ok(FixedPoint {
            beta_i0: 0.0,
            alpha_i0: 0.0,
            residual: 0.0,
        });
    }
    // odd cubic: solve for |ε| and reflect
    let sign = eps.signum();
    let e = eps.abs();
    let lead = 4.0 / kappa;
    let lin = 0.5 * gamma;
    // uniqueness of the real root needs a strictly monotone cubic
    assert!(
        lead > 0.0 && lin >= 0.0,
        "fixed-point cubic is not monotone"
    );

    let g = |x: f64| lead * x * x * x + lin * x + e;
    let dg = |x: f64| 3.0 * lead * x * x + lin;
    let mut lo = -(1.0f64).max((kappa * e).cbrt());
    let mut hi = 0.0;
    if !(g(lo) <= 0.0 && g(hi) > 0.0) {
        return Err(Error::numerical(
            "fixed-point cubic bracket lost its sign change",
        ));
    }
    let mut x = -(kappa * e / 4.0).cbrt().min(-lo);
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            break;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = dg(x);
        let newton = if d > 0.0 { x - gx / d } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            x = next;
            break;
        }
        x = next;
    }
    let beta_i0 = sign * x;
    let alpha_i0 = -2.0 * beta_i0 * beta_i0 / kappa;
    Ok(FixedPoint {
        beta_i0,
        alpha_i0,
        residual: fixed_point_cubic(beta_i0, kappa, gamma, eps).abs(),
    })
}

/// Linearisation at the fixed point.
pub fn jacobian(fp: &FixedPoint, params: &SystemParams) -> Matrix4<f64> {
    jacobian_at(&fp.state(), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Every eigenvalue has negative real part.
    Stable,
    /// A pair sits on the imaginary axis (within [`MARGINAL_TOL`]).
    HopfMarginal,
    /// A pair has crossed: the orbit regime.
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Sorted by decreasing real part, then decreasing imaginary part.
    pub eigenvalues: [Complex64; 4],
    pub classification: Classification,
    pub max_real_part: f64,
}

impl StabilityReport {
    pub fn from_eigenvalues(mut ev: [Complex64; 4]) -> Self {
        ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        let max_real_part = ev[0].re;
        let classification = if max_real_part.abs() < MARGINAL_TOL {
            Classification::HopfMarginal
        } else if max_real_part < 0.0 {
            Classification::Stable
        } else {
            Classification::Unstable
        };
        StabilityReport {
            eigenvalues: ev,
            classification,
            max_real_part,
        }
    }
}

/// Eigenvalues of a real 4×4 matrix via nalgebra's real Schur form.
pub fn eigenvalues4(m: &Matrix4<f64>) -> [Complex64; 4] {
    let ev = m.complex_eigenvalues();
    [ev[0], ev[1], ev[2], ev[3]]
}

fn eig2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    let half = 0.5 * tr;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [Complex64::new(half + r, 0.0), Complex64::new(half - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [Complex64::new(half, r), Complex64::new(half, -r)]
    }
}

/// Stability from the general eigen-solver.
pub fn stability(fp: &FixedPoint, params: &SystemParams) -> StabilityReport {
    StabilityReport::from_eigenvalues(eigenvalues4(&jacobian(fp, params)))
}

/// At the fixed point the Jacobian decouples into a `(β_r, α_r)` block and
/// a `(β_i, α_i)` block; this route diagonalises the two 2×2 blocks in
/// closed form. Returns `[center block pair, stable block pair]`.
pub fn block_eigenvalues(fp: &FixedPoint, params: &SystemParams) -> [[Complex64; 2]; 2] {
    let j = jacobian(fp, params);
    let real = Matrix2::new(j[(0, 0)], j[(0, 2)], j[(2, 0)], j[(2, 2)]);
    let imag = Matrix2::new(j[(1, 1)], j[(1, 3)], j[(3, 1)], j[(3, 3)]);
    [eig2(&real), eig2(&imag)]
}

/// The Hopf point of the fixed-point branch (χ = 1 units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub kappa: f64,
    pub gamma: f64,
    pub epsilon_h: f64,
    pub beta_i0h: f64,
    pub alpha_i0h: f64,
    pub omega_h: f64,
}

impl HopfPoint {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            kappa: self.kappa,
            gamma: self.gamma,
            chi: 1.0,
            epsilon: self.epsilon_h,
            nbar: 0.0,
        }
    }

    pub fn fixed_point(&self) -> FixedPoint {
        FixedPoint {
            beta_i0: self.beta_i0h,
            alpha_i0: self.alpha_i0h,
            residual: fixed_point_cubic(self.beta_i0h, self.kappa, self.gamma, self.epsilon_h)
                .abs(),
        }
    }
}

pub(crate) fn check_rates(kappa: f64, gamma: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::domain(format!("kappa must be > 0, got {kappa}")));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Closed-form Hopf threshold
/// `ε_h = sqrt(κ(κ+γ)) (κ+2γ) / (4√2)`, reached where `α_i0 = −(κ+γ)/4`.
pub fn hopf_threshold(kappa: f64, gamma: f64) -> Result<HopfPoint> {
    check_rates(kappa, gamma)?;
    let root = (kappa * (kappa + gamma)).sqrt();
    Ok(HopfPoint {
        kappa,
        gamma,
        epsilon_h: root * (kappa + 2.0 * gamma) / (4.0 * std::f64::consts::SQRT_2),
        beta_i0h: -(kappa * (kappa + gamma) / 8.0).sqrt(),
        alpha_i0h: -(kappa + gamma) / 4.0,
        omega_h: hopf_frequency(kappa, gamma)?,
    })
}

/// Frequency of the orbit born at the Hopf point, `sqrt(κ(κ+2γ))/2`.
pub fn hopf_frequency(kappa: f64, gamma: f64) -> Result<f64> {
    check_rates(kappa, gamma)?;
    Ok((kappa * (kappa + 2.0 * gamma)).sqrt() / 2.0)
}

/// Largest real part of the Jacobian spectrum at the fixed point for drive
/// `epsilon`, from the general eigen-solver.
pub fn leading_real_part(kappa: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    let p = SystemParams::scaled(kappa, gamma, epsilon)?;
    let fp = fixed_point(&p)?;
    Ok(stability(&fp, &p).max_real_part)
}

/// Locates the Hopf threshold numerically: brackets the sign change of the
/// leading eigenvalue real part in ε and bisects to `tol`.
pub fn locate_hopf_by_bisection(kappa: f64, gamma: f64, tol: f64) -> Result<f64> {
    check_rates(kappa, gamma)?;
    let f = |e: f64| leading_real_part(kappa, gamma, e);
    let mut lo = 1e-6 * kappa * kappa;
    if f(lo)? >= 0.0 {
        return Err(Error::numerical("fixed point unstable at vanishing drive"));
    }
    let mut hi = 2.0 * lo;
    let mut guard = 0;
    while f(hi)? <= 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::numerical("no stability change found"));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Summary of a numerically detected periodic orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleMeasurement {
    /// Mean interval between section crossings; `None` without a cycle.
    pub period: Option<f64>,
    /// Half peak-to-peak of `β_r` after the transient.
    pub amplitude_beta_r: f64,
    /// Half peak-to-peak of `α_r` after the transient.
    pub amplitude_alpha_r: f64,
    pub mean_beta_i: f64,
    pub mean_alpha_i: f64,
    pub crossings: usize,
    pub converged: bool,
}

/// A crossing of the section `β_r = 0` with `α_r` increasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionCrossing {
    pub time: f64,
    pub state: [f64; 4],
}

pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.5;
const CONVERGENCE_TOL: f64 = 1e-4;

/// Section crossings in samples `first..`, located by bisection on the
/// Hermite interpolant.
pub fn section_crossings(traj: &Trajectory, first: usize) -> Vec<SectionCrossing> {
    let mut out = Vec::new();
    for i in first..traj.len().saturating_sub(1) {
        let (b0, b1) = (traj.states[i][0], traj.states[i + 1][0]);
        if !(b0 < 0.0 && b1 >= 0.0) && !(b0 > 0.0 && b1 <= 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (traj.times[i], traj.times[i + 1]);
        let rising = b1 > b0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = traj.interpolate(i, mid)[0];
            if (v < 0.0) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let state = traj.interpolate(i, t);
        if vector_field(&state, &traj.params)[2] > 0.0 {
            out.push(SectionCrossing { time: t, state });
        }
    }
    out
}

/// Measures a limit cycle on the post-transient part of `traj`.
///
/// A period is reported when the section is crossed at least three times
/// without the oscillation decaying. The orbit counts as converged when
/// consecutive crossing points also agree to 1e-4 relative to the
/// oscillation size.
pub fn detect_limit_cycle(
    traj: &Trajectory,
    transient_fraction: f64,
) -> Result<LimitCycleMeasurement> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::domain("transient fraction must lie in [0, 1)"));
    }
    if traj.len() < 3 {
        return Err(Error::domain("trajectory too short"));
    }
    let t0 = traj.times[0];
    let t_cut = t0 + transient_fraction * (traj.times[traj.len() - 1] - t0);
    let first = traj.times.partition_point(|&t| t < t_cut);
    let tail = &traj.states[first..];

    let (mut min_br, mut max_br, mut min_ar, mut max_ar) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for y in tail {
        min_br = min_br.min(y[0]);
        max_br = max_br.max(y[0]);
        min_ar = min_ar.min(y[2]);
        max_ar = max_ar.max(y[2]);
    }
    let amplitude_beta_r = 0.5 * (max_br - min_br);
    let amplitude_alpha_r = 0.5 * (max_ar - min_ar);

    let crossings = section_crossings(traj, first);
    let n = tail.len() as f64;
    let mut meas = LimitCycleMeasurement {
        period: None,
        amplitude_beta_r,
        amplitude_alpha_r,
        mean_beta_i: tail.iter().map(|y| y[1]).sum::<f64>() / n,
        mean_alpha_i: tail.iter().map(|y| y[3]).sum::<f64>() / n,
        crossings: crossings.len(),
        converged: false,
    };
    if crossings.len() < 3 || amplitude_beta_r < 1e-9 {
        return Ok(meas);
    }

    // average β_i, α_i over whole periods only
    let (ta, tb) = (crossings[0].time, crossings[crossings.len() - 1].time);
    let (mut sb, mut sa, mut w) = (0.0, 0.0, 0.0);
    for i in first..traj.len() - 1 {
        let (t0, t1) = (traj.times[i].max(ta), traj.times[i + 1].min(tb));
        if t1 <= t0 {
            continue;
        }
        let (y0, y1) = (traj.states[i], traj.states[i + 1]);
        let dt = t1 - t0;
        sb += 0.5 * (y0[1] + y1[1]) * dt;
        sa += 0.5 * (y0[3] + y1[3]) * dt;
        w += dt;
    }
    if w > 0.0 {
        meas.mean_beta_i = sb / w;
        meas.mean_alpha_i = sa / w;
    }

    // a spiral into the fixed point also crosses the section; require the
    // oscillation to persist across the window
    let osc = |c: &SectionCrossing| c.state[0].hypot(c.state[2]);
    if osc(&crossings[crossings.len() - 1]) < 0.5 * osc(&crossings[0]) {
        return Ok(meas);
    }
    let intervals = crossings.len() - 1;
    meas.period = Some((tb - ta) / intervals as f64);
    meas.converged = crossings.windows(2).all(|c| {
        let d: f64 = (0..4)
            .map(|k| (c[1].state[k] - c[0].state[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        d <= CONVERGENCE_TOL * osc(&c[1])
    });
    Ok(meas)
}
