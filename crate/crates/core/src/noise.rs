//! Linearized quantum noise below threshold.
//!
//! Fluctuations `δa = (δβ, δβ†, δα, δα†)` about the fixed point obey
//! `dδa/dt = −A δa + D^{1/2} η`, with `A = −M` where `M` is the stability
//! matrix of the doubled phase space. The steady-state spectrum is
//! `S(ω) = (1/2π) (iω + A)⁻¹ D (−iω + Aᵀ)⁻¹`.

use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::SystemParams;
use crate::semiclassics::{self, FixedPoint};

type CMatrix4 = Matrix4<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNoiseModel {
    /// `A` in `dδa/dt = −A δa + …`; real at the fixed point.
    pub drift: Matrix4<f64>,
    /// Diagonal diffusion `(−2χα_i0, −2χα_i0, 0, 0)`.
    pub diffusion: Matrix4<f64>,
    pub fixed_point: FixedPoint,
    pub params: SystemParams,
    pub epsilon_h: f64,
}

/// Relative distance to ε_h below which the linearization is flagged.
pub const MARGINAL_WARN: f64 = 0.01;

/// Drift and diffusion in the doubled space, assembled from the complex
/// fixed point `β_0 = iβ_i0`, `α_0 = iα_i0` and its conjugates.
pub fn complex_matrices(fp: &FixedPoint, p: &SystemParams) -> (CMatrix4, CMatrix4) {
    let i = Complex64::i();
    let chi = p.chi;
    let b0 = Complex64::new(0.0, fp.beta_i0);
    let a0 = Complex64::new(0.0, fp.alpha_i0);
    let z = Complex64::new(0.0, 0.0);
    let g = Complex64::new(-0.5 * p.gamma, 0.0);
    let k = Complex64::new(-0.5 * p.kappa, 0.0);
    let c2 = 2.0 * chi * i;
    #[rustfmt::skip]
    let m = CMatrix4::new(
        g, c2 * a0, c2 * b0.conj(), z,
        -c2 * a0.conj(), g, z, -c2 * b0,
        c2 * b0, z, k, z,
        z, -c2 * b0.conj(), z, k,
    );
    let d = CMatrix4::from_diagonal(&SVector::<Complex64, 4>::new(
        c2 * a0,
        -c2 * a0.conj(),
        z,
        z,
    ));
    (-m, d)
}

fn real_part_checked(m: &CMatrix4, what: &str) -> Result<Matrix4<f64>> {
    let scale = m.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    if m.iter().any(|z| z.im.abs() > 1e-14 * scale) {
        return Err(Error::numerical(format!(
            "{what} is not real at the fixed point"
        )));
    }
    Ok(m.map(|z| z.re))
}

impl LinearNoiseModel {
    /// Linearizes about the fixed point for `params.epsilon`.
    pub fn new(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let unit = params.rescale_to_unit_chi()?;
        let eh_unit = semiclassics::hopf_threshold(unit.kappa, unit.gamma)?.epsilon_h;
        let epsilon_h = eh_unit * params.chi;
        if params.epsilon.abs() >= epsilon_h {
            return Err(Error::domain(format!(
                "epsilon = {} is at or above the Hopf threshold epsilon_h = {epsilon_h}; the linearized spectrum is undefined",
                params.epsilon
            )));
        }
        if params.epsilon.abs() > (1.0 - MARGINAL_WARN) * epsilon_h {
            log::warn!(
                "epsilon = {} is within {}% of epsilon_h = {epsilon_h}; linearization is marginal",
                params.epsilon,
                100.0 * MARGINAL_WARN
            );
        }
        let fp = semiclassics::fixed_point(params)?;
        let (a, d) = complex_matrices(&fp, params);
        Ok(LinearNoiseModel {
            drift: real_part_checked(&a, "drift")?,
            diffusion: real_part_checked(&d, "diffusion")?,
            fixed_point: fp,
            params: *params,
            epsilon_h,
        })
    }

    /// Eigenvalues of `A` (negated Jacobian spectrum).
    pub fn drift_eigenvalues(&self) -> [Complex64; 4] {
        semiclassics::eigenvalues4(&self.drift)
    }

    /// `sqrt(D_ii)` for the two noisy channels.
    pub fn noise_amplitudes(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.diffusion[(i, i)].max(0.0).sqrt())
    }

    pub fn spectrum(&self, omega: f64) -> Result<CMatrix4> {
        spectrum(self, omega)
    }
}

pub fn linear_noise_model(params: &SystemParams, epsilon: f64) -> Result<LinearNoiseModel> {
    LinearNoiseModel::new(&params.with_epsilon(epsilon))
}

/// `S(ω)` by two LU solves: `X = (iω + A)⁻¹ D`, then
/// `S = [(−iω + A)⁻¹ Xᵀ]ᵀ / 2π`.
pub fn spectrum(model: &LinearNoiseModel, omega: f64) -> Result<CMatrix4> {
    let a = model.drift.map(|x| Complex64::new(x, 0.0));
    let d = model.diffusion.map(|x| Complex64::new(x, 0.0));
    let iw = CMatrix4::identity() * Complex64::new(0.0, omega);
    let singular = || Error::numerical(format!("iω + A is singular at omega = {omega}"));
    let x = (iw + a).lu().solve(&d).ok_or_else(singular)?;
    let y = (a - iw).lu().solve(&x.transpose()).ok_or_else(singular)?;
    let s = y.transpose().map(|z| z / std::f64::consts::TAU);
    if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(singular());
    }
    Ok(s)
}

/// `S(ω)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub omega: Vec<f64>,
    pub s: Vec<CMatrix4>,
    pub params: SystemParams,
    pub epsilon: f64,
}

impl SpectrumResult {
    pub fn entry(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.s.iter().map(|m| m[(i, j)]).collect()
    }
}

pub fn spectrum_scan(
    model: &LinearNoiseModel,
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
    exec: Exec,
) -> Result<SpectrumResult> {
    if n_points < 2 {
        return Err(Error::domain("spectrum scan needs at least 2 points"));
    }
    if !(omega_max > omega_min) || !omega_min.is_finite() || !omega_max.is_finite() {
        return Err(Error::domain(format!(
            "invalid omega range [{omega_min}, {omega_max}]"
        )));
    }
    let omega = semiclassics::uniform_times(omega_min, omega_max, n_points);
    let s = exec.try_map(n_points, |k| spectrum(model, omega[k]))?;
    Ok(SpectrumResult {
        omega,
        s,
        params: model.params,
        epsilon: model.params.epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub omega_peak: f64,
    pub height: f64,
    pub fwhm: f64,
}

/// Largest `|S_ij|` at `ω ≥ 0`, refined by a three-point parabola. The
/// width is measured by walking outward from the maximum on the full grid
/// to the first half-height crossings on each side.
pub fn spectral_peak(result: &SpectrumResult, i: usize, j: usize) -> Result<SpectralPeak> {
    if i > 3 || j > 3 {
        return Err(Error::domain(format!(
            "spectrum index ({i}, {j}) out of range"
        )));
    }
    let w = &result.omega;
    let y: Vec<f64> = result.s.iter().map(|m| m[(i, j)].norm()).collect();
    let n = y.len();
    let k = (0..n)
        .filter(|&k| w[k] >= 0.0)
        .max_by(|&a, &b| y[a].total_cmp(&y[b]))
        .ok_or_else(|| Error::domain("spectrum grid has no points with omega >= 0"))?;
    if k == 0 || k == n - 1 {
        return Err(Error::numerical(format!(
            "|S_{i}{j}| is maximal at the grid boundary omega = {}; widen the grid",
            w[k]
        )));
    }
    let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
    let h = w[k + 1] - w[k];
    let den = y0 - 2.0 * y1 + y2;
    let shift = if den < 0.0 {
        0.5 * (y0 - y2) / den
    } else {
        0.0
    };
    let omega_peak = w[k] + shift * h;
    let height = y1 - 0.25 * (y0 - y2) * shift;
    let half = 0.5 * height;
    let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for m in range {
            let prev = (m as isize - step) as usize;
            if y[m] < half {
                let f = (y[prev] - half) / (y[prev] - y[m]);
                return Some(w[prev] + f * (w[m] - w[prev]));
            }
        }
        None
    };
    let right = cross(&mut (k + 1..n), 1);
    let left = cross(&mut (0..k).rev(), -1);
    match (left, right) {
        (Some(l), Some(r)) => Ok(SpectralPeak {
            omega_peak,
            height,
            fwhm: r - l,
        }),
        _ => Err(Error::numerical(format!(
            "half-height crossings of |S_{i}{j}| not on the grid; widen the grid"
        ))),
    }
}

/// Stationary covariance `Σ` solving `AΣ + ΣAᵀ = D`, via the 16×16
/// Kronecker system `(I⊗A + A⊗I) vec Σ = vec D`.
pub fn stationary_covariance(model: &LinearNoiseModel) -> Result<Matrix4<f64>> {
    lyapunov_solve(&model.drift, &model.diffusion)
}

pub fn lyapunov_solve(a: &Matrix4<f64>, d: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let mut k = SMatrix::<f64, 16, 16>::zeros();
    // column-major vec: index(r, c) = r + 4c
    for c in 0..4 {
        for r in 0..4 {
            let row = r + 4 * c;
            for m in 0..4 {
                k[(row, m + 4 * c)] += a[(r, m)];
                k[(row, r + 4 * m)] += a[(c, m)];
            }
        }
    }
    let rhs = SVector::<f64, 16>::from_iterator(d.iter().copied());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("Lyapunov system is singular"))?;
    Ok(Matrix4::from_iterator(x.iter().copied()))
}

/// Analytic phase-diffusion constant on the limit cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiffusion {
    /// `s/(2A²) = 99κ/(272√2 Δε)` with `s = 1/κ`.
    pub exact: f64,
    /// `0.26 κ/Δε`.
    pub rounded: f64,
    /// `99/(272√2)`.
    pub prefactor: f64,
}

pub const ROUNDED_PREFACTOR: f64 = 0.26;

pub fn phase_diffusion_prefactor() -> f64 {
    99.0 / (272.0 * std::f64::consts::SQRT_2)
}

/// `D_φ` for quadrature noise `s` on a circle of radius `A`, under the
/// convention `Var φ(t) = D_φ t`.
pub fn phase_diffusion_from(s: f64, amplitude: f64) -> f64 {
    s / (2.0 * amplitude * amplitude)
}

pub fn phase_diffusion_constant(
    kappa: f64,
    gamma: f64,
    delta_epsilon: f64,
) -> Result<PhaseDiffusion> {
    if !(kappa > 0.0) {
        return Err(Error::domain(format!("kappa must be > 0, got {kappa}")));
    }
    if !(delta_epsilon > 0.0) || !delta_epsilon.is_finite() {
        return Err(Error::domain(format!(
            "delta_epsilon must be > 0, got {delta_epsilon}"
        )));
    }
    if gamma > 0.1 * kappa {
        log::warn!(
            "gamma = {gamma} > 0.1·kappa; the phase-diffusion estimate assumes kappa >> gamma"
        );
    }
    let prefactor = phase_diffusion_prefactor();
    Ok(PhaseDiffusion {
        exact: prefactor * kappa / delta_epsilon,
        rounded: ROUNDED_PREFACTOR * kappa / delta_epsilon,
        prefactor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::center_manifold::amplitude_small_gamma;
    use approx::assert_relative_eq;

    fn model(eps: f64) -> LinearNoiseModel {
        LinearNoiseModel::new(&SystemParams::scaled(1.0, 0.1, eps).unwrap()).unwrap()
    }

    fn max_norm(m: &CMatrix4) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn empty_cavity() {
        let m = model(0.0);
        assert_eq!(
            m.drift,
            Matrix4::from_diagonal(&SVector::<f64, 4>::new(0.05, 0.05, 0.5, 0.5))
        );
        assert_eq!(m.diffusion, Matrix4::zeros());
        let s = spectrum(&m, 0.3).unwrap();
        assert!(s.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn diffusion_entries() {
        let m = model(0.13);
        assert!(
            (m.diffusion[(0, 0)] - 0.374740).abs() < 1e-5,
            "{}",
            m.diffusion[(0, 0)]
        );
        assert_eq!(m.diffusion[(0, 0)], m.diffusion[(1, 1)]);
        assert_eq!(m.diffusion[(2, 2)], 0.0);
    }

    #[test]
    fn drift_spectrum_is_negated_jacobian_spectrum() {
        for &eps in &[0.01, 0.05, 0.13, 0.2] {
            let m = model(eps);
            let p = SystemParams::scaled(1.0, 0.1, eps).unwrap();
            let jac = semiclassics::stability(&m.fixed_point, &p).eigenvalues;
            let mut a: Vec<Complex64> = m.drift_eigenvalues().iter().map(|z| -z).collect();
            let mut b = jac.to_vec();
            let key = |z: &Complex64| {
                (z.re * 1e9).round() as i64 * 1_000_000 + (z.im * 1e6).round() as i64
            };
            a.sort_by_key(key);
            b.sort_by_key(key);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-9, "{x} vs {y}");
            }
            assert!(m.drift_eigenvalues().iter().all(|z| z.re > 0.0));
        }
    }

    #[test]
    fn above_threshold_rejected() {
        let eh = semiclassics::hopf_threshold(1.0, 0.1).unwrap().epsilon_h;
        let p = SystemParams::scaled(1.0, 0.1, 0.0).unwrap();
        assert!(matches!(linear_noise_model(&p, eh), Err(Error::Domain(_))));
        assert!(linear_noise_model(&p, 0.99 * eh).is_ok());
    }

    #[test]
    fn general_chi_threshold() {
        // χ = 2 halves the drive threshold
        let eh = semiclassics::hopf_threshold(1.0, 0.1).unwrap().epsilon_h;
        let p = SystemParams::new(1.0, 0.1, 2.0, 0.49 * eh).unwrap();
        assert!(LinearNoiseModel::new(&p).is_ok());
        assert!(LinearNoiseModel::new(&p.with_epsilon(0.5 * eh)).is_err());
    }

    #[test]
    fn spectrum_matches_explicit_inverse() {
        let m = model(0.13);
        for &w in &[-1.0, 0.0, 0.45, 2.0] {
            let a = m.drift.map(|x| Complex64::new(x, 0.0));
            let d = m.diffusion.map(|x| Complex64::new(x, 0.0));
            let g = (a + CMatrix4::identity() * Complex64::new(0.0, w))
                .try_inverse()
                .unwrap();
            let expect = (g * d * g.adjoint()).map(|z| z / std::f64::consts::TAU);
            let s = spectrum(&m, w).unwrap();
            assert!(max_norm(&(s - expect)) < 1e-12);
            assert!(s[(2, 2)].im.abs() < 1e-14 && s[(2, 2)].re >= 0.0);
        }
    }

    #[test]
    fn negative_frequency_is_conjugate_transpose_consistent() {
        let m = model(0.05);
        for &w in &[0.1, 0.7, 1.9] {
            let a = spectrum(&m, w).unwrap();
            let b = spectrum(&m, -w).unwrap();
            assert!(max_norm(&(b - a.transpose())) < 1e-12);
            assert!(max_norm(&(a.adjoint() - a)) < 1e-12);
        }
    }

    #[test]
    fn rolloff() {
        let m = model(0.13);
        let peak = spectral_peak(
            &spectrum_scan(&m, -2.0, 2.0, 2001, Exec::Sequential).unwrap(),
            2,
            2,
        )
        .unwrap()
        .height;
        let far = spectrum(&m, 100.0).unwrap();
        assert!(far.iter().all(|z| z.norm() <= 1e-3 * peak));
        let (s1, s2) = (
            spectrum(&m, 10.0).unwrap()[(2, 2)].re,
            spectrum(&m, 100.0).unwrap()[(2, 2)].re,
        );
        assert!((s1 / s2).log10() >= 1.9);
    }

    #[test]
    fn peak_near_hopf_frequency() {
        let eh = semiclassics::hopf_threshold(1.0, 0.1).unwrap().epsilon_h;
        let r = spectrum_scan(&model(0.995 * eh), 0.0, 2.0, 4001, Exec::Sequential);
        // maximum on the positive grid; scan starts at 0 so the interior check applies
        let p = spectral_peak(&r.unwrap(), 2, 2).unwrap();
        assert!(
            (p.omega_peak - 0.547723).abs() / 0.547723 < 0.02,
            "{}",
            p.omega_peak
        );
    }

    #[test]
    fn boundary_maximum_is_an_error() {
        let r = spectrum_scan(&model(0.01), 0.0, 2.0, 201, Exec::Sequential).unwrap();
        assert!(spectral_peak(&r, 2, 2).is_err());
        let r = spectrum_scan(&model(0.01), -2.0, 2.0, 201, Exec::Sequential).unwrap();
        assert_eq!(spectral_peak(&r, 2, 2).unwrap().omega_peak, 0.0);
    }

    #[test]
    fn scan_is_strategy_independent() {
        let m = model(0.05);
        let a = spectrum_scan(&m, -2.0, 2.0, 101, Exec::Sequential).unwrap();
        let b = spectrum_scan(&m, -2.0, 2.0, 101, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let m = model(0.13);
        let s = stationary_covariance(&m).unwrap();
        let r = m.drift * s + s * m.drift.transpose() - m.diffusion;
        assert!(r.abs().max() < 1e-12);
        assert!((s - s.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn lyapunov_scalar_case() {
        // dx = −a x dt + sqrt(d) dW has variance d/(2a)
        let a = Matrix4::from_diagonal(&SVector::<f64, 4>::new(0.5, 1.0, 2.0, 4.0));
        let d = Matrix4::from_diagonal(&SVector::<f64, 4>::new(1.0, 1.0, 1.0, 0.0));
        let s = lyapunov_solve(&a, &d).unwrap();
        assert_relative_eq!(s[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(s[(2, 2)], 0.25, epsilon = 1e-14);
        assert_eq!(s[(3, 3)], 0.0);
    }

    #[test]
    fn phase_diffusion_values() {
        let p = phase_diffusion_constant(1.0, 0.0, 0.05).unwrap();
        assert!((p.exact - 5.1474).abs() < 1e-3, "{}", p.exact);
        assert!((p.rounded - 5.2).abs() < 1e-12);
        assert!((p.prefactor - 0.25737).abs() < 1e-5);
        for de in [0.01, 0.02, 0.05] {
            let q = phase_diffusion_constant(1.0, 0.0, de).unwrap();
            assert_relative_eq!(q.exact * de, p.prefactor, max_relative = 1e-14);
            let a = amplitude_small_gamma(1.0, de);
            assert_relative_eq!(phase_diffusion_from(1.0, a), q.exact, max_relative = 1e-12);
        }
        assert!(phase_diffusion_constant(1.0, 0.0, 0.0).is_err());
    }
}
