//! Monte-Carlo checks of the linear noise model and of phase diffusion on
//! the limit cycle.
//!
//! Every ensemble member draws from its own ChaCha8 stream: the run seed
//! selects the key and the member index selects the stream, so a path is a
//! pure function of `(seed, index)` and ensembles are identical whichever
//! [`Exec`] strategy runs them.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::center_manifold::{self, NormalFormTransform};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::SystemParams;
use crate::noise::LinearNoiseModel;
use crate::semiclassics::{self, vector_field};

/// Bound on `dt · max|eig|` for the explicit schemes.
pub const STABILITY_GUARD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub dt: f64,
    /// Steps recorded after the burn-in.
    pub n_steps: usize,
    pub n_ensemble: usize,
    pub seed: u64,
    /// Time discarded before recording.
    pub burn_in: f64,
}

impl SdeConfig {
    /// `min(0.01/ω_h, 0.05/rate)`.
    pub fn default_dt(omega_h: f64, rate: f64) -> f64 {
        (0.01 / omega_h).min(STABILITY_GUARD / rate)
    }

    /// Checks `dt · rate ≤ 0.05` and basic sanity.
    pub fn check(&self, rate: f64) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps == 0 || self.n_ensemble == 0 {
            return Err(Error::config("n_steps and n_ensemble must be positive"));
        }
        if !(self.burn_in >= 0.0) {
            return Err(Error::config(format!(
                "burn_in must be >= 0, got {}",
                self.burn_in
            )));
        }
        if self.dt * rate > STABILITY_GUARD * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "dt = {} violates the stability guard dt·max|eig| <= {STABILITY_GUARD} (max|eig| = {rate})",
                self.dt
            )));
        }
        Ok(())
    }

    fn burn_steps(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }
}

/// Random stream for ensemble member `member`.
pub fn member_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}

fn max_abs_eig(m: &Matrix4<f64>) -> f64 {
    semiclassics::eigenvalues4(m)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Hopf frequency in the units of `p` (rates scale with χ).
fn physical_omega_h(p: &SystemParams) -> Result<f64> {
    let u = p.rescale_to_unit_chi()?;
    Ok(semiclassics::hopf_frequency(u.kappa, u.gamma)? * p.chi)
}

impl LinearNoiseModel {
    /// `max|eig A|`, the rate entering the stability guard.
    pub fn stiffness(&self) -> f64 {
        max_abs_eig(&self.drift)
    }

    pub fn default_dt(&self) -> Result<f64> {
        Ok(SdeConfig::default_dt(
            physical_omega_h(&self.params)?,
            self.stiffness(),
        ))
    }
}

/// One recorded path of `δa`, real-valued because `A` and `D` are real.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    pub dt: f64,
    pub states: Vec<[f64; 4]>,
}

impl LinearPath {
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|y| y[i]).collect()
    }
}

/// Euler–Maruyama for `dδa = −A δa dt + D^{1/2} dW` from `δa = 0`,
/// recording every step after the burn-in.
pub fn simulate_linear_path(
    model: &LinearNoiseModel,
    config: &SdeConfig,
    member: u64,
) -> LinearPath {
    let mut states = Vec::with_capacity(config.n_steps);
    run_linear_path(model, config, member, |y| states.push(*y));
    LinearPath {
        dt: config.dt,
        states,
    }
}

fn run_linear_path(
    model: &LinearNoiseModel,
    config: &SdeConfig,
    member: u64,
    mut record: impl FnMut(&[f64; 4]),
) {
    let a: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| model.drift[(i, j)]));
    let sq = model.noise_amplitudes();
    let dt = config.dt;
    let kick: [f64; 4] = std::array::from_fn(|i| sq[i] * dt.sqrt());
    let mut rng = member_rng(config.seed, member);
    let mut y = [0.0f64; 4];
    let burn = config.burn_steps();
    for n in 0..burn + config.n_steps {
        let mut next = y;
        for i in 0..4 {
            let drift: f64 = (0..4).map(|j| a[i][j] * y[j]).sum();
            next[i] -= drift * dt;
            if kick[i] != 0.0 {
                let xi: f64 = rng.sample(StandardNormal);
                next[i] += kick[i] * xi;
            }
        }
        y = next;
        if n >= burn {
            record(&y);
        }
    }
}

/// Full ensemble of paths; memory grows as `n_ensemble · n_steps`.
pub fn simulate_linear_sde(
    model: &LinearNoiseModel,
    config: &SdeConfig,
    exec: Exec,
) -> Result<Vec<LinearPath>> {
    config.check(model.stiffness())?;
    Ok(exec.map(config.n_ensemble, |m| {
        simulate_linear_path(model, config, m as u64)
    }))
}

/// Averaged Hann-windowed periodogram, two-sided `1/2π` normalisation:
/// `S(ω_k) = dt |Σ w_n x_n e^{−iω_k n dt}|² / (2π Σ w_n²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    /// Non-negative frequencies `2πk/(N dt)`, `k = 0..=N/2`.
    pub omega: Vec<f64>,
    pub s: Vec<f64>,
    pub n_segments: usize,
}

impl Psd {
    /// Index of the grid point nearest `omega`.
    pub fn nearest(&self, omega: f64) -> usize {
        let dw = self.omega[1] - self.omega[0];
        ((omega / dw).round().max(0.0) as usize).min(self.omega.len() - 1)
    }

    pub fn argmax(&self) -> usize {
        (0..self.s.len())
            .max_by(|&a, &b| self.s[a].total_cmp(&self.s[b]))
            .unwrap_or(0)
    }
}

/// Streaming accumulator for [`Psd`]; segments must share a length.
pub struct PsdAccumulator {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    dt: f64,
    sum: Vec<f64>,
    count: usize,
}

/// Segments must cover this many periods of the reference frequency.
pub const MIN_PERIODS: f64 = 16.0;

impl PsdAccumulator {
    pub fn new(len: usize, dt: f64, reference_omega: f64) -> Result<Self> {
        if len < 4 || !(dt > 0.0) {
            return Err(Error::domain(
                "periodogram needs at least 4 samples and dt > 0",
            ));
        }
        let need = MIN_PERIODS * TAU / reference_omega;
        if (len as f64) * dt < need {
            return Err(Error::domain(format!(
                "segment of length {} is shorter than {MIN_PERIODS} periods of omega = {reference_omega} ({need})",
                len as f64 * dt
            )));
        }
        let window: Vec<f64> = (0..len)
            .map(|n| 0.5 - 0.5 * (TAU * n as f64 / len as f64).cos())
            .collect();
        let norm = dt / (TAU * window.iter().map(|w| w * w).sum::<f64>());
        Ok(PsdAccumulator {
            fft: FftPlanner::new().plan_fft_forward(len),
            window,
            norm,
            dt,
            sum: vec![0.0; len / 2 + 1],
            count: 0,
        })
    }

    /// Periodogram of one segment, without accumulating.
    pub fn periodogram(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.window.len(), "segment length mismatch");
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(&self.window)
            .map(|(v, w)| Complex64::new(v * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..self.sum.len()]
            .iter()
            .map(|z| self.norm * z.norm_sqr())
            .collect()
    }

    pub fn add(&mut self, x: &[f64]) {
        let p = self.periodogram(x);
        self.add_periodogram(&p);
    }

    pub fn add_periodogram(&mut self, p: &[f64]) {
        for (s, v) in self.sum.iter_mut().zip(p) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn finish(&self) -> Psd {
        let len = self.window.len();
        let dw = TAU / (len as f64 * self.dt);
        Psd {
            omega: (0..self.sum.len()).map(|k| k as f64 * dw).collect(),
            s: self
                .sum
                .iter()
                .map(|s| s / self.count.max(1) as f64)
                .collect(),
            n_segments: self.count,
        }
    }
}

/// Averaged periodogram of equal-length real segments.
pub fn estimate_psd(paths: &[Vec<f64>], dt: f64, reference_omega: f64) -> Result<Psd> {
    let len = paths
        .first()
        .map(|p| p.len())
        .ok_or_else(|| Error::domain("no paths supplied"))?;
    if paths.iter().any(|p| p.len() != len) {
        return Err(Error::domain("paths must share a length"));
    }
    let mut acc = PsdAccumulator::new(len, dt, reference_omega)?;
    for p in paths {
        acc.add(p);
    }
    Ok(acc.finish())
}

/// Ensemble statistics of the linear SDE gathered without storing paths.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSdeStats {
    /// Time- and ensemble-averaged `⟨δa δaᵀ⟩` after the burn-in.
    pub covariance: Matrix4<f64>,
    /// Averaged periodogram of the requested component, if any.
    pub psd: Option<Psd>,
    pub n_members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdRequest {
    pub component: usize,
    /// Record every `stride`-th step for the periodogram.
    pub stride: usize,
}

const CHUNK: usize = 256;

pub fn linear_sde_statistics(
    model: &LinearNoiseModel,
    config: &SdeConfig,
    psd: Option<PsdRequest>,
    exec: Exec,
) -> Result<LinearSdeStats> {
    config.check(model.stiffness())?;
    let omega_h = physical_omega_h(&model.params)?;
    let mut acc = match psd {
        Some(r) => {
            if r.component > 3 || r.stride == 0 {
                return Err(Error::config("invalid PSD component or stride"));
            }
            Some(PsdAccumulator::new(
                config.n_steps / r.stride,
                config.dt * r.stride as f64,
                omega_h,
            )?)
        }
        None => None,
    };
    let mut cov = Matrix4::zeros();
    let mut start = 0;
    while start < config.n_ensemble {
        let end = (start + CHUNK).min(config.n_ensemble);
        let chunk = exec.map(end - start, |k| {
            let mut c = Matrix4::<f64>::zeros();
            let mut series = Vec::new();
            let mut n = 0usize;
            run_linear_path(model, config, (start + k) as u64, |y| {
                for i in 0..4 {
                    for j in 0..4 {
                        c[(i, j)] += y[i] * y[j];
                    }
                }
                if let Some(r) = psd {
                    if n.is_multiple_of(r.stride) {
                        series.push(y[r.component]);
                    }
                }
                n += 1;
            });
            let pg = acc.as_ref().map(|a| {
                series.truncate(config.n_steps / psd.map_or(1, |r| r.stride));
                a.periodogram(&series)
            });
            (c / config.n_steps as f64, pg)
        });
        for (c, pg) in chunk {
            cov += c;
            if let (Some(a), Some(p)) = (acc.as_mut(), pg) {
                a.add_periodogram(&p);
            }
        }
        start = end;
    }
    Ok(LinearSdeStats {
        covariance: cov / config.n_ensemble as f64,
        psd: acc.map(|a| a.finish()),
        n_members: config.n_ensemble,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    /// Radius and phase of the normal form, started on the cycle.
    #[default]
    Planar,
    /// Four-dimensional semiclassical flow with noise in the `(u, v)` plane.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseNoiseOptions {
    pub mode: PhaseMode,
    /// Quadrature noise intensity; each of `u, v` receives `sqrt(s/2) dW`.
    pub s: f64,
    /// Planar mode only: also diffuse the radius.
    pub radial_noise: bool,
    /// Record every `sample_every`-th step.
    pub sample_every: usize,
}

impl PhaseNoiseOptions {
    /// Planar mode with `s = 1/κ`.
    pub fn new(kappa: f64) -> Self {
        PhaseNoiseOptions {
            mode: PhaseMode::Planar,
            s: 1.0 / kappa,
            radial_noise: false,
            sample_every: 5,
        }
    }
}

/// A path whose radius falls below this fraction of `A` is flagged.
pub const COLLAPSE_FRACTION: f64 = 0.01;

/// Unwrapped phases `φ(t) − φ(0)` per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub times: Vec<f64>,
    pub phases: Vec<Vec<f64>>,
    /// Members excluded from statistics (radius collapsed).
    pub flagged: Vec<bool>,
    pub amplitude: f64,
    pub fit: Option<PhaseFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub d_phi: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_effective: usize,
}

impl PhaseRecord {
    fn kept(&self) -> Vec<&Vec<f64>> {
        self.phases
            .iter()
            .zip(&self.flagged)
            .filter(|(_, &f)| !f)
            .map(|(p, _)| p)
            .collect()
    }

    /// `(t, Var φ(t), n_effective)` per sample.
    pub fn variance_curve(&self) -> Vec<(f64, f64, usize)> {
        let kept = self.kept();
        let v = variance_by_time(&kept, self.times.len());
        self.times
            .iter()
            .zip(v)
            .map(|(&t, v)| (t, v, kept.len()))
            .collect()
    }

    /// Runs [`measure_phase_diffusion`] and stores the result.
    pub fn fit(&mut self, seed: u64) -> Result<PhaseFit> {
        let f = measure_phase_diffusion(self, seed)?;
        self.fit = Some(f);
        Ok(f)
    }
}

fn variance_by_time(paths: &[&Vec<f64>], len: usize) -> Vec<f64> {
    let n = paths.len() as f64;
    (0..len)
        .map(|k| {
            let mean = paths.iter().map(|p| p[k]).sum::<f64>() / n;
            paths.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// `D = Σ t V / Σ t²` for `V = D t` through the origin.
fn fit_through_origin(t: &[f64], v: &[f64]) -> (f64, f64) {
    let d = t.iter().zip(v).map(|(t, v)| t * v).sum::<f64>() / t.iter().map(|t| t * t).sum::<f64>();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let ss_tot: f64 = v.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = t.iter().zip(v).map(|(t, v)| (v - d * t).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (d, r2)
}

pub const MIN_MEMBERS: usize = 100;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_R_SQUARED: f64 = 0.9;

/// Least-squares fit of `Var φ(t) = D_φ t` with a member bootstrap for the
/// standard error. `seed` drives the resampling.
pub fn measure_phase_diffusion(record: &PhaseRecord, seed: u64) -> Result<PhaseFit> {
    let kept = record.kept();
    if kept.len() < MIN_MEMBERS {
        return Err(Error::numerical(format!(
            "only {} usable members, need at least {MIN_MEMBERS}",
            kept.len()
        )));
    }
    let len = record.times.len();
    if len < 3 {
        return Err(Error::domain("phase record needs at least 3 samples"));
    }
    let var = variance_by_time(&kept, len);
    // identical members leave only rounding residue in the variance
    let scale = kept
        .iter()
        .flat_map(|p| p.iter())
        .fold(1.0f64, |m, x| m.max(x * x));
    if var.iter().all(|v| *v <= 1e-24 * scale) {
        return Ok(PhaseFit {
            d_phi: 0.0,
            stderr: 0.0,
            r_squared: 1.0,
            n_effective: kept.len(),
        });
    }
    let (d_phi, r_squared) = fit_through_origin(&record.times, &var);
    if r_squared < MIN_R_SQUARED {
        return Err(Error::numerical(format!(
            "phase variance does not grow linearly (R² = {r_squared:.3}); noise is too strong for the cycle"
        )));
    }
    let mut rng = member_rng(seed, u64::MAX);
    let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let sample: Vec<&Vec<f64>> = (0..kept.len())
            .map(|_| kept[rng.random_range(0..kept.len())])
            .collect();
        boots.push(fit_through_origin(&record.times, &variance_by_time(&sample, len)).0);
    }
    let m = boots.iter().sum::<f64>() / boots.len() as f64;
    let stderr =
        (boots.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    Ok(PhaseFit {
        d_phi,
        stderr,
        r_squared,
        n_effective: kept.len(),
    })
}

/// Noisy dynamics on the cycle for `ε = ε_h + Δε` (χ = 1 units).
pub fn simulate_limit_cycle_noise(
    kappa: f64,
    gamma: f64,
    delta_epsilon: f64,
    config: &SdeConfig,
    options: &PhaseNoiseOptions,
    exec: Exec,
) -> Result<PhaseRecord> {
    let pred = center_manifold::predict_limit_cycle(kappa, gamma, delta_epsilon)?;
    if gamma > 0.1 * kappa {
        log::warn!(
            "gamma = {gamma} > 0.1·kappa; phase-diffusion noise model assumes kappa >> gamma"
        );
    }
    if !(options.s >= 0.0) || !options.s.is_finite() {
        return Err(Error::config(format!(
            "noise intensity s must be >= 0, got {}",
            options.s
        )));
    }
    if options.sample_every == 0 {
        return Err(Error::config("sample_every must be positive"));
    }
    let hp = semiclassics::hopf_threshold(kappa, gamma)?;
    let rate = max_abs_eig(&semiclassics::jacobian(&hp.fixed_point(), &hp.params()));
    config.check(rate)?;
    let sample_dt = config.dt * options.sample_every as f64;
    if sample_dt * 8.0 * hp.omega_h / TAU >= 1.0 {
        return Err(Error::config(format!(
            "sampling interval {sample_dt} is too coarse; need more than 8 samples per period"
        )));
    }
    let n_samples = config.n_steps / options.sample_every;
    let times: Vec<f64> = (1..=n_samples).map(|k| k as f64 * sample_dt).collect();
    let nf = center_manifold::normal_form_transform(kappa, gamma)?;
    let d = center_manifold::radial_growth_rate(kappa, gamma)?.d;
    let a = center_manifold::lyapunov_closed_form(kappa, gamma);
    let paths = exec.map(config.n_ensemble, |m| {
        let rng = member_rng(config.seed, m as u64);
        match options.mode {
            PhaseMode::Planar => planar_path(
                rng,
                config,
                options,
                pred.amplitude,
                hp.omega_h,
                d * delta_epsilon,
                a,
            ),
            PhaseMode::Full => full_path(rng, config, options, &pred, &nf),
        }
    });
    let (phases, flagged) = paths.into_iter().unzip();
    Ok(PhaseRecord {
        times,
        phases,
        flagged,
        amplitude: pred.amplitude,
        fit: None,
    })
}

fn planar_path(
    mut rng: ChaCha8Rng,
    config: &SdeConfig,
    options: &PhaseNoiseOptions,
    amp: f64,
    omega: f64,
    growth: f64,
    a: f64,
) -> (Vec<f64>, bool) {
    let dt = config.dt;
    let sig = (0.5 * options.s * dt).sqrt();
    let (mut r, mut phi) = (amp, 0.0f64);
    let mut collapsed = false;
    let burn = config.burn_steps();
    let mut out = Vec::with_capacity(config.n_steps / options.sample_every);
    let mut phi0 = 0.0;
    for n in 0..burn + config.n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        // phase turns clockwise in (u, v)
        phi += -omega * dt + sig / r * xi;
        if options.radial_noise {
            let xr: f64 = rng.sample(StandardNormal);
            r += (growth * r + a * r * r * r + 0.25 * options.s / r) * dt + sig * xr;
        }
        if r <= COLLAPSE_FRACTION * amp {
            collapsed = true;
            r = COLLAPSE_FRACTION * amp;
        }
        if n + 1 == burn {
            phi0 = phi;
        }
        let k = n + 1 - burn.min(n + 1);
        if n >= burn && k.is_multiple_of(options.sample_every) {
            out.push(phi - phi0);
        }
    }
    (out, collapsed)
}

fn rk4(y: &[f64; 4], p: &SystemParams, dt: f64) -> [f64; 4] {
    let add = |y: &[f64; 4], k: &[f64; 4], h: f64| -> [f64; 4] {
        std::array::from_fn(|i| y[i] + h * k[i])
    };
    let k1 = vector_field(y, p);
    let k2 = vector_field(&add(y, &k1, 0.5 * dt), p);
    let k3 = vector_field(&add(y, &k2, 0.5 * dt), p);
    let k4 = vector_field(&add(y, &k3, dt), p);
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn full_path(
    mut rng: ChaCha8Rng,
    config: &SdeConfig,
    options: &PhaseNoiseOptions,
    pred: &center_manifold::LimitCyclePrediction,
    nf: &NormalFormTransform,
) -> (Vec<f64>, bool) {
    let p = match pred.params() {
        Ok(p) => p,
        Err(_) => return (Vec::new(), true),
    };
    let dt = config.dt;
    let sig = (0.5 * options.s * dt).sqrt();
    let mut y = pred.orbit(0.0);
    let phase_of = |y: &[f64; 4]| {
        let (u, v) = nf.to_normal(y[0], y[2]);
        (u.atan2(v), u.hypot(v))
    };
    let (mut last, _) = phase_of(&y);
    let mut phi = last;
    let mut phi0 = phi;
    let mut collapsed = false;
    let burn = config.burn_steps();
    let mut out = Vec::with_capacity(config.n_steps / options.sample_every);
    for n in 0..burn + config.n_steps {
        y = rk4(&y, &p, dt);
        if sig > 0.0 {
            let (xu, xv): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let (db, da) = nf.from_normal(sig * xu, sig * xv);
            y[0] += db;
            y[2] += da;
        }
        let (th, r) = phase_of(&y);
        let mut step = th - last;
        step -= TAU * (step / TAU).round();
        phi += step;
        last = th;
        if r <= COLLAPSE_FRACTION * pred.amplitude {
            collapsed = true;
        }
        if n + 1 == burn {
            phi0 = phi;
        }
        let k = n + 1 - burn.min(n + 1);
        if n >= burn && k.is_multiple_of(options.sample_every) {
            out.push(phi - phi0);
        }
    }
    (out, collapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise;
    use approx::assert_relative_eq;

    fn model(eps: f64) -> LinearNoiseModel {
        LinearNoiseModel::new(&SystemParams::scaled(1.0, 0.1, eps).unwrap()).unwrap()
    }

    fn config(m: &LinearNoiseModel, n_steps: usize, n_ensemble: usize) -> SdeConfig {
        SdeConfig {
            dt: m.default_dt().unwrap(),
            n_steps,
            n_ensemble,
            seed: 7,
            burn_in: 100.0,
        }
    }

    #[test]
    fn zero_diffusion_gives_zero_path() {
        let m = model(0.0);
        let c = config(&m, 200, 3);
        for p in simulate_linear_sde(&m, &c, Exec::Sequential).unwrap() {
            assert!(p.states.iter().all(|y| y.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn stability_guard() {
        let m = model(0.13);
        let mut c = config(&m, 10, 1);
        c.dt = 1.0;
        assert!(matches!(
            simulate_linear_sde(&m, &c, Exec::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn paths_are_deterministic_and_strategy_independent() {
        let m = model(0.13);
        let c = config(&m, 300, 8);
        let a = simulate_linear_sde(&m, &c, Exec::Sequential).unwrap();
        let b = simulate_linear_sde(&m, &c, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        let c2 = SdeConfig { seed: 8, ..c };
        assert_ne!(
            simulate_linear_sde(&m, &c2, Exec::Sequential).unwrap()[0],
            a[0]
        );
    }

    #[test]
    fn streamed_covariance_matches_lyapunov_roughly() {
        let m = model(0.05);
        let c = config(&m, 20_000, 64);
        let st = linear_sde_statistics(&m, &c, None, Exec::Parallel).unwrap();
        let exact = noise::stationary_covariance(&m).unwrap();
        let rel = (st.covariance[(2, 2)] - exact[(2, 2)]).abs() / exact[(2, 2)];
        assert!(rel < 0.15, "{} vs {}", st.covariance[(2, 2)], exact[(2, 2)]);
    }

    #[test]
    fn white_noise_psd_is_flat() {
        let dt = 0.1;
        let mut rng = member_rng(1, 0);
        let paths: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                (0..1024)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let psd = estimate_psd(&paths, dt, 1.0).unwrap();
        let level = dt / TAU;
        let inner = &psd.s[1..psd.s.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!((mean - level).abs() / level < 0.02);
        assert!(inner.iter().all(|s| (s - level).abs() / level < 0.3));
    }

    #[test]
    fn ou_process_gives_lorentzian() {
        // exact AR(1) sampling of dx = −k x dt + sqrt(q) dW
        let (k, q, dt): (f64, f64, f64) = (0.5, 1.0, 0.05);
        let phi = (-k * dt).exp();
        let sd = (q / (2.0 * k) * (1.0 - phi * phi)).sqrt();
        let mut rng = member_rng(3, 0);
        let n = 8192;
        let paths: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let mut x = rng.sample::<f64, _>(StandardNormal) * (q / (2.0 * k)).sqrt();
                (0..n)
                    .map(|_| {
                        x = phi * x + sd * rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let psd = estimate_psd(&paths, dt, 1.0).unwrap();
        let exact = |w: f64| q / TAU / (w * w + k * k);
        let i0 = 1;
        let ih = psd.nearest(k);
        assert!((psd.s[i0] / exact(psd.omega[i0]) - 1.0).abs() < 0.05);
        assert!((psd.s[ih] / exact(psd.omega[ih]) - 1.0).abs() < 0.05);
        // Lorentzian fit: 1/S is linear in ω² with intercept/slope = k²
        let pts: Vec<(f64, f64)> = psd
            .omega
            .iter()
            .zip(&psd.s)
            .skip(1)
            .take_while(|(w, _)| **w <= 2.0 * k)
            .map(|(w, s)| (w * w, 1.0 / s))
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let hw = ((my - slope * mx) / slope).sqrt();
        assert!((hw - k).abs() / k < 0.05, "{hw}");
    }

    #[test]
    fn short_segment_rejected() {
        assert!(estimate_psd(&[vec![0.0; 100]], 0.1, 0.5).is_err());
    }

    #[test]
    fn synthetic_wiener_recovered() {
        let d = 0.7;
        let dt = 0.05;
        let times: Vec<f64> = (1..=200).map(|k| k as f64 * dt).collect();
        let mut rng = member_rng(11, 0);
        let phases: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let mut w = 0.0;
                times
                    .iter()
                    .map(|_| {
                        w += (d * dt).sqrt() * rng.sample::<f64, _>(StandardNormal);
                        w
                    })
                    .collect()
            })
            .collect();
        let rec = PhaseRecord {
            times,
            flagged: vec![false; phases.len()],
            phases,
            amplitude: 1.0,
            fit: None,
        };
        let f = measure_phase_diffusion(&rec, 0).unwrap();
        assert!(
            (f.d_phi - d).abs() < 2.0 * f.stderr,
            "{} ± {}",
            f.d_phi,
            f.stderr
        );
        assert!(f.stderr > 0.0 && f.r_squared > 0.9);
    }

    #[test]
    fn zero_noise_gives_zero_diffusion() {
        let c = SdeConfig {
            dt: 0.02,
            n_steps: 2000,
            n_ensemble: 100,
            seed: 1,
            burn_in: 0.0,
        };
        let o = PhaseNoiseOptions {
            s: 0.0,
            ..PhaseNoiseOptions::new(1.0)
        };
        let mut rec = simulate_limit_cycle_noise(1.0, 0.0, 0.01, &c, &o, Exec::Sequential).unwrap();
        let f = rec.fit(0).unwrap();
        assert_eq!(f.d_phi, 0.0);
        let last = rec.phases[0].last().unwrap();
        assert_relative_eq!(
            *last,
            -0.5 * rec.times.last().unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn planar_diffusion_matches_formula() {
        let c = SdeConfig {
            dt: 0.02,
            n_steps: 1000,
            n_ensemble: 400,
            seed: 42,
            burn_in: 0.0,
        };
        let o = PhaseNoiseOptions::new(1.0);
        let mut rec = simulate_limit_cycle_noise(1.0, 0.0, 0.05, &c, &o, Exec::Parallel).unwrap();
        let f = rec.fit(1).unwrap();
        let exact = noise::phase_diffusion_constant(1.0, 0.0, 0.05)
            .unwrap()
            .exact;
        assert!(
            (f.d_phi - exact).abs() / exact < 0.2,
            "{} vs {exact}",
            f.d_phi
        );
    }

    #[test]
    fn too_few_members_rejected() {
        let c = SdeConfig {
            dt: 0.02,
            n_steps: 100,
            n_ensemble: 10,
            seed: 1,
            burn_in: 0.0,
        };
        let rec = simulate_limit_cycle_noise(
            1.0,
            0.0,
            0.05,
            &c,
            &PhaseNoiseOptions::new(1.0),
            Exec::Sequential,
        )
        .unwrap();
        assert!(measure_phase_diffusion(&rec, 0).is_err());
    }
}
