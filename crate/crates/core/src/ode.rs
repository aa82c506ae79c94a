//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! Output at requested times uses the method's own fourth-order continuous
//! extension, so dense output keeps the accuracy of the steps themselves.

use crate::error::{Error, Result};

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Largest allowed step.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        OdeOptions {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x <= 1e-2;
        if !ok(self.rel_tol) || !ok(self.abs_tol) {
            return Err(Error::config(format!(
                "tolerances must lie in (0, 1e-2] (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th- and 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension (Hairer, Nørsett & Wanner)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step, enough to interpolate anywhere inside it.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub f0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
    pub f1: [f64; N],
    /// `h Σ d_j k_j`, the quartic correction of the continuous extension.
    pub dense: [f64; N],
}

impl<const N: usize> Step<N> {
    /// Fourth-order interpolant at `t ∈ [t0, t1]`.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            return self.y0;
        }
        let s = (t - self.t0) / h;
        let s1 = 1.0 - s;
        std::array::from_fn(|i| {
            let dy = self.y1[i] - self.y0[i];
            let r3 = h * self.f0[i] - dy;
            let r4 = dy - h * self.f1[i] - r3;
            self.y0[i] + s * (dy + s1 * (r3 + s * (r4 + s1 * self.dense[i])))
        })
    }
}

/// Cubic Hermite interpolation between `(t0, y0, f0)` and `(t1, y1, f1)`.
pub fn hermite<const N: usize>(
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    t1: f64,
    y1: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    if h == 0.0 {
        return *y0;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
    out
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t_end`, calling `on_step`
/// after every accepted step. Returning `false` from the callback stops the
/// integration early. Returns the number of accepted steps.
pub fn integrate_steps<const N: usize, F, C>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    mut on_step: C,
) -> Result<usize>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    C: FnMut(&Step<N>) -> bool,
{
    opts.validate()?;
    if !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::domain("time span must be finite"));
    }
    if t_end < t0 {
        return Err(Error::domain("integration runs forward in time only"));
    }
    if t_end == t0 {
        return Ok(0);
    }
    let span = t_end - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(&mut f, t, &y, &k1, opts))
        .min(opts.h_max)
        .min(span);
    let mut accepted = 0usize;
    let mut iterations = 0usize;

    while t < t_end {
        iterations += 1;
        if iterations > opts.max_steps {
            return Err(Error::numerical(format!(
                "maximum number of steps ({}) exceeded at t = {t}",
                opts.max_steps
            )));
        }
        // absorb a remainder too small to step over
        let last = t + h * (1.0 + 1e-6) >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(Error::StepUnderflow { t, h });
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let t_new = if last { t_end } else { t + h };
        let k7 = f(t_new, &y_new);

        let mut err = 0.0;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            continue;
        }

        if err <= 1.0 {
            let dense = std::array::from_fn(|i| {
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            });
            let step = Step {
                t0: t,
                y0: y,
                f0: k1,
                t1: t_new,
                y1: y_new,
                f1: k7,
                dense,
            };
            accepted += 1;
            t = t_new;
            y = y_new;
            k1 = k7;
            if !on_step(&step) {
                break;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * fac).min(opts.h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Ok(accepted)
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    opts: &OdeOptions,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let sc = |i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let norm = |v: &[f64; N]| {
        (v.iter()
            .enumerate()
            .map(|(i, x)| (x / sc(i)).powi(2))
            .sum::<f64>()
            / N as f64)
            .sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = f(t + h0, &y1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates and returns the solution at each of `sample_times`, which
/// must be non-decreasing and lie in `[t0, ∞)`.
pub fn solve_at<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    sample_times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("sample times must be non-decreasing"));
    }
    let Some(&t_end) = sample_times.last() else {
        return Ok(Vec::new());
    };
    if sample_times[0] < t0 {
        return Err(Error::domain("sample times must not precede t0"));
    }
    let mut out = Vec::with_capacity(sample_times.len());
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] == t0 {
        out.push(y0);
        next += 1;
    }
    integrate_steps(f, t0, y0, t_end, opts, |step| {
        while next < sample_times.len() && sample_times[next] <= step.t1 {
            let ts = sample_times[next];
            out.push(if ts == step.t1 {
                step.y1
            } else {
                step.interpolate(ts)
            });
            next += 1;
        }
        true
    })?;
    debug_assert_eq!(out.len(), sample_times.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let ts: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let ys = solve_at(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            &ts,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert_relative_eq!(y[0], (-t).exp(), max_relative = 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let ts: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let ys = solve_at(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            &ts,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-7, "t = {t}");
            assert!((y[1] + t.sin()).abs() < 1e-7, "t = {t}");
        }
    }

    #[test]
    fn fifth_order_convergence_with_fixed_steps() {
        // with a loose tolerance the step is capped by h_max, so the global
        // error should drop by ~2^5 when h_max halves
        let run = |h: f64| {
            let opts = OdeOptions {
                rel_tol: 1e-2,
                abs_tol: 1e-2,
                h_init: Some(h),
                h_max: h,
                max_steps: 1_000_000,
            };
            let ys = solve_at(
                |t, y: &[f64; 1]| [y[0] * t.cos()],
                0.0,
                [1.0],
                &[4.0],
                &opts,
            )
            .unwrap();
            (ys[0][0] - (4.0f64).sin().exp()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 20.0 && ratio < 45.0, "ratio = {ratio}");
    }

    #[test]
    fn rejects_bad_tolerances_and_spans() {
        let f = |_: f64, y: &[f64; 1]| [y[0]];
        let bad = OdeOptions::with_tolerances(0.1, 1e-12);
        assert!(matches!(
            solve_at(f, 0.0, [1.0], &[1.0], &bad),
            Err(Error::Config(_))
        ));
        let opts = OdeOptions::default();
        assert!(solve_at(f, 0.0, [1.0], &[f64::INFINITY], &opts).is_err());
        assert!(solve_at(f, 0.0, [1.0], &[2.0, 1.0], &opts).is_err());
    }

    #[test]
    fn step_underflow_reports_time() {
        // blows up at t = 1
        let opts = OdeOptions::default();
        let err = solve_at(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], &[2.0], &opts).unwrap_err();
        match err {
            Error::StepUnderflow { t, .. } => assert!((t - 1.0).abs() < 1e-3, "t = {t}"),
            Error::Numerical(_) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0] - 0.1 * y[1] * (1.0 - y[0] * y[0])];
        let a = solve_at(f, 0.0, [0.5, 0.0], &ts, &OdeOptions::default()).unwrap();
        let b = solve_at(f, 0.0, [0.5, 0.0], &ts, &OdeOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
