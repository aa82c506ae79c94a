use proptest::prelude::*;
use selfpulse::model::SemiclassicalState;
use selfpulse::ode::OdeOptions;
use selfpulse::semiclassics::*;
use selfpulse::SystemParams;

fn state() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-0.5f64..0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reflection_maps_trajectories(y0 in state(), k in 0.2f64..2.0, g in 0.0f64..0.5, e in -0.3f64..0.3) {
        let p = SystemParams::scaled(k, g, e).unwrap();
        let q = p.with_epsilon(-e);
        let ts = uniform_times(0.0, 10.0, 21);
        let flip = |y: &[f64; 4]| [-y[0], -y[1], y[2], y[3]];
        let a = integrate(y0, &p, &ts, &OdeOptions::default()).unwrap();
        let b = integrate(flip(&y0), &q, &ts, &OdeOptions::default()).unwrap();
        for (ya, yb) in a.states.iter().zip(&b.states) {
            let fa = flip(ya);
            for i in 0..4 {
                prop_assert!((fa[i] - yb[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn chi_rescaling_is_a_time_change(y0 in state(), chi in 0.3f64..3.0) {
        let p = SystemParams::new(0.8, 0.1, chi, 0.05).unwrap();
        let u = p.rescale_to_unit_chi().unwrap();
        let ts = uniform_times(0.0, 5.0, 11);
        let scaled: Vec<f64> = ts.iter().map(|t| t * chi).collect();
        let a = integrate(y0, &p, &ts, &OdeOptions::default()).unwrap();
        let b = integrate(y0, &u, &scaled, &OdeOptions::default()).unwrap();
        for (ya, yb) in a.states.iter().zip(&b.states) {
            for i in 0..4 {
                prop_assert!((ya[i] - yb[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn fixed_point_is_equilibrium(k in 0.05f64..10.0, g in 0.0f64..5.0, e in -2.0f64..2.0) {
        let p = SystemParams::scaled(k, g, e).unwrap();
        let fp = fixed_point(&p).unwrap();
        prop_assert!(fp.residual <= 1e-12 * (1.0 + e.abs()));
        let f = vector_field(&fp.state(), &p);
        prop_assert!(f.iter().all(|x| x.abs() <= 1e-10 * (1.0 + e.abs())));
        if e != 0.0 {
            prop_assert_eq!(fp.beta_i0.signum(), -e.signum());
        }
    }

    #[test]
    fn eigenvalues_pair_into_conjugates(k in 0.1f64..5.0, g in 0.0f64..1.0, e in 0.0f64..1.0) {
        let p = SystemParams::scaled(k, g, e).unwrap();
        let ev = stability(&fixed_point(&p).unwrap(), &p).eigenvalues;
        for z in ev {
            prop_assert!(ev.iter().any(|w| (w - z.conj()).norm() < 1e-9 * (1.0 + z.norm())));
        }
    }
}

#[test]
fn excitation_number_conserved_without_loss_or_drive() {
    let p = SystemParams::conservative(1.0);
    let s0 = SemiclassicalState::new((0.3).into(), num_complex::Complex64::new(0.0, 0.4));
    let tr = integrate(
        s0.to_real(),
        &p,
        &uniform_times(0.0, 100.0, 1001),
        &OdeOptions::default(),
    )
    .unwrap();
    let n0 = s0.excitation_number();
    let drift = (0..tr.len())
        .map(|i| (tr.state(i).excitation_number() - n0).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-8, "drift {drift:e}");
}

#[test]
fn hopf_threshold_by_bisection() {
    let mut seed = 12345u64;
    let mut next = || {
        seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let k = 0.1 + 4.9 * next();
        let g = k * next();
        let exact = hopf_threshold(k, g).unwrap().epsilon_h;
        let found = locate_hopf_by_bisection(k, g, 1e-12).unwrap();
        assert!((found - exact).abs() <= 1e-8, "k={k} g={g}");
    }
}
