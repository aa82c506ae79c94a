use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use selfpulse::noise::{spectrum_scan, LinearNoiseModel};
use selfpulse::stochastic::{linear_sde_statistics, SdeConfig};
use selfpulse::{center_manifold, Exec, SystemParams};

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn spectrum(c: &mut Criterion) {
    let model = LinearNoiseModel::new(&SystemParams::scaled(1.0, 0.1, 0.13).unwrap()).unwrap();
    let mut g = c.benchmark_group("spectrum_scan");
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| spectrum_scan(&model, -2.0, 2.0, 20_001, e).unwrap())
        });
    }
    g.finish();
}

fn sde_ensemble(c: &mut Criterion) {
    let model = LinearNoiseModel::new(&SystemParams::scaled(1.0, 0.1, 0.13).unwrap()).unwrap();
    let config = SdeConfig {
        dt: model.default_dt().unwrap(),
        n_steps: 2_000,
        n_ensemble: 256,
        seed: 1,
        burn_in: 10.0,
    };
    let mut g = c.benchmark_group("sde_ensemble");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| linear_sde_statistics(&model, &config, None, e).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let kappas: Vec<f64> = (0..400)
        .map(|i| 0.1 * 100f64.powf(i as f64 / 399.0))
        .collect();
    let mut g = c.benchmark_group("lyapunov_sweep");
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| {
                e.map(kappas.len(), |i| {
                    center_manifold::lyapunov_coefficient(kappas[i], 0.3)
                        .unwrap()
                        .numeric
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, spectrum, sde_ensemble, sweep);
criterion_main!(benches);
