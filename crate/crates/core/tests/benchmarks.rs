use narxstab::benchmarks::{
    generate_dataset, simulate_hh, simulate_system_a, simulate_system_b, MultisineSpec, SyntheticSystemSpec, SystemKind,
};
use narxstab::solver::build_regression_data;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hh_integration_error_scales_with_dt_to_the_fourth() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = MultisineSpec::default().sample(&mut rng);
    let times: Vec<f64> = (1..=60).map(|t| (499 + t) as f64 / 10.0).collect();
    let reference = simulate_hh(|t| v.eval(t), 0.4, &times, 1.25e-3).unwrap().current;
    for dt in [0.04, 0.02, 0.01] {
        let coarse = simulate_hh(|t| v.eval(t), 0.4, &times, dt).unwrap().current;
        let err = coarse
            .iter()
            .zip(&reference)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        // C from the measured dt = 0.04 error (7.7e−8) with a factor 2 margin
        assert!(err <= 2.0 * 8.0e-8 * (dt / 0.04_f64).powi(4), "dt {dt}: {err:e}");
    }
}

#[test]
fn difference_systems_respect_their_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f64> = (0..500)
        .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
        .collect();
    let a = simulate_system_a(&u, 3.0, -2.0, 500).unwrap();
    let b = simulate_system_b(&u, 3.0, -2.0, 500).unwrap();
    for t in 2..500 {
        let p = (a[t - 2].powi(2) + a[t - 1].powi(2) + u[t - 2].powi(2) + u[t - 1].powi(2)).sqrt();
        assert!(a[t] >= 0.0 && a[t] <= 0.2 * 2f64.sqrt() * p + 1e-12);
        assert!(b[t] >= 0.0 && b[t] <= 0.2);
    }
}

#[test]
fn benchmark_regressors_have_dimension_five() {
    for system in [SystemKind::SystemA, SystemKind::SystemB, SystemKind::HodgkinHuxleyK] {
        let spec = SyntheticSystemSpec {
            n_train: 30,
            n_valid: 10,
            ..SyntheticSystemSpec::benchmark(system, false, 2)
        };
        let d = generate_dataset(&spec).unwrap();
        let reg = build_regression_data(&d.train.u, &d.train.y, 2).unwrap();
        assert_eq!(reg.len(), 28);
        assert!(reg.regressors().iter().all(|z| z.len() == 5));
    }
}

#[test]
fn generated_a_datasets_have_signal_to_noise_near_ten() {
    for seed in 0..20 {
        let spec = SyntheticSystemSpec::benchmark(SystemKind::SystemA, false, seed);
        let noisy = generate_dataset(&spec).unwrap().train.y;
        let clean = generate_dataset(&SyntheticSystemSpec {
            noise_std: 0.0,
            ..spec.clone()
        })
        .unwrap()
        .train
        .y;
        let mean = clean.iter().sum::<f64>() / clean.len() as f64;
        let signal = clean.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let noise = noisy.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let snr = signal / noise;
        assert!((5.0..=20.0).contains(&snr), "seed {seed}: SNR {snr}");
    }
}
