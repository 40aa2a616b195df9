use twocultures_core::brillinger::{identify_linear_system, recover_nonlinear_system, simulate_linear_system, NonlinearSystemConfig};

#[test]
fn nonlinear_absolute_system_is_recovered() {
    for seed in 1..=3 {
        let r = recover_nonlinear_system(&NonlinearSystemConfig::default(), seed).unwrap();
        assert!(r.cosine >= 0.95, "seed {seed}: cos {}", r.cosine);
        assert!(r.pls_ols_cosine >= 0.99, "seed {seed}: pls/ols {} at L={}", r.pls_ols_cosine, r.pls_components);
        assert!(r.link_curve.windows(2).all(|w| w[0][0] <= w[1][0]));
    }
}

#[test]
fn noiseless_nonlinear_system_is_sharper() {
    let config = NonlinearSystemConfig {
        noise_sd: 0.0,
        ..NonlinearSystemConfig::default()
    };
    let r = recover_nonlinear_system(&config, 4).unwrap();
    assert!(r.cosine >= 0.99, "{}", r.cosine);
}

#[test]
fn noisy_linear_system_leaves_noise_floor() {
    for seed in 1..=5 {
        let (x, y) = simulate_linear_system(500, 0.1, seed).unwrap();
        let id = identify_linear_system(&x, &y, 3).unwrap();
        let after_two = id.rounds[1].residual_variance;
        assert!((after_two / 0.01 - 1.0).abs() <= 0.1, "seed {seed}: {after_two}");
        let red = id.reductions();
        assert!(red.get(2).copied().unwrap_or(0.0) <= 0.05 * red[0], "seed {seed}: {red:?}");
    }
}
