use pstclock_core::metrics::{survival_moments, survival_moments_quadrature, Horizon};
use pstclock_core::{
    build_effective_matrix, decompose_effective, expand_profile, moment, tick_statistics,
    tick_statistics_with, CouplingProfile,
};

fn engineered_n50() -> pstclock_core::ChainSpec {
    expand_profile(
        &CouplingProfile::PstWithTailOverrides {
            j0: 0.0172,
            tail_overrides: vec![0.245, 0.243, 0.255, 0.367],
            o: None,
        },
        50,
        1.0,
    )
    .unwrap()
}

#[test]
fn engineered_chain_figures_of_merit() {
    let s = decompose_effective(&build_effective_matrix(&engineered_n50())).unwrap();
    let st = tick_statistics(&s).unwrap();
    println!("{st:?} mu_inf={}", moment(&s, 1).unwrap());
    assert!((st.resolution / 1.22e-2 - 1.0).abs() < 0.02);
    assert!((st.precision / 361.62 - 1.0).abs() < 0.02);
}

#[test]
fn engineered_chain_horizon_moments_match_quadrature() {
    let spec = engineered_n50();
    let s = decompose_effective(&build_effective_matrix(&spec)).unwrap();
    let h = 2.0 * moment(&s, 1).unwrap();
    let closed = survival_moments(&s, Some(h)).unwrap();
    let quad = survival_moments_quadrature(&build_effective_matrix(&spec), Some(h)).unwrap();
    assert!((closed.int_s / quad.int_s - 1.0).abs() < 1e-9);
    assert!((closed.int_ts / quad.int_ts - 1.0).abs() < 1e-9);
    let fixed = tick_statistics_with(&s, Horizon::Fixed(h)).unwrap();
    let unconditioned = tick_statistics_with(&s, Horizon::MeanMultiple(2.0)).unwrap();
    assert_eq!(fixed, unconditioned);
}

#[test]
fn default_window_is_twice_its_own_mean() {
    let s = decompose_effective(&build_effective_matrix(&engineered_n50())).unwrap();
    let st = tick_statistics(&s).unwrap();
    let h = st.horizon.unwrap();
    assert!(
        (h / (2.0 * st.mu) - 1.0).abs() < 1e-10,
        "H = {h}, mu = {}",
        st.mu
    );
    let again = tick_statistics_with(&s, Horizon::Fixed(h)).unwrap();
    assert!((again.mu / st.mu - 1.0).abs() < 1e-12);
    assert!(tick_statistics_with(&s, Horizon::SelfConsistent(1.0)).is_err());
}
