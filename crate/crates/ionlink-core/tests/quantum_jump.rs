//! Cross-validation of the density-matrix integrator against the
//! quantum-jump trajectory ensemble.

use ionlink_core::atomic::{
    build_level_scheme, emission_profile, evolve, level, AtomicDensityMatrix, DrivePulse,
    EmissionGrid, SchemeOverrides,
};
use ionlink_core::oracle::run_trajectories;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Population trajectories from both integration routes agree at three
/// standard errors on every recorded grid point, and the total emitted
/// photon probabilities agree channel by channel.
#[test]
fn lindblad_matches_quantum_jump_ensemble() {
    let scheme = build_level_scheme(SchemeOverrides::default()).unwrap();
    let pulse = DrivePulse::default_excitation();
    let horizon = 300.0;
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let ensemble = run_trajectories(&scheme, &pulse, horizon, 10.0, 20_000, &mut rng);

    // Watch the manifold populations, not just the P levels.
    let watched = [
        level::S_LO,
        level::S_HI,
        level::P_LO,
        level::P_HI,
        level::D_P3,
        level::D_P1,
    ];
    let mut rho = AtomicDensityMatrix::prepared();
    let mut t = 0.0;
    for (idx, &t_grid) in ensemble.times_ns.iter().enumerate() {
        if t_grid > t {
            rho = evolve(&rho, &scheme, &[pulse], t, t_grid, 0.1).unwrap();
            t = t_grid;
        }
        for &lvl in &watched {
            let mc = ensemble.populations[idx][lvl];
            let err = ensemble.population_stderr[idx][lvl];
            let exact = rho.population(lvl);
            assert!(
                (mc - exact).abs() <= 3.0 * err + 2e-3,
                "level {lvl} at t={t_grid}: MC {mc} +- {err}, Lindblad {exact}"
            );
        }
    }

    // Emission totals: integrate the Lindblad profile and compare with the
    // trajectory counting statistics.
    let profile = emission_profile(&scheme, &pulse, &EmissionGrid::default_for(&pulse)).unwrap();
    let (good, good_err) = ensemble.good_emission;
    let (swap, swap_err) = ensemble.swap_emission;
    assert!(
        (good - profile.total_good()).abs() <= 3.0 * good_err,
        "good emission: MC {good} +- {good_err}, Lindblad {}",
        profile.total_good()
    );
    assert!(
        (swap - profile.total_swap()).abs() <= 3.0 * swap_err,
        "swap emission: MC {swap} +- {swap_err}, Lindblad {}",
        profile.total_swap()
    );
}
