//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values.
//!
//! Criterion 3 (the gated multiple-excitation triple) is asserted exactly as
//! specified even though two of its three figures are unreachable in the
//! eight-level resonant-drive model: the ungated swap share has an exact
//! branching-ratio ceiling of 2/25 = 8.0%, and pushing the outside-gate
//! fraction below ~19% requires drive strengths that blow the gated swap
//! share past 3%. The test reports the measured values; see the emission
//! profile docs for the saturation analysis.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ionlink_core::analysis::{
    bounds_bracket_check, error_budget_report, fit_gap_distribution, BoundConvention,
};
use ionlink_core::atomic::{
    attempt_rate, build_level_scheme, emission_profile, gated_acceptance, EmissionGrid,
    SequenceTiming,
};
use ionlink_core::converter::{
    convert_map, efficiency, matched_operating_point, ConversionCurve, ConverterChannel, Pol,
};
use ionlink_core::entangle::{bell_state, random_state, true_fidelity, ErrorBudget};
use ionlink_core::harness::{AttemptEngine, ExperimentConfig};
use ionlink_core::polarization::{analyzer_povm, waveplate, AnalyzerConfig, JonesMatrix, WaveplateSetting};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const SEED: u64 = 0;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ionlink"))
}

fn run_pipeline(wavelength: &str, tags: &Path) -> (f64, f64) {
    let status = bin()
        .args(["simulate", "--wavelength", wavelength, "--seed", &SEED.to_string()])
        .arg("--out")
        .arg(tags)
        .output()
        .expect("simulate runs");
    assert!(status.status.success(), "simulate failed: {status:?}");
    let out = bin()
        .args(["analyze", "fidelity"])
        .arg(tags)
        .output()
        .expect("analyze runs");
    assert!(out.status.success(), "analyze failed: {out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with("fidelity bounds:"))
        .expect("bounds line");
    // "fidelity bounds: L (+- s)  <=  F  <=  U (+- s)"
    let nums: Vec<f64> = line
        .split_whitespace()
        .filter_map(|tok| tok.trim_matches(|c| c == '(' || c == ')').parse().ok())
        .collect();
    (nums[0], nums[2])
}

#[test]
fn criterion_1_fidelity_bounds_493() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (lower, upper) = run_pipeline("493", &dir.path().join("tags493.csv"));
    let elapsed = start.elapsed().as_secs_f64();
    let ok = (0.90..=0.96).contains(&lower) && (0.93..=0.99).contains(&upper) && elapsed < 60.0;
    println!(
        "criterion 1 [{}]: 493 nm bounds {lower:.4}/{upper:.4} vs [0.90,0.96]/[0.93,0.99] in {elapsed:.1} s",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "lower {lower}, upper {upper}, elapsed {elapsed}");
}

#[test]
fn criterion_2_fidelity_bounds_780() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (lower, upper) = run_pipeline("780", &dir.path().join("tags780.csv"));
    let elapsed = start.elapsed().as_secs_f64();
    let ok = (0.80..=0.88).contains(&lower) && (0.90..=0.98).contains(&upper) && elapsed < 90.0;
    println!(
        "criterion 2 [{}]: 780 nm bounds {lower:.4}/{upper:.4} vs [0.80,0.88]/[0.90,0.98] in {elapsed:.1} s",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "lower {lower}, upper {upper}, elapsed {elapsed}");
}

#[test]
fn criterion_3_gated_multiple_excitation_error() {
    let config = ExperimentConfig::nm493(SEED);
    let scheme = build_level_scheme(config.scheme_overrides).unwrap();
    let profile =
        emission_profile(&scheme, &config.pulse, &EmissionGrid::default_for(&config.pulse))
            .unwrap();
    let gate = gated_acceptance(&profile, 40.0).unwrap();
    let ungated = gate.swap_fraction_ungated;
    let gated = gate.swap_fraction;
    let outside = 1.0 - gate.accept_fraction;
    let ok_ungated = (ungated - 0.09).abs() <= 0.01;
    let ok_gated = (gated - 0.02).abs() <= 0.01;
    let ok_outside = (outside - 0.17).abs() <= 0.02;
    let ok = ok_ungated && ok_gated && ok_outside;
    println!(
        "criterion 3 [{}]: swap ungated {:.4} (need 0.09 +- 0.01 -> {}), \
         gated {:.4} (need 0.02 +- 0.01 -> {}), outside-gate {:.4} (need 0.17 +- 0.02 -> {}); \
         wanted-channel-only outside fraction {:.4}",
        if ok { "PASS" } else { "FAIL" },
        ungated,
        if ok_ungated { "ok" } else { "MISS" },
        gated,
        if ok_gated { "ok" } else { "MISS" },
        outside,
        if ok_outside { "ok" } else { "MISS" },
        gate.good_fraction_outside,
    );
    assert!(
        ok,
        "model limits: ungated swap ceiling 2/25 = 0.08 (branching exact), \
         outside-gate floor ~0.19 at saturation; measured ({ungated:.4}, {gated:.4}, {outside:.4})"
    );
}

#[test]
fn criterion_4_rates() {
    let engine_493 = AttemptEngine::new(ExperimentConfig::nm493(SEED)).unwrap();
    let engine_780 = AttemptEngine::new(ExperimentConfig::nm780(SEED)).unwrap();
    let p493 = engine_493.per_attempt_success_probability();
    let p780 = engine_780.per_attempt_success_probability();
    let ok_p493 = (1.0 / p493 - 350.0).abs() / 350.0 <= 0.10;
    let ok_p780 = (1.0 / p780 - 1068.0).abs() / 1068.0 <= 0.10;
    let ratio = p780 / p493;
    let derived = 0.345 * 0.66 * (0.58 / 0.40);
    let measured = 350.0 / 1068.0;
    let ok_ratio = (ratio - derived).abs() / derived <= 1e-6 && (derived - measured).abs() / measured <= 0.02;
    let rate = attempt_rate(&SequenceTiming::default());
    let ok_rate = (rate - 48.1e3).abs() / 48.1e3 <= 0.01;

    let mut rng = ChaCha12Rng::seed_from_u64(SEED);
    let tags_493 = engine_493.generate_timetags(28_500, &mut rng);
    let gaps: Vec<u64> = tags_493.windows(2).map(|w| w[1].attempt_index - w[0].attempt_index).collect();
    let fit_493 = fit_gap_distribution(&gaps, rate).unwrap();
    let ok_gap_493 = (fit_493.mean_gap - 350.0).abs() / 350.0 <= 0.05;
    let tags_780 = engine_780.generate_timetags(20_700, &mut rng);
    let gaps: Vec<u64> = tags_780.windows(2).map(|w| w[1].attempt_index - w[0].attempt_index).collect();
    let fit_780 = fit_gap_distribution(&gaps, rate).unwrap();
    let ok_gap_780 = (fit_780.mean_gap - 1068.0).abs() / 1068.0 <= 0.05;

    let ok = ok_p493 && ok_p780 && ok_ratio && ok_rate && ok_gap_493 && ok_gap_780;
    println!(
        "criterion 4 [{}]: 1/p = {:.1}/{:.1} (need 350/1068 +-10%), ratio {:.4} vs {:.4} (+-2%), \
         attempt rate {:.0}/s (need 48100 +-1%), gap means {:.1}/{:.1} (+-5%)",
        if ok { "PASS" } else { "FAIL" },
        1.0 / p493,
        1.0 / p780,
        derived,
        measured,
        rate,
        fit_493.mean_gap,
        fit_780.mean_gap,
    );
    assert!(ok);
}

#[test]
fn criterion_5_converter() {
    let curve = ConversionCurve::default();
    let (pump_v, pump_h) = matched_operating_point(&curve, 0.345).unwrap();
    let eta_v = efficiency(&curve, pump_v, Pol::V).unwrap();
    let eta_h = efficiency(&curve, pump_h, Pol::H).unwrap();
    let ok_matched = (eta_v - 0.345).abs() <= 1e-6 && (eta_h - 0.345).abs() <= 1e-6;

    let channel = ConverterChannel {
        eta_v: 0.345,
        eta_h: 0.345,
        swap_hv: true,
        noise_rate_hz: 0.0,
        bandpass_nm: 10.0,
    };
    let bell = bell_state(false);
    let f_in = true_fidelity(&bell, &bell_state(false)).unwrap();
    let (_, out) = convert_map(&bell, &channel);
    let f_out = true_fidelity(&out, &bell_state(true)).unwrap();
    let ok_preserved = f_out == f_in;

    let ok = ok_matched && ok_preserved;
    println!(
        "criterion 5 [{}]: matched etas ({:.7}, {:.7}) vs 0.345 +- 1e-6; \
         swapped-target fidelity preserved exactly: {}",
        if ok { "PASS" } else { "FAIL" },
        eta_v,
        eta_h,
        ok_preserved,
    );
    assert!(ok);
}

#[test]
fn criterion_6_property_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(SEED);

    // Bound bracketing on 50 seeded random states.
    let mut passes = 0;
    for _ in 0..50 {
        let state = random_state(&mut rng);
        let report =
            bounds_bracket_check(&state, BoundConvention::Direct493, 20_000, &mut rng).unwrap();
        passes += u32::from(report.ok);
    }
    let ok_bracket = passes >= 49;

    // Separable lower-bound ceiling over 200 product states.
    let mut ok_separable = true;
    for _ in 0..200 {
        let (ti, pi_, tp, pp) = (
            rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU),
            rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU),
            rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU),
            rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU),
        );
        let amp = |t: f64, p: f64| {
            [
                nalgebra::Complex::new((t / 2.0).cos(), 0.0),
                nalgebra::Complex::from_polar((t / 2.0).sin(), p),
            ]
        };
        let (ion, photon) = (amp(ti, pi_), amp(tp, pp));
        let state = ionlink_core::entangle::JointState::pure([
            ion[0] * photon[0],
            ion[0] * photon[1],
            ion[1] * photon[0],
            ion[1] * photon[1],
        ]);
        let report =
            bounds_bracket_check(&state, BoundConvention::Direct493, 4_000, &mut rng).unwrap();
        if report.bounds.lower - 3.0 * report.bounds.lower_stderr > 0.5 + 1e-9 {
            ok_separable = false;
        }
    }

    // Lindblad versus quantum-jump trajectories at 1e5 trajectories.
    let config = ExperimentConfig::nm493(SEED);
    let scheme = build_level_scheme(config.scheme_overrides).unwrap();
    let ensemble = ionlink_core::oracle::run_trajectories(
        &scheme,
        &config.pulse,
        300.0,
        10.0,
        100_000,
        &mut rng,
    );
    let profile =
        emission_profile(&scheme, &config.pulse, &EmissionGrid::default_for(&config.pulse))
            .unwrap();
    let mut ok_oracle = true;
    let mut rho = ionlink_core::atomic::AtomicDensityMatrix::prepared();
    let mut t = 0.0;
    for (idx, &t_grid) in ensemble.times_ns.iter().enumerate() {
        if t_grid > t {
            rho = ionlink_core::atomic::evolve(&rho, &scheme, &[config.pulse], t, t_grid, 0.1)
                .unwrap();
            t = t_grid;
        }
        for lvl in 0..ionlink_core::atomic::DIM {
            let mc = ensemble.populations[idx][lvl];
            let err = ensemble.population_stderr[idx][lvl];
            if (mc - rho.population(lvl)).abs() > 3.0 * err + 2e-3 {
                ok_oracle = false;
            }
        }
    }
    let (good, good_err) = ensemble.good_emission;
    if (good - profile.total_good()).abs() > 3.0 * good_err {
        ok_oracle = false;
    }

    // Analyzer completeness and retarder identities at 1e-10.
    let mut ok_optics = true;
    for k in 0..60 {
        let angle = k as f64 * 3.1;
        let q = waveplate(&WaveplateSetting::qwp(angle));
        let h = waveplate(&WaveplateSetting::hwp(angle));
        if !q.then(&q).approx_eq_phase(&h, 1e-10)
            || !h.then(&h).approx_eq_phase(&JonesMatrix::identity(), 1e-10)
        {
            ok_optics = false;
        }
        let (eh, ev) = analyzer_povm(&AnalyzerConfig::new(angle, (angle * 2.3) % 180.0));
        if (eh + ev - nalgebra::Matrix2::identity()).norm() > 1e-10 {
            ok_optics = false;
        }
    }

    // Determinism: identical seed, byte-identical time-tag files.
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        let out = bin()
            .args(["simulate", "--wavelength", "493", "--seed", "123"])
            .arg("--out")
            .arg(path)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let ok_determinism = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let ok = ok_bracket && ok_separable && ok_oracle && ok_optics && ok_determinism;
    println!(
        "criterion 6 [{}]: bracket {passes}/50, separable ceiling {}, quantum-jump 3-sigma {}, \
         optics identities {}, determinism {}",
        if ok { "PASS" } else { "FAIL" },
        ok_separable,
        ok_oracle,
        ok_optics,
        ok_determinism,
    );
    assert!(ok);
}

#[test]
fn criterion_7_error_budget_table() {
    let r493 = error_budget_report(&ErrorBudget::nm493());
    let r780 = error_budget_report(&ErrorBudget::nm780());
    let expected_493: [(f64, f64); 5] = [
        (1.5, 1.5),
        (1.5, 2.0),
        (1.0, 3.0),
        (1.2, 1.2),
        (1.0, 1.0),
    ];
    let expected_780: [(f64, f64); 5] = [
        (1.5, 1.5),
        (1.5, 2.0),
        (1.0, 5.0),
        (6.0, 6.0),
        (1.0, 1.0),
    ];
    let rows_match = |report: &ionlink_core::analysis::BudgetReport, expected: &[(f64, f64); 5]| {
        report
            .rows
            .iter()
            .zip(expected.iter())
            .all(|(row, (lo, hi))| {
                (row.lo_percent - lo).abs() < 1e-9 && (row.hi_percent - hi).abs() < 1e-9
            })
    };
    let ok = rows_match(&r493, &expected_493)
        && rows_match(&r780, &expected_780)
        && (r493.sum_lo_percent - 6.2).abs() < 1e-9
        && (r493.sum_hi_percent - 8.7).abs() < 1e-9
        && (r780.sum_lo_percent - 11.0).abs() < 1e-9
        && (r780.sum_hi_percent - 15.5).abs() < 1e-9;
    println!(
        "criterion 7 [{}]: sums {:.1}-{:.1} (need 6.2-8.7) and {:.1}-{:.1} (need 11-15.5), all rows exact",
        if ok { "PASS" } else { "FAIL" },
        r493.sum_lo_percent,
        r493.sum_hi_percent,
        r780.sum_lo_percent,
        r780.sum_hi_percent,
    );
    assert!(ok);
}
