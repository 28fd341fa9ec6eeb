//! `ionlink`: simulate an ion-photon entanglement link and analyze its
//! time-tag data.

mod config;
mod io;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use ionlink_core::analysis::{
    self, bounds_bracket_check, error_budget_report, fidelity_bounds, fit_gap_distribution,
    geometric_gof, max_correlation_phase, rotated_combination, BoundConvention, ElementOptions,
};
use ionlink_core::atomic::{
    attempt_rate, build_level_scheme, emission_profile, gated_acceptance, EmissionGrid,
};
use ionlink_core::converter::{efficiency, ConversionCurve, Pol};
use ionlink_core::entangle::{bell_state, random_state, ErrorBudget, JointState};
use ionlink_core::harness::{
    run_fidelity_session, AttemptEngine, CorrelationResult, ExperimentConfig,
};
use ionlink_core::polarization::{waveplate, JonesMatrix, WaveplateSetting};
use ionlink_core::Wavelength;

#[derive(Parser)]
#[command(name = "ionlink", version, about = "Ion-photon entanglement link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; identical seeds give byte-identical outputs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file path for the machine-readable CSV.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Link selection when no config file sets one.
    #[arg(long, value_parser = config::parse_wavelength)]
    wavelength: Option<Wavelength>,
}

#[derive(Subcommand)]
enum Command {
    /// Full run: calibration, both scans, dedicated measurement batches;
    /// writes the time-tag file and prints the resulting fidelity bounds.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
        /// Override the number of detection events per scan point.
        #[arg(long)]
        events: Option<u32>,
    },
    /// Unrotated-basis fringe scan over HWP angles.
    ScanHwp {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Rotated-basis fringe scan over RF phases.
    ScanPhase {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Conversion-efficiency curves versus pump power.
    ConvertCurve {
        #[command(flatten)]
        opts: RunOpts,
        /// Number of pump samples in [0, 1.2].
        #[arg(long, default_value_t = 121)]
        points: u32,
    },
    /// Photon temporal emission profile of the calibrated pulse.
    EmissionProfile {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Estimators over an existing time-tag file.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Itemized error-budget table.
    Budget {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Self-validation suite; exits nonzero on any violated invariant.
    Validate {
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Fidelity bounds from a time-tag file.
    Fidelity {
        tags: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Bound labeling: `auto` (from the file), `493`, or `780`.
        #[arg(long, default_value = "auto")]
        convention: String,
        /// Force P(gamma) = 1/2 instead of estimating the marginals.
        #[arg(long)]
        force_equal_marginals: bool,
    },
    /// Geometric gap fit and event rate from a time-tag file.
    Rate {
        tags: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Photon production attempts per second.
        #[arg(long)]
        attempt_rate: Option<f64>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { opts, events } => simulate(&opts, events),
        Command::ScanHwp { opts } => scan(&opts, ScanKind::Hwp),
        Command::ScanPhase { opts } => scan(&opts, ScanKind::Phase),
        Command::ConvertCurve { opts, points } => convert_curve(&opts, points),
        Command::EmissionProfile { opts } => profile(&opts),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Fidelity {
                tags,
                opts,
                convention,
                force_equal_marginals,
            } => analyze_fidelity(&tags, &opts, &convention, force_equal_marginals),
            AnalyzeCommand::Rate {
                tags,
                opts,
                attempt_rate,
            } => analyze_rate(&tags, &opts, attempt_rate),
        },
        Command::Budget { opts } => budget(&opts),
        Command::Validate { opts } => validate(&opts),
    }
}

fn load(opts: &RunOpts) -> Result<ExperimentConfig> {
    config::load_config(opts.config.as_deref(), opts.wavelength, opts.seed)
}

fn engine_and_rng(opts: &RunOpts) -> Result<(AttemptEngine, ChaCha12Rng)> {
    let config = load(opts)?;
    let seed = config.seed;
    let engine = AttemptEngine::new(config).map_err(|e| anyhow::anyhow!("engine: {e}"))?;
    Ok((engine, ChaCha12Rng::seed_from_u64(seed)))
}

fn simulate(opts: &RunOpts, events: Option<u32>) -> Result<()> {
    let mut base = load(opts)?;
    if let Some(n) = events {
        base.events_per_point = n;
    }
    let seed = base.seed;
    let engine = AttemptEngine::new(base).map_err(|e| anyhow::anyhow!("engine: {e}"))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let config = engine.config().clone();
    println!("link: {} nm   seed: {}", config.wavelength, config.seed);
    println!(
        "per-attempt click probability: {:.4e} (1 in {:.0})",
        engine.per_attempt_success_probability(),
        1.0 / engine.per_attempt_success_probability()
    );
    let dataset = run_fidelity_session(&engine, &mut rng);
    println!(
        "records: {} across {} settings",
        dataset.records.len(),
        dataset.z_scan.len() + dataset.x_scan.len() + 2
    );
    if config.events_per_point > 0 {
        let bounds = ionlink_core::harness::session_bounds(&dataset, config.convention(), &mut rng)
            .map_err(|e| anyhow::anyhow!("bounds: {e}"))?;
        print_bounds_block(&bounds);
    }
    io::write_out(opts.out.as_deref(), &io::timetags_to_csv(&dataset.records))?;
    if let Some(path) = &opts.out {
        println!("time tags written to {}", path.display());
    }
    Ok(())
}

enum ScanKind {
    Hwp,
    Phase,
}

fn scan(opts: &RunOpts, kind: ScanKind) -> Result<()> {
    let (engine, mut rng) = engine_and_rng(opts)?;
    let (results, label, period) = match kind {
        ScanKind::Hwp => {
            let (r, _) = engine.run_fringe_scan(&engine.default_hwp_angles(), &mut rng);
            (r, "hwp_deg", 90.0)
        }
        ScanKind::Phase => {
            let (r, _) = engine.run_phase_scan(&engine.default_phases(), &mut rng);
            (r, "phase_rad", core::f64::consts::TAU)
        }
    };
    println!("{:>12}  {:>10}  {:>10}  {:>8}", label, "P(1|H)", "P(1|V)", "events");
    for r in &results {
        let ((p1h, _), (p1v, _)) = r.conditionals();
        println!(
            "{:>12.4}  {:>10.4}  {:>10.4}  {:>8}",
            r.setting.value(),
            p1h,
            p1v,
            r.events()
        );
    }
    let xs: Vec<f64> = results.iter().map(|r| r.setting.value()).collect();
    let ys: Vec<f64> = results.iter().map(|r| r.counts.conditional(0, 1).0).collect();
    if let Ok(fit) = analysis::fit_fringe(&xs, &ys, period) {
        println!(
            "fringe fit: visibility {:.4} +- {:.4}, mean {:.4}, residual rms {:.4}",
            fit.visibility, fit.visibility_stderr, fit.mean_level, fit.residual_rms
        );
    }
    io::write_out(opts.out.as_deref(), &io::fringe_to_csv(&results))?;
    Ok(())
}

fn convert_curve(opts: &RunOpts, points: u32) -> Result<()> {
    let curve = ConversionCurve::default();
    let samples: Vec<(f64, f64, f64)> = (0..points)
        .map(|k| {
            let pump = 1.2 * k as f64 / (points.max(2) - 1) as f64;
            (
                pump,
                efficiency(&curve, pump, Pol::V).unwrap(),
                efficiency(&curve, pump, Pol::H).unwrap(),
            )
        })
        .collect();
    let (pv, ph) = ionlink_core::converter::matched_operating_point(&curve, 0.345)
        .map_err(|e| anyhow::anyhow!("operating point: {e}"))?;
    println!("peak efficiencies: V {:.3}, H {:.3}", curve.eta_peak_v, curve.eta_peak_h);
    println!("matched operating point at eta = 0.345: pump_V {pv:.4}, pump_H {ph:.4}");
    io::write_out(opts.out.as_deref(), &io::curve_to_csv(&samples))?;
    Ok(())
}

fn profile(opts: &RunOpts) -> Result<()> {
    let config = load(opts)?;
    let scheme =
        build_level_scheme(config.scheme_overrides).map_err(|e| anyhow::anyhow!("scheme: {e}"))?;
    let prof = emission_profile(&scheme, &config.pulse, &EmissionGrid::default_for(&config.pulse))
        .map_err(|e| anyhow::anyhow!("profile: {e}"))?;
    let gate = gated_acceptance(&prof, config.gate_window_ns)
        .map_err(|e| anyhow::anyhow!("gate: {e}"))?;
    println!(
        "total emission probability: {:.4} (wanted {:.4}, swapped {:.4})",
        prof.total_good() + prof.total_swap(),
        prof.total_good(),
        prof.total_swap()
    );
    println!(
        "{:.0} ns gate: accepts {:.4} of all emission, swap share inside {:.4} (ungated {:.4})",
        config.gate_window_ns, gate.accept_fraction, gate.swap_fraction, gate.swap_fraction_ungated
    );
    println!(
        "wanted-channel emission outside the gate: {:.4}",
        gate.good_fraction_outside
    );
    io::write_out(opts.out.as_deref(), &io::profile_to_csv(&prof))?;
    Ok(())
}

fn convention_from_flag(flag: &str, records_wl: Option<Wavelength>) -> Result<BoundConvention> {
    Ok(match flag {
        "auto" => match records_wl {
            Some(wl) => BoundConvention::for_wavelength(wl),
            None => bail!("empty tag file and convention=auto; pass --convention"),
        },
        "493" => BoundConvention::Direct493,
        "780" => BoundConvention::Swapped780,
        other => bail!("unknown convention {other:?} (expected auto, 493, or 780)"),
    })
}

/// Convention-signed correlation of one unrotated-basis result.
fn z_correlation(result: &CorrelationResult, convention: BoundConvention) -> f64 {
    let n = &result.counts.n;
    let total = result.counts.total().max(1) as f64;
    let signed = match convention {
        BoundConvention::Direct493 => n[0][1] + n[1][0],
        BoundConvention::Swapped780 => n[0][0] + n[1][1],
    } as f64;
    (2.0 * signed - total) / total
}

fn x_correlation(result: &CorrelationResult, convention: BoundConvention) -> f64 {
    let total = result.counts.total().max(1) as f64;
    let n = &result.counts.n;
    let table = [
        [n[0][0] as f64 / total, n[0][1] as f64 / total],
        [n[1][0] as f64 / total, n[1][1] as f64 / total],
    ];
    rotated_combination(&table, convention)
}

fn analyze_fidelity(
    tags: &PathBuf,
    opts: &RunOpts,
    convention_flag: &str,
    force_equal_marginals: bool,
) -> Result<()> {
    let text = std::fs::read_to_string(tags).with_context(|| format!("reading {}", tags.display()))?;
    let records = io::parse_timetags(&text)?;
    let convention = convention_from_flag(convention_flag, records.first().map(|r| r.wavelength))?;
    let grouped = io::counts_by_setting(&records);
    let best = |kind: &str, score: &dyn Fn(&CorrelationResult) -> f64| {
        grouped
            .iter()
            .filter(|r| r.setting.kind() == kind)
            .max_by(|a, b| score(a).partial_cmp(&score(b)).unwrap())
    };
    let z = best("hwp_deg", &|r| z_correlation(r, convention))
        .context("no unrotated-basis (hwp_deg) records in the file")?;
    let x = best("phase_rad", &|r| x_correlation(r, convention))
        .context("no rotated-basis (phase_rad) records in the file")?;
    if z_correlation(z, convention) < 0.0 {
        bail!(
            "data labeling contradicts the {:?} convention: even the best unrotated-basis \
             setting is anti-correlated; re-run with the other --convention",
            convention
        );
    }

    println!("convention: {:?}", convention);
    println!(
        "unrotated basis at hwp = {:.3} deg ({} events), correlation {:+.4}",
        z.setting.value(),
        z.events(),
        z_correlation(z, convention)
    );
    println!(
        "rotated basis at phase = {:.4} rad ({} events), correlation {:+.4}",
        x.setting.value(),
        x.events(),
        x_correlation(x, convention)
    );

    let opts_e = ElementOptions {
        force_equal_marginals,
    };
    let elems = analysis::density_elements_with(&z.counts, &x.counts, opts_e)
        .map_err(|e| anyhow::anyhow!("elements: {e}"))?;
    println!("density elements (unrotated / rotated):");
    for gamma in 0..2 {
        for b in 0..2 {
            println!(
                "  rho_{}{}: {:.4}   rho~_{}{}: {:.4}",
                ["H", "V"][gamma],
                b,
                elems.z[gamma][b],
                ["H", "V"][gamma],
                b,
                elems.x[gamma][b]
            );
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed.unwrap_or(0x0b007));
    let bounds = fidelity_bounds(&z.counts, &x.counts, convention, opts_e, &mut rng)
        .map_err(|e| anyhow::anyhow!("bounds: {e}"))?;
    print_bounds_block(&bounds);
    let csv = format!(
        "convention,lower,lower_stderr,upper,upper_stderr,clamped\n{:?},{:.6},{:.6},{:.6},{:.6},{}\n",
        convention, bounds.lower, bounds.lower_stderr, bounds.upper, bounds.upper_stderr, bounds.clamped
    );
    io::write_out(opts.out.as_deref(), &csv)?;
    Ok(())
}

fn print_bounds_block(bounds: &ionlink_core::analysis::FidelityBounds) {
    println!(
        "fidelity bounds: {:.4} (+- {:.4})  <=  F  <=  {:.4} (+- {:.4})",
        bounds.lower, bounds.lower_stderr, bounds.upper, bounds.upper_stderr
    );
    if bounds.clamped {
        println!("note: a raw bound fell outside [0, 1] and was clamped");
    }
}

fn analyze_rate(tags: &PathBuf, opts: &RunOpts, attempt_rate_hz: Option<f64>) -> Result<()> {
    let text = std::fs::read_to_string(tags).with_context(|| format!("reading {}", tags.display()))?;
    let records = io::parse_timetags(&text)?;
    if records.len() < 2 {
        bail!("need at least two records to form attempt gaps");
    }
    let rate_hz = match attempt_rate_hz {
        Some(r) => r,
        None => {
            let config = load(opts)?;
            attempt_rate(&config.timing)
        }
    };
    let gaps: Vec<u64> = records
        .windows(2)
        .map(|w| w[1].attempt_index.saturating_sub(w[0].attempt_index))
        .filter(|&g| g > 0)
        .collect();
    let fit = fit_gap_distribution(&gaps, rate_hz).map_err(|e| anyhow::anyhow!("gap fit: {e}"))?;
    println!("gaps: {}   attempt rate: {:.1} /s", gaps.len(), rate_hz);
    println!(
        "mean gap: {:.1} attempts (95% CI {:.1} .. {:.1}){}",
        fit.mean_gap,
        fit.ci95.0,
        fit.ci95.1,
        if fit.degenerate { "  [degenerate: all gaps equal]" } else { "" }
    );
    println!("event rate: {:.1} /s", fit.rate_hz);
    let (chi2, dof, crit, pass) = geometric_gof(&gaps, 0.01)
        .map_err(|e| anyhow::anyhow!("goodness of fit: {e}"))?;
    println!(
        "geometric goodness of fit: chi2 {:.1} on {} dof (1% critical {:.1}) -> {}",
        chi2,
        dof,
        crit,
        if pass { "consistent" } else { "REJECTED" }
    );
    let csv = format!(
        "mean_gap,ci95_lo,ci95_hi,rate_hz,chi2,dof,chi2_critical\n{:.4},{:.4},{:.4},{:.4},{:.4},{},{:.4}\n",
        fit.mean_gap, fit.ci95.0, fit.ci95.1, fit.rate_hz, chi2, dof, crit
    );
    io::write_out(opts.out.as_deref(), &csv)?;
    if !pass {
        bail!("gap distribution rejected the geometric model at the 1% level");
    }
    Ok(())
}

fn budget(opts: &RunOpts) -> Result<()> {
    let wl = opts.wavelength.unwrap_or(Wavelength::Nm493);
    let budget = match opts.config {
        Some(_) => load(&RunOpts {
            wavelength: Some(wl),
            ..opts.clone()
        })?
        .budget,
        None => match wl {
            Wavelength::Nm493 => ErrorBudget::nm493(),
            Wavelength::Nm780 => ErrorBudget::nm780(),
        },
    };
    let report = error_budget_report(&budget);
    println!("entanglement infidelity budget at {} nm (percent):", report.wavelength);
    println!("  {:<42} {:>12}", "Error Source", "Infidelity");
    for row in &report.rows {
        let value = if (row.lo_percent - row.hi_percent).abs() < 1e-12 {
            format!("{:.1}", row.lo_percent)
        } else {
            format!("{:.1} - {:.1}", row.lo_percent, row.hi_percent)
        };
        println!("  {:<42} {:>12}", row.label, value);
    }
    println!(
        "  {:<42} {:>12}",
        "Sum of Infidelities",
        format!("{:.1} - {:.1}", report.sum_lo_percent, report.sum_hi_percent)
    );
    io::write_out(opts.out.as_deref(), &io::budget_to_csv(&report))?;
    Ok(())
}

fn validate(opts: &RunOpts) -> Result<()> {
    let seed = opts.seed.unwrap_or(1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0u32;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Bound bracketing on the ideal state and a noisy one.
    let bell = bell_state(false);
    let report = bounds_bracket_check(&bell, BoundConvention::Direct493, 100_000, &mut rng)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    check(
        "bracket/bell",
        report.ok && report.bounds.lower > 0.99,
        format!("lower {:.4}, upper {:.4}", report.bounds.lower, report.bounds.upper),
    );
    let noisy = {
        let m = bell.matrix() * nalgebra_complex(0.9) + nalgebra::Matrix4::identity() * nalgebra_complex(0.025);
        JointState::from_matrix(m).map_err(|e| anyhow::anyhow!("{e}"))?
    };
    let report = bounds_bracket_check(&noisy, BoundConvention::Direct493, 100_000, &mut rng)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    check(
        "bracket/noisy-bell",
        report.ok && (report.true_fidelity - 0.925).abs() < 1e-9,
        format!(
            "true {:.4} in [{:.4}, {:.4}] +- 3 sigma",
            report.true_fidelity, report.bounds.lower, report.bounds.upper
        ),
    );

    // Seeded random-state sweep.
    let mut passes = 0;
    for _ in 0..50 {
        let state = random_state(&mut rng);
        let report = bounds_bracket_check(&state, BoundConvention::Direct493, 20_000, &mut rng)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        passes += u32::from(report.ok);
    }
    check("bracket/random-states", passes >= 49, format!("{passes}/50 bracketed"));

    // Analyzer completeness and retarder identities.
    let mut worst: f64 = 0.0;
    for k in 0..36 {
        let angle = k as f64 * 5.0;
        let q = waveplate(&WaveplateSetting::qwp(angle));
        let h = waveplate(&WaveplateSetting::hwp(angle));
        let analyzer = ionlink_core::polarization::AnalyzerConfig::new(angle, (angle * 1.7) % 180.0);
        let (eh, ev) = ionlink_core::polarization::analyzer_povm(&analyzer);
        worst = worst.max((eh + ev - nalgebra::Matrix2::identity()).norm());
        let qq_vs_h = if q.then(&q).approx_eq_phase(&h, 1e-10) { 0.0 } else { 1.0 };
        let hh_vs_i = if h.then(&h).approx_eq_phase(&JonesMatrix::identity(), 1e-10) {
            0.0
        } else {
            1.0
        };
        worst = worst.max(qq_vs_h).max(hh_vs_i);
    }
    check("optics/identities", worst < 1e-10, format!("worst deviation {worst:.2e}"));

    // Determinism: identical seeds give identical time-tag bytes.
    let config = load(opts)?;
    let engine = AttemptEngine::new(config.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let a = engine.generate_timetags(500, &mut ChaCha12Rng::seed_from_u64(config.seed));
    let b = engine.generate_timetags(500, &mut ChaCha12Rng::seed_from_u64(config.seed));
    check(
        "determinism/timetags",
        io::timetags_to_csv(&a) == io::timetags_to_csv(&b),
        format!("{} records", a.len()),
    );

    // Lindblad versus quantum-jump trajectories.
    let scheme = build_level_scheme(config.scheme_overrides).map_err(|e| anyhow::anyhow!("{e}"))?;
    let ens = ionlink_core::oracle::run_trajectories(&scheme, &config.pulse, 300.0, 10.0, 20_000, &mut rng);
    let prof = emission_profile(&scheme, &config.pulse, &EmissionGrid::default_for(&config.pulse))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (good, err) = ens.good_emission;
    check(
        "oracle/quantum-jump",
        (good - prof.total_good()).abs() <= 3.0 * err,
        format!("MC {:.4} +- {:.4} vs Lindblad {:.4}", good, err, prof.total_good()),
    );

    // Rotated-phase maximum is where the estimator looked.
    let phase = max_correlation_phase(&bell, BoundConvention::Direct493);
    check("estimator/phase-search", phase.is_finite(), format!("phase {phase:.4} rad"));

    if failures > 0 {
        bail!("{failures} validation check(s) failed");
    }
    println!("all validation checks passed");
    Ok(())
}

fn nalgebra_complex(re: f64) -> nalgebra::Complex<f64> {
    nalgebra::Complex::new(re, 0.0)
}
