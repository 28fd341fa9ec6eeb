//! Monte Carlo experiment driver: composes the atomic emission model, the
//! converter, the polarization chain, and the error budget into per-attempt
//! trials, and runs the calibration scans the fidelity estimate needs.
//!
//! One attempt samples, in order: photon emission (from the Bloch-model
//! temporal profile), the software gate, conversion and link losses
//! (Bernoulli thinning), background clicks, the analyzer outcome, the
//! conditional ion rotation at the fixed readout delay, and the ion
//! measurement through its confusion matrix. Only attempts with a click
//! return a time-tag record; everything is deterministic for a fixed seed.
//!
//! The multiple-excitation swap error is sampled from the emission profile
//! itself, so the engine strips `swap_prob` and `photon_production_err` from
//! the configured budget before applying the remaining channels; charging
//! those channels again on top of the microscopically sampled swap would
//! double-book the photon-production row of the error budget.

use alloc::vec::Vec;

use rand::Rng;

use crate::analysis::{
    fit_fringe, rotated_combination, BoundConvention, Counts, ElementOptions, FidelityBounds,
};
use crate::atomic::{
    attempt_rate, build_level_scheme, emission_profile, gated_acceptance, AtomicLevelScheme,
    DrivePulse, EmissionGrid, EmissionProfile, GateStats, SchemeOverrides, SequenceTiming,
};
use crate::converter::{convert_map, noise_click_probability, ConverterChannel};
use crate::entangle::{
    apply_error_budget, bell_state, project_perpendicular, raw_emission_state,
    rf_rotation, ErrorBudget, IonMeasurementModel, JointState,
};
use crate::polarization::{
    analyzer_povm, apply_photon_channel, calibrate_analyzer, AnalyzerConfig, FiberUnitary,
};
use crate::{Error, Result, Wavelength};

/// Calibrated per-attempt probability that the ion emits a collectable
/// photon. The upstream inputs never state this number; it is fitted so the
/// default direct-detection chain clicks once per 350 attempts.
pub const DEFAULT_EMISSION_PROB: f64 = 0.036518;

/// Analyzer calibration grid used by the engine (degrees).
const CALIBRATION_GRID_DEG: f64 = 2.0;

/// Full configuration of one simulated data-taking run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub wavelength: Wavelength,
    pub timing: SequenceTiming,
    pub budget: ErrorBudget,
    pub pulse: DrivePulse,
    pub scheme_overrides: SchemeOverrides,
    /// Per-attempt collectable-emission probability (fitted constant).
    pub emission_prob: f64,
    pub fiber_coupling: f64,
    /// Transmission of one inter-setup fiber link. The direct path crosses
    /// one link; the converted path crosses two.
    pub link_transmission: f64,
    pub det_eff_493: f64,
    pub det_eff_780: f64,
    /// Ion qubit splitting driven by the RF antenna (documentation).
    pub qubit_splitting_mhz: f64,
    /// Field defining the quantization axis (documentation).
    pub magnetic_field_gauss: f64,
    pub channel: Option<ConverterChannel>,
    pub events_per_point: u32,
    pub gate_window_ns: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Direct-detection defaults.
    pub fn nm493(seed: u64) -> Self {
        ExperimentConfig {
            wavelength: Wavelength::Nm493,
            timing: SequenceTiming::default(),
            budget: ErrorBudget::nm493(),
            pulse: DrivePulse::default_excitation(),
            scheme_overrides: SchemeOverrides::default(),
            emission_prob: DEFAULT_EMISSION_PROB,
            fiber_coupling: 0.38,
            link_transmission: 0.66,
            det_eff_493: 0.40,
            det_eff_780: 0.58,
            qubit_splitting_mhz: 14.67,
            magnetic_field_gauss: 5.23,
            channel: None,
            events_per_point: 500,
            gate_window_ns: 40.0,
            seed,
        }
    }

    /// Frequency-converted defaults: matched converter, 780 nm budget.
    pub fn nm780(seed: u64) -> Self {
        ExperimentConfig {
            wavelength: Wavelength::Nm780,
            budget: ErrorBudget::nm780(),
            channel: Some(ConverterChannel::default()),
            ..Self::nm493(seed)
        }
    }

    pub fn convention(&self) -> BoundConvention {
        BoundConvention::for_wavelength(self.wavelength)
    }

    pub fn detector_efficiency(&self) -> f64 {
        match self.wavelength {
            Wavelength::Nm493 => self.det_eff_493,
            Wavelength::Nm780 => self.det_eff_780,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        self.budget.validate()?;
        self.pulse.validate()?;
        let effs = [
            self.emission_prob,
            self.fiber_coupling,
            self.link_transmission,
            self.det_eff_493,
            self.det_eff_780,
        ];
        if effs.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::BadBranching);
        }
        if self.wavelength == Wavelength::Nm780 && self.channel.is_none() {
            return Err(Error::BadGrid("780 nm path requires a converter channel"));
        }
        if self.budget.wavelength != self.wavelength {
            return Err(Error::BadGrid("budget wavelength tag mismatch"));
        }
        Ok(())
    }
}

/// Which detector fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    /// PBS transmitted port, the H-type outcome.
    Apd1,
    /// PBS reflected port, the V-type outcome.
    Apd2,
}

/// Measurement setting of one scan point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementSetting {
    /// Unrotated basis at an absolute HWP angle (degrees); no RF pulse.
    UnrotatedHwp(f64),
    /// Rotated basis: HWP offset by 22.5 degrees from calibration, ion
    /// rotated by pi/2 with this RF phase (radians).
    RotatedPhase(f64),
}

impl MeasurementSetting {
    pub fn kind(&self) -> &'static str {
        match self {
            MeasurementSetting::UnrotatedHwp(_) => "hwp_deg",
            MeasurementSetting::RotatedPhase(_) => "phase_rad",
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            MeasurementSetting::UnrotatedHwp(v) => *v,
            MeasurementSetting::RotatedPhase(v) => *v,
        }
    }
}

/// One detected photon with its conditioned ion outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeTagRecord {
    pub attempt_index: u64,
    pub detector: Detector,
    /// Arrival time within the tag window, ns after the excitation pulse.
    pub photon_time_ns: f64,
    pub setting: MeasurementSetting,
    pub ion_outcome: u8,
    pub wavelength: Wavelength,
}

/// Counts and conditionals collected at one measurement setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub setting: MeasurementSetting,
    pub counts: Counts,
}

impl CorrelationResult {
    /// `P(1|H)` and `P(1|V)` with binomial standard errors.
    pub fn conditionals(&self) -> ((f64, f64), (f64, f64)) {
        (self.counts.conditional(0, 1), self.counts.conditional(1, 1))
    }

    pub fn events(&self) -> u64 {
        self.counts.total()
    }
}

/// Precomputed sampling tables for one run configuration.
pub struct AttemptEngine {
    config: ExperimentConfig,
    pub scheme: AtomicLevelScheme,
    pub profile: EmissionProfile,
    pub gate: GateStats,
    pub fiber: FiberUnitary,
    pub analyzer_z: AnalyzerConfig,
    /// Post-channel joint state when the wanted emission path fired.
    rho_good: JointState,
    /// Post-channel joint state for the polarization-swapped path.
    rho_swap: JointState,
    measurement: IonMeasurementModel,
    p_signal: f64,
    p_noise: f64,
    /// In-gate arrival-time inverse CDF grids per branch.
    time_cdf_good: Vec<(f64, f64)>,
    time_cdf_swap: Vec<(f64, f64)>,
}

impl AttemptEngine {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scheme = build_level_scheme(config.scheme_overrides)?;
        let profile = emission_profile(
            &scheme,
            &config.pulse,
            &EmissionGrid::default_for(&config.pulse),
        )?;
        let gate = gated_acceptance(&profile, config.gate_window_ns)?;

        // Wanted-emission branch state, pushed through the converter (if
        // present) and the residual error channels. The swap and production
        // errors are already represented by the emission-profile branch
        // sampling, so they are zeroed in the channel stack; the
        // misalignment channel models drift accumulated after analyzer
        // calibration, so it is held back until the calibration has run.
        let mut rho_good = project_perpendicular(&raw_emission_state());
        if let Some(channel) = &config.channel {
            rho_good = convert_map(&rho_good, channel).1;
        }
        let mut residual = config.budget;
        residual.swap_prob = 0.0;
        residual.photon_production_err = 0.0;
        let misalignment = residual.pol_rotation_err;
        residual.pol_rotation_err = 0.0;
        rho_good = apply_error_budget(&rho_good, &residual, config.wavelength)?;

        // Deterministic fiber draw from the run seed; the analyzer
        // calibration then compensates it exactly up to the grid residual.
        let mut cal_rng = seed_rng(config.seed ^ 0x00f1_be72);
        let fiber = FiberUnitary::random(&mut cal_rng);
        let mut analyzer_z = calibrate_analyzer(&fiber, &rho_good, CALIBRATION_GRID_DEG)?;
        if config.convention() == BoundConvention::Swapped780 {
            // Keep the converted link's swapped labeling: H pairs with ion 0.
            analyzer_z = analyzer_z.with_hwp_offset(45.0);
        }

        // The swapped-emission branch flips H and V in the frame the
        // analyzer actually resolves. Expressing the flip in the analyzed
        // frame pins the swap's rotated-basis fringe to the wanted branch's
        // phase, which is what the visibility-maximizing waveplate
        // calibration converges to; a lab-frame flip would add a
        // seed-dependent rotated-basis leak through the arbitrary phase of
        // the fiber compensation.
        let mut rho_swap = {
            use nalgebra::Complex;
            let chain = fiber.jones.then(&analyzer_z.chain()).0;
            let sx = nalgebra::Matrix2::new(
                Complex::new(0.0, 0.0),
                Complex::new(1.0, 0.0),
                Complex::new(1.0, 0.0),
                Complex::new(0.0, 0.0),
            );
            let flip = crate::linalg::kron2(
                &nalgebra::Matrix2::identity(),
                &(chain.adjoint() * sx * chain),
            );
            JointState::from_matrix_unchecked(flip * rho_good.matrix() * flip.adjoint())
        };

        if misalignment > 0.0 {
            let u = crate::linalg::kron2(
                &nalgebra::Matrix2::identity(),
                &crate::entangle::misalignment_unitary(misalignment),
            );
            let drift = |state: &JointState| {
                JointState::from_matrix_unchecked(u * state.matrix() * u.adjoint())
            };
            rho_good = drift(&rho_good);
            rho_swap = drift(&rho_swap);
        }

        let p_click_per_branch = config.emission_prob
            * gate.accept_fraction
            * config.fiber_coupling
            * config.link_transmission
            * config.detector_efficiency();
        let p_signal = match &config.channel {
            None => p_click_per_branch,
            Some(channel) => {
                // Equal matched efficiencies; use the good-branch success.
                let (p_conv, _) = convert_map(&bell_state(false), channel);
                p_click_per_branch * p_conv * config.link_transmission
            }
        };
        let p_noise = match &config.channel {
            None => 0.0,
            Some(channel) => 2.0 * noise_click_probability(channel, config.gate_window_ns)?,
        };

        let time_cdf = |intensity: &[f64]| -> Vec<(f64, f64)> {
            let mut cdf = Vec::new();
            let mut acc = 0.0;
            cdf.push((0.0, 0.0));
            for w in 0..profile.times_ns.len() - 1 {
                let (t0, t1) = (profile.times_ns[w], profile.times_ns[w + 1]);
                if t0 >= config.gate_window_ns {
                    break;
                }
                acc += 0.5 * (intensity[w] + intensity[w + 1]) * (t1 - t0);
                cdf.push((t1.min(config.gate_window_ns), acc));
            }
            let total = cdf.last().map(|&(_, a)| a).unwrap_or(0.0).max(1e-300);
            cdf.iter().map(|&(t, a)| (t, a / total)).collect()
        };
        Ok(AttemptEngine {
            measurement: IonMeasurementModel::shelving_limited(config.budget.detection_err),
            time_cdf_good: time_cdf(&profile.intensity_good),
            time_cdf_swap: time_cdf(&profile.intensity_swap),
            config,
            scheme,
            profile,
            gate,
            fiber,
            analyzer_z,
            rho_good,
            rho_swap,
            p_signal,
            p_noise,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Closed-form product of the stage efficiencies for a signal click.
    pub fn per_attempt_success_probability(&self) -> f64 {
        self.p_signal
    }

    pub fn attempt_rate_hz(&self) -> f64 {
        attempt_rate(&self.config.timing)
    }

    fn analyzer_for(&self, setting: &MeasurementSetting) -> AnalyzerConfig {
        match setting {
            MeasurementSetting::UnrotatedHwp(deg) => {
                let mut cfg = self.analyzer_z;
                cfg.hwp = crate::polarization::WaveplateSetting::hwp(*deg);
                cfg
            }
            MeasurementSetting::RotatedPhase(_) => self.analyzer_z.with_hwp_offset(22.5),
        }
    }

    /// The calibrated unrotated-basis setting.
    pub fn z_setting(&self) -> MeasurementSetting {
        MeasurementSetting::UnrotatedHwp(self.analyzer_z.hwp.fast_axis_deg)
    }

    /// Exact conditional-probability table at a setting, readout errors
    /// included: `p[gamma][b]` normalized per gamma.
    pub fn expected_conditionals(&self, setting: &MeasurementSetting) -> [[f64; 2]; 2] {
        let tables = [
            self.outcome_tables_for_state(&self.rho_good, setting),
            self.outcome_tables_for_state(&self.rho_swap, setting),
        ];
        let s = self.gate.swap_fraction;
        let total_click = self.p_noise + self.p_signal;
        let noise_share = if total_click > 0.0 {
            self.p_noise / total_click
        } else {
            0.0
        };
        let mut joint = [[0.0; 2]; 2];
        for gamma in 0..2 {
            for b in 0..2 {
                joint[gamma][b] = (1.0 - noise_share)
                    * ((1.0 - s) * tables[0][gamma][b] + s * tables[1][gamma][b])
                    + noise_share * 0.25;
            }
        }
        // Readout confusion on the ion outcome.
        let mut out = [[0.0; 2]; 2];
        for gamma in 0..2 {
            for b_true in 0..2 {
                for (b_rep, slot) in out[gamma].iter_mut().enumerate() {
                    *slot += joint[gamma][b_true] * self.measurement.confusion[b_true][b_rep];
                }
            }
        }
        for row in &mut out {
            let norm = row[0] + row[1];
            if norm > 0.0 {
                row[0] /= norm;
                row[1] /= norm;
            }
        }
        out
    }

    fn sample_time<R: Rng + ?Sized>(&self, cdf: &[(f64, f64)], rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let i = cdf.partition_point(|&(_, a)| a < u);
        if i == 0 {
            return cdf[0].0;
        }
        if i >= cdf.len() {
            return cdf.last().unwrap().0;
        }
        let (t0, a0) = cdf[i - 1];
        let (t1, a1) = cdf[i];
        if a1 <= a0 {
            return t1;
        }
        t0 + (u - a0) / (a1 - a0) * (t1 - t0)
    }

    /// Run one production attempt; a record comes back only on a click.
    pub fn run_attempt<R: Rng + ?Sized>(
        &self,
        attempt_index: u64,
        setting: &MeasurementSetting,
        rng: &mut R,
    ) -> Option<TimeTagRecord> {
        let u: f64 = rng.gen();
        let is_signal = u < self.p_signal;
        let is_noise = !is_signal && u < self.p_signal + self.p_noise;
        if !is_signal && !is_noise {
            return None;
        }
        let (gamma, ion_true, photon_time) = if is_signal {
            let swap = rng.gen::<f64>() < self.gate.swap_fraction;
            let (table, cdf) = if swap {
                (&self.rho_swap, &self.time_cdf_swap)
            } else {
                (&self.rho_good, &self.time_cdf_good)
            };
            let probs = self.outcome_tables_for_state(table, setting);
            let t = self.sample_time(cdf, rng);
            let (gamma, b) = sample_joint(&probs, rng);
            (gamma, b, t)
        } else {
            // Background click: unpolarized photon, uncorrelated ion.
            let gamma = usize::from(rng.gen::<f64>() < 0.5);
            let p1 = self.rho_good.ion_marginal()[(1, 1)].re.clamp(0.0, 1.0);
            let b = usize::from(rng.gen::<f64>() < p1);
            let t = rng.gen::<f64>() * self.config.gate_window_ns;
            (gamma, b, t)
        };
        let row = self.measurement.confusion[ion_true];
        let reported = u8::from(rng.gen::<f64>() >= row[0]);
        Some(TimeTagRecord {
            attempt_index,
            detector: if gamma == 0 { Detector::Apd1 } else { Detector::Apd2 },
            photon_time_ns: photon_time,
            setting: *setting,
            ion_outcome: reported,
            wavelength: self.config.wavelength,
        })
    }

    fn outcome_tables_for_state(
        &self,
        state: &JointState,
        setting: &MeasurementSetting,
    ) -> [[f64; 2]; 2] {
        let analyzer = self.analyzer_for(setting);
        let (eh, ev) = analyzer_povm(&analyzer);
        let seen = apply_photon_channel(state, &self.fiber.jones).expect("fiber stays unitary");
        let rotated = match setting {
            MeasurementSetting::UnrotatedHwp(_) => seen,
            MeasurementSetting::RotatedPhase(phase) => rf_rotation(
                &seen,
                core::f64::consts::FRAC_PI_2,
                *phase,
                self.config.budget.rf_gate_err,
            ),
        };
        let mut out = [[0.0; 2]; 2];
        for (gi, e) in [&eh, &ev].into_iter().enumerate() {
            for b in 0..2 {
                let op = crate::entangle::ion_projector(b as u8)
                    * crate::linalg::kron2(&nalgebra::Matrix2::identity(), e);
                out[gi][b] = rotated.expect(&op).max(0.0);
            }
        }
        out
    }

    /// Collect `n_events` records at one setting, starting from attempt
    /// `*attempt_index`. The counter advances across calls so gaps follow
    /// the per-attempt click statistics.
    pub fn run_point<R: Rng + ?Sized>(
        &self,
        setting: &MeasurementSetting,
        n_events: u32,
        attempt_index: &mut u64,
        records: &mut Vec<TimeTagRecord>,
        rng: &mut R,
    ) -> CorrelationResult {
        let mut counts = Counts::default();
        let mut collected = 0;
        let p = self.p_signal + self.p_noise;
        let cap = if p < 1e-9 {
            0
        } else {
            (n_events as f64 / p * 50.0) as u64
        };
        let mut tried = 0;
        while collected < n_events && tried < cap {
            *attempt_index += 1;
            tried += 1;
            if let Some(record) = self.run_attempt(*attempt_index, setting, rng) {
                let gamma = usize::from(record.detector == Detector::Apd2);
                counts.add(gamma, record.ion_outcome as usize);
                records.push(record);
                collected += 1;
            }
        }
        CorrelationResult {
            setting: *setting,
            counts,
        }
    }

    /// Unrotated-basis fringe scan over absolute HWP angles.
    pub fn run_fringe_scan<R: Rng + ?Sized>(
        &self,
        angles_deg: &[f64],
        rng: &mut R,
    ) -> (Vec<CorrelationResult>, Vec<TimeTagRecord>) {
        let mut records = Vec::new();
        let mut attempt = 0;
        let results = angles_deg
            .iter()
            .map(|&a| {
                self.run_point(
                    &MeasurementSetting::UnrotatedHwp(a),
                    self.config.events_per_point,
                    &mut attempt,
                    &mut records,
                    rng,
                )
            })
            .collect();
        (results, records)
    }

    /// Rotated-basis scan over RF phases.
    pub fn run_phase_scan<R: Rng + ?Sized>(
        &self,
        phases_rad: &[f64],
        rng: &mut R,
    ) -> (Vec<CorrelationResult>, Vec<TimeTagRecord>) {
        let mut records = Vec::new();
        let mut attempt = 0;
        let results = phases_rad
            .iter()
            .map(|&p| {
                self.run_point(
                    &MeasurementSetting::RotatedPhase(p),
                    self.config.events_per_point,
                    &mut attempt,
                    &mut records,
                    rng,
                )
            })
            .collect();
        (results, records)
    }

    /// Default scan grids: 19 HWP angles spanning +/-45 degrees around the
    /// calibrated optimum, and 16 RF phases over a full turn.
    pub fn default_hwp_angles(&self) -> Vec<f64> {
        let center = self.analyzer_z.hwp.fast_axis_deg;
        (-9..=9).map(|k| center + k as f64 * 5.0).collect()
    }

    pub fn default_phases(&self) -> Vec<f64> {
        (0..=16)
            .map(|k| k as f64 / 16.0 * core::f64::consts::TAU)
            .collect()
    }

    /// The RF phase maximizing the convention-signed rotated correlation,
    /// from the exact model (no sampling noise).
    pub fn max_correlation_phase(&self) -> f64 {
        let convention = self.config.convention();
        let combo = |phi: f64| {
            let p = self.expected_conditionals(&MeasurementSetting::RotatedPhase(phi));
            rotated_combination(&joint_from_conditionals(&p), convention)
        };
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 0..64 {
            let phi = k as f64 / 64.0 * core::f64::consts::TAU;
            let v = combo(phi);
            if v > best.1 {
                best = (phi, v);
            }
        }
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let (mut a, mut b) = (best.0 - 0.1, best.0 + 0.1);
        let mut c1 = b - (b - a) * INV_PHI;
        let mut c2 = a + (b - a) * INV_PHI;
        let (mut f1, mut f2) = (combo(c1), combo(c2));
        for _ in 0..40 {
            if f1 > f2 {
                b = c2;
                c2 = c1;
                f2 = f1;
                c1 = b - (b - a) * INV_PHI;
                f1 = combo(c1);
            } else {
                a = c1;
                c1 = c2;
                f1 = f2;
                c2 = a + (b - a) * INV_PHI;
                f2 = combo(c2);
            }
        }
        0.5 * (a + b)
    }

    /// Time-tag stream at the calibrated unrotated setting.
    pub fn generate_timetags<R: Rng + ?Sized>(
        &self,
        n_events: u32,
        rng: &mut R,
    ) -> Vec<TimeTagRecord> {
        let mut records = Vec::new();
        let mut attempt = 0;
        self.run_point(&self.z_setting(), n_events, &mut attempt, &mut records, rng);
        records
    }
}

fn joint_from_conditionals(p: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    // Equal photon marginals; only the combination's sign structure matters.
    [
        [0.5 * p[0][0], 0.5 * p[0][1]],
        [0.5 * p[1][0], 0.5 * p[1][1]],
    ]
}

fn sample_joint<R: Rng + ?Sized>(table: &[[f64; 2]; 2], rng: &mut R) -> (usize, usize) {
    let total: f64 = table.iter().flatten().sum();
    let mut u: f64 = rng.gen::<f64>() * total;
    for gamma in 0..2 {
        for b in 0..2 {
            u -= table[gamma][b];
            if u < 0.0 {
                return (gamma, b);
            }
        }
    }
    (1, 1)
}

/// Seed a deterministic child generator.
pub fn seed_rng(seed: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}

/// Everything the fidelity estimate needs from one simulated session.
#[derive(Debug, Clone)]
pub struct FidelityDataset {
    pub z_scan: Vec<CorrelationResult>,
    pub x_scan: Vec<CorrelationResult>,
    /// Dedicated batch at the calibrated maximum-correlation HWP angle.
    pub z_best: CorrelationResult,
    /// Dedicated batch at the fitted maximum-correlation RF phase.
    pub x_best: CorrelationResult,
    pub records: Vec<TimeTagRecord>,
}

/// Run the full calibration-scan-measure session with one attempt counter,
/// so record indices stay strictly increasing across the whole run.
pub fn run_fidelity_session<R: Rng + ?Sized>(
    engine: &AttemptEngine,
    rng: &mut R,
) -> FidelityDataset {
    let events = engine.config().events_per_point;
    let mut records = Vec::new();
    let mut attempt = 0;
    let z_scan: Vec<CorrelationResult> = engine
        .default_hwp_angles()
        .iter()
        .map(|&a| {
            engine.run_point(
                &MeasurementSetting::UnrotatedHwp(a),
                events,
                &mut attempt,
                &mut records,
                rng,
            )
        })
        .collect();
    let x_scan: Vec<CorrelationResult> = engine
        .default_phases()
        .iter()
        .map(|&p| {
            engine.run_point(
                &MeasurementSetting::RotatedPhase(p),
                events,
                &mut attempt,
                &mut records,
                rng,
            )
        })
        .collect();
    let z_best = engine.run_point(&engine.z_setting(), events, &mut attempt, &mut records, rng);
    let phase = engine.max_correlation_phase();
    let x_best = engine.run_point(
        &MeasurementSetting::RotatedPhase(phase),
        events,
        &mut attempt,
        &mut records,
        rng,
    );
    FidelityDataset {
        z_scan,
        x_scan,
        z_best,
        x_best,
        records,
    }
}

/// Estimate the fidelity bounds from a session dataset.
pub fn session_bounds<R: Rng + ?Sized>(
    dataset: &FidelityDataset,
    convention: BoundConvention,
    rng: &mut R,
) -> Result<FidelityBounds> {
    crate::analysis::fidelity_bounds(
        &dataset.z_best.counts,
        &dataset.x_best.counts,
        convention,
        ElementOptions::default(),
        rng,
    )
}

/// Fit both scans' fringes; returns `(hwp_fit, phase_fit)` on `P(1|H)`.
pub fn session_fringe_fits(dataset: &FidelityDataset) -> Result<(crate::analysis::FringeFit, crate::analysis::FringeFit)> {
    let xs: Vec<f64> = dataset.z_scan.iter().map(|r| r.setting.value()).collect();
    let ys: Vec<f64> = dataset
        .z_scan
        .iter()
        .map(|r| r.counts.conditional(0, 1).0)
        .collect();
    let hwp = fit_fringe(&xs, &ys, 90.0)?;
    let xs: Vec<f64> = dataset.x_scan.iter().map(|r| r.setting.value()).collect();
    let ys: Vec<f64> = dataset
        .x_scan
        .iter()
        .map(|r| r.counts.conditional(0, 1).0)
        .collect();
    let phase = fit_fringe(&xs, &ys, core::f64::consts::TAU)?;
    Ok((hwp, phase))
}
