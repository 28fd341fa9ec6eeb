//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys match the
//! configuration field names. Unknown keys are an error so typos cannot
//! silently fall back to defaults.

use anyhow::{bail, Context, Result};
use ionlink_core::converter::ConverterChannel;
use ionlink_core::entangle::DephasingEnvelope;
use ionlink_core::harness::ExperimentConfig;
use ionlink_core::Wavelength;
use std::path::Path;

/// Parse a wavelength tag (`493` or `780`).
pub fn parse_wavelength(s: &str) -> Result<Wavelength> {
    match s.trim() {
        "493" => Ok(Wavelength::Nm493),
        "780" => Ok(Wavelength::Nm780),
        other => bail!("unknown wavelength {other:?} (expected 493 or 780)"),
    }
}

/// Build a configuration: wavelength preset, then file overrides, then the
/// command-line seed override.
pub fn load_config(
    path: Option<&Path>,
    cli_wavelength: Option<Wavelength>,
    cli_seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading config {}", p.display()))?,
        None => String::new(),
    };
    let pairs = parse_pairs(&text)?;

    // Wavelength: CLI flag wins, then the file, then the 493 default.
    let mut wavelength = cli_wavelength;
    for (key, value) in &pairs {
        if key == "wavelength" {
            let from_file = parse_wavelength(value)?;
            wavelength.get_or_insert(from_file);
        }
    }
    let wavelength = wavelength.unwrap_or(Wavelength::Nm493);
    let mut config = match wavelength {
        Wavelength::Nm493 => ExperimentConfig::nm493(0),
        Wavelength::Nm780 => ExperimentConfig::nm780(0),
    };

    for (key, value) in &pairs {
        apply(&mut config, key, value)
            .with_context(|| format!("config key {key:?} = {value:?}"))?;
    }
    if let Some(seed) = cli_seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
    Ok(config)
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got {raw:?}", lineno + 1);
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn apply(config: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let f = || -> Result<f64> { Ok(value.parse::<f64>()?) };
    fn channel(config: &mut ExperimentConfig) -> &mut ConverterChannel {
        config.channel.get_or_insert_with(ConverterChannel::default)
    }
    match key {
        "wavelength" => {} // handled during preset selection
        "seed" => config.seed = value.parse()?,
        "events_per_point" => config.events_per_point = value.parse()?,
        "gate_window_ns" => config.gate_window_ns = f()?,
        "emission_prob" => config.emission_prob = f()?,
        "fiber_coupling" => config.fiber_coupling = f()?,
        "link_transmission" => config.link_transmission = f()?,
        "det_eff_493" => config.det_eff_493 = f()?,
        "det_eff_780" => config.det_eff_780 = f()?,
        "qubit_splitting_mhz" => config.qubit_splitting_mhz = f()?,
        "magnetic_field_gauss" => config.magnetic_field_gauss = f()?,

        "prep_us" => config.timing.prep_us = f()?,
        "cleanout_us" => config.timing.cleanout_us = f()?,
        "excitation_us" => config.timing.excitation_us = f()?,
        "tag_window_us" => config.timing.tag_window_us = f()?,
        "burst_size" => config.timing.burst_size = value.parse()?,
        "cooling_us" => config.timing.cooling_us = f()?,
        "readout_overhead_us" => config.timing.readout_overhead_us = f()?,

        "swap_prob" => config.budget.swap_prob = f()?,
        "snr" => config.budget.snr = f()?,
        "snr_attributed_infidelity" => config.budget.snr_attributed_infidelity = f()?,
        "photon_production_err" => config.budget.photon_production_err = f()?,
        "rf_gate_err" => config.budget.rf_gate_err = f()?,
        "detection_err" => config.budget.detection_err = f()?,
        "pol_rotation_err" => config.budget.pol_rotation_err = f()?,
        "t2_no_echo_us" => config.budget.t2_no_echo_us = f()?,
        "t2_echo_us" => config.budget.t2_echo_us = f()?,
        "qubit_delay_us" => config.budget.qubit_delay_us = f()?,
        "dephasing_envelope" => {
            config.budget.envelope = match value {
                "exp" | "exponential" => DephasingEnvelope::Exponential,
                "gauss" | "gaussian" => DephasingEnvelope::Gaussian,
                other => bail!("unknown envelope {other:?} (expected exp or gauss)"),
            }
        }

        "rabi_rad_per_ns" => config.pulse.rabi_rad_per_ns = f()?,
        "detuning_rad_per_ns" => config.pulse.detuning_rad_per_ns = f()?,
        "pulse_start_ns" => config.pulse.start_ns = f()?,
        "pulse_duration_ns" => config.pulse.duration_ns = f()?,

        "p_lifetime_ns" => config.scheme_overrides.p_lifetime_ns = Some(f()?),
        "branch_d" => config.scheme_overrides.branch_d = Some(f()?),

        "eta_v" => channel(config).eta_v = f()?,
        "eta_h" => channel(config).eta_h = f()?,
        "swap_hv" => channel(config).swap_hv = value.parse()?,
        "noise_rate_hz" => channel(config).noise_rate_hz = f()?,
        "bandpass_nm" => channel(config).bandpass_nm = f()?,

        other => bail!("unknown configuration key {other:?}"),
    }
    Ok(())
}
