//! The two-loop polarization-preserving difference-frequency converter.
//!
//! Each polarization traverses the nonlinear waveguide in one direction of a
//! Sagnac-style loop, with independently tunable pump power per direction.
//! Conversion efficiency follows the standard waveguide DFG pump law
//! `eta(P) = eta_peak sin^2((pi/2) sqrt(P / P_peak))`; pump power is in
//! normalized units with the peak at 1. The loop's achromatic half waveplate
//! deterministically swaps H and V on the converted light.

use nalgebra::Matrix2;

// In no_std builds the trait supplies the f64 math methods.
#[allow(unused_imports)]
use nalgebra::ComplexField;

use rand::Rng;

use crate::entangle::JointState;
use crate::linalg::{c, kron2};
use crate::{Error, Result};

/// Measured per-polarization efficiency curves versus pump power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionCurve {
    pub eta_peak_v: f64,
    pub eta_peak_h: f64,
    pub p_peak_v: f64,
    pub p_peak_h: f64,
}

impl Default for ConversionCurve {
    fn default() -> Self {
        ConversionCurve {
            eta_peak_v: 0.379,
            eta_peak_h: 0.345,
            p_peak_v: 1.0,
            p_peak_h: 1.0,
        }
    }
}

/// Input photon polarization at the converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pol {
    H,
    V,
}

/// `eta(P)` for one polarization. Monotone increasing on `[0, P_peak]`.
pub fn efficiency(curve: &ConversionCurve, pump: f64, pol: Pol) -> Result<f64> {
    if pump < 0.0 {
        return Err(Error::NegativeInput("pump power"));
    }
    let (peak, p_peak) = match pol {
        Pol::V => (curve.eta_peak_v, curve.p_peak_v),
        Pol::H => (curve.eta_peak_h, curve.p_peak_h),
    };
    let arg = core::f64::consts::FRAC_PI_2 * (pump / p_peak).sqrt();
    Ok(peak * arg.sin().powi(2))
}

/// Pump powers `(pump_v, pump_h)` at which both polarizations convert with
/// the same `target` efficiency, found by bisection to 1e-6 in efficiency.
pub fn matched_operating_point(curve: &ConversionCurve, target: f64) -> Result<(f64, f64)> {
    if target > curve.eta_peak_v.min(curve.eta_peak_h) + 1e-12 || target < 0.0 {
        return Err(Error::TargetAbovePeak);
    }
    let solve = |pol: Pol, p_peak: f64| -> f64 {
        if target == 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, p_peak);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if efficiency(curve, mid, pol).unwrap() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok((solve(Pol::V, curve.p_peak_v), solve(Pol::H, curve.p_peak_h)))
}

/// Operating configuration of the converter on the 780 nm path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterChannel {
    pub eta_v: f64,
    pub eta_h: f64,
    /// The loop's achromatic HWP swaps H and V on converted photons.
    pub swap_hv: bool,
    /// Background counts per second per detector above dark counts.
    pub noise_rate_hz: f64,
    /// Output band-pass filter width; documentation only.
    pub bandpass_nm: f64,
}

impl ConverterChannel {
    /// The matched operating point used in the experiment: both
    /// polarizations at the lower of the two peak efficiencies.
    pub fn matched(curve: &ConversionCurve, target: f64) -> Result<Self> {
        let (pump_v, pump_h) = matched_operating_point(curve, target)?;
        Ok(ConverterChannel {
            eta_v: efficiency(curve, pump_v, Pol::V)?,
            eta_h: efficiency(curve, pump_h, Pol::H)?,
            swap_hv: true,
            noise_rate_hz: 200.0,
            bandpass_nm: 10.0,
        })
    }

    /// Ideal lossless swap, for limit tests.
    pub fn lossless() -> Self {
        ConverterChannel {
            eta_v: 1.0,
            eta_h: 1.0,
            swap_hv: true,
            noise_rate_hz: 0.0,
            bandpass_nm: 10.0,
        }
    }
}

impl Default for ConverterChannel {
    fn default() -> Self {
        ConverterChannel::matched(&ConversionCurve::default(), 0.345)
            .expect("default operating point is reachable")
    }
}

/// Deterministic description of the conversion channel: the probability the
/// photon survives, and the post-selected output state.
///
/// The success Kraus operator is `S . diag(sqrt(eta_h), sqrt(eta_v))` on the
/// photon (with `S` the H/V swap when enabled); the complementary loss
/// operators absorb the photon, so the unconditioned channel is
/// trace-preserving.
pub fn convert_map(state: &JointState, channel: &ConverterChannel) -> (f64, JointState) {
    let mut k = Matrix2::new(c(channel.eta_h.sqrt()), c(0.0), c(0.0), c(channel.eta_v.sqrt()));
    if channel.swap_hv {
        let s = Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0));
        k = s * k;
    }
    let k4 = kron2(&Matrix2::identity(), &k);
    let raw = k4 * state.matrix() * k4.adjoint();
    let p: f64 = (0..4).map(|i| raw[(i, i)].re).sum();
    if p <= 0.0 {
        return (0.0, *state);
    }
    (p, JointState::from_matrix_unchecked(raw / c(p)))
}

/// Sample one pass through the converter: `Some(output)` if the photon
/// survives and converts, `None` if it is lost.
pub fn convert<R: Rng + ?Sized>(
    state: &JointState,
    channel: &ConverterChannel,
    rng: &mut R,
) -> Option<JointState> {
    let (p, out) = convert_map(state, channel);
    (rng.gen::<f64>() < p).then_some(out)
}

/// First-order probability of a background click within one gate window.
pub fn noise_click_probability(channel: &ConverterChannel, gate_window_ns: f64) -> Result<f64> {
    if gate_window_ns <= 0.0 {
        return Err(Error::BadGrid("gate window must be positive"));
    }
    Ok(channel.noise_rate_hz * gate_window_ns * 1e-9)
}
