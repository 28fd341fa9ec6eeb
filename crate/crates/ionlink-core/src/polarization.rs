//! Jones-calculus polarization optics: waveplates, polarization analyzers,
//! fiber birefringence, and the analyzer calibration search.
//!
//! Conventions, fixed once for the whole crate:
//!
//! - The photon basis is `{|H>, |V>}` in that order.
//! - A waveplate with fast axis at angle `theta` (degrees, measured from H
//!   towards V in a right-handed frame) and retardance `delta` has the Jones
//!   matrix `R(theta) diag(exp(-i delta/2), exp(+i delta/2)) R(-theta)`;
//!   the fast axis acquires the negative phase.
//! - Light traverses the analyzer as QWP, then HWP, then the PBS. The PBS
//!   transmitted port (H outcome) feeds APD-1, the reflected port (V) APD-2.

use alloc::vec::Vec;

use nalgebra::Matrix2;

// In no_std builds the trait supplies the f64 math methods.
#[allow(unused_imports)]
use nalgebra::ComplexField;

use rand::Rng;

use crate::entangle::JointState;
use crate::linalg::{c, equal_up_to_phase, kron2, C64, I};
use crate::{Error, Result};

/// A lossless polarization transformation on the `{|H>, |V>}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub Matrix2<C64>);

impl JonesMatrix {
    pub fn identity() -> Self {
        JonesMatrix(Matrix2::identity())
    }

    /// Construct from a raw matrix, checking unitarity.
    pub fn from_matrix(m: Matrix2<C64>) -> Result<Self> {
        let j = JonesMatrix(m);
        if !j.is_unitary(1e-10) {
            return Err(Error::NonUnitary);
        }
        Ok(j)
    }

    /// Rotation of the polarization plane by `angle_rad`.
    pub fn rotation(angle_rad: f64) -> Self {
        let (s, co) = (angle_rad.sin(), angle_rad.cos());
        JonesMatrix(Matrix2::new(c(co), c(-s), c(s), c(co)))
    }

    /// Rotation by `angle_rad` about an arbitrary axis `(nx, ny, nz)` of the
    /// polarization Bloch sphere (z = H/V, x = D/A, y = circular).
    pub fn axis_rotation(axis: [f64; 3], angle_rad: f64) -> Self {
        JonesMatrix(crate::linalg::su2_rotation(axis, angle_rad))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.0.adjoint() * self.0 - Matrix2::identity()).norm() <= tol
    }

    pub fn then(&self, next: &JonesMatrix) -> JonesMatrix {
        JonesMatrix(next.0 * self.0)
    }

    /// Equality up to a global phase.
    pub fn approx_eq_phase(&self, other: &JonesMatrix, tol: f64) -> bool {
        equal_up_to_phase(&self.0, &other.0, tol)
    }
}

/// Orientation of a single retarder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplateSetting {
    /// Retardance in radians: `pi` for a half waveplate, `pi/2` for a quarter.
    pub retardance_rad: f64,
    /// Fast-axis angle in degrees, normalized to `[0, 180)`.
    pub fast_axis_deg: f64,
}

impl WaveplateSetting {
    pub fn hwp(fast_axis_deg: f64) -> Self {
        WaveplateSetting {
            retardance_rad: core::f64::consts::PI,
            fast_axis_deg: normalize_angle(fast_axis_deg),
        }
    }

    pub fn qwp(fast_axis_deg: f64) -> Self {
        WaveplateSetting {
            retardance_rad: core::f64::consts::FRAC_PI_2,
            fast_axis_deg: normalize_angle(fast_axis_deg),
        }
    }
}

/// Normalize a waveplate angle to `[0, 180)` degrees.
pub fn normalize_angle(deg: f64) -> f64 {
    let mut a = deg % 180.0;
    if a < 0.0 {
        a += 180.0;
    }
    a
}

/// Jones matrix of an ideal retarder at the given setting.
pub fn waveplate(setting: &WaveplateSetting) -> JonesMatrix {
    let delta = setting.retardance_rad;
    let theta = setting.fast_axis_deg.to_radians();
    let fast = (-I * c(delta / 2.0)).exp();
    let slow = (I * c(delta / 2.0)).exp();
    let d = Matrix2::new(fast, c(0.0), c(0.0), slow);
    let r = JonesMatrix::rotation(theta).0;
    JonesMatrix(r * d * r.transpose())
}

/// One polarization analyzer: QWP and HWP followed by a PBS.
///
/// `pbs_extinction` is the probability that a photon exits the wrong PBS
/// port; 0 is an ideal cube. The transmitted port (H outcome) is APD-1 and
/// the reflected port (V outcome) is APD-2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerConfig {
    pub qwp: WaveplateSetting,
    pub hwp: WaveplateSetting,
    pub pbs_extinction: f64,
}

impl AnalyzerConfig {
    pub fn new(qwp_deg: f64, hwp_deg: f64) -> Self {
        AnalyzerConfig {
            qwp: WaveplateSetting::qwp(qwp_deg),
            hwp: WaveplateSetting::hwp(hwp_deg),
            pbs_extinction: 0.0,
        }
    }

    /// The combined waveplate chain ahead of the PBS.
    pub fn chain(&self) -> JonesMatrix {
        waveplate(&self.qwp).then(&waveplate(&self.hwp))
    }

    /// Same analyzer with the HWP advanced by `deg`.
    pub fn with_hwp_offset(&self, deg: f64) -> Self {
        let mut out = *self;
        out.hwp = WaveplateSetting::hwp(self.hwp.fast_axis_deg + deg);
        out
    }
}

/// The pair of positive operators `(E_H, E_V)` implemented by an analyzer.
///
/// They always sum to the identity; with an ideal PBS each is a rank-1
/// projector conjugated by the waveplate chain.
pub fn analyzer_povm(config: &AnalyzerConfig) -> (Matrix2<C64>, Matrix2<C64>) {
    let u = config.chain().0;
    let h = Matrix2::new(c(1.0), c(0.0), c(0.0), c(0.0));
    let v = Matrix2::new(c(0.0), c(0.0), c(0.0), c(1.0));
    let xi = config.pbs_extinction;
    let ph = u.adjoint() * (h * c(1.0 - xi) + v * c(xi)) * u;
    let pv = u.adjoint() * (v * c(1.0 - xi) + h * c(xi)) * u;
    (ph, pv)
}

/// Conjugate the photon half of a joint state by a lossless Jones matrix.
pub fn apply_photon_channel(state: &JointState, j: &JonesMatrix) -> Result<JointState> {
    if !j.is_unitary(1e-10) {
        return Err(Error::NonUnitary);
    }
    let u4 = kron2(&Matrix2::identity(), &j.0);
    Ok(JointState::from_matrix_unchecked(
        u4 * state.matrix() * u4.adjoint(),
    ))
}

/// Slowly drifting birefringence of a fiber link.
#[derive(Debug, Clone)]
pub struct FiberUnitary {
    pub jones: JonesMatrix,
    /// RMS rotation-angle drift accumulated over one hour, in radians.
    pub drift_rate_rad_per_hour: f64,
}

impl FiberUnitary {
    pub fn identity() -> Self {
        FiberUnitary {
            jones: JonesMatrix::identity(),
            drift_rate_rad_per_hour: DEFAULT_DRIFT_RATE,
        }
    }

    /// A uniformly random SU(2) element (Haar-ish via random axis and angle).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let axis = random_axis(rng);
        let angle = rng.gen_range(0.0..core::f64::consts::PI);
        FiberUnitary {
            jones: JonesMatrix::axis_rotation(axis, angle),
            drift_rate_rad_per_hour: DEFAULT_DRIFT_RATE,
        }
    }

    /// Advance the drift random walk by `hours` of simulated wall time.
    ///
    /// The walk is diffusive: the RMS rotation angle accumulated over one
    /// hour equals `drift_rate_rad_per_hour`.
    pub fn advance<R: Rng + ?Sized>(&mut self, hours: f64, rng: &mut R) {
        let sigma = self.drift_rate_rad_per_hour * hours.sqrt();
        let angle = sigma * standard_normal(rng);
        let axis = random_axis(rng);
        self.jones = self.jones.then(&JonesMatrix::axis_rotation(axis, angle));
    }
}

/// Default drift tuned so a multi-hour data-taking session accumulates a few
/// percent of polarization infidelity.
pub const DEFAULT_DRIFT_RATE: f64 = 0.2;

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y: f64 = rng.gen_range(-1.0..1.0);
        let z: f64 = rng.gen_range(-1.0..1.0);
        let n2 = x * x + y * y + z * z;
        if n2 > 1e-6 && n2 <= 1.0 {
            return [x, y, z];
        }
    }
}

use crate::linalg::standard_normal;

/// Conditional probabilities of the ion outcome given each analyzer port.
///
/// Returns `(P(1|H), P(1|V))` for `source` viewed through `fiber` and then
/// the analyzer. Probabilities are exact Born values, no sampling.
pub fn conditional_probs(
    config: &AnalyzerConfig,
    fiber: &FiberUnitary,
    source: &JointState,
) -> (f64, f64) {
    let seen = apply_photon_channel(source, &fiber.jones).expect("fiber must be unitary");
    let (eh, ev) = analyzer_povm(config);
    let rho = seen.matrix();
    let ion1 = Matrix2::new(c(0.0), c(0.0), c(0.0), c(1.0));
    let ion_any = Matrix2::identity();
    let p = |ion: &Matrix2<C64>, pol: &Matrix2<C64>| -> f64 {
        let op = kron2(ion, pol);
        let mut t = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                t += (op[(i, j)] * rho[(j, i)]).re;
            }
        }
        t
    };
    let ph = p(&ion_any, &eh);
    let pv = p(&ion_any, &ev);
    // A dark port carries no correlation information; fall back to the ion
    // marginal so separable sources keep a flat visibility landscape.
    let marginal_p1 = seen.ion_marginal()[(1, 1)].re;
    let p1h = if ph > 1e-12 { p(&ion1, &eh) / ph } else { marginal_p1 };
    let p1v = if pv > 1e-12 { p(&ion1, &ev) / pv } else { marginal_p1 };
    (p1h, p1v)
}

/// Signed ion-photon correlation visibility `P(1|H) - P(1|V)`.
pub fn visibility(config: &AnalyzerConfig, fiber: &FiberUnitary, source: &JointState) -> f64 {
    let (p1h, p1v) = conditional_probs(config, fiber, source);
    p1h - p1v
}

/// Find waveplate settings maximizing the correlation visibility.
///
/// Scans a `grid_step_deg` grid over both waveplates, then refines each axis
/// with one golden-section pass. The returned configuration is oriented so
/// that `P(1|H) >= P(1|V)`; callers wanting the opposite labeling offset the
/// HWP by 45 degrees. Fails if the landscape is flat (separable source).
pub fn calibrate_analyzer(
    fiber: &FiberUnitary,
    source: &JointState,
    grid_step_deg: f64,
) -> Result<AnalyzerConfig> {
    assert!(grid_step_deg > 0.0, "grid step must be positive");
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut worst = f64::INFINITY;
    let steps = (180.0 / grid_step_deg).ceil() as usize;
    for qi in 0..steps {
        let q = qi as f64 * grid_step_deg;
        for hi in 0..steps {
            let h = hi as f64 * grid_step_deg;
            let v = visibility(&AnalyzerConfig::new(q, h), fiber, source).abs();
            if v > best.0 {
                best = (v, q, h);
            }
            if v < worst {
                worst = v;
            }
        }
    }
    if best.0 - worst < 1e-6 {
        return Err(Error::CalibrationImpossible);
    }
    let (_, mut q, mut h) = best;
    let span = grid_step_deg;
    // One golden-section pass per axis.
    for _ in 0..2 {
        q = golden_max(q - span, q + span, |x| {
            visibility(&AnalyzerConfig::new(x, h), fiber, source).abs()
        });
        h = golden_max(h - span, h + span, |x| {
            visibility(&AnalyzerConfig::new(q, x), fiber, source).abs()
        });
    }
    let mut config = AnalyzerConfig::new(normalize_angle(q), normalize_angle(h));
    if visibility(&config, fiber, source) < 0.0 {
        config = config.with_hwp_offset(45.0);
    }
    Ok(config)
}

fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c1 = b - (b - a) * INV_PHI;
    let mut c2 = a + (b - a) * INV_PHI;
    let (mut f1, mut f2) = (f(c1), f(c2));
    for _ in 0..60 {
        if f1 > f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - (b - a) * INV_PHI;
            f1 = f(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + (b - a) * INV_PHI;
            f2 = f(c2);
        }
    }
    0.5 * (a + b)
}

/// Exhaustive-grid reference for tests: best |visibility| on the bare grid.
pub fn grid_search_best_visibility(
    fiber: &FiberUnitary,
    source: &JointState,
    grid_step_deg: f64,
) -> f64 {
    let steps = (180.0 / grid_step_deg).ceil() as usize;
    let mut best = 0.0_f64;
    for qi in 0..steps {
        for hi in 0..steps {
            let cfg = AnalyzerConfig::new(qi as f64 * grid_step_deg, hi as f64 * grid_step_deg);
            best = best.max(visibility(&cfg, fiber, source).abs());
        }
    }
    best
}

/// Analyzer scan sample: exact conditionals at one HWP angle.
pub fn hwp_scan(
    config: &AnalyzerConfig,
    fiber: &FiberUnitary,
    source: &JointState,
    angles_deg: &[f64],
) -> Vec<(f64, f64, f64)> {
    angles_deg
        .iter()
        .map(|&a| {
            let mut cfg = *config;
            cfg.hwp = WaveplateSetting::hwp(a);
            let (p1h, p1v) = conditional_probs(&cfg, fiber, source);
            (a, p1h, p1v)
        })
        .collect()
}
