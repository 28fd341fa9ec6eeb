//! Quantum-jump (Monte Carlo wavefunction) cross-check for the density
//! matrix integrator.
//!
//! This module deliberately shares nothing with [`crate::atomic::evolve`]
//! beyond the level-scheme data itself: it assembles its own effective
//! Hamiltonian, propagates pure-state trajectories with a precomputed
//! non-unitary step operator, and samples jumps by the waiting-time
//! algorithm. Ensemble averages over trajectories estimate the same
//! populations the Lindblad solver computes, so the two paths validate each
//! other; keep it that way when editing.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::SVector;

// In no_std builds the trait supplies the f64 math methods.
#[allow(unused_imports)]
use nalgebra::ComplexField;

use rand::Rng;

use crate::atomic::{level, AtomicLevelScheme, DrivePulse, Matrix8, DIM};
use crate::linalg::{c, C64, I};

type Vector8 = SVector<C64, DIM>;

/// Outcome of one trajectory ensemble.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub trajectories: u32,
    /// Recording grid, ns.
    pub times_ns: Vec<f64>,
    /// Mean population per level per grid time, `[time][level]`.
    pub populations: Vec<[f64; DIM]>,
    /// Standard error of each mean population.
    pub population_stderr: Vec<[f64; DIM]>,
    /// Fraction of trajectories that emitted a 493 nm photon from the
    /// wanted upper level, with its standard error.
    pub good_emission: (f64, f64),
    /// Same for the polarization-swapped channel.
    pub swap_emission: (f64, f64),
}

struct JumpOp {
    lower: usize,
    upper: usize,
    rate: f64,
}

/// Non-unitary half of the trajectory evolution: `U(dt) = exp(-i H_eff dt)`
/// computed once by fine-stepped RK4 on the matrix equation.
fn step_operator(h_eff: &Matrix8, dt: f64) -> Matrix8 {
    let fine = 0.01;
    let n = (dt / fine).ceil().max(1.0) as usize;
    let step = dt / n as f64;
    let mut u = Matrix8::identity();
    let rhs = |m: &Matrix8| -> Matrix8 { (h_eff * m) * (-I) };
    for _ in 0..n {
        let k1 = rhs(&u);
        let k2 = rhs(&(u + k1 * c(step / 2.0)));
        let k3 = rhs(&(u + k2 * c(step / 2.0)));
        let k4 = rhs(&(u + k3 * c(step)));
        u += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(step / 6.0);
    }
    u
}

fn effective_hamiltonian(
    scheme: &AtomicLevelScheme,
    pulse: Option<&DrivePulse>,
    jumps: &[JumpOp],
) -> Matrix8 {
    let mut h = Matrix8::zeros();
    if let Some(p) = pulse {
        for tr in scheme
            .transitions_d
            .iter()
            .filter(|tr| tr.polarization == p.polarization)
        {
            let amp = 0.5 * p.rabi_rad_per_ns * tr.strength.sqrt();
            h[(tr.upper, tr.lower)] += c(amp);
            h[(tr.lower, tr.upper)] += c(amp);
        }
        if p.detuning_rad_per_ns != 0.0 {
            h[(level::P_LO, level::P_LO)] -= c(p.detuning_rad_per_ns);
            h[(level::P_HI, level::P_HI)] -= c(p.detuning_rad_per_ns);
        }
    }
    for j in jumps {
        h[(j.upper, j.upper)] -= I * c(0.5 * j.rate);
    }
    h
}

/// Run `n_traj` quantum-jump trajectories of one excitation attempt from
/// the prepared `|D3/2, +3/2>` state, recording populations every
/// `record_every_ns` out to `horizon_ns`.
pub fn run_trajectories<R: Rng + ?Sized>(
    scheme: &AtomicLevelScheme,
    pulse: &DrivePulse,
    horizon_ns: f64,
    record_every_ns: f64,
    n_traj: u32,
    rng: &mut R,
) -> TrajectoryEnsemble {
    let jumps: Vec<JumpOp> = scheme
        .jumps()
        .into_iter()
        .map(|(lower, upper, rate)| JumpOp { lower, upper, rate })
        .collect();

    let coarse = 0.5;
    let pulse_end = pulse.start_ns + pulse.duration_ns;
    let u_pulse = step_operator(&effective_hamiltonian(scheme, Some(pulse), &jumps), coarse);
    let u_free = step_operator(&effective_hamiltonian(scheme, None, &jumps), coarse);
    // Fine operators for locating jump times inside a coarse step.
    let fine = 0.05;
    let uf_pulse = step_operator(&effective_hamiltonian(scheme, Some(pulse), &jumps), fine);
    let uf_free = step_operator(&effective_hamiltonian(scheme, None, &jumps), fine);

    let n_steps = (horizon_ns / coarse).round() as usize;
    let record_stride = (record_every_ns / coarse).round().max(1.0) as usize;
    let n_records = n_steps / record_stride + 1;

    let mut pop_sum = vec![[0.0; DIM]; n_records];
    let mut pop_sq = vec![[0.0; DIM]; n_records];
    let mut good_count = 0u64;
    let mut swap_count = 0u64;

    for _ in 0..n_traj {
        let mut psi: Vector8 = SVector::zeros();
        psi[level::D_P3] = c(1.0);
        let mut r: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let mut record_idx = 0;
        let mut snapshot = |psi: &Vector8, idx: &mut usize, step: usize| {
            if step.is_multiple_of(record_stride) {
                let n2 = psi.norm_squared().max(1e-300);
                for lvl in 0..DIM {
                    let p = psi[lvl].norm_sqr() / n2;
                    pop_sum[*idx][lvl] += p;
                    pop_sq[*idx][lvl] += p * p;
                }
                *idx += 1;
            }
        };
        snapshot(&psi, &mut record_idx, 0);
        for step in 0..n_steps {
            let t = step as f64 * coarse;
            let in_pulse = t >= pulse.start_ns && t < pulse_end - 1e-9;
            let u = if in_pulse { &u_pulse } else { &u_free };
            let candidate = u * psi;
            if candidate.norm_squared() < r {
                // A jump happens inside this step; locate it on the fine grid.
                let uf = if in_pulse { &uf_pulse } else { &uf_free };
                let mut inner = psi;
                for _ in 0..(coarse / fine).round() as usize {
                    let next = uf * inner;
                    if next.norm_squared() < r {
                        break;
                    }
                    inner = next;
                }
                // Select the jump channel by its instantaneous weight.
                let weights: Vec<f64> = jumps
                    .iter()
                    .map(|j| j.rate * inner[j.upper].norm_sqr())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut pick: f64 = rng.gen::<f64>() * total;
                let mut chosen = jumps.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    pick -= w;
                    if pick < 0.0 {
                        chosen = k;
                        break;
                    }
                }
                let j = &jumps[chosen];
                if j.lower == level::S_LO || j.lower == level::S_HI {
                    if j.upper == level::P_HI {
                        good_count += 1;
                    } else {
                        swap_count += 1;
                    }
                }
                let mut collapsed: Vector8 = SVector::zeros();
                collapsed[j.lower] = c(1.0);
                psi = collapsed;
                r = rng.gen_range(f64::MIN_POSITIVE..1.0);
            } else {
                psi = candidate;
            }
            snapshot(&psi, &mut record_idx, step + 1);
        }
    }

    let n = n_traj as f64;
    let mut populations = Vec::with_capacity(n_records);
    let mut population_stderr = Vec::with_capacity(n_records);
    for (sums, sqs) in pop_sum.iter().zip(pop_sq.iter()) {
        let mut mean = [0.0; DIM];
        let mut err = [0.0; DIM];
        for lvl in 0..DIM {
            mean[lvl] = sums[lvl] / n;
            let var = (sqs[lvl] / n - mean[lvl] * mean[lvl]).max(0.0);
            err[lvl] = (var / n).sqrt();
        }
        populations.push(mean);
        population_stderr.push(err);
    }
    let binom = |k: u64| {
        let p = k as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    };
    TrajectoryEnsemble {
        trajectories: n_traj,
        times_ns: (0..n_records).map(|k| k as f64 * coarse * record_stride as f64).collect(),
        populations,
        population_stderr,
        good_emission: binom(good_count),
        swap_emission: binom(swap_count),
    }
}
