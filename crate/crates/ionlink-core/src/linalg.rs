//! Small shared helpers for complex matrix work.

use nalgebra::{Complex, Matrix2, Matrix4, SMatrix, SymmetricEigen};

// In no_std builds the trait supplies the f64 math methods.
#[allow(unused_imports)]
use nalgebra::ComplexField;


/// Complex double, the scalar type used throughout.
pub type C64 = Complex<f64>;

pub(crate) const I: C64 = Complex::new(0.0, 1.0);

pub(crate) fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub(crate) fn trace_re<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    let mut t = 0.0;
    for i in 0..N {
        t += m[(i, i)].re;
    }
    t
}

pub(crate) fn is_hermitian<const N: usize>(m: &SMatrix<C64, N, N>, tol: f64) -> bool {
    for i in 0..N {
        for j in i..N {
            let d = m[(i, j)] - m[(j, i)].conj();
            if d.norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue of a Hermitian matrix.
pub(crate) fn min_eigenvalue<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    let herm = (m + m.adjoint()) * c(0.5);
    let dyn_m = nalgebra::DMatrix::from_fn(N, N, |i, j| herm[(i, j)]);
    let eig = SymmetricEigen::new(dyn_m);
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Kronecker product of two 2x2 operators, ion factor first.
pub(crate) fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    a.kronecker(b)
}

/// SU(2) rotation by `angle` about a Bloch-sphere `axis` (need not be unit).
pub(crate) fn su2_rotation(axis: [f64; 3], angle: f64) -> Matrix2<C64> {
    let [nx, ny, nz] = axis;
    let n = (nx * nx + ny * ny + nz * nz).sqrt();
    let (nx, ny, nz) = (nx / n, ny / n, nz / n);
    let (ch, sh) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let sx = Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0));
    let sy = Matrix2::new(c(0.0), -I, I, c(0.0));
    let sz = Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0));
    let gen = sx * c(nx) + sy * c(ny) + sz * c(nz);
    Matrix2::identity() * c(ch) - gen * (I * c(sh))
}

/// Standard normal sample via Box-Muller.
pub(crate) fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

/// Partial trace over the photon factor of an ion (x) photon operator.
pub(crate) fn trace_out_photon(m: &Matrix4<C64>) -> Matrix2<C64> {
    let mut out = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)];
        }
    }
    out
}

/// Partial trace over the ion factor.
pub(crate) fn trace_out_ion(m: &Matrix4<C64>) -> Matrix2<C64> {
    let mut out = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = m[(i, j)] + m[(2 + i, 2 + j)];
        }
    }
    out
}

/// `|u - v| <= tol` for every matrix entry, ignoring a global phase on `u`.
pub(crate) fn equal_up_to_phase<const N: usize>(
    u: &SMatrix<C64, N, N>,
    v: &SMatrix<C64, N, N>,
    tol: f64,
) -> bool {
    // Align phases on the largest entry of v.
    let (mut bi, mut bj, mut best) = (0, 0, 0.0);
    for i in 0..N {
        for j in 0..N {
            if v[(i, j)].norm() > best {
                best = v[(i, j)].norm();
                bi = i;
                bj = j;
            }
        }
    }
    if best < tol {
        return u.iter().all(|z| z.norm() <= tol);
    }
    if u[(bi, bj)].norm() < tol {
        return false;
    }
    let phase = v[(bi, bj)] / u[(bi, bj)];
    let phase = phase / c(phase.norm());
    (u * phase - v).iter().all(|z| z.norm() <= tol)
}
