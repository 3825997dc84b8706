//! Seeded generators for test and instance construction. Everything is
//! deterministic in the seed (ChaCha8 stream, fixed draw order).

use super::{CMat, Ket, C_ONE};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard normal sample (Box–Muller; two uniform draws per call).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(standard_normal(rng), standard_normal(rng)) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of independent standard complex Gaussians, row-major draw order.
pub fn gaussian_cmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = complex_normal(rng);
        }
    }
    m
}

/// Haar-like unitary: QR of a complex Gaussian with the R-diagonal phases
/// absorbed into Q.
pub fn haar_unitary(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
    let g = gaussian_cmat(rng, dim, dim);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C_ONE };
        let col = q.column(k).into_owned() * phase;
        q.set_column(k, &col);
    }
    q
}

/// Random unit vector.
pub fn random_ket(rng: &mut ChaCha8Rng, dim: usize) -> Ket {
    let mut k = Ket::zeros(dim);
    for i in 0..dim {
        k[i] = complex_normal(rng);
    }
    let n = k.norm();
    k.scale(1.0 / n)
}

/// Random density operator of the given rank (GG*/tr with G dim×rank).
pub fn random_density(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> CMat {
    let g = gaussian_cmat(rng, dim, rank.max(1).min(dim));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    m.scale(1.0 / tr)
}

/// Random rank-r orthogonal projector (span of Haar-unitary columns).
pub fn random_projector(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> CMat {
    let u = haar_unitary(rng, dim);
    let mut p = CMat::zeros(dim, dim);
    for k in 0..rank.min(dim) {
        let col = u.column(k);
        p += col * col.adjoint();
    }
    super::hermitize(&p)
}

/// Random measurement operator: Haar basis with eigenvalues uniform in [0,1].
pub fn random_measurement(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
    let u = haar_unitary(rng, dim);
    let mut m = CMat::zeros(dim, dim);
    for k in 0..dim {
        let w: f64 = rng.gen();
        let col = u.column(k);
        m += (col * col.adjoint()).scale(w);
    }
    super::hermitize(&m)
}
