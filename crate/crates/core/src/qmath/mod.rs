//! Dense complex-matrix and quantum-information primitives.
//!
//! Everything operates on [`CMat`]/[`Ket`] (dense, double-precision complex)
//! with tensor-factor bookkeeping through [`SpaceShape`]. All functions are
//! pure; none hold shared state.

mod fidelity;
mod linalg;
pub mod random;
mod shape;

pub use fidelity::{bures_angle, fidelity, fidelity_completion, purification_transfer, purify};
pub use linalg::{
    hermitian_eig, hermitian_exp, kron, polar_align, positive_eigenprojector, psd_sqrt,
    trace_norm, unitary_with_first_column, HermitianEig,
};
pub use shape::{
    apply_on_factors, embed_op, expectation, partial_trace, partial_trace_keep, permute_ket,
    permute_mat, SpaceShape,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix, the carrier for every operator in the library.
pub type CMat = DMatrix<Complex64>;
/// Dense complex vector, the carrier for pure states.
pub type Ket = DVector<Complex64>;

/// Tolerance for invariant checks (Hermiticity, unitarity, PSD, trace),
/// measured in operator norm.
pub const TOL_CHECK: f64 = 1e-8;

/// Relative spectral cutoff: eigenvalues below `REL_EIG_CUTOFF * max|λ|` are
/// treated as zero for ranks, positive projectors and purifications.
pub const REL_EIG_CUTOFF: f64 = 1e-10;

/// Repair threshold: inputs violating a stated constraint by less than this
/// are projected back (hermitized, clipped, renormalized) instead of rejected.
pub const TOL_FIX: f64 = 1e-6;

pub(crate) const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMat {
    CMat::zeros(dim, dim)
}

/// Standard basis vector |i⟩.
pub fn basis_ket(dim: usize, i: usize) -> Ket {
    let mut k = Ket::zeros(dim);
    k[i] = C_ONE;
    k
}

/// Rank-one projector |k⟩⟨k| for a (not necessarily normalized) vector.
pub fn ketbra(k: &Ket) -> CMat {
    k * k.adjoint()
}

/// Hilbert–Schmidt inner product ⟨A,B⟩ = tr(A*B).
pub fn inner(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.shape(), b.shape());
    let mut acc = C_ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

/// Real part of the Hilbert–Schmidt inner product; exact for Hermitian pairs.
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    inner(a, b).re
}

/// (M + M*)/2.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.max()
}

fn min_max_eigenvalues(h: &CMat) -> (f64, f64) {
    let ev = hermitize(h).symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in ev.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo, hi)
}

/// Deviation ‖M − M*‖ from Hermiticity.
pub fn herm_deviation(m: &CMat) -> f64 {
    op_norm(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMat) -> bool {
    m.is_square() && herm_deviation(m) <= TOL_CHECK
}

/// Deviation ‖U*U − I‖ from unitarity.
pub fn unitary_deviation(m: &CMat) -> f64 {
    let d = m.ncols();
    op_norm(&(m.adjoint() * m - identity(d)))
}

pub fn is_unitary(m: &CMat) -> bool {
    m.is_square() && unitary_deviation(m) <= TOL_CHECK
}

/// Magnitude of the most negative eigenvalue of the hermitized matrix.
pub fn psd_deviation(m: &CMat) -> f64 {
    let (lo, _) = min_max_eigenvalues(m);
    (-lo).max(0.0)
}

pub fn is_psd(m: &CMat) -> bool {
    m.is_square() && herm_deviation(m) <= TOL_CHECK && psd_deviation(m) <= TOL_CHECK
}

/// Deviation ‖M² − M‖ from idempotence (plus Hermiticity deviation).
pub fn projector_deviation(m: &CMat) -> f64 {
    op_norm(&(m * m - m)).max(herm_deviation(m))
}

pub fn is_projector(m: &CMat) -> bool {
    m.is_square() && projector_deviation(m) <= TOL_CHECK
}

/// Worst violation of (Hermitian, PSD, trace 1).
pub fn density_deviation(m: &CMat) -> f64 {
    let tr_dev = (m.trace() - C_ONE).norm();
    herm_deviation(m).max(psd_deviation(m)).max(tr_dev)
}

pub fn is_density(m: &CMat) -> bool {
    m.is_square() && density_deviation(m) <= TOL_CHECK
}

/// Worst violation of 0 ⪯ M ⪯ I.
pub fn measurement_deviation(m: &CMat) -> f64 {
    let (lo, hi) = min_max_eigenvalues(m);
    herm_deviation(m).max((-lo).max(0.0)).max((hi - 1.0).max(0.0))
}

pub fn is_measurement(m: &CMat) -> bool {
    m.is_square() && measurement_deviation(m) <= TOL_CHECK
}

/// Project a nearly-valid density operator back onto the density set.
///
/// Violations up to [`TOL_FIX`] are repaired (hermitize, clip the spectrum at
/// zero, renormalize the trace); anything worse is an error naming `name`.
pub(crate) fn repair_density(m: &CMat, name: &str) -> crate::Result<CMat> {
    if !m.is_square() {
        return Err(crate::Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let dev = density_deviation(m);
    if dev <= f64::EPSILON * 16.0 {
        return Ok(m.clone());
    }
    if dev > TOL_FIX {
        return Err(crate::Error::NotDensity {
            name: name.to_string(),
            reason: format!("deviation {dev:.3e} exceeds {TOL_FIX:.1e}"),
        });
    }
    let eig = hermitian_eig(&hermitize(m));
    let mut out = zeros(m.nrows());
    let mut tr = 0.0;
    for (k, &val) in eig.values.iter().enumerate() {
        let v = val.max(0.0);
        if v > 0.0 {
            let col = eig.vectors.column(k);
            out += (col * col.adjoint()).scale(v);
            tr += v;
        }
    }
    if tr <= 0.0 {
        return Err(crate::Error::NotDensity {
            name: name.to_string(),
            reason: "no positive spectral weight".to_string(),
        });
    }
    Ok(out.scale(1.0 / tr))
}

/// Clip a nearly-valid measurement operator into 0 ⪯ M ⪯ I (same policy as
/// [`repair_density`]).
pub(crate) fn repair_measurement(m: &CMat, name: &str) -> crate::Result<CMat> {
    let dev = measurement_deviation(m);
    if dev <= f64::EPSILON * 16.0 {
        return Ok(m.clone());
    }
    if dev > TOL_FIX {
        return Err(crate::Error::NotMeasurement {
            name: name.to_string(),
            deviation: dev,
        });
    }
    let eig = hermitian_eig(&hermitize(m));
    let mut out = zeros(m.nrows());
    for (k, &val) in eig.values.iter().enumerate() {
        let v = val.clamp(0.0, 1.0);
        if v > 0.0 {
            let col = eig.vectors.column(k);
            out += (col * col.adjoint()).scale(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicates_on_simple_operators() {
        let id = identity(3);
        assert!(is_hermitian(&id));
        assert!(is_unitary(&id));
        assert!(is_psd(&id));
        assert!(is_projector(&id));
        assert!(is_measurement(&id));
        assert!(!is_density(&id));
        assert!(is_density(&id.scale(1.0 / 3.0)));

        let x = CMat::from_row_slice(2, 2, &[C_ZERO, C_ONE, C_ONE, C_ZERO]);
        assert!(is_unitary(&x));
        assert!(is_hermitian(&x));
        assert!(!is_psd(&x));
    }

    #[test]
    fn repair_density_clips_and_renormalizes() {
        let mut m = identity(2).scale(0.5);
        m[(0, 0)] += Complex64::new(3e-7, 0.0);
        m[(0, 1)] += Complex64::new(0.0, 1e-7);
        let fixed = repair_density(&m, "rho").unwrap();
        assert!(density_deviation(&fixed) < 1e-12);

        let mut bad = identity(2).scale(0.5);
        bad[(0, 0)] += Complex64::new(1e-3, 0.0);
        assert!(repair_density(&bad, "rho").is_err());
    }
}
