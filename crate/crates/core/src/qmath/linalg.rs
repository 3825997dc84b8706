//! Spectral calculus for dense Hermitian operators: canonical
//! eigendecompositions, matrix exponentials, trace norms, positive-part
//! projectors and purification alignment.

use super::{hermitize, identity, zeros, CMat, REL_EIG_CUTOFF, TOL_CHECK};
use crate::{Error, Result};
use nalgebra::linalg::{SymmetricEigen, SVD};
use num_complex::Complex64;

const PHASE_EPS: f64 = 1e-12;

/// Eigendecomposition of a Hermitian operator in canonical form:
/// eigenvalues sorted descending, eigenvectors as columns with the first
/// significant component of each made real positive, degenerate pairs ordered
/// by lexicographic comparison of rounded entries.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEig {
    /// Rank at the relative spectral cutoff.
    pub fn rank(&self) -> usize {
        let scale = self
            .values
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let cutoff = REL_EIG_CUTOFF * scale;
        self.values.iter().filter(|v| v.abs() > cutoff).count()
    }
}

fn canonical_phase(col: &mut nalgebra::DVectorViewMut<Complex64>) {
    let max_mod = col.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if max_mod == 0.0 {
        return;
    }
    let lead = col.iter().find(|z| z.norm() > PHASE_EPS * max_mod).copied();
    if let Some(z) = lead {
        let phase = z.conj() / z.norm();
        for entry in col.iter_mut() {
            *entry *= phase;
        }
    }
}

fn lex_compare(a: nalgebra::DVectorView<Complex64>, b: nalgebra::DVectorView<Complex64>) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let round = |x: f64| (x / 1e-12).round();
    for (x, y) in a.iter().zip(b.iter()) {
        match round(x.re).partial_cmp(&round(y.re)).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
        match round(x.im).partial_cmp(&round(y.im)).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Canonical Hermitian eigendecomposition. The input is hermitized before
/// factoring; callers are expected to validate Hermiticity at their own
/// tolerance first.
pub fn hermitian_eig(h: &CMat) -> HermitianEig {
    let n = h.nrows();
    if n == 0 {
        return HermitianEig {
            values: vec![],
            vectors: zeros(0),
        };
    }
    let se = SymmetricEigen::new(hermitize(h));
    let mut vectors = se.eigenvectors;
    for k in 0..n {
        canonical_phase(&mut vectors.column_mut(k));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let scale = se.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tie = 1e-13 * scale.max(1.0);
    idx.sort_by(|&i, &j| {
        let (vi, vj) = (se.eigenvalues[i], se.eigenvalues[j]);
        if (vi - vj).abs() <= tie {
            // descending lex keeps identity-like bases in natural order
            lex_compare(vectors.column(j), vectors.column(i))
        } else {
            vj.partial_cmp(&vi).unwrap()
        }
    });
    let values: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut sorted = CMat::zeros(n, n);
    for (new, &old) in idx.iter().enumerate() {
        sorted.set_column(new, &vectors.column(old).into_owned());
    }
    HermitianEig {
        values,
        vectors: sorted,
    }
}

/// Kronecker product A ⊗ B with A's indices major.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// exp(H) for Hermitian H, via the spectral decomposition.
pub fn hermitian_exp(h: &CMat) -> Result<CMat> {
    let dev = super::herm_deviation(h);
    if dev > TOL_CHECK {
        return Err(Error::NotHermitian {
            name: "hermitian_exp input".to_string(),
            deviation: dev,
        });
    }
    let eig = hermitian_eig(h);
    Ok(rebuild(&eig, |v| v.exp()))
}

/// Σ f(λ_k) |v_k⟩⟨v_k|.
fn rebuild(eig: &HermitianEig, f: impl Fn(f64) -> f64) -> CMat {
    let n = eig.vectors.nrows();
    let mut scaled = eig.vectors.clone();
    for (k, &val) in eig.values.iter().enumerate() {
        let w = Complex64::new(f(val), 0.0);
        for r in 0..n {
            scaled[(r, k)] *= w;
        }
    }
    let out = &scaled * eig.vectors.adjoint();
    hermitize(&out)
}

/// Sum of singular values.
pub fn trace_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = SVD::new(m.clone(), false, false);
    svd.singular_values.iter().sum()
}

/// Orthogonal projector onto the eigenspaces of H with eigenvalue above the
/// relative spectral cutoff.
pub fn positive_eigenprojector(h: &CMat) -> Result<CMat> {
    let dev = super::herm_deviation(h);
    if dev > TOL_CHECK {
        return Err(Error::NotHermitian {
            name: "positive_eigenprojector input".to_string(),
            deviation: dev,
        });
    }
    let eig = hermitian_eig(h);
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = REL_EIG_CUTOFF * scale;
    let n = h.nrows();
    let mut out = zeros(n);
    for (k, &val) in eig.values.iter().enumerate() {
        if val > cutoff {
            let col = eig.vectors.column(k);
            out += col * col.adjoint();
        }
    }
    Ok(hermitize(&out))
}

/// Positive square root of a PSD operator (negative ripples clipped to zero).
pub fn psd_sqrt(h: &CMat) -> CMat {
    let eig = hermitian_eig(h);
    rebuild(&eig, |v| v.max(0.0).sqrt())
}

/// Unitary that best aligns two purifications presented as (moved × rest)
/// coefficient matrices: maximizes Re⟨b|(U ⊗ I)|a⟩ over unitaries on the
/// moved block. This is the polar/Procrustes solution built from the Schmidt
/// vectors of both states; when the rest-marginals coincide it maps `a`
/// exactly onto `b`.
pub fn polar_align(a: &CMat, b: &CMat) -> CMat {
    let g = a * b.adjoint(); // moved × moved
    let svd = SVD::new(g, true, true);
    let u = svd.u.expect("svd with vectors");
    let v_t = svd.v_t.expect("svd with vectors");
    (u * v_t).adjoint()
}

/// Deterministic unitary whose first column is the given unit vector.
pub fn unitary_with_first_column(v: &super::Ket) -> CMat {
    let d = v.len();
    let mut m = identity(d);
    m.set_column(0, v);
    // one round of Gram-Schmidt against the fixed first column, then QR to
    // clean up the remainder
    let qr = m.qr();
    let mut q = qr.q();
    // QR may flip the first column's phase; undo it so column 0 equals v
    let lead = q.column(0).dotc(v);
    if lead.norm() > 0.0 {
        let phase = lead / lead.norm();
        let col0 = q.column(0).into_owned() * phase;
        q.set_column(0, &col0);
    }
    q
}
