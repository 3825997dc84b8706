//! Fidelity, the Bures angle, purifications, and the completion machinery
//! that extends a marginal replacement to the full state at equal fidelity.

use super::linalg::{hermitian_eig, polar_align, psd_sqrt, trace_norm};
use super::shape::{ket_as_moved_rest, permute_mat, SpaceShape};
use super::{hermitize, repair_density, CMat, Ket, C_ZERO, TOL_FIX};
use crate::{Error, Result};
use num_complex::Complex64;

/// Uhlmann fidelity F(ρ,ξ) = tr √(√ρ ξ √ρ), in [0,1].
///
/// Evaluated as ‖√ρ·√ξ‖₁, which is the same quantity without squaring small
/// eigenvalues away.
pub fn fidelity(rho: &CMat, xi: &CMat) -> Result<f64> {
    let rho = repair_density(rho, "fidelity lhs")?;
    let xi = repair_density(xi, "fidelity rhs")?;
    if rho.nrows() != xi.nrows() {
        return Err(Error::dim("fidelity operands", rho.nrows(), xi.nrows()));
    }
    let f = trace_norm(&(psd_sqrt(&rho) * psd_sqrt(&xi)));
    Ok(f.clamp(0.0, 1.0))
}

/// Bures angle A(ρ,ξ) = arccos F(ρ,ξ), in [0, π/2]. A contractive metric on
/// density operators.
pub fn bures_angle(rho: &CMat, xi: &CMat) -> Result<f64> {
    let f = fidelity(rho, xi)?;
    Ok(f.clamp(-1.0, 1.0).acos())
}

/// Canonical purification Σ_k √λ_k |v_k⟩|e_k⟩ of a density operator, with the
/// purifier appended as the minor factor. Eigenvalues descend and eigenvector
/// phases follow the canonical convention, so the output is reproducible.
pub fn purify(rho: &CMat, purifier_dim: usize) -> Result<Ket> {
    let rho = repair_density(rho, "purify input")?;
    let eig = hermitian_eig(&rho);
    let rank = eig.rank();
    if purifier_dim < rank {
        return Err(Error::PurifierTooSmall {
            purifier: purifier_dim,
            rank,
        });
    }
    let d = rho.nrows();
    let mut ket = Ket::zeros(d * purifier_dim);
    for (k, &val) in eig.values.iter().enumerate().take(rank.min(purifier_dim)) {
        let amp = Complex64::new(val.max(0.0).sqrt(), 0.0);
        if amp == C_ZERO {
            continue;
        }
        let col = eig.vectors.column(k);
        for i in 0..d {
            ket[i * purifier_dim + k] = amp * col[i];
        }
    }
    let n = ket.norm();
    Ok(ket.scale(1.0 / n))
}

fn rest_marginal(coeffs: &CMat) -> CMat {
    // rows index the moved block, columns the rest block
    coeffs.transpose() * coeffs.conjugate()
}

/// Unitary on the `moved` factors taking one purification to another.
///
/// Both kets live on `shape`; their marginals on the complement of `moved`
/// must agree within [`TOL_FIX`]. The returned unitary acts on the moved
/// block (factors in the order given) and maps α as close to β as the
/// marginals allow; for exactly matching marginals, (U ⊗ I)|α⟩ = |β⟩.
pub fn purification_transfer(
    alpha: &Ket,
    beta: &Ket,
    shape: &SpaceShape,
    moved: &[&str],
) -> Result<CMat> {
    let a = ket_as_moved_rest(alpha, shape, moved)?;
    let b = ket_as_moved_rest(beta, shape, moved)?;
    let gap = 0.5 * trace_norm(&(rest_marginal(&a) - rest_marginal(&b)));
    if gap > TOL_FIX {
        return Err(Error::MarginalMismatch {
            deviation: gap,
            limit: TOL_FIX,
        });
    }
    Ok(polar_align(&a, &b))
}

/// Extend a marginal replacement σ → σ′ on the visible factors of ρ to a full
/// state ρ′ with the same hidden-factor structure, preserving fidelity:
/// tr_hidden ρ′ = σ′ and F(ρ,ρ′) = F(σ,σ′).
///
/// Construction: purify ρ; regard the purification as a purification of σ
/// with purifying system hidden⊗purifier; align the canonical purification of
/// σ′ against it with [`purification_transfer`]'s polar step; trace out the
/// purifier.
pub fn fidelity_completion(
    sigma: &CMat,
    sigma_p: &CMat,
    rho: &CMat,
    shape: &SpaceShape,
    hidden: &str,
) -> Result<CMat> {
    let h = shape.factor_dim(hidden)?;
    let total = shape.dim();
    let s_dim = total / h;
    if rho.nrows() != total {
        return Err(Error::dim("fidelity_completion rho", total, rho.nrows()));
    }
    if sigma.nrows() != s_dim || sigma_p.nrows() != s_dim {
        return Err(Error::dim(
            "fidelity_completion marginals",
            s_dim,
            sigma.nrows().max(sigma_p.nrows()),
        ));
    }
    let rho = repair_density(rho, "fidelity_completion rho")?;
    let sigma = repair_density(sigma, "fidelity_completion sigma")?;
    let sigma_p = repair_density(sigma_p, "fidelity_completion sigma_p")?;

    // visible factors in shape order
    let visible: Vec<String> = shape
        .factors()
        .filter(|(n, _)| *n != hidden)
        .map(|(n, _)| n.to_string())
        .collect();
    let visible_refs: Vec<&str> = visible.iter().map(|s| s.as_str()).collect();

    let stated = super::shape::partial_trace_keep(&rho, shape, &visible_refs)?;
    let gap = 0.5 * trace_norm(&(&stated - &sigma));
    if gap > TOL_FIX {
        return Err(Error::MarginalMismatch {
            deviation: gap,
            limit: TOL_FIX,
        });
    }

    // purifier large enough for ρ and for the purifying side of σ′
    let rank_rho = hermitian_eig(&rho).rank().max(1);
    let e = rank_rho.max(s_dim.div_ceil(h));
    let w = h * e;

    let p_ket = purify(&rho, e)?;
    let ext_shape = shape.with_appended("__purifier", e)?;
    let b = ket_as_moved_rest(&p_ket, &ext_shape, &[hidden, "__purifier"])?; // w × s

    let q0_ket = purify(&sigma_p, w)?;
    let q0_shape = SpaceShape::new([("__visible", s_dim), ("__w", w)])?;
    let a = ket_as_moved_rest(&q0_ket, &q0_shape, &["__w"])?; // w × s

    let u = polar_align(&a, &b);
    let q = u * a; // coefficients in ([hidden ⊗ purifier] × visible) layout

    // trace out the purifier: ρ′[(ih,is),(ih',is')] = Σ_ie q[ih·e+ie, is]·conj(...)
    let mut rho_p = CMat::zeros(total, total);
    for ih in 0..h {
        for is in 0..s_dim {
            let row = ih * s_dim + is;
            for jh in 0..h {
                for js in 0..s_dim {
                    let col = jh * s_dim + js;
                    let mut acc = C_ZERO;
                    for ie in 0..e {
                        acc += q[(ih * e + ie, is)] * q[(jh * e + ie, js)].conj();
                    }
                    rho_p[(row, col)] = acc;
                }
            }
        }
    }
    // rho_p is laid out as [hidden, visible...]; permute back to shape order
    let mut cur_factors: Vec<(String, usize)> = vec![(hidden.to_string(), h)];
    for name in &visible {
        cur_factors.push((name.clone(), shape.factor_dim(name)?));
    }
    let cur_shape = SpaceShape::new(cur_factors)?;
    let order: Vec<usize> = shape
        .factors()
        .map(|(n, _)| cur_shape.position(n).expect("factor present"))
        .collect();
    let mut out = permute_mat(&rho_p, &cur_shape, &order);
    out = hermitize(&out);
    let tr = out.trace().re;
    Ok(out.scale(1.0 / tr))
}
