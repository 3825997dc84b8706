//! Tensor-factor bookkeeping: named register shapes, permutations, partial
//! traces and applying operators to subsets of factors.
//!
//! Index convention: the first factor is the major index, so a full index for
//! dims (d0, d1, ...) is `i0*d1*d2*... + i1*d2*... + ...`, matching the
//! Kronecker-product convention `A ⊗ B` with `A` major.

use super::{CMat, Ket, C_ZERO};
use crate::{Error, Result};

/// An ordered list of named tensor factors with dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceShape {
    factors: Vec<(String, usize)>,
}

impl SpaceShape {
    pub fn new<I, S>(factors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let factors: Vec<(String, usize)> =
            factors.into_iter().map(|(n, d)| (n.into(), d)).collect();
        for (name, dim) in &factors {
            if *dim == 0 {
                return Err(Error::validation(
                    format!("factor {name}"),
                    "dimension must be at least 1",
                ));
            }
        }
        for i in 0..factors.len() {
            for j in (i + 1)..factors.len() {
                if factors[i].0 == factors[j].0 {
                    return Err(Error::validation(
                        format!("factor {}", factors[i].0),
                        "duplicate factor name",
                    ));
                }
            }
        }
        Ok(SpaceShape { factors })
    }

    /// Total dimension (product of factor dimensions).
    pub fn dim(&self) -> usize {
        self.factors.iter().map(|(_, d)| d).product()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> impl Iterator<Item = (&str, usize)> {
        self.factors.iter().map(|(n, d)| (n.as_str(), *d))
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownFactor {
                name: name.to_string(),
            })
    }

    pub fn factor_dim(&self, name: &str) -> Result<usize> {
        Ok(self.factors[self.position(name)?].1)
    }

    /// New shape with one factor removed.
    pub fn without(&self, name: &str) -> Result<SpaceShape> {
        let pos = self.position(name)?;
        let mut factors = self.factors.clone();
        factors.remove(pos);
        Ok(SpaceShape { factors })
    }

    /// New shape with a factor appended (minor position).
    pub fn with_appended(&self, name: &str, dim: usize) -> Result<SpaceShape> {
        let mut factors = self.factors.clone();
        factors.push((name.to_string(), dim));
        SpaceShape::new(factors)
    }

    fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|(_, d)| *d).collect()
    }

    /// Factor positions for a list of names, erroring on unknown names.
    fn positions(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.position(n)).collect()
    }
}

/// Index map realizing a factor reordering.
///
/// `order` lists old factor positions in their new order. The returned vector
/// maps every old full index to its new full index.
fn reorder_map(dims: &[usize], order: &[usize]) -> Vec<usize> {
    debug_assert_eq!(dims.len(), order.len());
    let total: usize = dims.iter().product();
    let k = dims.len();
    // strides in the old layout
    let mut old_stride = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        old_stride[i] = old_stride[i + 1] * dims[i + 1];
    }
    // strides in the new layout
    let new_dims: Vec<usize> = order.iter().map(|&p| dims[p]).collect();
    let mut new_stride = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        new_stride[i] = new_stride[i + 1] * new_dims[i + 1];
    }
    let mut map = vec![0usize; total];
    for (old, slot) in map.iter_mut().enumerate() {
        let mut acc = 0usize;
        for (new_pos, &old_pos) in order.iter().enumerate() {
            let digit = (old / old_stride[old_pos]) % dims[old_pos];
            acc += digit * new_stride[new_pos];
        }
        *slot = acc;
    }
    map
}

/// Order that brings `moved` factor positions to the front (in the order
/// given), followed by the remaining positions in shape order.
fn front_order(num_factors: usize, moved: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = moved.to_vec();
    for p in 0..num_factors {
        if !moved.contains(&p) {
            order.push(p);
        }
    }
    order
}

/// Reorder the factors of a ket. `order` lists old positions in new order.
pub fn permute_ket(ket: &Ket, shape: &SpaceShape, order: &[usize]) -> Ket {
    let map = reorder_map(&shape.dims(), order);
    let mut out = Ket::zeros(ket.len());
    for (old, &new) in map.iter().enumerate() {
        out[new] = ket[old];
    }
    out
}

/// Reorder the factors of an operator (conjugation by the permutation).
pub fn permute_mat(m: &CMat, shape: &SpaceShape, order: &[usize]) -> CMat {
    let map = reorder_map(&shape.dims(), order);
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(map[i], map[j])] = m[(i, j)];
        }
    }
    out
}

/// Partial trace over one named factor.
pub fn partial_trace(m: &CMat, shape: &SpaceShape, traced: &str) -> Result<CMat> {
    let dim = shape.dim();
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::dim("partial_trace operand", dim, m.nrows()));
    }
    let pos = shape.position(traced)?;
    let dims = shape.dims();
    let d_f: usize = dims[pos];
    let pre: usize = dims[..pos].iter().product();
    let post: usize = dims[pos + 1..].iter().product();
    let kept = pre * post;
    let mut out = CMat::zeros(kept, kept);
    for ip in 0..pre {
        for iq in 0..post {
            let row_kept = ip * post + iq;
            for jp in 0..pre {
                for jq in 0..post {
                    let col_kept = jp * post + jq;
                    let mut acc = C_ZERO;
                    for k in 0..d_f {
                        let row = (ip * d_f + k) * post + iq;
                        let col = (jp * d_f + k) * post + jq;
                        acc += m[(row, col)];
                    }
                    out[(row_kept, col_kept)] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Trace out everything except the named factors; the result is indexed by
/// the kept factors in the order given.
pub fn partial_trace_keep(m: &CMat, shape: &SpaceShape, keep: &[&str]) -> Result<CMat> {
    let dim = shape.dim();
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::dim("partial_trace_keep operand", dim, m.nrows()));
    }
    let kept_pos = shape.positions(keep)?;
    let order = front_order(shape.num_factors(), &kept_pos);
    let map = reorder_map(&shape.dims(), &order);
    // inverse map: permuted index -> original index
    let mut inv = vec![0usize; dim];
    for (old, &new) in map.iter().enumerate() {
        inv[new] = old;
    }
    let kept_dim: usize = kept_pos.iter().map(|&p| shape.dims()[p]).product();
    let rest = dim / kept_dim;
    let mut out = CMat::zeros(kept_dim, kept_dim);
    for i in 0..kept_dim {
        for j in 0..kept_dim {
            let mut acc = C_ZERO;
            for k in 0..rest {
                acc += m[(inv[i * rest + k], inv[j * rest + k])];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Apply an operator to a subset of factors of a ket.
///
/// `targets` lists factor names in the operator's own factor order; the
/// operator must be square with dimension equal to the product of the target
/// dimensions.
pub fn apply_on_factors(ket: &Ket, shape: &SpaceShape, targets: &[&str], op: &CMat) -> Result<Ket> {
    let dim = shape.dim();
    if ket.len() != dim {
        return Err(Error::dim("apply_on_factors ket", dim, ket.len()));
    }
    let pos = shape.positions(targets)?;
    let m: usize = pos.iter().map(|&p| shape.dims()[p]).product();
    if op.nrows() != m || op.ncols() != m {
        return Err(Error::dim("apply_on_factors operator", m, op.nrows()));
    }
    let order = front_order(shape.num_factors(), &pos);
    let map = reorder_map(&shape.dims(), &order);
    let rest = dim / m;
    // gather into (m × rest) layout, multiply, scatter back
    let mut buf = vec![C_ZERO; dim];
    for (old, &new) in map.iter().enumerate() {
        buf[new] = ket[old];
    }
    let mut mult = vec![C_ZERO; dim];
    for im in 0..m {
        for imp in 0..m {
            let coeff = op[(im, imp)];
            if coeff == C_ZERO {
                continue;
            }
            let src = imp * rest;
            let dst = im * rest;
            for ir in 0..rest {
                mult[dst + ir] += coeff * buf[src + ir];
            }
        }
    }
    let mut out = Ket::zeros(dim);
    for (old, &new) in map.iter().enumerate() {
        out[old] = mult[new];
    }
    Ok(out)
}

/// View a ket as a (moved × rest) coefficient matrix, `moved` factors (in the
/// order given) indexing rows and the remaining factors (in shape order)
/// indexing columns.
pub(crate) fn ket_as_moved_rest(ket: &Ket, shape: &SpaceShape, moved: &[&str]) -> Result<CMat> {
    let dim = shape.dim();
    if ket.len() != dim {
        return Err(Error::dim("ket_as_moved_rest ket", dim, ket.len()));
    }
    let pos = shape.positions(moved)?;
    let m: usize = pos.iter().map(|&p| shape.dims()[p]).product();
    let rest = dim / m;
    let order = front_order(shape.num_factors(), &pos);
    let map = reorder_map(&shape.dims(), &order);
    let mut out = CMat::zeros(m, rest);
    for (old, &new) in map.iter().enumerate() {
        out[(new / rest, new % rest)] = ket[old];
    }
    Ok(out)
}

/// ⟨ket| O ⊗ I |ket⟩ with O acting on the named factors.
pub fn expectation(ket: &Ket, shape: &SpaceShape, targets: &[&str], op: &CMat) -> Result<f64> {
    let applied = apply_on_factors(ket, shape, targets, op)?;
    Ok(ket.dotc(&applied).re)
}

/// Full-space matrix for an operator acting on the named factors.
pub fn embed_op(op: &CMat, shape: &SpaceShape, targets: &[&str]) -> Result<CMat> {
    let dim = shape.dim();
    let pos = shape.positions(targets)?;
    let m: usize = pos.iter().map(|&p| shape.dims()[p]).product();
    if op.nrows() != m || op.ncols() != m {
        return Err(Error::dim("embed_op operator", m, op.nrows()));
    }
    let order = front_order(shape.num_factors(), &pos);
    let map = reorder_map(&shape.dims(), &order);
    let rest = dim / m;
    let mut out = CMat::zeros(dim, dim);
    for i in 0..dim {
        let (im, ir) = (map[i] / rest, map[i] % rest);
        for j in 0..dim {
            let (jm, jr) = (map[j] / rest, map[j] % rest);
            if ir == jr {
                out[(i, j)] = op[(im, jm)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{identity, kron};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_state_partial_trace() {
        // tr_B(ρ ⊗ σ) = ρ·tr(σ)
        let rho = CMat::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0)]);
        let sigma =
            CMat::from_row_slice(2, 2, &[c(0.4, 0.0), c(0.0, 0.1), c(0.0, -0.1), c(0.6, 0.0)]);
        let shape = SpaceShape::new([("A", 2), ("B", 2)]).unwrap();
        let joint = kron(&rho, &sigma);
        let marg = partial_trace(&joint, &shape, "B").unwrap();
        assert_relative_eq!((marg - rho).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bell_state_marginal_is_maximally_mixed() {
        let shape = SpaceShape::new([("A", 2), ("B", 2)]).unwrap();
        let mut bell = Ket::zeros(4);
        bell[0] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        bell[3] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = &bell * bell.adjoint();
        let marg = partial_trace(&rho, &shape, "B").unwrap();
        assert_relative_eq!((marg - identity(2).scale(0.5)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_matches_index_summation() {
        // independent oracle: Σ_k M[(i,k),(j,k)] for a random Hermitian 4x4
        let mut rng = crate::qmath::random::seeded_rng(7);
        let m = crate::qmath::random::random_density(&mut rng, 4, 4);
        let shape = SpaceShape::new([("X", 2), ("Y", 2)]).unwrap();
        let marg = partial_trace(&m, &shape, "Y").unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = C_ZERO;
                for k in 0..2 {
                    acc += m[(i * 2 + k, j * 2 + k)];
                }
                assert_relative_eq!((marg[(i, j)] - acc).norm(), 0.0, epsilon = 1e-14);
            }
        }
        // trace preserved
        assert_relative_eq!(marg.trace().re, m.trace().re, epsilon = 1e-13);
    }

    #[test]
    fn unknown_factor_is_an_error() {
        let shape = SpaceShape::new([("A", 2), ("B", 2)]).unwrap();
        assert!(partial_trace(&identity(4), &shape, "Z").is_err());
    }

    #[test]
    fn apply_on_factors_agrees_with_embedding() {
        let shape = SpaceShape::new([("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let mut rng = crate::qmath::random::seeded_rng(11);
        let u = crate::qmath::random::haar_unitary(&mut rng, 4);
        let ket = crate::qmath::random::random_ket(&mut rng, 12);
        // operator on (C, A) in that order, deliberately out of shape order
        let fast = apply_on_factors(&ket, &shape, &["C", "A"], &u).unwrap();
        let full = embed_op(&u, &shape, &["C", "A"]).unwrap();
        let slow = &full * &ket;
        assert_relative_eq!((fast - slow).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn permutation_roundtrip() {
        let shape = SpaceShape::new([("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let mut rng = crate::qmath::random::seeded_rng(3);
        let ket = crate::qmath::random::random_ket(&mut rng, 12);
        let fwd = permute_ket(&ket, &shape, &[2, 0, 1]);
        let back_shape = SpaceShape::new([("C", 2), ("A", 2), ("B", 3)]).unwrap();
        let back = permute_ket(&fwd, &back_shape, &[1, 2, 0]);
        assert_relative_eq!((back - ket).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn keep_marginal_matches_single_trace() {
        let shape = SpaceShape::new([("A", 2), ("B", 2)]).unwrap();
        let rho = CMat::from_fn(4, 4, |i, j| c((i * 4 + j) as f64, 0.0));
        let rho = crate::qmath::hermitize(&rho);
        let keep_b = partial_trace_keep(&rho, &shape, &["B"]).unwrap();
        let direct = partial_trace(&rho, &shape, "A").unwrap();
        assert_relative_eq!((keep_b - direct).norm(), 0.0, epsilon = 1e-13);
    }
}
