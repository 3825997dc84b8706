//! The double-interactive-proof game model: referees, unitary strategies,
//! transcripts, state-vector simulation and payoff rescaling.
//!
//! A game runs as: the referee prepares a pure state on its message register
//! C and private register V; Alice acts `a` times (each action a unitary on C
//! and her private register, interleaved with referee unitaries); Bob then
//! acts `b` times the same way; the referee finally measures `Π` on (C, V)
//! and the Π-outcome means Bob wins.

use crate::error::{Error, Result};
use crate::qmath::{
    self, apply_on_factors, basis_ket, expectation, hermitize, identity, inner_re, ketbra, kron,
    op_norm, partial_trace, partial_trace_keep, positive_eigenprojector, trace_norm, zeros, CMat,
    Ket, SpaceShape, TOL_CHECK,
};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Full specification of a game: initial state, referee unitaries, final
/// measurement, and the register dimensions and turn counts.
#[derive(Debug, Clone)]
pub struct Referee {
    d_c: usize,
    d_v: usize,
    a: usize,
    b: usize,
    psi: Ket,
    v_list: Vec<CMat>,
    pi: CMat,
    projective: bool,
}

impl Referee {
    pub fn new(
        d_c: usize,
        d_v: usize,
        a: usize,
        b: usize,
        psi: Ket,
        v_list: Vec<CMat>,
        pi: CMat,
    ) -> Result<Self> {
        if d_c == 0 || d_v == 0 {
            return Err(Error::validation(
                "referee",
                "register dimensions must be ≥ 1",
            ));
        }
        let dim = d_c * d_v;
        if psi.len() != dim {
            return Err(Error::dim("referee initial state", dim, psi.len()));
        }
        let norm_dev = (psi.norm() - 1.0).abs();
        if norm_dev > TOL_CHECK {
            return Err(Error::validation(
                "psi",
                format!("norm deviates from 1 by {norm_dev:.3e}"),
            ));
        }
        if v_list.len() != a + b {
            return Err(Error::dim("referee unitary count", a + b, v_list.len()));
        }
        for (i, v) in v_list.iter().enumerate() {
            if v.nrows() != dim || v.ncols() != dim {
                return Err(Error::dim(format!("V_{}", i + 1), dim, v.nrows()));
            }
            let dev = qmath::unitary_deviation(v);
            if dev > TOL_CHECK {
                return Err(Error::NotUnitary {
                    name: format!("V_{}", i + 1),
                    deviation: dev,
                });
            }
        }
        if pi.nrows() != dim || pi.ncols() != dim {
            return Err(Error::dim("Pi", dim, pi.nrows()));
        }
        let dev = qmath::measurement_deviation(&pi);
        if dev > TOL_CHECK {
            return Err(Error::NotMeasurement {
                name: "Pi".to_string(),
                deviation: dev,
            });
        }
        let projective = qmath::is_projector(&pi);
        Ok(Referee {
            d_c,
            d_v,
            a,
            b,
            psi,
            v_list,
            pi,
            projective,
        })
    }

    pub fn d_c(&self) -> usize {
        self.d_c
    }
    pub fn d_v(&self) -> usize {
        self.d_v
    }
    pub fn alice_turns(&self) -> usize {
        self.a
    }
    pub fn bob_turns(&self) -> usize {
        self.b
    }
    pub fn psi(&self) -> &Ket {
        &self.psi
    }
    pub fn v_unitaries(&self) -> &[CMat] {
        &self.v_list
    }
    pub fn pi(&self) -> &CMat {
        &self.pi
    }
    /// Whether Π passed the projector check at construction.
    pub fn pi_is_projective(&self) -> bool {
        self.projective
    }

    /// Dimension of C⊗V.
    pub fn dim(&self) -> usize {
        self.d_c * self.d_v
    }

    /// Shape of the referee's registers.
    pub fn cv_shape(&self) -> SpaceShape {
        SpaceShape::new([("C", self.d_c), ("V", self.d_v)]).expect("valid dims")
    }

    /// V_i with the V_0 = I convention (1-based index into the unitary list).
    pub fn v_op(&self, i: usize) -> CMat {
        if i == 0 {
            identity(self.dim())
        } else {
            self.v_list[i - 1].clone()
        }
    }

    /// ρ_0 = |ψ⟩⟨ψ|.
    pub fn initial_density(&self) -> CMat {
        ketbra(&self.psi)
    }

    /// The canonical matching-pennies referee: Alice commits a bit which the
    /// referee swaps into V, Bob then writes a bit into C, and Bob wins iff
    /// the bits agree. The game value is 1/2.
    pub fn matching_pennies() -> Referee {
        let swap = CMat::from_fn(4, 4, |r, c| {
            let (rc, rv) = (r / 2, r % 2);
            let (cc, cv) = (c / 2, c % 2);
            if rc == cv && rv == cc {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mut pi = zeros(4);
        pi[(0, 0)] = Complex64::new(1.0, 0.0); // |00⟩⟨00|
        pi[(3, 3)] = Complex64::new(1.0, 0.0); // |11⟩⟨11|
        Referee::new(2, 2, 1, 1, basis_ket(4, 0), vec![swap, identity(4)], pi)
            .expect("canonical referee is valid")
    }

    /// Referee with Π = I: Bob wins regardless of play (value 1).
    pub fn bob_always_wins(d_c: usize, d_v: usize, a: usize, b: usize) -> Referee {
        let dim = d_c * d_v;
        Referee::new(
            d_c,
            d_v,
            a,
            b,
            basis_ket(dim, 0),
            vec![identity(dim); a + b],
            identity(dim),
        )
        .expect("valid referee")
    }

    /// A Bob-free referee with inert unitaries and Π = I_C ⊗ Π_V: Alice cannot
    /// influence the outcome, so the value is ⟨ψ|(I_C ⊗ Π_V)|ψ⟩ exactly.
    pub fn b0_expectation(seed: u64, d_c: usize, d_v: usize, a: usize) -> Referee {
        let mut rng = qmath::random::seeded_rng(seed);
        let dim = d_c * d_v;
        let psi = qmath::random::random_ket(&mut rng, dim);
        let rank = if d_v == 1 { 1 } else { rng.gen_range(1..d_v) };
        let pi_v = qmath::random::random_projector(&mut rng, d_v, rank);
        let pi = kron(&identity(d_c), &pi_v);
        Referee::new(d_c, d_v, a, 0, psi, vec![identity(dim); a], pi).expect("valid referee")
    }
}

/// A player's actions: one unitary per turn on (C, private register).
#[derive(Debug, Clone)]
pub struct UnitaryStrategy {
    private_dim: usize,
    u_list: Vec<CMat>,
}

impl UnitaryStrategy {
    pub fn new(private_dim: usize, u_list: Vec<CMat>) -> Result<Self> {
        if private_dim == 0 {
            return Err(Error::validation(
                "strategy",
                "private dimension must be ≥ 1",
            ));
        }
        for (i, u) in u_list.iter().enumerate() {
            if !u.is_square() || u.nrows() % private_dim != 0 {
                return Err(Error::dim(format!("U_{}", i + 1), private_dim, u.nrows()));
            }
            let dev = qmath::unitary_deviation(u);
            if dev > TOL_CHECK {
                return Err(Error::NotUnitary {
                    name: format!("U_{}", i + 1),
                    deviation: dev,
                });
            }
        }
        Ok(UnitaryStrategy {
            private_dim,
            u_list,
        })
    }

    /// The strategy of a player with no turns.
    pub fn empty() -> UnitaryStrategy {
        UnitaryStrategy {
            private_dim: 1,
            u_list: vec![],
        }
    }

    /// The inert strategy: identity on every turn.
    pub fn inert(d_c: usize, private_dim: usize, turns: usize) -> UnitaryStrategy {
        UnitaryStrategy {
            private_dim,
            u_list: vec![identity(d_c * private_dim); turns],
        }
    }

    /// Seeded Haar-like strategy, for sampling and adversarial tests.
    pub fn random(
        rng: &mut ChaCha8Rng,
        d_c: usize,
        private_dim: usize,
        turns: usize,
    ) -> UnitaryStrategy {
        let u_list = (0..turns)
            .map(|_| qmath::random::haar_unitary(rng, d_c * private_dim))
            .collect();
        UnitaryStrategy {
            private_dim,
            u_list,
        }
    }

    pub fn private_dim(&self) -> usize {
        self.private_dim
    }
    pub fn unitaries(&self) -> &[CMat] {
        &self.u_list
    }
    pub fn turns(&self) -> usize {
        self.u_list.len()
    }
}

/// Snapshots ρ_1..ρ_a of the referee's registers after each of Alice's turns
/// (ρ_0 = |ψ⟩⟨ψ| and V_0 = I are implicit).
#[derive(Debug, Clone)]
pub struct Transcript {
    states: Vec<CMat>,
}

impl Transcript {
    pub fn new(states: Vec<CMat>) -> Transcript {
        Transcript { states }
    }
    pub fn states(&self) -> &[CMat] {
        &self.states
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    /// Final state ρ_a; the initial density for an empty transcript.
    pub fn last_or_initial(&self, referee: &Referee) -> CMat {
        self.states
            .last()
            .cloned()
            .unwrap_or_else(|| referee.initial_density())
    }
}

/// Payoff observable: outcome projectors with real payouts per outcome.
#[derive(Debug, Clone)]
pub struct PayoffObservable {
    labels: Vec<String>,
    projectors: Vec<CMat>,
    payouts: Vec<f64>,
}

impl PayoffObservable {
    pub fn new(labels: Vec<String>, projectors: Vec<CMat>, payouts: Vec<f64>) -> Result<Self> {
        if labels.len() != projectors.len() || labels.len() != payouts.len() {
            return Err(Error::validation(
                "payoff observable",
                "labels, projectors and payouts must have equal length",
            ));
        }
        if projectors.is_empty() {
            return Err(Error::validation(
                "payoff observable",
                "needs at least one outcome",
            ));
        }
        let dim = projectors[0].nrows();
        let mut sum = zeros(dim);
        for (i, p) in projectors.iter().enumerate() {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(Error::dim(
                    format!("projector {}", labels[i]),
                    dim,
                    p.nrows(),
                ));
            }
            sum += p;
        }
        let completeness = op_norm(&(sum - identity(dim)));
        if completeness > TOL_CHECK {
            return Err(Error::validation(
                "payoff observable",
                format!("projectors sum to I only within {completeness:.3e}"),
            ));
        }
        for i in 0..projectors.len() {
            for j in (i + 1)..projectors.len() {
                let overlap = op_norm(&(&projectors[i] * &projectors[j]));
                if overlap > TOL_CHECK {
                    return Err(Error::validation(
                        "payoff observable",
                        format!(
                            "projectors {} and {} overlap ({overlap:.3e})",
                            labels[i], labels[j]
                        ),
                    ));
                }
            }
        }
        Ok(PayoffObservable {
            labels,
            projectors,
            payouts,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn projectors(&self) -> &[CMat] {
        &self.projectors
    }
    pub fn payouts(&self) -> &[f64] {
        &self.payouts
    }

    /// Π_Σ = Σ v(a)·Π_a.
    pub fn observable(&self) -> CMat {
        let dim = self.projectors[0].nrows();
        let mut out = zeros(dim);
        for (p, &v) in self.projectors.iter().zip(&self.payouts) {
            out += p.scale(v);
        }
        out
    }
}

/// Result of normalizing a payoff observable into a win-lose measurement.
#[derive(Debug, Clone)]
pub struct RescaledPayoff {
    /// Measurement operator (Π_Σ − m·I)/(M − m).
    pub pi: CMat,
    /// M − m; expected payout = scale·value + offset.
    pub scale: f64,
    /// m, the smallest payout.
    pub offset: f64,
    /// ‖Π_Σ‖, the factor by which additive error is inflated.
    pub error_inflation: f64,
}

/// Translate and rescale a payoff observable into a measurement operator so
/// the win-lose solver applies; invert with `scale·value + offset`.
pub fn rescale_payoff(obs: &PayoffObservable) -> Result<RescaledPayoff> {
    let sigma = obs.observable();
    let inflation = op_norm(&sigma);
    let m = obs.payouts().iter().cloned().fold(f64::INFINITY, f64::min);
    let mx = obs
        .payouts()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let dim = sigma.nrows();
    if (mx - m).abs() < 1e-15 {
        return Ok(RescaledPayoff {
            pi: zeros(dim),
            scale: 1.0,
            offset: m,
            error_inflation: inflation,
        });
    }
    let pi = (&sigma - identity(dim).scale(m)).scale(1.0 / (mx - m));
    Ok(RescaledPayoff {
        pi: hermitize(&pi),
        scale: mx - m,
        offset: m,
        error_inflation: inflation,
    })
}

fn check_turns(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dim(format!("{context} turn count"), expected, got));
    }
    Ok(())
}

/// Extend |ψ⟩ with |0⟩ ancilla factors (appended minor).
fn with_zero_ancillas(psi: &Ket, extra: &[usize]) -> Ket {
    let extra_dim: usize = extra.iter().product();
    let mut out = Ket::zeros(psi.len() * extra_dim);
    for i in 0..psi.len() {
        out[i * extra_dim] = psi[i];
    }
    out
}

/// Probability that Bob wins when both players follow the given strategies,
/// by state-vector evolution on C⊗V⊗A⊗B.
pub fn win_probability(
    referee: &Referee,
    alice: &UnitaryStrategy,
    bob: &UnitaryStrategy,
) -> Result<f64> {
    check_turns("alice", referee.a, alice.turns())?;
    check_turns("bob", referee.b, bob.turns())?;
    let shape = SpaceShape::new([
        ("C", referee.d_c),
        ("V", referee.d_v),
        ("A", alice.private_dim()),
        ("B", bob.private_dim()),
    ])?;
    let mut state = with_zero_ancillas(&referee.psi, &[alice.private_dim(), bob.private_dim()]);
    for i in 1..=referee.a {
        state = apply_on_factors(&state, &shape, &["C", "A"], &alice.u_list[i - 1])?;
        state = apply_on_factors(&state, &shape, &["C", "V"], &referee.v_list[i - 1])?;
    }
    for j in 1..=referee.b {
        state = apply_on_factors(&state, &shape, &["C", "B"], &bob.u_list[j - 1])?;
        state = apply_on_factors(&state, &shape, &["C", "V"], &referee.v_list[referee.a + j - 1])?;
    }
    let p = expectation(&state, &shape, &["C", "V"], &referee.pi)?;
    Ok(p.clamp(0.0, 1.0))
}

/// Transcript induced by an honest Alice: ρ_i is the reduced state of (C, V)
/// right after Alice's i-th action.
pub fn transcript_of(referee: &Referee, alice: &UnitaryStrategy) -> Result<Transcript> {
    check_turns("alice", referee.a, alice.turns())?;
    let shape = SpaceShape::new([
        ("C", referee.d_c),
        ("V", referee.d_v),
        ("A", alice.private_dim()),
    ])?;
    let mut state = with_zero_ancillas(&referee.psi, &[alice.private_dim()]);
    let mut states = Vec::with_capacity(referee.a);
    for i in 1..=referee.a {
        if i >= 2 {
            state = apply_on_factors(&state, &shape, &["C", "V"], &referee.v_list[i - 2])?;
        }
        state = apply_on_factors(&state, &shape, &["C", "A"], &alice.u_list[i - 1])?;
        states.push(partial_trace_keep(&ketbra(&state), &shape, &["C", "V"])?);
    }
    Ok(Transcript::new(states))
}

/// Consistency residuals r_i = ½‖tr_C ρ_{i+1} − tr_C(V_i ρ_i V_i*)‖₁ for
/// i = 0..a−1; all zero exactly when the transcript is achievable.
pub fn consistency_residuals(referee: &Referee, transcript: &Transcript) -> Result<Vec<f64>> {
    let shape = referee.cv_shape();
    let mut residuals = Vec::with_capacity(transcript.len());
    let mut prev = referee.initial_density();
    for (i, state) in transcript.states().iter().enumerate() {
        let v = referee.v_op(i);
        let evolved = &v * &prev * v.adjoint();
        let lhs = partial_trace(state, &shape, "C")?;
        let rhs = partial_trace(&evolved, &shape, "C")?;
        residuals.push(0.5 * trace_norm(&(lhs - rhs)));
        prev = state.clone();
    }
    Ok(residuals)
}

/// The measurement operator P ∈ P(R) induced by a Bob strategy: the
/// compression of U*(Π ⊗ I_B)U onto Bob's |0⟩ ancilla, where
/// U = V_{a+b} B_b ⋯ B_1 V_a. Satisfies ⟨ρ_a, P⟩ = Bob's winning probability
/// against any Alice inducing ρ_a.
pub fn bob_measurement(referee: &Referee, bob: &UnitaryStrategy) -> Result<CMat> {
    check_turns("bob", referee.b, bob.turns())?;
    let d_cv = referee.dim();
    let d_b = bob.private_dim();
    let shape = SpaceShape::new([("C", referee.d_c), ("V", referee.d_v), ("B", d_b)])?;
    let mut columns: Vec<Ket> = Vec::with_capacity(d_cv);
    for j in 0..d_cv {
        let mut state = with_zero_ancillas(&basis_ket(d_cv, j), &[d_b]);
        if referee.a >= 1 {
            state = apply_on_factors(&state, &shape, &["C", "V"], &referee.v_list[referee.a - 1])?;
        }
        for k in 1..=referee.b {
            state = apply_on_factors(&state, &shape, &["C", "B"], &bob.u_list[k - 1])?;
            state =
                apply_on_factors(&state, &shape, &["C", "V"], &referee.v_list[referee.a + k - 1])?;
        }
        columns.push(state);
    }
    let measured: Vec<Ket> = columns
        .iter()
        .map(|y| apply_on_factors(y, &shape, &["C", "V"], &referee.pi))
        .collect::<Result<_>>()?;
    let mut p = CMat::zeros(d_cv, d_cv);
    for i in 0..d_cv {
        for j in 0..d_cv {
            p[(i, j)] = columns[i].dotc(&measured[j]);
        }
    }
    Ok(hermitize(&p))
}

/// Deterministic random referee: Haar-like unitaries, random initial state,
/// random-rank projective measurement.
pub fn random_referee(seed: u64, d_c: usize, d_v: usize, a: usize, b: usize) -> Referee {
    let mut rng = qmath::random::seeded_rng(seed);
    let dim = d_c * d_v;
    let psi = qmath::random::random_ket(&mut rng, dim);
    let v_list: Vec<CMat> = (0..a + b)
        .map(|_| qmath::random::haar_unitary(&mut rng, dim))
        .collect();
    let rank = if dim == 1 { 1 } else { rng.gen_range(1..dim) };
    let pi = qmath::random::random_projector(&mut rng, dim, rank);
    Referee::new(d_c, d_v, a, b, psi, v_list, pi).expect("generated referee is valid")
}

/// Max-over-measurements form of a residual: ⟨D, Π₊(D)⟩, used as the duality
/// cross-check for the trace-norm residuals.
pub fn residual_duality_value(diff: &CMat) -> Result<f64> {
    let proj = positive_eigenprojector(&hermitize(diff))?;
    Ok(inner_re(diff, &proj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::random::seeded_rng;
    use approx::assert_relative_eq;

    fn hadamard_alice(private_dim: usize) -> UnitaryStrategy {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(-s, 0.0),
            ],
        );
        UnitaryStrategy::new(private_dim, vec![kron(&h, &identity(private_dim))]).unwrap()
    }

    #[test]
    fn win_probability_trivial_measurements() {
        let mut rng = seeded_rng(1);
        let r_win = Referee::bob_always_wins(2, 2, 1, 1);
        let alice = UnitaryStrategy::random(&mut rng, 2, 4, 1);
        let bob = UnitaryStrategy::random(&mut rng, 2, 4, 1);
        assert_relative_eq!(
            win_probability(&r_win, &alice, &bob).unwrap(),
            1.0,
            epsilon = 1e-10
        );

        let r_lose = Referee::new(
            2,
            2,
            1,
            1,
            basis_ket(4, 0),
            vec![identity(4), identity(4)],
            zeros(4),
        )
        .unwrap();
        assert_relative_eq!(
            win_probability(&r_lose, &alice, &bob).unwrap(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn matching_pennies_uniform_alice_scores_half() {
        let r = Referee::matching_pennies();
        let alice = hadamard_alice(1);
        let bob = UnitaryStrategy::inert(2, 1, 1);
        assert_relative_eq!(
            win_probability(&r, &alice, &bob).unwrap(),
            0.5,
            epsilon = 1e-10
        );
    }

    #[test]
    fn matching_pennies_any_bob_scores_half_against_uniform_alice() {
        let r = Referee::matching_pennies();
        let alice = hadamard_alice(1);
        let mut rng = seeded_rng(7);
        for _ in 0..20 {
            let bob = UnitaryStrategy::random(&mut rng, 2, 4, 1);
            assert_relative_eq!(
                win_probability(&r, &alice, &bob).unwrap(),
                0.5,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn inert_alice_transcript_is_initial_state() {
        let r = random_referee(3, 2, 2, 1, 0);
        let alice = UnitaryStrategy::inert(2, 1, 1);
        let t = transcript_of(&r, &alice).unwrap();
        assert_eq!(t.len(), 1);
        assert!(trace_norm(&(t.states()[0].clone() - r.initial_density())) < 1e-10);
    }

    #[test]
    fn honest_transcripts_are_consistent() {
        let mut rng = seeded_rng(11);
        for seed in 0..5u64 {
            let r = random_referee(seed, 2, 2, 2, 0);
            let alice = UnitaryStrategy::random(&mut rng, 2, 4, 2);
            let t = transcript_of(&r, &alice).unwrap();
            for resid in consistency_residuals(&r, &t).unwrap() {
                assert!(resid <= 1e-8, "residual {resid} too large");
            }
        }
    }

    #[test]
    fn residuals_match_two_path_evolution() {
        // independent oracle: compute both marginals from the global pure
        // state along separate evolution paths
        let r = random_referee(21, 2, 2, 2, 0);
        let mut rng = seeded_rng(5);
        let alice = UnitaryStrategy::random(&mut rng, 2, 4, 2);
        let t = transcript_of(&r, &alice).unwrap();

        let shape = SpaceShape::new([("C", 2), ("V", 2), ("A", 4)]).unwrap();
        let cv = r.cv_shape();
        let mut state = with_zero_ancillas(r.psi(), &[4]);
        state = apply_on_factors(&state, &shape, &["C", "A"], &alice.unitaries()[0]).unwrap();
        let rho1 = partial_trace_keep(&ketbra(&state), &shape, &["C", "V"]).unwrap();
        // path A: referee applies V_1 to the recorded ρ_1
        let v1 = r.v_op(1);
        let lhs = partial_trace(&(&v1 * &rho1 * v1.adjoint()), &cv, "C").unwrap();
        // path B: evolve the global state and trace afterwards
        let evolved = apply_on_factors(&state, &shape, &["C", "V"], &v1).unwrap();
        let after =
            apply_on_factors(&evolved, &shape, &["C", "A"], &alice.unitaries()[1]).unwrap();
        let rho2 = partial_trace_keep(&ketbra(&after), &shape, &["C", "V"]).unwrap();
        let rhs = partial_trace(&rho2, &cv, "C").unwrap();
        assert!(trace_norm(&(lhs - rhs)) < 1e-9);
        // and the recorded residuals agree
        let resid = consistency_residuals(&r, &t).unwrap();
        assert!(resid[1] < 1e-9);
    }

    #[test]
    fn orthogonal_marginal_residual_is_one() {
        // ψ = |00⟩ against ρ_1 = |1⟩⟨1| ⊗ |1⟩⟨1| gives r_0 = 1
        let r = Referee::new(2, 2, 1, 0, basis_ket(4, 0), vec![identity(4)], identity(4)).unwrap();
        let t = Transcript::new(vec![ketbra(&basis_ket(4, 3))]);
        let resid = consistency_residuals(&r, &t).unwrap();
        assert_relative_eq!(resid[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn random_residuals_match_duality_form() {
        // r_i = max over measurements ⟨D, Π⟩, realized by the positive
        // eigenprojector of the residual operator
        let r = random_referee(31, 2, 2, 2, 0);
        let mut rng = seeded_rng(13);
        let t = Transcript::new(vec![
            qmath::random::random_density(&mut rng, 4, 4),
            qmath::random::random_density(&mut rng, 4, 3),
        ]);
        let residuals = consistency_residuals(&r, &t).unwrap();
        let shape = r.cv_shape();
        let mut prev = r.initial_density();
        for (i, got) in residuals.iter().enumerate() {
            let v = r.v_op(i);
            let evolved = &v * &prev * v.adjoint();
            let diff = partial_trace(&t.states()[i], &shape, "C").unwrap()
                - partial_trace(&evolved, &shape, "C").unwrap();
            let dual = residual_duality_value(&diff).unwrap();
            assert_relative_eq!(*got, dual, epsilon = 1e-9);
            prev = t.states()[i].clone();
        }
    }

    #[test]
    fn bob_measurement_closed_forms() {
        // b = 0 compresses to V_a* Π V_a
        let r = random_referee(41, 2, 2, 1, 0);
        let p = bob_measurement(&r, &UnitaryStrategy::empty()).unwrap();
        let va = r.v_op(1);
        let want = va.adjoint() * r.pi() * &va;
        assert!(op_norm(&(p - want)) < 1e-10);

        // Π = I is invariant under any Bob
        let r = Referee::bob_always_wins(2, 2, 1, 1);
        let mut rng = seeded_rng(17);
        let bob = UnitaryStrategy::random(&mut rng, 2, 4, 1);
        let p = bob_measurement(&r, &bob).unwrap();
        assert!(op_norm(&(p - identity(4))) < 1e-10);
    }

    #[test]
    fn bob_measurement_reproduces_simulation() {
        let r = random_referee(51, 2, 2, 1, 1);
        let mut rng = seeded_rng(19);
        let bob = UnitaryStrategy::random(&mut rng, 2, 4, 1);
        let p = bob_measurement(&r, &bob).unwrap();
        assert!(qmath::is_measurement(&p));
        for _ in 0..3 {
            let alice = UnitaryStrategy::random(&mut rng, 2, 4, 1);
            let t = transcript_of(&r, &alice).unwrap();
            let via_p = inner_re(&t.last_or_initial(&r), &p);
            let direct = win_probability(&r, &alice, &bob).unwrap();
            assert_relative_eq!(via_p, direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn rescale_payoff_cases() {
        let mut rng = seeded_rng(23);
        let p_win = qmath::random::random_projector(&mut rng, 4, 2);
        let p_lose = identity(4) - &p_win;
        let obs = PayoffObservable::new(
            vec!["lose".into(), "win".into()],
            vec![p_lose.clone(), p_win.clone()],
            vec![0.0, 1.0],
        )
        .unwrap();
        let r = rescale_payoff(&obs).unwrap();
        assert!(op_norm(&(r.pi.clone() - &p_win)) < 1e-10);
        assert_relative_eq!(r.scale, 1.0);
        assert_relative_eq!(r.offset, 0.0);

        let obs = PayoffObservable::new(
            vec!["minus".into(), "plus".into()],
            vec![p_lose.clone(), p_win.clone()],
            vec![-1.0, 1.0],
        )
        .unwrap();
        let r = rescale_payoff(&obs).unwrap();
        assert!(op_norm(&(r.pi.clone() - &p_win)) < 1e-10);
        assert_relative_eq!(r.scale, 2.0);
        assert_relative_eq!(r.offset, -1.0);
    }

    #[test]
    fn rescale_payoff_reconstructs_expectation() {
        let mut rng = seeded_rng(29);
        let u = qmath::random::haar_unitary(&mut rng, 4);
        let mut projs = Vec::new();
        for cols in [0..1usize, 1..3, 3..4] {
            let mut p = zeros(4);
            for k in cols {
                let col = u.column(k);
                p += col * col.adjoint();
            }
            projs.push(hermitize(&p));
        }
        let obs = PayoffObservable::new(
            vec!["a".into(), "b".into(), "c".into()],
            projs,
            vec![0.0, 0.5, 1.0],
        )
        .unwrap();
        let r = rescale_payoff(&obs).unwrap();
        let phi = qmath::random::random_ket(&mut rng, 4);
        let sigma = obs.observable();
        let direct = (phi.adjoint() * &sigma * &phi)[(0, 0)].re;
        let reconstructed = r.scale * (phi.adjoint() * &r.pi * &phi)[(0, 0)].re + r.offset;
        assert_relative_eq!(direct, reconstructed, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_payoff_rescale() {
        let obs =
            PayoffObservable::new(vec!["only".into()], vec![identity(3)], vec![2.5]).unwrap();
        let r = rescale_payoff(&obs).unwrap();
        assert_relative_eq!(r.scale, 1.0);
        assert_relative_eq!(r.offset, 2.5);
        assert_relative_eq!(op_norm(&r.pi), 0.0);
    }

    #[test]
    fn random_referee_determinism_and_validity() {
        let a = random_referee(99, 2, 2, 1, 1);
        let b = random_referee(99, 2, 2, 1, 1);
        assert_eq!(a.psi(), b.psi());
        for (x, y) in a.v_unitaries().iter().zip(b.v_unitaries()) {
            assert_eq!(x, y);
        }
        assert_eq!(a.pi(), b.pi());
        assert!(a.pi_is_projective());
    }

    #[test]
    fn random_referee_rank_sweep_covers_all_ranks() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..100u64 {
            let r = random_referee(seed, 2, 2, 1, 0);
            let rank = r.pi().trace().re.round() as usize;
            seen.insert(rank);
        }
        assert_eq!(seen, [1usize, 2, 3].into_iter().collect());
    }

    #[test]
    fn win_probability_equals_transcript_pairing() {
        // ⟨ρ_a, P⟩ with ρ_a from Alice's transcript and P from Bob's bundle
        let mut rng = seeded_rng(61);
        for seed in 0..5u64 {
            let r = random_referee(seed, 2, 2, 1, 1);
            let alice = UnitaryStrategy::random(&mut rng, 2, 4, 1);
            let bob = UnitaryStrategy::random(&mut rng, 2, 4, 1);
            let t = transcript_of(&r, &alice).unwrap();
            let p = bob_measurement(&r, &bob).unwrap();
            let paired = inner_re(&t.last_or_initial(&r), &p);
            let direct = win_probability(&r, &alice, &bob).unwrap();
            assert_relative_eq!(paired, direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn invalid_referee_is_rejected_with_matrix_name() {
        let mut v = identity(4);
        v[(0, 0)] = Complex64::new(0.5, 0.0);
        let err = Referee::new(2, 2, 1, 0, basis_ket(4, 0), vec![v], identity(4)).unwrap_err();
        match err {
            Error::NotUnitary { name, .. } => assert_eq!(name, "V_1"),
            other => panic!("unexpected error {other}"),
        }
    }
}
