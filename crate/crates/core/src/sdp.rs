//! Frontend for transcript-constrained semidefinite programs: minimize
//! ⟨X_n, P⟩ over PSD tuples chained by partial-trace constraints
//! tr_{C_i} X_i = Φ_{i−1}(X_{i−1}), tr_{C_1} X_1 = Q, with arbitrary
//! trace-preserving Kraus channels Φ_i. Solved by the same penalized MMW loop
//! as the game value, with the singleton oracle.

use crate::error::{Error, Result};
use crate::game::{bob_measurement, Referee, UnitaryStrategy};
use crate::mmw::{
    run_engine, ConsistencyChain, EngineConfig, FixedOracle, IterationRecord, Schedule,
};
use crate::qmath::{
    hermitize, identity, inner_re, op_norm, trace_norm, CMat, TOL_CHECK,
};
use num_complex::Complex64;

/// A completely positive trace-preserving map in Kraus form Σ_j K_j X K_j*.
#[derive(Debug, Clone)]
pub struct ChannelKraus {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMat>,
}

impl ChannelKraus {
    pub fn new(kraus: Vec<CMat>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::validation("channel", "needs at least one Kraus operator"));
        }
        let out_dim = kraus[0].nrows();
        let in_dim = kraus[0].ncols();
        for (j, k) in kraus.iter().enumerate() {
            if k.nrows() != out_dim || k.ncols() != in_dim {
                return Err(Error::dim(format!("Kraus operator {j}"), in_dim, k.ncols()));
            }
        }
        let mut tp = CMat::zeros(in_dim, in_dim);
        for k in &kraus {
            tp += k.adjoint() * k;
        }
        let dev = op_norm(&(tp - identity(in_dim)));
        if dev > TOL_CHECK {
            return Err(Error::validation(
                "channel",
                format!("not trace preserving: ‖ΣK*K − I‖ = {dev:.3e}"),
            ));
        }
        Ok(ChannelKraus {
            in_dim,
            out_dim,
            kraus,
        })
    }

    pub fn identity_channel(dim: usize) -> ChannelKraus {
        ChannelKraus {
            in_dim: dim,
            out_dim: dim,
            kraus: vec![identity(dim)],
        }
    }

    /// The channel X ↦ tr_first(V X V*) on a bipartite space with the traced
    /// factor major: Kraus operators (⟨c| ⊗ I)·V.
    pub fn conjugate_and_trace_first(v: &CMat, d_traced: usize, d_rest: usize) -> Result<Self> {
        let dim = d_traced * d_rest;
        if v.nrows() != dim || v.ncols() != dim {
            return Err(Error::dim("channel unitary", dim, v.nrows()));
        }
        let mut kraus = Vec::with_capacity(d_traced);
        for c in 0..d_traced {
            let mut k = CMat::zeros(d_rest, dim);
            for r in 0..d_rest {
                for col in 0..dim {
                    k[(r, col)] = v[(c * d_rest + r, col)];
                }
            }
            kraus.push(k);
        }
        ChannelKraus::new(kraus)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    /// Φ(X) = Σ K X K*.
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.in_dim || x.ncols() != self.in_dim {
            return Err(Error::dim("channel input", self.in_dim, x.nrows()));
        }
        let mut out = CMat::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        Ok(out)
    }

    /// Φ*(Y) = Σ K* Y K; unital because Φ is trace preserving.
    pub fn adjoint_apply(&self, y: &CMat) -> Result<CMat> {
        if y.nrows() != self.out_dim || y.ncols() != self.out_dim {
            return Err(Error::dim("channel adjoint input", self.out_dim, y.nrows()));
        }
        let mut out = CMat::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            out += k.adjoint() * y * k;
        }
        Ok(out)
    }
}

/// Φ(X), with dimension checking.
pub fn apply_channel(phi: &ChannelKraus, x: &CMat) -> Result<CMat> {
    phi.apply(x)
}

/// Φ*(Y), with dimension checking.
pub fn adjoint_channel(phi: &ChannelKraus, y: &CMat) -> Result<CMat> {
    phi.adjoint_apply(y)
}

/// A transcript-constrained SDP instance. Slot i lives on C_i ⊗ R_i (traced
/// factor major); the objective measurement P acts on the last slot.
#[derive(Debug, Clone)]
pub struct SdpInstance {
    traced_dims: Vec<usize>,
    resid_dims: Vec<usize>,
    channels: Vec<ChannelKraus>,
    q: CMat,
    p: CMat,
}

impl SdpInstance {
    pub fn new(
        traced_dims: Vec<usize>,
        resid_dims: Vec<usize>,
        channels: Vec<ChannelKraus>,
        q: CMat,
        p: CMat,
    ) -> Result<Self> {
        let n = traced_dims.len();
        if n == 0 || resid_dims.len() != n {
            return Err(Error::validation(
                "sdp instance",
                "traced and residual dimension lists must be nonempty and equal length",
            ));
        }
        if channels.len() + 1 != n {
            return Err(Error::dim("sdp channel count", n - 1, channels.len()));
        }
        for (i, (&c, &r)) in traced_dims.iter().zip(&resid_dims).enumerate() {
            if c == 0 || r == 0 {
                return Err(Error::validation(
                    format!("sdp slot {}", i + 1),
                    "dimensions must be ≥ 1",
                ));
            }
        }
        for (i, phi) in channels.iter().enumerate() {
            let slot_dim = traced_dims[i] * resid_dims[i];
            if phi.in_dim() != slot_dim {
                return Err(Error::dim(
                    format!("channel {} input", i + 1),
                    slot_dim,
                    phi.in_dim(),
                ));
            }
            if phi.out_dim() != resid_dims[i + 1] {
                return Err(Error::dim(
                    format!("channel {} output", i + 1),
                    resid_dims[i + 1],
                    phi.out_dim(),
                ));
            }
        }
        if q.nrows() != resid_dims[0] || q.ncols() != resid_dims[0] {
            return Err(Error::dim("Q", resid_dims[0], q.nrows()));
        }
        let q_dev = crate::qmath::density_deviation(&q);
        if q_dev > TOL_CHECK {
            return Err(Error::NotDensity {
                name: "Q".to_string(),
                reason: format!("deviation {q_dev:.3e}; rescale so tr Q = 1"),
            });
        }
        let last_dim = traced_dims[n - 1] * resid_dims[n - 1];
        if p.nrows() != last_dim || p.ncols() != last_dim {
            return Err(Error::dim("P", last_dim, p.nrows()));
        }
        let p_dev = crate::qmath::measurement_deviation(&p);
        if p_dev > TOL_CHECK {
            return Err(Error::NotMeasurement {
                name: "P".to_string(),
                deviation: p_dev,
            });
        }
        Ok(SdpInstance {
            traced_dims,
            resid_dims,
            channels,
            q,
            p,
        })
    }

    pub fn n(&self) -> usize {
        self.traced_dims.len()
    }
    pub fn traced_dims(&self) -> &[usize] {
        &self.traced_dims
    }
    pub fn resid_dims(&self) -> &[usize] {
        &self.resid_dims
    }
    pub fn channels(&self) -> &[ChannelKraus] {
        &self.channels
    }
    pub fn q(&self) -> &CMat {
        &self.q
    }
    pub fn p(&self) -> &CMat {
        &self.p
    }
    pub fn slot_dim(&self, i: usize) -> usize {
        self.traced_dims[i] * self.resid_dims[i]
    }
}

/// Solution of an SDP instance: value estimate, averaged and rounded
/// variables, and diagnostics mirroring the game solver's result.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// δ-approximation of the optimum, clamped into [0,1].
    pub objective: f64,
    /// Raw running-average payoff (the penalized-relaxation estimate).
    pub mu_estimate: f64,
    pub avg_vars: Vec<CMat>,
    /// Exactly feasible rounded variables.
    pub rounded_vars: Vec<CMat>,
    /// Constraint residuals ½‖tr_C X_{i+1} − Φ_i(X_i)‖₁ of the rounded vars.
    pub rounded_residuals: Vec<f64>,
    /// Objective of the rounded solution.
    pub rounded_objective: f64,
    pub iterations_run: usize,
    pub trace: Vec<IterationRecord>,
    pub heuristic: bool,
    pub stopping_gap: Option<f64>,
    pub loss_eig_range: (f64, f64),
}

/// Constraint residuals of an arbitrary variable tuple.
pub fn constraint_residuals(inst: &SdpInstance, vars: &[CMat]) -> Result<Vec<f64>> {
    let chain = ConsistencyChain::from_instance(inst);
    Ok(chain
        .residual_ops(vars)?
        .iter()
        .map(|d| 0.5 * trace_norm(d))
        .collect())
}

/// Approximately solve the instance with the penalized MMW loop and round the
/// averaged variables to exact feasibility.
pub fn solve_sdp(inst: &SdpInstance, sched: &Schedule) -> Result<SdpSolution> {
    let chain = ConsistencyChain::from_instance(inst);
    let mut oracle = FixedOracle::new(inst.p.clone());
    let outcome = run_engine(&chain, sched, &mut oracle, &EngineConfig::default())?;
    let rounded_vars = crate::rounding::round_chain(&chain, &outcome.avg_slots)?;
    let rounded_residuals: Vec<f64> = chain
        .residual_ops(&rounded_vars)?
        .iter()
        .map(|d| 0.5 * trace_norm(d))
        .collect();
    let rounded_objective = inner_re(&rounded_vars[inst.n() - 1], &inst.p);
    let estimate = match sched.mode {
        crate::mmw::SolveMode::PaperExact => outcome.mu_avg,
        crate::mmw::SolveMode::Practical => outcome.bracket_estimate.unwrap_or(outcome.mu_avg),
    };
    Ok(SdpSolution {
        objective: estimate.clamp(0.0, 1.0),
        mu_estimate: estimate,
        avg_vars: outcome.avg_slots,
        rounded_vars,
        rounded_residuals,
        rounded_objective,
        iterations_run: outcome.iterations,
        trace: outcome.trace,
        heuristic: matches!(sched.mode, crate::mmw::SolveMode::Practical),
        stopping_gap: outcome.stopping_gap,
        loss_eig_range: outcome.loss_eig_range,
    })
}

/// Transcribe a Bob-free game as an SDP instance: channels conjugate by the
/// referee unitaries and trace out the message register, the initial marginal
/// is tr_C ψψ*, and the objective is the singleton measurement V_a* Π V_a.
pub fn game_to_sdp(referee: &Referee) -> Result<SdpInstance> {
    if referee.bob_turns() != 0 {
        return Err(Error::validation("game_to_sdp", "referee must have b = 0"));
    }
    let a = referee.alice_turns();
    if a == 0 {
        return Err(Error::validation("game_to_sdp", "referee must have a ≥ 1"));
    }
    let channels = (1..a)
        .map(|i| ChannelKraus::conjugate_and_trace_first(&referee.v_op(i), referee.d_c(), referee.d_v()))
        .collect::<Result<Vec<_>>>()?;
    let shape = referee.cv_shape();
    let q = crate::qmath::partial_trace(&referee.initial_density(), &shape, "C")?;
    let p = bob_measurement(referee, &UnitaryStrategy::empty())?;
    SdpInstance::new(
        vec![referee.d_c(); a],
        vec![referee.d_v(); a],
        channels,
        q,
        hermitize(&p),
    )
}

/// Eigenvalue-minimization instance: one slot, scalar residual space, so the
/// feasible set is every density operator and the optimum is λ_min(P).
pub fn eigenvalue_instance(p: CMat) -> Result<SdpInstance> {
    let dim = p.nrows();
    let one = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
    SdpInstance::new(vec![dim], vec![1], vec![], one, p)
}
