//! The penalized payoff μ_ε, best penalty certificates, and rounding of
//! near-consistent transcripts into exactly consistent ones.
//!
//! Rounding walks the chain recursively: slot i+1 is replaced by a
//! fidelity-preserving completion whose traced marginal equals the channel
//! image of the already-rounded slot i. The Bures angle between original and
//! rounded final states telescopes over the per-step marginal angles, which
//! is what makes the penalized relaxation faithful.

use crate::error::{Error, Result};
use crate::game::{Referee, Transcript};
use crate::mmw::ConsistencyChain;
use crate::qmath::{
    fidelity_completion, partial_trace, positive_eigenprojector, CMat, TOL_CHECK,
};

/// A choice of max-player certificate for μ_ε: the measurement P on C⊗V and
/// one penalty measurement per constraint, each on V.
#[derive(Debug, Clone)]
pub struct PenaltyCertificate {
    pub p: CMat,
    pub pi_list: Vec<CMat>,
    pub epsilon: f64,
}

impl PenaltyCertificate {
    pub fn new(referee: &Referee, p: CMat, pi_list: Vec<CMat>, epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 {
            return Err(Error::validation("penalty certificate", "epsilon must be positive"));
        }
        if pi_list.len() != referee.alice_turns() {
            return Err(Error::dim(
                "penalty measurement count",
                referee.alice_turns(),
                pi_list.len(),
            ));
        }
        let dev = crate::qmath::measurement_deviation(&p);
        if p.nrows() != referee.dim() || dev > TOL_CHECK {
            return Err(Error::NotMeasurement {
                name: "P".to_string(),
                deviation: dev,
            });
        }
        for (i, pi) in pi_list.iter().enumerate() {
            let dev = crate::qmath::measurement_deviation(pi);
            if pi.nrows() != referee.d_v() || dev > TOL_CHECK {
                return Err(Error::NotMeasurement {
                    name: format!("Pi_{}", i + 1),
                    deviation: dev,
                });
            }
        }
        Ok(PenaltyCertificate {
            p,
            pi_list,
            epsilon,
        })
    }
}

/// Penalized payoff ⟨ρ_a, P⟩ + (a/ε)·Σ_i ⟨D_i, Π_{i+1}⟩ of a transcript
/// against a certificate. Linear in the transcript (the initial-state term
/// enters as tr(ρ_1)·tr_C ψψ*).
pub fn mu_payoff(
    referee: &Referee,
    transcript: &Transcript,
    cert: &PenaltyCertificate,
) -> Result<f64> {
    let a = referee.alice_turns();
    if transcript.len() != a || cert.pi_list.len() != a {
        return Err(Error::dim("mu_payoff transcript length", a, transcript.len()));
    }
    let chain = ConsistencyChain::from_referee(referee);
    let tuple = chain.f_map(transcript.states(), cert.epsilon)?;
    Ok(tuple.pair(&cert.p, &cert.pi_list))
}

/// The certificate maximizing the penalty part of μ_ε for a fixed transcript:
/// each Π_{i+1} is the projector onto the positive eigenspace of the residual
/// operator of constraint i.
pub fn best_penalty_cert(
    referee: &Referee,
    transcript: &Transcript,
    p: &CMat,
    eps: f64,
) -> Result<PenaltyCertificate> {
    let a = referee.alice_turns();
    if transcript.len() != a {
        return Err(Error::dim(
            "best_penalty_cert transcript length",
            a,
            transcript.len(),
        ));
    }
    let chain = ConsistencyChain::from_referee(referee);
    let pis = chain
        .residual_ops(transcript.states())?
        .iter()
        .map(positive_eigenprojector)
        .collect::<Result<Vec<_>>>()?;
    PenaltyCertificate::new(referee, p.clone(), pis, eps)
}

/// Round arbitrary chain slots to exactly feasible ones. Slot 1 is completed
/// toward the constant marginal, every later slot toward the channel image of
/// its already-rounded predecessor.
pub(crate) fn round_chain(chain: &ConsistencyChain, slots: &[CMat]) -> Result<Vec<CMat>> {
    let n = chain.n();
    if slots.len() != n {
        return Err(Error::dim("round_chain slot count", n, slots.len()));
    }
    let mut rounded: Vec<CMat> = Vec::with_capacity(n);
    for i in 0..n {
        let shape = chain.slot_shape(i);
        let target = if i == 0 {
            chain.q.clone()
        } else {
            chain.channels[i - 1].apply(&rounded[i - 1])?
        };
        let sigma = partial_trace(&slots[i], &shape, "T")?;
        rounded.push(fidelity_completion(
            &sigma, &target, &slots[i], &shape, "T",
        )?);
    }
    Ok(rounded)
}

/// Round a transcript to one exactly consistent with the referee, moving the
/// final state no further than the telescoped Bures angle of the residuals.
pub fn round_to_consistent(referee: &Referee, transcript: &Transcript) -> Result<Transcript> {
    let chain = ConsistencyChain::from_referee(referee);
    Ok(Transcript::new(round_chain(&chain, transcript.states())?))
}
