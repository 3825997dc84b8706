//! The matrix-multiplicative-weights engine and the oracle-algorithm for the
//! game value λ(R).
//!
//! The solver works on the penalized relaxation of the transcript-constrained
//! min-max problem: transcript slots range over *all* density operators and
//! every consistency violation is charged to the payoff with weight `a/ε`.
//! Each iteration computes weight densities per slot from the accumulated
//! loss sums, picks the best penalty measurements (positive eigenprojectors
//! of the residual operators), queries the best-response oracle for the max
//! player, converts everything into bounded loss matrices through the adjoint
//! of the penalty map, and accumulates. The running average of the realized
//! payoffs estimates the relaxed value; rounding the averaged transcript
//! yields a consistent near-optimal one.
//!
//! The same loop solves the Kraus-channel SDP form (see [`crate::sdp`]): the
//! game is the special case where each consistency channel conjugates by a
//! referee unitary and traces out the message register.

use crate::error::{Error, Result};
use crate::game::{Referee, Transcript, UnitaryStrategy};
use crate::qmath::{
    hermitian_eig, hermitize, identity, inner_re, partial_trace, positive_eigenprojector, CMat,
    SpaceShape, TOL_CHECK,
};
use crate::rounding;
use crate::sdp::{ChannelKraus, SdpInstance};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// How many consecutive sub-threshold gap checks stop a practical-mode run.
pub const PRACTICAL_PATIENCE: usize = 10;

/// Iteration cap applied when a practical schedule does not set one.
pub const PRACTICAL_DEFAULT_ITERS: usize = 50_000;

/// Solver mode: the schedule proven in the analysis, or the heuristic
/// early-stopping variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMode {
    /// ε = δ/2, γ = εδ/16a², T = ⌈ln(dim)/γ²⌉; carries the |λ̃ − λ| < δ
    /// guarantee.
    PaperExact,
    /// Same iteration body, early stop on a stable best-response gap; results
    /// are heuristic and labeled as such.
    Practical,
}

/// Iteration schedule for a solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    /// Target accuracy δ.
    pub delta: f64,
    /// Penalty sharpness ε (δ/2 in paper-exact mode).
    pub epsilon: f64,
    /// Weight-update step γ ∈ (0, 1/2).
    pub gamma: f64,
    /// Planned iteration count T.
    pub iterations: usize,
    pub mode: SolveMode,
    /// Hard cap; a paper-exact schedule that needs more iterations errors out.
    pub max_iters: Option<usize>,
    /// Practical mode: spacing of the stopping-gap checks.
    pub check_every: usize,
}

impl Schedule {
    /// The schedule from the correctness analysis, for a game with `a` slots
    /// on a space of dimension `dim`.
    pub fn paper_exact(delta: f64, a: usize, dim: usize) -> Result<Schedule> {
        if delta <= 0.0 {
            return Err(Error::Schedule("delta must be positive".to_string()));
        }
        if dim < 2 {
            return Err(Error::Schedule(
                "paper-exact schedule needs dim ≥ 2".to_string(),
            ));
        }
        let a = a.max(1);
        let epsilon = delta / 2.0;
        let gamma = epsilon * delta / (16.0 * (a * a) as f64);
        if gamma <= 0.0 || gamma >= 0.5 {
            return Err(Error::Schedule(format!(
                "gamma {gamma} outside (0, 1/2); choose a smaller delta"
            )));
        }
        let iterations = ((dim as f64).ln() / (gamma * gamma)).ceil() as usize;
        Ok(Schedule {
            delta,
            epsilon,
            gamma,
            iterations,
            mode: SolveMode::PaperExact,
            max_iters: None,
            check_every: 0,
        })
    }

    /// Heuristic schedule: paper penalty weight, a larger step, early stop
    /// once the certified value bracket tightens below δ/2.
    pub fn practical(delta: f64) -> Result<Schedule> {
        if delta <= 0.0 {
            return Err(Error::Schedule("delta must be positive".to_string()));
        }
        Ok(Schedule {
            delta,
            epsilon: delta / 2.0,
            gamma: 0.45,
            iterations: PRACTICAL_DEFAULT_ITERS,
            mode: SolveMode::Practical,
            max_iters: Some(PRACTICAL_DEFAULT_ITERS),
            check_every: 10,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::Schedule(
                "delta and epsilon must be positive".to_string(),
            ));
        }
        if self.gamma <= 0.0 || self.gamma >= 0.5 {
            return Err(Error::Schedule(format!(
                "gamma {} outside (0, 1/2)",
                self.gamma
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Schedule("iteration count must be ≥ 1".to_string()));
        }
        if self.mode == SolveMode::Practical && self.check_every == 0 {
            return Err(Error::Schedule(
                "practical mode needs check_every ≥ 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Effective iteration budget after applying the cap.
    fn budget(&self) -> Result<usize> {
        match (self.mode, self.max_iters) {
            (SolveMode::PaperExact, Some(cap)) if self.iterations > cap => Err(Error::IterationCap {
                needed: self.iterations,
                cap,
            }),
            (_, Some(cap)) => Ok(self.iterations.min(cap)),
            (_, None) => Ok(self.iterations),
        }
    }
}

/// The regret budget (4a²/ε)(γ + ln(dim)/(γT)) of a schedule; errors in
/// paper-exact mode when it exceeds δ/2.
pub fn error_budget(sched: &Schedule, dim: usize, a: usize) -> Result<f64> {
    let a = a.max(1) as f64;
    let t = sched.iterations as f64;
    let bound =
        (4.0 * a * a / sched.epsilon) * (sched.gamma + (dim as f64).ln() / (sched.gamma * t));
    if sched.mode == SolveMode::PaperExact && bound > sched.delta / 2.0 + 1e-12 {
        return Err(Error::Schedule(format!(
            "regret budget {bound:.6} exceeds delta/2 = {:.6}",
            sched.delta / 2.0
        )));
    }
    Ok(bound)
}

/// One solver iteration, as logged to the trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    /// Realized penalized payoff ⟨f(ρ(t)), y(t)⟩.
    pub payoff: f64,
    /// Σ_i ½‖residual_i‖₁ of the current weights.
    pub residual_sum: f64,
    /// Seconds since the solve started.
    pub elapsed_s: f64,
}

/// The `a` loss matrices of one iteration; each satisfies 0 ⪯ M ⪯ (1/a)·I.
#[derive(Debug, Clone)]
pub struct LossTuple {
    mats: Vec<CMat>,
}

impl LossTuple {
    pub fn matrices(&self) -> &[CMat] {
        &self.mats
    }

    /// Check the loss bound; `slots` is the tuple length `a`.
    pub fn validate(&self) -> Result<()> {
        let a = self.mats.len().max(1) as f64;
        for (i, m) in self.mats.iter().enumerate() {
            let eig = hermitian_eig(m);
            let lo = eig.values.last().copied().unwrap_or(0.0);
            let hi = eig.values.first().copied().unwrap_or(0.0);
            let dev = (-lo).max(hi - 1.0 / a).max(0.0);
            if dev > TOL_CHECK {
                return Err(Error::LossBound {
                    deviation: dev,
                    iteration: i,
                });
            }
        }
        Ok(())
    }
}

/// Output of the penalty map f: the final slot state plus the scaled
/// residual operators, ordered by constraint index (residuals[i] couples to
/// the penalty measurement Π_{i+1}).
#[derive(Debug, Clone)]
pub struct FTuple {
    pub last: CMat,
    pub residuals: Vec<CMat>,
}

impl FTuple {
    /// ⟨f(x), (P, Π_a, …, Π_1)⟩.
    pub fn pair(&self, p: &CMat, pi_list: &[CMat]) -> f64 {
        let mut acc = inner_re(&self.last, p);
        for (d, pi) in self.residuals.iter().zip(pi_list) {
            acc += inner_re(d, pi);
        }
        acc
    }
}

/// A best response from the max player: a measurement operator in P(R),
/// optionally with the strategy that induces it.
#[derive(Debug, Clone)]
pub struct OracleAnswer {
    pub p: CMat,
    pub bob: Option<UnitaryStrategy>,
    /// False when the answer was served from a drift-budgeted cache.
    pub fresh: bool,
}

/// Weak-optimization oracle interface: return a measurement operator that is
/// within the oracle's accuracy of the best response to `rho`.
pub trait BestResponseOracle {
    fn best_response(&mut self, rho: &CMat, iteration: usize) -> Result<OracleAnswer>;

    /// Out-of-band query used by the practical-mode stopping check; must not
    /// disturb any state the iterate-path answers depend on.
    fn probe(&mut self, rho: &CMat) -> Result<OracleAnswer> {
        self.best_response(rho, 0)
    }
}

/// Constant oracle for singleton measurement sets.
#[derive(Debug, Clone)]
pub struct FixedOracle {
    p: CMat,
}

impl FixedOracle {
    pub fn new(p: CMat) -> FixedOracle {
        FixedOracle { p }
    }
}

impl BestResponseOracle for FixedOracle {
    fn best_response(&mut self, _rho: &CMat, _iteration: usize) -> Result<OracleAnswer> {
        Ok(OracleAnswer {
            p: self.p.clone(),
            bob: None,
            fresh: false,
        })
    }
}

/// The consistency structure shared by the game solver and the SDP frontend:
/// slot i+1's traced marginal must match channel i applied to slot i, with
/// slot 1 pinned to the constant marginal `q`.
#[derive(Debug, Clone)]
pub(crate) struct ConsistencyChain {
    pub traced_dims: Vec<usize>,
    pub resid_dims: Vec<usize>,
    /// channels[i] = Φ_{i+1} : L(slot_{i+1}) → L(R_{i+2}) in 1-based terms.
    pub channels: Vec<ChannelKraus>,
    pub q: CMat,
}

impl ConsistencyChain {
    pub fn n(&self) -> usize {
        self.traced_dims.len()
    }

    pub fn slot_dim(&self, i: usize) -> usize {
        self.traced_dims[i] * self.resid_dims[i]
    }

    pub fn slot_shape(&self, i: usize) -> SpaceShape {
        SpaceShape::new([("T", self.traced_dims[i]), ("R", self.resid_dims[i])])
            .expect("valid dims")
    }

    pub fn from_referee(r: &Referee) -> ConsistencyChain {
        let a = r.alice_turns();
        let channels = (1..a)
            .map(|i| {
                ChannelKraus::conjugate_and_trace_first(&r.v_op(i), r.d_c(), r.d_v())
                    .expect("referee unitaries are valid")
            })
            .collect();
        let shape = r.cv_shape();
        let q = partial_trace(&r.initial_density(), &shape, "C").expect("valid shape");
        ConsistencyChain {
            traced_dims: vec![r.d_c(); a],
            resid_dims: vec![r.d_v(); a],
            channels,
            q,
        }
    }

    pub fn from_instance(inst: &SdpInstance) -> ConsistencyChain {
        ConsistencyChain {
            traced_dims: inst.traced_dims().to_vec(),
            resid_dims: inst.resid_dims().to_vec(),
            channels: inst.channels().to_vec(),
            q: inst.q().clone(),
        }
    }

    /// tr_T of slot i's operator.
    fn traced_marginal(&self, i: usize, x: &CMat) -> Result<CMat> {
        partial_trace(x, &self.slot_shape(i), "T")
    }

    /// Residual operators D_i = tr_T(X_{i+1}) − Φ_i(X_i), with the constant
    /// branch linearized as tr(X_1)·q.
    pub fn residual_ops(&self, slots: &[CMat]) -> Result<Vec<CMat>> {
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let lhs = self.traced_marginal(i, &slots[i])?;
            let rhs = if i == 0 {
                self.q.scale(slots[0].trace().re)
            } else {
                self.channels[i - 1].apply(&slots[i - 1])?
            };
            out.push(lhs - rhs);
        }
        Ok(out)
    }

    /// The penalty map f: (slots) ↦ (X_n, (n/ε)·D_{n−1}, …, (n/ε)·D_0).
    pub fn f_map(&self, slots: &[CMat], eps: f64) -> Result<FTuple> {
        let n = self.n();
        if slots.len() != n {
            return Err(Error::dim("f_map slot count", n, slots.len()));
        }
        let scale = n as f64 / eps;
        let residuals = self
            .residual_ops(slots)?
            .into_iter()
            .map(|d| d.scale(scale))
            .collect();
        Ok(FTuple {
            last: slots[n - 1].clone(),
            residuals,
        })
    }

    /// Adjoint of the penalty map: slot components of f*(P, Π_n, …, Π_1).
    /// `pi_list[i]` is the measurement paired with constraint i.
    pub fn f_adjoint(&self, p: &CMat, pi_list: &[CMat], eps: f64) -> Result<Vec<CMat>> {
        let n = self.n();
        if pi_list.len() != n {
            return Err(Error::dim("f_adjoint measurement count", n, pi_list.len()));
        }
        if p.nrows() != self.slot_dim(n - 1) {
            return Err(Error::dim("f_adjoint P", self.slot_dim(n - 1), p.nrows()));
        }
        let scale = Complex64::new(n as f64 / eps, 0.0);
        let mut comps: Vec<CMat> = (0..n)
            .map(|i| CMat::zeros(self.slot_dim(i), self.slot_dim(i)))
            .collect();
        comps[n - 1] += p;
        for i in 0..n {
            let pi = &pi_list[i];
            if pi.nrows() != self.resid_dims[i] {
                return Err(Error::dim(
                    format!("penalty measurement {}", i + 1),
                    self.resid_dims[i],
                    pi.nrows(),
                ));
            }
            // adjoint of tr_T on slot i+1 (0-based i)
            comps[i] += crate::qmath::kron(&identity(self.traced_dims[i]), pi) * scale;
            if i == 0 {
                let coupling = Complex64::new(inner_re(&self.q, pi), 0.0);
                let d = self.slot_dim(0);
                comps[0] -= identity(d) * (scale * coupling);
            } else {
                comps[i - 1] -= self.channels[i - 1].adjoint_apply(pi)? * scale;
            }
        }
        Ok(comps)
    }

    /// Loss matrices (ε/4n²)·[f*(P, Π) + (2n/ε)·I], each in [0, (1/n)·I].
    pub fn loss_tuple(&self, p: &CMat, pi_list: &[CMat], eps: f64) -> Result<LossTuple> {
        let n = self.n();
        let comps = self.f_adjoint(p, pi_list, eps)?;
        let outer = eps / (4.0 * (n * n) as f64);
        let inner = 2.0 * n as f64 / eps;
        let mats = comps
            .into_iter()
            .enumerate()
            .map(|(i, c)| hermitize(&((c + identity(self.slot_dim(i)).scale(inner)).scale(outer))))
            .collect();
        Ok(LossTuple { mats })
    }
}

/// Normalized weight density exp(−γ·S)/tr(exp(−γ·S)), computed with a
/// spectral shift so arbitrarily long loss sums stay in range.
fn weight_density(loss_sum: &CMat, gamma: f64) -> CMat {
    let eig = hermitian_eig(loss_sum);
    let n = loss_sum.nrows();
    // exp(−γλ) is largest at the smallest eigenvalue
    let lmin = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| (-(gamma * (l - lmin))).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let mut scaled = eig.vectors.clone();
    for (k, w) in weights.iter().enumerate() {
        let s = Complex64::new(w / z, 0.0);
        for r in 0..n {
            scaled[(r, k)] *= s;
        }
    }
    hermitize(&(&scaled * eig.vectors.adjoint()))
}

/// Weight densities for each slot after a history of losses (empty history
/// gives the maximally mixed state).
pub fn mmw_weights(history: &[LossTuple], gamma: f64, slot_dims: &[usize]) -> Vec<CMat> {
    let n = slot_dims.len();
    let mut sums: Vec<CMat> = slot_dims.iter().map(|&d| CMat::zeros(d, d)).collect();
    for tuple in history {
        for (i, m) in tuple.matrices().iter().enumerate() {
            sums[i] += m;
        }
    }
    (0..n).map(|i| weight_density(&sums[i], gamma)).collect()
}

pub(crate) struct EngineConfig {
    pub collect_trace: bool,
    pub strategy_samples: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            collect_trace: true,
            strategy_samples: 8,
        }
    }
}

pub(crate) struct EngineOutcome {
    /// Raw running average of realized payoffs: the μ_ε estimate.
    pub mu_avg: f64,
    pub avg_slots: Vec<CMat>,
    pub avg_p: CMat,
    pub avg_pis: Vec<CMat>,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub stopping_gap: Option<f64>,
    /// Midpoint of the last certified value bracket (practical mode only).
    pub bracket_estimate: Option<f64>,
    pub sampled_answers: Vec<(usize, OracleAnswer)>,
    pub loss_eig_range: (f64, f64),
}

/// Certified bracket around the relaxed value: `primal` is a best-response
/// payoff against the averaged slots (an upper estimate), `dual` the smallest
/// pairing any slot tuple can achieve against the averaged certificate (a
/// lower bound).
struct ValueBracket {
    primal: f64,
    dual: f64,
}

fn value_bracket(
    chain: &ConsistencyChain,
    eps: f64,
    oracle: &mut dyn BestResponseOracle,
    slot_sums: &[CMat],
    p_sum: &CMat,
    pi_sums: &[CMat],
    norm: f64,
) -> Result<ValueBracket> {
    let n = chain.n();
    let inv = Complex64::new(1.0 / norm, 0.0);
    let x_bar: Vec<CMat> = slot_sums.iter().map(|m| m * inv).collect();
    let resid = chain.residual_ops(&x_bar)?;
    let mut primal = {
        let answer = oracle.probe(&x_bar[n - 1])?;
        inner_re(&x_bar[n - 1], &answer.p)
    };
    let scale = n as f64 / eps;
    for d in &resid {
        let proj = positive_eigenprojector(&hermitize(d))?;
        primal += scale * inner_re(d, &proj);
    }
    let p_bar = p_sum * inv;
    let pi_bar: Vec<CMat> = pi_sums.iter().map(|m| m * inv).collect();
    let comps = chain.f_adjoint(&p_bar, &pi_bar, eps)?;
    let dual: f64 = comps
        .iter()
        .map(|c| hermitian_eig(c).values.last().copied().unwrap_or(0.0))
        .sum();
    Ok(ValueBracket { primal, dual })
}

/// Evenly spaced reservoir of fresh oracle answers: thins itself by doubling
/// the stride whenever full, so memory stays bounded over any run length.
struct SampleReservoir {
    cap: usize,
    stride: usize,
    items: Vec<(usize, OracleAnswer)>,
}

impl SampleReservoir {
    fn new(cap: usize) -> SampleReservoir {
        SampleReservoir {
            cap: cap.max(2),
            stride: 1,
            items: Vec::new(),
        }
    }

    fn offer(&mut self, t: usize, answer: &OracleAnswer) {
        if !answer.fresh || t % self.stride != 0 {
            return;
        }
        self.items.push((t, answer.clone()));
        if self.items.len() >= self.cap {
            let mut keep = Vec::with_capacity(self.cap / 2 + 1);
            for (idx, item) in self.items.drain(..).enumerate() {
                if idx % 2 == 0 {
                    keep.push(item);
                }
            }
            self.items = keep;
            self.stride *= 2;
        }
    }

    fn take_evenly(mut self, count: usize) -> Vec<(usize, OracleAnswer)> {
        if self.items.len() <= count {
            return self.items;
        }
        let step = self.items.len() as f64 / count as f64;
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let idx = (k as f64 * step) as usize;
            out.push(self.items[idx].clone());
        }
        self.items.clear();
        out
    }
}

/// Parallelize per-slot spectral work only when it is heavy enough to pay
/// for the fan-out.
fn slot_map<T: Send>(
    n: usize,
    dim_hint: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    if n >= 2 && dim_hint >= 16 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

pub(crate) fn run_engine(
    chain: &ConsistencyChain,
    sched: &Schedule,
    oracle: &mut dyn BestResponseOracle,
    cfg: &EngineConfig,
) -> Result<EngineOutcome> {
    sched.validate()?;
    let n = chain.n();
    let budget = sched.budget()?;
    let max_dim = (0..n).map(|i| chain.slot_dim(i)).max().unwrap_or(1);
    let start = Instant::now();

    let mut loss_sums: Vec<CMat> = (0..n)
        .map(|i| CMat::zeros(chain.slot_dim(i), chain.slot_dim(i)))
        .collect();
    let mut avg_slots: Vec<CMat> = loss_sums.clone();
    let mut avg_p = CMat::zeros(chain.slot_dim(n - 1), chain.slot_dim(n - 1));
    let mut avg_pis: Vec<CMat> = (0..n)
        .map(|i| CMat::zeros(chain.resid_dims[i], chain.resid_dims[i]))
        .collect();
    let mut payoff_sum = 0.0_f64;
    let mut trace = Vec::new();
    let mut reservoir = SampleReservoir::new(64);
    let mut loss_lo = f64::INFINITY;
    let mut loss_hi = f64::NEG_INFINITY;
    let mut stable_checks = 0usize;
    let mut stopping_gap = None;
    let mut last_bracket: Option<ValueBracket> = None;
    let mut iterations = 0usize;
    let scale = n as f64 / sched.epsilon;
    let loss_cap = 1.0 / n as f64;
    // Paper-exact mode averages iterates uniformly, as analyzed. Practical
    // mode weights iterate t by t, which discounts the opening transient
    // that otherwise dominates short early-stopped runs.
    let iter_weight = |t: usize| -> f64 {
        match sched.mode {
            SolveMode::PaperExact => 1.0,
            SolveMode::Practical => t as f64,
        }
    };
    let mut weight_total = 0.0_f64;

    for t in 1..=budget {
        let slots = slot_map(n, max_dim, |i| weight_density(&loss_sums[i], sched.gamma));

        let resid_ops = chain.residual_ops(&slots)?;
        let pis: Vec<CMat> = resid_ops
            .iter()
            .map(|d| positive_eigenprojector(&hermitize(d)))
            .collect::<Result<_>>()?;

        let answer = oracle.best_response(&slots[n - 1], t)?;

        let resid_sum: f64 = resid_ops
            .iter()
            .zip(&pis)
            .map(|(d, pi)| inner_re(d, pi))
            .sum();
        let payoff = inner_re(&slots[n - 1], &answer.p) + scale * resid_sum;

        let losses = chain.loss_tuple(&answer.p, &pis, sched.epsilon)?;
        for (i, m) in losses.matrices().iter().enumerate() {
            let ev = hermitize(m).symmetric_eigenvalues();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in ev.iter() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            loss_lo = loss_lo.min(lo);
            loss_hi = loss_hi.max(hi);
            if lo < -TOL_CHECK || hi > loss_cap + TOL_CHECK {
                return Err(Error::LossBound {
                    deviation: (-lo).max(hi - loss_cap),
                    iteration: t,
                });
            }
            loss_sums[i] += m;
        }

        let w = iter_weight(t);
        let cw = Complex64::new(w, 0.0);
        weight_total += w;
        payoff_sum += payoff;
        for (acc, s) in avg_slots.iter_mut().zip(&slots) {
            *acc += s * cw;
        }
        avg_p += &answer.p * cw;
        for (acc, pi) in avg_pis.iter_mut().zip(&pis) {
            *acc += pi * cw;
        }
        reservoir.offer(t, &answer);
        iterations = t;

        if cfg.collect_trace {
            trace.push(IterationRecord {
                t: t as u64,
                payoff,
                residual_sum: resid_sum,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
        }

        if sched.mode == SolveMode::Practical && t % sched.check_every == 0 {
            let bracket = value_bracket(
                chain,
                sched.epsilon,
                oracle,
                &avg_slots,
                &avg_p,
                &avg_pis,
                weight_total,
            )?;
            let gap = bracket.primal - bracket.dual;
            stopping_gap = Some(gap);
            last_bracket = Some(bracket);
            if gap < sched.delta / 2.0 {
                stable_checks += 1;
                if stable_checks >= PRACTICAL_PATIENCE {
                    break;
                }
            } else {
                stable_checks = 0;
            }
        }
    }

    if sched.mode == SolveMode::Practical && last_bracket.is_none() {
        let bracket = value_bracket(
            chain,
            sched.epsilon,
            oracle,
            &avg_slots,
            &avg_p,
            &avg_pis,
            weight_total,
        )?;
        stopping_gap = Some(bracket.primal - bracket.dual);
        last_bracket = Some(bracket);
    }

    let c_inv = Complex64::new(1.0 / weight_total, 0.0);
    for acc in avg_slots.iter_mut() {
        *acc *= c_inv;
    }
    avg_p *= c_inv;
    for acc in avg_pis.iter_mut() {
        *acc *= c_inv;
    }

    Ok(EngineOutcome {
        mu_avg: payoff_sum / iterations as f64,
        avg_slots,
        avg_p,
        avg_pis,
        iterations,
        trace,
        stopping_gap: if sched.mode == SolveMode::Practical {
            stopping_gap
        } else {
            None
        },
        bracket_estimate: last_bracket.map(|b| 0.5 * (b.primal + b.dual)),
        sampled_answers: reservoir.take_evenly(cfg.strategy_samples),
        loss_eig_range: (loss_lo, loss_hi),
    })
}

/// Outcome of a solve: the value estimate, averaged and rounded transcripts,
/// averaged certificate, and diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// δ-approximation of λ(R), clamped into [0,1].
    pub lambda_tilde: f64,
    /// Raw running-average payoff: the μ_ε(R) estimate (unclamped).
    pub mu_estimate: f64,
    pub avg_transcript: Transcript,
    /// Averaged transcript rounded to exact consistency.
    pub rounded_transcript: Transcript,
    /// Averaged best-response measurement (the max player's certificate).
    pub avg_p: CMat,
    /// Averaged penalty measurements, one per constraint.
    pub avg_pi_list: Vec<CMat>,
    pub iterations_run: usize,
    pub trace: Vec<IterationRecord>,
    /// True when the run used practical mode (no proven δ guarantee).
    pub heuristic: bool,
    /// Last best-response gap observed by the practical stopper.
    pub stopping_gap: Option<f64>,
    /// Fresh oracle answers sampled evenly over the run, for strategy mixing.
    pub bob_iterates: Vec<(usize, UnitaryStrategy)>,
    /// Smallest and largest loss-matrix eigenvalue seen over the whole run.
    pub loss_eig_range: (f64, f64),
}

/// Penalty map of the game: f(ρ_1..ρ_a) = (ρ_a, (a/ε)·residuals).
pub fn f_map(referee: &Referee, transcript: &Transcript, eps: f64) -> Result<FTuple> {
    ConsistencyChain::from_referee(referee).f_map(transcript.states(), eps)
}

/// Adjoint of the game's penalty map; `pi_list[i]` lives on V and couples to
/// constraint i (so `pi_list[a−1]` is the paper's Π_a).
pub fn f_adjoint(
    referee: &Referee,
    p: &CMat,
    pi_list: &[CMat],
    eps: f64,
) -> Result<Vec<CMat>> {
    ConsistencyChain::from_referee(referee).f_adjoint(p, pi_list, eps)
}

/// Loss matrices for one iteration of the game solver.
pub fn loss_tuple(referee: &Referee, p: &CMat, pi_list: &[CMat], eps: f64) -> Result<LossTuple> {
    ConsistencyChain::from_referee(referee).loss_tuple(p, pi_list, eps)
}

/// Probe entry point for schedule calibration on one-sided games (test use).
#[doc(hidden)]
pub fn solve_lambda_probe_gamma(referee: &Referee, sched: &Schedule) -> Result<SolveResult> {
    let p = crate::game::bob_measurement(referee, &crate::game::UnitaryStrategy::empty())?;
    let mut oracle = FixedOracle::new(p);
    solve_lambda(referee, sched, &mut oracle)
}

/// Run the oracle-algorithm for λ(R) with the given best-response oracle.
///
/// Requires a ≥ 1 (a game with no Alice turns reduces to a single oracle
/// query; see [`crate::oracle::solve_game`]). In paper-exact mode the result
/// carries the |λ̃ − λ(R)| < δ guarantee, assuming the oracle answers within
/// δ/2.
pub fn solve_lambda(
    referee: &Referee,
    sched: &Schedule,
    oracle: &mut dyn BestResponseOracle,
) -> Result<SolveResult> {
    solve_lambda_with(referee, sched, oracle, &EngineConfig::default())
}

pub(crate) fn solve_lambda_with(
    referee: &Referee,
    sched: &Schedule,
    oracle: &mut dyn BestResponseOracle,
    cfg: &EngineConfig,
) -> Result<SolveResult> {
    if referee.alice_turns() == 0 {
        return Err(Error::validation(
            "solve_lambda",
            "needs a ≥ 1; use oracle::solve_game for a = 0",
        ));
    }
    let chain = ConsistencyChain::from_referee(referee);
    let outcome = run_engine(&chain, sched, oracle, cfg)?;
    let avg_transcript = Transcript::new(outcome.avg_slots);
    let rounded_transcript = rounding::round_to_consistent(referee, &avg_transcript)?;
    let bob_iterates = outcome
        .sampled_answers
        .into_iter()
        .filter_map(|(t, ans)| ans.bob.map(|b| (t, b)))
        .collect();
    // Practical runs stop early, so the full running average is polluted by
    // the opening transient; the certified bracket midpoint is the better
    // estimate there. Paper-exact runs use the analyzed average.
    let estimate = match sched.mode {
        SolveMode::PaperExact => outcome.mu_avg,
        SolveMode::Practical => outcome.bracket_estimate.unwrap_or(outcome.mu_avg),
    };
    Ok(SolveResult {
        lambda_tilde: estimate.clamp(0.0, 1.0),
        mu_estimate: estimate,
        avg_transcript,
        rounded_transcript,
        avg_p: outcome.avg_p,
        avg_pi_list: outcome.avg_pis,
        iterations_run: outcome.iterations,
        trace: outcome.trace,
        heuristic: sched.mode == SolveMode::Practical,
        stopping_gap: outcome.stopping_gap,
        bob_iterates,
        loss_eig_range: outcome.loss_eig_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{random_referee, Referee};
    use crate::qmath::random::{random_density, random_measurement, seeded_rng};
    use crate::qmath::{inner_re, op_norm, trace_norm, zeros};
    use approx::assert_relative_eq;

    fn game_chain(r: &Referee) -> ConsistencyChain {
        ConsistencyChain::from_referee(r)
    }

    #[test]
    fn paper_schedule_arithmetic() {
        // δ = 0.5, a = 2, D = 4: γ = 0.25·0.5/64
        let sched = Schedule::paper_exact(0.5, 2, 4).unwrap();
        assert_relative_eq!(sched.epsilon, 0.25);
        assert_relative_eq!(sched.gamma, 0.001953125);
        let t_expected = (4.0f64.ln() / (sched.gamma * sched.gamma)).ceil() as usize;
        assert_eq!(sched.iterations, t_expected);
        let bound = error_budget(&sched, 4, 2).unwrap();
        assert!(bound <= 0.25 + 1e-12);
    }

    #[test]
    fn error_budget_rejects_inflated_gamma() {
        let mut sched = Schedule::paper_exact(0.5, 2, 4).unwrap();
        sched.gamma *= 2.0;
        assert!(error_budget(&sched, 4, 2).is_err());
    }

    #[test]
    fn error_budget_sweep_stays_within_half_delta() {
        for delta in [0.2, 0.3, 0.5] {
            for a in [1usize, 2, 3] {
                for dim in [2usize, 4, 8] {
                    let sched = Schedule::paper_exact(delta, a, dim).unwrap();
                    let bound = error_budget(&sched, dim, a).unwrap();
                    assert!(bound <= delta / 2.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn f_map_zero_and_consistent_cases() {
        let r = random_referee(1, 2, 2, 2, 0);
        let chain = game_chain(&r);
        // linearity probe: all-zero slots map to the all-zero tuple
        let zeros_t = vec![zeros(4), zeros(4)];
        let out = chain.f_map(&zeros_t, 0.25).unwrap();
        assert!(out.last.norm() == 0.0);
        for d in &out.residuals {
            assert!(d.norm() < 1e-15);
        }
        // consistent transcript: residual components vanish
        let mut rng = seeded_rng(2);
        let alice = crate::game::UnitaryStrategy::random(&mut rng, 2, 4, 2);
        let t = crate::game::transcript_of(&r, &alice).unwrap();
        let out = chain.f_map(t.states(), 0.25).unwrap();
        assert!(trace_norm(&(out.last.clone() - t.states()[1].clone())) < 1e-12);
        for d in &out.residuals {
            assert!(trace_norm(d) < 1e-7);
        }
    }

    #[test]
    fn f_map_matches_componentwise_reconstruction() {
        let r = random_referee(3, 2, 2, 2, 0);
        let chain = game_chain(&r);
        let mut rng = seeded_rng(4);
        let slots = vec![random_density(&mut rng, 4, 4), random_density(&mut rng, 4, 2)];
        let eps = 0.3;
        let out = chain.f_map(&slots, eps).unwrap();
        let shape = r.cv_shape();
        let scale = 2.0 / eps;
        // constraint 0: tr_C ρ_1 − tr(ρ_1)·tr_C ψψ*
        let d0 = crate::qmath::partial_trace(&slots[0], &shape, "C").unwrap()
            - crate::qmath::partial_trace(&r.initial_density(), &shape, "C")
                .unwrap()
                .scale(slots[0].trace().re);
        assert!(trace_norm(&(out.residuals[0].clone() - d0.scale(scale))) < 1e-10);
        // constraint 1: tr_C ρ_2 − tr_C(V_1 ρ_1 V_1*)
        let v1 = r.v_op(1);
        let d1 = crate::qmath::partial_trace(&slots[1], &shape, "C").unwrap()
            - crate::qmath::partial_trace(&(&v1 * &slots[0] * v1.adjoint()), &shape, "C").unwrap();
        assert!(trace_norm(&(out.residuals[1].clone() - d1.scale(scale))) < 1e-10);
    }

    #[test]
    fn adjoint_identity_holds_on_random_pairs() {
        // ⟨f(x), y⟩ = ⟨x, f*(y)⟩ over random transcripts and certificates
        let r = random_referee(5, 2, 2, 3, 0);
        let chain = game_chain(&r);
        let mut rng = seeded_rng(6);
        let eps = 0.2;
        for _ in 0..100 {
            let slots: Vec<CMat> = (0..3).map(|_| random_density(&mut rng, 4, 4)).collect();
            let p = random_measurement(&mut rng, 4);
            let pis: Vec<CMat> = (0..3).map(|_| random_measurement(&mut rng, 2)).collect();
            let lhs = chain.f_map(&slots, eps).unwrap().pair(&p, &pis);
            let comps = chain.f_adjoint(&p, &pis, eps).unwrap();
            let rhs: f64 = slots
                .iter()
                .zip(&comps)
                .map(|(x, c)| inner_re(x, c))
                .sum();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-8);
        }
    }

    #[test]
    fn adjoint_components_respect_paper_bounds() {
        // (0, −(a/ε)I, …, −2(a/ε)I) ⪯ f* ⪯ ((1+a/ε)I, (a/ε)I, …)
        let r = random_referee(7, 2, 2, 3, 0);
        let chain = game_chain(&r);
        let mut rng = seeded_rng(8);
        let eps = 0.25;
        let aov = 3.0 / eps;
        for _ in 0..20 {
            let p = random_measurement(&mut rng, 4);
            let pis: Vec<CMat> = (0..3).map(|_| random_measurement(&mut rng, 2)).collect();
            let comps = chain.f_adjoint(&p, &pis, eps).unwrap();
            for (i, c) in comps.iter().enumerate() {
                let eig = hermitian_eig(c);
                let hi = eig.values.first().copied().unwrap();
                let lo = eig.values.last().copied().unwrap();
                let (want_lo, want_hi) = if i == 2 {
                    (0.0, 1.0 + aov)
                } else if i == 0 {
                    (-2.0 * aov, aov)
                } else {
                    (-aov, aov)
                };
                assert!(lo >= want_lo - 1e-9, "slot {i} low {lo} < {want_lo}");
                assert!(hi <= want_hi + 1e-9, "slot {i} high {hi} > {want_hi}");
            }
        }
    }

    #[test]
    fn loss_matrices_zero_certificate() {
        // P = 0, Π_i = 0 makes every loss matrix I/(2a)
        let r = random_referee(9, 2, 2, 2, 0);
        let chain = game_chain(&r);
        let losses = chain
            .loss_tuple(&zeros(4), &[zeros(2), zeros(2)], 0.25)
            .unwrap();
        for m in losses.matrices() {
            assert!(op_norm(&(m.clone() - identity(4).scale(0.25))) < 1e-12);
        }
        losses.validate().unwrap();
    }

    #[test]
    fn loss_matrices_random_certificates_stay_bounded() {
        let r = random_referee(11, 2, 2, 2, 0);
        let chain = game_chain(&r);
        let mut rng = seeded_rng(12);
        for _ in 0..20 {
            let p = random_measurement(&mut rng, 4);
            let pis: Vec<CMat> = (0..2).map(|_| random_measurement(&mut rng, 2)).collect();
            let losses = chain.loss_tuple(&p, &pis, 0.25).unwrap();
            losses.validate().unwrap();
        }
    }

    #[test]
    fn empty_history_weights_are_maximally_mixed() {
        let w = mmw_weights(&[], 0.1, &[4, 4]);
        for m in &w {
            assert!(op_norm(&(m.clone() - identity(4).scale(0.25))) < 1e-12);
        }
    }

    #[test]
    fn constant_diagonal_loss_concentrates_weight() {
        let mut loss = zeros(2);
        loss[(1, 1)] = Complex64::new(1.0, 0.0);
        let tuple = LossTuple {
            mats: vec![loss.clone()],
        };
        let mut history = Vec::new();
        let mut prev = 0.5;
        for _ in 0..30 {
            history.push(tuple.clone());
            let w = mmw_weights(&history, 0.2, &[2]);
            let now = w[0][(0, 0)].re;
            assert!(now >= prev - 1e-12, "weight on the favored basis vector must grow");
            prev = now;
        }
        assert!(prev > 0.9);
    }

    #[test]
    fn regret_inequality_holds_for_random_streams() {
        // the weight sequence satisfies the additive regret bound against
        // random comparators (α = 1 losses)
        let mut rng = seeded_rng(13);
        let d = 4;
        let t_len = 60;
        let gamma = 0.1;
        let mut history: Vec<LossTuple> = Vec::new();
        let mut realized = 0.0;
        let mut avg_loss = zeros(d);
        for _ in 0..t_len {
            let w = mmw_weights(&history, gamma, &[d]);
            let m = random_measurement(&mut rng, d);
            realized += inner_re(&w[0], &m);
            avg_loss += &m;
            history.push(LossTuple { mats: vec![m] });
        }
        realized /= t_len as f64;
        avg_loss *= Complex64::new(1.0 / t_len as f64, 0.0);
        let bound = gamma + (d as f64).ln() / (gamma * t_len as f64);
        for _ in 0..20 {
            let comparator = random_density(&mut rng, d, d);
            let rhs = inner_re(&comparator, &avg_loss) + bound;
            assert!(realized <= rhs + 1e-8);
        }
    }

    #[test]
    fn practical_schedule_reports_gap_and_stops() {
        // Π = I referee: the oracle is constant, the weights settle fast
        let r = Referee::bob_always_wins(2, 2, 1, 0);
        let sched = Schedule::practical(0.4).unwrap();
        let p = crate::game::bob_measurement(&r, &crate::game::UnitaryStrategy::empty()).unwrap();
        let mut oracle = FixedOracle::new(p);
        let res = solve_lambda(&r, &sched, &mut oracle).unwrap();
        assert!(res.heuristic);
        assert!(res.stopping_gap.is_some());
        assert!(res.iterations_run < sched.iterations);
        assert!(res.lambda_tilde > 0.9);
    }

    #[test]
    fn paper_exact_on_bob_always_wins() {
        let r = Referee::bob_always_wins(2, 2, 1, 0);
        let sched = Schedule::paper_exact(0.5, 1, 4).unwrap();
        let p = crate::game::bob_measurement(&r, &crate::game::UnitaryStrategy::empty()).unwrap();
        let mut oracle = FixedOracle::new(p);
        let res = solve_lambda(&r, &sched, &mut oracle).unwrap();
        assert!(res.lambda_tilde >= 0.5 && res.lambda_tilde <= 1.0);
        assert!(!res.heuristic);
        // the measured average equals the trace's mean payoff
        let mean: f64 =
            res.trace.iter().map(|r| r.payoff).sum::<f64>() / res.trace.len() as f64;
        assert_relative_eq!(mean, res.mu_estimate, epsilon = 1e-8);
        // loss bound held throughout
        assert!(res.loss_eig_range.0 >= -TOL_CHECK);
        assert!(res.loss_eig_range.1 <= 1.0 + TOL_CHECK);
    }

    #[test]
    fn iteration_cap_is_enforced_in_paper_mode() {
        let r = Referee::bob_always_wins(2, 2, 1, 0);
        let mut sched = Schedule::paper_exact(0.2, 1, 4).unwrap();
        sched.max_iters = Some(10);
        let p = crate::game::bob_measurement(&r, &crate::game::UnitaryStrategy::empty()).unwrap();
        let mut oracle = FixedOracle::new(p);
        match solve_lambda(&r, &sched, &mut oracle) {
            Err(Error::IterationCap { .. }) => {}
            other => panic!("expected IterationCap, got {other:?}"),
        }
    }
}
