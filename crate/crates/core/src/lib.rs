//! Approximation of two-player zero-sum quantum games in double-interactive-proof
//! form, built around a matrix-multiplicative-weights (MMW) oracle-algorithm.
//!
//! A game is specified by a [`game::Referee`]: an initial pure state on a
//! message/private register pair, a list of referee unitaries, and a final
//! measurement operator whose outcome declares Bob the winner. Alice moves
//! first for `a` turns, then Bob for `b` turns; the game value `λ(R)` is Bob's
//! winning probability under mutual optimal play.
//!
//! The solver relaxes the consistency constraints on Alice's transcript into a
//! penalized min-max problem, runs MMW weight updates against a best-response
//! oracle for Bob, rounds the averaged transcript back to an exactly
//! consistent one, and recovers explicit unitary strategies for both players.
//! The same engine solves transcript-constrained semidefinite programs in
//! which the consistency maps are arbitrary Kraus channels.
//!
//! Module map:
//!
//! - [`qmath`] — dense complex-matrix and quantum-information kernels
//!   (partial traces, Hermitian calculus, fidelity, purification machinery).
//! - [`game`] — referees, strategies, transcripts, simulation, payoff rescaling.
//! - [`rounding`] — the penalized payoff, consistent rounding, penalty certificates.
//! - [`mmw`] — schedules, loss matrices, the weight-update engine, `solve_lambda`.
//! - [`oracle`] — the best-response oracle via reduction to a one-sided game,
//!   unitary recovery from transcripts, strategy extraction and mixing.
//! - [`sdp`] — the Kraus-channel SDP frontend and the game-to-SDP bridge.
//! - [`io`] — JSON serialization of referees, strategies, transcripts and
//!   SDP instances, shared with the CLI.

pub mod error;
pub mod game;
pub mod io;
pub mod mmw;
pub mod oracle;
pub mod qmath;
pub mod rounding;
pub mod sdp;

pub use error::{Error, Result};
pub use qmath::{CMat, Ket, SpaceShape};
