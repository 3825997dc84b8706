use minimax_mmw::game::{bob_measurement, Referee, UnitaryStrategy};
use minimax_mmw::mmw::{solve_lambda, FixedOracle, Schedule, SolveMode};
use minimax_mmw::oracle::weak_optimize_detailed;
use std::time::Instant;

#[test]
#[ignore]
fn engine_base_cost() {
    let r = Referee::matching_pennies();
    let mut sched = Schedule::paper_exact(0.2, 1, 4).unwrap();
    sched.iterations = 20_000;
    sched.mode = SolveMode::PaperExact;
    let mut rng = minimax_mmw::qmath::random::seeded_rng(1);
    let bob = UnitaryStrategy::random(&mut rng, 2, 4, 1);
    let p = bob_measurement(&r, &bob).unwrap();
    let mut oracle = FixedOracle::new(p);
    let t0 = Instant::now();
    let res = solve_lambda(&r, &sched, &mut oracle).unwrap();
    println!(
        "fixed-oracle 20k iterations: {:?} ({:?}/iter), lambda {:.3}",
        t0.elapsed(),
        t0.elapsed() / 20_000,
        res.lambda_tilde
    );
}

#[test]
#[ignore]
fn weak_optimize_cost_breakdown() {
    let r = Referee::matching_pennies();
    let rho = r.initial_density();
    let t0 = Instant::now();
    let (_, _, rep) = weak_optimize_detailed(&r, &rho, 0.2).unwrap();
    println!(
        "weak_optimize: {:?}, inner iterations {}, gap {:?}",
        t0.elapsed(),
        rep.inner_iterations,
        rep.inner_stopping_gap
    );
}
