use minimax_mmw::game::Referee;
use minimax_mmw::mmw::{solve_lambda, Schedule, SolveMode};
use minimax_mmw::oracle::{weak_optimize, NestedOracle};
use std::time::Instant;

#[test]
#[ignore]
fn timing_probe() {
    let r = Referee::matching_pennies();
    let rho = r.initial_density();

    let t0 = Instant::now();
    let (_, _) = weak_optimize(&r, &rho, 0.2).unwrap();
    println!("one weak_optimize: {:?}", t0.elapsed());

    let t0 = Instant::now();
    for _ in 0..5 {
        let _ = weak_optimize(&r, &rho, 0.2).unwrap();
    }
    println!("avg weak_optimize over 5: {:?}", t0.elapsed() / 5);

    // short paper-exact slice to measure per-iteration cost with caching
    let mut sched = Schedule::paper_exact(0.2, 1, 4).unwrap();
    let full_t = sched.iterations;
    sched.iterations = 20_000;
    sched.mode = SolveMode::PaperExact;
    let mut oracle = NestedOracle::new(r.clone(), sched.delta);
    let t0 = Instant::now();
    let res = solve_lambda(&r, &sched, &mut oracle).unwrap();
    let dt = t0.elapsed();
    println!(
        "20k iterations: {:?} ({} fresh oracle calls), lambda so far {:.4}",
        dt,
        oracle.fresh_calls(),
        res.lambda_tilde
    );
    println!(
        "extrapolated full run ({} iters): {:.1} s",
        full_t,
        dt.as_secs_f64() * full_t as f64 / 20_000.0
    );
}
