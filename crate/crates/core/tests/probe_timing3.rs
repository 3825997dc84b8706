use minimax_mmw::game::Referee;
use minimax_mmw::mmw::{solve_lambda_probe_gamma, Schedule};
use minimax_mmw::oracle::PrimedReferee;
use minimax_mmw::qmath::random::{random_density, seeded_rng};
use std::time::Instant;

#[test]
#[ignore]
fn inner_gamma_sweep() {
    let r = Referee::matching_pennies();
    let mut rng = seeded_rng(3);
    for case in 0..3 {
        let rho = if case == 0 {
            minimax_mmw::qmath::identity(4).scale(0.25)
        } else {
            random_density(&mut rng, 4, 4)
        };
        let primed = PrimedReferee::new(&r, &rho).unwrap();
        for gamma in [0.05, 0.1, 0.2, 0.3, 0.45] {
            let mut sched = Schedule::practical(0.1).unwrap();
            sched.gamma = gamma;
            let t0 = Instant::now();
            let res = solve_lambda_probe_gamma(primed.referee(), &sched).unwrap();
            println!(
                "case {case} gamma {gamma}: iters {:6} gap {:+.4} lambda' {:.4} time {:?}",
                res.iterations_run,
                res.stopping_gap.unwrap_or(f64::NAN),
                res.lambda_tilde,
                t0.elapsed()
            );
        }
    }
}
