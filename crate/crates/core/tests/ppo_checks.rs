mod support;

use std::time::Instant;

use support::ppo::{bandit_updates_to_converge, worst_gradient_error};

#[test]
fn gradients_match_central_differences() {
    let started = Instant::now();
    let worst = worst_gradient_error();
    assert!(worst < 1e-4, "worst relative error {worst:e}");
    assert!(started.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn bandit_converges_within_fifty_updates() {
    for seed in 0..3 {
        let n = bandit_updates_to_converge(seed);
        assert!(n.is_some(), "seed {seed} did not converge");
    }
}
