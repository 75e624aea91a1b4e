mod common;

use common::{conditioned_v, two_level_dataset};
use fedmf::bounds::verify_bound_coverage;
use fedmf::matrix::{gaussian, NoFlops};
use fedmf::solver::{curvature, exact_solution, local_descent, objective, SolverConfig};

#[test]
fn plain_descent_respects_the_linear_rate_tightly() {
    for (k, kappa_sq) in [4.0, 30.0, 120.0].into_iter().enumerate() {
        let seed = 40 + 5 * k as u64;
        let s = gaussian(20, 12, seed).unwrap();
        let v = conditioned_v(12, 3, kappa_sq, seed + 1);
        let cb = curvature(&v);
        let best = objective(&s, &exact_solution(&s, &v).unwrap(), &v).unwrap();
        let cfg = SolverConfig { iterations: 200, ..Default::default() };
        let out = local_descent(&s, &v, gaussian(20, 3, seed + 2).unwrap(), &cfg, &NoFlops).unwrap();
        let initial = out.trajectory[0] - best;
        // Stop once the excess nears round-off in the loss itself.
        for (t, f) in out.trajectory.iter().enumerate().take_while(|(_, f)| **f - best > 1e-9 * best) {
            let allowed = (1.0 - cb.mu / cb.l).powi(t as i32) * initial * (1.0 + 1e-6);
            assert!(f - best <= allowed, "kappa^2 {kappa_sq} t {t}: {} > {allowed}", f - best);
        }
    }
}

#[test]
fn coverage_does_not_drop_with_more_power_rounds() {
    let ds = two_level_dataset();
    let fractions: Vec<f64> = (0..3)
        .map(|alpha| verify_bound_coverage(&ds, 5, alpha, 0.25, 60, 808).unwrap().fraction())
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
    assert!(fractions[0] >= 0.4, "{fractions:?}");
}
