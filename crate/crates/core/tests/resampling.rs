mod common;

use common::two_level_dataset;
use fedmf::federation::{clients_from_dataset, PowerInitOptions};
use fedmf::matrix::singular_values;
use fedmf::resampler::{kappa_p_bound, resample_phi, BoundInputs, KappaBoundVariant, ResampleMode, ResamplePolicy};
use fedmf::Error;

#[test]
fn threshold_at_kappa_bound_succeeds_within_ten_draws() {
    let ds = two_level_dataset();
    let spectrum = singular_values(&ds.concatenated());
    let inputs = BoundInputs { spectrum, r: 5, alpha: 0, d: ds.dim(), p: 1.0 / 6.0 };
    let target = kappa_p_bound(&inputs, KappaBoundVariant::Derivation).unwrap().kappa();
    let clients = clients_from_dataset(&ds, 17);
    let mut successes = 0;
    let mut total_draws = 0;
    for trial in 0..100u64 {
        let policy = ResamplePolicy {
            mode: ResampleMode::Threshold { kappa_target: target, max_draws: 10 },
            base_seed: 1000 * trial,
        };
        match resample_phi(&clients, 0, 5, &policy, PowerInitOptions::default()) {
            Ok(out) => {
                assert!(out.kappa() <= target);
                assert_eq!(out.best, out.draws.len() - 1, "threshold mode stops at the first success");
                total_draws += out.draws.len();
                successes += 1;
            }
            Err(Error::ThresholdUnmet { draws, .. }) => assert_eq!(draws, 10),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    assert!(successes >= 99, "{successes}/100 trials succeeded");
    assert!(total_draws <= 200, "mean draws per trial {}", total_draws as f64 / 100.0);
}

#[test]
fn unreachable_threshold_reports_best_kappa() {
    let ds = two_level_dataset();
    let clients = clients_from_dataset(&ds, 17);
    let policy = ResamplePolicy { mode: ResampleMode::Threshold { kappa_target: 1.0 + 1e-12, max_draws: 3 }, base_seed: 5 };
    match resample_phi(&clients, 0, 5, &policy, PowerInitOptions::default()) {
        Err(Error::ThresholdUnmet { draws, best_kappa, .. }) => {
            assert_eq!(draws, 3);
            assert!(best_kappa > 1.0 && best_kappa.is_finite());
        }
        other => panic!("expected threshold-unmet, got {other:?}"),
    }
}

#[test]
fn target_probability_draws_the_derived_count() {
    let ds = two_level_dataset();
    let clients = clients_from_dataset(&ds, 17);
    let policy = ResamplePolicy { mode: ResampleMode::TargetProbability(0.999), base_seed: 9 };
    let out = resample_phi(&clients, 0, 5, &policy, PowerInitOptions::default()).unwrap();
    assert_eq!(out.draws.len(), 10);
    assert_eq!(out.ledger.aggregation_rounds(), 10);
    let min = out.draws.iter().map(|d| d.kappa).fold(f64::INFINITY, f64::min);
    assert_eq!(out.kappa(), min);
    let seeds: Vec<u64> = out.draws.iter().map(|d| d.seed).collect();
    assert_eq!(seeds, (9..19).collect::<Vec<_>>());
}
