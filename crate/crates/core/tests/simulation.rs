use bdb_core::simulate::{
    conditional_positivity, generate, quantile_edges, simulate_regions, undersampled_rate,
    GeneratorConfig, Stratify,
};
use bdb_core::theory::{expected_positivity_general_tau, TheoryParams};

fn base() -> GeneratorConfig {
    GeneratorConfig {
        n_regions: 100_000,
        samples_per_region_train: 20,
        samples_per_region_train_min: None,
        samples_per_region_test: 10,
        beta1_t: 1.0,
        beta0_t: 3.0,
        beta1_p: 1.0,
        beta0_p: 3.0,
        tau: 1.0,
        seed: 5,
    }
}

#[test]
fn matching_priors_give_unbiased_scores() {
    let g = generate(&base()).unwrap();
    assert_eq!(g.test.len(), 1_000_000);
    let scores: Vec<f64> = g.truth.iter().map(|r| r.score).collect();
    let strata =
        conditional_positivity(&g.truth, Stratify::Score, &quantile_edges(&scores, 10), &[]);
    for s in strata.iter().filter(|s| s.count > 0) {
        let gap = s.mean_value.unwrap() - s.mean_test.unwrap();
        assert!(gap.abs() <= 0.02, "bucket {}: gap {gap}", s.value_bin);
    }
}

#[test]
fn train_labels_follow_the_undersampled_rate() {
    let cfg = GeneratorConfig { tau: 4.0, ..base() };
    let truth = simulate_regions(&cfg).unwrap();
    let observed: u64 = truth.iter().map(|r| r.k_train).sum();
    let (mut mean, mut var) = (0.0, 0.0);
    for r in &truth {
        let q = undersampled_rate(r.s_true, cfg.tau);
        mean += r.n_train as f64 * q;
        var += r.n_train as f64 * q * (1.0 - q);
    }
    assert!((observed as f64 - mean).abs() <= 3.0 * var.sqrt());
}

#[test]
fn abundant_evidence_recovers_true_rate() {
    let cfg = GeneratorConfig {
        n_regions: 200,
        samples_per_region_train: 200_000,
        ..base()
    };
    for r in simulate_regions(&cfg).unwrap() {
        let sd = (r.s_true * (1.0 - r.s_true) / 2e5).sqrt();
        // prior pull is at most 4 / 200004
        assert!((r.score - r.s_true).abs() <= 3.0 * sd + 2e-5, "{r:?}");
    }
}

/// With a constant train size, each train positive count is its own
/// stratum, so stratum means can be compared with the posterior mean.
fn check_against_theory(tau: f64) {
    let cfg = GeneratorConfig {
        tau,
        beta1_t: 2.0,
        beta0_t: 6.0,
        beta1_p: 1.0,
        beta0_p: 1.0,
        ..base()
    };
    let n = cfg.samples_per_region_train as f64;
    let truth = simulate_regions(&cfg).unwrap();
    let edges: Vec<f64> = (1..20).map(|k| (k as f64 - 0.5) / n).collect();
    let p = TheoryParams::new(
        cfg.omega(),
        cfg.xi(),
        cfg.nu(),
        tau,
        cfg.model_prior_mass() / n,
        n,
    )
    .unwrap();
    let mut checked = 0;
    for s in conditional_positivity(&truth, Stratify::TrainPositivity, &edges, &[]) {
        if s.count < 2000 {
            continue;
        }
        let s_train = s.mean_value.unwrap();
        let expected = expected_positivity_general_tau(s_train, &p).unwrap();
        let (t, se_t) = (s.mean_true.unwrap(), s.se_true.unwrap());
        let (e, se_e) = (s.mean_test.unwrap(), s.se_test.unwrap());
        assert!(
            (t - expected).abs() <= 3.0 * se_t,
            "k/n={s_train}: true {t} vs {expected}"
        );
        assert!(
            (e - expected).abs() <= 3.0 * se_e,
            "k/n={s_train}: test {e} vs {expected}"
        );
        assert!(
            (e - t).abs() <= 3.0 * se_e,
            "k/n={s_train}: test {e} vs true {t}"
        );
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} strata were populated");
}

#[test]
fn strata_match_theory_without_undersampling() {
    check_against_theory(1.0);
}

#[test]
fn strata_match_theory_with_undersampling() {
    check_against_theory(3.0);
}
