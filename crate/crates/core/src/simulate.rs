//! Synthetic data with a known score estimation bias.
//!
//! Each discrete region draws a true positivity from a global Beta prior.
//! Test labels are Bernoulli at that rate; train labels are drawn with
//! negatives undersampled by `tau`. The model score is the Beta posterior
//! mean combining a model prior with the observed train counts, and the
//! uncertainty is the differential entropy of that posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::theory::{beta_entropy, BetaParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_regions: usize,
    /// Train samples per region; the upper end of the range when
    /// `samples_per_region_train_min` is set.
    pub samples_per_region_train: u64,
    /// Lower end of a uniform per-region train size. `None` keeps the size
    /// constant.
    #[serde(default)]
    pub samples_per_region_train_min: Option<u64>,
    pub samples_per_region_test: u64,
    pub beta1_t: f64,
    pub beta0_t: f64,
    pub beta1_p: f64,
    pub beta0_p: f64,
    pub tau: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.n_regions == 0 {
            return fail("n_regions must be >= 1");
        }
        if self.samples_per_region_test == 0 {
            return fail("samples_per_region_test must be >= 1");
        }
        if self.train_range().0 > self.train_range().1 {
            return fail("samples_per_region_train_min exceeds samples_per_region_train");
        }
        if !(positive(self.beta1_t) && positive(self.beta0_t)) {
            return fail("global Beta prior parameters must be positive");
        }
        // positive model priors keep the posterior (and its entropy) defined for every count
        if !(positive(self.beta1_p) && positive(self.beta0_p)) {
            return fail("model prior pseudo-counts must be positive");
        }
        if !positive(self.tau) {
            return fail("tau must be positive");
        }
        Ok(())
    }

    pub fn train_range(&self) -> (u64, u64) {
        let hi = self.samples_per_region_train;
        (self.samples_per_region_train_min.unwrap_or(hi), hi)
    }

    pub fn omega(&self) -> f64 {
        self.beta1_p / (self.beta1_p + self.beta0_p)
    }

    pub fn xi(&self) -> f64 {
        self.beta1_t / (self.beta1_t + self.beta0_t)
    }

    pub fn nu(&self) -> f64 {
        (self.beta1_t + self.beta0_t) / (self.beta1_p + self.beta0_p)
    }

    pub fn model_prior_mass(&self) -> f64 {
        self.beta1_p + self.beta0_p
    }
}

/// Per-region ground truth. `gamma` is `+inf` for regions without train
/// samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub region: usize,
    pub s_true: f64,
    pub n_train: u64,
    pub k_train: u64,
    pub s_train: f64,
    pub n_test: u64,
    pub k_test: u64,
    pub s_test: f64,
    pub gamma: f64,
    pub score: f64,
    pub uncertainty: f64,
}

/// Probability that a train sample is positive when negatives are kept at
/// rate `1 / tau`.
pub fn undersampled_rate(s_true: f64, tau: f64) -> f64 {
    tau * s_true / ((tau - 1.0) * s_true + 1.0)
}

/// Generator for region `region`: one ChaCha stream per region under a
/// shared seed, so results do not depend on scheduling.
pub fn region_rng(seed: u64, region: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(region as u64);
    rng
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    Binomial::new(n, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

fn simulate_region(cfg: &GeneratorConfig, prior: &Beta<f64>, region: usize) -> RegionTruth {
    let mut rng = region_rng(cfg.seed, region);
    let s_true = prior.sample(&mut rng);
    let (lo, hi) = cfg.train_range();
    let n_train = if lo == hi {
        hi
    } else {
        rng.random_range(lo..=hi)
    };
    let k_train = binomial(n_train, undersampled_rate(s_true, cfg.tau), &mut rng);
    let n_test = cfg.samples_per_region_test;
    let k_test = binomial(n_test, s_true, &mut rng);

    let alpha1 = cfg.beta1_p + k_train as f64;
    let alpha0 = cfg.beta0_p + (n_train - k_train) as f64;
    let (s_train, gamma) = if n_train == 0 {
        (f64::NAN, f64::INFINITY)
    } else {
        (
            k_train as f64 / n_train as f64,
            cfg.model_prior_mass() / n_train as f64,
        )
    };
    RegionTruth {
        region,
        s_true,
        n_train,
        k_train,
        s_train,
        n_test,
        k_test,
        s_test: k_test as f64 / n_test as f64,
        gamma,
        score: alpha1 / (alpha1 + alpha0),
        uncertainty: beta_entropy(BetaParams { alpha1, alpha0 }),
    }
}

/// Draws every region's truth row, in region order.
pub fn simulate_regions(cfg: &GeneratorConfig) -> Result<Vec<RegionTruth>> {
    cfg.validate()?;
    let prior = Beta::new(cfg.beta1_t, cfg.beta0_t)
        .map_err(|e| Error::InvalidParameter(format!("global prior: {e}")))?;
    Ok((0..cfg.n_regions)
        .into_par_iter()
        .map(|r| simulate_region(cfg, &prior, r))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: Vec<RegionTruth>,
}

fn expand(truth: &[RegionTruth], counts: impl Fn(&RegionTruth) -> (u64, u64)) -> Dataset {
    let mut samples = Vec::new();
    for r in truth {
        let (n, k) = counts(r);
        let sample = |label| Sample {
            score: r.score,
            uncertainty: r.uncertainty,
            label,
        };
        samples.extend(std::iter::repeat_n(sample(1), k as usize));
        samples.extend(std::iter::repeat_n(sample(0), (n - k) as usize));
    }
    Dataset::from_valid(samples)
}

/// Simulates all regions and expands them into labeled train and test
/// datasets. Every sample of a region carries the region's score and
/// uncertainty; train labels come from the undersampled draw and test labels
/// from the true rate.
pub fn generate(cfg: &GeneratorConfig) -> Result<Generated> {
    let truth = simulate_regions(cfg)?;
    let train = expand(&truth, |r| (r.n_train, r.k_train));
    let test = expand(&truth, |r| (r.n_test, r.k_test));
    Ok(Generated { train, test, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratify {
    TrainPositivity,
    Score,
}

/// Aggregate over the regions of one `(value bin, gamma bin)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStat {
    pub value_bin: usize,
    pub gamma_bin: usize,
    pub count: usize,
    /// Mean of the stratifying value (score or train positivity).
    pub mean_value: Option<f64>,
    pub mean_test: Option<f64>,
    pub se_test: Option<f64>,
    pub mean_true: Option<f64>,
    pub se_true: Option<f64>,
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e <= v)
}

/// Edges cutting `values` into `parts` groups of (nearly) equal count.
pub fn quantile_edges(values: &[f64], parts: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return Vec::new();
    }
    (1..parts)
        .map(|t| sorted[(t * sorted.len() / parts).min(sorted.len() - 1)])
        .collect()
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// Mean test and true positivity per stratum of `(value, gamma)`.
///
/// Bins are half-open with clamping at the ends, like grid binning. Regions
/// without train samples have no defined gamma and are skipped. Every
/// stratum is emitted, including empty ones (count 0, no mean).
pub fn conditional_positivity(
    truth: &[RegionTruth],
    by: Stratify,
    value_edges: &[f64],
    gamma_edges: &[f64],
) -> Vec<StratumStat> {
    let (nv, ng) = (value_edges.len() + 1, gamma_edges.len() + 1);
    let mut cells: Vec<Vec<&RegionTruth>> = vec![Vec::new(); nv * ng];
    for r in truth.iter().filter(|r| r.gamma.is_finite()) {
        let v = match by {
            Stratify::TrainPositivity => r.s_train,
            Stratify::Score => r.score,
        };
        cells[bin_of(value_edges, v) * ng + bin_of(gamma_edges, r.gamma)].push(r);
    }

    cells
        .into_iter()
        .enumerate()
        .map(|(idx, regions)| {
            let value = |r: &&RegionTruth| match by {
                Stratify::TrainPositivity => r.s_train,
                Stratify::Score => r.score,
            };
            let values: Vec<f64> = regions.iter().map(value).collect();
            let tests: Vec<f64> = regions.iter().map(|r| r.s_test).collect();
            let trues: Vec<f64> = regions.iter().map(|r| r.s_true).collect();
            let (mean_test, se_test) = mean_se(&tests);
            let (mean_true, se_true) = mean_se(&trues);
            StratumStat {
                value_bin: idx / ng,
                gamma_bin: idx % ng,
                count: regions.len(),
                mean_value: mean_se(&values).0,
                mean_test,
                se_test,
                mean_true,
                se_true,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> GeneratorConfig {
        GeneratorConfig {
            n_regions: 200,
            samples_per_region_train: 40,
            samples_per_region_train_min: Some(5),
            samples_per_region_test: 10,
            beta1_t: 1.0,
            beta0_t: 3.0,
            beta1_p: 0.5,
            beta0_p: 0.5,
            tau: 3.0,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&config()).unwrap();
        let b = generate(&config()).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = generate(&GeneratorConfig {
            seed: 12,
            ..config()
        })
        .unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn bookkeeping() {
        let cfg = config();
        let g = generate(&cfg).unwrap();
        assert_eq!(
            g.test.len() as u64,
            cfg.n_regions as u64 * cfg.samples_per_region_test
        );
        let train_total: u64 = g.truth.iter().map(|r| r.n_train).sum();
        assert_eq!(g.train.n_total(), train_total);
        assert_eq!(
            g.train.n_positive(),
            g.truth.iter().map(|r| r.k_train).sum::<u64>()
        );
        for r in &g.truth {
            assert_eq!(r.gamma, 1.0 / r.n_train as f64);
            let expected = (0.5 + r.k_train as f64) / (1.0 + r.n_train as f64);
            assert!((r.score - expected).abs() < 1e-15);
            assert!((5..=40).contains(&r.n_train));
        }
    }

    #[test]
    fn zero_evidence_regions_fall_back_to_prior() {
        let cfg = GeneratorConfig {
            samples_per_region_train: 0,
            samples_per_region_train_min: None,
            beta1_p: 1.0,
            beta0_p: 3.0,
            ..config()
        };
        let g = generate(&cfg).unwrap();
        assert!(g.train.is_empty());
        for r in &g.truth {
            assert_eq!(r.score, 0.25);
            assert!(r.gamma.is_infinite());
        }
        let strata = conditional_positivity(&g.truth, Stratify::Score, &[], &[]);
        assert_eq!(strata[0].count, 0);
        assert_eq!(strata[0].mean_test, None);
    }

    #[test]
    fn undersampled_rate_formula() {
        assert_eq!(undersampled_rate(0.2, 1.0), 0.2);
        assert!((undersampled_rate(0.25, 3.0) - 0.5).abs() < 1e-15);
        assert_eq!(undersampled_rate(0.0, 5.0), 0.0);
        assert_eq!(undersampled_rate(1.0, 5.0), 1.0);
    }

    #[test]
    fn validation() {
        assert!(GeneratorConfig {
            tau: 0.0,
            ..config()
        }
        .validate()
        .is_err());
        assert!(GeneratorConfig {
            beta0_t: 0.0,
            ..config()
        }
        .validate()
        .is_err());
        assert!(GeneratorConfig {
            samples_per_region_train_min: Some(50),
            ..config()
        }
        .validate()
        .is_err());
        assert!(GeneratorConfig {
            n_regions: 0,
            ..config()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn single_region_stratum() {
        let cfg = GeneratorConfig {
            n_regions: 1,
            ..config()
        };
        let g = generate(&cfg).unwrap();
        let strata = conditional_positivity(&g.truth, Stratify::TrainPositivity, &[], &[]);
        assert_eq!(strata.len(), 1);
        assert_eq!(strata[0].count, 1);
        assert_eq!(strata[0].mean_test, Some(g.truth[0].s_test));
    }

    #[test]
    fn strata_cover_all_regions() {
        let g = generate(&config()).unwrap();
        let scores: Vec<f64> = g.truth.iter().map(|r| r.score).collect();
        let gammas: Vec<f64> = g.truth.iter().map(|r| r.gamma).collect();
        let strata = conditional_positivity(
            &g.truth,
            Stratify::Score,
            &quantile_edges(&scores, 4),
            &quantile_edges(&gammas, 3),
        );
        assert_eq!(strata.len(), 12);
        assert_eq!(strata.iter().map(|s| s.count).sum::<usize>(), 200);
    }
}
