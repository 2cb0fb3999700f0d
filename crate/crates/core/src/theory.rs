//! How the score of an evidential (Beta-posterior) classifier relates to the
//! positivity rate observed at test time.
//!
//! Symbols, all ratios of pseudo-counts:
//!
//! * `omega`: positive fraction of the model prior, `b1P / (b1P + b0P)`.
//! * `xi`: positive fraction of the global Beta prior the true rates are drawn from.
//! * `nu`: global prior mass over model prior mass.
//! * `gamma`: model prior mass over the evidence `n = b1(x) + b0(x)`.
//! * `lambda = nu * gamma`: global prior mass over the evidence.
//! * `tau`: factor by which negatives are undersampled in training.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub omega: f64,
    pub xi: f64,
    pub nu: f64,
    pub tau: f64,
    pub gamma: f64,
    pub n_evidence: f64,
}

impl TheoryParams {
    pub fn new(
        omega: f64,
        xi: f64,
        nu: f64,
        tau: f64,
        gamma: f64,
        n_evidence: f64,
    ) -> Result<Self> {
        let p = TheoryParams {
            omega,
            xi,
            nu,
            tau,
            gamma,
            n_evidence,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let checks = [
            ("omega", open_unit(self.omega)),
            ("xi", open_unit(self.xi)),
            ("nu", positive(self.nu)),
            ("tau", positive(self.tau)),
            ("gamma", positive(self.gamma)),
            ("n_evidence", positive(self.n_evidence)),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::InvalidParameter(format!(
                "{name} out of range in {self:?}"
            ))),
            None => Ok(()),
        }
    }

    /// Global prior mass relative to the evidence.
    pub fn lambda(&self) -> f64 {
        self.nu * self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha1: f64,
    pub alpha0: f64,
}

impl BetaParams {
    pub fn new(alpha1: f64, alpha0: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha0 > 0.0 && alpha1.is_finite() && alpha0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Beta parameters must be positive, got ({alpha1}, {alpha0})"
            )));
        }
        Ok(BetaParams { alpha1, alpha0 })
    }
}

/// Posterior mean for the positive class: prior plus evidence pseudo-counts.
pub fn model_score(beta1_prior: f64, beta0_prior: f64, beta1_x: f64, beta0_x: f64) -> Result<f64> {
    let parts = [beta1_prior, beta0_prior, beta1_x, beta0_x];
    if parts.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "pseudo-counts must be non-negative".into(),
        ));
    }
    let total: f64 = parts.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("zero total pseudo-count".into()));
    }
    Ok((beta1_prior + beta1_x) / total)
}

/// Range of model scores reachable for a given prior fraction and prior
/// strength: `[omega*gamma / (1+gamma), (1 + omega*gamma) / (1+gamma)]`.
pub fn valid_score_range(omega: f64, gamma: f64) -> (f64, f64) {
    let denom = 1.0 + gamma;
    (omega * gamma / denom, (1.0 + omega * gamma) / denom)
}

/// Train positivity implied by a model score: `s - (omega - s) * gamma`.
/// Errors when the score is unreachable, i.e. the result leaves `[0, 1]`.
pub fn train_from_model(score: f64, omega: f64, gamma: f64) -> Result<f64> {
    let train = score - (omega - score) * gamma;
    const SLACK: f64 = 1e-12;
    if !(-SLACK..=1.0 + SLACK).contains(&train) {
        let (lo, hi) = valid_score_range(omega, gamma);
        return Err(Error::OutsideValidRange { score, lo, hi });
    }
    Ok(train.clamp(0.0, 1.0))
}

/// Score minus expected test positivity without undersampling:
/// `(s (nu - 1) + omega - xi nu) gamma / (1 + nu gamma)`.
pub fn bias_closed_form_tau1(score: f64, p: &TheoryParams) -> f64 {
    (score * (p.nu - 1.0) + p.omega - p.xi * p.nu) * p.gamma / (1.0 + p.nu * p.gamma)
}

/// Expected true (and test) positivity given train positivity when
/// `tau = 1`: the mean `(s_train + xi lambda) / (1 + lambda)`.
pub fn expected_positivity_tau1(s_train: f64, xi: f64, lambda: f64) -> f64 {
    (s_train + xi * lambda) / (1.0 + lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    /// Trapezoid intervals used by the accepted estimate.
    pub intervals: usize,
}

const INITIAL_INTERVALS: usize = 4096;
const MAX_INTERVALS: usize = 1 << 22;
const TOLERANCE: f64 = 1e-13;
/// Log-density drop at which the integration range is cut.
const TAIL_DROP: f64 = 60.0;

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean of the density proportional to
/// `r^(a-1) (1-r)^(b-1) / (1 + (tau-1) r)^n` on `(0, 1)`.
///
/// Integrates in logit space, `r = 1 / (1 + e^-x)`, where the Jacobian
/// `r (1-r)` removes the endpoint singularities and the integrand decays
/// exponentially, so the composite trapezoid rule converges geometrically.
/// Both integrals are evaluated in the log domain and shifted by their common
/// maximum before exponentiation. The node count doubles until successive
/// estimates agree.
pub fn tilted_beta_mean(a: f64, b: f64, n: f64, tau: f64) -> Result<QuadratureResult> {
    if !(a > 0.0 && b > 0.0 && n >= 0.0 && tau > 0.0)
        || ![a, b, n, tau].iter().all(|v| v.is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "tilted Beta needs a, b, tau > 0 and n >= 0, got ({a}, {b}, {n}, {tau})"
        )));
    }
    let tilt = tau - 1.0;
    // log of r^a (1-r)^b (1 + tilt r)^-n, Jacobian included
    let log_density = |x: f64| {
        let log_r = -softplus(-x);
        let log_1mr = -softplus(x);
        let r = log_r.exp();
        a * log_r + b * log_1mr - n * (tilt * r).ln_1p()
    };

    // Locate the mode by golden-section search on a bracket that surely
    // contains it; the log density is unimodal in x for these parameters.
    let (mut lo, mut hi) = (-750.0f64, 750.0f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (log_density(x1), log_density(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = log_density(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = log_density(x1);
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let mode = 0.5 * (lo + hi);
    let peak = log_density(mode);

    let reach = |dir: f64| {
        let mut step = 0.5;
        let mut x = mode;
        while log_density(x) > peak - TAIL_DROP && step < 1e7 {
            x = mode + dir * step;
            step *= 2.0;
        }
        x
    };
    let (left, right) = (reach(-1.0), reach(1.0));

    let trapezoid = |intervals: usize| {
        let h = (right - left) / intervals as f64;
        let (mut den, mut num) = (0.0, 0.0);
        for t in 0..=intervals {
            let x = left + h * t as f64;
            let w = if t == 0 || t == intervals { 0.5 } else { 1.0 };
            let f = (log_density(x) - peak).exp();
            let r = 1.0 / (1.0 + (-x).exp());
            den += w * f;
            num += w * f * r;
        }
        num / den
    };

    let mut intervals = INITIAL_INTERVALS;
    let mut prev = trapezoid(intervals / 2);
    loop {
        let value = trapezoid(intervals);
        let error_estimate = (value - prev).abs();
        if error_estimate <= TOLERANCE {
            return Ok(QuadratureResult {
                value,
                error_estimate,
                intervals,
            });
        }
        if intervals >= MAX_INTERVALS {
            return Err(Error::Quadrature { error_estimate });
        }
        prev = value;
        intervals *= 2;
    }
}

/// Expected true/test positivity conditioned on the train positivity under
/// undersampling factor `tau`: the mean of
/// `Q(r) ∝ Beta(n (xi lambda + s), n ((1-xi) lambda + 1 - s)) / (1 + (tau-1) r)^n`.
pub fn expected_positivity_general_tau(s_train: f64, p: &TheoryParams) -> Result<f64> {
    p.validate()?;
    if !(0.0..=1.0).contains(&s_train) {
        return Err(Error::InvalidParameter(format!(
            "train positivity {s_train} outside [0, 1]"
        )));
    }
    let n = p.n_evidence;
    let lambda = p.lambda();
    let a = n * (p.xi * lambda + s_train);
    let b = n * ((1.0 - p.xi) * lambda + 1.0 - s_train);
    tilted_beta_mean(a, b, n, p.tau).map(|q| q.value)
}

/// Differential entropy of `Beta(alpha1, alpha0)`:
/// `ln B(a0, a1) - (a1 - 1) psi(a1) - (a0 - 1) psi(a0) + (a0 + a1 - 2) psi(a0 + a1)`.
pub fn beta_entropy(b: BetaParams) -> f64 {
    let (a1, a0) = (b.alpha1, b.alpha0);
    let sum = a0 + a1;
    ln_beta(a0, a1) - (a1 - 1.0) * digamma(a1) - (a0 - 1.0) * digamma(a0)
        + (sum - 2.0) * digamma(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s: f64,
    pub gamma: f64,
    pub tau: f64,
    pub expected_positivity: f64,
}

/// Expected test positivity as a function of model score at fixed
/// `(omega, xi, nu, gamma, tau, n)`.
pub fn bias_curve(p: &TheoryParams, scores: &[f64]) -> Result<Vec<CurvePoint>> {
    p.validate()?;
    scores
        .iter()
        .map(|&s| {
            let s_train = train_from_model(s, p.omega, p.gamma)?;
            Ok(CurvePoint {
                s,
                gamma: p.gamma,
                tau: p.tau,
                expected_positivity: expected_positivity_general_tau(s_train, p)?,
            })
        })
        .collect()
}

/// `points` scores evenly spaced strictly inside the valid score range.
pub fn score_grid(omega: f64, gamma: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = valid_score_range(omega, gamma);
    (1..=points)
        .map(|t| lo + (hi - lo) * t as f64 / (points + 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(omega: f64, xi: f64, nu: f64, tau: f64, gamma: f64) -> TheoryParams {
        TheoryParams::new(omega, xi, nu, tau, gamma, 50.0).unwrap()
    }

    #[test]
    fn model_score_examples() {
        assert_eq!(model_score(1.0, 1.0, 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(model_score(1.0, 1.0, 8.0, 0.0).unwrap(), 0.9);
        assert_eq!(model_score(0.0, 0.0, 3.0, 1.0).unwrap(), 0.75);
        assert!(model_score(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(model_score(-1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn train_from_model_examples() {
        assert_eq!(train_from_model(0.3, 0.5, 0.0).unwrap(), 0.3);
        assert!((train_from_model(0.5, 0.5, 2.0).unwrap() - 0.5).abs() < 1e-15);
        // 0.8 - (0.5 - 0.8) * 1 = 1.1
        assert!(matches!(
            train_from_model(0.8, 0.5, 1.0),
            Err(Error::OutsideValidRange { .. })
        ));
    }

    #[test]
    fn valid_range_examples() {
        assert_eq!(valid_score_range(0.3, 0.0), (0.0, 1.0));
        assert_eq!(valid_score_range(0.5, 1.0), (0.25, 0.75));
        let (lo, hi) = valid_score_range(0.5, 1e9);
        assert!((lo - 0.5).abs() < 1e-8 && (hi - 0.5).abs() < 1e-8);
    }

    #[test]
    fn valid_range_maps_into_unit_interval() {
        for &(omega, gamma) in &[(0.2, 0.5), (0.5, 3.0), (0.9, 0.1)] {
            let (lo, hi) = valid_score_range(omega, gamma);
            assert!((train_from_model(lo, omega, gamma).unwrap()).abs() < 1e-12);
            assert!((train_from_model(hi, omega, gamma).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_bias_examples() {
        let p = TheoryParams {
            gamma: 0.0,
            ..params(0.5, 0.25, 1.0, 1.0, 1.0)
        };
        assert_eq!(bias_closed_form_tau1(0.7, &p), 0.0);

        let p = params(0.4, 0.4, 1.0, 1.0, 2.0);
        for s in [0.2, 0.5, 0.6] {
            assert!(bias_closed_form_tau1(s, &p).abs() < 1e-15);
        }

        // (0.8*0 + 0.5 - 0.25) * 1 / 2
        let p = params(0.5, 0.25, 1.0, 1.0, 1.0);
        assert!((bias_closed_form_tau1(0.8, &p) - 0.125).abs() < 1e-15);
        assert!((0.8 - bias_closed_form_tau1(0.8, &p) - 0.675).abs() < 1e-15);
    }

    #[test]
    fn closed_form_bias_agrees_with_two_step_route() {
        // s -> train positivity -> tau=1 posterior mean, versus s - bias
        let p = params(0.5, 0.25, 2.0, 1.0, 0.4);
        for s in score_grid(p.omega, p.gamma, 25) {
            let s_train = train_from_model(s, p.omega, p.gamma).unwrap();
            let two_step = expected_positivity_tau1(s_train, p.xi, p.lambda());
            assert!((two_step - (s - bias_closed_form_tau1(s, &p))).abs() < 1e-14);
        }
    }

    #[test]
    fn quadrature_reduces_to_beta_mean() {
        let p = params(0.5, 0.3, 1.5, 1.0, 0.7);
        for s in [0.0, 0.1, 0.5, 0.93, 1.0] {
            let q = expected_positivity_general_tau(s, &p).unwrap();
            let exact = expected_positivity_tau1(s, p.xi, p.lambda());
            assert!((q - exact).abs() < 1e-10, "{s}: {q} vs {exact}");
        }
    }

    #[test]
    fn quadrature_small_prior_returns_train_rate() {
        let p = params(0.5, 0.3, 1.0, 1.0, 1e-9);
        let q = expected_positivity_general_tau(0.42, &p).unwrap();
        assert!((q - 0.42).abs() < 1e-8);
    }

    #[test]
    fn undersampling_pulls_positivity_down() {
        let base = params(0.5, 0.25, 2.0, 1.0, 0.3);
        let under = TheoryParams { tau: 3.0, ..base };
        for s in [0.1, 0.5, 0.9] {
            let a = expected_positivity_general_tau(s, &base).unwrap();
            let b = expected_positivity_general_tau(s, &under).unwrap();
            assert!(b < a, "{s}: {b} !< {a}");
        }
    }

    #[test]
    fn quadrature_handles_sharp_and_skewed_integrands() {
        // very concentrated posterior: mean is close to a / (a + b)
        let q = tilted_beta_mean(30_000.0, 70_000.0, 0.0, 1.0).unwrap();
        assert!((q.value - 0.3).abs() < 1e-12);
        // parameters well below one: mass piles up at the endpoints
        let q = tilted_beta_mean(0.05, 0.2, 0.0, 1.0).unwrap();
        assert!((q.value - 0.2).abs() < 1e-10, "{q:?}");
        assert!(tilted_beta_mean(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(beta_entropy(BetaParams::new(1.0, 1.0).unwrap()).abs() < 1e-14);
        let wide = beta_entropy(BetaParams::new(2.0, 2.0).unwrap());
        let narrow = beta_entropy(BetaParams::new(20.0, 20.0).unwrap());
        assert!(narrow < wide);
        let a = beta_entropy(BetaParams::new(3.0, 0.5).unwrap());
        let b = beta_entropy(BetaParams::new(0.5, 3.0).unwrap());
        assert!((a - b).abs() < 1e-14);
        assert!(BetaParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn entropy_matches_numerical_integral() {
        // -integral f ln f by midpoint rule on a smooth case
        for &(a1, a0) in &[(2.0, 2.0), (3.5, 1.5), (8.0, 20.0)] {
            let lnb = ln_beta(a1, a0);
            let m = 200_000;
            let mut h = 0.0;
            for t in 0..m {
                let r = (t as f64 + 0.5) / m as f64;
                let lnf = (a1 - 1.0) * r.ln() + (a0 - 1.0) * (1.0 - r).ln() - lnb;
                h -= lnf.exp() * lnf / m as f64;
            }
            let closed = beta_entropy(BetaParams::new(a1, a0).unwrap());
            assert!((h - closed).abs() < 1e-6, "({a1},{a0}): {h} vs {closed}");
        }
    }

    #[test]
    fn digamma_reference_values() {
        const EULER: f64 = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + EULER).abs() < 1e-12);
        assert!((digamma(0.5) + EULER + 2.0 * 2f64.ln()).abs() < 1e-12);
        // psi(x + 1) = psi(x) + 1/x
        for x in [1e-3, 0.3, 2.7, 15.0] {
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-11 * (1.0 + 1.0 / x));
        }
    }

    #[test]
    fn curve_is_linear_at_tau_one_and_identity_without_bias() {
        let p = params(0.5, 0.5, 1.0, 1.0, 0.8);
        let grid = score_grid(p.omega, p.gamma, 9);
        let curve = bias_curve(&p, &grid).unwrap();
        for pt in &curve {
            assert!((pt.expected_positivity - pt.s).abs() < 1e-10);
        }

        let p = params(0.5, 0.25, 2.0, 1.0, 0.8);
        let curve = bias_curve(&p, &score_grid(p.omega, p.gamma, 9)).unwrap();
        let slopes: Vec<f64> = curve
            .windows(2)
            .map(|w| (w[1].expected_positivity - w[0].expected_positivity) / (w[1].s - w[0].s))
            .collect();
        for s in &slopes {
            assert!((s - slopes[0]).abs() < 1e-7);
        }
    }

    #[test]
    fn curve_rejects_unreachable_scores() {
        let p = params(0.5, 0.25, 2.0, 1.0, 1.0);
        assert!(bias_curve(&p, &[0.9]).is_err());
    }
}
