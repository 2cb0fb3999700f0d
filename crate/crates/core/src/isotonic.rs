//! Weighted L2 isotonic regression by pool-adjacent-violators.

use crate::{Error, Result};

/// Values with strictly positive weights, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSequence {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSequence {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty sequence".into()));
        }
        if values.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite value".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        Ok(WeightedSequence { values, weights })
    }

    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct Block {
    weighted_sum: f64,
    weight: f64,
    len: usize,
}

impl Block {
    #[inline]
    fn mean(&self) -> f64 {
        self.weighted_sum / self.weight
    }
}

/// Non-decreasing sequence closest to `seq` in weighted squared distance.
///
/// Single left-to-right pass with a stack of pooled blocks; each fitted value
/// is the weighted mean of its block.
pub fn pava(seq: &WeightedSequence) -> Vec<f64> {
    let mut blocks: Vec<Block> = Vec::with_capacity(seq.len());
    for (&y, &w) in seq.values.iter().zip(&seq.weights) {
        let mut cur = Block {
            weighted_sum: w * y,
            weight: w,
            len: 1,
        };
        while let Some(prev) = blocks.last() {
            if prev.mean() <= cur.mean() {
                break;
            }
            let prev = blocks.pop().unwrap();
            cur = Block {
                weighted_sum: prev.weighted_sum + cur.weighted_sum,
                weight: prev.weight + cur.weight,
                len: prev.len + cur.len,
            };
        }
        blocks.push(cur);
    }

    let mut out = Vec::with_capacity(seq.len());
    for b in &blocks {
        let m = b.mean();
        out.extend(std::iter::repeat_n(m, b.len));
    }
    out
}

/// Calibrated positivity rates for one uncertainty level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCalibration {
    pub rates: Vec<f64>,
    /// Every bin of the level was empty; `rates` is all zeros.
    pub all_empty: bool,
}

/// Isotonic fit of per-bin positivity `p/n` weighted by `n` along one level.
///
/// Empty bins are left out of the fit and take the fitted value of the
/// nearest populated bin below them, or 0 when there is none.
pub fn calibrate_level(positives: &[u64], totals: &[u64]) -> Result<LevelCalibration> {
    if positives.len() != totals.len() {
        return Err(Error::InvalidShape("p and n rows differ in length".into()));
    }
    if positives.iter().zip(totals).any(|(p, n)| p > n) {
        return Err(Error::InvalidShape("p(i,j) > n(i,j)".into()));
    }

    let populated: Vec<usize> = (0..totals.len()).filter(|&j| totals[j] > 0).collect();
    if populated.is_empty() {
        return Ok(LevelCalibration {
            rates: vec![0.0; totals.len()],
            all_empty: true,
        });
    }

    let values = populated
        .iter()
        .map(|&j| positives[j] as f64 / totals[j] as f64)
        .collect();
    let weights = populated.iter().map(|&j| totals[j] as f64).collect();
    let fitted = pava(&WeightedSequence::new(values, weights)?);

    let mut rates = Vec::with_capacity(totals.len());
    let mut next = populated.iter().zip(&fitted).peekable();
    let mut carry = 0.0;
    for j in 0..totals.len() {
        if let Some((_, &v)) = next.next_if(|(&pj, _)| pj == j) {
            carry = v;
        }
        rates.push(carry);
    }
    Ok(LevelCalibration {
        rates,
        all_empty: false,
    })
}
