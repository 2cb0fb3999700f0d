//! Partitioning of the score x uncertainty plane into a `K x L` grid.
//!
//! Uncertainty levels are indexed by `i` (rows), score bins by `j`
//! (columns); both are zero-based here. Intervals are half-open
//! `[edge_t, edge_{t+1})`, so a value equal to an interior edge falls in the
//! higher bin, and values outside the fitted range clamp to the outermost
//! bins.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::{Error, Result};

pub const PARTITIONER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Nested quantiles: `K` uncertainty quantiles, then `L` score quantiles
    /// local to each level.
    EquiWeight,
    /// Equal-width intervals over the observed ranges, score edges shared by
    /// all levels.
    EquiSpan,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EquiWeight => "equi-weight",
            Scheme::EquiSpan => "equi-span",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equi-weight" => Ok(Scheme::EquiWeight),
            "equi-span" => Ok(Scheme::EquiSpan),
            _ => Err(Error::InvalidParameter(format!(
                "unknown binning scheme `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub scheme: Scheme,
    pub k: usize,
    pub l: usize,
}

impl BinningSpec {
    pub fn new(scheme: Scheme, k: usize, l: usize) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(Error::InvalidShape(format!(
                "K={k}, L={l}: both must be >= 1"
            )));
        }
        Ok(BinningSpec { scheme, k, l })
    }

    pub fn fit(&self, d: &Dataset) -> Result<(Partitioner, BinGrid)> {
        match self.scheme {
            Scheme::EquiWeight => fit_equi_weight(d, self.k, self.l),
            Scheme::EquiSpan => fit_equi_span(d, self.k, self.l),
        }
    }
}

/// Fitted edges mapping any `(score, uncertainty)` pair to a unique bin.
///
/// `score_edges` holds one list per uncertainty level for the equi-weight
/// scheme and a single shared list for equi-span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partitioner {
    pub version: u32,
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub uncertainty_edges: Vec<f64>,
    pub score_edges: Vec<Vec<f64>>,
}

impl Partitioner {
    pub fn new(
        scheme: Scheme,
        uncertainty_edges: Vec<f64>,
        score_edges: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let part = Partitioner {
            version: PARTITIONER_VERSION,
            scheme,
            k: uncertainty_edges.len() + 1,
            l: score_edges.first().map_or(1, |e| e.len() + 1),
            uncertainty_edges,
            score_edges,
        };
        part.validate()?;
        Ok(part)
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidShape(m));
        if self.version != PARTITIONER_VERSION {
            return bad(format!("unsupported partitioner version {}", self.version));
        }
        if self.k == 0 || self.l == 0 {
            return bad("K and L must be >= 1".into());
        }
        if self.uncertainty_edges.len() != self.k - 1 {
            return bad(format!(
                "{} uncertainty edges for K={}",
                self.uncertainty_edges.len(),
                self.k
            ));
        }
        let lists = self.score_edges.len();
        let expected_lists = if self.shares_score_edges() { 1 } else { self.k };
        if lists != expected_lists && !(lists == 1 && self.k == 1) {
            return bad(format!(
                "{lists} score edge lists for K={} ({})",
                self.k, self.scheme
            ));
        }
        for edges in self
            .score_edges
            .iter()
            .chain(std::iter::once(&self.uncertainty_edges))
        {
            if edges.iter().any(|e| !e.is_finite()) {
                return bad("non-finite edge".into());
            }
            if edges.windows(2).any(|w| w[0] > w[1]) {
                return bad("edges must be ascending".into());
            }
        }
        if self.score_edges.iter().any(|e| e.len() != self.l - 1) {
            return bad(format!(
                "score edge list length differs from L-1={}",
                self.l - 1
            ));
        }
        Ok(())
    }

    /// Whether every uncertainty level uses the same score edges.
    pub fn shares_score_edges(&self) -> bool {
        self.scheme == Scheme::EquiSpan || self.k == 1
    }

    pub fn score_edges_for(&self, level: usize) -> &[f64] {
        if self.score_edges.len() == 1 {
            &self.score_edges[0]
        } else {
            &self.score_edges[level]
        }
    }

    /// Zero-based `(uncertainty level, score bin)` of a point.
    pub fn assign(&self, score: f64, uncertainty: f64) -> (usize, usize) {
        let i = locate(&self.uncertainty_edges, uncertainty);
        let j = locate(self.score_edges_for(i), score);
        (i, j)
    }

    /// Counts the samples of `d` per bin.
    pub fn aggregate(&self, d: &Dataset) -> BinGrid {
        let mut grid = BinGrid::zeros(self.k, self.l);
        for s in d.samples() {
            let (i, j) = self.assign(s.score, s.uncertainty);
            grid.add(i, j, s.label);
        }
        grid
    }
}

#[inline]
fn locate(edges: &[f64], value: f64) -> usize {
    edges.partition_point(|&e| e <= value)
}

/// Per-bin positive and total counts, row-major over `(level, score bin)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinGrid {
    k: usize,
    l: usize,
    p: Vec<u64>,
    n: Vec<u64>,
}

impl BinGrid {
    pub fn zeros(k: usize, l: usize) -> Self {
        BinGrid {
            k,
            l,
            p: vec![0; k * l],
            n: vec![0; k * l],
        }
    }

    /// Builds a grid from explicit `K x L` count matrices.
    pub fn from_counts(p: Vec<Vec<u64>>, n: Vec<Vec<u64>>) -> Result<Self> {
        let k = p.len();
        let l = p.first().map_or(0, Vec::len);
        if k == 0 || l == 0 {
            return Err(Error::InvalidShape("grid must be at least 1x1".into()));
        }
        if n.len() != k || p.iter().chain(&n).any(|row| row.len() != l) {
            return Err(Error::InvalidShape("p and n must both be K x L".into()));
        }
        let p: Vec<u64> = p.into_iter().flatten().collect();
        let n: Vec<u64> = n.into_iter().flatten().collect();
        if p.iter().zip(&n).any(|(p, n)| p > n) {
            return Err(Error::InvalidShape("p(i,j) > n(i,j)".into()));
        }
        Ok(BinGrid { k, l, p, n })
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, label: u8) {
        let idx = i * self.l + j;
        self.n[idx] += 1;
        self.p[idx] += u64::from(label);
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn p(&self, i: usize, j: usize) -> u64 {
        self.p[i * self.l + j]
    }

    #[inline]
    pub fn n(&self, i: usize, j: usize) -> u64 {
        self.n[i * self.l + j]
    }

    pub fn p_row(&self, i: usize) -> &[u64] {
        &self.p[i * self.l..(i + 1) * self.l]
    }

    pub fn n_row(&self, i: usize) -> &[u64] {
        &self.n[i * self.l..(i + 1) * self.l]
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }

    pub fn positives(&self) -> u64 {
        self.p.iter().sum()
    }

    /// Smallest and largest bin size.
    pub fn size_range(&self) -> (u64, u64) {
        let min = self.n.iter().copied().min().unwrap_or(0);
        let max = self.n.iter().copied().max().unwrap_or(0);
        (min, max)
    }

    /// Suffix sums over the `j` highest score bins of level `i`, for
    /// `j = 0..=L`: returns `(positives, totals)`.
    pub fn suffix_sums(&self, i: usize) -> (Vec<u64>, Vec<u64>) {
        let (p_row, n_row) = (self.p_row(i), self.n_row(i));
        let mut pi = Vec::with_capacity(self.l + 1);
        let mut nu = Vec::with_capacity(self.l + 1);
        pi.push(0);
        nu.push(0);
        for j in (0..self.l).rev() {
            pi.push(pi.last().unwrap() + p_row[j]);
            nu.push(nu.last().unwrap() + n_row[j]);
        }
        (pi, nu)
    }
}

/// Result of a fit: edges, counts and degeneracy warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGrid {
    pub partitioner: Partitioner,
    pub grid: BinGrid,
    /// Uncertainty range was empty; the grid has a single level.
    pub degenerate_uncertainty: bool,
    /// Score range was empty; the grid has a single score bin.
    pub degenerate_score: bool,
}

fn by_value_then_index(values: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))
}

/// Sizes of `parts` rank-contiguous chunks of `n` items; lower chunks take
/// the remainder.
fn chunk_sizes(n: usize, parts: usize) -> impl Iterator<Item = usize> {
    let (base, rem) = (n / parts, n % parts);
    (0..parts).map(move |t| base + usize::from(t < rem))
}

/// Splits `sorted` (indices ordered by `values`) into rank chunks and returns
/// the chunks and the edges between them (midpoint of neighbouring values).
fn quantile_cut<'a>(
    sorted: &'a [usize],
    values: &[f64],
    parts: usize,
) -> (Vec<&'a [usize]>, Vec<f64>) {
    let mut chunks = Vec::with_capacity(parts);
    let mut edges = Vec::with_capacity(parts.saturating_sub(1));
    let mut start = 0;
    for size in chunk_sizes(sorted.len(), parts) {
        if start > 0 {
            let below = values[sorted[start - 1]];
            let above = values[sorted[start]];
            edges.push(below + (above - below) / 2.0);
        }
        chunks.push(&sorted[start..start + size]);
        start += size;
    }
    (chunks, edges)
}

/// Nested quantile binning: `K` uncertainty quantiles, each split into `L`
/// score quantiles of its own.
///
/// Cuts are made by rank after a stable sort on `(value, sample index)`, so
/// bins stay equally populated under heavy ties. When tied values straddle a
/// cut the returned counts follow the rank assignment, while re-assigning by
/// value sends all tied samples to the higher bin.
pub fn fit_equi_weight(d: &Dataset, k: usize, l: usize) -> Result<(Partitioner, BinGrid)> {
    let fitted = fit_equi_weight_full(d, k, l)?;
    Ok((fitted.partitioner, fitted.grid))
}

pub fn fit_equi_weight_full(d: &Dataset, k: usize, l: usize) -> Result<FittedGrid> {
    BinningSpec::new(Scheme::EquiWeight, k, l)?;
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_total = d.len();
    if k.checked_mul(l).is_none_or(|kl| kl > n_total) {
        return Err(Error::InvalidShape(format!(
            "K*L = {k}*{l} exceeds the {n_total} available samples"
        )));
    }

    let samples = d.samples();
    let unc: Vec<f64> = samples.iter().map(|s| s.uncertainty).collect();
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();

    let mut order: Vec<usize> = (0..n_total).collect();
    order.sort_by(by_value_then_index(&unc));
    let (levels, uncertainty_edges) = quantile_cut(&order, &unc, k);

    let mut grid = BinGrid::zeros(k, l);
    let mut score_edges = Vec::with_capacity(k);
    for (i, level) in levels.into_iter().enumerate() {
        let mut level = level.to_vec();
        level.sort_by(by_value_then_index(&scores));
        let (bins, edges) = quantile_cut(&level, &scores, l);
        for (j, bin) in bins.into_iter().enumerate() {
            for &idx in bin {
                grid.add(i, j, samples[idx].label);
            }
        }
        score_edges.push(edges);
    }

    let partitioner = Partitioner::new(Scheme::EquiWeight, uncertainty_edges, score_edges)?;
    Ok(FittedGrid {
        partitioner,
        grid,
        degenerate_uncertainty: false,
        degenerate_score: false,
    })
}

fn span_edges(values: impl Iterator<Item = f64>, parts: usize) -> (Vec<f64>, bool) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi <= lo {
        return (Vec::new(), true);
    }
    let width = (hi - lo) / parts as f64;
    ((1..parts).map(|t| lo + t as f64 * width).collect(), false)
}

/// Equal-width binning over the observed uncertainty and score ranges. Bins
/// may be empty. A constant axis collapses to a single interval and is
/// flagged on the returned [`FittedGrid`].
pub fn fit_equi_span(d: &Dataset, k: usize, l: usize) -> Result<(Partitioner, BinGrid)> {
    let fitted = fit_equi_span_full(d, k, l)?;
    Ok((fitted.partitioner, fitted.grid))
}

pub fn fit_equi_span_full(d: &Dataset, k: usize, l: usize) -> Result<FittedGrid> {
    BinningSpec::new(Scheme::EquiSpan, k, l)?;
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples: &[Sample] = d.samples();
    let (uncertainty_edges, degenerate_uncertainty) =
        span_edges(samples.iter().map(|s| s.uncertainty), k);
    let (score_edges, degenerate_score) = span_edges(samples.iter().map(|s| s.score), l);

    let partitioner = Partitioner::new(Scheme::EquiSpan, uncertainty_edges, vec![score_edges])?;
    let grid = partitioner.aggregate(d);
    Ok(FittedGrid {
        partitioner,
        grid,
        degenerate_uncertainty,
        degenerate_score,
    })
}
