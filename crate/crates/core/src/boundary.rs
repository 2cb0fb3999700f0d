//! Per-uncertainty-level score thresholds that maximize recall subject to a
//! precision bound.
//!
//! A boundary is a vector of `K` thresholds `b(i)` in `0..=L`. Level `i`
//! contributes the score bins with zero-based index `j >= b(i)`, i.e. its
//! `L - b(i)` highest bins; `b(i) = L` selects nothing at that level.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::{fit_equi_weight, BinGrid, BinningSpec, Partitioner, Scheme};
use crate::dataset::Dataset;
use crate::isotonic::calibrate_level;
use crate::{meets_precision, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Single score threshold shared by every uncertainty level.
    St,
    /// Greedy, independent threshold per level.
    Gmt,
    /// Per-level isotonic recalibration, then one global cut.
    Mist,
    /// Exact DP over bin budgets for equi-weight grids.
    EwDpmt,
    /// Exact DP over sample budgets for arbitrary grids.
    VwDpmt,
    /// Exhaustive enumeration; test oracle.
    BruteForce,
}

impl Algorithm {
    pub const SOLVERS: [Algorithm; 5] = [
        Algorithm::St,
        Algorithm::Gmt,
        Algorithm::Mist,
        Algorithm::EwDpmt,
        Algorithm::VwDpmt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::St => "st",
            Algorithm::Gmt => "gmt",
            Algorithm::Mist => "mist",
            Algorithm::EwDpmt => "ew-dpmt",
            Algorithm::VwDpmt => "vw-dpmt",
            Algorithm::BruteForce => "brute-force",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Algorithm::BruteForce]
            .into_iter()
            .chain(Algorithm::SOLVERS)
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

/// Counts and rates of the positive region of a boundary on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub tp: u64,
    pub selected_n: u64,
    /// `tp / selected_n`, or 1.0 when the region is empty.
    pub precision: f64,
    pub recall: f64,
    pub empty_region: bool,
}

impl Evaluation {
    pub(crate) fn from_counts(tp: u64, selected_n: u64, positives: u64) -> Self {
        let empty_region = selected_n == 0;
        let precision = if empty_region {
            1.0
        } else {
            tp as f64 / selected_n as f64
        };
        let recall = if positives == 0 {
            0.0
        } else {
            tp as f64 / positives as f64
        };
        Evaluation {
            tp,
            selected_n,
            precision,
            recall,
            empty_region,
        }
    }
}

fn check_thresholds(grid: &BinGrid, thresholds: &[usize]) -> Result<()> {
    if thresholds.len() != grid.k() {
        return Err(Error::InvalidThresholds(format!(
            "{} thresholds for K={}",
            thresholds.len(),
            grid.k()
        )));
    }
    if let Some(b) = thresholds.iter().find(|&&b| b > grid.l()) {
        return Err(Error::InvalidThresholds(format!(
            "threshold {b} > L={}",
            grid.l()
        )));
    }
    Ok(())
}

pub fn evaluate(grid: &BinGrid, thresholds: &[usize]) -> Result<Evaluation> {
    check_thresholds(grid, thresholds)?;
    let (mut tp, mut selected) = (0, 0);
    for (i, &b) in thresholds.iter().enumerate() {
        tp += grid.p_row(i)[b..].iter().sum::<u64>();
        selected += grid.n_row(i)[b..].iter().sum::<u64>();
    }
    Ok(Evaluation::from_counts(tp, selected, grid.positives()))
}

/// A boundary together with its fit on the grid it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySolution {
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub thresholds: Vec<usize>,
    pub tp: u64,
    pub selected_n: u64,
    pub precision_fit: f64,
    pub recall_fit: f64,
    /// The positive region is non-empty and meets `sigma`.
    pub feasible: bool,
    pub empty_region: bool,
}

impl BoundarySolution {
    pub fn new(
        grid: &BinGrid,
        algorithm: Algorithm,
        sigma: f64,
        thresholds: Vec<usize>,
    ) -> Result<Self> {
        let e = evaluate(grid, &thresholds)?;
        Ok(BoundarySolution {
            algorithm,
            sigma,
            thresholds,
            tp: e.tp,
            selected_n: e.selected_n,
            precision_fit: e.precision,
            recall_fit: e.recall,
            feasible: meets_precision(e.tp, e.selected_n, sigma),
            empty_region: e.empty_region,
        })
    }

    /// Number of bins in the positive region.
    pub fn selected_bins(&self, l: usize) -> usize {
        self.thresholds.iter().map(|&b| l - b).sum()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&sigma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sigma {sigma} outside [0, 1]"
        )))
    }
}

/// Index `j` in `0..=L` maximizing `pi[j]` among feasible suffixes; ties go to
/// the smaller `j`. `None` when no non-empty suffix meets `sigma`.
fn best_suffix(pi: &[u64], nu: &[u64], sigma: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 1..pi.len() {
        if meets_precision(pi[j], nu[j], sigma) && best.is_none_or(|b| pi[j] > pi[b]) {
            best = Some(j);
        }
    }
    best
}

/// Single threshold applied to every level (score edges must mean the same
/// thing at every level for this to be a true score-only threshold; see
/// [`fit_boundary`] for the collapsed rebinning used on equi-weight grids).
pub fn solve_st(grid: &BinGrid, sigma: f64) -> Result<BoundarySolution> {
    check_sigma(sigma)?;
    let (k, l) = (grid.k(), grid.l());
    // collapse to one level: column sums from the top
    let mut pi = vec![0u64; l + 1];
    let mut nu = vec![0u64; l + 1];
    for i in 0..k {
        let (p, n) = grid.suffix_sums(i);
        for j in 0..=l {
            pi[j] += p[j];
            nu[j] += n[j];
        }
    }
    let j = best_suffix(&pi, &nu, sigma).unwrap_or(0);
    BoundarySolution::new(grid, Algorithm::St, sigma, vec![l - j; k])
}

/// Greedy multi-threshold: each level independently takes its
/// recall-maximizing feasible suffix.
pub fn solve_gmt(grid: &BinGrid, sigma: f64) -> Result<BoundarySolution> {
    check_sigma(sigma)?;
    let l = grid.l();
    let thresholds = (0..grid.k())
        .map(|i| {
            let (pi, nu) = grid.suffix_sums(i);
            l - best_suffix(&pi, &nu, sigma).unwrap_or(0)
        })
        .collect();
    BoundarySolution::new(grid, Algorithm::Gmt, sigma, thresholds)
}

/// Calibrated positivity `s_iso(i, j)` for every bin, one isotonic fit per
/// level.
pub fn mist_calibration(grid: &BinGrid) -> Result<Vec<Vec<f64>>> {
    (0..grid.k())
        .map(|i| calibrate_level(grid.p_row(i), grid.n_row(i)).map(|c| c.rates))
        .collect()
}

/// Multi-isotonic, single threshold.
///
/// Bins are ranked by calibrated positivity (descending; ties by lower level
/// first, then higher score bin first) and accumulated in rank order until
/// the running precision of the selection would drop below `sigma`. The
/// running precision uses the observed positives of each bin, so the
/// returned region always meets the bound it was accumulated under.
pub fn solve_mist(grid: &BinGrid, sigma: f64) -> Result<BoundarySolution> {
    check_sigma(sigma)?;
    let (k, l) = (grid.k(), grid.l());
    let calibrated = mist_calibration(grid)?;

    let mut order: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..l).map(move |j| (i, j))).collect();
    order.sort_by(|&(ia, ja), &(ib, jb)| {
        calibrated[ib][jb]
            .total_cmp(&calibrated[ia][ja])
            .then(ia.cmp(&ib))
            .then(jb.cmp(&ja))
    });

    let mut taken = vec![0usize; k];
    let (mut tp, mut selected) = (0u64, 0u64);
    for (i, j) in order {
        let (next_tp, next_sel) = (tp + grid.p(i, j), selected + grid.n(i, j));
        if next_sel > 0 && !meets_precision(next_tp, next_sel, sigma) {
            break;
        }
        tp = next_tp;
        selected = next_sel;
        taken[i] += 1;
    }
    let thresholds = taken.iter().map(|&c| l - c).collect();
    BoundarySolution::new(grid, Algorithm::Mist, sigma, thresholds)
}

/// One row of the EW-DPMT table: the best boundary using exactly `m` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PrTableEntry {
    pub m: usize,
    pub tp: u64,
    pub selected_n: u64,
    pub thresholds: Vec<usize>,
}

/// Full DP table of the equi-weight solver; answers any precision bound
/// without recomputation.
#[derive(Debug, Clone)]
pub struct EwDpmtTable {
    k: usize,
    l: usize,
    /// `best[i][m]`: max positives over levels `0..=i` using exactly `m` bins.
    best: Vec<Vec<u64>>,
    /// `choice[i][m]`: bins taken from level `i` in that optimum.
    choice: Vec<Vec<usize>>,
    entries: Vec<PrTableEntry>,
    total_positives: u64,
    /// Bin sizes differ by one; precision uses exact counts.
    pub approximate: bool,
}

impl EwDpmtTable {
    pub fn build(grid: &BinGrid) -> Result<Self> {
        let (min, max) = grid.size_range();
        if max - min > 1 {
            return Err(Error::NotEquiWeight { min, max });
        }
        let (k, l) = (grid.k(), grid.l());
        let suffix: Vec<Vec<u64>> = (0..k).map(|i| grid.suffix_sums(i).0).collect();

        let mut best = Vec::with_capacity(k);
        let mut choice = Vec::with_capacity(k);
        best.push(suffix[0].clone());
        choice.push((0..=l).collect::<Vec<_>>());

        for i in 1..k {
            let prev: &Vec<u64> = &best[i - 1];
            let budget = (i + 1) * l;
            let mut row = Vec::with_capacity(budget + 1);
            let mut pick = Vec::with_capacity(budget + 1);
            for m in 0..=budget {
                // previous levels hold at most i*L bins
                let lo = m.saturating_sub(i * l);
                let hi = m.min(l);
                let mut best_j = lo;
                let mut best_v = suffix[i][lo] + prev[m - lo];
                for j in lo + 1..=hi {
                    let v = suffix[i][j] + prev[m - j];
                    if v > best_v {
                        best_v = v;
                        best_j = j;
                    }
                }
                row.push(best_v);
                pick.push(best_j);
            }
            best.push(row);
            choice.push(pick);
        }

        let mut table = EwDpmtTable {
            k,
            l,
            best,
            choice,
            entries: Vec::new(),
            total_positives: grid.positives(),
            approximate: max != min,
        };
        table.entries = (0..=k * l)
            .map(|m| {
                let thresholds = table.thresholds_for(m);
                let e = evaluate(grid, &thresholds).expect("thresholds in range");
                PrTableEntry {
                    m,
                    tp: e.tp,
                    selected_n: e.selected_n,
                    thresholds,
                }
            })
            .collect();
        Ok(table)
    }

    /// Optimal boundary with exactly `m` positive bins.
    pub fn thresholds_for(&self, mut m: usize) -> Vec<usize> {
        let mut thresholds = vec![self.l; self.k];
        for i in (0..self.k).rev() {
            let j = self.choice[i][m];
            thresholds[i] = self.l - j;
            m -= j;
        }
        thresholds
    }

    /// Max positives with exactly `m` bins over all levels.
    pub fn max_positives(&self, m: usize) -> u64 {
        self.best[self.k - 1][m]
    }

    /// The PR curve: one entry per bin budget `m = 0..=K*L`.
    pub fn entries(&self) -> &[PrTableEntry] {
        &self.entries
    }

    /// Best feasible entry at `sigma`; ties on positives go to fewer bins.
    pub fn select(&self, sigma: f64) -> Option<&PrTableEntry> {
        let mut best: Option<&PrTableEntry> = None;
        for e in self.entries.iter().skip(1) {
            if meets_precision(e.tp, e.selected_n, sigma) && best.is_none_or(|b| e.tp > b.tp) {
                best = Some(e);
            }
        }
        best
    }

    pub fn solve(&self, sigma: f64) -> Result<BoundarySolution> {
        check_sigma(sigma)?;
        let (tp, selected_n, thresholds) = match self.select(sigma) {
            Some(e) => (e.tp, e.selected_n, e.thresholds.clone()),
            None => (0, 0, vec![self.l; self.k]),
        };
        let e = Evaluation::from_counts(tp, selected_n, self.total_positives);
        Ok(BoundarySolution {
            algorithm: Algorithm::EwDpmt,
            sigma,
            thresholds,
            tp,
            selected_n,
            precision_fit: e.precision,
            recall_fit: e.recall,
            feasible: meets_precision(tp, selected_n, sigma),
            empty_region: e.empty_region,
        })
    }
}

/// Equi-weight DP solver. Returns the boundary for `sigma` and the full
/// table, whose entries form the PR curve over bin budgets.
pub fn solve_ew_dpmt(grid: &BinGrid, sigma: f64) -> Result<(BoundarySolution, EwDpmtTable)> {
    check_sigma(sigma)?;
    let table = EwDpmtTable::build(grid)?;
    let solution = table.solve(sigma)?;
    Ok((solution, table))
}

#[derive(Debug, Clone, Copy)]
struct VwState {
    selected: u64,
    tp: u64,
    /// bins taken at this level
    taken: u32,
    /// index of the predecessor in the previous level's state list
    prev: u32,
    /// lexicographic rank of the partial threshold vector among this level's states
    rank: u32,
}

/// Variable-weight DP over sample budgets.
///
/// Each level keeps only reachable sample counts. For every count the state
/// with the most positives survives; ties keep the lexicographically
/// smallest threshold prefix.
pub fn solve_vw_dpmt(grid: &BinGrid, sigma: f64) -> Result<BoundarySolution> {
    check_sigma(sigma)?;
    let (k, l) = (grid.k(), grid.l());
    let total = grid.total() as usize;

    // dense scratch, indexed by sample count; compacted after every level
    let mut scratch: Vec<Option<VwState>> = vec![None; total + 1];
    let mut levels: Vec<Vec<VwState>> = Vec::with_capacity(k);

    let mut prev_states = vec![VwState {
        selected: 0,
        tp: 0,
        taken: 0,
        prev: 0,
        rank: 0,
    }];
    for i in 0..k {
        let (pi, nu) = grid.suffix_sums(i);
        let mut touched = Vec::new();
        for (pidx, ps) in prev_states.iter().enumerate() {
            for j in 0..=l {
                let cand = VwState {
                    selected: ps.selected + nu[j],
                    tp: ps.tp + pi[j],
                    taken: j as u32,
                    prev: pidx as u32,
                    rank: 0,
                };
                let slot = &mut scratch[cand.selected as usize];
                match slot {
                    None => {
                        touched.push(cand.selected as usize);
                        *slot = Some(cand);
                    }
                    Some(cur) => {
                        // threshold at this level is L - taken, so fewer bins is lexicographically larger
                        let better = cand.tp.cmp(&cur.tp).then_with(|| {
                            let cand_key = (ps.rank, l as u32 - cand.taken);
                            let cur_key =
                                (prev_states[cur.prev as usize].rank, l as u32 - cur.taken);
                            cur_key.cmp(&cand_key)
                        });
                        if better == Ordering::Greater {
                            *slot = Some(cand);
                        }
                    }
                }
            }
        }
        touched.sort_unstable();
        let mut states: Vec<VwState> = touched
            .into_iter()
            .map(|m| scratch[m].take().expect("touched slot"))
            .collect();

        let mut by_lex: Vec<usize> = (0..states.len()).collect();
        by_lex.sort_by_key(|&s| {
            let st = &states[s];
            (prev_states[st.prev as usize].rank, l as u32 - st.taken)
        });
        for (rank, s) in by_lex.into_iter().enumerate() {
            states[s].rank = rank as u32;
        }

        levels.push(prev_states);
        prev_states = states;
    }
    levels.push(prev_states);

    let finals = &levels[k];
    let mut best: Option<usize> = None;
    for (s, st) in finals.iter().enumerate() {
        if !meets_precision(st.tp, st.selected, sigma) {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &finals[b];
                st.tp
                    .cmp(&cur.tp)
                    .then(cur.selected.cmp(&st.selected))
                    .then(cur.rank.cmp(&st.rank))
                    == Ordering::Greater
            }
        };
        if better {
            best = Some(s);
        }
    }

    let mut thresholds = vec![l; k];
    if let Some(mut s) = best {
        for i in (0..k).rev() {
            let st = &levels[i + 1][s];
            thresholds[i] = l - st.taken as usize;
            s = st.prev as usize;
        }
    }
    BoundarySolution::new(grid, Algorithm::VwDpmt, sigma, thresholds)
}

/// Extends each level's positive region by its contiguous run of top bins
/// whose own positivity meets `sigma` (empty bins count as meeting it).
/// Such bins can always be added to a feasible boundary without breaking the
/// bound or losing positives.
pub fn prune_chp(grid: &BinGrid, sigma: f64, thresholds: &[usize]) -> Result<Vec<usize>> {
    check_thresholds(grid, thresholds)?;
    let out = thresholds
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let (p, n) = (grid.p_row(i), grid.n_row(i));
            let mut chp = grid.l();
            while chp > 0 {
                let j = chp - 1;
                let ok = n[j] == 0 || p[j] as f64 / n[j] as f64 >= sigma;
                if !ok {
                    break;
                }
                chp = j;
            }
            b.min(chp)
        })
        .collect();
    Ok(out)
}

pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Exhaustive search over all `(L+1)^K` boundaries. Ties: more positives,
/// then fewer selected samples, then lexicographically smallest thresholds.
pub fn brute_force_optimum(grid: &BinGrid, sigma: f64) -> Result<BoundarySolution> {
    check_sigma(sigma)?;
    let (k, l) = (grid.k(), grid.l());
    let states = ((l + 1) as f64).powi(k as i32);
    if states > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let sums: Vec<(Vec<u64>, Vec<u64>)> = (0..k).map(|i| grid.suffix_sums(i)).collect();

    let mut current = vec![0usize; k];
    let mut best: Option<(u64, u64, Vec<usize>)> = None;
    loop {
        let (mut tp, mut sel) = (0, 0);
        for (i, &b) in current.iter().enumerate() {
            tp += sums[i].0[l - b];
            sel += sums[i].1[l - b];
        }
        if meets_precision(tp, sel, sigma) {
            let better = best
                .as_ref()
                .is_none_or(|(btp, bsel, _)| tp > *btp || (tp == *btp && sel < *bsel));
            if better {
                best = Some((tp, sel, current.clone()));
            }
        }
        // odometer, last level fastest, so visits are in lexicographic order
        let mut pos = k;
        loop {
            if pos == 0 {
                let thresholds = best.map_or_else(|| vec![l; k], |b| b.2);
                return BoundarySolution::new(grid, Algorithm::BruteForce, sigma, thresholds);
            }
            pos -= 1;
            if current[pos] < l {
                current[pos] += 1;
                break;
            }
            current[pos] = 0;
        }
    }
}

/// Dispatches to the grid-level solver for `algorithm`.
pub fn solve(grid: &BinGrid, algorithm: Algorithm, sigma: f64) -> Result<BoundarySolution> {
    match algorithm {
        Algorithm::St => solve_st(grid, sigma),
        Algorithm::Gmt => solve_gmt(grid, sigma),
        Algorithm::Mist => solve_mist(grid, sigma),
        Algorithm::EwDpmt => solve_ew_dpmt(grid, sigma).map(|(s, _)| s),
        Algorithm::VwDpmt => solve_vw_dpmt(grid, sigma),
        Algorithm::BruteForce => brute_force_optimum(grid, sigma),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub sigma: f64,
    /// Bins in the positive region.
    pub bins: usize,
    pub tp: u64,
    pub selected_n: u64,
    pub precision: f64,
    pub recall: f64,
    pub feasible: bool,
    pub thresholds: Vec<usize>,
}

impl PrPoint {
    fn from_solution(s: &BoundarySolution, l: usize) -> Self {
        PrPoint {
            sigma: s.sigma,
            bins: s.selected_bins(l),
            tp: s.tp,
            selected_n: s.selected_n,
            precision: s.precision_fit,
            recall: s.recall_fit,
            feasible: s.feasible,
            thresholds: s.thresholds.clone(),
        }
    }
}

/// One solution per precision bound; EW-DPMT builds its table once.
pub fn pr_sweep(grid: &BinGrid, algorithm: Algorithm, sigmas: &[f64]) -> Result<Vec<PrPoint>> {
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
        return Err(Error::InvalidParameter(format!("sigma {s} outside (0, 1]")));
    }
    let table = match algorithm {
        Algorithm::EwDpmt => Some(EwDpmtTable::build(grid)?),
        _ => None,
    };
    sigmas
        .iter()
        .map(|&sigma| {
            let sol = match &table {
                Some(t) => t.solve(sigma)?,
                None => solve(grid, algorithm, sigma)?,
            };
            Ok(PrPoint::from_solution(&sol, grid.l()))
        })
        .collect()
}

/// A solution bundled with the partitioner needed to apply it to new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBoundary {
    #[serde(flatten)]
    pub solution: BoundarySolution,
    pub partitioner: Partitioner,
}

impl FittedBoundary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fb: FittedBoundary = serde_json::from_str(text)?;
        fb.partitioner.validate()?;
        if fb.solution.thresholds.len() != fb.partitioner.k
            || fb.solution.thresholds.iter().any(|&b| b > fb.partitioner.l)
        {
            return Err(Error::InvalidThresholds(
                "thresholds do not match the partitioner shape".into(),
            ));
        }
        Ok(fb)
    }

    /// Whether the boundary labels a point positive.
    pub fn predict(&self, score: f64, uncertainty: f64) -> bool {
        let (i, j) = self.partitioner.assign(score, uncertainty);
        j >= self.solution.thresholds[i]
    }
}

/// Output of [`fit_boundary`]: the boundary and the grid it was solved on.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub boundary: FittedBoundary,
    pub grid: BinGrid,
    pub warnings: Vec<String>,
}

/// Bins `d` per `spec` and solves for `sigma`.
///
/// ST on an equi-weight spec with several levels rebins the scores alone
/// into `spec.l` quantiles, because nested quantile edges differ between
/// levels and a shared bin index would not be a shared score.
pub fn fit_boundary(
    d: &Dataset,
    algorithm: Algorithm,
    spec: BinningSpec,
    sigma: f64,
) -> Result<FitOutcome> {
    let mut warnings = Vec::new();
    let (partitioner, grid) =
        if algorithm == Algorithm::St && spec.scheme == Scheme::EquiWeight && spec.k > 1 {
            fit_equi_weight(d, 1, spec.l)?
        } else {
            let fitted = match spec.scheme {
                Scheme::EquiWeight => crate::binning::fit_equi_weight_full(d, spec.k, spec.l)?,
                Scheme::EquiSpan => crate::binning::fit_equi_span_full(d, spec.k, spec.l)?,
            };
            if fitted.degenerate_uncertainty {
                warnings.push("uncertainty range is empty; using a single level".to_string());
            }
            if fitted.degenerate_score {
                warnings.push("score range is empty; using a single score bin".to_string());
            }
            (fitted.partitioner, fitted.grid)
        };
    if partitioner.aggregate(d) != grid {
        warnings.push(
            "tied values straddle bin edges; applying the boundary to this data \
             counts tied samples in the higher bin, so its metrics differ from the fit"
                .to_string(),
        );
    }

    let solution = match algorithm {
        Algorithm::EwDpmt => {
            let (solution, table) = solve_ew_dpmt(&grid, sigma)?;
            if table.approximate {
                warnings.push(
                    "bin sizes differ by one; EW-DPMT checked precision on exact counts"
                        .to_string(),
                );
            }
            solution
        }
        other => solve(&grid, other, sigma)?,
    };
    Ok(FitOutcome {
        boundary: FittedBoundary {
            solution,
            partitioner,
        },
        grid,
        warnings,
    })
}
