//! Held-out evaluation of fitted boundaries and grid calibration error.

use serde::{Deserialize, Serialize};

use crate::binning::{fit_equi_weight, Partitioner};
use crate::boundary::{mist_calibration, FittedBoundary};
use crate::dataset::Dataset;
use crate::{Error, Result};

/// Confusion counts of a boundary applied to labeled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestEval {
    /// `tp / (tp + fp)`, or 1.0 when nothing is selected (see `empty_region`).
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub empty_region: bool,
}

pub fn test_eval(boundary: &FittedBoundary, test: &Dataset) -> TestEval {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for s in test.samples() {
        match (boundary.predict(s.score, s.uncertainty), s.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let selected = tp + fp;
    TestEval {
        precision: if selected == 0 {
            1.0
        } else {
            tp as f64 / selected as f64
        },
        recall: if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        },
        tp,
        fp,
        fn_,
        tn,
        empty_region: selected == 0,
    }
}

/// Piecewise-constant calibration map: a partitioner plus one calibrated
/// rate per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCalibrator {
    pub partitioner: Partitioner,
    pub rates: Vec<Vec<f64>>,
}

impl GridCalibrator {
    pub fn calibrated(&self, score: f64, uncertainty: f64) -> f64 {
        let (i, j) = self.partitioner.assign(score, uncertainty);
        self.rates[i][j]
    }
}

/// Per-level isotonic calibration on a `K x L` equi-weight grid.
pub fn mist_calibrator(hold: &Dataset, k: usize, l: usize) -> Result<GridCalibrator> {
    let (partitioner, grid) = fit_equi_weight(hold, k, l)?;
    let rates = mist_calibration(&grid)?;
    Ok(GridCalibrator { partitioner, rates })
}

/// One isotonic fit on `L` score quantiles, ignoring uncertainty.
pub fn ist_baseline(hold: &Dataset, l: usize) -> Result<GridCalibrator> {
    mist_calibrator(hold, 1, l)
}

/// Absolute mean residual `|mean(calibrated - label)|` of every bin of an
/// evaluation grid; `None` for empty bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinErrors {
    k: usize,
    l: usize,
    errors: Vec<Option<f64>>,
    counts: Vec<u64>,
}

impl BinErrors {
    /// Accumulates residuals of pre-assigned samples `(level, score bin,
    /// calibrated score, label)`.
    pub fn from_assigned(
        k: usize,
        l: usize,
        samples: impl IntoIterator<Item = (usize, usize, f64, u8)>,
    ) -> Result<Self> {
        let mut sums = vec![0.0; k * l];
        let mut counts = vec![0u64; k * l];
        for (i, j, c, y) in samples {
            if i >= k || j >= l {
                return Err(Error::InvalidShape(format!(
                    "bin ({i},{j}) outside {k}x{l}"
                )));
            }
            sums[i * l + j] += c - y as f64;
            counts[i * l + j] += 1;
        }
        let errors = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &n)| (n > 0).then(|| (s / n as f64).abs()))
            .collect();
        Ok(BinErrors {
            k,
            l,
            errors,
            counts,
        })
    }

    /// Assigns `test` with `grid` and scores each sample with `calibrator`.
    pub fn compute(grid: &Partitioner, calibrator: &GridCalibrator, test: &Dataset) -> Self {
        let assigned = test.samples().iter().map(|s| {
            let (i, j) = grid.assign(s.score, s.uncertainty);
            (i, j, calibrator.calibrated(s.score, s.uncertainty), s.label)
        });
        Self::from_assigned(grid.k, grid.l, assigned).expect("partitioner bins are in range")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Zero-based `(level, score bin)`.
    pub fn error(&self, i: usize, j: usize) -> Option<f64> {
        self.errors[i * self.l + j]
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.l + j]
    }

    /// Samples in score bin `j` (zero-based) over all levels.
    pub fn column_count(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.count(i, j)).sum()
    }
}

/// Mean of the per-bin errors over the populated levels of score bin `j`
/// (zero-based).
pub fn ece_at_j(errors: &BinErrors, j: usize) -> Result<f64> {
    if j >= errors.l {
        return Err(Error::InvalidParameter(format!(
            "score bin {j} >= L={}",
            errors.l
        )));
    }
    let populated: Vec<f64> = (0..errors.k).filter_map(|i| errors.error(i, j)).collect();
    if populated.is_empty() {
        return Err(Error::EmptyScoreBin(j));
    }
    Ok(populated.iter().sum::<f64>() / populated.len() as f64)
}

/// Mean of the per-bin errors over populated bins whose one-based score
/// index exceeds `j`, i.e. zero-based bins `j..L`. `None` when all of them
/// are empty.
pub fn cumulative_ece(errors: &BinErrors, j: usize) -> Option<f64> {
    let values: Vec<f64> = (0..errors.k)
        .flat_map(|i| (j.min(errors.l)..errors.l).filter_map(move |b| errors.error(i, b)))
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    /// One-based score bin.
    pub j: usize,
    pub ece_mist: Option<f64>,
    pub ece_ist: Option<f64>,
    /// Cumulative errors over this bin and every higher one.
    pub cum_ece_mist: Option<f64>,
    pub cum_ece_ist: Option<f64>,
    pub count: u64,
}

/// MIST against IST, both scored on the bins of the MIST grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub k: usize,
    pub l: usize,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationReport {
    pub fn build(mist: &BinErrors, ist: &BinErrors) -> Result<Self> {
        if (mist.k, mist.l) != (ist.k, ist.l) {
            return Err(Error::InvalidShape("calibration grids differ".into()));
        }
        let rows = (0..mist.l)
            .map(|b| CalibrationRow {
                j: b + 1,
                ece_mist: ece_at_j(mist, b).ok(),
                ece_ist: ece_at_j(ist, b).ok(),
                cum_ece_mist: cumulative_ece(mist, b),
                cum_ece_ist: cumulative_ece(ist, b),
                count: mist.column_count(b),
            })
            .collect();
        Ok(CalibrationReport {
            k: mist.k,
            l: mist.l,
            rows,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "j",
            "ece_mist",
            "ece_ist",
            "cum_ece_mist",
            "cum_ece_ist",
            "count",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.j.to_string(),
                fmt(r.ece_mist),
                fmt(r.ece_ist),
                fmt(r.cum_ece_mist),
                fmt(r.cum_ece_ist),
                r.count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<calibration csv>", e))?;
        Ok(())
    }
}

/// Fits MIST on a `K x L` and IST on a `1 x L` equi-weight grid of `hold`,
/// then reports both on `test`.
pub fn calibrate(hold: &Dataset, test: &Dataset, k: usize, l: usize) -> Result<CalibrationReport> {
    let mist = mist_calibrator(hold, k, l)?;
    let ist = ist_baseline(hold, l)?;
    let grid = &mist.partitioner;
    CalibrationReport::build(
        &BinErrors::compute(grid, &mist, test),
        &BinErrors::compute(grid, &ist, test),
    )
}
