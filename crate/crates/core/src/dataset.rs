//! Labeled `(score, uncertainty, label)` samples and the hold-out/test split.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const HEADER: [&str; 3] = ["score", "uncertainty", "label"];

/// One labeled observation: the model score for the positive class, the
/// uncertainty attached to it and the binary label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub score: f64,
    pub uncertainty: f64,
    pub label: u8,
}

impl Sample {
    pub fn new(score: f64, uncertainty: f64, label: u8) -> Result<Self> {
        let sample = Sample {
            score,
            uncertainty,
            label,
        };
        sample.validate().map_err(Error::InvalidParameter)?;
        Ok(sample)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if !self.uncertainty.is_finite() {
            return Err(format!("uncertainty {} is not finite", self.uncertainty));
        }
        if self.label > 1 {
            return Err(format!("label {} not in {{0, 1}}", self.label));
        }
        Ok(())
    }

    #[inline]
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// An immutable, ordered collection of samples with cached class counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    n_positive: u64,
}

impl Dataset {
    /// Builds a dataset, validating every sample. An empty list is allowed
    /// here (a split may produce one); file loading rejects it.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        for (idx, s) in samples.iter().enumerate() {
            s.validate()
                .map_err(|m| Error::InvalidParameter(format!("sample {idx}: {m}")))?;
        }
        Ok(Self::from_valid(samples))
    }

    pub(crate) fn from_valid(samples: Vec<Sample>) -> Self {
        let n_positive = samples.iter().filter(|s| s.is_positive()).count() as u64;
        Dataset {
            samples,
            n_positive,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn n_total(&self) -> u64 {
        self.samples.len() as u64
    }

    pub fn n_positive(&self) -> u64 {
        self.n_positive
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Reads a `score,uncertainty,label` CSV file.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let header = rdr.headers()?.clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!(
                    "expected header `score,uncertainty,label`, found `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }

        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::MalformedRow {
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let malformed = |message: String| Error::MalformedRow { line, message };

            if record.len() != 3 {
                return Err(malformed(format!(
                    "expected 3 fields, found {}",
                    record.len()
                )));
            }
            let score: f64 = record[0]
                .parse()
                .map_err(|_| malformed(format!("cannot parse score `{}`", &record[0])))?;
            let uncertainty: f64 = record[1]
                .parse()
                .map_err(|_| malformed(format!("cannot parse uncertainty `{}`", &record[1])))?;
            let label: u8 = match &record[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(malformed(format!("label `{other}` not in {{0, 1}}"))),
            };
            let sample = Sample {
                score,
                uncertainty,
                label,
            };
            sample.validate().map_err(malformed)?;
            samples.push(sample);
        }

        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self::from_valid(samples))
    }

    /// Writes the dataset as CSV. Reals use the shortest representation that
    /// parses back to the same `f64`, so loading the file reproduces the
    /// sample list exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(HEADER)?;
        for s in &self.samples {
            wtr.write_record([
                s.score.to_string(),
                s.uncertainty.to_string(),
                s.label.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Randomly partitions the samples into a hold-out part and a test part.
    ///
    /// Membership is decided by a seeded shuffle; each part keeps the original
    /// relative order of its samples.
    pub fn split(&self, hold: f64, test: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let valid = hold > 0.0 && test > 0.0 && ((hold + test) - 1.0).abs() <= 1e-9;
        if !valid {
            return Err(Error::InvalidSplit { hold, test });
        }
        let n = self.samples.len();
        let n_hold = ((hold * n as f64).round() as usize).min(n);

        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);

        let (hold_idx, test_idx) = order.split_at_mut(n_hold);
        hold_idx.sort_unstable();
        test_idx.sort_unstable();
        let pick = |idx: &[usize]| Self::from_valid(idx.iter().map(|&i| self.samples[i]).collect());
        Ok((pick(hold_idx), pick(test_idx)))
    }
}

impl FromIterator<Sample> for Dataset {
    /// Collects already-validated samples.
    ///
    /// # Panics
    /// Panics if a sample violates the range invariants.
    fn from_iter<T: IntoIterator<Item = Sample>>(iter: T) -> Self {
        let samples: Vec<Sample> = iter.into_iter().collect();
        Dataset::new(samples).expect("invalid sample")
    }
}
