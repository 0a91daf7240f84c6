//! Collected batches, nearest-rank percentiles and threshold trimming.
//!
//! Every trimming and injection position in the game is a percentile rank.
//! Ranks resolve to data values with the nearest-rank convention: for a
//! sorted sample of size `n`, rank `q` maps to the element at 1-based index
//! `ceil(q * n)`, clamped to `[1, n]`. The result is always an attainable
//! data value, so an injection "at the 90th percentile" lands exactly on a
//! value a trimming cutoff can be compared against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack absorbed when turning `q * n` into a rank, so that `0.9 * 10`
/// (which is `9.000000000000002` in binary) still resolves to rank 9.
const RANK_EPS: f64 = 1e-9;

/// A percentile rank in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PercentilePoint(f64);

impl PercentilePoint {
    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain(format!("percentile {q} outside [0, 1]")));
        }
        Ok(Self(q))
    }

    /// Builds a rank from percentage points, clamping into `[0, 100]`.
    ///
    /// Strategy offsets such as `Tth + 1pp` can step past the ends of the
    /// scale; those collapse onto the minimum or maximum.
    pub fn from_pp_clamped(pp: f64) -> Self {
        Self((pp / 100.0).clamp(0.0, 1.0))
    }

    pub fn fraction(self) -> f64 {
        self.0
    }

    pub fn pp(self) -> f64 {
        self.0 * 100.0
    }
}

/// Values collected in one round, with ground-truth poison labels.
///
/// The labels never reach a defender; the engine uses them for accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    values: Vec<f64>,
    is_poison: Vec<bool>,
}

impl Batch {
    pub fn new(values: Vec<f64>, is_poison: Vec<bool>) -> Result<Self> {
        if values.len() != is_poison.len() {
            return Err(Error::domain(format!(
                "{} values but {} poison flags",
                values.len(),
                is_poison.len()
            )));
        }
        Ok(Self { values, is_poison })
    }

    pub fn benign(values: Vec<f64>) -> Self {
        let is_poison = vec![false; values.len()];
        Self { values, is_poison }
    }

    pub fn poison(values: Vec<f64>) -> Self {
        let is_poison = vec![true; values.len()];
        Self { values, is_poison }
    }

    pub fn push(&mut self, value: f64, poison: bool) {
        self.values.push(value);
        self.is_poison.push(poison);
    }

    pub fn extend(&mut self, other: &Batch) {
        self.values.extend_from_slice(&other.values);
        self.is_poison.extend_from_slice(&other.is_poison);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_poison(&self) -> &[bool] {
        &self.is_poison
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.values
            .iter()
            .copied()
            .zip(self.is_poison.iter().copied())
    }

    pub fn poison_count(&self) -> usize {
        self.is_poison.iter().filter(|&&p| p).count()
    }

    pub fn benign_count(&self) -> usize {
        self.len() - self.poison_count()
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// 1-based nearest rank of `q` in a sample of `n` values.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let r = (q * n as f64 - RANK_EPS).ceil();
    (r.max(1.0) as usize).min(n)
}

/// Nearest-rank percentile of an already sorted, non-empty slice.
pub fn percentile_of_sorted(sorted: &[f64], q: PercentilePoint) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::domain("percentile of an empty sample"));
    }
    Ok(sorted[nearest_rank(q.fraction(), sorted.len()) - 1])
}

pub fn nearest_rank_percentile(batch: &Batch, q: PercentilePoint) -> Result<f64> {
    percentile_of_sorted(&batch.sorted_values(), q)
}

/// Splits `batch` into the values at or below `cutoff` and those above it.
///
/// Order and poison labels are preserved within each half.
pub fn trim_above(batch: &Batch, cutoff: f64) -> (Batch, Batch) {
    let mut kept = Batch::default();
    let mut removed = Batch::default();
    for (v, p) in batch.iter() {
        if v <= cutoff {
            kept.push(v, p);
        } else {
            removed.push(v, p);
        }
    }
    (kept, removed)
}
