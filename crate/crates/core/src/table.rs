use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed discrete sample, aggregated as `(support point, count)` pairs
/// with strictly increasing support points and positive counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    entries: Vec<(u64, u64)>,
    n: u64,
}

impl FrequencyTable {
    /// Builds a table from `(x, count)` rows. Duplicate rows are summed and
    /// zero counts dropped.
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(rows: I) -> Result<Self> {
        let mut merged: BTreeMap<u64, u64> = BTreeMap::new();
        for (x, count) in rows {
            *merged.entry(x).or_default() += count;
        }
        merged.retain(|_, c| *c > 0);
        let n: u64 = merged.values().sum();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            entries: merged.into_iter().collect(),
            n,
        })
    }

    pub fn from_observations<I: IntoIterator<Item = u64>>(obs: I) -> Result<Self> {
        Self::from_counts(obs.into_iter().map(|x| (x, 1)))
    }

    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `(x, r_n(x))` for every observed support point.
    pub fn relative(&self) -> Vec<(u64, f64)> {
        let n = self.n as f64;
        self.entries
            .iter()
            .map(|&(x, c)| (x, c as f64 / n))
            .collect()
    }

    pub fn max_x(&self) -> u64 {
        self.entries.last().map(|e| e.0).unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self.entries.iter().map(|&(x, c)| x as f64 * c as f64).sum();
        total / self.n as f64
    }

    /// Lower median of the sample.
    pub fn median(&self) -> u64 {
        let half = self.n.div_ceil(2);
        let mut seen = 0;
        for &(x, c) in &self.entries {
            seen += c;
            if seen >= half {
                return x;
            }
        }
        self.max_x()
    }

    /// Copy of the table with the given support points removed.
    pub fn without(&self, xs: &[u64]) -> Result<Self> {
        Self::from_counts(
            self.entries
                .iter()
                .copied()
                .filter(|(x, _)| !xs.contains(x)),
        )
    }
}
