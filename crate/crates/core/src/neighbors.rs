//! Distance metrics and exact k-nearest-neighbour tables.
//!
//! [`knn_table`] is a brute-force `O(n^2 d)` scan. A point is never its own
//! neighbour, and equal distances are ordered by row index so the table is
//! fully deterministic (and identical whether rows are processed in parallel
//! or not).

use std::cell::Cell;
use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Manhattan,
}

impl DistanceMetric {
    /// Distance between two equal-length slices. Callers guarantee the
    /// lengths match.
    #[inline]
    pub(crate) fn between(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    /// Distance between two full rows measured only on `features`.
    #[inline]
    pub(crate) fn on_features(self, a: &[f64], b: &[f64], features: &[usize]) -> f64 {
        match self {
            DistanceMetric::Euclidean => features
                .iter()
                .map(|&j| (a[j] - b[j]) * (a[j] - b[j]))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Manhattan => features.iter().map(|&j| (a[j] - b[j]).abs()).sum(),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Manhattan => "manhattan",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(DistanceMetric::Euclidean),
            "manhattan" | "l1" | "cityblock" => Ok(DistanceMetric::Manhattan),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(metric.between(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[inline]
fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// The `k` nearest neighbours of every point, flattened row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodTable {
    k: usize,
    requested_k: usize,
    metric: DistanceMetric,
    entries: Vec<Neighbor>,
}

impl NeighborhoodTable {
    /// Effective neighbourhood size, `min(requested, n - 1)`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    /// True when the requested `k` was reduced to `n - 1`.
    pub fn was_clamped(&self) -> bool {
        self.k != self.requested_k
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.entries.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn neighbor_ids(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors(i).iter().map(|nb| nb.index)
    }
}

thread_local! {
    static TABLE_BUILDS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`knn_table`] calls made on the current thread so far.
pub fn table_builds() -> usize {
    TABLE_BUILDS.with(Cell::get)
}

/// Exact kNN over all features of `data`. A `k` of `n` or more is clamped to
/// `n - 1`; check [`NeighborhoodTable::was_clamped`].
pub fn knn_table(data: &Dataset, k: usize, metric: DistanceMetric) -> Result<NeighborhoodTable> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "need at least two points for a neighbourhood table".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    TABLE_BUILDS.with(|c| c.set(c.get() + 1));
    let eff = k.min(n - 1);

    let lists: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|i| nearest(data, i, eff, metric))
        .collect();

    Ok(NeighborhoodTable {
        k: eff,
        requested_k: k,
        metric,
        entries: lists.into_iter().flatten().collect(),
    })
}

fn nearest(data: &Dataset, i: usize, k: usize, metric: DistanceMetric) -> Vec<Neighbor> {
    let p = data.row(i);
    let mut cand: Vec<Neighbor> = (0..data.n_rows())
        .filter(|&j| j != i)
        .map(|j| Neighbor {
            index: j,
            distance: metric.between(p, data.row(j)),
        })
        .collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_distance_then_index);
    cand
}

/// Debug dump: `point_id,rank,neighbor_id,distance`, rank starting at 1.
pub fn write_table_csv<W: Write>(table: &NeighborhoodTable, data: &Dataset, writer: W) -> Result<()> {
    let ids = data.row_ids();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point_id", "rank", "neighbor_id", "distance"])?;
    for i in 0..table.len() {
        for (rank, nb) in table.neighbors(i).iter().enumerate() {
            w.write_record([
                ids[i].as_str(),
                &(rank + 1).to_string(),
                ids[nb.index].as_str(),
                &fmt_real(nb.distance),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
