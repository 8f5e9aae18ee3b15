//! Local outlier probabilities (LoOP), the per-subspace Local-LoOP baseline
//! and the classical LOF baseline.
//!
//! LoOP turns a kNN neighbourhood into a probability in three steps:
//!
//! 1. the *probabilistic set distance* of a point is `lambda` times the root
//!    mean square distance to its `k` neighbours;
//! 2. the *probabilistic local outlier factor* (PLOF) is that distance divided
//!    by the mean set distance of the neighbours, minus one;
//! 3. PLOF values are normalised by `nPLOF = lambda * sqrt(mean(PLOF^2))` and
//!    mapped through `max(0, erf(PLOF / (nPLOF * sqrt(2))))`.
//!
//! Degenerate neighbourhoods follow two fixed rules. A point whose own set
//! distance and whose neighbours' mean set distance are both zero has
//! PLOF 0 (coincident points are inliers). A positive set distance over a zero
//! neighbour mean gives [`SATURATED_FACTOR`], which always maps to
//! probability 1 and is left out of the nPLOF normalisation.

use std::io::Write;
use std::ops::Deref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, Dataset, Subspace};
use crate::error::{Error, Result};
use crate::gloss::ScoreMatrix;
use crate::neighbors::{knn_table, DistanceMetric, NeighborhoodTable};

/// PLOF assigned when a point has positive set distance but all of its
/// neighbours have zero set distance.
pub const SATURATED_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopParams {
    pub k: usize,
    pub lambda: f64,
    pub metric: DistanceMetric,
}

impl Default for LoopParams {
    fn default() -> Self {
        LoopParams {
            k: 20,
            lambda: 3.0,
            metric: DistanceMetric::Euclidean,
        }
    }
}

impl LoopParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Validates the parameters and the `n >= k + 1` precondition.
    pub(crate) fn check_against(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if data.n_rows() < self.k + 1 {
            return Err(Error::InvalidParameter(format!(
                "need at least k + 1 = {} points, dataset has {}",
                self.k + 1,
                data.n_rows()
            )));
        }
        Ok(())
    }
}

/// Per-point outlier scores aligned with the dataset rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Self {
        ScoreVector(scores)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Row indices by descending score; equal scores keep row order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }

    /// 0-based position of row `i` in [`ranking`](Self::ranking).
    pub fn rank_of(&self, i: usize) -> usize {
        self.ranking().iter().position(|&r| r == i).unwrap_or(usize::MAX)
    }
}

impl Deref for ScoreVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(v: Vec<f64>) -> Self {
        ScoreVector(v)
    }
}

/// Root mean square distance from `point` to the reference points.
pub fn standard_distance(point: &[f64], refs: &[&[f64]], metric: DistanceMetric) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    let mut sum = 0.0;
    for r in refs {
        let dist = crate::neighbors::distance(point, r, metric)?;
        sum += dist * dist;
    }
    Ok((sum / refs.len() as f64).sqrt())
}

/// `lambda * standard_distance(point, refs)`.
pub fn pdist(lambda: f64, point: &[f64], refs: &[&[f64]], metric: DistanceMetric) -> Result<f64> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    Ok(lambda * standard_distance(point, refs, metric)?)
}

/// `own / neighbour_mean - 1` with the degenerate-neighbourhood rules.
#[inline]
pub fn probabilistic_factor(own: f64, neighbour_mean: f64) -> f64 {
    if neighbour_mean > 0.0 {
        own / neighbour_mean - 1.0
    } else if own > 0.0 {
        SATURATED_FACTOR
    } else {
        0.0
    }
}

/// Squared distance between two rows on `features`; for Euclidean this is
/// the sum of squared differences, for Manhattan the squared L1 norm.
#[inline]
pub(crate) fn squared_on(metric: DistanceMetric, a: &[f64], b: &[f64], features: &[usize]) -> f64 {
    match metric {
        DistanceMetric::Euclidean => features.iter().map(|&j| (a[j] - b[j]) * (a[j] - b[j])).sum(),
        DistanceMetric::Manhattan => {
            let l1 = metric.on_features(a, b, features);
            l1 * l1
        }
    }
}

/// Set distance of every point to its own neighbourhood in `table`, measured
/// on `features` only.
pub(crate) fn set_distances(
    data: &Dataset,
    table: &NeighborhoodTable,
    features: &[usize],
    lambda: f64,
    metric: DistanceMetric,
) -> Vec<f64> {
    let k = table.k() as f64;
    (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let p = data.row(i);
            let sum: f64 = table
                .neighbor_ids(i)
                .map(|s| squared_on(metric, p, data.row(s), features))
                .sum();
            lambda * (sum / k).sqrt()
        })
        .collect()
}

/// Factor of every point from precomputed set distances.
pub(crate) fn factors(set_dist: &[f64], table: &NeighborhoodTable) -> Vec<f64> {
    let k = table.k() as f64;
    (0..set_dist.len())
        .map(|i| {
            let mean = table.neighbor_ids(i).map(|s| set_dist[s]).sum::<f64>() / k;
            probabilistic_factor(set_dist[i], mean)
        })
        .collect()
}

/// PLOF of one point against a table built over all features of `data`.
pub fn plof(point: usize, table: &NeighborhoodTable, data: &Dataset, params: &LoopParams) -> f64 {
    let all: Vec<usize> = (0..data.n_features()).collect();
    let set_dist = |i: usize| {
        let p = data.row(i);
        let sum: f64 = table
            .neighbor_ids(i)
            .map(|s| squared_on(params.metric, p, data.row(s), &all))
            .sum();
        params.lambda * (sum / table.k() as f64).sqrt()
    };
    let mean = table.neighbor_ids(point).map(set_dist).sum::<f64>() / table.k() as f64;
    probabilistic_factor(set_dist(point), mean)
}

/// `lambda * sqrt(mean(values^2))`: the zero-mean standard deviation scaled
/// by `lambda`.
pub fn nplof(values: &[f64], lambda: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let ms = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    Ok(lambda * ms.sqrt())
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Maps factors to probabilities with a single normalisation over `factors`.
pub fn probabilities(factors: &[f64], lambda: f64) -> Vec<f64> {
    let norm = normaliser(factors.iter().copied(), lambda);
    factors.iter().map(|&f| to_probability(f, norm)).collect()
}

/// nPLOF over the non-saturated factors; 0 when there are none.
pub(crate) fn normaliser(factors: impl Iterator<Item = f64>, lambda: f64) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for f in factors.filter(|&f| f < SATURATED_FACTOR) {
        sum += f * f;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        lambda * (sum / count as f64).sqrt()
    }
}

#[inline]
pub(crate) fn to_probability(factor: f64, norm: f64) -> f64 {
    if factor >= SATURATED_FACTOR {
        1.0
    } else if norm > 0.0 {
        erf(factor / (norm * std::f64::consts::SQRT_2)).max(0.0)
    } else {
        0.0
    }
}

/// LoOP over all features of `data`.
pub fn loop_scores(data: &Dataset, params: &LoopParams) -> Result<ScoreVector> {
    params.check_against(data)?;
    let table = knn_table(data, params.k, params.metric)?;
    Ok(loop_with_table(data, &table, params))
}

pub(crate) fn loop_with_table(
    data: &Dataset,
    table: &NeighborhoodTable,
    params: &LoopParams,
) -> ScoreVector {
    let all: Vec<usize> = (0..data.n_features()).collect();
    let sd = set_distances(data, table, &all, params.lambda, params.metric);
    ScoreVector(probabilities(&factors(&sd, table), params.lambda))
}

/// Runs LoOP separately inside every subspace, rebuilding the neighbourhood
/// there, and keeps the per-point maximum.
pub fn local_loop_scores(
    data: &Dataset,
    subspaces: &[Subspace],
    params: &LoopParams,
) -> Result<ScoreVector> {
    Ok(local_loop_matrix(data, subspaces, params)?.aggregate)
}

pub fn local_loop_matrix(
    data: &Dataset,
    subspaces: &[Subspace],
    params: &LoopParams,
) -> Result<ScoreMatrix> {
    if subspaces.is_empty() {
        return Err(Error::NoSubspaces);
    }
    params.check_against(data)?;
    let mut columns = Vec::with_capacity(subspaces.len());
    for sub in subspaces {
        let projected = data.project(sub)?;
        columns.push(loop_scores(&projected, params)?.into_vec());
    }
    Ok(ScoreMatrix::from_columns(
        data.n_rows(),
        subspaces.to_vec(),
        columns,
        subspaces.len(),
    ))
}

/// Every 2-D subspace `{i, j}` with `i < j`.
pub fn all_pairs(d: usize) -> Vec<Subspace> {
    let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            out.push(Subspace::new(vec![i, j]).expect("distinct indices"));
        }
    }
    out
}

/// Classical LOF on exactly-`k` neighbourhoods.
///
/// With `s(p)` the sum of reachability distances of `p`, `lrd(p) = k / s(p)`
/// and `LOF(p) = mean over neighbours o of s(p) / s(o)`. Duplicate points give
/// `s = 0` (infinite density): a term with both sums zero counts as 1, a term
/// with only `s(o) = 0` is infinite.
pub fn lof_scores(data: &Dataset, k: usize, metric: DistanceMetric) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if data.n_rows() < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least k + 1 = {} points, dataset has {}",
            k + 1,
            data.n_rows()
        )));
    }
    let table = knn_table(data, k, metric)?;
    Ok(lof_with_table(&table))
}

pub(crate) fn lof_with_table(table: &NeighborhoodTable) -> Vec<f64> {
    let n = table.len();
    let kdist: Vec<f64> = (0..n)
        .map(|o| table.neighbors(o).last().map_or(0.0, |nb| nb.distance))
        .collect();
    let reach_sum: Vec<f64> = (0..n)
        .map(|p| {
            table
                .neighbors(p)
                .iter()
                .map(|nb| nb.distance.max(kdist[nb.index]))
                .sum()
        })
        .collect();
    let k = table.k() as f64;
    (0..n)
        .map(|p| {
            let sp = reach_sum[p];
            table
                .neighbor_ids(p)
                .map(|o| {
                    let so = reach_sum[o];
                    match (sp == 0.0, so == 0.0) {
                        (true, true) => 1.0,
                        (_, true) => f64::INFINITY,
                        _ => sp / so,
                    }
                })
                .sum::<f64>()
                / k
        })
        .collect()
}

/// `point_id,score` with 17 significant digits.
pub fn write_scores_csv<W: Write>(scores: &[f64], data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point_id", "score"])?;
    for (id, &s) in data.row_ids().iter().zip(scores) {
        w.write_record([id.as_str(), &fmt_real(s)])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
