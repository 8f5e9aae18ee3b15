//! Subspace outlier probabilities measured against global neighbourhoods.
//!
//! The kNN table is built once over the full feature space. For each scored
//! subspace `F`, every point's set distance is taken to its *global*
//! neighbours with distances measured only on `F`; the factor compares that
//! to the mean set distance of the same neighbours (each against its own
//! global neighbourhood, again on `F`). Factors become probabilities exactly
//! as in LoOP, and a point's final score is its maximum over subspaces.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, Dataset, Subspace};
use crate::density::{
    factors, normaliser, probabilistic_factor, set_distances, squared_on, to_probability,
    LoopParams, ScoreVector,
};
use crate::error::{Error, Result};
use crate::neighbors::{knn_table, DistanceMetric, NeighborhoodTable};
use crate::search::{search_subspaces, SearchParams};

/// Scope of the factor normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalisation {
    /// One normaliser per subspace, from that subspace's factors only.
    #[default]
    PerSubspace,
    /// A single normaliser over the factors of all subspaces.
    Pooled,
}

/// Per-point, per-subspace probabilities plus their row-wise maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    subspaces: Vec<Subspace>,
    columns: Vec<Vec<f64>>,
    pub aggregate: ScoreVector,
    /// kNN tables built while producing this matrix.
    pub neighbourhood_builds: usize,
}

impl ScoreMatrix {
    pub(crate) fn from_columns(
        n: usize,
        subspaces: Vec<Subspace>,
        columns: Vec<Vec<f64>>,
        neighbourhood_builds: usize,
    ) -> Self {
        debug_assert_eq!(subspaces.len(), columns.len());
        let aggregate = aggregate_max(&columns, n);
        ScoreMatrix {
            n,
            subspaces,
            columns,
            aggregate,
            neighbourhood_builds,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn subspaces(&self) -> &[Subspace] {
        &self.subspaces
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    /// Column holding the row maximum; lowest column index on ties.
    pub fn best_subspace(&self, i: usize) -> usize {
        let mut best = 0;
        for j in 1..self.columns.len() {
            if self.columns[j][i] > self.columns[best][i] {
                best = j;
            }
        }
        best
    }
}

/// Row-wise maximum over score columns.
pub fn aggregate_max(columns: &[Vec<f64>], n: usize) -> ScoreVector {
    let mut out = vec![f64::NEG_INFINITY; n];
    for col in columns {
        for (o, &v) in out.iter_mut().zip(col) {
            if v > *o {
                *o = v;
            }
        }
    }
    if columns.is_empty() {
        out.fill(0.0);
    }
    ScoreVector::new(out)
}

/// Root mean square distance from `point` to `neighbours`, measured on the
/// features of `sub`.
pub fn extended_standard_distance(
    point: usize,
    sub: &Subspace,
    neighbours: &[usize],
    data: &Dataset,
    metric: DistanceMetric,
) -> Result<f64> {
    if neighbours.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    sub.check(data.n_features())?;
    let p = data.row(point);
    let f = sub.features();
    let sum: f64 = neighbours
        .iter()
        .map(|&s| {
            let dist = metric.on_features(p, data.row(s), f);
            dist * dist
        })
        .sum();
    Ok((sum / neighbours.len() as f64).sqrt())
}

/// Global-neighbourhood factor of one point in subspace `sub`. `table` must
/// be the full-space table.
pub fn pglof(
    point: usize,
    sub: &Subspace,
    table: &NeighborhoodTable,
    data: &Dataset,
    params: &LoopParams,
) -> Result<f64> {
    sub.check(data.n_features())?;
    let own = subspace_set_distance(point, sub.features(), table, data, params);
    let mean = table
        .neighbor_ids(point)
        .map(|s| subspace_set_distance(s, sub.features(), table, data, params))
        .sum::<f64>()
        / table.k() as f64;
    Ok(probabilistic_factor(own, mean))
}

fn subspace_set_distance(
    i: usize,
    features: &[usize],
    table: &NeighborhoodTable,
    data: &Dataset,
    params: &LoopParams,
) -> f64 {
    let p = data.row(i);
    let sum: f64 = table
        .neighbor_ids(i)
        .map(|s| squared_on(params.metric, p, data.row(s), features))
        .sum();
    params.lambda * (sum / table.k() as f64).sqrt()
}

/// Where the scored subspaces come from.
#[derive(Debug, Clone)]
pub enum SubspaceSource<'a> {
    Given(&'a [Subspace]),
    Search(&'a SearchParams),
}

/// Scores `data` against its global neighbourhoods. Given subspaces take
/// precedence; otherwise `search` must be present and drives a subspace
/// search first.
pub fn gloss(
    data: &Dataset,
    params: &LoopParams,
    subspaces: Option<&[Subspace]>,
    search: Option<&SearchParams>,
) -> Result<ScoreMatrix> {
    let source = match (subspaces, search) {
        (Some(s), _) => SubspaceSource::Given(s),
        (None, Some(p)) => SubspaceSource::Search(p),
        (None, None) => {
            return Err(Error::InvalidParameter(
                "either subspaces or search parameters are required".into(),
            ))
        }
    };
    gloss_with(data, params, source, Normalisation::PerSubspace)
}

pub fn gloss_with(
    data: &Dataset,
    params: &LoopParams,
    source: SubspaceSource<'_>,
    normalisation: Normalisation,
) -> Result<ScoreMatrix> {
    params.check_against(data)?;
    let subspaces: Vec<Subspace> = match source {
        SubspaceSource::Given(s) => s.to_vec(),
        SubspaceSource::Search(p) => search_subspaces(data, p)?
            .ranked
            .into_iter()
            .map(|c| c.subspace)
            .collect(),
    };
    if subspaces.is_empty() {
        return Err(Error::NoSubspaces);
    }
    for s in &subspaces {
        s.check(data.n_features())?;
    }
    let table = knn_table(data, params.k, params.metric)?;
    Ok(score_subspaces(data, &table, &subspaces, params, normalisation))
}

/// Probabilities for every (point, subspace) against a prebuilt full-space
/// table.
pub fn score_subspaces(
    data: &Dataset,
    table: &NeighborhoodTable,
    subspaces: &[Subspace],
    params: &LoopParams,
    normalisation: Normalisation,
) -> ScoreMatrix {
    let factor_columns: Vec<Vec<f64>> = subspaces
        .par_iter()
        .map(|sub| {
            let sd = set_distances(data, table, sub.features(), params.lambda, params.metric);
            factors(&sd, table)
        })
        .collect();

    let columns: Vec<Vec<f64>> = match normalisation {
        Normalisation::PerSubspace => factor_columns
            .iter()
            .map(|col| {
                let norm = normaliser(col.iter().copied(), params.lambda);
                col.iter().map(|&f| to_probability(f, norm)).collect()
            })
            .collect(),
        Normalisation::Pooled => {
            let norm = normaliser(factor_columns.iter().flatten().copied(), params.lambda);
            factor_columns
                .iter()
                .map(|col| col.iter().map(|&f| to_probability(f, norm)).collect())
                .collect()
        }
    };
    ScoreMatrix::from_columns(data.n_rows(), subspaces.to_vec(), columns, 1)
}

/// `point_id,aggregate_score,best_subspace`.
pub fn write_aggregate_csv<W: Write>(m: &ScoreMatrix, data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point_id", "aggregate_score", "best_subspace"])?;
    for (i, id) in data.row_ids().iter().enumerate() {
        let best = if m.subspaces.is_empty() {
            String::new()
        } else {
            m.subspaces[m.best_subspace(i)].to_string()
        };
        w.write_record([id.as_str(), &fmt_real(m.aggregate[i]), &best])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Full matrix: `point_id` then one column per subspace, headed `i|j|k`.
pub fn write_matrix_csv<W: Write>(m: &ScoreMatrix, data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["point_id".to_string()];
    header.extend(m.subspaces.iter().map(Subspace::to_string));
    w.write_record(&header)?;
    for (i, id) in data.row_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.columns.iter().map(|c| fmt_real(c[i])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
