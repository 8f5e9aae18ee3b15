//! Bottom-up search for high-contrast subspaces.
//!
//! Contrast is a Monte-Carlo estimate of conditional dependence: pick one
//! feature of the candidate as the comparison feature, restrict every
//! conditioning feature to a random contiguous window of its sort order, and
//! compare the comparison feature's full marginal with its marginal inside
//! the resulting slice using the two-sample Kolmogorov-Smirnov statistic.
//! Window widths are chosen so that the expected slice keeps a fraction
//! `alpha` of the points. The contrast is the mean statistic over `M`
//! iterations.
//!
//! In [`SearchMode::Hics`] the conditioning features are the rest of the
//! candidate; in [`SearchMode::GlossGlobal`] they are every other feature of
//! the dataset.
//!
//! Candidates are grown one feature at a time, only ever appending a feature
//! larger than the current last one, and each level keeps its best
//! `candidate_cutoff` candidates for extension.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, Dataset, Subspace};
use crate::error::{Error, Result};

/// Draws per iteration before an empty slice makes the iteration count as
/// skipped.
const SLICE_ATTEMPTS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Condition on the other features of the candidate; starts from pairs.
    Hics,
    /// Condition on every other feature of the dataset; starts from single
    /// features.
    #[default]
    GlossGlobal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    /// Monte-Carlo iterations per candidate.
    pub monte_carlo: usize,
    /// Expected fraction of points kept in a slice.
    pub alpha: f64,
    pub candidate_cutoff: usize,
    pub max_subspaces: usize,
    /// Largest subspace dimensionality explored.
    pub level_cap: usize,
    pub mode: SearchMode,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            monte_carlo: 50,
            alpha: 0.1,
            candidate_cutoff: 400,
            max_subspaces: 100,
            level_cap: 5,
            mode: SearchMode::GlossGlobal,
            seed: 0,
        }
    }
}

impl SearchParams {
    pub fn hics() -> Self {
        SearchParams {
            mode: SearchMode::Hics,
            ..Default::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SearchParams { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.monte_carlo == 0 {
            return bad("monte_carlo must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.candidate_cutoff == 0 {
            return bad("candidate_cutoff must be at least 1");
        }
        if self.max_subspaces == 0 {
            return bad("max_subspaces must be at least 1");
        }
        if self.level_cap == 0 {
            return bad("level_cap must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastedSubspace {
    pub subspace: Subspace,
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelStats {
    pub dimensionality: usize,
    pub evaluated: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Best subspaces over all levels, by descending contrast.
    pub ranked: Vec<ContrastedSubspace>,
    pub levels: Vec<LevelStats>,
}

impl SearchOutcome {
    pub fn subspaces(&self) -> Vec<Subspace> {
        self.ranked.iter().map(|c| c.subspace.clone()).collect()
    }
}

/// Two-sample KS statistic `sup |F_a(x) - F_b(x)|` of two ascending samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    debug_assert!(a.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(b.windows(2).all(|w| w[0] <= w[1]));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the RNG used for one Monte-Carlo iteration on one candidate.
fn iteration_seed(seed: u64, features: &[usize], iteration: usize) -> u64 {
    let mut h = splitmix64(seed);
    for &f in features {
        h = splitmix64(h ^ f as u64);
    }
    splitmix64(h ^ (iteration as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Per-feature sort orders shared by all contrast evaluations on a dataset.
pub struct ContrastEstimator<'a> {
    data: &'a Dataset,
    params: SearchParams,
    order: Vec<Vec<usize>>,
    sorted: Vec<Vec<f64>>,
}

impl<'a> ContrastEstimator<'a> {
    pub fn new(data: &'a Dataset, params: &SearchParams) -> Result<Self> {
        params.validate()?;
        if data.n_features() < 2 {
            return Err(Error::InvalidParameter(
                "contrast needs at least two features".into(),
            ));
        }
        let n = data.n_rows();
        let mut order = Vec::with_capacity(data.n_features());
        let mut sorted = Vec::with_capacity(data.n_features());
        for j in 0..data.n_features() {
            let col = data.column(j);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            sorted.push(idx.iter().map(|&i| col[i]).collect());
            order.push(idx);
        }
        Ok(ContrastEstimator {
            data,
            params: *params,
            order,
            sorted,
        })
    }

    /// Mean KS statistic over the Monte-Carlo iterations. Iterations whose
    /// slice stays empty after all redraws are dropped from the mean; if all
    /// are dropped the contrast is 0.
    pub fn contrast(&self, sub: &Subspace) -> Result<f64> {
        let d = self.data.n_features();
        sub.check(d)?;
        if self.params.mode == SearchMode::Hics && sub.len() < 2 {
            return Err(Error::InvalidSubspace(
                "HiCS contrast needs at least two features".into(),
            ));
        }
        let n = self.data.n_rows();
        let features = sub.features();
        let mut mask = vec![true; n];
        let mut sample = Vec::with_capacity(n);
        let mut conditioning = Vec::with_capacity(d);
        let (mut total, mut used) = (0.0, 0usize);

        for it in 0..self.params.monte_carlo {
            let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(self.params.seed, features, it));
            let target = features[rng.random_range(0..features.len())];
            conditioning.clear();
            match self.params.mode {
                SearchMode::Hics => conditioning.extend(features.iter().filter(|&&f| f != target)),
                SearchMode::GlossGlobal => conditioning.extend((0..d).filter(|&f| f != target)),
            }
            let keep = self.params.alpha.powf(1.0 / conditioning.len() as f64);
            let width = ((n as f64 * keep).floor() as usize).clamp(1, n);

            for _ in 0..SLICE_ATTEMPTS {
                mask.fill(true);
                for &attr in &conditioning {
                    let start = rng.random_range(0..=n - width);
                    let ord = &self.order[attr];
                    for &i in ord[..start].iter().chain(&ord[start + width..]) {
                        mask[i] = false;
                    }
                }
                sample.clear();
                sample.extend(
                    (0..n)
                        .filter(|&i| mask[i])
                        .map(|i| self.data.value(i, target)),
                );
                if sample.is_empty() {
                    continue;
                }
                sample.sort_unstable_by(f64::total_cmp);
                total += ks_statistic(&self.sorted[target], &sample)?;
                used += 1;
                break;
            }
        }
        Ok(if used == 0 { 0.0 } else { total / used as f64 })
    }
}

/// Contrast of one subspace; see [`ContrastEstimator::contrast`].
pub fn contrast(data: &Dataset, sub: &Subspace, params: &SearchParams) -> Result<f64> {
    ContrastEstimator::new(data, params)?.contrast(sub)
}

fn by_contrast(a: &ContrastedSubspace, b: &ContrastedSubspace) -> Ordering {
    b.contrast
        .total_cmp(&a.contrast)
        .then_with(|| a.subspace.cmp(&b.subspace))
}

pub fn search_subspaces(data: &Dataset, params: &SearchParams) -> Result<SearchOutcome> {
    let est = ContrastEstimator::new(data, params)?;
    let d = data.n_features();

    let (mut dim, mut level): (usize, Vec<Subspace>) = match params.mode {
        SearchMode::Hics => (2, crate::density::all_pairs(d)),
        SearchMode::GlossGlobal => (
            1,
            (0..d)
                .map(|j| Subspace::new(vec![j]).expect("single feature"))
                .collect(),
        ),
    };

    let mut pool: Vec<ContrastedSubspace> = Vec::new();
    let mut levels = Vec::new();
    while !level.is_empty() && dim <= params.level_cap {
        let mut scored = level
            .into_par_iter()
            .map(|subspace| {
                let contrast = est.contrast(&subspace)?;
                Ok(ContrastedSubspace { subspace, contrast })
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(by_contrast);
        let evaluated = scored.len();
        pool.extend(scored.iter().cloned());
        scored.truncate(params.candidate_cutoff);
        levels.push(LevelStats {
            dimensionality: dim,
            evaluated,
            kept: scored.len(),
        });

        level = scored
            .iter()
            .flat_map(|c| {
                let last = *c.subspace.features().last().expect("non-empty");
                (last + 1..d).map(move |j| c.subspace.extended(j))
            })
            .collect();
        dim += 1;
    }

    pool.sort_by(by_contrast);
    pool.truncate(params.max_subspaces);
    Ok(SearchOutcome {
        ranked: pool,
        levels,
    })
}

/// `subspace,contrast` with the subspace written as `i|j|k`.
pub fn write_contrast_csv<W: Write>(ranked: &[ContrastedSubspace], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subspace", "contrast"])?;
    for c in ranked {
        w.write_record([c.subspace.to_string(), fmt_real(c.contrast)])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
