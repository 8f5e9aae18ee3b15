//! Synthetic Gaussian mixtures with implanted subspace outliers, and outlier
//! implantation into labelled benchmark data.
//!
//! All randomness for a synthetic dataset derives from `SynthConfig::seed`
//! through separate ChaCha20 streams for cluster centres, cluster assignment,
//! Gaussian noise and implants, so changing e.g. `n_outliers` leaves the clean
//! mixture untouched.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Subspace};
use crate::error::{Error, Result};

const STREAM_CENTRES: u64 = 1;
const STREAM_ASSIGNMENT: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_IMPLANTS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub n_clusters: usize,
    /// Centre coordinates are drawn uniformly from `[0, mu_upper]`.
    pub mu_upper: f64,
    pub sigma2: f64,
    pub n_outliers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            d: 10,
            n_clusters: 3,
            mu_upper: 3.0,
            sigma2: 1.0,
            n_outliers: 50,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_outliers >= self.n {
            return bad("n_outliers must be smaller than n");
        }
        if self.n_clusters < 2 {
            return bad("need at least two clusters");
        }
        if self.d < 2 {
            return bad("need at least two dimensions");
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2 must be positive");
        }
        if !(self.mu_upper >= 0.0 && self.mu_upper.is_finite()) {
            return bad("mu_upper must be non-negative");
        }
        Ok(())
    }

    fn stream(&self, label: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(label);
        rng
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// A clean mixture before implantation.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub data: Dataset,
    pub assignment: Vec<usize>,
    /// `centres[c][j]`.
    pub centres: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Implant {
    pub row: usize,
    pub subspace: Subspace,
    /// Cluster (synthetic) or donor row (benchmark) the values came from.
    pub source: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Labelled data with the cluster id as class column.
    pub data: Dataset,
    pub assignment: Vec<usize>,
    pub centres: Vec<Vec<f64>>,
    pub implants: Vec<Implant>,
}

pub fn generate_mixture(cfg: &SynthConfig) -> Result<Mixture> {
    cfg.validate()?;
    let mut rng = cfg.stream(STREAM_CENTRES);
    let centres: Vec<Vec<f64>> = (0..cfg.n_clusters)
        .map(|_| (0..cfg.d).map(|_| rng.random::<f64>() * cfg.mu_upper).collect())
        .collect();

    let mut rng = cfg.stream(STREAM_ASSIGNMENT);
    let assignment: Vec<usize> = (0..cfg.n)
        .map(|_| rng.random_range(0..cfg.n_clusters))
        .collect();

    let mut rng = cfg.stream(STREAM_NOISE);
    let noise = unit_normal();
    let sd = cfg.sigma2.sqrt();
    let mut values = Vec::with_capacity(cfg.n * cfg.d);
    for &c in &assignment {
        for mu in &centres[c] {
            values.push(mu + sd * noise.sample(&mut rng));
        }
    }
    let data = Dataset::from_row_major(cfg.n, cfg.d, values)?;
    Ok(Mixture {
        data,
        assignment,
        centres,
    })
}

fn unit_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Largest implant subspace size for `d` features: `max(2, floor(0.1 d))`,
/// never more than `d`.
pub fn max_implant_size(d: usize) -> usize {
    (d / 10).max(2).min(d)
}

fn draw_subspace<R: Rng>(d: usize, rng: &mut R) -> Subspace {
    let size = rng.random_range(2.min(d)..=max_implant_size(d));
    Subspace::new(sample(rng, d, size).into_vec()).expect("distinct features")
}

/// Moves `n_outliers` random points of the mixture onto a foreign cluster in
/// a random subspace, and labels exactly those points.
pub fn implant_synthetic_outliers(mixture: Mixture, cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let Mixture {
        data,
        assignment,
        centres,
    } = mixture;
    let (n, d) = (data.n_rows(), data.n_features());
    if assignment.len() != n || centres.len() < 2 {
        return Err(Error::InvalidParameter(
            "mixture needs one assignment per row and at least two clusters".into(),
        ));
    }
    let mut rng = cfg.stream(STREAM_IMPLANTS);
    let noise = unit_normal();
    let sd = cfg.sigma2.sqrt();
    let mut values = data.values().to_vec();
    let mut labels = vec![false; n];
    let mut rows = sample(&mut rng, n, cfg.n_outliers).into_vec();
    rows.sort_unstable();

    let mut implants = Vec::with_capacity(rows.len());
    for row in rows {
        let subspace = draw_subspace(d, &mut rng);
        let own = assignment[row];
        let mut target = rng.random_range(0..centres.len() - 1);
        if target >= own {
            target += 1;
        }
        for &j in subspace.features() {
            values[row * d + j] = centres[target][j] + sd * noise.sample(&mut rng);
        }
        labels[row] = true;
        implants.push(Implant {
            row,
            subspace,
            source: target,
        });
    }

    let data = data
        .replace_values(values)
        .with_labels(labels)?
        .with_class_column(assignment.iter().map(usize::to_string).collect())?;
    Ok(SyntheticData {
        data,
        assignment,
        centres,
        implants,
    })
}

/// Mixture plus implants for `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticData> {
    implant_synthetic_outliers(generate_mixture(cfg)?, cfg)
}

/// Configuration of the small hidden-outlier scenario: six features, three
/// well-spread clusters and a single implanted point.
pub fn hidden_outlier_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n: 300,
        d: 6,
        n_clusters: 3,
        mu_upper: 10.0,
        sigma2: 1.0,
        n_outliers: 1,
        seed,
    }
}

/// The three disjoint feature pairs of the hidden-outlier scenario.
pub fn hidden_outlier_subspaces() -> Vec<Subspace> {
    (0..3)
        .map(|p| Subspace::new(vec![2 * p, 2 * p + 1]).expect("valid pair"))
        .collect()
}

/// Minimum distance, in standard deviations, between the own and the foreign
/// centre on the pair chosen for the hidden outlier.
const HIDDEN_SEPARATION: f64 = 4.0;

/// Six-dimensional mixture where one point is moved to a foreign cluster on
/// exactly one of the pairs `{0,1}`, `{2,3}`, `{4,5}` and stays with its own
/// cluster on the other four features. The pair and foreign cluster are drawn
/// among those whose centres lie at least four standard deviations apart on
/// the pair (or the best separated one if none does).
pub fn hidden_outlier_fixture(seed: u64) -> Result<SyntheticData> {
    let cfg = hidden_outlier_config(seed);
    let mixture = generate_mixture(&cfg)?;
    let mut rng = cfg.stream(STREAM_IMPLANTS);
    let noise = unit_normal();
    let (n, d) = (cfg.n, cfg.d);
    let row = rng.random_range(0..n);
    let own = mixture.assignment[row];
    let pairs = hidden_outlier_subspaces();
    let separation = |pair: &Subspace, c: usize| {
        pair.features()
            .iter()
            .map(|&j| (mixture.centres[own][j] - mixture.centres[c][j]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    // (pair, foreign cluster) combinations where the move is visible
    let mut moves: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..cfg.n_clusters).filter(|&c| c != own).map(move |c| (p, c)))
        .collect();
    let visible: Vec<(usize, usize)> = moves
        .iter()
        .copied()
        .filter(|&(p, c)| separation(&pairs[p], c) >= HIDDEN_SEPARATION * cfg.sigma2.sqrt())
        .collect();
    if visible.is_empty() {
        moves.sort_by(|a, b| separation(&pairs[b.0], b.1).total_cmp(&separation(&pairs[a.0], a.1)));
        moves.truncate(1);
    } else {
        moves = visible;
    }
    let (p, target) = moves[rng.random_range(0..moves.len())];
    let subspace = pairs[p].clone();
    let mut values = mixture.data.values().to_vec();
    for &j in subspace.features() {
        values[row * d + j] = mixture.centres[target][j] + cfg.sigma2.sqrt() * noise.sample(&mut rng);
    }
    let mut labels = vec![false; n];
    labels[row] = true;
    let data = mixture
        .data
        .replace_values(values)
        .with_labels(labels)?
        .with_class_column(mixture.assignment.iter().map(usize::to_string).collect())?;
    Ok(SyntheticData {
        data,
        assignment: mixture.assignment,
        centres: mixture.centres,
        implants: vec![Implant {
            row,
            subspace,
            source: target,
        }],
    })
}

/// Number of points a benchmark implantation of `fraction` touches.
pub fn implant_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).floor() as usize
}

/// Replaces a random subspace of `floor(fraction * n)` random points with the
/// values of a donor point of a different class. Donors are read from the
/// unmodified input, so an implanted point can still serve as a donor.
pub fn implant_benchmark_outliers<R: Rng>(
    data: &Dataset,
    fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Vec<Implant>)> {
    let classes = data.class_column().ok_or(Error::MissingClassColumn)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter("fraction must lie in (0, 1)".into()));
    }
    let (n, d) = (data.n_rows(), data.n_features());
    let m = implant_count(n, fraction);
    if m == 0 {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} of {n} rows implants nothing"
        )));
    }
    if classes.iter().all(|c| *c == classes[0]) {
        return Err(Error::SingleClass);
    }

    let original = data.values();
    let mut values = original.to_vec();
    let mut labels = vec![false; n];
    let mut rows = sample(rng, n, m).into_vec();
    rows.sort_unstable();
    let mut implants = Vec::with_capacity(m);
    let mut donors = Vec::with_capacity(n);
    for row in rows {
        donors.clear();
        donors.extend((0..n).filter(|&i| classes[i] != classes[row]));
        let donor = donors[rng.random_range(0..donors.len())];
        let subspace = draw_subspace(d, rng);
        for &j in subspace.features() {
            values[row * d + j] = original[donor * d + j];
        }
        labels[row] = true;
        implants.push(Implant {
            row,
            subspace,
            source: donor,
        });
    }
    Ok((data.replace_values(values).with_labels(labels)?, implants))
}

/// Labels the rows of the least frequent class; among equally rare classes
/// the one appearing first wins.
pub fn minority_class_labels(data: &Dataset) -> Result<Vec<bool>> {
    let classes = data.class_column().ok_or(Error::MissingClassColumn)?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut seen: Vec<&str> = Vec::new();
    for c in classes {
        let e = counts.entry(c.as_str()).or_insert(0);
        if *e == 0 {
            seen.push(c);
        }
        *e += 1;
    }
    let minority = seen
        .iter()
        .copied()
        .min_by_key(|c| counts[c])
        .ok_or(Error::MissingClassColumn)?;
    Ok(classes.iter().map(|c| c == minority).collect())
}
