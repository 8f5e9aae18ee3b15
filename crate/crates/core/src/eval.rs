//! ROC analysis and the experiment runner.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_real, load_csv, CsvOptions, Dataset, Subspace};
use crate::density::{local_loop_scores, lof_scores, loop_scores, LoopParams};
use crate::error::{Error, Result};
use crate::gloss::{gloss_with, aggregate_max, Normalisation, SubspaceSource};
use crate::search::{search_subspaces, SearchMode, SearchParams};
use crate::synth::{generate, implant_benchmark_outliers, minority_class_labels, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve with higher scores meaning "more outlying". Points with equal
/// scores enter together, giving a diagonal segment.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (pf, nf) = (pos as f64, neg as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]].total_cmp(&s) == Ordering::Equal {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / nf, tp as f64 / pf));
    }
    Ok(RocCurve {
        points,
        auc: auc / (pf * nf),
    })
}

/// `fpr,tpr`.
pub fn write_roc_csv<W: Write>(curve: &RocCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fpr", "tpr"])?;
    for &(f, t) in &curve.points {
        w.write_record([fmt_real(f), fmt_real(t)])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gloss,
    Hics,
    Lof,
    Loop,
    LocalLoop,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Gloss,
        Algorithm::Hics,
        Algorithm::Lof,
        Algorithm::Loop,
        Algorithm::LocalLoop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gloss => "gloss",
            Algorithm::Hics => "hics",
            Algorithm::Lof => "lof",
            Algorithm::Loop => "loop",
            Algorithm::LocalLoop => "local_loop",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gloss" => Ok(Algorithm::Gloss),
            "hics" => Ok(Algorithm::Hics),
            "lof" => Ok(Algorithm::Lof),
            "loop" => Ok(Algorithm::Loop),
            "local_loop" | "localloop" => Ok(Algorithm::LocalLoop),
            other => Err(Error::InvalidParameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Scorer run inside each subspace found by the HiCS search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HicsScorer {
    #[default]
    Lof,
    Loop,
}

/// Everything an algorithm needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmSettings {
    #[serde(rename = "loop")]
    pub loop_params: LoopParams,
    /// Search settings for GLOSS; HiCS uses the same values in its own mode.
    pub search: SearchParams,
    pub normalisation: Normalisation,
    pub hics_scorer: HicsScorer,
    /// Subspaces for GLOSS and Local-LoOP. When absent both run the same
    /// seeded search, so they score identical subspaces.
    pub subspaces: Option<Vec<Vec<usize>>>,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        AlgorithmSettings {
            loop_params: LoopParams::default(),
            search: SearchParams::default(),
            normalisation: Normalisation::PerSubspace,
            hics_scorer: HicsScorer::Lof,
            subspaces: None,
        }
    }
}

impl AlgorithmSettings {
    fn given_subspaces(&self, d: usize) -> Result<Option<Vec<Subspace>>> {
        self.subspaces
            .clone()
            .map(|raw| crate::data::parse_subspaces(raw, d))
            .transpose()
    }
}

/// Outlier scores of `algorithm` on `data`; `seed` drives any subspace search.
pub fn score_with(
    algorithm: Algorithm,
    data: &Dataset,
    settings: &AlgorithmSettings,
    seed: u64,
) -> Result<Vec<f64>> {
    let params = &settings.loop_params;
    let given = || settings.given_subspaces(data.n_features());
    match algorithm {
        Algorithm::Loop => Ok(loop_scores(data, params)?.into_vec()),
        Algorithm::Lof => lof_scores(data, params.k, params.metric),
        Algorithm::LocalLoop => {
            let subs = match given()? {
                Some(s) => s,
                None => search_subspaces(data, &settings.search.with_seed(seed))?.subspaces(),
            };
            Ok(local_loop_scores(data, &subs, params)?.into_vec())
        }
        Algorithm::Gloss => {
            let given = given()?;
            let search = settings.search.with_seed(seed);
            let source = match &given {
                Some(s) => SubspaceSource::Given(s),
                None => SubspaceSource::Search(&search),
            };
            Ok(gloss_with(data, params, source, settings.normalisation)?
                .aggregate
                .into_vec())
        }
        Algorithm::Hics => {
            let search = SearchParams {
                mode: SearchMode::Hics,
                seed,
                ..settings.search
            };
            let subs = search_subspaces(data, &search)?.subspaces();
            hics_scores(data, &subs, params, settings.hics_scorer)
        }
    }
}

/// Max over subspaces of a scorer run on each projection with its own
/// neighbourhoods.
pub fn hics_scores(
    data: &Dataset,
    subspaces: &[Subspace],
    params: &LoopParams,
    scorer: HicsScorer,
) -> Result<Vec<f64>> {
    if subspaces.is_empty() {
        return Err(Error::NoSubspaces);
    }
    match scorer {
        HicsScorer::Loop => Ok(local_loop_scores(data, subspaces, params)?.into_vec()),
        HicsScorer::Lof => {
            let columns = subspaces
                .iter()
                .map(|s| lof_scores(&data.project(s)?, params.k, params.metric))
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate_max(&columns, data.n_rows()).into_vec())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelProtocol {
    /// Use the label column of the file.
    #[default]
    Labels,
    /// Implant outliers into the data, using the class column for donors.
    Implant,
    /// Treat the least frequent class as outliers.
    Minority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Generated anew for every seed; the seed replaces `config.seed`.
    Synthetic { id: String, config: SynthConfig },
    Csv {
        id: String,
        path: PathBuf,
        #[serde(default)]
        protocol: LabelProtocol,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default = "default_class_column")]
        class_column: String,
        #[serde(default = "default_fraction")]
        fraction: f64,
        #[serde(default)]
        standardize: bool,
    },
}

fn default_label_column() -> String {
    "outlier".into()
}

fn default_class_column() -> String {
    "class".into()
}

fn default_fraction() -> f64 {
    0.1
}

impl DatasetSpec {
    pub fn id(&self) -> &str {
        match self {
            DatasetSpec::Synthetic { id, .. } | DatasetSpec::Csv { id, .. } => id,
        }
    }

    /// Labelled data for one seed. Relative CSV paths resolve against `base`.
    pub fn materialise(&self, seed: u64, base: &Path) -> Result<Dataset> {
        match self {
            DatasetSpec::Synthetic { config, .. } => Ok(generate(&SynthConfig {
                seed,
                ..config.clone()
            })?
            .data),
            DatasetSpec::Csv {
                path,
                protocol,
                label_column,
                class_column,
                fraction,
                standardize,
                ..
            } => {
                let full = base.join(path);
                let mut opts = CsvOptions::with_header();
                match protocol {
                    LabelProtocol::Labels => opts.label_column = Some(label_column.clone()),
                    _ => opts.class_column = Some(class_column.clone()),
                }
                let mut data = load_csv(&full, &opts)?;
                if *standardize {
                    data = data.standardize();
                }
                match protocol {
                    LabelProtocol::Labels => Ok(data),
                    LabelProtocol::Minority => {
                        let labels = minority_class_labels(&data)?;
                        data.with_labels(labels)
                    }
                    LabelProtocol::Implant => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        Ok(implant_benchmark_outliers(&data, *fraction, &mut rng)?.0)
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub datasets: Vec<DatasetSpec>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub settings: AlgorithmSettings,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub config_id: String,
    pub seed: u64,
    pub auc: f64,
    pub runtime_seconds: f64,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub algorithm: Option<Algorithm>,
    pub config_id: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Average {
    pub algorithm: Algorithm,
    pub config_id: String,
    pub runs: usize,
    pub auc: f64,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    /// Mean over seeds per (algorithm, config), in report order.
    pub fn averages(&self) -> Vec<Average> {
        let mut out: Vec<Average> = Vec::new();
        for c in &self.cells {
            match out
                .iter_mut()
                .find(|a| a.algorithm == c.algorithm && a.config_id == c.config_id)
            {
                Some(a) => {
                    a.runs += 1;
                    a.auc += c.auc;
                    a.runtime_seconds += c.runtime_seconds;
                }
                None => out.push(Average {
                    algorithm: c.algorithm,
                    config_id: c.config_id.clone(),
                    runs: 1,
                    auc: c.auc,
                    runtime_seconds: c.runtime_seconds,
                }),
            }
        }
        for a in &mut out {
            a.auc /= a.runs as f64;
            a.runtime_seconds /= a.runs as f64;
        }
        out
    }

    pub fn mean_auc(&self, algorithm: Algorithm, config_id: &str) -> Option<f64> {
        self.averages()
            .into_iter()
            .find(|a| a.algorithm == algorithm && a.config_id == config_id)
            .map(|a| a.auc)
    }

    /// `algorithm,config_id,seed,auc,runtime_seconds`; each group is followed
    /// by a row with seed `mean`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["algorithm", "config_id", "seed", "auc", "runtime_seconds"])?;
        for avg in self.averages() {
            for c in self
                .cells
                .iter()
                .filter(|c| c.algorithm == avg.algorithm && c.config_id == avg.config_id)
            {
                w.write_record([
                    c.algorithm.name(),
                    &c.config_id,
                    &c.seed.to_string(),
                    &fmt_real(c.auc),
                    &fmt_real(c.runtime_seconds),
                ])?;
            }
            w.write_record([
                avg.algorithm.name(),
                &avg.config_id,
                "mean",
                &fmt_real(avg.auc),
                &fmt_real(avg.runtime_seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// `algorithm,config_id,seed,error`; algorithm is empty when the dataset
    /// itself could not be prepared.
    pub fn write_failures_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["algorithm", "config_id", "seed", "error"])?;
        for f in &self.failures {
            w.write_record([
                f.algorithm.map_or("", Algorithm::name),
                &f.config_id,
                &f.seed.to_string(),
                &f.message,
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// Writes `report.csv`, `roc/<algorithm>_<config>_<seed>.csv` and, when
    /// something failed, `failures.csv` under `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let roc_dir = dir.join("roc");
        fs::create_dir_all(&roc_dir).map_err(|e| Error::io(&roc_dir, e))?;
        let create = |p: PathBuf| fs::File::create(&p).map_err(|e| Error::io(&p, e));
        self.write_csv(create(dir.join("report.csv"))?)?;
        for c in &self.cells {
            let name = format!("{}_{}_{}.csv", c.algorithm, c.config_id, c.seed);
            write_roc_csv(&c.roc, create(roc_dir.join(name))?)?;
        }
        if !self.failures.is_empty() {
            self.write_failures_csv(create(dir.join("failures.csv"))?)?;
        }
        Ok(())
    }
}

/// Runs every (dataset, seed, algorithm) cell. Failing cells are recorded and
/// the run continues. The runtime covers the scoring call only.
pub fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<ExperimentReport> {
    if config.algorithms.is_empty() || config.datasets.is_empty() || config.seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "experiment needs algorithms, datasets and seeds".into(),
        ));
    }
    let mut report = ExperimentReport::default();
    for spec in &config.datasets {
        for &seed in &config.seeds {
            let data = match spec.materialise(seed, base) {
                Ok(d) => d,
                Err(e) => {
                    report.failures.push(CellFailure {
                        algorithm: None,
                        config_id: spec.id().to_owned(),
                        seed,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            for &algorithm in &config.algorithms {
                match run_cell(algorithm, &data, &config.settings, seed) {
                    Ok((roc, runtime_seconds)) => report.cells.push(CellResult {
                        algorithm,
                        config_id: spec.id().to_owned(),
                        seed,
                        auc: roc.auc,
                        runtime_seconds,
                        roc,
                    }),
                    Err(e) => report.failures.push(CellFailure {
                        algorithm: Some(algorithm),
                        config_id: spec.id().to_owned(),
                        seed,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    report.cells.sort_by(|a, b| {
        (a.algorithm, &a.config_id, a.seed).cmp(&(b.algorithm, &b.config_id, b.seed))
    });
    Ok(report)
}

fn run_cell(
    algorithm: Algorithm,
    data: &Dataset,
    settings: &AlgorithmSettings,
    seed: u64,
) -> Result<(RocCurve, f64)> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::MissingColumn("outlier labels".into()))?;
    let start = Instant::now();
    let scores = score_with(algorithm, data, settings, seed)?;
    let runtime = start.elapsed().as_secs_f64();
    Ok((roc_auc(&scores, labels)?, runtime))
}
