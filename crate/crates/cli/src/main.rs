//! `gloss` command-line tool: generate synthetic data, search subspaces,
//! score outliers and run evaluation matrices.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gloss::data::{read_subspaces_json, write_csv_named, write_subspaces_json, CsvOptions, Dataset};
use gloss::density::{local_loop_matrix, loop_scores, lof_scores, write_scores_csv, LoopParams};
use gloss::eval::{hics_scores, run_experiment, ExperimentConfig, HicsScorer};
use gloss::gloss::{gloss_with, write_aggregate_csv, write_matrix_csv, Normalisation, SubspaceSource};
use gloss::neighbors::{knn_table, write_table_csv, DistanceMetric};
use gloss::search::{search_subspaces, write_contrast_csv, SearchMode, SearchParams};
use gloss::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "gloss", version, about = "Local subspace outlier detection with global neighbourhoods")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian mixture with implanted subspace outliers.
    Generate(GenerateArgs),
    /// Rank subspaces by contrast and write them as JSON.
    Search(SearchArgs),
    /// Score every point of a dataset.
    Detect(DetectArgs),
    /// Run an experiment matrix and write AUC reports and ROC curves.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of points.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of features.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Number of mixture components.
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    /// Upper bound of the uniform range for centre coordinates.
    #[arg(long, default_value_t = 3.0)]
    mu_upper: f64,
    /// Per-feature variance of every component.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Number of implanted outliers.
    #[arg(long, default_value_t = 50)]
    outliers: usize,
    /// RNG seed; drawn at random and printed to stderr when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV. The configuration is echoed to `<output>.json`.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV with a header row.
    #[arg(short, long)]
    input: PathBuf,
    /// Outlier label column, excluded from the features when present.
    #[arg(long, default_value = "outlier")]
    label_column: String,
    /// Class or cluster column, excluded from the features when present.
    #[arg(long, default_value = "cluster")]
    class_column: String,
    /// Row identifier column, excluded from the features when present.
    #[arg(long, default_value = "id")]
    id_column: String,
    /// Rescale every feature to zero mean and unit variance first.
    #[arg(long)]
    standardize: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset> {
        let opts = CsvOptions {
            has_header: true,
            label_column: Some(self.label_column.clone()),
            class_column: Some(self.class_column.clone()),
            id_column: Some(self.id_column.clone()),
            optional_columns: true,
        };
        let data = gloss::data::load_csv(&self.input, &opts)?;
        Ok(if self.standardize { data.standardize() } else { data })
    }
}

#[derive(Args)]
struct ScoringArgs {
    /// Neighbourhood size.
    #[arg(short, long, default_value_t = 20)]
    k: usize,
    /// Significance multiplier of the probabilistic distance.
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    /// Distance metric.
    #[arg(long, default_value = "euclidean", value_parser = parse_metric)]
    metric: DistanceMetric,
}

impl ScoringArgs {
    fn params(&self) -> LoopParams {
        LoopParams {
            k: self.k,
            lambda: self.lambda,
            metric: self.metric,
        }
    }
}

fn parse_metric(s: &str) -> Result<DistanceMetric, String> {
    s.parse().map_err(|e: gloss::Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Condition on every other feature; starts from single features.
    Gloss,
    /// Condition on the rest of the candidate; starts from pairs.
    Hics,
}

#[derive(Args)]
struct SearchFlags {
    /// Monte-Carlo iterations per candidate.
    #[arg(long = "monte-carlo", short = 'M', default_value_t = 50)]
    monte_carlo: usize,
    /// Expected fraction of points kept in a slice.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Candidates kept per level.
    #[arg(long, default_value_t = 400)]
    cutoff: usize,
    /// Subspaces returned.
    #[arg(long, default_value_t = 100)]
    max_subspaces: usize,
    /// Largest subspace dimensionality explored.
    #[arg(long, default_value_t = 5)]
    level_cap: usize,
    /// RNG seed; drawn at random and printed to stderr when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

impl SearchFlags {
    fn params(&self, mode: SearchMode) -> SearchParams {
        SearchParams {
            monte_carlo: self.monte_carlo,
            alpha: self.alpha,
            candidate_cutoff: self.cutoff,
            max_subspaces: self.max_subspaces,
            level_cap: self.level_cap,
            mode,
            seed: resolve_seed(self.seed),
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    search: SearchFlags,
    /// Contrast definition.
    #[arg(long, value_enum, default_value = "gloss")]
    mode: ModeArg,
    /// Output JSON: array of 0-based feature index arrays, best first.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write `subspace,contrast` rows to this CSV.
    #[arg(long)]
    contrast: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Gloss,
    Loop,
    LocalLoop,
    Lof,
    Hics,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Lof,
    Loop,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    search: SearchFlags,
    /// Scoring algorithm.
    #[arg(long, value_enum, default_value = "gloss")]
    algo: AlgoArg,
    /// JSON array of subspaces to score. Skips the subspace search.
    #[arg(long)]
    subspaces: Option<PathBuf>,
    /// Normalise GLOSS factors over all subspaces together.
    #[arg(long)]
    pooled: bool,
    /// Scorer inside each HiCS subspace.
    #[arg(long, value_enum, default_value = "lof")]
    hics_scorer: InnerArg,
    /// Output scores CSV.
    #[arg(short, long)]
    output: PathBuf,
    /// Write the per-subspace score matrix (GLOSS, Local-LoOP) to this CSV.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Write the full-space neighbour table to this CSV.
    #[arg(long)]
    knn_dump: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Experiment matrix JSON. Relative dataset paths resolve against its
    /// directory.
    #[arg(long)]
    matrix: PathBuf,
    /// Directory for report.csv, roc/ and failures.csv.
    #[arg(short, long)]
    output: PathBuf,
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn run_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = SynthConfig {
        n: a.n,
        d: a.d,
        n_clusters: a.clusters,
        mu_upper: a.mu_upper,
        sigma2: a.sigma2,
        n_outliers: a.outliers,
        seed: resolve_seed(a.seed),
    };
    let synth = generate(&cfg)?;
    let mut w = create(&a.output)?;
    write_csv_named(&synth.data, &mut w, "outlier", "cluster")?;
    finish(w)?;
    let mut sidecar = a.output.clone().into_os_string();
    sidecar.push(".json");
    let mut w = create(Path::new(&sidecar))?;
    cfg.write_json(&mut w)?;
    writeln!(w)?;
    finish(w)
}

fn run_search(a: &SearchArgs) -> Result<()> {
    let data = a.input.load()?;
    let mode = match a.mode {
        ModeArg::Gloss => SearchMode::GlossGlobal,
        ModeArg::Hics => SearchMode::Hics,
    };
    let out = search_subspaces(&data, &a.search.params(mode))?;
    let mut w = create(&a.output)?;
    write_subspaces_json(&out.subspaces(), &mut w)?;
    finish(w)?;
    if let Some(path) = &a.contrast {
        let mut w = create(path)?;
        write_contrast_csv(&out.ranked, &mut w)?;
        finish(w)?;
    }
    Ok(())
}

fn run_detect(a: &DetectArgs) -> Result<()> {
    let data = a.input.load()?;
    let params = a.scoring.params();
    let given = a
        .subspaces
        .as_ref()
        .map(|p| read_subspaces_json(p, data.n_features()))
        .transpose()?;
    // an explicit subspace file wins; the search (and its seed) is skipped
    let subspaces = |mode| -> Result<Vec<_>> {
        match &given {
            Some(s) => Ok(s.clone()),
            None => Ok(search_subspaces(&data, &a.search.params(mode))?.subspaces()),
        }
    };

    if let Some(path) = &a.knn_dump {
        let table = knn_table(&data, params.k, params.metric)?;
        let mut w = create(path)?;
        write_table_csv(&table, &data, &mut w)?;
        finish(w)?;
    }

    let mut w = create(&a.output)?;
    match a.algo {
        AlgoArg::Gloss | AlgoArg::LocalLoop => {
            let subs = subspaces(SearchMode::GlossGlobal)?;
            let m = if a.algo == AlgoArg::Gloss {
                let norm = if a.pooled { Normalisation::Pooled } else { Normalisation::PerSubspace };
                gloss_with(&data, &params, SubspaceSource::Given(&subs), norm)?
            } else {
                local_loop_matrix(&data, &subs, &params)?
            };
            write_aggregate_csv(&m, &data, &mut w)?;
            if let Some(path) = &a.matrix {
                let mut mw = create(path)?;
                write_matrix_csv(&m, &data, &mut mw)?;
                finish(mw)?;
            }
        }
        AlgoArg::Loop => write_scores_csv(&loop_scores(&data, &params)?, &data, &mut w)?,
        AlgoArg::Lof => write_scores_csv(&lof_scores(&data, params.k, params.metric)?, &data, &mut w)?,
        AlgoArg::Hics => {
            let subs = subspaces(SearchMode::Hics)?;
            let inner = match a.hics_scorer {
                InnerArg::Lof => HicsScorer::Lof,
                InnerArg::Loop => HicsScorer::Loop,
            };
            write_scores_csv(&hics_scores(&data, &subs, &params, inner)?, &data, &mut w)?;
        }
    }
    finish(w)
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.matrix)?;
    let base = a.matrix.parent().unwrap_or(Path::new("."));
    let report = run_experiment(&cfg, base)?;
    report.write_to_dir(&a.output)?;
    for avg in report.averages() {
        eprintln!(
            "{:<10} {:<16} runs={:<3} auc={:.4} runtime={:.3}s",
            avg.algorithm.name(),
            avg.config_id,
            avg.runs,
            avg.auc,
            avg.runtime_seconds
        );
    }
    for f in &report.failures {
        eprintln!(
            "failed: {} {} seed {}: {}",
            f.algorithm.map_or("-", |a| a.name()),
            f.config_id,
            f.seed,
            f.message
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Search(a) => run_search(a),
        Command::Detect(a) => run_detect(a),
        Command::Evaluate(a) => run_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
