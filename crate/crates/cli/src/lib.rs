//! Pipeline runner behind the `dipole` binary: builds the target metric,
//! initializes with Isomap, runs the optimizer, scores the result and writes
//! the artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dipole::datasets::{format_real, read_rows, write_rows};
use dipole::evaluation::evaluate;
use dipole::geometry::{euclidean_distances, knn_geodesic};
use dipole::isomap::isomap_embed;
use dipole::optimizer::run;
use dipole::{
    Dataset, DatasetSpec, DipoleConfig, DipoleError, DistanceMatrix, Embedding, EvaluationParams, EvaluationReport,
    LossBreakdown,
};
use serde::{Deserialize, Serialize};

pub mod grid;
pub mod svg;

pub use grid::{cmd_grid, GridSpec};
pub use svg::{colors_from_rows, emit_svg};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] DipoleError),
    #[error("{0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for numerical failures, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(DipoleError::Numerical(_) | DipoleError::Consistency(_) | DipoleError::Degenerate(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Everything that determines an embedding run's numerical output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub dataset: DatasetSpec,
    /// Neighbor count of the graph whose geodesics define the target metric.
    pub m1: usize,
    /// Bridge disconnected neighbor graphs instead of failing.
    pub connect: bool,
    /// Target dimension.
    pub dim: usize,
    pub config: DipoleConfig,
    pub evaluation: EvaluationParams,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::SwissRollHole { n: 600, noise: 0.0, seed: 0 },
            m1: 5,
            connect: false,
            dim: 2,
            config: DipoleConfig::default(),
            evaluation: EvaluationParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub target_metric: f64,
    pub isomap: f64,
    pub optimize: f64,
    pub evaluate: f64,
    pub total: f64,
}

/// Plot settings carried by the manifest so a replay emits the same files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotOptions {
    pub svg: bool,
    /// CSV with one scalar or three RGB columns per point.
    pub color: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub params: EmbedParams,
    #[serde(default)]
    pub plot: PlotOptions,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub timing: StageTimings,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| CliError::Input(format!("cannot read manifest {}: {e}", path.as_ref().display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct PipelineOutput {
    pub target: DistanceMatrix,
    pub initial: Embedding,
    pub embedding: Embedding,
    pub trace: Vec<LossBreakdown>,
    pub report: EvaluationReport,
    pub timing: StageTimings,
}

fn seconds_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Geodesic distances on the `m1`-nearest-neighbor graph for clouds; a
/// supplied distance matrix is used as is.
pub fn target_metric(dataset: &Dataset, m1: usize, connect: bool) -> CliResult<DistanceMatrix> {
    Ok(match dataset {
        Dataset::Cloud(cloud) => knn_geodesic(&euclidean_distances(cloud), m1, connect)?,
        Dataset::Distance(dist) => dist.clone(),
    })
}

pub fn run_pipeline(params: &EmbedParams) -> CliResult<PipelineOutput> {
    let start = Instant::now();
    let mut timing = StageTimings::default();

    let t = Instant::now();
    let dataset = params.dataset.load()?;
    timing.load = seconds_since(t);

    let t = Instant::now();
    let target = target_metric(&dataset, params.m1, params.connect)?;
    timing.target_metric = seconds_since(t);

    params.config.validate(target.len())?;

    let t = Instant::now();
    let initial = isomap_embed(&target, params.dim)?;
    timing.isomap = seconds_since(t);

    let t = Instant::now();
    let state = run(initial.clone(), &target, &params.config)?;
    timing.optimize = seconds_since(t);

    let t = Instant::now();
    let report = evaluate(&target, &state.embedding.distances(), &params.evaluation)?;
    timing.evaluate = seconds_since(t);

    timing.total = seconds_since(start);
    Ok(PipelineOutput { target, initial, embedding: state.embedding, trace: state.trace, report, timing })
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let name = path.file_name().ok_or_else(|| CliError::Input(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn embedding_csv(embedding: &Embedding) -> CliResult<Vec<u8>> {
    let names: Vec<String> = (0..embedding.dim()).map(|a| format!("x{a}")).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut buf = Vec::new();
    write_rows(&mut buf, Some(&header), embedding.coords(), embedding.dim())?;
    Ok(buf)
}

pub fn trace_csv(trace: &[LossBreakdown], max_degree: usize) -> Vec<u8> {
    let mut out = String::from("step,total,topological,metric");
    for q in 0..=max_degree {
        out.push_str(&format!(",h{q}"));
    }
    out.push('\n');
    for (step, row) in trace.iter().enumerate() {
        out.push_str(&format!(
            "{step},{},{},{}",
            format_real(row.total),
            format_real(row.topological),
            format_real(row.metric)
        ));
        for q in 0..=max_degree {
            out.push(',');
            out.push_str(&format_real(row.per_degree.get(q).copied().unwrap_or(0.0)));
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn metrics_json(report: &EvaluationReport) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn load_embedding(path: &Path) -> CliResult<Embedding> {
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let rows = read_rows(file)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{} has no rows", path.display())));
    }
    let dim = rows[0].len();
    Ok(Embedding::new(rows.len(), dim, rows.concat())?)
}

pub fn load_colors(path: &Path) -> CliResult<Vec<[u8; 3]>> {
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    colors_from_rows(&read_rows(file)?)
}

/// Runs a pool capped at `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Input(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the full pipeline and writes `embedding.csv`, `trace.csv`,
/// `metrics.json`, `manifest.json` and optionally `embedding.svg` into `out`.
pub fn cmd_embed(
    params: &EmbedParams,
    plot: &PlotOptions,
    threads: Option<usize>,
    out: &Path,
) -> CliResult<RunManifest> {
    let colors = plot.color.as_deref().map(load_colors).transpose()?;
    if plot.svg && params.dim < 2 {
        return Err(CliError::Input("an SVG plot needs --dim of at least 2".into()));
    }
    let result = with_threads(threads, || run_pipeline(params))??;
    fs::create_dir_all(out)?;
    write_atomic(&out.join("embedding.csv"), &embedding_csv(&result.embedding)?)?;
    write_atomic(&out.join("trace.csv"), &trace_csv(&result.trace, params.config.max_degree))?;
    write_atomic(&out.join("metrics.json"), &metrics_json(&result.report)?)?;
    if plot.svg {
        let svg = emit_svg(&result.embedding, colors.as_deref())?;
        write_atomic(&out.join("embedding.svg"), svg.as_bytes())?;
    }
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        params: params.clone(),
        plot: plot.clone(),
        threads,
        timing: result.timing,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&out.join("manifest.json"), &bytes)?;
    Ok(manifest)
}

/// Scores an existing embedding against the target metric of `dataset`.
pub fn cmd_evaluate(
    dataset: &DatasetSpec,
    m1: usize,
    connect: bool,
    embedding_path: &Path,
    evaluation: &EvaluationParams,
    threads: Option<usize>,
) -> CliResult<EvaluationReport> {
    let embedding = load_embedding(embedding_path)?;
    let target = target_metric(&dataset.load()?, m1, connect)?;
    if embedding.len() != target.len() {
        return Err(CliError::Input(format!(
            "embedding has {} rows but the target metric has {} points",
            embedding.len(),
            target.len()
        )));
    }
    Ok(with_threads(threads, || evaluate(&target, &embedding.distances(), evaluation))??)
}
