use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dipole::optimizer::StepSchedule;
use dipole::{DatasetSpec, DipoleConfig, DipoleError, EvaluationParams};
use dipole_cli::{
    cmd_embed, cmd_evaluate, cmd_grid, metrics_json, write_atomic, CliError, CliResult, EmbedParams, GridSpec,
    PlotOptions, RunManifest,
};

#[derive(Parser)]
#[command(name = "dipole", version, about = "Topology-preserving embedding correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a dataset and write embedding, trace, metrics and manifest.
    Embed(EmbedArgs),
    /// Score an embedding CSV against a dataset's target metric.
    Evaluate(EvaluateArgs),
    /// Run every combination of a JSON hyperparameter grid.
    Grid(GridArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    SwissRollHole,
    SwissRoll,
    Circle,
    Torus,
}

#[derive(Args)]
struct SourceArgs {
    /// Synthetic dataset.
    #[arg(long, value_enum, conflicts_with_all = ["cloud", "distance"])]
    dataset: Option<Generator>,
    /// Point cloud CSV.
    #[arg(long, conflicts_with = "distance")]
    cloud: Option<PathBuf>,
    /// Distance matrix CSV.
    #[arg(long)]
    distance: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Circle radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Torus radii.
    #[arg(long, default_value_t = 2.0)]
    major: f64,
    #[arg(long, default_value_t = 1.0)]
    minor: f64,
    /// Neighbors in the graph defining geodesic target distances.
    #[arg(long, default_value_t = 5)]
    m1: usize,
    /// Bridge a disconnected neighbor graph.
    #[arg(long)]
    connect: bool,
}

impl SourceArgs {
    fn spec(&self, seed: u64) -> CliResult<DatasetSpec> {
        let (n, noise) = (self.n, self.noise);
        Ok(match (&self.dataset, &self.cloud, &self.distance) {
            (Some(Generator::SwissRollHole), _, _) => DatasetSpec::SwissRollHole { n, noise, seed },
            (Some(Generator::SwissRoll), _, _) => DatasetSpec::SwissRoll { n, noise, seed },
            (Some(Generator::Circle), _, _) => DatasetSpec::Circle { n, radius: self.radius, noise, seed },
            (Some(Generator::Torus), _, _) => {
                DatasetSpec::Torus { n, major: self.major, minor: self.minor, noise, seed }
            }
            (None, Some(path), _) => DatasetSpec::CsvCloud { path: path.clone() },
            (None, None, Some(path)) => DatasetSpec::CsvDistance { path: path.clone() },
            (None, None, None) => {
                return Err(CliError::Input("one of --dataset, --cloud or --distance is required".into()))
            }
        })
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Replay the run recorded in a manifest; other run flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    dim: Option<usize>,
    #[arg(long, required_unless_present = "manifest")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    m2: usize,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 2500)]
    steps: usize,
    /// Annealing constant of the step size.
    #[arg(long, default_value_t = 1000.0)]
    anneal: f64,
    /// Subsets per step.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 10_000)]
    ijk_samples: usize,
    #[arg(long, default_value_t = 256)]
    fps_size: usize,
    /// Also write embedding.svg.
    #[arg(long)]
    svg: bool,
    /// CSV of per-point colors for the plot (1 scalar or 3 RGB columns).
    #[arg(long)]
    color: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Embedding CSV, one point per row.
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    ijk_samples: usize,
    #[arg(long, default_value_t = 256)]
    fps_size: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for metrics.json; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// JSON grid file.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for grid.csv.
    #[arg(long)]
    out: PathBuf,
}

fn embed(args: EmbedArgs) -> CliResult<()> {
    let (params, plot, threads) = match &args.manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            (m.params, m.plot, args.threads.or(m.threads))
        }
        None => {
            let seed = args.seed.expect("required by clap");
            let params = EmbedParams {
                dataset: args.source.spec(seed)?,
                m1: args.source.m1,
                connect: args.source.connect,
                dim: args.dim.expect("required by clap"),
                config: DipoleConfig {
                    alpha: args.alpha,
                    k: args.k,
                    batch_size: args.batch,
                    p: args.p,
                    lr: args.lr,
                    steps: args.steps,
                    schedule: StepSchedule::Annealed { constant: args.anneal },
                    m2: args.m2,
                    seed,
                    ..DipoleConfig::default()
                },
                evaluation: EvaluationParams {
                    ijk_samples: args.ijk_samples,
                    ijk_seed: seed,
                    fps_size: args.fps_size,
                    fps_seed: seed,
                },
            };
            (params, PlotOptions { svg: args.svg, color: args.color.clone() }, args.threads)
        }
    };
    cmd_embed(&params, &plot, threads, &args.out)?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let evaluation = EvaluationParams {
        ijk_samples: args.ijk_samples,
        ijk_seed: args.seed,
        fps_size: args.fps_size,
        fps_seed: args.seed,
    };
    let dataset = args.source.spec(args.seed)?;
    let report =
        cmd_evaluate(&dataset, args.source.m1, args.source.connect, &args.embedding, &evaluation, args.threads)?;
    let bytes = metrics_json(&report)?;
    match args.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            write_atomic(&dir.join("metrics.json"), &bytes)?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn grid(args: GridArgs) -> CliResult<()> {
    let spec = GridSpec::load(&args.grid)?;
    let computed = cmd_grid(&spec, &args.out.join("grid.csv"), args.threads)?;
    eprintln!("computed {computed} of {} rows", spec.combinations().len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Embed(a) => embed(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Grid(a) => grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(DipoleError::Disconnected { .. }) = e {
                eprintln!("hint: pass --connect to bridge the components");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
