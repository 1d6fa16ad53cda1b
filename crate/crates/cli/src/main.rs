use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sleap_core::analysis::{
    ensemble_error, self_distance_bound, speedup_rows, write_errors_csv, write_speedup_csv,
    write_trajectories_csv, AnalysisError, Ensemble, EnsembleSpec, DEFAULT_BINS,
    DEFAULT_GRID_POINTS,
};
use sleap_core::builtin::BuiltinModel;
use sleap_core::model::{parse_network, ReactionNetwork};
use sleap_core::sampling::RngStream;
use sleap_core::solvers::{run_trajectory, uniform_grid, SolverError, SolverKind};
use sleap_core::stepping::SolverConfig;
use sleap_core::validate::{run_all, Fault, ValidateOptions};

/// Offset between the seed of a tested ensemble and its SSA reference.
const REFERENCE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Parser)]
#[command(name = "sleap", version, about = "Stochastic simulation of reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Compare leaping methods against an SSA reference ensemble.
    Compare(CompareArgs),
    /// Run the built-in statistical property suites.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Built-in model id or `file:<path>`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, env = "SLEAP_SEED", default_value_t = 1)]
    seed: u64,
    /// Critical-reaction threshold N_c.
    #[arg(long, default_value_t = 10)]
    nc: u64,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    /// Partial-equilibrium tolerance.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 10_000)]
    reorder_period: u64,
    #[arg(long)]
    no_ssa_fallback: bool,
    #[arg(long)]
    negative_control: bool,
    /// Comma-separated species to report.
    #[arg(long, value_delimiter = ',')]
    track: Option<Vec<String>>,
    /// Worker threads for ensembles.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "s")]
    method: SolverKind,
    #[arg(long, default_value_t = 0.03)]
    eps: f64,
    /// Number of trajectories.
    #[arg(long, default_value_t = 1)]
    ns: usize,
    /// Directory for `trajectories.csv`; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "tau,r,s")]
    methods: Vec<SolverKind>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.03,0.01")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    ns: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Smaller samples and looser thresholds.
    #[arg(long)]
    quick: bool,
    #[arg(long, env = "SLEAP_SEED", default_value_t = 2024)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Solver(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(msg) => Failure::Config(msg),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Solver { index, source } => match source {
                SolverError::InvalidConfig(msg) => Failure::Config(msg),
                other => Failure::Solver(format!("trajectory {index}: {other}")),
            },
            AnalysisError::Io(e) => Failure::Other(e.into()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn load_model(spec: &str) -> Result<(ReactionNetwork, Option<BuiltinModel>), Failure> {
    if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read model file {path}: {e}")))?;
        let net = parse_network(&text).map_err(|e| Failure::Config(format!("{path}: {e}")))?;
        return Ok((net, None));
    }
    let model: BuiltinModel = spec.parse().map_err(|_| {
        let ids: Vec<&str> = BuiltinModel::ALL.iter().map(|m| m.id()).collect();
        Failure::Config(format!(
            "unknown model `{spec}` (built-in: {}; or file:<path>)",
            ids.join(", ")
        ))
    })?;
    Ok((model.network(), Some(model)))
}

fn config(common: &Common, eps: f64) -> Result<SolverConfig, Failure> {
    let cfg = SolverConfig {
        n_critical: common.nc,
        theta: common.theta,
        delta: common.delta,
        reorder_period: common.reorder_period,
        ssa_fallback: !common.no_ssa_fallback,
        negative_control: common.negative_control,
        ..SolverConfig::default().with_epsilon(eps)
    };
    cfg.validate().map_err(Failure::Config)?;
    if !(common.t_end > 0.0 && common.t_end.is_finite()) {
        return Err(Failure::Config(format!(
            "--t-end must be positive, got {}",
            common.t_end
        )));
    }
    Ok(cfg)
}

/// Species indices to report: `--track`, else the model's default set.
fn tracked(
    net: &ReactionNetwork,
    common: &Common,
    builtin: Option<BuiltinModel>,
) -> Result<Option<Vec<usize>>, Failure> {
    let names: Vec<String> = match (&common.track, builtin.and_then(|m| m.tracked_species())) {
        (Some(names), _) => names.clone(),
        (None, Some(defaults)) => defaults.iter().map(|s| s.to_string()).collect(),
        (None, None) => return Ok(None),
    };
    names
        .iter()
        .map(|n| {
            net.species_index(n)
                .ok_or_else(|| Failure::Config(format!("unknown species `{n}` in --track")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn jobs(common: &Common) -> usize {
    common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let (net, builtin) = load_model(&args.common.model)?;
    let cfg = config(&args.common, args.eps)?;
    if args.ns == 0 {
        return Err(Failure::Config("--ns must be at least 1".into()));
    }
    let species = match &args.common.track {
        Some(_) => tracked(&net, &args.common, builtin)?,
        None => None,
    };
    let t_end = args.common.t_end;
    let grid = uniform_grid(t_end, DEFAULT_GRID_POINTS);
    let runs = if args.ns == 1 {
        let mut rng = RngStream::new(args.common.seed, 0);
        vec![run_trajectory(&net, args.method, &cfg, &mut rng, t_end, &grid)?.states]
    } else {
        let spec = EnsembleSpec {
            grid: grid.clone(),
            ..EnsembleSpec::new(args.method, cfg, t_end, args.common.seed).with_trajectories(args.ns)
        };
        Ensemble::run(&net, &spec, jobs(&args.common))?.states
    };
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("trajectories.csv");
            let file = BufWriter::new(File::create(&path)?);
            write_trajectories_csv(file, &net, species.as_deref(), &grid, &runs)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = io::stdout().lock();
            write_trajectories_csv(BufWriter::new(stdout), &net, species.as_deref(), &grid, &runs)?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let (net, builtin) = load_model(&args.common.model)?;
    let species = tracked(&net, &args.common, builtin)?;
    let names: Option<Vec<String>> = species
        .as_ref()
        .map(|idx| idx.iter().map(|&i| net.species_names()[i].clone()).collect());
    if args.eps.is_empty() || args.methods.is_empty() {
        return Err(Failure::Config("need at least one method and one epsilon".into()));
    }
    let t_end = args.common.t_end;
    let seed = args.common.seed;
    let jobs = jobs(&args.common);
    let bound = self_distance_bound(DEFAULT_BINS, args.ns);
    let reference_cfg = config(&args.common, args.eps[0])?;
    let reference_spec = EnsembleSpec::new(
        SolverKind::Ssa,
        reference_cfg,
        t_end,
        seed.wrapping_add(REFERENCE_SEED_OFFSET),
    )
    .with_trajectories(args.ns);
    reference_spec.validate()?;
    eprintln!("running SSA reference: {} trajectories", args.ns);
    let reference = Ensemble::run(&net, &reference_spec, jobs)?;
    println!("self-distance bound (K={DEFAULT_BINS}, N_s={}): {bound:.4}", args.ns);

    for &eps in &args.eps {
        let cfg = config(&args.common, eps)?;
        let dir = args.out.join(format!("eps_{eps}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut ensembles = vec![];
        for &kind in args.methods.iter().filter(|&&k| k != SolverKind::Ssa) {
            let spec = EnsembleSpec::new(kind, cfg.clone(), t_end, seed).with_trajectories(args.ns);
            let ensemble = Ensemble::run(&net, &spec, jobs)?;
            let report = ensemble_error(&net, &ensemble, &reference, names.as_deref(), DEFAULT_BINS)?;
            let method_dir = dir.join(kind.name());
            fs::create_dir_all(&method_dir)?;
            let mut out = create(&method_dir.join("errors.csv"))?;
            write_errors_csv(&mut out, &report)?;
            out.flush()?;
            println!(
                "eps {eps} {:<12} mean error {:.4} (bound {:.4})  mean steps {:.1}",
                kind.name(),
                report.mean,
                report.self_distance,
                ensemble.mean_steps()
            );
            ensembles.push(ensemble);
        }
        let mut all = vec![&reference];
        all.extend(ensembles.iter());
        let rows = speedup_rows(&all);
        let mut out = create(&dir.join("speedup.csv"))?;
        write_speedup_csv(&mut out, &rows)?;
        out.flush()?;
        for r in rows.iter().skip(1) {
            println!(
                "eps {eps} {:<12} speed-up over SSA {:.2}",
                r.kind.name(),
                r.speedup
            );
        }
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<bool, Failure> {
    let fault = match args.inject_fault.as_deref() {
        None => None,
        Some("poisson") => Some(Fault::PoissonBias),
        Some(other) => return Err(Failure::Config(format!("unknown fault `{other}`"))),
    };
    let opts = ValidateOptions {
        quick: args.quick,
        seed: args.seed,
        fault,
    };
    let reports = run_all(&opts);
    for r in &reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status}  {}: {}", r.name, r.detail);
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args).map(|_| true),
        Command::Compare(args) => compare(args).map(|_| true),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver aborted: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
