use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fourier_collocation::experiment::{
    run_indexset_study, run_phase_transition, run_sweep, trial_solution, trial_system, write_rows_csv,
    write_table, EtaPolicy, ExperimentConfig, PhaseConfig, SolutionChoice,
};
use fourier_collocation::index_set::{largest_order_within_budget, IndexSet};
use fourier_collocation::problem::{resolve_coefficient, ForcingMode, DEFAULT_FD_STEP};
use fourier_collocation::recovery::Method;
use fourier_collocation::riesz::{riesz_report, TailNorms};
use fourier_collocation::{Error, Result};

#[derive(Parser)]
#[command(name = "cfc", version, about = "Compressive Fourier collocation experiments")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path (file or directory, depending on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON or TOML configuration; flags given explicitly override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate a hyperbolic cross.
    Indexset {
        #[arg(long)]
        dim: usize,
        #[arg(long, conflicts_with = "budget")]
        order: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Gram spectrum and analytic Riesz constants as JSON.
    Riesz {
        #[arg(long, default_value = "a2")]
        coefficient: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        order: u64,
        /// Number of retained nonconstant terms for the tail split.
        #[arg(long)]
        terms: Option<usize>,
        /// Tail norms `h1,l2,linf,grad_linf_sum`; estimated when absent.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        tail: Option<Vec<f64>>,
    },
    /// Error versus number of collocation points.
    Sweep(SweepArgs),
    /// Success rate of OMP versus number of collocation points.
    Phase(PhaseArgs),
    /// Sweeps over several hyperbolic-cross orders.
    IndexsetStudy {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        orders: Vec<u64>,
    },
    /// Write A, b and the collocation points of one system as CSV.
    DumpSystem {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Rhs {
    Analytic,
    Fd6,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    order: Option<u64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    coefficient: Option<String>,
    /// u1, u2, u3 or planted.
    #[arg(long)]
    solution: Option<SolutionChoice>,
    #[arg(long)]
    sparsity: Option<usize>,
    /// Repeat or separate by commas.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    m_grid: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    rhs: Option<Rhs>,
    #[arg(long)]
    fd_step: Option<f64>,
    /// `oracle` or a nonnegative number.
    #[arg(long)]
    eta: Option<EtaPolicy>,
    #[arg(long)]
    omp_iters: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    error_samples: Option<usize>,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long)]
    order: Option<u64>,
    #[arg(long)]
    coefficient: Option<String>,
    #[arg(long, value_delimiter = ',')]
    q: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m_grid: Vec<usize>,
    #[arg(long)]
    runs: Option<usize>,
}

fn sweep_config(cli: &Cli, a: &SweepArgs) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.config.is_none() || cli.seed != 0 {
        c.seed = cli.seed;
    }
    if let Some(v) = a.dim {
        c.dim = v;
    }
    if let Some(v) = a.order {
        c.order = Some(v);
        c.budget = None;
    }
    if let Some(v) = a.budget {
        c.budget = Some(v);
        if a.order.is_none() {
            c.order = None;
        }
    }
    if let Some(v) = &a.coefficient {
        c.coefficient = v.clone();
    }
    if let Some(v) = a.solution {
        c.solution = v;
    }
    if let Some(v) = a.sparsity {
        c.sparsity = v;
    }
    if !a.method.is_empty() {
        c.methods = a.method.clone();
    }
    if !a.m_grid.is_empty() {
        c.m_grid = a.m_grid.clone();
    }
    if let Some(v) = a.trials {
        c.trials = v;
    }
    match (a.rhs, a.fd_step) {
        (Some(Rhs::Analytic), _) => c.rhs = ForcingMode::Analytic,
        (Some(Rhs::Fd6), h) => c.rhs = ForcingMode::Fd6 { h: h.unwrap_or(DEFAULT_FD_STEP) },
        (None, Some(h)) => c.rhs = ForcingMode::Fd6 { h },
        (None, None) => {}
    }
    if let Some(v) = a.eta {
        c.eta = v;
    }
    if let Some(v) = a.omp_iters {
        c.omp_iterations = Some(v);
    }
    if let Some(v) = a.max_iters {
        c.qcbp.max_iterations = v;
    }
    if let Some(v) = a.tol {
        c.qcbp.tolerance = v;
    }
    if let Some(v) = a.error_samples {
        c.error_samples = Some(v);
    }
    if let Some(p) = &cli.out {
        c.out = Some(p.clone());
    }
    c.validate()?;
    Ok(c)
}

fn emit<T: serde::Serialize>(out: &Option<PathBuf>, rows: &[T], config: &impl serde::Serialize, hash: &str) -> Result<()> {
    match out {
        Some(p) => write_table(p, rows, config, hash),
        None => write_rows_csv(rows, std::io::stdout().lock()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Indexset { dim, order, budget } => {
            let order = match (order, budget) {
                (Some(n), _) => *n,
                (None, Some(b)) => largest_order_within_budget(*dim, *b)?,
                (None, None) => return Err(Error::InvalidArgument("give --order or --budget".into())),
            };
            let set = IndexSet::hyperbolic_cross(*dim, order)?;
            eprintln!("d = {dim}, n = {order}, |Λ| = {}", set.len());
            match &cli.out {
                Some(p) => set.write_csv(std::fs::File::create(p)?)?,
                None => set.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Riesz {
            coefficient,
            dim,
            order,
            terms,
            tail,
        } => {
            let a = resolve_coefficient(coefficient, *dim)?;
            let set = IndexSet::hyperbolic_cross(*dim, *order)?;
            let tail = tail.as_ref().map(|v| TailNorms {
                h1_seminorm: v[0],
                l2: v[1],
                linf: v[2],
                grad_linf_sum: v[3],
            });
            let report = riesz_report(&a, &set, *terms, tail, cli.seed)?;
            let json = serde_json::to_string_pretty(&report)?;
            match &cli.out {
                Some(p) => std::fs::write(p, json)?,
                None => println!("{json}"),
            }
        }
        Command::Sweep(args) => {
            let cfg = sweep_config(cli, args)?;
            let r = run_sweep(&cfg)?;
            emit(&cfg.out, &r.rows, &r.config, &r.config_hash)?;
        }
        Command::IndexsetStudy { sweep, orders } => {
            let cfg = sweep_config(cli, sweep)?;
            let results = run_indexset_study(&cfg, orders)?;
            let rows: Vec<_> = results.iter().flat_map(|r| r.rows.clone()).collect();
            emit(&cfg.out, &rows, &cfg, &cfg.hash())?;
        }
        Command::Phase(args) => {
            let mut c = match &cli.config {
                Some(p) => PhaseConfig::from_file(p)?,
                None => PhaseConfig::default(),
            };
            if cli.config.is_none() || cli.seed != 0 {
                c.seed = cli.seed;
            }
            if !args.dims.is_empty() {
                c.dims = args.dims.clone();
            }
            if let Some(v) = args.order {
                c.order = v;
            }
            if let Some(v) = &args.coefficient {
                c.coefficient = v.clone();
            }
            if !args.q.is_empty() {
                c.q_values = args.q.clone();
            }
            if !args.m_grid.is_empty() {
                c.m_grid = args.m_grid.clone();
            }
            if let Some(v) = args.runs {
                c.runs = v;
            }
            if let Some(p) = &cli.out {
                c.out = Some(p.clone());
            }
            let rows = run_phase_transition(&c)?;
            emit(&c.out, &rows, &c, &c.hash())?;
        }
        Command::DumpSystem { sweep, m, trial } => {
            let cfg = sweep_config(cli, sweep)?;
            let dir = cfg
                .out
                .clone()
                .ok_or_else(|| Error::InvalidArgument("dump-system needs --out <directory>".into()))?;
            std::fs::create_dir_all(&dir)?;
            let set = IndexSet::hyperbolic_cross(cfg.dim, cfg.resolved_order()?)?;
            let a = resolve_coefficient(&cfg.coefficient, cfg.dim)?;
            let u = trial_solution(&cfg, &set, *trial)?;
            let sys = trial_system(&cfg, &a, &u, &set, *m, *trial)?;
            sys.write_csv(&dir.join("matrix.csv"), &dir.join("rhs.csv"))?;
            set.write_csv(std::fs::File::create(dir.join("indices.csv"))?)?;
            let mut w = csv::Writer::from_path(dir.join("points.csv"))?;
            for p in &sys.points {
                w.write_record(p.coords().iter().map(|v| format!("{v:e}")))?;
            }
            w.flush()?;
            let sidecar = serde_json::json!({ "config": cfg, "config_hash": cfg.hash(), "m": m, "trial": trial });
            std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&sidecar)?)?;
            eprintln!("wrote {}×{} system to {}", sys.rows(), sys.cols(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
