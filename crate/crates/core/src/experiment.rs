//! Experiment driver: error-versus-`m` sweeps, index-set studies and phase
//! transitions, written as CSV tables with a JSON sidecar.
//!
//! Every trial draws from its own random stream, derived from the master
//! seed and the trial coordinates, so results do not depend on scheduling.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::{assemble_from_solution, sample_points_with, CollocationSystem};
use crate::error::{Error, Result};
use crate::evaluation::{geometric_stats, l2_error_parts, SUCCESS_THRESHOLD};
use crate::index_set::{largest_order_within_budget, IndexSet};
use crate::problem::{
    make_nonsparse_solution, make_sparse_solution, resolve_coefficient, DiffusionCoefficient,
    ForcingMode, FrequencyRegime, ManufacturedSolution,
};
use crate::recovery::{default_omp_iterations, least_squares, omp, oracle_eta, qcbp, Method, QcbpParams, RecoveryResult};
use crate::rng::{derive_seed, stream, Purpose};
use crate::C64;

/// Exact solution family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionChoice {
    /// `q` sine pairs with frequencies in `{1,…,5}²`.
    U1,
    /// `exp(sin 2πx₁ + sin 2πx₂) − c`.
    U2,
    /// `q` sine products with two active factors drawn from the index set.
    U3,
    /// Random `q`-sparse spectral coefficients on the index set.
    Planted,
}

impl std::str::FromStr for SolutionChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u1" => Ok(Self::U1),
            "u2" => Ok(Self::U2),
            "u3" => Ok(Self::U3),
            "planted" => Ok(Self::Planted),
            other => Err(Error::Unknown {
                kind: "solution",
                name: other.into(),
            }),
        }
    }
}

/// How the QCBP radius `η` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaPolicy {
    /// `‖A c̃ − b‖₂` with `c̃` from least squares on `4|Λ|` points.
    Oracle,
    Value(f64),
}

impl std::str::FromStr for EtaPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Parse(format!("eta must be `oracle` or a number, got `{s}`")))?;
        if !(v >= 0.0) {
            return Err(Error::InvalidArgument("eta must be nonnegative".into()));
        }
        Ok(Self::Value(v))
    }
}

/// Everything that determines a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    /// Hyperbolic-cross order; takes precedence over `budget`.
    pub order: Option<u64>,
    /// Largest order whose cross has at most this many indices.
    pub budget: Option<u64>,
    /// Builtin name or path to a coefficient CSV.
    pub coefficient: String,
    pub solution: SolutionChoice,
    /// Number of sine terms (u1, u3) or nonzeros (planted).
    pub sparsity: usize,
    pub methods: Vec<Method>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub rhs: ForcingMode,
    pub eta: EtaPolicy,
    /// OMP iterations; `m/2` when absent.
    pub omp_iterations: Option<usize>,
    pub qcbp: QcbpParams,
    /// Monte Carlo points for the error; `2|Λ|` when absent.
    pub error_samples: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            order: Some(39),
            budget: None,
            coefficient: "a1".into(),
            solution: SolutionChoice::U1,
            sparsity: 10,
            methods: vec![Method::Omp, Method::Qcbp, Method::Lsq],
            m_grid: default_m_grid(),
            trials: 25,
            seed: 0,
            rhs: ForcingMode::Analytic,
            eta: EtaPolicy::Oracle,
            omp_iterations: None,
            qcbp: QcbpParams::default(),
            error_samples: None,
            out: None,
        }
    }
}

/// Powers of two from 32 to 1024.
pub fn default_m_grid() -> Vec<usize> {
    (5..=10).map(|k| 1usize << k).collect()
}

impl ExperimentConfig {
    /// Reads JSON or TOML, chosen by file extension.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?,
            _ => serde_json::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.m_grid.is_empty() || self.m_grid[0] == 0 {
            return Err(Error::InvalidArgument("m grid must be nonempty and positive".into()));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("m grid must be strictly increasing".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no recovery method selected".into()));
        }
        if self.order.is_none() && self.budget.is_none() {
            return Err(Error::InvalidArgument("either order or budget is required".into()));
        }
        Ok(())
    }

    pub fn resolved_order(&self) -> Result<u64> {
        match (self.order, self.budget) {
            (Some(n), _) => Ok(n),
            (None, Some(b)) => largest_order_within_budget(self.dim, b),
            (None, None) => Err(Error::InvalidArgument("either order or budget is required".into())),
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One trial of one method at one `m`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub m: usize,
    pub method: Method,
    pub trial: usize,
    /// Relative `L²` error; `NaN` when the trial failed.
    pub error: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Aggregate over the trials of one `(m, method)` cell.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    pub order: u64,
    pub basis_size: usize,
    pub coefficient: String,
    pub solution: String,
    pub method: String,
    pub m: usize,
    pub trials: usize,
    pub failed: usize,
    pub nonconverged: usize,
    pub geo_mean: f64,
    pub geo_std_factor: f64,
    pub clamped: usize,
    /// More than 20% of trials failed.
    pub flagged: bool,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRecord>,
    pub config: ExperimentConfig,
    pub config_hash: String,
}

impl SweepResult {
    pub fn row(&self, method: Method, m: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.as_str() && r.m == m)
    }
}

struct Problem {
    set: IndexSet,
    order: u64,
    coefficient: DiffusionCoefficient,
}

fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let order = cfg.resolved_order()?;
    let set = IndexSet::hyperbolic_cross(cfg.dim, order)?;
    let coefficient = resolve_coefficient(&cfg.coefficient, cfg.dim)?;
    Ok(Problem {
        set,
        order,
        coefficient,
    })
}

/// The exact solution used by `trial` (independent of `m`).
pub fn trial_solution(cfg: &ExperimentConfig, set: &IndexSet, trial: usize) -> Result<ManufacturedSolution> {
    let seed = derive_seed(cfg.seed, Purpose::Solution, &[trial as u64]);
    match cfg.solution {
        SolutionChoice::U1 => make_sparse_solution(set, cfg.sparsity, seed, FrequencyRegime::Box { max: 5 }),
        SolutionChoice::U3 => make_sparse_solution(set, cfg.sparsity, seed, FrequencyRegime::IndexSetPairs),
        SolutionChoice::U2 => make_nonsparse_solution(cfg.dim),
        SolutionChoice::Planted => {
            if cfg.sparsity > set.len() {
                return Err(Error::InvalidArgument("planted sparsity exceeds |Λ|".into()));
            }
            let mut rng = stream(cfg.seed, Purpose::Planted, &[trial as u64]);
            let picks = rand::seq::index::sample(&mut rng, set.len(), cfg.sparsity).into_vec();
            let mut c = vec![C64::new(0.0, 0.0); set.len()];
            for j in picks {
                c[j] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
            ManufacturedSolution::from_spectral_coefficients("planted", set, &c)
        }
    }
}

/// Collocation system for `(m, trial)`.
pub fn trial_system(
    cfg: &ExperimentConfig,
    a: &DiffusionCoefficient,
    u: &ManufacturedSolution,
    set: &IndexSet,
    m: usize,
    trial: usize,
) -> Result<CollocationSystem> {
    let mut rng = stream(cfg.seed, Purpose::Collocation, &[m as u64, trial as u64]);
    let points = sample_points_with(&mut rng, set.dim(), m);
    let mut sys = assemble_from_solution(a, u, set, points, cfg.rhs)?;
    sys.seed = Some(derive_seed(cfg.seed, Purpose::Collocation, &[m as u64, trial as u64]));
    Ok(sys)
}

/// Least-squares reference coefficients on `4|Λ|` points.
pub fn reference_coefficients(
    cfg: &ExperimentConfig,
    a: &DiffusionCoefficient,
    u: &ManufacturedSolution,
    set: &IndexSet,
    trial: usize,
) -> Result<Vec<C64>> {
    let m = 4 * set.len();
    let mut rng = stream(cfg.seed, Purpose::Reference, &[trial as u64]);
    let points = sample_points_with(&mut rng, set.dim(), m);
    let sys = assemble_from_solution(a, u, set, points, cfg.rhs)?;
    Ok(least_squares(&sys)?.coefficients.to_vec())
}

fn solve(
    cfg: &ExperimentConfig,
    method: Method,
    sys: &CollocationSystem,
    reference: Option<&[C64]>,
) -> Result<RecoveryResult> {
    match method {
        Method::Omp => {
            let k = cfg
                .omp_iterations
                .unwrap_or_else(|| default_omp_iterations(sys.rows()))
                .min(sys.cols());
            omp(sys, k)
        }
        Method::Qcbp => {
            let eta = match (cfg.eta, reference) {
                (EtaPolicy::Value(v), _) => v,
                (EtaPolicy::Oracle, Some(c)) => oracle_eta(sys, c)?,
                (EtaPolicy::Oracle, None) => {
                    return Err(Error::InvalidArgument("oracle eta needs reference coefficients".into()))
                }
            };
            qcbp(sys, eta, &cfg.qcbp)
        }
        Method::Lsq => least_squares(sys),
    }
}

/// Relative `L²` error on `samples` points; absolute when `u ≡ 0`.
fn trial_error(
    u: &ManufacturedSolution,
    coeffs: &[C64],
    set: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let (num, den) = l2_error_parts(u, coeffs, set, samples, seed)?;
    Ok(if den > 0.0 { num / den } else { num })
}

fn is_fixed_solution(cfg: &ExperimentConfig) -> bool {
    cfg.solution == SolutionChoice::U2
}

/// Error-versus-`m` sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let set = &problem.set;
    let a = &problem.coefficient;
    let hash = cfg.hash();
    let samples = cfg.error_samples.unwrap_or(2 * set.len());

    let solutions: Vec<ManufacturedSolution> = (0..cfg.trials)
        .map(|t| trial_solution(cfg, set, if is_fixed_solution(cfg) { 0 } else { t }))
        .collect::<Result<_>>()?;

    let needs_reference = cfg.methods.contains(&Method::Qcbp) && cfg.eta == EtaPolicy::Oracle;
    let references: Vec<Option<Vec<C64>>> = if !needs_reference {
        vec![None; cfg.trials]
    } else if is_fixed_solution(cfg) {
        let r = reference_coefficients(cfg, a, &solutions[0], set, 0)?;
        vec![Some(r); cfg.trials]
    } else {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| reference_coefficients(cfg, a, &solutions[t], set, t).map(Some))
            .collect::<Result<_>>()?
    };

    let jobs: Vec<(usize, usize)> = cfg
        .m_grid
        .iter()
        .flat_map(|&m| (0..cfg.trials).map(move |t| (m, t)))
        .collect();
    let records: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(m, t)| {
            let u = &solutions[t];
            let error_seed = derive_seed(cfg.seed, Purpose::ErrorPoints, &[m as u64, t as u64]);
            let sys = trial_system(cfg, a, u, set, m, t);
            cfg.methods
                .iter()
                .map(|&method| {
                    let outcome = sys.as_ref().map_err(|e| e.to_string()).and_then(|sys| {
                        let r = solve(cfg, method, sys, references[t].as_deref()).map_err(|e| e.to_string())?;
                        let err = trial_error(u, r.coefficients.as_slice().expect("contiguous"), set, samples, error_seed)
                            .map_err(|e| e.to_string())?;
                        Ok((r, err))
                    });
                    match outcome {
                        Ok((r, err)) => TrialRecord {
                            m,
                            method,
                            trial: t,
                            error: err,
                            residual_norm: r.residual_norm,
                            iterations: r.iterations,
                            converged: r.diagnostics.converged,
                            failure: None,
                        },
                        Err(msg) => TrialRecord {
                            m,
                            method,
                            trial: t,
                            error: f64::NAN,
                            residual_norm: f64::NAN,
                            iterations: 0,
                            converged: false,
                            failure: Some(msg),
                        },
                    }
                })
                .collect()
        })
        .collect();
    let trials: Vec<TrialRecord> = records.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &m in &cfg.m_grid {
        for &method in &cfg.methods {
            let cell: Vec<&TrialRecord> = trials.iter().filter(|r| r.m == m && r.method == method).collect();
            let ok: Vec<f64> = cell.iter().filter(|r| r.failure.is_none()).map(|r| r.error).collect();
            let failed = cell.len() - ok.len();
            let (geo_mean, geo_std_factor, clamped) = match geometric_stats(&ok) {
                Ok(s) => (s.mean, s.std_factor, s.clamped),
                Err(_) => (f64::NAN, f64::NAN, 0),
            };
            rows.push(SweepRow {
                dim: cfg.dim,
                order: problem.order,
                basis_size: set.len(),
                coefficient: a.name().into(),
                solution: format!("{:?}", cfg.solution).to_lowercase(),
                method: method.as_str().into(),
                m,
                trials: cell.len(),
                failed,
                nonconverged: cell.iter().filter(|r| r.failure.is_none() && !r.converged).count(),
                geo_mean,
                geo_std_factor,
                clamped,
                flagged: failed * 5 > cell.len(),
                seed: cfg.seed,
                config_hash: hash.clone(),
            });
        }
    }
    Ok(SweepResult {
        rows,
        trials,
        config: cfg.clone(),
        config_hash: hash,
    })
}

/// One sweep per order; rows are concatenated in order of `orders`.
pub fn run_indexset_study(cfg: &ExperimentConfig, orders: &[u64]) -> Result<Vec<SweepResult>> {
    if orders.is_empty() {
        return Err(Error::Empty("order list"));
    }
    orders
        .iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.order = Some(n);
            c.budget = None;
            run_sweep(&c)
        })
        .collect()
}

/// Configuration of a phase-transition experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub dims: Vec<usize>,
    pub order: u64,
    pub coefficient: String,
    /// Numbers of sine pairs.
    pub q_values: Vec<usize>,
    /// Collocation counts; the OMP sparsity is `m/2`.
    pub m_grid: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub error_samples: usize,
    pub threshold: f64,
    /// Frequencies drawn as distinct pairs from `{1,…,box_max}²`.
    pub box_max: i64,
    pub rhs: ForcingMode,
    pub out: Option<PathBuf>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 8],
            order: 26,
            coefficient: "a3".into(),
            q_values: vec![4, 8],
            m_grid: (1..=32).map(|k| 8 * k).collect(),
            runs: 25,
            seed: 0,
            error_samples: 200,
            threshold: SUCCESS_THRESHOLD,
            box_max: 4,
            rhs: ForcingMode::Analytic,
            out: None,
        }
    }
}

impl PhaseConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?,
            _ => serde_json::from_str(&text)?,
        };
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PhaseRow {
    pub dim: usize,
    pub q: usize,
    /// Number of nonzero Fourier coefficients, `4q`.
    pub s: usize,
    pub m: usize,
    pub runs: usize,
    pub failed: usize,
    pub success_rate: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Success rate of OMP with `K = m/2` on `q`-term sine-pair solutions.
pub fn run_phase_transition(cfg: &PhaseConfig) -> Result<Vec<PhaseRow>> {
    if cfg.runs == 0 || cfg.m_grid.is_empty() || cfg.dims.is_empty() {
        return Err(Error::InvalidArgument("phase transition needs runs, dims and an m grid".into()));
    }
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for &dim in &cfg.dims {
        let set = IndexSet::hyperbolic_cross(dim, cfg.order)?;
        let a = resolve_coefficient(&cfg.coefficient, dim)?;
        for &q in &cfg.q_values {
            let solutions: Vec<ManufacturedSolution> = (0..cfg.runs)
                .map(|r| {
                    let seed = derive_seed(cfg.seed, Purpose::Solution, &[dim as u64, q as u64, r as u64]);
                    make_sparse_solution(&set, q, seed, FrequencyRegime::Box { max: cfg.box_max })
                })
                .collect::<Result<_>>()?;
            let jobs: Vec<(usize, usize)> = cfg
                .m_grid
                .iter()
                .flat_map(|&m| (0..cfg.runs).map(move |r| (m, r)))
                .collect();
            let outcomes: Vec<Option<f64>> = jobs
                .par_iter()
                .map(|&(m, r)| {
                    let labels = [dim as u64, q as u64, m as u64, r as u64];
                    let mut rng = stream(cfg.seed, Purpose::Collocation, &labels);
                    let points = sample_points_with(&mut rng, dim, m);
                    let u = &solutions[r];
                    let sys = assemble_from_solution(&a, u, &set, points, cfg.rhs).ok()?;
                    let res = omp(&sys, (m / 2).max(1).min(set.len())).ok()?;
                    let seed = derive_seed(cfg.seed, Purpose::ErrorPoints, &labels);
                    trial_error(u, res.coefficients.as_slice()?, &set, cfg.error_samples, seed).ok()
                })
                .collect();
            for (k, &m) in cfg.m_grid.iter().enumerate() {
                let cell = &outcomes[k * cfg.runs..(k + 1) * cfg.runs];
                let failed = cell.iter().filter(|o| o.is_none()).count();
                let successes = cell.iter().flatten().filter(|&&e| e <= cfg.threshold).count();
                rows.push(PhaseRow {
                    dim,
                    q,
                    s: solutions[0].sparsity_label.unwrap_or(4 * q),
                    m,
                    runs: cfg.runs,
                    failed,
                    success_rate: successes as f64 / cfg.runs as f64,
                    seed: cfg.seed,
                    config_hash: hash.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// Writes `rows` as CSV with a header.
pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `<path>` gets the table, `<path>.json` the resolved configuration and hash.
pub fn write_table<T: Serialize, C: Serialize>(path: &Path, rows: &[T], config: &C, hash: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_rows_csv(rows, std::fs::File::create(path)?)?;
    let sidecar = serde_json::json!({ "config": config, "config_hash": hash });
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    std::fs::write(PathBuf::from(name), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}
