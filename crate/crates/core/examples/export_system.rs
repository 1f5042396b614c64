//! Writes one collocation system to CSV for use in external solvers.

use fourier_collocation::experiment::{trial_solution, trial_system, ExperimentConfig};
use fourier_collocation::index_set::IndexSet;
use fourier_collocation::problem::resolve_coefficient;
use fourier_collocation::Result;

fn main() -> Result<()> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let cfg = ExperimentConfig::default();
    let set = IndexSet::hyperbolic_cross(cfg.dim, cfg.resolved_order()?)?;
    let a = resolve_coefficient(&cfg.coefficient, cfg.dim)?;
    let u = trial_solution(&cfg, &set, 0)?;
    let sys = trial_system(&cfg, &a, &u, &set, 64, 0)?;
    let (matrix, rhs) = (dir.join("matrix.csv"), dir.join("rhs.csv"));
    sys.write_csv(&matrix, &rhs)?;
    println!("{}×{} system -> {} and {}", sys.rows(), sys.cols(), matrix.display(), rhs.display());
    Ok(())
}
