//! Error against the number of collocation points for a solution that is not
//! sparse in any finite basis.

use fourier_collocation::experiment::{run_sweep, ExperimentConfig, SolutionChoice};
use fourier_collocation::recovery::Method;
use fourier_collocation::Result;

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        coefficient: "a2".into(),
        solution: SolutionChoice::U2,
        methods: vec![Method::Omp, Method::Qcbp],
        m_grid: vec![32, 128, 512],
        trials: 3,
        seed: 11,
        ..Default::default()
    };
    let result = run_sweep(&cfg)?;
    println!("{:>5} {:>6} {:>10} {:>8}", "m", "method", "geo mean", "spread");
    for row in &result.rows {
        println!("{:>5} {:>6} {:>10.3e} {:>8.2}", row.m, row.method, row.geo_mean, row.geo_std_factor);
    }
    println!("config hash {}", result.config_hash);
    Ok(())
}
