//! Eight-dimensional problem on hyperbolic crosses of growing order.

use fourier_collocation::experiment::{run_indexset_study, ExperimentConfig, SolutionChoice};
use fourier_collocation::recovery::Method;
use fourier_collocation::Result;

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        dim: 8,
        coefficient: "a3".into(),
        solution: SolutionChoice::U2,
        methods: vec![Method::Omp],
        m_grid: vec![128, 512],
        trials: 2,
        seed: 3,
        ..Default::default()
    };
    for study in run_indexset_study(&cfg, &[7, 11])? {
        for row in &study.rows {
            println!("n = {:>2} |Λ| = {:>5} m = {:>4}: {:.3e}", row.order, row.basis_size, row.m, row.geo_mean);
        }
    }
    Ok(())
}
