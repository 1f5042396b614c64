//! Empirical success rate of OMP as the number of points grows.

use fourier_collocation::experiment::{run_phase_transition, PhaseConfig};
use fourier_collocation::Result;

fn main() -> Result<()> {
    let cfg = PhaseConfig {
        dims: vec![2],
        q_values: vec![4],
        m_grid: (2..=10).map(|k| 8 * k).collect(),
        runs: 10,
        ..Default::default()
    };
    for row in run_phase_transition(&cfg)? {
        let bar = "#".repeat((row.success_rate * 20.0).round() as usize);
        println!("d={} s={:>2} m={:>3} {:>5.2} {bar}", row.dim, row.s, row.m, row.success_rate);
    }
    Ok(())
}
