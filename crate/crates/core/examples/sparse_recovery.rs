//! One sparse problem in two dimensions solved by OMP, QCBP and least squares.

use fourier_collocation::prelude::*;

fn main() -> Result<()> {
    let set = IndexSet::hyperbolic_cross(2, 39)?;
    let a = builtin_coefficient("a3", 2)?;
    // ten sine products: 40 nonzero Fourier coefficients
    let u = make_sparse_solution(&set, 10, 7, FrequencyRegime::Box { max: 5 })?;
    let samples = 2 * set.len();

    for m in [64, 128, 256] {
        let points = sample_collocation_points(2, m, 100 + m as u64);
        let sys = assemble_from_solution(&a, &u, &set, points, ForcingMode::Analytic)?;
        let reference = u.spectral_coefficients(&set);
        let eta = oracle_eta(&sys, reference.as_slice().expect("contiguous"))?;

        let o = omp(&sys, m / 2)?;
        let q = qcbp(&sys, eta, &QcbpParams::default())?;
        let l = least_squares(&sys)?;
        print!("m = {m:>3}:");
        for (name, r) in [("omp", &o), ("qcbp", &q), ("lsq", &l)] {
            let err = relative_l2_error(&u, r.coefficients.as_slice().expect("contiguous"), &set, samples, 5)?;
            print!("  {name} {err:.2e}");
        }
        println!("  (|supp qcbp| = {})", q.support.len());
    }
    Ok(())
}
