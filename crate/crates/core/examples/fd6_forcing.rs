//! Sixth-order finite-difference forcing against the analytic one.

use fourier_collocation::prelude::*;

fn main() -> Result<()> {
    let a = builtin_coefficient("a2", 2)?;
    let u = make_nonsparse_solution(2)?;
    let points = sample_collocation_points(2, 200, 4);
    let exact: Vec<C64> = points
        .iter()
        .map(|x| forcing_term(&a, &u, x, ForcingMode::Analytic))
        .collect::<Result<_>>()?;

    let mut previous: Option<f64> = None;
    for k in 0..5 {
        let h = 0.05 / f64::from(1 << k);
        let err = points
            .iter()
            .zip(&exact)
            .map(|(x, f)| Ok((forcing_term(&a, &u, x, ForcingMode::Fd6 { h })? - f).norm()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        match previous {
            Some(p) => println!("h = {h:.5}  max error {err:.3e}  order {:.2}", (p / err).log2()),
            None => println!("h = {h:.5}  max error {err:.3e}"),
        }
        previous = Some(err);
    }
    Ok(())
}
