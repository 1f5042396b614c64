//! Gram matrix of the spectral basis, checked against quadrature, with the
//! analytic Riesz bounds and the Gershgorin interval.

use fourier_collocation::index_set::{IndexSet, MultiIndex};
use fourier_collocation::problem::{builtin_coefficient, DiffusionCoefficient};
use fourier_collocation::riesz::{gram_closed_form, gram_quadrature_oracle, riesz_report};
use fourier_collocation::{Result, C64};

fn main() -> Result<()> {
    let set = IndexSet::hyperbolic_cross(2, 10)?;
    let small = DiffusionCoefficient::fourier_sparse(
        "1 + 0.1 F_(1,0)",
        2,
        vec![
            (MultiIndex::zero(2), C64::new(1.0, 0.0)),
            (MultiIndex::axis(2, 0, 1), C64::new(0.1, 0.0)),
        ],
        None,
    )?;
    for a in [builtin_coefficient("a1", 2)?, builtin_coefficient("a2", 2)?, small] {
        let g = gram_closed_form(&a, &set)?;
        let q = gram_quadrature_oracle(&a, &set, 64)?;
        let report = riesz_report(&a, &set, None, None, 0)?;
        let [lo, hi] = g.spectral_interval()?;
        println!("{}", a.name());
        println!("  closed form vs quadrature: {:.2e}", g.max_abs_difference(&q)?);
        println!("  spectrum [{lo:.5}, {hi:.5}]  analytic [{:.5}, {:.5}]", report.b_phi, report.upper_b_phi);
        if let Some([gl, gh]) = report.gershgorin_interval {
            println!("  gershgorin [{gl:.5}, {gh:.5}]  conditions hold: {}", report.conditions_hold);
        }
    }

    // non-band-limited coefficient: quadrature only, tail estimated numerically
    let a3 = builtin_coefficient("a3", 2)?;
    let report = riesz_report(&a3, &set, Some(8), None, 1)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
