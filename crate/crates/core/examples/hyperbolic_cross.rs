//! Sizes of hyperbolic crosses and the largest order that fits a budget.

use fourier_collocation::prelude::*;

fn main() -> Result<()> {
    for (d, n) in [(2, 39), (8, 7), (8, 11), (8, 15), (20, 7)] {
        let set = IndexSet::hyperbolic_cross(d, n)?;
        let bound = cardinality_upper_bound(d, n)?;
        println!("HC({d:>2},{n:>2}): |Λ| = {:>5}  bound {bound:?}", set.len());
    }
    for d in [2, 8, 20] {
        println!("d = {d:>2}: largest order with |Λ| <= 2550 is {}", largest_order_within_budget(d, 2550)?);
    }

    let set = IndexSet::hyperbolic_cross(2, 3)?;
    let listed: Vec<String> = set.iter().map(|nu| format!("{:?}", nu.components())).collect();
    println!("HC(2,3) = {}", listed.join(" "));
    Ok(())
}
