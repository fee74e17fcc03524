//! Best CART splits and Gini-importance weights on a toy labelled set.

use mdfg::features::ShallowFeatureVector;
use mdfg::gini::{best_delta_gini, fit_weights, Weighting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = [0, 0, 0, 1, 1, 1];
    let split = best_delta_gini(&[0.1, 0.2, 0.3, 0.7, 0.8, 0.9], &labels)?;
    println!("separable feature: {split:?}");

    // feature 0 separates perfectly, feature 1 partially, the rest are noise
    let rows: Vec<ShallowFeatureVector> = (0..6)
        .map(|i| {
            let x = i as f64 / 5.0;
            ShallowFeatureVector::from_array([x, [0.1, 0.6, 0.2, 0.5, 0.9, 0.8][i], 0.5, (i % 2) as f64, 0.3, 1.0])
        })
        .collect();
    for weighting in [Weighting::Proportional, Weighting::Rank] {
        let (report, weights) = fit_weights(&rows, &labels, weighting)?;
        println!("{weighting:?} weights {:?}", weights.w);
        print!("{}", report.to_toml());
    }
    Ok(())
}
