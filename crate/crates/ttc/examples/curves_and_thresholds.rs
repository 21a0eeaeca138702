//! Exact TPR/TNR-vs-threshold curves from a labeled set, threshold solving
//! for target operating points, and the estimator identity: plugging
//! ground-truth connectivity into the curve estimator reproduces the exact
//! curves bit for bit.
//!
//! Run with `cargo run --example curves_and_thresholds`.

use ttc::curves::{
    chord_distance, estimated_curves, exact_curves, solve_threshold, ConnectivityEstimate,
};
use ttc::pipeline::canonical_targets;
use ttc::synth::{generate_scenario, ScenarioConfig};
use ttc::{Result, ThresholdGrid};

fn main() -> Result<()> {
    let config = ScenarioConfig::default();
    let set = generate_scenario(&config)?.test;
    let grid = ThresholdGrid::default_unit_sphere();

    let truth = exact_curves(&set, grid)?;
    println!("exact curves over {} pairs on a {}-point grid", set.len() * (set.len() - 1) / 2, grid.n_points());
    for (i, d) in grid.values().iter().enumerate().step_by(10) {
        println!("  d {:4.2}  tpr {:.4}  tnr {:.4}", d, truth.tpr[i], truth.tnr[i]);
    }

    println!("\nsolved distance thresholds:");
    for target in canonical_targets() {
        let d_opt = solve_threshold(&truth, target)?;
        println!("  {} >= {}: d_opt {d_opt:.4}", target.metric.name(), target.value);
    }

    // ground-truth connectivity through the estimator == exact curves
    let labels = set.labels();
    let (mut pairs, mut prob, mut dist) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..set.len() {
        for j in (i + 1)..set.len() {
            pairs.push((i, j));
            prob.push(if labels[i] == labels[j] { 1.0 } else { 0.0 });
            dist.push(chord_distance(set.row(i), set.row(j)));
        }
    }
    let oracle = ConnectivityEstimate::new(pairs, prob, dist)?;
    let estimated = estimated_curves(&oracle, 0.5, grid)?;
    let identical = estimated.tpr == truth.tpr && estimated.tnr == truth.tnr;
    println!("\noracle connectivity reproduces exact curves: {identical}");
    Ok(())
}
