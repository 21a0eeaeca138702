//! Runs a small experiment from a config string — baseline methods on two
//! scenario replicates — then reruns it and diffs the summary files to show
//! the harness is deterministic, and ranks methods across both runs.
//!
//! Everything lands in a temp directory. The `ttc` binary drives the same
//! code paths from the command line (`ttc run --config ...`).
//!
//! Run with `cargo run --example experiment_harness`.

use ttc::experiment::{compare, compare_csv, parse_experiment_config, run_experiment};
use ttc::Result;

const CONFIG: &str = "
[scenario]
kind = samedist
seed = 7

[methods]
use = platt, beta, isotonic, histogram, dbscan

[run]
seeds = 2
output_dir = OUT
";

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("ttc-harness-example");
    let (out_a, out_b) = (dir.join("a"), dir.join("b"));

    let mut config = parse_experiment_config(&CONFIG.replace("OUT", out_a.to_str().unwrap()))?;
    let outcome_a = run_experiment(&config)?;
    println!("first run -> {}", outcome_a.summary_path.display());
    for row in &outcome_a.rows {
        println!("  {} seed {}: mae_comb {:.4}", row.method, row.seed, row.mae_comb);
    }
    for f in &outcome_a.failures {
        println!("  failed: {f}");
    }

    config.output_dir = out_b.clone();
    let outcome_b = run_experiment(&config)?;
    let bytes_a = std::fs::read(&outcome_a.summary_path)?;
    let bytes_b = std::fs::read(&outcome_b.summary_path)?;
    println!("\nrerun produces byte-identical summary: {}", bytes_a == bytes_b);

    let rows = compare(&[outcome_a.summary_path, outcome_b.summary_path])?;
    println!("\nranking across both summaries:");
    print!("{}", compare_csv(&rows));
    Ok(())
}
