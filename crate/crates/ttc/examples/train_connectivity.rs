//! Trains the pair-connectivity network on a scenario's closed-set classes
//! and shows what the two stages learn: the loss trace, then mean predicted
//! connect probability for same- and cross-class pairs on each split.
//!
//! Run with `cargo run --release --example train_connectivity`
//! (training is arithmetic-heavy; release is ~20x faster).

use ttc::graph::build_full_graph;
use ttc::net::{forward, ModelParams};
use ttc::pipeline::{finetune, pretrain, TrainConfig};
use ttc::synth::{generate_scenario, ScenarioConfig};
use ttc::{EmbeddingSet, Result};

/// Mean predicted probability over same-class and cross-class pairs, on up to
/// `n` evenly spaced members of the set.
fn pair_separation(params: &ModelParams, set: &EmbeddingSet, n: usize) -> Result<(f64, f64)> {
    let step = (set.len() / n).max(1);
    let idx: Vec<usize> = (0..set.len()).step_by(step).take(n).collect();
    let graph = build_full_graph(set, &idx)?;
    let p = forward(params, &graph)?.p;
    let labels = graph.labels();
    let (mut pos, mut neg) = ((0.0, 0u32), (0.0, 0u32));
    let mut k = 0;
    for i in 0..graph.n() {
        for j in (i + 1)..graph.n() {
            if labels[i] == labels[j] {
                pos = (pos.0 + p[k], pos.1 + 1);
            } else {
                neg = (neg.0 + p[k], neg.1 + 1);
            }
            k += 1;
        }
    }
    Ok((pos.0 / pos.1 as f64, neg.0 / neg.1 as f64))
}

fn report(label: &str, params: &ModelParams, partition: &ttc::Partition) -> Result<()> {
    for (split, set) in
        [("train", &partition.train), ("cal", &partition.cal), ("test", &partition.test)]
    {
        let (pos, neg) = pair_separation(params, set, 80)?;
        println!("  {label} on {split:5}: same-class p {pos:.3}, cross-class p {neg:.3}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let partition = generate_scenario(&ScenarioConfig::default())?;

    let pre_cfg = TrainConfig::pretrain_default(11);
    let pre = pretrain(&pre_cfg, &partition.train)?;
    println!(
        "pretrain: {} steps, loss {:.4} -> {:.4} ({} batches skipped)",
        pre.loss_trace.len(),
        pre.loss_trace.first().unwrap(),
        pre.loss_trace.last().unwrap(),
        pre.skipped_batches
    );
    report("pretrained", &pre.params, &partition)?;

    // the second stage resets the pair head and retrains it on the
    // calibration classes with the encoder frozen; watch the open-world
    // splits improve while train stays close
    let ft = finetune(&pre.params, &TrainConfig::finetune_default(13), &partition.cal)?;
    println!(
        "\nfinetune: {} steps, loss {:.4} -> {:.4}",
        ft.loss_trace.len(),
        ft.loss_trace.first().unwrap(),
        ft.loss_trace.last().unwrap()
    );
    report("finetuned", &ft.params, &partition)?;
    Ok(())
}
