//! The full pipeline on one scenario: pretrain, finetune, select the
//! connectivity threshold by cross-validation on the calibration classes,
//! then estimate the test curves transductively — the test embeddings are
//! consumed unlabeled — and solve distance thresholds for target operating
//! points. Labels are only used afterwards to score the estimate.
//!
//! Run with `cargo run --release --example transductive_calibration`.

use ttc::pipeline::{
    calibrate, canonical_targets, default_tau_grid, finetune, pretrain, select_tau,
    CalibratorModel, TrainConfig, TransductionConfig,
};
use ttc::synth::{generate_scenario, ScenarioConfig, ScenarioKind};
use ttc::{Result, ThresholdGrid};

fn main() -> Result<()> {
    let config = ScenarioConfig { kind: ScenarioKind::DiffDistDomain, ..Default::default() };
    let partition = generate_scenario(&config)?;
    let grid = ThresholdGrid::default_unit_sphere();

    let pre = pretrain(&TrainConfig::pretrain_default(11), &partition.train)?;
    let ft = finetune(&pre.params, &TrainConfig::finetune_default(13), &partition.cal)?;
    let tau = select_tau(&ft.params, &partition.cal, 3, &default_tau_grid())?;
    println!("selected connectivity threshold tau = {tau}");

    let model = CalibratorModel::new(ft.params, tau, grid, None)?;

    // strip labels: transduction must work on the embeddings alone
    let unlabeled = partition.test.with_labels(vec![0; partition.test.len()])?;
    let tc = TransductionConfig::new(48, 17);
    let report = calibrate(&model, &unlabeled, &canonical_targets(), &tc)?;
    println!(
        "estimated in {} rounds ({})",
        report.rounds,
        if report.converged { "converged" } else { "hit the round limit" }
    );
    for sol in &report.solutions {
        match sol.d_opt {
            Some(d) => println!(
                "  {} >= {}: distance threshold {d:.4}",
                sol.target.metric.name(),
                sol.target.value
            ),
            None => println!(
                "  {} >= {}: unreachable on the estimate",
                sol.target.metric.name(),
                sol.target.value
            ),
        }
    }

    // now bring the labels back and score the unlabeled-data estimate
    let scored = calibrate(&model, &partition.test, &canonical_targets(), &tc)?;
    println!("\nagainst the held-back labels:");
    println!("  combined curve error {:.4}", scored.mae_comb.unwrap());
    for sol in &scored.solutions {
        if let (Some(d), Some(ae)) = (sol.d_opt, sol.ae) {
            println!(
                "  {} >= {} at d {d:.4}: true-curve error {ae:.4}",
                sol.target.metric.name(),
                sol.target.value
            );
        }
    }
    Ok(())
}
