//! The inductive calibration baselines: fit a map from the train split's
//! curves to the calibration split's, apply it to the train curves as the
//! test-time estimate, and score against the test truth. DBSCAN pseudo-labels
//! are the one baseline that sees the test embeddings themselves.
//!
//! Run with `cargo run --example inductive_baselines`.

use ttc::baselines::{fit_dbscan, CalibrationMethod, CurveCalibrator};
use ttc::curves::{exact_curves, mae_comb};
use ttc::synth::{generate_scenario, ScenarioConfig, ScenarioKind};
use ttc::{Result, ThresholdGrid};

fn main() -> Result<()> {
    let grid = ThresholdGrid::default_unit_sphere();

    for kind in [ScenarioKind::SameDist, ScenarioKind::DiffDistDomain] {
        let config = ScenarioConfig { kind, ..Default::default() };
        let partition = generate_scenario(&config)?;
        let train_curve = exact_curves(&partition.train, grid)?;
        let cal_curve = exact_curves(&partition.cal, grid)?;
        let truth = exact_curves(&partition.test, grid)?;

        println!("{}:", kind.name());
        for method in CalibrationMethod::ALL {
            let calibrator = CurveCalibrator::fit(method, &train_curve, &cal_curve)?;
            let estimate = calibrator.predict(&train_curve)?;
            println!("  {:9} mae_comb {:.4}", method.name(), mae_comb(&estimate, &truth)?);
        }

        let dbscan = fit_dbscan(&partition.cal, &grid)?;
        let estimate = dbscan.predict(&partition.test)?;
        println!(
            "  {:9} mae_comb {:.4}  (eps {:.3}, min_pts {}, cal fit {:.4})",
            "dbscan",
            mae_comb(&estimate, &truth)?,
            dbscan.eps,
            dbscan.min_pts,
            dbscan.cal_mae
        );
    }

    // the maps extrapolate a closed-world curve; the bigger the shift between
    // train and test class structure, the worse they get — compare the two
    // scenario blocks above
    Ok(())
}
