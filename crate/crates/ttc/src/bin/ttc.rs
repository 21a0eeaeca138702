//! Command-line harness over the ttc library: scenario generation, the two
//! training stages, transductive calibration, curve evaluation, experiment
//! runs, and cross-run comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ttc::curves::{
    mae_comb, pointwise_ae, solve_threshold, CalibrationTarget, Metric, ThresholdGrid,
};
use ttc::error::{Result, TtcError};
use ttc::experiment::{
    compare, compare_csv, load_experiment_config, run_experiment, ExperimentConfig,
};
use ttc::io::{
    fmt_sig, read_curve_csv, read_embeddings, read_model, write_curve_csv, write_embeddings_binary,
    write_model, ModelArtifact,
};
use ttc::pipeline::{
    calibrate_with, canonical_targets, finetune, pretrain, select_tau, NetConnectivity,
    TransductionConfig,
};
use ttc::synth::generate_scenario;

#[derive(Parser)]
#[command(name = "ttc", version, about = "Transductive threshold calibration toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scenario into a directory (train/cal/test .ttc1).
    Gen {
        /// Experiment config; only its [scenario] section is used here.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain a connectivity model on a scenario's closed-set classes.
    Train {
        /// Scenario directory produced by `gen`.
        #[arg(long)]
        scenario: PathBuf,
        /// Where to write the model file.
        #[arg(long)]
        out: PathBuf,
        /// Optional experiment config supplying the [train] section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Reset and finetune the pair head on the calibration classes, then
    /// select the connectivity threshold by cross-validation.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional experiment config supplying the [finetune] section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        tau_folds: usize,
    },
    /// Estimate TPR/TNR curves on unlabeled embeddings and solve thresholds.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        /// Embeddings to calibrate on (.ttc1 or .csv).
        #[arg(long)]
        test: PathBuf,
        /// Operating point like tpr=0.9 or tnr=0.8; repeatable.
        #[arg(long = "target")]
        targets: Vec<String>,
        /// Trust the file's labels and also report estimation error.
        #[arg(long)]
        labeled: bool,
        /// Where to write the estimated curve CSV.
        #[arg(long, default_value = "estimate.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 48)]
        batch_size: usize,
        #[arg(long, default_value_t = 20)]
        subgraphs: usize,
        #[arg(long, default_value_t = 100)]
        max_rounds: usize,
        #[arg(long, default_value_t = 1e-3)]
        stop_tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare an estimated curve CSV against a reference curve CSV.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long = "true")]
        truth: PathBuf,
    },
    /// Run a full experiment config end to end.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank methods across two or more summary CSVs.
    Compare {
        files: Vec<PathBuf>,
    },
}

/// TTC_SEED=v reseeds the whole config: scenario v, pretrain v+1, finetune v+2.
fn apply_seed_override(config: &mut ExperimentConfig) -> Result<()> {
    let Ok(text) = std::env::var("TTC_SEED") else {
        return Ok(());
    };
    let v: u64 = text
        .parse()
        .map_err(|_| TtcError::Format(format!("TTC_SEED must be an integer, got {text:?}")))?;
    config.scenario.seed = v;
    config.train.seed = v.wrapping_add(1);
    config.finetune.seed = v.wrapping_add(2);
    Ok(())
}

fn load_config_with_seed(path: &Path) -> Result<ExperimentConfig> {
    let mut config = load_experiment_config(path)?;
    apply_seed_override(&mut config)?;
    Ok(config)
}

fn optional_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => load_experiment_config(p)?,
        None => ExperimentConfig::default(),
    };
    apply_seed_override(&mut config)?;
    Ok(config)
}

fn scenario_file(dir: &Path, part: &str) -> PathBuf {
    dir.join(format!("{part}.ttc1"))
}

fn parse_target(s: &str) -> Result<CalibrationTarget> {
    let (metric, value) = s
        .split_once('=')
        .ok_or_else(|| TtcError::InvalidArgument(format!("target {s:?} is not metric=value")))?;
    let metric = match metric.trim() {
        "tpr" => Metric::Tpr,
        "tnr" => Metric::Tnr,
        other => {
            return Err(TtcError::InvalidArgument(format!(
                "target metric {other:?} is neither tpr nor tnr"
            )))
        }
    };
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| TtcError::InvalidArgument(format!("target value in {s:?} is not a number")))?;
    CalibrationTarget::new(metric, value)
}

fn cmd_gen(config: &Path, out: &Path) -> Result<()> {
    let config = load_config_with_seed(config)?;
    let partition = generate_scenario(&config.scenario)?;
    std::fs::create_dir_all(out)?;
    for (part, set) in [
        ("train", &partition.train),
        ("cal", &partition.cal),
        ("test", &partition.test),
    ] {
        write_embeddings_binary(&scenario_file(out, part), set)?;
        println!(
            "{part}: {} embeddings, {} classes -> {}",
            set.len(),
            set.class_ids().len(),
            scenario_file(out, part).display()
        );
    }
    Ok(())
}

fn cmd_train(scenario: &Path, out: &Path, config: Option<&PathBuf>) -> Result<()> {
    let config = optional_config(config)?;
    let d_train = read_embeddings(&scenario_file(scenario, "train"))?;
    let outcome = pretrain(&config.train, &d_train)?;
    let first = outcome.loss_trace.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "pretrained on {} embeddings: loss {} -> {} over {} steps ({} skipped)",
        d_train.len(),
        fmt_sig(first),
        fmt_sig(last),
        outcome.loss_trace.len(),
        outcome.skipped_batches,
    );
    write_model(
        out,
        &ModelArtifact {
            params: outcome.params,
            tau: None,
            grid: ThresholdGrid::default_unit_sphere(),
        },
    )?;
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_finetune(
    model: &Path,
    scenario: &Path,
    out: &Path,
    config: Option<&PathBuf>,
    tau_folds: usize,
) -> Result<()> {
    let config = optional_config(config)?;
    let artifact = read_model(model)?;
    let d_cal = read_embeddings(&scenario_file(scenario, "cal"))?;
    let outcome = finetune(&artifact.params, &config.finetune, &d_cal)?;
    let tau = select_tau(&outcome.params, &d_cal, tau_folds, &ttc::pipeline::default_tau_grid())?;
    println!(
        "finetuned on {} embeddings over {} steps; selected tau {}",
        d_cal.len(),
        outcome.loss_trace.len(),
        fmt_sig(tau)
    );
    write_model(
        out,
        &ModelArtifact { params: outcome.params, tau: Some(tau), grid: artifact.grid },
    )?;
    println!("model written to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    model: &Path,
    test: &Path,
    raw_targets: &[String],
    labeled: bool,
    out: &Path,
    tc: TransductionConfig,
) -> Result<()> {
    let artifact = read_model(model)?;
    let tau = artifact.tau.ok_or_else(|| {
        TtcError::InvalidArgument(
            "model has no selected connectivity threshold; run finetune first".into(),
        )
    })?;
    let mut d_test = read_embeddings(test)?;
    if labeled {
        if d_test.class_ids().len() < 2 {
            return Err(TtcError::InvalidArgument(
                "--labeled needs at least two classes in the test file".into(),
            ));
        }
    } else {
        // calibration never sees labels unless explicitly told to
        d_test = d_test.with_labels(vec![0; d_test.len()])?;
    }
    let targets = if raw_targets.is_empty() {
        canonical_targets()
    } else {
        raw_targets.iter().map(|s| parse_target(s)).collect::<Result<Vec<_>>>()?
    };
    let conn = NetConnectivity { params: &artifact.params };
    let report = calibrate_with(&conn, tau, artifact.grid, &d_test, &targets, &tc)?;
    println!(
        "{} rounds, {}",
        report.rounds,
        if report.converged { "converged" } else { "round limit reached" }
    );
    for sol in &report.solutions {
        let name = sol.target.metric.name();
        match sol.d_opt {
            Some(d) => {
                let ae = sol
                    .ae
                    .map(|a| format!(" (true-curve error {})", fmt_sig(a)))
                    .unwrap_or_default();
                println!("{name} >= {}: distance threshold {}{ae}", sol.target.value, fmt_sig(d));
            }
            None => println!("{name} >= {}: unreachable on the estimated curve", sol.target.value),
        }
    }
    if let Some(mae) = report.mae_comb {
        println!("combined curve error vs labels: {}", fmt_sig(mae));
    }
    write_curve_csv(out, &report.estimated.quantized(6))?;
    println!("estimated curve written to {}", out.display());
    Ok(())
}

fn cmd_evaluate(est: &Path, truth: &Path) -> Result<()> {
    let est_curve = read_curve_csv(est)?;
    let true_curve = read_curve_csv(truth)?;
    let mae = mae_comb(&est_curve, &true_curve)?;
    println!("mae_comb {}", fmt_sig(mae));
    for target in canonical_targets() {
        let name = target.metric.name();
        match solve_threshold(&est_curve, target) {
            Ok(d) => {
                let ae = pointwise_ae(&true_curve, d, target)?;
                println!(
                    "{name} >= {}: d_opt {} true-curve error {}",
                    target.value,
                    fmt_sig(d),
                    fmt_sig(ae)
                );
            }
            Err(TtcError::UnreachableTarget { .. }) => {
                println!("{name} >= {}: unreachable", target.value);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn cmd_run(config: &Path) -> Result<ExitCode> {
    let config = load_config_with_seed(config)?;
    let outcome = run_experiment(&config)?;
    println!("summary written to {}", outcome.summary_path.display());
    for row in &outcome.rows {
        println!(
            "{} seed {}: mae_comb {}",
            row.method,
            row.seed,
            if row.mae_comb.is_nan() { "failed".into() } else { fmt_sig(row.mae_comb) }
        );
    }
    if outcome.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &outcome.failures {
            eprintln!("failed: {f}");
        }
        Ok(ExitCode::from(1))
    }
}

fn run_cli(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Gen { config, out } => cmd_gen(&config, &out)?,
        Cmd::Train { scenario, out, config } => cmd_train(&scenario, &out, config.as_ref())?,
        Cmd::Finetune { model, scenario, out, config, tau_folds } => {
            cmd_finetune(&model, &scenario, &out, config.as_ref(), tau_folds)?
        }
        Cmd::Calibrate {
            model,
            test,
            targets,
            labeled,
            out,
            batch_size,
            subgraphs,
            max_rounds,
            stop_tol,
            seed,
        } => {
            let tc = TransductionConfig {
                batch_size,
                subgraphs_per_round: subgraphs,
                max_rounds,
                stop_tol,
                seed,
            };
            cmd_calibrate(&model, &test, &targets, labeled, &out, tc)?
        }
        Cmd::Evaluate { est, truth } => cmd_evaluate(&est, &truth)?,
        Cmd::Run { config } => return cmd_run(&config),
        Cmd::Compare { files } => {
            let rows = compare(&files)?;
            print!("{}", compare_csv(&rows));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // unparseable configs are usage errors
                TtcError::Format(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
