//! Experiment harness: a sectioned key=value config describes a scenario,
//! the two training stages, the methods to run, and the output layout; one
//! run generates the scenario per seed, runs every method end to end, and
//! writes per-method curve CSVs, plots, and a summary CSV. `compare` ranks
//! methods across summary files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::baselines::{fit_dbscan, CalibrationMethod, CurveCalibrator};
use crate::curves::{
    exact_curves, mae_comb, pointwise_ae, solve_threshold, CalibrationTarget, Metric, PerfCurve,
    ThresholdGrid,
};
use crate::error::{Result, TtcError};
use crate::io::fmt_sig;
use crate::net::DensityMode;
use crate::pipeline::{
    default_tau_grid, finetune_with_mode, pretrain_with_mode, select_tau, transductive_estimate,
    NetConnectivity, TrainConfig, TransductionConfig,
};
use crate::plot::write_curve_svg;
use crate::synth::{
    generate_scenario, PerturbKind, PerturbationSpec, ScenarioConfig, ScenarioKind,
};

// ─── methods ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    OpenGcn,
    Platt,
    Beta,
    Isotonic,
    Histogram,
    Dbscan,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::OpenGcn,
        Method::Platt,
        Method::Beta,
        Method::Isotonic,
        Method::Histogram,
        Method::Dbscan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::OpenGcn => "opengcn",
            Method::Platt => "platt",
            Method::Beta => "beta",
            Method::Isotonic => "isotonic",
            Method::Histogram => "histogram",
            Method::Dbscan => "dbscan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TtcError::InvalidArgument(format!("unknown method {s:?}")))
    }

    fn as_map_method(&self) -> Option<CalibrationMethod> {
        match self {
            Method::Platt => Some(CalibrationMethod::Platt),
            Method::Beta => Some(CalibrationMethod::Beta),
            Method::Isotonic => Some(CalibrationMethod::Isotonic),
            Method::Histogram => Some(CalibrationMethod::Histogram),
            _ => None,
        }
    }
}

/// Inductive reference methods, as opposed to our transductive calibrator.
const BASELINE_NAMES: [&str; 5] = ["platt", "beta", "isotonic", "histogram", "dbscan"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AblationFlags {
    /// Train with the connectivity loss alone (lambda forced to 0).
    pub no_density_loss: bool,
    /// Keep only the average-density auxiliary loss.
    pub avg_only: bool,
    /// Keep only the neighbor-density auxiliary loss.
    pub nbr_only: bool,
    /// Skip the finetune stage and calibrate with the pretrained model.
    pub pretrain_only: bool,
}

impl AblationFlags {
    fn count(&self) -> usize {
        [self.no_density_loss, self.avg_only, self.nbr_only, self.pretrain_only]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Summary-row label for the transductive method under these flags.
    pub fn opengcn_label(&self) -> &'static str {
        if self.pretrain_only {
            "opengcn-pt"
        } else if self.no_density_loss {
            "opengcn-nd"
        } else if self.avg_only {
            "opengcn-avg"
        } else if self.nbr_only {
            "opengcn-nbr"
        } else {
            "opengcn"
        }
    }

    pub fn density_mode(&self) -> DensityMode {
        if self.no_density_loss {
            DensityMode::None
        } else if self.avg_only {
            DensityMode::AvgOnly
        } else if self.nbr_only {
            DensityMode::NbrOnly
        } else {
            DensityMode::Both
        }
    }
}

// ─── experiment configuration ────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub methods: Vec<Method>,
    pub targets: Vec<CalibrationTarget>,
    pub output_dir: PathBuf,
    /// Number of independent repetitions; repetition s shifts every seed by s.
    pub seeds: u64,
    pub transduction_batch: usize,
    pub subgraphs_per_round: usize,
    pub max_rounds: usize,
    pub stop_tol: f64,
    pub tau_folds: usize,
    pub ablation: AblationFlags,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            train: TrainConfig::pretrain_default(11),
            finetune: TrainConfig::finetune_default(13),
            methods: Method::ALL.to_vec(),
            targets: crate::pipeline::canonical_targets(),
            output_dir: PathBuf::from("ttc-out"),
            seeds: 1,
            transduction_batch: 48,
            subgraphs_per_round: 20,
            max_rounds: 100,
            stop_tol: 1e-3,
            tau_folds: 3,
            ablation: AblationFlags::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.train.validate()?;
        self.finetune.validate()?;
        if self.methods.is_empty() {
            return Err(TtcError::InvalidArgument("no methods selected".into()));
        }
        if self.targets.is_empty() {
            return Err(TtcError::InvalidArgument("no calibration targets".into()));
        }
        if self.seeds == 0 {
            return Err(TtcError::InvalidArgument("seeds must be at least 1".into()));
        }
        if self.ablation.count() > 1 {
            return Err(TtcError::InvalidArgument(
                "at most one ablation flag may be set".into(),
            ));
        }
        if self.tau_folds < 2 {
            return Err(TtcError::InvalidArgument("tau_folds must be at least 2".into()));
        }
        self.transduction(0).validate()
    }

    fn transduction(&self, scenario_seed: u64) -> TransductionConfig {
        TransductionConfig {
            batch_size: self.transduction_batch,
            subgraphs_per_round: self.subgraphs_per_round,
            max_rounds: self.max_rounds,
            stop_tol: self.stop_tol,
            seed: scenario_seed.wrapping_add(0x5EED_7CA1),
        }
    }
}

// ─── config parsing ──────────────────────────────────────────────────────────

const SECTIONS: [&str; 6] = ["scenario", "train", "finetune", "methods", "targets", "run"];

fn kv_err(lineno: usize, what: impl std::fmt::Display) -> TtcError {
    TtcError::Format(format!("line {lineno}: {what}"))
}

fn parse_num<T: std::str::FromStr>(value: &str, lineno: usize, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| kv_err(lineno, format!("{key} expects a number, got {value:?}")))
}

fn parse_bool(value: &str, lineno: usize, key: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(kv_err(lineno, format!("{key} expects true or false, got {value:?}"))),
    }
}

/// Parses the sectioned key=value experiment format. Unknown sections or
/// keys, malformed values, and keys outside any section are errors carrying
/// the offending line number.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    let mut section: Option<String> = None;
    let mut perturb_kind: Option<PerturbKind> = None;
    let mut perturb_magnitude: Option<f64> = None;
    let mut custom_targets: Option<Vec<CalibrationTarget>> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| kv_err(lineno, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(kv_err(lineno, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| kv_err(lineno, "expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let section = section
            .as_deref()
            .ok_or_else(|| kv_err(lineno, format!("key {key:?} appears before any section")))?;
        match section {
            "scenario" => match key {
                "kind" => {
                    config.scenario.kind = ScenarioKind::parse(value)
                        .map_err(|e| kv_err(lineno, e))?;
                }
                "dim" => config.scenario.dim = parse_num(value, lineno, key)?,
                "train_classes" => config.scenario.n_train_classes = parse_num(value, lineno, key)?,
                "cal_classes" => config.scenario.n_cal_classes = parse_num(value, lineno, key)?,
                "test_classes" => config.scenario.n_test_classes = parse_num(value, lineno, key)?,
                "kappa_train_lo" => config.scenario.kappa_train.lo = parse_num(value, lineno, key)?,
                "kappa_train_hi" => config.scenario.kappa_train.hi = parse_num(value, lineno, key)?,
                "kappa_open_lo" => config.scenario.kappa_open.lo = parse_num(value, lineno, key)?,
                "kappa_open_hi" => config.scenario.kappa_open.hi = parse_num(value, lineno, key)?,
                "samples_lo" => config.scenario.samples_per_class.lo = parse_num(value, lineno, key)?,
                "samples_hi" => config.scenario.samples_per_class.hi = parse_num(value, lineno, key)?,
                "perturb_kind" => {
                    perturb_kind =
                        Some(PerturbKind::parse(value).map_err(|e| kv_err(lineno, e))?);
                }
                "perturb_magnitude" => perturb_magnitude = Some(parse_num(value, lineno, key)?),
                "seed" => config.scenario.seed = parse_num(value, lineno, key)?,
                _ => return Err(kv_err(lineno, format!("unknown key {key:?} in [scenario]"))),
            },
            "train" | "finetune" => {
                let t = if section == "train" { &mut config.train } else { &mut config.finetune };
                match key {
                    "batch_size" => t.batch_size = parse_num(value, lineno, key)?,
                    "steps" => t.steps = parse_num(value, lineno, key)?,
                    "lr_max" => t.lr_max = parse_num(value, lineno, key)?,
                    "lr_min" => t.lr_min = parse_num(value, lineno, key)?,
                    "lambda" => t.lambda = parse_num(value, lineno, key)?,
                    "seed" => t.seed = parse_num(value, lineno, key)?,
                    _ => {
                        return Err(kv_err(lineno, format!("unknown key {key:?} in [{section}]")))
                    }
                }
            }
            "methods" => match key {
                "use" => {
                    let mut methods = Vec::new();
                    for name in value.split(',') {
                        let m = Method::parse(name.trim()).map_err(|e| kv_err(lineno, e))?;
                        if !methods.contains(&m) {
                            methods.push(m);
                        }
                    }
                    config.methods = methods;
                }
                _ => return Err(kv_err(lineno, format!("unknown key {key:?} in [methods]"))),
            },
            "targets" => {
                let metric = match key {
                    "tpr" => Metric::Tpr,
                    "tnr" => Metric::Tnr,
                    _ => return Err(kv_err(lineno, format!("unknown key {key:?} in [targets]"))),
                };
                let list = custom_targets.get_or_insert_with(Vec::new);
                for v in value.split(',') {
                    let x: f64 = parse_num(v.trim(), lineno, key)?;
                    list.push(
                        CalibrationTarget::new(metric, x).map_err(|e| kv_err(lineno, e))?,
                    );
                }
            }
            "run" => match key {
                "output_dir" => config.output_dir = PathBuf::from(value),
                "seeds" => config.seeds = parse_num(value, lineno, key)?,
                "batch_size" => config.transduction_batch = parse_num(value, lineno, key)?,
                "subgraphs" => config.subgraphs_per_round = parse_num(value, lineno, key)?,
                "max_rounds" => config.max_rounds = parse_num(value, lineno, key)?,
                "stop_tol" => config.stop_tol = parse_num(value, lineno, key)?,
                "tau_folds" => config.tau_folds = parse_num(value, lineno, key)?,
                "no_density_loss" => config.ablation.no_density_loss = parse_bool(value, lineno, key)?,
                "avg_only" => config.ablation.avg_only = parse_bool(value, lineno, key)?,
                "nbr_only" => config.ablation.nbr_only = parse_bool(value, lineno, key)?,
                "pretrain_only" => config.ablation.pretrain_only = parse_bool(value, lineno, key)?,
                _ => return Err(kv_err(lineno, format!("unknown key {key:?} in [run]"))),
            },
            _ => unreachable!("section names are validated above"),
        }
    }

    match (perturb_kind, perturb_magnitude) {
        (Some(kind), Some(magnitude)) => {
            config.scenario.perturbation = Some(PerturbationSpec::new(kind, magnitude)?);
        }
        (None, None) => {}
        _ => {
            return Err(TtcError::Format(
                "perturb_kind and perturb_magnitude must be given together".into(),
            ))
        }
    }
    if let Some(t) = custom_targets {
        config.targets = t;
    }
    config.validate().map_err(|e| TtcError::Format(format!("invalid config: {e}")))?;
    Ok(config)
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| TtcError::Format(format!("{}: {e}", path.display())))?;
    parse_experiment_config(&text)
        .map_err(|e| TtcError::Format(format!("{}: {e}", path.display())))
}

// ─── summary rows ────────────────────────────────────────────────────────────

pub const SUMMARY_HEADER: &str = "method,scenario,seed,mae_comb,d_opt_tpr80,d_opt_tpr90,\
d_opt_tnr80,d_opt_tnr90,ae_tpr80,ae_tpr90,ae_tnr80,ae_tnr90,rounds,converged";

/// One method on one scenario draw. NaN marks a failed method or an
/// unreachable target.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    pub mae_comb: f64,
    pub d_opt: [f64; 4],
    pub ae: [f64; 4],
    pub rounds: usize,
    pub converged: bool,
}

fn fmt_exact(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

fn fmt_opt_sig(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        fmt_sig(x)
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.scenario,
            r.seed,
            fmt_exact(r.mae_comb),
            fmt_opt_sig(r.d_opt[0]),
            fmt_opt_sig(r.d_opt[1]),
            fmt_opt_sig(r.d_opt[2]),
            fmt_opt_sig(r.d_opt[3]),
            fmt_opt_sig(r.ae[0]),
            fmt_opt_sig(r.ae[1]),
            fmt_opt_sig(r.ae[2]),
            fmt_opt_sig(r.ae[3]),
            r.rounds,
            r.converged
        ));
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    fs::write(path, summary_csv(rows))?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SUMMARY_HEADER => {}
        _ => {
            return Err(TtcError::InvalidArgument(format!(
                "{}: not a summary CSV (header mismatch)",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(TtcError::InvalidArgument(format!(
                "{}: line {}: {} fields, expected 14",
                path.display(),
                i + 2,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                TtcError::InvalidArgument(format!(
                    "{}: line {}: bad number {s:?}",
                    path.display(),
                    i + 2
                ))
            })
        };
        rows.push(SummaryRow {
            method: f[0].to_string(),
            scenario: f[1].to_string(),
            seed: f[2].parse().map_err(|_| {
                TtcError::InvalidArgument(format!(
                    "{}: line {}: bad seed {:?}",
                    path.display(),
                    i + 2,
                    f[2]
                ))
            })?,
            mae_comb: num(f[3])?,
            d_opt: [num(f[4])?, num(f[5])?, num(f[6])?, num(f[7])?],
            ae: [num(f[8])?, num(f[9])?, num(f[10])?, num(f[11])?],
            rounds: f[12].parse().map_err(|_| {
                TtcError::InvalidArgument(format!(
                    "{}: line {}: bad rounds {:?}",
                    path.display(),
                    i + 2,
                    f[12]
                ))
            })?,
            converged: match f[13] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(TtcError::InvalidArgument(format!(
                        "{}: line {}: bad converged flag {other:?}",
                        path.display(),
                        i + 2
                    )))
                }
            },
        });
    }
    Ok(rows)
}

// ─── running an experiment ───────────────────────────────────────────────────

/// The estimated curve plus transduction bookkeeping for one method run.
struct MethodOutput {
    curve: PerfCurve,
    rounds: usize,
    converged: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary_path: PathBuf,
    pub rows: Vec<SummaryRow>,
    /// "method seed N: error" for every method that failed; the rest of the
    /// experiment still completes.
    pub failures: Vec<String>,
}

/// The four summary operating points, fixed so every summary row has the
/// same schema regardless of the configured targets.
fn summary_targets() -> [CalibrationTarget; 4] {
    [
        CalibrationTarget::new(Metric::Tpr, 0.8).unwrap(),
        CalibrationTarget::new(Metric::Tpr, 0.9).unwrap(),
        CalibrationTarget::new(Metric::Tnr, 0.8).unwrap(),
        CalibrationTarget::new(Metric::Tnr, 0.9).unwrap(),
    ]
}

fn run_opengcn(
    config: &ExperimentConfig,
    partition: &crate::embedding::Partition,
    rep: u64,
    scenario_seed: u64,
    grid: ThresholdGrid,
) -> Result<MethodOutput> {
    let mode = config.ablation.density_mode();
    let mut pre_cfg = config.train;
    pre_cfg.seed = pre_cfg.seed.wrapping_add(rep);
    if config.ablation.no_density_loss {
        pre_cfg.lambda = 0.0;
    }
    let pre = pretrain_with_mode(&pre_cfg, &partition.train, mode)?;
    let params = if config.ablation.pretrain_only {
        pre.params
    } else {
        let mut ft_cfg = config.finetune;
        ft_cfg.seed = ft_cfg.seed.wrapping_add(rep);
        if config.ablation.no_density_loss {
            ft_cfg.lambda = 0.0;
        }
        finetune_with_mode(&pre.params, &ft_cfg, &partition.cal, mode)?.params
    };
    let tau = select_tau(&params, &partition.cal, config.tau_folds, &default_tau_grid())?;
    let report = transductive_estimate(
        &NetConnectivity { params: &params },
        tau,
        &partition.test,
        grid,
        &config.transduction(scenario_seed),
    )?;
    Ok(MethodOutput {
        curve: report.estimated,
        rounds: report.rounds,
        converged: report.converged,
    })
}

fn run_baseline(
    method: Method,
    partition: &crate::embedding::Partition,
    grid: ThresholdGrid,
) -> Result<MethodOutput> {
    let curve = match method.as_map_method() {
        Some(map_method) => {
            let train_curve = exact_curves(&partition.train, grid)?;
            let cal_curve = exact_curves(&partition.cal, grid)?;
            let calibrator = CurveCalibrator::fit(map_method, &train_curve, &cal_curve)?;
            calibrator.predict(&train_curve)?
        }
        None => fit_dbscan(&partition.cal, &grid)?.predict(&partition.test)?,
    };
    Ok(MethodOutput { curve, rounds: 0, converged: true })
}

/// Runs every selected method on `config.seeds` independent scenario draws,
/// writing per-method curve CSVs, plots, the true curves, and `summary.csv`
/// into the output directory. Method failures are recorded and skipped; only
/// infrastructure problems (scenario generation, file IO) abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let grid = ThresholdGrid::default_unit_sphere();
    let mut rows = Vec::new();
    let mut failures = Vec::new();

    for rep in 0..config.seeds {
        let mut scen_cfg = config.scenario.clone();
        scen_cfg.seed = scen_cfg.seed.wrapping_add(rep);
        let partition = generate_scenario(&scen_cfg)?;
        let truth = exact_curves(&partition.test, grid)?.quantized(6);
        crate::io::write_curve_csv(
            &config.output_dir.join(format!("truth_s{rep}.csv")),
            &truth,
        )?;

        for &method in &config.methods {
            let label = match method {
                Method::OpenGcn => config.ablation.opengcn_label().to_string(),
                other => other.name().to_string(),
            };
            let output = match method {
                Method::OpenGcn => run_opengcn(config, &partition, rep, scen_cfg.seed, grid),
                other => run_baseline(other, &partition, grid),
            };
            let row = match output {
                Ok(out) => {
                    let est = out.curve.quantized(6);
                    crate::io::write_curve_csv(
                        &config.output_dir.join(format!("{label}_s{rep}.csv")),
                        &est,
                    )?;
                    write_curve_svg(
                        &config.output_dir.join(format!("{label}_s{rep}.svg")),
                        &est,
                        Some(&truth),
                        &format!("{label} on {} (seed {})", scen_cfg.kind.name(), scen_cfg.seed),
                    )?;
                    let mae = mae_comb(&est, &truth)?;
                    let mut d_opt = [f64::NAN; 4];
                    let mut ae = [f64::NAN; 4];
                    for (k, &target) in summary_targets().iter().enumerate() {
                        if let Ok(d) = solve_threshold(&est, target) {
                            d_opt[k] = d;
                            ae[k] = pointwise_ae(&truth, d, target)?;
                        }
                    }
                    SummaryRow {
                        method: label,
                        scenario: scen_cfg.kind.name().to_string(),
                        seed: scen_cfg.seed,
                        mae_comb: mae,
                        d_opt,
                        ae,
                        rounds: out.rounds,
                        converged: out.converged,
                    }
                }
                Err(e) => {
                    failures.push(format!("{label} seed {}: {e}", scen_cfg.seed));
                    SummaryRow {
                        method: label,
                        scenario: scen_cfg.kind.name().to_string(),
                        seed: scen_cfg.seed,
                        mae_comb: f64::NAN,
                        d_opt: [f64::NAN; 4],
                        ae: [f64::NAN; 4],
                        rounds: 0,
                        converged: false,
                    }
                }
            };
            rows.push(row);
        }
    }

    let summary_path = config.output_dir.join("summary.csv");
    write_summary_csv(&summary_path, &rows)?;
    Ok(RunOutcome { summary_path, rows, failures })
}

// ─── comparing summaries ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub mean_rank: f64,
    pub mean_mae: f64,
    /// Relative improvement of the overall best method over the best
    /// inductive baseline, percent; set on the best method's row only.
    pub improvement_pct: Option<f64>,
}

/// Ranks methods by mae_comb within every (scenario, seed) group (rank 1 =
/// smallest; ties share the average rank), then averages ranks and errors
/// per method. Failed rows (NaN mae) don't enter the ranking.
pub fn compare(paths: &[PathBuf]) -> Result<Vec<CompareRow>> {
    if paths.len() < 2 {
        return Err(TtcError::InvalidArgument(
            "compare needs at least two summary files".into(),
        ));
    }
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_summary_csv(p)?);
    }
    let mut groups: BTreeMap<(String, u64), Vec<(f64, String)>> = BTreeMap::new();
    for row in &all {
        if row.mae_comb.is_nan() {
            continue;
        }
        groups
            .entry((row.scenario.clone(), row.seed))
            .or_default()
            .push((row.mae_comb, row.method.clone()));
    }
    let mut rank_sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut mae_sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for members in groups.values_mut() {
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut k = 0;
        while k < members.len() {
            let mut j = k;
            while j + 1 < members.len() && members[j + 1].0 == members[k].0 {
                j += 1;
            }
            // positions k..=j share one mae value; average their 1-based ranks
            let rank = (k + 1 + j + 1) as f64 / 2.0;
            for m in &members[k..=j] {
                let e = rank_sum.entry(m.1.clone()).or_insert((0.0, 0));
                e.0 += rank;
                e.1 += 1;
            }
            k = j + 1;
        }
        for (mae, method) in members.iter() {
            let e = mae_sum.entry(method.clone()).or_insert((0.0, 0));
            e.0 += mae;
            e.1 += 1;
        }
    }
    if rank_sum.is_empty() {
        return Err(TtcError::InvalidArgument(
            "no successful rows to compare".into(),
        ));
    }
    let mut rows: Vec<CompareRow> = rank_sum
        .iter()
        .map(|(method, &(ranks, n))| {
            let (mae, nm) = mae_sum[method];
            CompareRow {
                method: method.clone(),
                mean_rank: ranks / n as f64,
                mean_mae: mae / nm as f64,
                improvement_pct: None,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then_with(|| a.method.cmp(&b.method)));
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean_mae.total_cmp(&b.1.mean_mae))
        .map(|(i, _)| i)
        .unwrap();
    let best_mae = rows[best].mean_mae;
    let best_baseline = rows
        .iter()
        .filter(|r| BASELINE_NAMES.contains(&r.method.as_str()))
        .map(|r| r.mean_mae)
        .min_by(f64::total_cmp);
    if let Some(bb) = best_baseline {
        if bb > 0.0 {
            rows[best].improvement_pct = Some((bb - best_mae) / bb * 100.0);
        }
    }
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("method,mean_rank,mean_mae,improvement_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.method,
            fmt_sig(r.mean_rank),
            fmt_sig(r.mean_mae),
            r.improvement_pct.map(fmt_sig).unwrap_or_default()
        ));
    }
    out
}
