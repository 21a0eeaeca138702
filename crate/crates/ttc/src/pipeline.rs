//! The transductive calibration pipeline: two-stage training (pretrain on
//! closed-set classes, then reset and finetune only the pair MLP on the
//! disjoint calibration classes), connectivity-threshold selection by
//! cross-validation, and transductive curve estimation that pools predicted
//! pair counts over sampled subgraphs until the curves stop moving.

use crate::curves::{
    chord_distance, condensed_len, exact_curves, mae_comb, pointwise_ae,
    solve_threshold, CalibrationTarget, ConnectivityEstimate, Metric, PairCounter, PerfCurve,
    ThresholdGrid,
};
use crate::embedding::EmbeddingSet;
use crate::error::{Result, TtcError};
use crate::graph::{
    build_full_graph, jitter_features, random_orthogonal, rotate_graph,
    sample_stratified_batches, sample_subgraphs, EmbGraph,
};
use crate::net::{backward, forward, DensityMode, ModelParams, NetConfig};
use crate::optim::{cosine_lr, Adam, AdamConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

// ─── training configuration ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Target node count per stratified training subgraph.
    pub batch_size: usize,
    pub steps: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Weight of the density-matching losses.
    pub lambda: f64,
    pub seed: u64,
    pub stage: TrainStage,
}

impl TrainConfig {
    pub fn pretrain_default(seed: u64) -> Self {
        Self {
            batch_size: 48,
            steps: 800,
            lr_max: 1e-2,
            lr_min: 3e-4,
            lambda: 10.0,
            seed,
            stage: TrainStage::Pretrain,
        }
    }

    pub fn finetune_default(seed: u64) -> Self {
        Self {
            batch_size: 48,
            steps: 1500,
            lr_max: 5e-3,
            lr_min: 3e-4,
            lambda: 10.0,
            seed,
            stage: TrainStage::Finetune,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(TtcError::InvalidArgument("training needs at least one step".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return Err(TtcError::InvalidArgument(format!(
                "learning rates need 0 < lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if self.lambda < 0.0 {
            return Err(TtcError::InvalidArgument(format!(
                "lambda {} must be nonnegative",
                self.lambda
            )));
        }
        if self.batch_size < 4 {
            return Err(TtcError::InvalidArgument(
                "batch size below 4 cannot hold two classes twice".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Total loss per successful step.
    pub loss_trace: Vec<f64>,
    /// Batches skipped for lacking positive or negative pairs.
    pub skipped_batches: usize,
}

/// Members drawn per class in a stratified batch.
const BATCH_PER_CLASS: usize = 4;

/// Threshold selection scores each fold with pooled counts over subgraphs of
/// this size — the size the transductive estimator samples at — so the
/// chosen cutoff is tuned at its real operating point.
const TAU_EVAL_BATCH: usize = 48;
/// Subgraphs pooled for threshold scoring when the calibration set is larger
/// than one batch; each fold only sees its internal pairs, so the pool is
/// sized for folds² dilution.
const TAU_EVAL_SUBGRAPHS: usize = 64;
/// Fixed seed for the shared subgraph pool, so threshold selection is
/// deterministic for a given calibration set.
const TAU_EVAL_SEED: u64 = 0x7A55_E1EC;

/// Mixed into the training seed for the per-batch rotation stream, keeping it
/// decoupled from batch sampling and weight init.
const ROTATION_SEED: u64 = 0x526F_7461_7465_5F21;

/// Feature-noise scale during fine-tuning only. The calibration set is small
/// enough to memorize class by class, and the same set later drives threshold
/// cross-validation, which only ranks thresholds honestly if the model's view
/// of it matches fresh data; the noise smears each class's narrow band of
/// pair cosines into a continuum.
const FT_JITTER_SIGMA: f64 = 0.05;

fn batch_shape(batch_size: usize, n_classes_available: usize) -> (usize, usize) {
    let per_class = BATCH_PER_CLASS.min(batch_size / 2).max(2);
    let n_classes = batch_size.div_ceil(per_class).clamp(2, n_classes_available);
    // when few classes exist, spend the remaining batch budget on depth
    let per_class = (batch_size / n_classes).max(per_class);
    (n_classes, per_class)
}

fn train_loop(
    params: &mut ModelParams,
    set: &EmbeddingSet,
    config: &TrainConfig,
    mode: DensityMode,
    frozen_below: usize,
) -> Result<(Vec<f64>, usize)> {
    config.validate()?;
    let (n_classes, per_class) = batch_shape(config.batch_size, set.class_ids().len());
    let batches = sample_stratified_batches(set, n_classes, per_class, config.steps, config.seed)?;
    let mut opt = Adam::new(params, AdamConfig::default());
    let mut rot_rng = ChaCha8Rng::seed_from_u64(config.seed ^ ROTATION_SEED);
    let mut trace = Vec::with_capacity(config.steps);
    let mut skipped = 0usize;
    for (step, batch) in batches.iter().enumerate() {
        // Connectivity is a function of relative geometry only; spinning each
        // batch through a fresh random rotation keeps the model from keying
        // on the absolute directions of the few classes it trains on.
        // Inference never rotates.
        let mut graph = rotate_graph(
            &build_full_graph(set, batch)?,
            &random_orthogonal(set.dim(), &mut rot_rng),
        )?;
        if config.stage == TrainStage::Finetune {
            graph = jitter_features(&graph, FT_JITTER_SIGMA, &mut rot_rng)?;
        }
        let fwd = forward(params, &graph)?;
        match backward(params, &graph, &fwd, config.lambda, mode) {
            Ok((breakdown, grads)) => {
                let lr = cosine_lr(step, config.steps, config.lr_max, config.lr_min);
                opt.step(params, &grads, lr, frozen_below)?;
                trace.push(breakdown.total);
            }
            Err(TtcError::DegenerateInput(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped * 2 > config.steps {
        return Err(TtcError::TrainingFailure(format!(
            "{skipped} of {} batches lacked positive or negative pairs",
            config.steps
        )));
    }
    Ok((trace, skipped))
}

/// Trains all parameters from scratch on the closed-set training classes.
pub fn pretrain(config: &TrainConfig, d_train: &EmbeddingSet) -> Result<TrainOutcome> {
    pretrain_with_mode(config, d_train, DensityMode::Both)
}

/// Pretraining with an explicit density-loss ablation mode.
pub fn pretrain_with_mode(
    config: &TrainConfig,
    d_train: &EmbeddingSet,
    mode: DensityMode,
) -> Result<TrainOutcome> {
    if d_train.class_ids().len() < 2 {
        return Err(TtcError::DegenerateInput(
            "pretraining needs at least two classes".into(),
        ));
    }
    let mut params = ModelParams::init(NetConfig::with_dim(d_train.dim()), config.seed)?;
    let (loss_trace, skipped_batches) = train_loop(&mut params, d_train, config, mode, 0)?;
    Ok(TrainOutcome { params, loss_trace, skipped_batches })
}

/// Resets the pair MLP from the finetune seed and trains it alone on the
/// calibration classes; the encoder stays bitwise frozen.
pub fn finetune(
    params: &ModelParams,
    config: &TrainConfig,
    d_cal: &EmbeddingSet,
) -> Result<TrainOutcome> {
    finetune_with_mode(params, config, d_cal, DensityMode::Both)
}

pub fn finetune_with_mode(
    params: &ModelParams,
    config: &TrainConfig,
    d_cal: &EmbeddingSet,
    mode: DensityMode,
) -> Result<TrainOutcome> {
    if d_cal.class_ids().len() < 2 {
        return Err(TtcError::DegenerateInput(
            "finetuning needs at least two classes".into(),
        ));
    }
    let mut tuned = params.clone();
    tuned.reinit_mlp(config.seed);
    let frozen = tuned.first_mlp_tensor();
    let (loss_trace, skipped_batches) = train_loop(&mut tuned, d_cal, config, mode, frozen)?;
    Ok(TrainOutcome { params: tuned, loss_trace, skipped_batches })
}

// ─── connectivity models ─────────────────────────────────────────────────────

/// Anything that predicts same-class probabilities for all pairs of a fully
/// connected subgraph (condensed i < j order).
pub trait ConnectivityModel {
    fn predict(&self, graph: &EmbGraph) -> Result<Vec<f64>>;
}

/// The trained network.
pub struct NetConnectivity<'a> {
    pub params: &'a ModelParams,
}

impl ConnectivityModel for NetConnectivity<'_> {
    fn predict(&self, graph: &EmbGraph) -> Result<Vec<f64>> {
        Ok(forward(self.params, graph)?.p)
    }
}

/// Ground-truth connectivity from labels; the reference harness for
/// equivalence tests.
pub struct OracleConnectivity;

impl ConnectivityModel for OracleConnectivity {
    fn predict(&self, graph: &EmbGraph) -> Result<Vec<f64>> {
        let labels = graph.labels();
        let n = graph.n();
        let mut p = Vec::with_capacity(condensed_len(n));
        for i in 0..n {
            for j in (i + 1)..n {
                p.push(if labels[i] == labels[j] { 1.0 } else { 0.0 });
            }
        }
        Ok(p)
    }
}

/// Pair probabilities and distances of one subgraph, in a form the curve
/// estimators accept.
pub fn graph_estimate(graph: &EmbGraph, p: &[f64]) -> Result<ConnectivityEstimate> {
    let n = graph.n();
    if p.len() != condensed_len(n) {
        return Err(TtcError::InvalidArgument(format!(
            "{} probabilities for a {n}-node graph",
            p.len()
        )));
    }
    let mut pairs = Vec::with_capacity(p.len());
    let mut dist = Vec::with_capacity(p.len());
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
            dist.push(chord_distance(graph.feature(i), graph.feature(j)));
        }
    }
    ConnectivityEstimate::new(pairs, p.to_vec(), dist)
}

// ─── connectivity-threshold selection ────────────────────────────────────────

/// The default candidate thresholds: 0.05 through 0.95 in steps of 0.05.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Share of unordered pairs that are same-class.
fn same_pair_share(labels: &[i32]) -> f64 {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let all = labels.len() * labels.len().saturating_sub(1) / 2;
    if all == 0 {
        return 0.0;
    }
    let pos: usize = counts.values().map(|&n| n * (n - 1) / 2).sum();
    pos as f64 / all as f64
}

/// Selects the connectivity threshold by class-wise cross-validation on the
/// calibration set: classes are dealt round-robin into folds, predictions are
/// taken on deployment-sized subgraphs spanning the whole set, and each fold
/// scores a tau by the combined curve error between estimates pooled over its
/// internal pairs and exact curves counted over those same pairs. The winning
/// tau minimizes the mean fold error; taus that produce a degenerate estimate
/// in any usable fold are excluded, and ties break toward 0.5, then toward
/// the smaller tau.
pub fn select_tau(
    params: &ModelParams,
    d_cal: &EmbeddingSet,
    folds: usize,
    tau_grid: &[f64],
) -> Result<f64> {
    select_tau_with(&NetConnectivity { params }, d_cal, folds, tau_grid)
}

pub fn select_tau_with(
    conn: &dyn ConnectivityModel,
    d_cal: &EmbeddingSet,
    folds: usize,
    tau_grid: &[f64],
) -> Result<f64> {
    if folds < 2 {
        return Err(TtcError::InvalidArgument(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if tau_grid.is_empty() {
        return Err(TtcError::InvalidArgument("empty tau grid".into()));
    }
    for &tau in tau_grid {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(TtcError::InvalidArgument(format!("tau {tau} outside (0, 1)")));
        }
    }
    let grid = ThresholdGrid::default_unit_sphere();
    let class_ids = d_cal.class_ids();
    let mut fold_classes: Vec<Vec<i32>> = vec![Vec::new(); folds];
    for (k, &c) in class_ids.iter().enumerate() {
        fold_classes[k % folds].push(c);
    }

    // Candidates are scored the way deployment consumes them: predictions
    // come from subgraphs of the deployment size sampled across the whole
    // calibration set (so each fold's pairs are judged amid realistic
    // distractor classes), and each fold pools counts over its own internal
    // pairs only. The fold's exact curves are counted over the same kept
    // pairs, so a perfect predictor scores zero at every tau and the score
    // isolates misclassification rather than pair-sampling noise.
    //
    // A fold holds only a handful of classes, so its internal pairs are far
    // more often same-class than the pairs the estimator will face, and that
    // imbalance flips the cost of missed positives versus flooded negatives
    // when ranking thresholds. True-positive fold pairs are therefore thinned
    // deterministically to the calibration set's own global same-class pair
    // share before counting.
    let labels = d_cal.labels();
    let fold_of: Vec<Option<usize>> = labels
        .iter()
        .map(|l| fold_classes.iter().position(|cs| cs.contains(l)))
        .collect();
    let rho = same_pair_share(labels);
    let mut pos_keep = vec![1.0f64; folds];
    for (f, classes) in fold_classes.iter().enumerate() {
        let sizes: Vec<usize> =
            classes.iter().map(|c| labels.iter().filter(|l| *l == c).count()).collect();
        let total: usize = sizes.iter().sum();
        let pos: usize = sizes.iter().map(|&n| n * (n - 1) / 2).sum();
        let all = total * total.saturating_sub(1) / 2;
        if pos > 0 && all > pos && rho < 1.0 {
            pos_keep[f] = (rho * (all - pos) as f64 / ((1.0 - rho) * pos as f64)).min(1.0);
        }
    }
    let graphs = if d_cal.len() <= TAU_EVAL_BATCH {
        vec![build_full_graph(d_cal, &(0..d_cal.len()).collect::<Vec<_>>())?]
    } else {
        sample_subgraphs(d_cal, TAU_EVAL_BATCH, TAU_EVAL_SUBGRAPHS, TAU_EVAL_SEED)?
    };
    let mut counters: Vec<Vec<PairCounter>> = (0..folds)
        .map(|_| tau_grid.iter().map(|_| PairCounter::new(grid)).collect())
        .collect();
    let mut truth_counters: Vec<PairCounter> =
        (0..folds).map(|_| PairCounter::new(grid)).collect();
    let mut excluded = vec![false; tau_grid.len()];
    let mut thin_acc = vec![0.0f64; folds];
    for graph in &graphs {
        let p = conn.predict(graph)?;
        let node_index = graph.node_index();
        let labels_g = graph.labels();
        let mut k = 0;
        for i in 0..graph.n() {
            for j in (i + 1)..graph.n() {
                let (fi, fj) = (fold_of[node_index[i]], fold_of[node_index[j]]);
                if fi == fj {
                    if let Some(f) = fi {
                        let same = labels_g[i] == labels_g[j];
                        let mut keep = true;
                        if same {
                            thin_acc[f] += pos_keep[f];
                            if thin_acc[f] >= 1.0 {
                                thin_acc[f] -= 1.0;
                            } else {
                                keep = false;
                            }
                        }
                        if keep {
                            let d = chord_distance(graph.feature(i), graph.feature(j));
                            truth_counters[f].add(d, same);
                            for (t, &tau) in tau_grid.iter().enumerate() {
                                counters[f][t].add(d, p[k] > tau);
                            }
                        }
                    }
                }
                k += 1;
            }
        }
    }
    let mut mae_sum = vec![0.0f64; tau_grid.len()];
    let mut used_folds = 0usize;
    for (f, truth_counter) in truth_counters.iter().enumerate() {
        // a fold whose pooled pairs miss either pair kind cannot score anything
        let truth = match truth_counter.to_curve() {
            Ok(c) => c,
            Err(TtcError::DegenerateInput(_)) => continue,
            Err(e) => return Err(e),
        };
        used_folds += 1;
        for (t, counter) in counters[f].iter().enumerate() {
            if excluded[t] {
                continue;
            }
            match counter.to_curve() {
                Ok(curve) => mae_sum[t] += mae_comb(&curve, &truth)?,
                Err(TtcError::DegenerateInput(_)) => excluded[t] = true,
                Err(e) => return Err(e),
            }
        }
    }
    if used_folds == 0 {
        return Err(TtcError::CalibrationFailure(
            "no cross-validation fold had two classes".into(),
        ));
    }
    let mut best: Option<(f64, f64, f64)> = None; // (mean mae, |tau - 0.5|, tau)
    for (t, &tau) in tau_grid.iter().enumerate() {
        if excluded[t] {
            continue;
        }
        let key = (mae_sum[t] / used_folds as f64, (tau - 0.5).abs(), tau);
        let better = match &best {
            None => true,
            Some(b) => {
                key.0.total_cmp(&b.0).then(key.1.total_cmp(&b.1)).then(key.2.total_cmp(&b.2))
                    == std::cmp::Ordering::Less
            }
        };
        if better {
            best = Some(key);
        }
    }
    match best {
        Some((_, _, tau)) => Ok(tau),
        None => Err(TtcError::CalibrationFailure(
            "every candidate tau produced degenerate estimates".into(),
        )),
    }
}

// ─── the calibrator model ────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Provenance {
    pub pretrain: TrainConfig,
    pub finetune: Option<TrainConfig>,
}

/// A trained connectivity network together with its selected threshold and
/// the distance grid it calibrates over.
#[derive(Debug, Clone)]
pub struct CalibratorModel {
    pub params: ModelParams,
    pub tau: f64,
    pub grid: ThresholdGrid,
    pub provenance: Option<Provenance>,
}

impl CalibratorModel {
    pub fn new(
        params: ModelParams,
        tau: f64,
        grid: ThresholdGrid,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(TtcError::InvalidArgument(format!("tau {tau} outside (0, 1)")));
        }
        Ok(Self { params, tau, grid, provenance })
    }
}

// ─── transductive estimation ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransductionConfig {
    /// Nodes per sampled subgraph.
    pub batch_size: usize,
    /// Subgraphs sampled per round.
    pub subgraphs_per_round: usize,
    pub max_rounds: usize,
    /// Stop once the pooled curves move less than this between rounds.
    pub stop_tol: f64,
    pub seed: u64,
}

impl TransductionConfig {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        Self { batch_size, subgraphs_per_round: 20, max_rounds: 100, stop_tol: 1e-3, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(TtcError::InvalidArgument("batch size must be at least 2".into()));
        }
        if self.subgraphs_per_round == 0 || self.max_rounds == 0 {
            return Err(TtcError::InvalidArgument(
                "need at least one subgraph per round and one round".into(),
            ));
        }
        if !(self.stop_tol > 0.0) {
            return Err(TtcError::InvalidArgument(format!(
                "stop tolerance {} must be positive",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSolution {
    pub target: CalibrationTarget,
    /// None when the estimated curve never reaches the target.
    pub d_opt: Option<f64>,
    /// Error of the truth curve at d_opt vs the target; evaluation mode only.
    pub ae: Option<f64>,
}

/// Everything a calibration run produces.
#[derive(Debug, Clone)]
pub struct TtcReport {
    pub estimated: PerfCurve,
    /// Exact curves when the test set carries at least two classes.
    pub truth: Option<PerfCurve>,
    pub solutions: Vec<TargetSolution>,
    pub mae_comb: Option<f64>,
    /// Max absolute pooled-curve change per round; infinite while the pooled
    /// counts are still one-sided.
    pub convergence_trace: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

fn max_abs_change(a: &PerfCurve, b: &PerfCurve) -> f64 {
    a.tpr
        .iter()
        .zip(&b.tpr)
        .chain(a.tnr.iter().zip(&b.tnr))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Estimates the test curves transductively: each round samples subgraphs,
/// thresholds the model's pair probabilities at tau, pools the predicted
/// positive/negative counts across all rounds so far, and recomputes the
/// curve; stops when the curve moves less than `stop_tol` or rounds run out
/// (reported via the `converged` flag).
pub fn transductive_estimate(
    conn: &dyn ConnectivityModel,
    tau: f64,
    d_test: &EmbeddingSet,
    grid: ThresholdGrid,
    tc: &TransductionConfig,
) -> Result<TtcReport> {
    tc.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(TtcError::InvalidArgument(format!("tau {tau} outside (0, 1)")));
    }
    if tc.batch_size > d_test.len() {
        return Err(TtcError::InvalidArgument(format!(
            "batch size {} exceeds test set size {}",
            tc.batch_size,
            d_test.len()
        )));
    }
    let mut counter = PairCounter::new(grid);
    let mut prev: Option<PerfCurve> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0usize;
    for round in 0..tc.max_rounds {
        rounds = round + 1;
        let graphs = sample_subgraphs(
            d_test,
            tc.batch_size,
            tc.subgraphs_per_round,
            tc.seed.wrapping_add(round as u64),
        )?;
        for graph in &graphs {
            let p = conn.predict(graph)?;
            if p.len() != condensed_len(graph.n()) {
                return Err(TtcError::InvalidArgument(format!(
                    "model returned {} probabilities for a {}-node graph",
                    p.len(),
                    graph.n()
                )));
            }
            let mut k = 0usize;
            for i in 0..graph.n() {
                for j in (i + 1)..graph.n() {
                    let d = chord_distance(graph.feature(i), graph.feature(j));
                    counter.add(d, p[k] > tau);
                    k += 1;
                }
            }
        }
        match counter.to_curve() {
            Ok(curve) => {
                let change = match &prev {
                    Some(pc) => max_abs_change(pc, &curve),
                    // first usable round: measured against flat-zero curves
                    None => curve
                        .tpr
                        .iter()
                        .chain(&curve.tnr)
                        .fold(0.0f64, |m, &v| m.max(v.abs())),
                };
                trace.push(change);
                prev = Some(curve);
                if change < tc.stop_tol {
                    converged = true;
                    break;
                }
            }
            Err(TtcError::DegenerateInput(_)) => trace.push(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    let Some(estimated) = prev else {
        return Err(TtcError::CalibrationFailure(format!(
            "pooled pair counts still one-sided after {rounds} rounds"
        )));
    };
    Ok(TtcReport {
        estimated,
        truth: None,
        solutions: Vec::new(),
        mae_comb: None,
        convergence_trace: trace,
        rounds,
        converged,
    })
}

/// The four standard operating points reported everywhere: TPR ≥ 0.8/0.9 and
/// TNR ≥ 0.8/0.9.
pub fn canonical_targets() -> Vec<CalibrationTarget> {
    vec![
        CalibrationTarget::new(Metric::Tpr, 0.8).unwrap(),
        CalibrationTarget::new(Metric::Tpr, 0.9).unwrap(),
        CalibrationTarget::new(Metric::Tnr, 0.8).unwrap(),
        CalibrationTarget::new(Metric::Tnr, 0.9).unwrap(),
    ]
}

/// Transductive estimation plus threshold solving; when the test set carries
/// labels (two or more classes), also fills the exact curves, the combined
/// curve error, and the per-target pointwise error.
pub fn calibrate(
    model: &CalibratorModel,
    d_test: &EmbeddingSet,
    targets: &[CalibrationTarget],
    tc: &TransductionConfig,
) -> Result<TtcReport> {
    calibrate_with(
        &NetConnectivity { params: &model.params },
        model.tau,
        model.grid,
        d_test,
        targets,
        tc,
    )
}

pub fn calibrate_with(
    conn: &dyn ConnectivityModel,
    tau: f64,
    grid: ThresholdGrid,
    d_test: &EmbeddingSet,
    targets: &[CalibrationTarget],
    tc: &TransductionConfig,
) -> Result<TtcReport> {
    let mut report = transductive_estimate(conn, tau, d_test, grid, tc)?;
    for &target in targets {
        let d_opt = match solve_threshold(&report.estimated, target) {
            Ok(d) => Some(d),
            Err(TtcError::UnreachableTarget { .. }) => None,
            Err(e) => return Err(e),
        };
        report.solutions.push(TargetSolution { target, d_opt, ae: None });
    }
    if d_test.class_ids().len() >= 2 {
        let truth = exact_curves(d_test, grid)?;
        report.mae_comb = Some(mae_comb(&report.estimated, &truth)?);
        for sol in &mut report.solutions {
            if let Some(d) = sol.d_opt {
                sol.ae = Some(pointwise_ae(&truth, d, sol.target)?);
            }
        }
        report.truth = Some(truth);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scenario, sample_vmf, CountRange, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario_set(classes: usize, per_class: usize, seed: u64) -> EmbeddingSet {
        let config = ScenarioConfig {
            dim: 8,
            n_train_classes: classes,
            n_cal_classes: 2,
            n_test_classes: 2,
            samples_per_class: CountRange { lo: per_class, hi: per_class },
            seed,
            ..Default::default()
        };
        generate_scenario(&config).unwrap().train
    }

    fn quick_config(steps: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            steps,
            lr_max: 3e-3,
            lr_min: 1e-4,
            lambda: 10.0,
            seed,
            stage: TrainStage::Pretrain,
        }
    }

    #[test]
    fn pretrain_separates_orthogonal_classes() {
        let dim = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut e1 = vec![0.0; dim];
        e1[0] = 1.0;
        let mut e2 = vec![0.0; dim];
        e2[1] = 1.0;
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for (mean, label) in [(e1, 0i32), (e2, 1i32)] {
            for v in sample_vmf(&mean, 100.0, 24, &mut rng).unwrap() {
                vectors.extend(v);
                labels.push(label);
            }
        }
        let set = EmbeddingSet::new(vectors, dim, labels).unwrap();
        let config = TrainConfig { batch_size: 32, lr_max: 1e-2, ..quick_config(400, 41) };
        let out = pretrain(&config, &set).unwrap();
        let idx: Vec<usize> = (0..set.len()).collect();
        let graph = build_full_graph(&set, &idx).unwrap();
        let p = forward(&out.params, &graph).unwrap().p;
        let labels = graph.labels();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        let mut k = 0;
        for i in 0..graph.n() {
            for j in (i + 1)..graph.n() {
                if labels[i] == labels[j] {
                    pos.push(p[k]);
                } else {
                    neg.push(p[k]);
                }
                k += 1;
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&pos) > 0.75 && mean(&neg) < 0.25,
            "weak separation: mean positive p {}, mean negative p {}",
            mean(&pos),
            mean(&neg)
        );
        // What deployment actually relies on: mass on the right side of 0.5.
        let frac = |v: &[f64], above: bool| {
            v.iter().filter(|&&p| (p > 0.5) == above).count() as f64 / v.len() as f64
        };
        assert!(frac(&pos, true) > 0.9, "positive pairs above 0.5: {}", frac(&pos, true));
        assert!(frac(&neg, false) > 0.9, "negative pairs below 0.5: {}", frac(&neg, false));
    }

    #[test]
    fn pretrain_deterministic() {
        let set = scenario_set(4, 8, 42);
        let a = pretrain(&quick_config(20, 43), &set).unwrap();
        let b = pretrain(&quick_config(20, 43), &set).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn train_config_validation() {
        let set = scenario_set(4, 8, 44);
        let mut config = quick_config(0, 1);
        assert!(matches!(pretrain(&config, &set), Err(TtcError::InvalidArgument(_))));
        config.steps = 10;
        config.lr_min = 0.0;
        assert!(matches!(pretrain(&config, &set), Err(TtcError::InvalidArgument(_))));
        config.lr_min = 1e-4;
        config.lambda = -1.0;
        assert!(matches!(pretrain(&config, &set), Err(TtcError::InvalidArgument(_))));
    }

    #[test]
    fn finetune_freezes_encoder_and_resets_mlp() {
        let train_set = scenario_set(4, 8, 45);
        let base = scenario_set(3, 8, 46);
        let cal_set =
            base.with_labels(base.labels().iter().map(|&l| l + 100).collect()).unwrap();
        let pre = pretrain(&quick_config(25, 47), &train_set).unwrap();
        let mut ft_config = quick_config(25, 48);
        ft_config.stage = TrainStage::Finetune;
        let ft = finetune(&pre.params, &ft_config, &cal_set).unwrap();
        assert_eq!(ft.params.gat_w, pre.params.gat_w, "encoder weights moved");
        assert_eq!(ft.params.gat_a, pre.params.gat_a, "attention vectors moved");
        assert_ne!(ft.params.mlp_w1, pre.params.mlp_w1, "mlp did not train");
    }

    #[test]
    fn select_tau_oracle_returns_center() {
        let set = scenario_set(4, 6, 49);
        let tau = select_tau_with(&OracleConnectivity, &set, 2, &default_tau_grid()).unwrap();
        assert_eq!(tau, 0.5);
    }

    struct SmoothedOracle {
        pos: f64,
        neg: f64,
    }

    impl ConnectivityModel for SmoothedOracle {
        fn predict(&self, graph: &EmbGraph) -> Result<Vec<f64>> {
            let labels = graph.labels();
            let n = graph.n();
            let mut p = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    p.push(if labels[i] == labels[j] { self.pos } else { self.neg });
                }
            }
            Ok(p)
        }
    }

    #[test]
    fn select_tau_smoothed_oracle_returns_center() {
        let set = scenario_set(4, 6, 50);
        let model = SmoothedOracle { pos: 0.7, neg: 0.3 };
        let tau = select_tau_with(&model, &set, 2, &default_tau_grid()).unwrap();
        assert_eq!(tau, 0.5);
    }

    #[test]
    fn select_tau_rejects_single_fold() {
        let set = scenario_set(4, 6, 51);
        assert!(matches!(
            select_tau_with(&OracleConnectivity, &set, 1, &default_tau_grid()),
            Err(TtcError::InvalidArgument(_))
        ));
    }

    #[test]
    fn full_batch_oracle_matches_exact_curves_exactly() {
        let set = scenario_set(3, 10, 52);
        let grid = ThresholdGrid::default_unit_sphere();
        let mut tc = TransductionConfig::new(set.len(), 53);
        tc.subgraphs_per_round = 1;
        let report = transductive_estimate(&OracleConnectivity, 0.5, &set, grid, &tc).unwrap();
        let exact = exact_curves(&set, grid).unwrap();
        assert_eq!(report.estimated.tpr, exact.tpr);
        assert_eq!(report.estimated.tnr, exact.tnr);
        assert!(report.converged);
        assert_eq!(report.rounds, 2, "round two adds the same pairs and stops");
    }

    #[test]
    fn infinite_stop_tol_means_one_round() {
        let set = scenario_set(3, 10, 54);
        let grid = ThresholdGrid::default_unit_sphere();
        let mut tc = TransductionConfig::new(12, 55);
        tc.stop_tol = f64::INFINITY;
        let report = transductive_estimate(&OracleConnectivity, 0.5, &set, grid, &tc).unwrap();
        assert_eq!(report.rounds, 1);
        assert_eq!(report.convergence_trace.len(), 1);
        assert!(report.converged);
    }

    #[test]
    fn degenerate_pooled_counts_fail_after_max_rounds() {
        // single-class set: the oracle never predicts a negative pair
        let set = scenario_set(3, 8, 56);
        let one_class = set.subset(&set.indices_of_class(set.class_ids()[0])).unwrap();
        let grid = ThresholdGrid::default_unit_sphere();
        let mut tc = TransductionConfig::new(4, 57);
        tc.max_rounds = 3;
        match transductive_estimate(&OracleConnectivity, 0.5, &one_class, grid, &tc) {
            Err(TtcError::CalibrationFailure(msg)) => assert!(msg.contains("3 rounds")),
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }

    #[test]
    fn calibrate_oracle_full_batch_matches_direct_solving() {
        let set = scenario_set(3, 10, 58);
        let grid = ThresholdGrid::default_unit_sphere();
        let mut tc = TransductionConfig::new(set.len(), 59);
        tc.subgraphs_per_round = 1;
        let targets = canonical_targets();
        let report =
            calibrate_with(&OracleConnectivity, 0.5, grid, &set, &targets, &tc).unwrap();
        assert_eq!(report.mae_comb, Some(0.0));
        let exact = exact_curves(&set, grid).unwrap();
        for sol in &report.solutions {
            let direct = solve_threshold(&exact, sol.target).ok();
            assert_eq!(sol.d_opt, direct);
        }
        // monotone in the target: higher TPR needs a larger threshold,
        // higher TNR a smaller one
        let d = |k: usize| report.solutions[k].d_opt.unwrap();
        assert!(d(1) >= d(0));
        assert!(d(3) <= d(2));
        // the truth curve moves by at most one grid jump at the solved point
        for sol in &report.solutions {
            assert!(sol.ae.unwrap() <= 0.2, "ae {}", sol.ae.unwrap());
        }
    }

    #[test]
    fn calibrator_model_validates_tau() {
        let params = ModelParams::init(NetConfig::with_dim(4), 0).unwrap();
        let grid = ThresholdGrid::default_unit_sphere();
        assert!(CalibratorModel::new(params.clone(), 0.0, grid, None).is_err());
        assert!(CalibratorModel::new(params.clone(), 1.0, grid, None).is_err());
        assert!(CalibratorModel::new(params, 0.5, grid, None).is_ok());
    }
}
