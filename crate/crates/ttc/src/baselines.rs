//! Inductive calibration baselines: curve-to-curve maps (Platt, beta,
//! isotonic, histogram) fitted on (train-curve, cal-curve) value pairs and
//! applied to the train curve at test time, plus a DBSCAN pseudo-label
//! baseline.
//!
//! TPR and TNR get independently fitted maps. Mapped curves are rectified
//! (running max for TPR, running min for TNR) and clipped so they remain
//! valid performance curves.

use crate::curves::{exact_curves, mae_comb, pairwise_distances, PerfCurve, ThresholdGrid};
use crate::embedding::EmbeddingSet;
use crate::error::{Result, TtcError};

const LOGIT_CLIP: f64 = 1e-7;

fn logit(x: f64) -> f64 {
    let x = x.clamp(LOGIT_CLIP, 1.0 - LOGIT_CLIP);
    (x / (1.0 - x)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ─── pool adjacent violators ─────────────────────────────────────────────────

/// Weighted isotonic regression: the non-decreasing sequence minimizing
/// `sum w_k (out_k - y_k)^2`. Violating neighbors are pooled to their
/// weighted mean until the sequence is monotone.
pub fn pava(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    assert_eq!(ys.len(), ws.len(), "weights must match values");
    // stack of blocks: (weight sum, weighted value sum, block length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(ws) {
        assert!(w > 0.0, "weights must be positive");
        let mut block = (w, w * y, 1usize);
        while let Some(&(pw, pwy, plen)) = blocks.last() {
            if pwy / pw <= block.1 / block.0 {
                break;
            }
            blocks.pop();
            block = (pw + block.0, pwy + block.1, plen + block.2);
        }
        blocks.push(block);
    }
    let mut out = Vec::with_capacity(ys.len());
    for (w, wy, len) in blocks {
        let level = wy / w;
        out.extend(std::iter::repeat(level).take(len));
    }
    out
}

// ─── calibration maps ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMethod {
    Platt,
    Beta,
    Isotonic,
    Histogram,
}

impl CalibrationMethod {
    pub const ALL: [CalibrationMethod; 4] = [
        CalibrationMethod::Platt,
        CalibrationMethod::Beta,
        CalibrationMethod::Isotonic,
        CalibrationMethod::Histogram,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMethod::Platt => "platt",
            CalibrationMethod::Beta => "beta",
            CalibrationMethod::Isotonic => "isotonic",
            CalibrationMethod::Histogram => "histogram",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "platt" => Ok(CalibrationMethod::Platt),
            "beta" => Ok(CalibrationMethod::Beta),
            "isotonic" => Ok(CalibrationMethod::Isotonic),
            "histogram" => Ok(CalibrationMethod::Histogram),
            other => Err(TtcError::InvalidArgument(format!(
                "unknown calibration method '{other}'"
            ))),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub enum MapParams {
    Platt {
        slope: f64,
        intercept: f64,
    },
    Beta {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Distinct ascending breakpoints with fitted (non-decreasing) values.
    Isotonic {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    /// Equal-width bins over [0,1]; anchors are the per-bin (mean x, mean y)
    /// of the occupied bins, values rectified non-decreasing.
    Histogram {
        edges: Vec<f64>,
        anchor_x: Vec<f64>,
        anchor_y: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMap {
    pub method: CalibrationMethod,
    pub params: MapParams,
}

fn validate_fit_input(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(TtcError::InvalidArgument(format!(
            "{} xs but {} ys",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(TtcError::InvalidArgument(
            "calibration map needs at least 2 points".into(),
        ));
    }
    for &v in xs.iter().chain(ys) {
        if !(0.0..=1.0).contains(&v) {
            return Err(TtcError::InvalidArgument(format!(
                "calibration value {v} outside [0, 1]"
            )));
        }
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(TtcError::DegenerateInput(
            "all calibration inputs are equal".into(),
        ));
    }
    Ok(())
}

fn solve2(m: [[f64; 2]; 2], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some([
        (r[0] * m[1][1] - r[1] * m[0][1]) / det,
        (m[0][0] * r[1] - m[1][0] * r[0]) / det,
    ])
}

fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    // Gaussian elimination with partial pivoting on the augmented matrix.
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = m[row][3];
        for k in (row + 1)..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

fn fit_platt(xs: &[f64], ys: &[f64]) -> Result<MapParams> {
    let t: Vec<f64> = xs.iter().map(|&x| logit(x)).collect();
    // least squares in logit space as initialization
    let n = t.len() as f64;
    let st: f64 = t.iter().sum();
    let stt: f64 = t.iter().map(|v| v * v).sum();
    let ly: Vec<f64> = ys.iter().map(|&y| logit(y)).collect();
    let sy: f64 = ly.iter().sum();
    let sty: f64 = t.iter().zip(&ly).map(|(a, b)| a * b).sum();
    let (mut a, mut b) = match solve2([[stt, st], [st, n]], [sty, sy]) {
        Some([a, b]) => (a, b),
        None => (1.0, 0.0),
    };
    // Gauss-Newton on the squared error of sigma(a t + b)
    let sse = |a: f64, b: f64| -> f64 {
        t.iter().zip(ys).map(|(&t, &y)| (sigmoid(a * t + b) - y).powi(2)).sum()
    };
    let mut best = sse(a, b);
    for _ in 0..50 {
        let mut jtj = [[1e-12, 0.0], [0.0, 1e-12]];
        let mut jtr = [0.0, 0.0];
        for (&tk, &yk) in t.iter().zip(ys) {
            let p = sigmoid(a * tk + b);
            let r = p - yk;
            let d = p * (1.0 - p);
            jtj[0][0] += d * d * tk * tk;
            jtj[0][1] += d * d * tk;
            jtj[1][0] += d * d * tk;
            jtj[1][1] += d * d;
            jtr[0] -= d * tk * r;
            jtr[1] -= d * r;
        }
        let Some([da, db]) = solve2(jtj, jtr) else { break };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let cand = sse(a + step * da, b + step * db);
            if cand < best {
                a += step * da;
                b += step * db;
                best = cand;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || (da.abs() + db.abs()) < 1e-12 {
            break;
        }
    }
    Ok(MapParams::Platt { slope: a, intercept: b })
}

fn fit_beta(xs: &[f64], ys: &[f64]) -> Result<MapParams> {
    let clip = |x: f64| x.clamp(1e-6, 1.0 - 1e-6);
    let f1: Vec<f64> = xs.iter().map(|&x| clip(x).ln()).collect();
    let f2: Vec<f64> = xs.iter().map(|&x| -(1.0 - clip(x)).ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| logit(y)).collect();
    // ridge least squares on the logit for initialization
    let mut m = [[0.0f64; 4]; 3];
    for k in 0..xs.len() {
        let row = [f1[k], f2[k], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            m[i][3] += row[i] * ly[k];
        }
    }
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += 1e-9;
    }
    let [mut a, mut b, mut c] = solve3(m).unwrap_or([1.0, 1.0, 0.0]);
    a = a.max(0.0);
    b = b.max(0.0);
    // projected gradient descent on the soft-label cross-entropy
    let nll = |a: f64, b: f64, c: f64| -> f64 {
        f1.iter()
            .zip(&f2)
            .zip(ys)
            .map(|((&u, &v), &y)| {
                let p = sigmoid(a * u + b * v + c).clamp(1e-12, 1.0 - 1e-12);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum()
    };
    let mut best = nll(a, b, c);
    let mut lr = 0.5;
    for _ in 0..300 {
        let mut g = [0.0f64; 3];
        for k in 0..xs.len() {
            let p = sigmoid(a * f1[k] + b * f2[k] + c);
            let r = p - ys[k];
            g[0] += r * f1[k];
            g[1] += r * f2[k];
            g[2] += r;
        }
        let scale = 1.0 / xs.len() as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10 {
            break;
        }
        let mut accepted = false;
        for _ in 0..25 {
            let na = (a - lr * g[0]).max(0.0);
            let nb = (b - lr * g[1]).max(0.0);
            let nc = c - lr * g[2];
            let cand = nll(na, nb, nc);
            if cand <= best {
                a = na;
                b = nb;
                c = nc;
                best = cand;
                accepted = true;
                lr *= 1.3;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(MapParams::Beta { a, b, c })
}

fn fit_isotonic(xs: &[f64], ys: &[f64]) -> Result<MapParams> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    // pool exact duplicate xs into weighted points
    let mut gx: Vec<f64> = Vec::new();
    let mut gy: Vec<f64> = Vec::new();
    let mut gw: Vec<f64> = Vec::new();
    for &i in &order {
        if let Some(last) = gx.last() {
            if *last == xs[i] {
                let k = gy.len() - 1;
                gy[k] = (gy[k] * gw[k] + ys[i]) / (gw[k] + 1.0);
                gw[k] += 1.0;
                continue;
            }
        }
        gx.push(xs[i]);
        gy.push(ys[i]);
        gw.push(1.0);
    }
    let fitted = pava(&gy, &gw);
    Ok(MapParams::Isotonic { xs: gx, ys: fitted })
}

fn fit_histogram(xs: &[f64], ys: &[f64], bins: usize) -> Result<MapParams> {
    if bins == 0 {
        return Err(TtcError::InvalidArgument("histogram needs at least one bin".into()));
    }
    let width = 1.0 / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| k as f64 * width).collect();
    let mut sum_x = vec![0.0; bins];
    let mut sum_y = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&x, &y) in xs.iter().zip(ys) {
        let k = ((x / width) as usize).min(bins - 1);
        sum_x[k] += x;
        sum_y[k] += y;
        count[k] += 1;
    }
    let mut anchor_x = Vec::new();
    let mut anchor_y = Vec::new();
    for k in 0..bins {
        if count[k] > 0 {
            anchor_x.push(sum_x[k] / count[k] as f64);
            anchor_y.push(sum_y[k] / count[k] as f64);
        }
    }
    // a calibration map must be non-decreasing; rectify the bin values
    let mut run = f64::NEG_INFINITY;
    for v in anchor_y.iter_mut() {
        run = run.max(*v);
        *v = run;
    }
    Ok(MapParams::Histogram { edges, anchor_x, anchor_y })
}

/// Fits one curve-to-curve map on paired fraction values.
pub fn fit_calibration_map(
    method: CalibrationMethod,
    xs: &[f64],
    ys: &[f64],
) -> Result<CalibrationMap> {
    validate_fit_input(xs, ys)?;
    let params = match method {
        CalibrationMethod::Platt => fit_platt(xs, ys)?,
        CalibrationMethod::Beta => fit_beta(xs, ys)?,
        CalibrationMethod::Isotonic => fit_isotonic(xs, ys)?,
        CalibrationMethod::Histogram => fit_histogram(xs, ys, HISTOGRAM_BINS)?,
    };
    Ok(CalibrationMap { method, params })
}

/// Histogram map with an explicit bin count (the standard entry point uses
/// [`HISTOGRAM_BINS`]).
pub fn fit_histogram_map(xs: &[f64], ys: &[f64], bins: usize) -> Result<CalibrationMap> {
    validate_fit_input(xs, ys)?;
    Ok(CalibrationMap {
        method: CalibrationMethod::Histogram,
        params: fit_histogram(xs, ys, bins)?,
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64, extrapolate: bool) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if xs.len() == 1 {
        return ys[0];
    }
    if x <= xs[0] {
        if !extrapolate {
            return ys[0];
        }
        let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return ys[0] + slope * (x - xs[0]);
    }
    if x >= xs[xs.len() - 1] {
        if !extrapolate {
            return ys[ys.len() - 1];
        }
        let k = xs.len() - 1;
        let slope = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
        return ys[k] + slope * (x - xs[k]);
    }
    let hi = xs.partition_point(|&v| v < x).max(1);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

impl CalibrationMap {
    /// Evaluates the map at a fraction; the result is clipped to [0, 1].
    pub fn predict(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let raw = match &self.params {
            MapParams::Platt { slope, intercept } => sigmoid(slope * logit(x) + intercept),
            MapParams::Beta { a, b, c } => {
                let xc = x.clamp(1e-6, 1.0 - 1e-6);
                sigmoid(a * xc.ln() - b * (1.0 - xc).ln() + c)
            }
            MapParams::Isotonic { xs, ys } => interp(xs, ys, x, false),
            MapParams::Histogram { anchor_x, anchor_y, .. } => {
                interp(anchor_x, anchor_y, x, true)
            }
        };
        raw.clamp(0.0, 1.0)
    }
}

/// Maps a source curve through separately fitted TPR and TNR maps, then
/// rectifies (running max / running min), clips, and pins the boundary
/// values (tpr at the top of the grid is 1, tnr at the bottom is 1) so the
/// result satisfies every performance-curve invariant.
pub fn predict_curve(
    tpr_map: &CalibrationMap,
    tnr_map: &CalibrationMap,
    source: &PerfCurve,
) -> Result<PerfCurve> {
    let mut tpr: Vec<f64> = source.tpr.iter().map(|&x| tpr_map.predict(x)).collect();
    let mut tnr: Vec<f64> = source.tnr.iter().map(|&x| tnr_map.predict(x)).collect();
    let mut run = 0.0f64;
    for v in tpr.iter_mut() {
        run = run.max(*v);
        *v = run;
    }
    let mut run = 1.0f64;
    for v in tnr.iter_mut() {
        run = run.min(*v);
        *v = run;
    }
    *tpr.last_mut().expect("non-empty grid") = 1.0;
    tnr[0] = 1.0;
    PerfCurve::new(source.grid, tpr, tnr)
}

/// A fitted pair of maps for one baseline method.
#[derive(Debug, Clone)]
pub struct CurveCalibrator {
    pub method: CalibrationMethod,
    pub tpr_map: CalibrationMap,
    pub tnr_map: CalibrationMap,
}

impl CurveCalibrator {
    pub fn fit(method: CalibrationMethod, train: &PerfCurve, cal: &PerfCurve) -> Result<Self> {
        if train.grid != cal.grid {
            return Err(TtcError::InvalidArgument(
                "train and cal curves use different grids".into(),
            ));
        }
        Ok(Self {
            method,
            tpr_map: fit_calibration_map(method, &train.tpr, &cal.tpr)?,
            tnr_map: fit_calibration_map(method, &train.tnr, &cal.tnr)?,
        })
    }

    pub fn predict(&self, source: &PerfCurve) -> Result<PerfCurve> {
        predict_curve(&self.tpr_map, &self.tnr_map, source)
    }
}

// ─── DBSCAN pseudo-label baseline ────────────────────────────────────────────

/// Density-based clustering on chord (L2) distances. Neighborhood counting
/// includes the point itself; noise points get label −1. Deterministic:
/// clusters are discovered and expanded in index order.
pub fn dbscan_labels(set: &EmbeddingSet, eps: f64, min_pts: usize) -> Result<Vec<i32>> {
    if !(eps > 0.0) {
        return Err(TtcError::InvalidArgument(format!("eps {eps} must be positive")));
    }
    if min_pts == 0 {
        return Err(TtcError::InvalidArgument("min_pts must be at least 1".into()));
    }
    let n = set.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                let d = (2.0 - 2.0 * set.cosine(i, j)).max(0.0).sqrt();
                d <= eps
            })
            .collect()
    };
    const UNSEEN: i32 = -2;
    let mut labels = vec![UNSEEN; n];
    let mut next = 0i32;
    for i in 0..n {
        if labels[i] != UNSEEN {
            continue;
        }
        let nbrs = neighbors(i);
        if nbrs.len() < min_pts {
            labels[i] = -1;
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = cluster;
        let mut queue: std::collections::VecDeque<usize> = nbrs.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == -1 {
                labels[j] = cluster; // border point adopted by the cluster
            }
            if labels[j] != UNSEEN {
                continue;
            }
            labels[j] = cluster;
            let jn = neighbors(j);
            if jn.len() >= min_pts {
                queue.extend(jn); // core point: expand through it
            }
        }
    }
    Ok(labels)
}

/// Curve implied by DBSCAN pseudo-labels: noise points are dropped, the rest
/// are treated as ground truth.
pub fn dbscan_curve(
    set: &EmbeddingSet,
    eps: f64,
    min_pts: usize,
    grid: &ThresholdGrid,
) -> Result<PerfCurve> {
    let labels = dbscan_labels(set, eps, min_pts)?;
    let keep: Vec<usize> = (0..set.len()).filter(|&i| labels[i] >= 0).collect();
    if keep.len() < 2 {
        return Err(TtcError::DegenerateInput(
            "dbscan left fewer than two labeled points".into(),
        ));
    }
    let pseudo = set.subset(&keep)?.with_labels(keep.iter().map(|&i| labels[i]).collect())?;
    exact_curves(&pseudo, *grid)
}

#[derive(Debug, Clone)]
pub struct DbscanCalibrator {
    pub eps: f64,
    pub min_pts: usize,
    /// Combined curve error of the pseudo-curve against the true cal curve.
    pub cal_mae: f64,
    grid: ThresholdGrid,
}

/// Grid-searches (eps, min_pts) on the calibration split: eps candidates are
/// low quantiles of the pairwise distance distribution, and the winner
/// minimizes the pseudo-curve's combined error against the true cal curve.
pub fn fit_dbscan(cal: &EmbeddingSet, grid: &ThresholdGrid) -> Result<DbscanCalibrator> {
    let truth = exact_curves(cal, *grid)?;
    let mut dists = pairwise_distances(cal);
    dists.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        let idx = ((dists.len() - 1) as f64 * q).round() as usize;
        dists[idx]
    };
    let mut best: Option<DbscanCalibrator> = None;
    for q in [0.02, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40] {
        let eps = quantile(q);
        if !(eps > 0.0) {
            continue;
        }
        for min_pts in [2usize, 3, 5] {
            let Ok(curve) = dbscan_curve(cal, eps, min_pts, grid) else { continue };
            let mae = mae_comb(&curve, &truth)?;
            if best.as_ref().map_or(true, |b| mae < b.cal_mae) {
                best = Some(DbscanCalibrator { eps, min_pts, cal_mae: mae, grid: *grid });
            }
        }
    }
    best.ok_or_else(|| {
        TtcError::CalibrationFailure(
            "no dbscan parameters produced a usable pseudo-label curve".into(),
        )
    })
}

impl DbscanCalibrator {
    pub fn predict(&self, set: &EmbeddingSet) -> Result<PerfCurve> {
        dbscan_curve(set, self.eps, self.min_pts, &self.grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scenario, CountRange, KappaRange, ScenarioConfig};

    fn circle_set(degrees: &[f64], labels: Vec<i32>) -> EmbeddingSet {
        let mut v = Vec::new();
        for d in degrees {
            let t = d.to_radians();
            v.push(t.cos());
            v.push(t.sin());
        }
        EmbeddingSet::new(v, 2, labels).unwrap()
    }

    #[test]
    fn pava_pools_violating_pair() {
        assert_eq!(pava(&[0.9, 0.1], &[1.0, 1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn pava_keeps_monotone_input() {
        let ys = [0.1, 0.3, 0.3, 0.8];
        assert_eq!(pava(&ys, &[1.0; 4]), ys.to_vec());
    }

    #[test]
    fn pava_weighted_cascade() {
        // 1.0 pools with 0.4 to 0.7, then the weight-2 block 0.6 drags the
        // merged block to (0.7*2 + 0.6*2)/4 = 0.65
        let out = pava(&[1.0, 0.4, 0.6], &[1.0, 1.0, 2.0]);
        for v in out {
            assert!((v - 0.65).abs() < 1e-12);
        }
    }

    #[test]
    fn isotonic_pools_two_point_violation() {
        let map = fit_calibration_map(CalibrationMethod::Isotonic, &[0.2, 0.8], &[0.9, 0.1]).unwrap();
        assert!((map.predict(0.2) - 0.5).abs() < 1e-12);
        assert!((map.predict(0.8) - 0.5).abs() < 1e-12);
        assert!((map.predict(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn histogram_two_bins_by_hand() {
        let map = fit_histogram_map(&[0.1, 0.3, 0.7], &[0.2, 0.4, 0.8], 2).unwrap();
        match &map.params {
            MapParams::Histogram { anchor_y, edges, .. } => {
                assert_eq!(edges, &[0.0, 0.5, 1.0]);
                assert_eq!(anchor_y.len(), 2);
                assert!((anchor_y[0] - 0.3).abs() < 1e-12);
                assert!((anchor_y[1] - 0.8).abs() < 1e-12);
            }
            other => panic!("unexpected params {other:?}"),
        }
    }

    #[test]
    fn every_method_reproduces_identity_data() {
        let xs: Vec<f64> = (0..21).map(|k| k as f64 * 0.05).collect();
        for method in CalibrationMethod::ALL {
            let map = fit_calibration_map(method, &xs, &xs).unwrap();
            for &x in &xs {
                let y = map.predict(x);
                assert!(
                    (y - x).abs() < 1e-3,
                    "{}: map({x}) = {y}",
                    method.name()
                );
            }
        }
    }

    #[test]
    fn fit_input_validation() {
        assert!(matches!(
            fit_calibration_map(CalibrationMethod::Platt, &[0.5], &[0.5]),
            Err(TtcError::InvalidArgument(_))
        ));
        assert!(matches!(
            fit_calibration_map(CalibrationMethod::Platt, &[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3]),
            Err(TtcError::DegenerateInput(_))
        ));
        assert!(matches!(
            fit_calibration_map(CalibrationMethod::Platt, &[0.2, 1.4], &[0.1, 0.5]),
            Err(TtcError::InvalidArgument(_))
        ));
        assert!(matches!(
            fit_calibration_map(CalibrationMethod::Platt, &[0.2, 0.4], &[0.1]),
            Err(TtcError::InvalidArgument(_))
        ));
    }

    fn ramp_curve(grid: &ThresholdGrid) -> PerfCurve {
        let n = grid.n_points();
        let tpr: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let tnr: Vec<f64> = tpr.iter().rev().copied().collect();
        PerfCurve::new(*grid, tpr, tnr).unwrap()
    }

    #[test]
    fn identity_fit_reproduces_source_curve() {
        let grid = ThresholdGrid::default_unit_sphere();
        let train = ramp_curve(&grid);
        for method in CalibrationMethod::ALL {
            let calib = CurveCalibrator::fit(method, &train, &train).unwrap();
            let pred = calib.predict(&train).unwrap();
            let dev: f64 = pred
                .tpr
                .iter()
                .zip(&train.tpr)
                .chain(pred.tnr.iter().zip(&train.tnr))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / (2 * grid.n_points()) as f64;
            assert!(dev < 1e-3, "{}: mean deviation {dev}", method.name());
        }
    }

    #[test]
    fn isotonic_learns_constant_shift() {
        let grid = ThresholdGrid::default_unit_sphere();
        let train = ramp_curve(&grid);
        let shifted_tpr: Vec<f64> = train.tpr.iter().map(|&x| (x + 0.05f64).min(1.0)).collect();
        let map = fit_calibration_map(CalibrationMethod::Isotonic, &train.tpr, &shifted_tpr).unwrap();
        for (i, &x) in train.tpr.iter().enumerate() {
            if x > 0.0 && shifted_tpr[i] < 1.0 {
                assert!((map.predict(x) - (x + 0.05)).abs() < 1e-9, "x = {x}");
            }
        }
    }

    #[test]
    fn rectification_forces_valid_curves() {
        // a decreasing map inverts the curve; rectification must restore
        // monotonicity and the constructor must accept the result
        let falling = CalibrationMap {
            method: CalibrationMethod::Platt,
            params: MapParams::Platt { slope: -3.0, intercept: 1.0 },
        };
        let rising = CalibrationMap {
            method: CalibrationMethod::Platt,
            params: MapParams::Platt { slope: -3.0, intercept: -1.0 },
        };
        let grid = ThresholdGrid::default_unit_sphere();
        let source = ramp_curve(&grid);
        let pred = predict_curve(&falling, &rising, &source).unwrap();
        for w in pred.tpr.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in pred.tnr.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn dbscan_three_point_circle() {
        let set = circle_set(&[0.0, 10.0, 180.0], vec![0, 0, 1]);
        assert_eq!(dbscan_labels(&set, 0.5, 2).unwrap(), vec![0, 0, -1]);
        assert_eq!(dbscan_labels(&set, 2.01, 1).unwrap(), vec![0, 0, 0]);
        assert_eq!(dbscan_labels(&set, 1e-9, 2).unwrap(), vec![-1, -1, -1]);
    }

    #[test]
    fn dbscan_chains_through_core_points() {
        // consecutive gaps 0.35, ends 0.68 apart: one cluster via the middle
        let set = circle_set(&[0.0, 20.0, 40.0], vec![0, 0, 0]);
        assert_eq!(dbscan_labels(&set, 0.4, 2).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn dbscan_rejects_bad_params() {
        let set = circle_set(&[0.0, 90.0], vec![0, 1]);
        assert!(matches!(dbscan_labels(&set, 0.0, 2), Err(TtcError::InvalidArgument(_))));
        assert!(matches!(dbscan_labels(&set, 0.5, 0), Err(TtcError::InvalidArgument(_))));
    }

    #[test]
    fn dbscan_grid_search_recovers_separated_classes() {
        let config = ScenarioConfig {
            dim: 8,
            n_train_classes: 3,
            n_cal_classes: 3,
            n_test_classes: 3,
            kappa_train: KappaRange::new(60.0, 80.0).unwrap(),
            kappa_open: KappaRange::new(60.0, 80.0).unwrap(),
            samples_per_class: CountRange { lo: 15, hi: 15 },
            seed: 21,
            ..Default::default()
        };
        let parts = generate_scenario(&config).unwrap();
        let grid = ThresholdGrid::default_unit_sphere();
        let calib = fit_dbscan(&parts.cal, &grid).unwrap();
        assert!(calib.cal_mae < 0.2, "cal mae {}", calib.cal_mae);
        let test_curve = calib.predict(&parts.test).unwrap();
        test_curve.assert_valid();
    }
}
