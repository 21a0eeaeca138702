//! TPR/TNR curves over a distance-threshold grid, threshold solving, and
//! curve-to-curve error metrics.
//!
//! A verification decision `same(i, j) := d_ij < d` turns a labeled pair set
//! into two curves of the threshold `d`:
//!
//! * `tpr(d)` — fraction of same-class pairs with distance strictly below `d`
//! * `tnr(d)` — fraction of cross-class pairs with distance strictly above `d`
//!
//! Pairs sitting exactly at `d` count as neither; both curves use strict
//! inequalities. The estimated variants replace the ground-truth pair labels
//! with thresholded connectivity probabilities, and both paths share one
//! counting core so that perfect probabilities reproduce the exact curves
//! bit for bit.

use crate::embedding::EmbeddingSet;
use crate::error::{Result, TtcError};

// ─── threshold grid ─────────────────────────────────────────────────────────

/// Uniform grid of candidate distance thresholds, `lo + i * step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ThresholdGrid {
    /// Unit-sphere default: chord distances live in [0, 2], resolved at 0.01.
    pub const DEFAULT_STEP: f64 = 0.01;

    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi <= lo {
            return Err(TtcError::InvalidArgument(format!(
                "bad grid: lo={lo} hi={hi} step={step}"
            )));
        }
        let count = (hi - lo) / step;
        if (count - count.round()).abs() > 1e-9 {
            return Err(TtcError::InvalidArgument(format!(
                "(hi - lo) / step = {count} is not an integer"
            )));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn default_unit_sphere() -> Self {
        Self::new(0.0, 2.0, Self::DEFAULT_STEP).unwrap()
    }

    pub fn n_points(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_points()).map(|i| self.value(i)).collect()
    }

    /// Index of a grid point given its value; errors if `d` is off-grid by
    /// more than 1e-9.
    pub fn index_of(&self, d: f64) -> Result<usize> {
        let k = ((d - self.lo) / self.step).round();
        let idx = k as usize;
        if k < 0.0 || idx >= self.n_points() || (self.value(idx) - d).abs() > 1e-9 {
            return Err(TtcError::InvalidArgument(format!("{d} is not on the grid")));
        }
        Ok(idx)
    }

    /// Smallest index `g` with `value(g) > x`, or `n_points()` if none.
    fn first_above(&self, x: f64) -> usize {
        let n = self.n_points();
        let guess = ((x - self.lo) / self.step).floor() - 2.0;
        let mut g = if guess > 0.0 { guess as usize } else { 0 };
        while g < n && self.value(g) <= x {
            g += 1;
        }
        g
    }

    /// Largest index `g` with `value(g) < x`, or None if none.
    fn last_below(&self, x: f64) -> Option<usize> {
        let n = self.n_points();
        let guess = ((x - self.lo) / self.step).ceil() + 2.0;
        let mut g = if guess >= (n - 1) as f64 { n - 1 } else { guess as usize };
        loop {
            if self.value(g) < x {
                return Some(g);
            }
            if g == 0 {
                return None;
            }
            g -= 1;
        }
    }
}

// ─── curves ──────────────────────────────────────────────────────────────────

/// Which side of the verification decision a target constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Tpr,
    Tnr,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Tpr => "tpr",
            Metric::Tnr => "tnr",
        }
    }
}

/// An operating-point request, e.g. TPR >= 0.9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub metric: Metric,
    pub value: f64,
}

impl CalibrationTarget {
    pub fn new(metric: Metric, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(TtcError::InvalidArgument(format!(
                "target value {value} outside [0, 1]"
            )));
        }
        Ok(Self { metric, value })
    }
}

/// TPR and TNR evaluated at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfCurve {
    pub grid: ThresholdGrid,
    pub tpr: Vec<f64>,
    pub tnr: Vec<f64>,
}

impl PerfCurve {
    pub fn new(grid: ThresholdGrid, tpr: Vec<f64>, tnr: Vec<f64>) -> Result<Self> {
        if tpr.len() != grid.n_points() || tnr.len() != grid.n_points() {
            return Err(TtcError::InvalidArgument(format!(
                "curve length {}/{} does not match grid ({} points)",
                tpr.len(),
                tnr.len(),
                grid.n_points()
            )));
        }
        let curve = Self { grid, tpr, tnr };
        curve.check_monotone()?;
        Ok(curve)
    }

    fn check_monotone(&self) -> Result<()> {
        for w in self.tpr.windows(2) {
            if w[1] < w[0] {
                return Err(TtcError::InvalidArgument("tpr not non-decreasing".into()));
            }
        }
        for w in self.tnr.windows(2) {
            if w[1] > w[0] {
                return Err(TtcError::InvalidArgument("tnr not non-increasing".into()));
            }
        }
        for v in self.tpr.iter().chain(&self.tnr) {
            if !(0.0..=1.0).contains(v) {
                return Err(TtcError::InvalidArgument(format!("curve value {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Panics unless the curve is monotone, in range, and pinned at the
    /// boundaries (`tpr(hi) = 1`, `tnr(lo) = 1`). Test suites call this on
    /// every curve they produce.
    pub fn assert_valid(&self) {
        self.check_monotone().expect("curve monotonicity violated");
        assert!(
            (self.tpr.last().unwrap() - 1.0).abs() < 1e-12,
            "tpr at grid hi is {}, expected 1",
            self.tpr.last().unwrap()
        );
        assert!(
            (self.tnr[0] - 1.0).abs() < 1e-12,
            "tnr at grid lo is {}, expected 1",
            self.tnr[0]
        );
    }

    pub fn value_at(&self, index: usize, metric: Metric) -> f64 {
        match metric {
            Metric::Tpr => self.tpr[index],
            Metric::Tnr => self.tnr[index],
        }
    }

    /// Copy with every tpr/tnr value rounded to `digits` significant digits.
    /// Reports quantize curves before both serialization and scoring so that
    /// written CSVs reproduce the scored numbers exactly.
    pub fn quantized(&self, digits: u32) -> PerfCurve {
        PerfCurve {
            grid: self.grid,
            tpr: self.tpr.iter().map(|&v| round_sig(v, digits)).collect(),
            tnr: self.tnr.iter().map(|&v| round_sig(v, digits)).collect(),
        }
    }
}

/// Rounds to `digits` significant decimal digits (half away from zero).
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - mag);
    (x * scale).round() / scale
}

// ─── pairwise distances ─────────────────────────────────────────────────────

/// Condensed pair ordering shared across the crate: (0,1), (0,2), ...,
/// (0,n-1), (1,2), ... Row-major over i < j.
pub fn condensed_len(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Euclidean distance between two unit vectors, clamped to the chord range
/// [0, 2] to absorb last-bit float drift. Every distance fed into a curve
/// goes through this one expression so different call sites agree bitwise.
pub fn chord_distance(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt().clamp(0.0, 2.0)
}

/// Euclidean distances for all unordered pairs in condensed order.
pub fn pairwise_distances(set: &EmbeddingSet) -> Vec<f64> {
    let n = set.len();
    let mut out = Vec::with_capacity(condensed_len(n));
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(chord_distance(set.row(i), set.row(j)));
        }
    }
    out
}

// ─── the shared counting core ────────────────────────────────────────────────

/// Accumulates pair counts for curve estimation. `exact_curves`,
/// `estimated_curves`, and the pooled transductive estimator all add pairs
/// here, so their tie handling is identical by construction.
#[derive(Debug, Clone)]
pub struct PairCounter {
    grid: ThresholdGrid,
    // below_hist[g] pairs have first_above(distance) == g; prefix sums give
    // the number of predicted-positive pairs strictly below each grid point.
    below_hist: Vec<u64>,
    // above_hist[g] pairs have last_below(distance) == g; suffix sums give
    // the number of predicted-negative pairs strictly above each grid point.
    above_hist: Vec<u64>,
    n_pos: u64,
    n_neg: u64,
}

impl PairCounter {
    pub fn new(grid: ThresholdGrid) -> Self {
        let n = grid.n_points();
        Self {
            grid,
            below_hist: vec![0; n + 1],
            above_hist: vec![0; n],
            n_pos: 0,
            n_neg: 0,
        }
    }

    pub fn grid(&self) -> ThresholdGrid {
        self.grid
    }

    pub fn n_pos(&self) -> u64 {
        self.n_pos
    }

    pub fn n_neg(&self) -> u64 {
        self.n_neg
    }

    /// Records one pair with its distance and predicted (or true) same-class
    /// verdict.
    pub fn add(&mut self, distance: f64, positive: bool) {
        if positive {
            self.n_pos += 1;
            self.below_hist[self.grid.first_above(distance)] += 1;
        } else {
            self.n_neg += 1;
            if let Some(g) = self.grid.last_below(distance) {
                self.above_hist[g] += 1;
            }
        }
    }

    /// Curve from the pooled counts. Errors if either side is empty.
    pub fn to_curve(&self) -> Result<PerfCurve> {
        if self.n_pos == 0 {
            return Err(TtcError::DegenerateInput("no positive pairs".into()));
        }
        if self.n_neg == 0 {
            return Err(TtcError::DegenerateInput("no negative pairs".into()));
        }
        let n = self.grid.n_points();
        let mut tpr = Vec::with_capacity(n);
        let mut acc = 0u64;
        for g in 0..n {
            acc += self.below_hist[g];
            tpr.push(acc as f64 / self.n_pos as f64);
        }
        let mut tnr = vec![0.0; n];
        let mut acc = 0u64;
        for g in (0..n).rev() {
            acc += self.above_hist[g];
            tnr[g] = acc as f64 / self.n_neg as f64;
        }
        PerfCurve::new(self.grid, tpr, tnr)
    }
}

// ─── exact and estimated curves ─────────────────────────────────────────────

/// Ground-truth curves from a labeled set: positives are same-class pairs.
/// Errors on sets with no positive or no negative pair, naming the empty side.
pub fn exact_curves(set: &EmbeddingSet, grid: ThresholdGrid) -> Result<PerfCurve> {
    let n = set.len();
    let labels = set.labels();
    let dists = pairwise_distances(set);
    let mut counter = PairCounter::new(grid);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            counter.add(dists[k], labels[i] == labels[j]);
            k += 1;
        }
    }
    counter.to_curve()
}

/// Pairwise connectivity probabilities with the distances they refer to.
/// `pair_index` uses condensed (i < j) indices into whatever node set the
/// estimate was computed on.
#[derive(Debug, Clone)]
pub struct ConnectivityEstimate {
    pub pair_index: Vec<(usize, usize)>,
    pub prob: Vec<f64>,
    pub distance: Vec<f64>,
}

impl ConnectivityEstimate {
    pub fn new(pair_index: Vec<(usize, usize)>, prob: Vec<f64>, distance: Vec<f64>) -> Result<Self> {
        if pair_index.len() != prob.len() || prob.len() != distance.len() {
            return Err(TtcError::InvalidArgument(format!(
                "estimate field lengths differ: {} pairs, {} probs, {} distances",
                pair_index.len(),
                prob.len(),
                distance.len()
            )));
        }
        for &(i, j) in &pair_index {
            if i >= j {
                return Err(TtcError::InvalidArgument(format!("pair ({i}, {j}) is not i < j")));
            }
        }
        for &p in &prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(TtcError::InvalidArgument(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(Self { pair_index, prob, distance })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }
}

/// Curves from thresholded connectivity: a pair counts as predicted-positive
/// when `p > tau`, predicted-negative when `p <= tau`. Errors when either
/// predicted side is empty, naming the side.
pub fn estimated_curves(est: &ConnectivityEstimate, tau: f64, grid: ThresholdGrid) -> Result<PerfCurve> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(TtcError::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    let mut counter = PairCounter::new(grid);
    for k in 0..est.len() {
        counter.add(est.distance[k], est.prob[k] > tau);
    }
    match counter.to_curve() {
        Err(TtcError::DegenerateInput(_)) if counter.n_pos() == 0 => Err(TtcError::DegenerateInput(
            format!("no predicted-positive pairs at tau={tau}"),
        )),
        Err(TtcError::DegenerateInput(_)) => Err(TtcError::DegenerateInput(format!(
            "no predicted-negative pairs at tau={tau}"
        ))),
        other => other,
    }
}

// ─── threshold solving ───────────────────────────────────────────────────────

/// Picks the operating threshold for a target.
///
/// For a TPR target this is the smallest grid point whose tpr reaches the
/// target (leaving TNR as high as the curve allows); for a TNR target, the
/// largest grid point whose tnr reaches it. Unreachable targets return the
/// best attainable value in the error.
pub fn solve_threshold(curve: &PerfCurve, target: CalibrationTarget) -> Result<f64> {
    let n = curve.grid.n_points();
    match target.metric {
        Metric::Tpr => {
            for g in 0..n {
                if curve.tpr[g] >= target.value {
                    return Ok(curve.grid.value(g));
                }
            }
            Err(TtcError::UnreachableTarget {
                requested: target.value,
                best: *curve.tpr.last().unwrap(),
            })
        }
        Metric::Tnr => {
            for g in (0..n).rev() {
                if curve.tnr[g] >= target.value {
                    return Ok(curve.grid.value(g));
                }
            }
            Err(TtcError::UnreachableTarget {
                requested: target.value,
                best: curve.tnr[0],
            })
        }
    }
}

// ─── curve metrics ───────────────────────────────────────────────────────────

/// Combined mean absolute curve error: half the trapezoid integral of
/// `|dtpr| + |dtnr|` over the grid range. Zero iff the curves agree at every
/// grid point; symmetric; obeys the triangle inequality.
pub fn mae_comb(a: &PerfCurve, b: &PerfCurve) -> Result<f64> {
    if a.grid != b.grid {
        return Err(TtcError::InvalidArgument("curves use different grids".into()));
    }
    let n = a.grid.n_points();
    let g = |i: usize| (a.tpr[i] - b.tpr[i]).abs() + (a.tnr[i] - b.tnr[i]).abs();
    let mut integral = 0.5 * (g(0) + g(n - 1));
    for i in 1..n - 1 {
        integral += g(i);
    }
    Ok(0.5 * integral * a.grid.step)
}

/// Absolute error of the truth curve at a solved threshold against the
/// target it was solved for. `d_opt` must lie on the truth curve's grid.
pub fn pointwise_ae(truth: &PerfCurve, d_opt: f64, target: CalibrationTarget) -> Result<f64> {
    let idx = truth.grid.index_of(d_opt)?;
    Ok((truth.value_at(idx, target.metric) - target.value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingSet;

    fn circle_set(degrees: &[f64], labels: &[i32]) -> EmbeddingSet {
        let mut v = Vec::new();
        for &d in degrees {
            let t = d.to_radians();
            v.push(t.cos());
            v.push(t.sin());
        }
        EmbeddingSet::new(v, 2, labels.to_vec()).unwrap()
    }

    /// Chord length between two points on the unit circle, the independent
    /// oracle for the distance computation.
    fn chord(deg: f64) -> f64 {
        2.0 * (deg.to_radians() / 2.0).sin()
    }

    #[test]
    fn grid_construction() {
        let g = ThresholdGrid::default_unit_sphere();
        assert_eq!(g.n_points(), 201);
        assert_eq!(g.value(0), 0.0);
        assert!((g.value(200) - 2.0).abs() < 1e-12);
        assert!(ThresholdGrid::new(0.0, 2.0, 0.013).is_err());
        assert!(ThresholdGrid::new(0.0, 2.0, -0.01).is_err());
        assert!(ThresholdGrid::new(2.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn circle_distances_match_chords() {
        let set = circle_set(&[0.0, 10.0, 180.0], &[0, 0, 1]);
        let d = pairwise_distances(&set);
        assert_eq!(d.len(), 3);
        assert!((d[0] - chord(10.0)).abs() < 1e-12, "got {}", d[0]);
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert!((d[2] - chord(170.0)).abs() < 1e-12);
        // identical vectors sit at distance zero, antipodal at exactly 2
        assert!(chord(10.0) > 0.174 && chord(10.0) < 0.175);
    }

    #[test]
    fn exact_curve_three_points() {
        let set = circle_set(&[0.0, 10.0, 180.0], &[0, 0, 1]);
        let grid = ThresholdGrid::default_unit_sphere();
        let c = exact_curves(&set, grid).unwrap();
        c.assert_valid();
        let at = |d: f64| grid.index_of(d).unwrap();
        // positive pair at 0.174, negative pairs at 1.992 and 2.0
        assert_eq!(c.tpr[at(0.5)], 1.0);
        assert_eq!(c.tnr[at(0.5)], 1.0);
        assert_eq!(c.tpr[at(0.1)], 0.0);
        assert_eq!(c.tnr[at(0.1)], 1.0);
    }

    #[test]
    fn strict_inequalities_at_grid_point() {
        // Two positive pairs at exactly 0.5 and one below; at d = 0.5 only the
        // strictly-below pair counts.
        let grid = ThresholdGrid::default_unit_sphere();
        let mut counter = PairCounter::new(grid);
        counter.add(0.5, true);
        counter.add(0.5, true);
        counter.add(0.3, true);
        counter.add(0.5, false);
        counter.add(0.7, false);
        let c = counter.to_curve().unwrap();
        let at = |d: f64| grid.index_of(d).unwrap();
        assert!((c.tpr[at(0.5)] - 1.0 / 3.0).abs() < 1e-15);
        // the negative pair at exactly 0.5 is not strictly above 0.5 either
        assert!((c.tnr[at(0.5)] - 0.5).abs() < 1e-15);
        assert!((c.tpr[at(0.51)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_pair_sets_error() {
        let grid = ThresholdGrid::default_unit_sphere();
        let all_same = circle_set(&[0.0, 10.0], &[0, 0]);
        match exact_curves(&all_same, grid) {
            Err(TtcError::DegenerateInput(msg)) => assert!(msg.contains("negative")),
            other => panic!("expected degenerate-input, got {other:?}"),
        }
        let all_diff = circle_set(&[0.0, 10.0], &[0, 1]);
        match exact_curves(&all_diff, grid) {
            Err(TtcError::DegenerateInput(msg)) => assert!(msg.contains("positive")),
            other => panic!("expected degenerate-input, got {other:?}"),
        }
    }

    #[test]
    fn estimated_matches_exact_with_oracle_probs() {
        let set = circle_set(&[0.0, 10.0, 180.0], &[0, 0, 1]);
        let grid = ThresholdGrid::default_unit_sphere();
        let dists = pairwise_distances(&set);
        let est = ConnectivityEstimate::new(
            vec![(0, 1), (0, 2), (1, 2)],
            vec![0.9, 0.2, 0.2],
            dists,
        )
        .unwrap();
        let exact = exact_curves(&set, grid).unwrap();
        let estd = estimated_curves(&est, 0.5, grid).unwrap();
        assert_eq!(exact, estd);
    }

    #[test]
    fn estimated_degenerate_sides_named() {
        let est = ConnectivityEstimate::new(vec![(0, 1)], vec![0.9], vec![0.5]).unwrap();
        let grid = ThresholdGrid::default_unit_sphere();
        match estimated_curves(&est, 0.5, grid) {
            Err(TtcError::DegenerateInput(msg)) => assert!(msg.contains("negative"), "{msg}"),
            other => panic!("{other:?}"),
        }
        match estimated_curves(&est, 0.95, grid) {
            Err(TtcError::DegenerateInput(msg)) => assert!(msg.contains("positive"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solve_threshold_picks_first_crossing() {
        let grid = ThresholdGrid::default_unit_sphere();
        let n = grid.n_points();
        // tpr steps from 0 to 1 at 0.43; tnr steps from 1 to 0 there too
        let jump = grid.index_of(0.43).unwrap();
        let tpr: Vec<f64> = (0..n).map(|g| if g >= jump { 1.0 } else { 0.0 }).collect();
        let tnr: Vec<f64> = (0..n).map(|g| if g < jump { 1.0 } else { 0.0 }).collect();
        let c = PerfCurve::new(grid, tpr, tnr).unwrap();
        let d = solve_threshold(&c, CalibrationTarget::new(Metric::Tpr, 0.8).unwrap()).unwrap();
        assert!((d - 0.43).abs() < 1e-12);
        let d = solve_threshold(&c, CalibrationTarget::new(Metric::Tnr, 0.8).unwrap()).unwrap();
        assert!((d - 0.42).abs() < 1e-12);
    }

    #[test]
    fn solve_threshold_linear_ramp() {
        // tpr ramps 0 -> 1 over [0, 1] then saturates; target 0.8 lands at 0.80
        let grid = ThresholdGrid::default_unit_sphere();
        let n = grid.n_points();
        let tpr: Vec<f64> = (0..n).map(|g| (grid.value(g)).min(1.0)).collect();
        let tnr: Vec<f64> = (0..n).map(|g| 1.0 - 0.4 * (grid.value(g) / 2.0)).collect();
        let c = PerfCurve::new(grid, tpr, tnr).unwrap();
        let d = solve_threshold(&c, CalibrationTarget::new(Metric::Tpr, 0.8).unwrap()).unwrap();
        assert!((d - 0.80).abs() < 1e-9, "got {d}");
    }

    #[test]
    fn unreachable_target_reports_best() {
        let grid = ThresholdGrid::default_unit_sphere();
        let n = grid.n_points();
        let tpr = vec![1.0; n];
        let tnr: Vec<f64> = (0..n).map(|g| 0.6 * (1.0 - grid.value(g) / 2.0)).collect();
        let c = PerfCurve::new(grid, tpr, tnr).unwrap();
        match solve_threshold(&c, CalibrationTarget::new(Metric::Tnr, 0.9).unwrap()) {
            Err(TtcError::UnreachableTarget { requested, best }) => {
                assert_eq!(requested, 0.9);
                assert!((best - 0.6).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mae_comb_constant_offset() {
        let grid = ThresholdGrid::default_unit_sphere();
        let n = grid.n_points();
        let base: Vec<f64> = (0..n).map(|g| 0.4 + 0.2 * grid.value(g) / 2.0).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 0.1).collect();
        let tnr = vec![1.0; n];
        let a = PerfCurve::new(grid, base, tnr.clone()).unwrap();
        let b = PerfCurve::new(grid, shifted, tnr).unwrap();
        let m = mae_comb(&a, &b).unwrap();
        assert!((m - 0.1).abs() < 1e-12, "got {m}");
        assert_eq!(mae_comb(&a, &a).unwrap(), 0.0);
        // symmetry
        assert_eq!(m, mae_comb(&b, &a).unwrap());
    }

    #[test]
    fn mae_comb_rejects_grid_mismatch() {
        let g1 = ThresholdGrid::default_unit_sphere();
        let g2 = ThresholdGrid::new(0.0, 2.0, 0.02).unwrap();
        let a = PerfCurve::new(g1, vec![1.0; g1.n_points()], vec![1.0; g1.n_points()]).unwrap();
        let b = PerfCurve::new(g2, vec![1.0; g2.n_points()], vec![1.0; g2.n_points()]).unwrap();
        assert!(matches!(mae_comb(&a, &b), Err(TtcError::InvalidArgument(_))));
    }

    #[test]
    fn pointwise_ae_requires_grid_point() {
        let grid = ThresholdGrid::default_unit_sphere();
        let n = grid.n_points();
        let tpr: Vec<f64> = (0..n).map(|g| (grid.value(g) / 2.0).min(1.0)).collect();
        let mut tpr = tpr;
        *tpr.last_mut().unwrap() = 1.0;
        let tnr = vec![1.0; n];
        let c = PerfCurve::new(grid, tpr, tnr).unwrap();
        let t = CalibrationTarget::new(Metric::Tpr, 0.5).unwrap();
        let ae = pointwise_ae(&c, 1.0, t).unwrap();
        assert!(ae.abs() < 1e-12);
        assert!(pointwise_ae(&c, 1.005, t).is_err());
    }

    #[test]
    fn round_sig_behaviour() {
        assert_eq!(round_sig(0.8131868131868132, 6), 0.813187);
        assert_eq!(round_sig(0.0, 6), 0.0);
        assert_eq!(round_sig(1.0, 6), 1.0);
        assert_eq!(round_sig(0.00123456789, 6), 0.00123457);
        // quantization is idempotent and monotone on [0, 1]
        let xs = [0.0, 1e-9, 0.123456789, 0.5, 0.999999949, 0.99999995, 1.0];
        let q: Vec<f64> = xs.iter().map(|&x| round_sig(x, 6)).collect();
        for w in q.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for &v in &q {
            assert_eq!(round_sig(v, 6), v);
        }
    }
}
