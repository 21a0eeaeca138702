//! Synthetic open-world scenarios: von Mises-Fisher class clusters on the
//! unit hypersphere, arranged into disjoint train/cal/test partitions with
//! controllable distribution gaps between calibration and test.
//!
//! Scenario kinds:
//!
//! * `SameDist` — cal and test classes drawn from the same parameter
//!   distribution (the optimistic assumption inductive calibration relies on).
//! * `ShiftDist` — SameDist, then a perturbation applied to test embeddings
//!   only.
//! * `DiffDistLongtail` — test classes get Zipf(1.0) sample counts truncated
//!   to [5, 400] while cal classes stay uniformly large, so cal mean
//!   samples-per-class exceeds the test mean.
//! * `DiffDistDomain` — test classes move to a disjoint parameter regime:
//!   concentrations scaled down and mean directions confined to a random
//!   half-dimensional subspace.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::embedding::{dot, EmbeddingSet, Partition};
use crate::error::{Result, TtcError};

// ─── config types ────────────────────────────────────────────────────────────

/// Inclusive range a per-class concentration is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaRange {
    pub lo: f64,
    pub hi: f64,
}

impl KappaRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
            return Err(TtcError::InvalidArgument(format!("bad kappa range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        Self { lo: self.lo * factor, hi: self.hi * factor }
    }
}

/// Inclusive range a per-class sample count is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountRange {
    pub lo: usize,
    pub hi: usize,
}

impl CountRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo < 1 || hi < lo {
            return Err(TtcError::InvalidArgument(format!("bad count range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    SameDist,
    ShiftDist,
    DiffDistLongtail,
    DiffDistDomain,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::SameDist => "samedist",
            ScenarioKind::ShiftDist => "shiftdist",
            ScenarioKind::DiffDistLongtail => "diffdist-longtail",
            ScenarioKind::DiffDistDomain => "diffdist-domain",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "samedist" => Ok(ScenarioKind::SameDist),
            "shiftdist" => Ok(ScenarioKind::ShiftDist),
            "diffdist-longtail" => Ok(ScenarioKind::DiffDistLongtail),
            "diffdist-domain" => Ok(ScenarioKind::DiffDistDomain),
            other => Err(TtcError::InvalidArgument(format!("unknown scenario kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbKind {
    /// Per-coordinate Gaussian noise followed by renormalization.
    GaussNoise,
    /// Resample each vector from a vMF centered on it with kappa = 1/magnitude.
    ConcentrationDecay,
    /// One random plane rotation by `magnitude` radians applied to all rows
    /// (an isometry: pairwise distances are preserved).
    MeanDrift,
}

impl PerturbKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbKind::GaussNoise => "gauss-noise",
            PerturbKind::ConcentrationDecay => "concentration-decay",
            PerturbKind::MeanDrift => "mean-drift",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gauss-noise" => Ok(PerturbKind::GaussNoise),
            "concentration-decay" => Ok(PerturbKind::ConcentrationDecay),
            "mean-drift" => Ok(PerturbKind::MeanDrift),
            other => Err(TtcError::InvalidArgument(format!("unknown perturbation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    pub magnitude: f64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbKind, magnitude: f64) -> Result<Self> {
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(TtcError::InvalidArgument(format!("bad perturbation magnitude {magnitude}")));
        }
        Ok(Self { kind, magnitude })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub dim: usize,
    pub n_train_classes: usize,
    pub n_cal_classes: usize,
    pub n_test_classes: usize,
    pub kappa_train: KappaRange,
    pub kappa_open: KappaRange,
    pub samples_per_class: CountRange,
    pub kind: ScenarioKind,
    /// Required for ShiftDist, ignored otherwise.
    pub perturbation: Option<PerturbationSpec>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// Desk-scale defaults: 16-dim sphere, open-class concentrations reaching
    /// well below the train regime — the closed-world embedding model is
    /// tightest on its own training classes, and novel classes spread. The
    /// kappa floors keep clusters detectable at this dimension — a vMF draw
    /// aligns with its center by roughly 1 - (dim-1)/(2 kappa), so kappa near
    /// dim/2 is already almost uniform.
    fn default() -> Self {
        Self {
            dim: 16,
            n_train_classes: 24,
            // Calibration stays the smaller open-world split, but close
            // enough in class count that its pair mix (same- vs cross-class
            // share) resembles what the estimator faces on test data —
            // threshold cross-validation inherits that mix.
            n_cal_classes: 14,
            n_test_classes: 16,
            kappa_train: KappaRange { lo: 90.0, hi: 150.0 },
            kappa_open: KappaRange { lo: 25.0, hi: 90.0 },
            samples_per_class: CountRange { lo: 20, hi: 40 },
            kind: ScenarioKind::SameDist,
            perturbation: None,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(TtcError::InvalidArgument("dim must be at least 2".into()));
        }
        if self.n_train_classes < 2 || self.n_cal_classes < 2 || self.n_test_classes < 2 {
            return Err(TtcError::InvalidArgument(
                "every partition needs at least 2 classes".into(),
            ));
        }
        // Open-world regime: novel classes are never tighter than train ones.
        if self.kappa_open.lo > self.kappa_train.lo || self.kappa_open.hi > self.kappa_train.hi {
            return Err(TtcError::InvalidArgument(format!(
                "kappa_open [{}, {}] must be elementwise <= kappa_train [{}, {}]",
                self.kappa_open.lo, self.kappa_open.hi, self.kappa_train.lo, self.kappa_train.hi
            )));
        }
        if self.kind == ScenarioKind::ShiftDist && self.perturbation.is_none() {
            return Err(TtcError::InvalidArgument(
                "shiftdist requires a perturbation spec".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of one generated class cluster.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub class_id: i32,
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub count: usize,
}

/// The class specs a partition was generated from, for diagnostics.
#[derive(Debug, Clone)]
pub struct ScenarioMeta {
    pub train: Vec<ClassSpec>,
    pub cal: Vec<ClassSpec>,
    pub test: Vec<ClassSpec>,
}

// ─── vMF sampling ────────────────────────────────────────────────────────────

/// Samples `n` points from a von Mises-Fisher distribution on the unit sphere
/// in `R^dim` with the given mean direction and concentration, using Wood's
/// rejection algorithm for the radial component and a uniform tangent.
/// `kappa = 0` reduces to the uniform distribution on the sphere.
pub fn sample_vmf(mean: &[f64], kappa: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let dim = mean.len();
    if dim < 2 {
        return Err(TtcError::InvalidArgument("vMF needs dim >= 2".into()));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(TtcError::InvalidArgument(format!("bad kappa {kappa}")));
    }
    let mnorm = dot(mean, mean).sqrt();
    if (mnorm - 1.0).abs() > 1e-6 {
        return Err(TtcError::InvalidArgument(format!(
            "mean direction has norm {mnorm}, expected 1"
        )));
    }

    let p = dim as f64;
    // Wood (1994): envelope parameters for the cosine w = mu . x.
    let b = (p - 1.0) / (2.0 * kappa + (4.0 * kappa * kappa + (p - 1.0) * (p - 1.0)).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + (p - 1.0) * (1.0 - x0 * x0).ln();
    let beta = Beta::new((p - 1.0) / 2.0, (p - 1.0) / 2.0)
        .map_err(|e| TtcError::InvalidArgument(format!("beta envelope: {e}")))?;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w = loop {
            let z: f64 = beta.sample(rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u: f64 = rng.random_range(0.0..1.0);
            if kappa * w + (p - 1.0) * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w;
            }
        };
        // Uniform direction in the tangent space at `mean`.
        let tangent = loop {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let along = dot(&v, mean);
            for (vi, mi) in v.iter_mut().zip(mean) {
                *vi -= along * mi;
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-12 {
                for vi in v.iter_mut() {
                    *vi /= norm;
                }
                break v;
            }
        };
        let sin_part = (1.0 - w * w).max(0.0).sqrt();
        let mut x: Vec<f64> = mean
            .iter()
            .zip(&tangent)
            .map(|(m, t)| w * m + sin_part * t)
            .collect();
        let norm = dot(&x, &x).sqrt();
        for xi in x.iter_mut() {
            *xi /= norm;
        }
        out.push(x);
    }
    Ok(out)
}

/// Uniform unit vector in `R^dim`.
pub fn uniform_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

// ─── scenario generation ─────────────────────────────────────────────────────

/// Concentration multiplier for the DiffDist-domain test regime.
const DOMAIN_KAPPA_FACTOR: f64 = 0.6;
/// Class means are rejection-sampled until every pairwise |cosine| within a
/// partition stays at or below this — metric-learning embeddings have
/// separated class centers, and uniform directions in moderate dimension
/// would routinely produce near-collinear class pairs. Partitions never
/// share a graph, so cross-partition collisions are harmless.
const MEAN_DOT_CAP: f64 = 0.4;
/// Looser cap for means confined to a subspace: halving the dimension puts
/// the full-space cap past the packing limit for a test-sized class set, and
/// a more crowded layout is the point of the domain shift.
const MEAN_DOT_CAP_SUBSPACE: f64 = 0.5;
/// Rejection budget per class mean before giving up.
const MEAN_DRAW_TRIES: usize = 50_000;
/// Cal-class count range under DiffDist-longtail ("head" classes).
const LONGTAIL_CAL_COUNTS: CountRange = CountRange { lo: 120, hi: 200 };
/// Zipf scale: class at tail rank r gets clamp(round(ZIPF_SCALE / r), 5, 400).
const ZIPF_SCALE: f64 = 400.0;
const ZIPF_MIN: usize = 5;
const ZIPF_MAX: usize = 400;

fn zipf_count(rank: usize) -> usize {
    let raw = (ZIPF_SCALE / rank as f64).round() as usize;
    raw.clamp(ZIPF_MIN, ZIPF_MAX)
}

/// Orthonormal basis of a random `sub_dim`-dimensional subspace, as rows.
fn random_subspace(dim: usize, sub_dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(sub_dim);
    while basis.len() < sub_dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let along = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= along * bi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

fn build_set(specs: &[ClassSpec], dim: usize, rng: &mut ChaCha8Rng) -> Result<EmbeddingSet> {
    let total: usize = specs.iter().map(|s| s.count).sum();
    let mut vectors = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for spec in specs {
        let rows = sample_vmf(&spec.mean, spec.kappa, spec.count, rng)?;
        for row in rows {
            vectors.extend_from_slice(&row);
            labels.push(spec.class_id);
        }
    }
    EmbeddingSet::new(vectors, dim, labels)
}

/// Generates a partition plus the class specs it was built from. Deterministic
/// given the config: the same config yields bitwise-identical embeddings.
pub fn generate_scenario_with_meta(config: &ScenarioConfig) -> Result<(Partition, ScenarioMeta)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;

    let mut next_id: i32 = 0;
    let draw_specs = |n: usize,
                      kappa: KappaRange,
                      counts: Option<&dyn Fn(usize, &mut ChaCha8Rng) -> usize>,
                      means: Option<&[Vec<f64>]>,
                      rng: &mut ChaCha8Rng,
                      next_id: &mut i32|
     -> Result<Vec<ClassSpec>> {
        let mut taken: Vec<Vec<f64>> = Vec::with_capacity(n);
        let cap = if means.is_some() { MEAN_DOT_CAP_SUBSPACE } else { MEAN_DOT_CAP };
        (0..n)
            .map(|rank| {
                let mut tries = 0;
                let mean = loop {
                    let candidate: Vec<f64> = match means {
                        Some(basis) => {
                            // direction inside the spanned subspace
                            let coeff = uniform_direction(basis.len(), rng);
                            let mut m = vec![0.0; dim];
                            for (c, b) in coeff.iter().zip(basis) {
                                for (mi, bi) in m.iter_mut().zip(b) {
                                    *mi += c * bi;
                                }
                            }
                            let norm = dot(&m, &m).sqrt();
                            m.iter().map(|x| x / norm).collect()
                        }
                        None => uniform_direction(dim, rng),
                    };
                    if taken.iter().all(|t| dot(t, &candidate).abs() <= cap) {
                        break candidate;
                    }
                    tries += 1;
                    if tries >= MEAN_DRAW_TRIES {
                        return Err(TtcError::DegenerateInput(format!(
                            "could not place {} separated class means in dimension {dim}",
                            taken.len() + 1
                        )));
                    }
                };
                taken.push(mean.clone());
                let kappa = kappa.sample(rng);
                let count = match counts {
                    Some(f) => f(rank, rng),
                    None => config.samples_per_class.sample(rng),
                };
                let id = *next_id;
                *next_id += 1;
                Ok(ClassSpec { class_id: id, mean, kappa, count })
            })
            .collect()
    };

    let train_specs = draw_specs(
        config.n_train_classes,
        config.kappa_train,
        None,
        None,
        &mut rng,
        &mut next_id,
    )?;

    let cal_counts: Option<Box<dyn Fn(usize, &mut ChaCha8Rng) -> usize>> =
        if config.kind == ScenarioKind::DiffDistLongtail {
            Some(Box::new(|_, rng: &mut ChaCha8Rng| LONGTAIL_CAL_COUNTS.sample(rng)))
        } else {
            None
        };
    let cal_specs = draw_specs(
        config.n_cal_classes,
        config.kappa_open,
        cal_counts.as_deref(),
        None,
        &mut rng,
        &mut next_id,
    )?;

    let (test_kappa, test_counts, test_basis): (
        KappaRange,
        Option<Box<dyn Fn(usize, &mut ChaCha8Rng) -> usize>>,
        Option<Vec<Vec<f64>>>,
    ) = match config.kind {
        ScenarioKind::SameDist | ScenarioKind::ShiftDist => (config.kappa_open, None, None),
        ScenarioKind::DiffDistLongtail => (
            config.kappa_open,
            Some(Box::new(|rank: usize, _: &mut ChaCha8Rng| zipf_count(rank + 1))),
            None,
        ),
        ScenarioKind::DiffDistDomain => (
            config.kappa_open.scaled(DOMAIN_KAPPA_FACTOR),
            None,
            Some(random_subspace(dim, dim.div_ceil(2), &mut rng)),
        ),
    };
    let test_specs = draw_specs(
        config.n_test_classes,
        test_kappa,
        test_counts.as_deref(),
        test_basis.as_deref(),
        &mut rng,
        &mut next_id,
    )?;

    let train = build_set(&train_specs, dim, &mut rng)?;
    let cal = build_set(&cal_specs, dim, &mut rng)?;
    let mut test = build_set(&test_specs, dim, &mut rng)?;

    if config.kind == ScenarioKind::ShiftDist {
        let spec = config.perturbation.expect("validated above");
        // Derived seed keeps the pre-perturbation test identical to SameDist.
        test = perturb_embeddings(&test, spec, config.seed ^ 0x7065_7274_7572_6221)?;
    }

    let partition = Partition::new(train, cal, test)?;
    let meta = ScenarioMeta { train: train_specs, cal: cal_specs, test: test_specs };
    Ok((partition, meta))
}

pub fn generate_scenario(config: &ScenarioConfig) -> Result<Partition> {
    generate_scenario_with_meta(config).map(|(p, _)| p)
}

// ─── perturbations ───────────────────────────────────────────────────────────

/// Applies a perturbation to every row. Magnitude 0 returns the input
/// unchanged, bit for bit, for every kind.
pub fn perturb_embeddings(set: &EmbeddingSet, spec: PerturbationSpec, seed: u64) -> Result<EmbeddingSet> {
    if spec.magnitude == 0.0 {
        return Ok(set.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = set.dim();
    match spec.kind {
        PerturbKind::GaussNoise => {
            let mut vectors = Vec::with_capacity(set.len() * dim);
            for i in 0..set.len() {
                let mut v: Vec<f64> = set
                    .row(i)
                    .iter()
                    .map(|x| x + spec.magnitude * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = dot(&v, &v).sqrt();
                if norm < 1e-12 {
                    return Err(TtcError::DegenerateInput(format!(
                        "row {i} collapsed to zero under noise"
                    )));
                }
                for x in v.iter_mut() {
                    *x /= norm;
                }
                vectors.extend_from_slice(&v);
            }
            EmbeddingSet::new(vectors, dim, set.labels().to_vec())
        }
        PerturbKind::ConcentrationDecay => {
            let kappa = 1.0 / spec.magnitude;
            let mut vectors = Vec::with_capacity(set.len() * dim);
            for i in 0..set.len() {
                let row = set.row(i).to_vec();
                let sampled = sample_vmf(&row, kappa, 1, &mut rng)?;
                vectors.extend_from_slice(&sampled[0]);
            }
            EmbeddingSet::new(vectors, dim, set.labels().to_vec())
        }
        PerturbKind::MeanDrift => {
            // Rotation by `magnitude` radians in a random 2-plane. Isometric,
            // so all pairwise distances are preserved.
            let e1 = uniform_direction(dim, &mut rng);
            let e2 = {
                let mut v = uniform_direction(dim, &mut rng);
                let along = dot(&v, &e1);
                for (vi, ei) in v.iter_mut().zip(&e1) {
                    *vi -= along * ei;
                }
                let norm = dot(&v, &v).sqrt();
                if norm < 1e-8 {
                    return Err(TtcError::DegenerateInput("degenerate rotation plane".into()));
                }
                v.iter().map(|x| x / norm).collect::<Vec<f64>>()
            };
            let (sin_t, cos_t) = spec.magnitude.sin_cos();
            let mut vectors = Vec::with_capacity(set.len() * dim);
            for i in 0..set.len() {
                let x = set.row(i);
                let p1 = dot(x, &e1);
                let p2 = dot(x, &e2);
                let c1 = (cos_t - 1.0) * p1 - sin_t * p2;
                let c2 = sin_t * p1 + (cos_t - 1.0) * p2;
                let v: Vec<f64> = x
                    .iter()
                    .zip(e1.iter().zip(&e2))
                    .map(|(xi, (a, b))| xi + c1 * a + c2 * b)
                    .collect();
                vectors.extend_from_slice(&v);
            }
            EmbeddingSet::new(vectors, dim, set.labels().to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::pairwise_distances;

    fn mean_resultant(rows: &[Vec<f64>]) -> f64 {
        let dim = rows[0].len();
        let mut m = vec![0.0; dim];
        for r in rows {
            for (mi, ri) in m.iter_mut().zip(r) {
                *mi += ri;
            }
        }
        let n = rows.len() as f64;
        (dot(&m, &m)).sqrt() / n
    }

    #[test]
    fn vmf_kappa_zero_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean = uniform_direction(16, &mut rng);
        let rows = sample_vmf(&mean, 0.0, 10_000, &mut rng).unwrap();
        // Uniform sphere: resultant length concentrates near 1/sqrt(n) = 0.01.
        assert!(mean_resultant(&rows) < 0.05);
        for r in rows.iter().take(50) {
            assert!((dot(r, r).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vmf_huge_kappa_hugs_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mean = uniform_direction(16, &mut rng);
        let rows = sample_vmf(&mean, 1e6, 100, &mut rng).unwrap();
        for r in &rows {
            assert!(dot(r, &mean) > 0.999);
        }
    }

    #[test]
    fn vmf_rejects_bad_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_vmf(&[0.5, 0.5], 1.0, 1, &mut rng).is_err());
        assert!(sample_vmf(&[1.0], 1.0, 1, &mut rng).is_err());
    }

    #[test]
    fn scenario_deterministic_and_seed_sensitive() {
        let config = ScenarioConfig { n_train_classes: 3, n_cal_classes: 3, n_test_classes: 3, samples_per_class: CountRange { lo: 5, hi: 8 }, ..Default::default() };
        let a = generate_scenario(&config).unwrap();
        let b = generate_scenario(&config).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.cal, b.cal);
        assert_eq!(a.test, b.test);
        let other = ScenarioConfig { seed: config.seed + 1, ..config };
        let c = generate_scenario(&other).unwrap();
        assert_ne!(a.train.vectors(), c.train.vectors());
    }

    #[test]
    fn partitions_have_disjoint_classes() {
        let config = ScenarioConfig { n_train_classes: 4, n_cal_classes: 3, n_test_classes: 2, samples_per_class: CountRange { lo: 3, hi: 5 }, ..Default::default() };
        let p = generate_scenario(&config).unwrap();
        // Partition::new enforces disjointness; double-check the id layout.
        assert_eq!(p.train.class_ids(), &[0, 1, 2, 3]);
        assert_eq!(p.cal.class_ids(), &[4, 5, 6]);
        assert_eq!(p.test.class_ids(), &[7, 8]);
    }

    #[test]
    fn kappa_open_must_not_exceed_train() {
        let config = ScenarioConfig {
            kappa_train: KappaRange { lo: 10.0, hi: 20.0 },
            kappa_open: KappaRange { lo: 12.0, hi: 18.0 },
            ..Default::default()
        };
        assert!(matches!(generate_scenario(&config), Err(TtcError::InvalidArgument(_))));
    }

    #[test]
    fn class_means_stay_separated_within_partitions() {
        let (_, meta) = generate_scenario_with_meta(&ScenarioConfig::default()).unwrap();
        for specs in [&meta.train, &meta.cal, &meta.test] {
            for (i, a) in specs.iter().enumerate() {
                for b in &specs[i + 1..] {
                    let d = dot(&a.mean, &b.mean).abs();
                    assert!(d <= MEAN_DOT_CAP + 1e-12, "|cos| {d} between class means");
                }
            }
        }
        let domain = ScenarioConfig { kind: ScenarioKind::DiffDistDomain, ..Default::default() };
        let (_, meta) = generate_scenario_with_meta(&domain).unwrap();
        for (i, a) in meta.test.iter().enumerate() {
            for b in &meta.test[i + 1..] {
                let d = dot(&a.mean, &b.mean).abs();
                assert!(d <= MEAN_DOT_CAP_SUBSPACE + 1e-12, "|cos| {d} between domain means");
            }
        }
    }

    #[test]
    fn longtail_heads_outweigh_tail() {
        let config = ScenarioConfig {
            kind: ScenarioKind::DiffDistLongtail,
            n_test_classes: 24,
            ..Default::default()
        };
        let (_, meta) = generate_scenario_with_meta(&config).unwrap();
        let mean = |specs: &[ClassSpec]| {
            specs.iter().map(|s| s.count).sum::<usize>() as f64 / specs.len() as f64
        };
        let cal_mean = mean(&meta.cal);
        let test_mean = mean(&meta.test);
        assert!(cal_mean > test_mean, "cal {cal_mean} vs test {test_mean}");
        for s in &meta.test {
            assert!((ZIPF_MIN..=ZIPF_MAX).contains(&s.count));
        }
        // Zipf head is the largest, tail hits the floor.
        assert_eq!(meta.test[0].count, 400);
        assert_eq!(meta.test[23].count, zipf_count(24));
    }

    #[test]
    fn domain_shift_moves_kappa_and_subspace() {
        let config = ScenarioConfig {
            kind: ScenarioKind::DiffDistDomain,
            n_test_classes: 12,
            ..Default::default()
        };
        let (_, meta) = generate_scenario_with_meta(&config).unwrap();
        for s in &meta.test {
            assert!(s.kappa <= config.kappa_open.hi * DOMAIN_KAPPA_FACTOR + 1e-9);
        }
        // Test means span at most ceil(dim/2) dimensions: Gram-Schmidt over
        // them leaves at most that many vectors with non-negligible residual.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for s in &meta.test {
            let mut v = s.mean.clone();
            for b in &basis {
                let along = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= along * bi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                basis.push(v.iter().map(|x| x / norm).collect());
            }
        }
        assert!(basis.len() <= config.dim.div_ceil(2), "rank {}", basis.len());
    }

    #[test]
    fn shiftdist_zero_magnitude_equals_samedist() {
        let base = ScenarioConfig { n_train_classes: 3, n_cal_classes: 3, n_test_classes: 3, samples_per_class: CountRange { lo: 5, hi: 8 }, ..Default::default() };
        let same = generate_scenario(&base).unwrap();
        let shift = ScenarioConfig {
            kind: ScenarioKind::ShiftDist,
            perturbation: Some(PerturbationSpec { kind: PerturbKind::GaussNoise, magnitude: 0.0 }),
            ..base
        };
        let shifted = generate_scenario(&shift).unwrap();
        assert_eq!(same.test, shifted.test);
        assert_eq!(same.train, shifted.train);
    }

    #[test]
    fn perturb_zero_magnitude_is_identity() {
        let config = ScenarioConfig { n_train_classes: 2, n_cal_classes: 2, n_test_classes: 2, samples_per_class: CountRange { lo: 4, hi: 6 }, ..Default::default() };
        let p = generate_scenario(&config).unwrap();
        for kind in [PerturbKind::GaussNoise, PerturbKind::ConcentrationDecay, PerturbKind::MeanDrift] {
            let out = perturb_embeddings(&p.test, PerturbationSpec { kind, magnitude: 0.0 }, 9).unwrap();
            assert_eq!(out, p.test);
        }
    }

    #[test]
    fn gauss_noise_decays_within_class_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean = uniform_direction(16, &mut rng);
        let rows = sample_vmf(&mean, 50.0, 400, &mut rng).unwrap();
        let mut vectors = Vec::new();
        for r in &rows {
            vectors.extend_from_slice(r);
        }
        let set = EmbeddingSet::new(vectors, 16, vec![0; 400]).unwrap();
        let noisy = perturb_embeddings(
            &set,
            PerturbationSpec { kind: PerturbKind::GaussNoise, magnitude: 0.5 },
            13,
        )
        .unwrap();
        let mean_cos = |s: &EmbeddingSet| {
            let mut acc = 0.0;
            let mut k = 0u64;
            for i in 0..s.len() {
                for j in (i + 1)..s.len() {
                    acc += s.cosine(i, j);
                    k += 1;
                }
            }
            acc / k as f64
        };
        assert!(mean_cos(&noisy) < mean_cos(&set) - 0.1);
    }

    #[test]
    fn concentration_decay_scatters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mean = uniform_direction(16, &mut rng);
        let rows = sample_vmf(&mean, 200.0, 200, &mut rng).unwrap();
        let mut vectors = Vec::new();
        for r in &rows {
            vectors.extend_from_slice(r);
        }
        let set = EmbeddingSet::new(vectors, 16, vec![0; 200]).unwrap();
        let gentle = perturb_embeddings(
            &set,
            PerturbationSpec { kind: PerturbKind::ConcentrationDecay, magnitude: 0.02 },
            19,
        )
        .unwrap();
        let harsh = perturb_embeddings(
            &set,
            PerturbationSpec { kind: PerturbKind::ConcentrationDecay, magnitude: 0.5 },
            19,
        )
        .unwrap();
        let mean_dot = |a: &EmbeddingSet, b: &EmbeddingSet| {
            (0..a.len()).map(|i| dot(a.row(i), b.row(i))).sum::<f64>() / a.len() as f64
        };
        // kappa = 1/magnitude. In d=16 a vMF draw aligns with its center by
        // about 1 - (d-1)/(2*kappa): ~0.85 at kappa=50, ~0.13 at kappa=2.
        let g = mean_dot(&set, &gentle);
        assert!((0.8..0.92).contains(&g), "gentle alignment {g}");
        assert!(mean_dot(&set, &harsh) < g - 0.3);
    }

    #[test]
    fn mean_drift_preserves_pairwise_distances() {
        let config = ScenarioConfig { n_train_classes: 2, n_cal_classes: 2, n_test_classes: 3, samples_per_class: CountRange { lo: 10, hi: 15 }, ..Default::default() };
        let p = generate_scenario(&config).unwrap();
        let drifted = perturb_embeddings(
            &p.test,
            PerturbationSpec { kind: PerturbKind::MeanDrift, magnitude: 0.7 },
            23,
        )
        .unwrap();
        let before = pairwise_distances(&p.test);
        let after = pairwise_distances(&drifted);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
        // and it actually moved the points
        let moved = (0..p.test.len()).any(|i| (dot(p.test.row(i), drifted.row(i)) - 1.0).abs() > 1e-3);
        assert!(moved);
    }
}
