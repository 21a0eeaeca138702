//! Pairwise connectivity network: a single graph-attention layer encodes
//! nodes, a two-layer MLP scores directed pairs, and the symmetrized sigmoid
//! output is the probability that a pair is same-class.
//!
//! Per attention head with weight `W` and attention vector `a = [a1; a2]`:
//!
//! ```text
//! g_i   = W f_i
//! e_ij  = leaky_relu(a1.g_i + a2.g_j)          (j != i, fully connected)
//! alpha = softmax_j(e_ij)
//! z_i   = elu(sum_j alpha_ij g_j)              heads concatenated
//! ```
//!
//! A directed pair (i, j) is scored from `[z_i | f_i | z_j | f_j]` through
//! `elu` hidden units and a sigmoid; `p_ij` averages both directions, making
//! the output exactly symmetric.
//!
//! Training minimizes a balanced connectivity cross-entropy plus
//! mean-squared density-matching terms:
//!
//! ```text
//! l_conn  = -1/2 [ mean_pos ln p + mean_neg ln(1 - p) ]
//! l_s_avg = mean_i (s_avg_i - soft_s_avg_i)^2
//! l_s_nbr = mean_i (s_nbr_i - soft_s_nbr_i)^2
//! total   = l_conn + lambda (l_s_nbr + l_s_avg)
//! ```
//!
//! where the soft densities replace the same-class indicator with `p`:
//! `soft_s_avg_i = mean_j a_ij p_ij`, `soft_s_nbr_i = mean_j a_ij (2 p_ij - 1)`.
//! All gradients are computed in closed form (exact reverse mode), no
//! autodiff library involved.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curves::condensed_len;
use crate::density::{full_neighborhoods, node_densities};
use crate::error::{Result, TtcError};
use crate::graph::EmbGraph;

/// Probabilities are clipped into this range inside logarithms.
pub const PROB_CLIP: f64 = 1e-7;

// ─── configuration and parameters ────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Input embedding dimension.
    pub dim: usize,
    /// Hidden width per attention head.
    pub gat_hidden: usize,
    /// Number of attention heads (outputs are concatenated).
    pub heads: usize,
    /// Width of the pair MLP's hidden layer.
    pub mlp_hidden: usize,
    /// Negative-side slope of the attention leaky ReLU.
    pub leaky_slope: f64,
}

impl NetConfig {
    pub fn with_dim(dim: usize) -> Self {
        Self { dim, gat_hidden: 32, heads: 2, mlp_hidden: 64, leaky_slope: 0.2 }
    }

    /// Node encoding width (all heads concatenated).
    pub fn enc_dim(&self) -> usize {
        self.heads * self.gat_hidden
    }

    /// Pair feature width: encoding plus raw embedding, for both endpoints.
    pub fn pair_dim(&self) -> usize {
        2 * (self.enc_dim() + self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.gat_hidden == 0 || self.heads == 0 || self.mlp_hidden == 0 {
            return Err(TtcError::InvalidArgument("zero-sized network dimension".into()));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(TtcError::InvalidArgument(format!(
                "leaky slope {} outside [0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }
}

/// All learnable tensors. The same struct doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: NetConfig,
    /// Per head: gat_hidden x dim, row-major.
    pub gat_w: Vec<Vec<f64>>,
    /// Per head: 2 * gat_hidden ([a1; a2]).
    pub gat_a: Vec<Vec<f64>>,
    /// mlp_hidden x pair_dim, row-major.
    pub mlp_w1: Vec<f64>,
    pub mlp_b1: Vec<f64>,
    /// mlp_hidden.
    pub mlp_w2: Vec<f64>,
    /// Single element.
    pub mlp_b2: Vec<f64>,
}

fn tensor_rng(seed: u64, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    rng
}

fn uniform_fan_in(len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

impl ModelParams {
    /// Fresh parameters: uniform fan-in-scaled weights, zero biases. Each
    /// tensor draws from its own seed stream, so the MLP initialization is
    /// independent of the encoder's (finetuning relies on this).
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.heads;
        let h = config.gat_hidden;
        let d = config.dim;
        let p = config.pair_dim();
        let m = config.mlp_hidden;
        let gat_w = (0..k)
            .map(|t| uniform_fan_in(h * d, d, &mut tensor_rng(seed, t as u64)))
            .collect();
        let gat_a = (0..k)
            .map(|t| uniform_fan_in(2 * h, 2 * h, &mut tensor_rng(seed, (k + t) as u64)))
            .collect();
        let mut out = Self {
            config,
            gat_w,
            gat_a,
            mlp_w1: vec![0.0; m * p],
            mlp_b1: vec![0.0; m],
            mlp_w2: vec![0.0; m],
            mlp_b2: vec![0.0; 1],
        };
        out.reinit_mlp(seed);
        Ok(out)
    }

    /// Re-draws the pair MLP exactly as `init` would with this seed, leaving
    /// the encoder untouched.
    pub fn reinit_mlp(&mut self, seed: u64) {
        let k = self.config.heads as u64;
        let p = self.config.pair_dim();
        let m = self.config.mlp_hidden;
        self.mlp_w1 = uniform_fan_in(m * p, p, &mut tensor_rng(seed, 2 * k));
        self.mlp_b1 = vec![0.0; m];
        self.mlp_w2 = uniform_fan_in(m, m, &mut tensor_rng(seed, 2 * k + 2));
        self.mlp_b2 = vec![0.0; 1];
    }

    /// Zeroed gradient container of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            gat_w: self.gat_w.iter().map(|t| vec![0.0; t.len()]).collect(),
            gat_a: self.gat_a.iter().map(|t| vec![0.0; t.len()]).collect(),
            mlp_w1: vec![0.0; self.mlp_w1.len()],
            mlp_b1: vec![0.0; self.mlp_b1.len()],
            mlp_w2: vec![0.0; self.mlp_w2.len()],
            mlp_b2: vec![0.0; 1],
        }
    }

    /// Tensors in their canonical order: per-head attention weights, per-head
    /// attention vectors, then the MLP. Serialization, the optimizer, and the
    /// finetune freeze all use this order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(self.n_tensors());
        for t in &self.gat_w {
            v.push(t);
        }
        for t in &self.gat_a {
            v.push(t);
        }
        v.push(&self.mlp_w1);
        v.push(&self.mlp_b1);
        v.push(&self.mlp_w2);
        v.push(&self.mlp_b2);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::with_capacity(2 * self.gat_w.len() + 4);
        for t in &mut self.gat_w {
            v.push(t);
        }
        for t in &mut self.gat_a {
            v.push(t);
        }
        v.push(&mut self.mlp_w1);
        v.push(&mut self.mlp_b1);
        v.push(&mut self.mlp_w2);
        v.push(&mut self.mlp_b2);
        v
    }

    pub fn n_tensors(&self) -> usize {
        2 * self.config.heads + 4
    }

    /// Index of the first MLP tensor in the canonical order.
    pub fn first_mlp_tensor(&self) -> usize {
        2 * self.config.heads
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

// ─── activations ─────────────────────────────────────────────────────────────

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ─── forward pass ────────────────────────────────────────────────────────────

/// Everything the backward pass needs, plus the public outputs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Symmetrized same-class probabilities, condensed (i < j) order.
    pub p: Vec<f64>,
    /// Node encodings, n x enc_dim row-major.
    pub z: Vec<f64>,
    // caches (per head unless noted)
    g: Vec<Vec<f64>>,     // n x H
    u: Vec<Vec<f64>>,     // n  (a1 . g_i)
    v: Vec<Vec<f64>>,     // n  (a2 . g_i)
    alpha: Vec<Vec<f64>>, // n x n, diag 0
    m_pre: Vec<Vec<f64>>, // n x H pre-ELU aggregates
    // directed-pair caches; pair (i<j) occupies slots 2k (i->j) and 2k+1
    u1: Vec<f64>,    // (2 npairs) x M pre-activation
    h1: Vec<f64>,    // (2 npairs) x M post-activation
    p_dir: Vec<f64>, // 2 npairs
}

fn ensure_finite(slice_name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(TtcError::NumericOverflow(slice_name.to_string()));
    }
    Ok(())
}

/// Runs the network over a fully connected graph. Errors with the offending
/// layer's name if any intermediate value is non-finite.
pub fn forward(params: &ModelParams, graph: &EmbGraph) -> Result<ForwardPass> {
    let cfg = &params.config;
    if graph.dim() != cfg.dim {
        return Err(TtcError::InvalidArgument(format!(
            "graph dim {} does not match network dim {}",
            graph.dim(),
            cfg.dim
        )));
    }
    let n = graph.n();
    let h = cfg.gat_hidden;
    let k = cfg.heads;
    let d = cfg.dim;
    let slope = cfg.leaky_slope;

    let mut g_all = Vec::with_capacity(k);
    let mut u_all = Vec::with_capacity(k);
    let mut v_all = Vec::with_capacity(k);
    let mut alpha_all = Vec::with_capacity(k);
    let mut m_all = Vec::with_capacity(k);
    let mut z = vec![0.0; n * cfg.enc_dim()];

    for head in 0..k {
        let w = &params.gat_w[head];
        let a1 = &params.gat_a[head][..h];
        let a2 = &params.gat_a[head][h..];

        let mut g = vec![0.0; n * h];
        for i in 0..n {
            let f = graph.feature(i);
            for r in 0..h {
                let row = &w[r * d..(r + 1) * d];
                g[i * h + r] = row.iter().zip(f).map(|(w, x)| w * x).sum();
            }
        }
        ensure_finite("gat-transform", &g)?;

        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            let gi = &g[i * h..(i + 1) * h];
            u[i] = a1.iter().zip(gi).map(|(a, x)| a * x).sum();
            v[i] = a2.iter().zip(gi).map(|(a, x)| a * x).sum();
        }

        let mut alpha = vec![0.0; n * n];
        for i in 0..n {
            let mut max_e = f64::NEG_INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let x = u[i] + v[j];
                let e = if x > 0.0 { x } else { slope * x };
                alpha[i * n + j] = e;
                if e > max_e {
                    max_e = e;
                }
            }
            let mut zsum = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let e = (alpha[i * n + j] - max_e).exp();
                alpha[i * n + j] = e;
                zsum += e;
            }
            for j in 0..n {
                if j != i {
                    alpha[i * n + j] /= zsum;
                }
            }
        }
        ensure_finite("gat-attention", &alpha)?;

        let mut m_pre = vec![0.0; n * h];
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let aij = alpha[i * n + j];
                let gj = &g[j * h..(j + 1) * h];
                for r in 0..h {
                    m_pre[i * h + r] += aij * gj[r];
                }
            }
        }
        ensure_finite("gat-aggregate", &m_pre)?;

        for i in 0..n {
            for r in 0..h {
                z[i * cfg.enc_dim() + head * h + r] = elu(m_pre[i * h + r]);
            }
        }

        g_all.push(g);
        u_all.push(u);
        v_all.push(v);
        alpha_all.push(alpha);
        m_all.push(m_pre);
    }

    // pair MLP over both directions of every unordered pair
    let npairs = condensed_len(n);
    let m_dim = cfg.mlp_hidden;
    let pdim = cfg.pair_dim();
    let enc = cfg.enc_dim();
    let mut u1 = vec![0.0; 2 * npairs * m_dim];
    let mut h1 = vec![0.0; 2 * npairs * m_dim];
    let mut p_dir = vec![0.0; 2 * npairs];
    let mut p = vec![0.0; npairs];

    let mut q = vec![0.0; pdim];
    let pair_feature = |q: &mut [f64], a: usize, b: usize, z: &[f64]| {
        q[..enc].copy_from_slice(&z[a * enc..(a + 1) * enc]);
        q[enc..enc + d].copy_from_slice(graph.feature(a));
        q[enc + d..2 * enc + d].copy_from_slice(&z[b * enc..(b + 1) * enc]);
        q[2 * enc + d..].copy_from_slice(graph.feature(b));
    };

    let mut k_pair = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            for (slot, (a, b)) in [(2 * k_pair, (i, j)), (2 * k_pair + 1, (j, i))] {
                pair_feature(&mut q, a, b, &z);
                let mut s = params.mlp_b2[0];
                for r in 0..m_dim {
                    let row = &params.mlp_w1[r * pdim..(r + 1) * pdim];
                    let pre = params.mlp_b1[r]
                        + row.iter().zip(q.iter()).map(|(w, x)| w * x).sum::<f64>();
                    u1[slot * m_dim + r] = pre;
                    let act = elu(pre);
                    h1[slot * m_dim + r] = act;
                    s += params.mlp_w2[r] * act;
                }
                if !s.is_finite() {
                    return Err(TtcError::NumericOverflow("pair-mlp".into()));
                }
                p_dir[slot] = sigmoid(s);
            }
            p[k_pair] = 0.5 * (p_dir[2 * k_pair] + p_dir[2 * k_pair + 1]);
            k_pair += 1;
        }
    }
    ensure_finite("pair-output", &p)?;

    Ok(ForwardPass {
        p,
        z,
        g: g_all,
        u: u_all,
        v: v_all,
        alpha: alpha_all,
        m_pre: m_all,
        u1,
        h1,
        p_dir,
    })
}

// ─── losses ──────────────────────────────────────────────────────────────────

/// Soft node densities from pair probabilities: the same-class indicator in
/// the density definitions replaced by `p` (and its signed form `2p - 1`).
/// Neighborhoods are all other graph nodes.
pub fn soft_densities(graph: &EmbGraph, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = graph.n();
    assert_eq!(p.len(), condensed_len(n), "probability vector length");
    let mut s_avg = vec![0.0; n];
    let mut s_nbr = vec![0.0; n];
    let mut k = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = graph.cosine(i, j);
            let avg = a * p[k];
            let nbr = a * (2.0 * p[k] - 1.0);
            s_avg[i] += avg;
            s_avg[j] += avg;
            s_nbr[i] += nbr;
            s_nbr[j] += nbr;
            k += 1;
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for i in 0..n {
        s_avg[i] *= scale;
        s_nbr[i] *= scale;
    }
    (s_avg, s_nbr)
}

/// Which density terms participate in the objective (ablation control).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMode {
    Both,
    AvgOnly,
    NbrOnly,
    None,
}

impl DensityMode {
    fn weights(&self, lambda: f64) -> (f64, f64) {
        match self {
            DensityMode::Both => (lambda, lambda),
            DensityMode::AvgOnly => (lambda, 0.0),
            DensityMode::NbrOnly => (0.0, lambda),
            DensityMode::None => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_conn: f64,
    pub l_s_avg: f64,
    pub l_s_nbr: f64,
    pub lambda: f64,
    pub total: f64,
}

struct LossParts {
    breakdown: LossBreakdown,
    n_pos: usize,
    n_neg: usize,
    true_s_avg: Vec<f64>,
    true_s_nbr: Vec<f64>,
    soft_s_avg: Vec<f64>,
    soft_s_nbr: Vec<f64>,
}

fn loss_parts(graph: &EmbGraph, p: &[f64], lambda: f64, mode: DensityMode) -> Result<LossParts> {
    let n = graph.n();
    if p.len() != condensed_len(n) {
        return Err(TtcError::InvalidArgument(format!(
            "{} probabilities for a {n}-node graph",
            p.len()
        )));
    }
    let labels = graph.labels();
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut n_pos = 0usize;
    let mut n_neg = 0usize;
    let mut k = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let pc = p[k].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if labels[i] == labels[j] {
                pos_sum += pc.ln();
                n_pos += 1;
            } else {
                neg_sum += (1.0 - pc).ln();
                n_neg += 1;
            }
            k += 1;
        }
    }
    if n_pos == 0 {
        return Err(TtcError::DegenerateInput("batch has no positive pairs".into()));
    }
    if n_neg == 0 {
        return Err(TtcError::DegenerateInput("batch has no negative pairs".into()));
    }
    let l_conn = -0.5 * (pos_sum / n_pos as f64 + neg_sum / n_neg as f64);

    let records = node_densities(graph.nodes(), &full_neighborhoods(n))?;
    let true_s_avg: Vec<f64> = records.iter().map(|r| r.s_avg).collect();
    let true_s_nbr: Vec<f64> = records.iter().map(|r| r.s_nbr).collect();
    let (soft_s_avg, soft_s_nbr) = soft_densities(graph, p);
    let mse = |t: &[f64], s: &[f64]| {
        t.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
    };
    let l_s_avg = mse(&true_s_avg, &soft_s_avg);
    let l_s_nbr = mse(&true_s_nbr, &soft_s_nbr);
    let (w_avg, w_nbr) = mode.weights(lambda);
    let total = l_conn + w_avg * l_s_avg + w_nbr * l_s_nbr;
    Ok(LossParts {
        breakdown: LossBreakdown { l_conn, l_s_avg, l_s_nbr, lambda, total },
        n_pos,
        n_neg,
        true_s_avg,
        true_s_nbr,
        soft_s_avg,
        soft_s_nbr,
    })
}

/// Full multi-task objective on a labeled graph.
pub fn loss(graph: &EmbGraph, p: &[f64], lambda: f64) -> Result<LossBreakdown> {
    loss_with_mode(graph, p, lambda, DensityMode::Both)
}

pub fn loss_with_mode(
    graph: &EmbGraph,
    p: &[f64],
    lambda: f64,
    mode: DensityMode,
) -> Result<LossBreakdown> {
    Ok(loss_parts(graph, p, lambda, mode)?.breakdown)
}

// ─── backward pass ───────────────────────────────────────────────────────────

/// Loss and exact gradients for one graph. The returned gradient container
/// mirrors the parameter shapes.
pub fn backward(
    params: &ModelParams,
    graph: &EmbGraph,
    fwd: &ForwardPass,
    lambda: f64,
    mode: DensityMode,
) -> Result<(LossBreakdown, ModelParams)> {
    let cfg = &params.config;
    let n = graph.n();
    let h = cfg.gat_hidden;
    let d = cfg.dim;
    let enc = cfg.enc_dim();
    let m_dim = cfg.mlp_hidden;
    let pdim = cfg.pair_dim();
    let npairs = condensed_len(n);
    let parts = loss_parts(graph, &fwd.p, lambda, mode)?;
    let (w_avg, w_nbr) = mode.weights(lambda);
    let labels = graph.labels();
    let mut grads = params.zeros_like();

    // dL/dp per unordered pair
    let mut dp = vec![0.0; npairs];
    {
        let inv_pos = 1.0 / parts.n_pos as f64;
        let inv_neg = 1.0 / parts.n_neg as f64;
        let nbh = 1.0 / (n as f64 - 1.0);
        let node_scale = 2.0 / n as f64;
        let mut k = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                let p = fwd.p[k];
                let mut g = 0.0;
                // balanced cross-entropy (zero gradient in the clipped tails)
                if p > PROB_CLIP && p < 1.0 - PROB_CLIP {
                    if labels[i] == labels[j] {
                        g -= 0.5 * inv_pos / p;
                    } else {
                        g += 0.5 * inv_neg / (1.0 - p);
                    }
                }
                // density MSE terms; pair (i, j) moves soft densities of both
                // endpoints with weight a_ij/(n-1) (doubled for s_nbr)
                let a = graph.cosine(i, j);
                if w_avg != 0.0 {
                    let r_i = parts.soft_s_avg[i] - parts.true_s_avg[i];
                    let r_j = parts.soft_s_avg[j] - parts.true_s_avg[j];
                    g += w_avg * node_scale * (r_i + r_j) * a * nbh;
                }
                if w_nbr != 0.0 {
                    let r_i = parts.soft_s_nbr[i] - parts.true_s_nbr[i];
                    let r_j = parts.soft_s_nbr[j] - parts.true_s_nbr[j];
                    g += w_nbr * node_scale * (r_i + r_j) * 2.0 * a * nbh;
                }
                dp[k] = g;
                k += 1;
            }
        }
    }

    // MLP backward over directed pairs; accumulates dz
    let mut dz = vec![0.0; n * enc];
    {
        let mut q = vec![0.0; pdim];
        let mut k = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                for (slot, (a, b)) in [(2 * k, (i, j)), (2 * k + 1, (j, i))] {
                    let ds = 0.5 * dp[k] * fwd.p_dir[slot] * (1.0 - fwd.p_dir[slot]);
                    if ds == 0.0 {
                        continue;
                    }
                    q[..enc].copy_from_slice(&fwd.z[a * enc..(a + 1) * enc]);
                    q[enc..enc + d].copy_from_slice(graph.feature(a));
                    q[enc + d..2 * enc + d].copy_from_slice(&fwd.z[b * enc..(b + 1) * enc]);
                    q[2 * enc + d..].copy_from_slice(graph.feature(b));

                    let h1 = &fwd.h1[slot * m_dim..(slot + 1) * m_dim];
                    let u1 = &fwd.u1[slot * m_dim..(slot + 1) * m_dim];
                    grads.mlp_b2[0] += ds;
                    for r in 0..m_dim {
                        grads.mlp_w2[r] += ds * h1[r];
                        let du = ds * params.mlp_w2[r] * elu_grad(u1[r]);
                        if du == 0.0 {
                            continue;
                        }
                        grads.mlp_b1[r] += du;
                        let wrow = &params.mlp_w1[r * pdim..(r + 1) * pdim];
                        let grow = &mut grads.mlp_w1[r * pdim..(r + 1) * pdim];
                        for (gc, qc) in grow.iter_mut().zip(&q) {
                            *gc += du * qc;
                        }
                        // feature gradient flows only into the encodings
                        for c in 0..enc {
                            dz[a * enc + c] += du * wrow[c];
                            dz[b * enc + c] += du * wrow[enc + d + c];
                        }
                    }
                }
                k += 1;
            }
        }
    }

    // GAT backward per head
    for head in 0..cfg.heads {
        let g = &fwd.g[head];
        let alpha = &fwd.alpha[head];
        let m_pre = &fwd.m_pre[head];
        let u = &fwd.u[head];
        let v = &fwd.v[head];
        let a1 = &params.gat_a[head][..h];
        let a2 = &params.gat_a[head][h..];

        let mut dg = vec![0.0; n * h];
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];

        for i in 0..n {
            // through the ELU into the aggregate
            let mut dm = vec![0.0; h];
            let mut all_zero = true;
            for r in 0..h {
                let val = dz[i * enc + head * h + r] * elu_grad(m_pre[i * h + r]);
                if val != 0.0 {
                    all_zero = false;
                }
                dm[r] = val;
            }
            if all_zero {
                continue;
            }
            // dalpha_ij = dm . g_j, and the alpha-weighted path into g_j
            let mut dalpha = vec![0.0; n];
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let gj = &g[j * h..(j + 1) * h];
                let da: f64 = dm.iter().zip(gj).map(|(x, y)| x * y).sum();
                dalpha[j] = da;
                weighted += alpha[i * n + j] * da;
                let aij = alpha[i * n + j];
                for r in 0..h {
                    dg[j * h + r] += aij * dm[r];
                }
            }
            // softmax then leaky ReLU
            for j in 0..n {
                if j == i {
                    continue;
                }
                let de = alpha[i * n + j] * (dalpha[j] - weighted);
                let x = u[i] + v[j];
                let dx = de * if x > 0.0 { 1.0 } else { cfg.leaky_slope };
                du[i] += dx;
                dv[j] += dx;
            }
        }

        // attention vector and the scalar paths back into g
        for i in 0..n {
            let gi = &g[i * h..(i + 1) * h];
            for r in 0..h {
                grads.gat_a[head][r] += du[i] * gi[r];
                grads.gat_a[head][h + r] += dv[i] * gi[r];
                dg[i * h + r] += du[i] * a1[r] + dv[i] * a2[r];
            }
        }

        // dW = sum_i dg_i f_i^T
        for i in 0..n {
            let f = graph.feature(i);
            for r in 0..h {
                let dgr = dg[i * h + r];
                if dgr == 0.0 {
                    continue;
                }
                let wrow = &mut grads.gat_w[head][r * d..(r + 1) * d];
                for (wc, fc) in wrow.iter_mut().zip(f) {
                    *wc += dgr * fc;
                }
            }
        }
    }

    for t in grads.tensors() {
        ensure_finite("gradient", t)?;
    }
    Ok((parts.breakdown, grads))
}
