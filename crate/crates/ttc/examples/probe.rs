// temporary probe: finetune schedules + tau regret across scenario kinds
use ttc::baselines::{CalibrationMethod, CurveCalibrator};
use ttc::curves::{chord_distance, exact_curves, mae_comb, PairCounter, ThresholdGrid};
use ttc::embedding::EmbeddingSet;
use ttc::graph::sample_subgraphs;
use ttc::net::forward;
use ttc::pipeline::*;
use ttc::synth::{generate_scenario, ScenarioConfig, ScenarioKind};

fn sep(params: &ttc::net::ModelParams, set: &EmbeddingSet, n: usize) -> (f64, f64) {
    let step = (set.len() / n).max(1);
    let idx: Vec<usize> = (0..set.len()).step_by(step).take(n).collect();
    let graph = ttc::graph::build_full_graph(set, &idx).unwrap();
    let p = forward(params, &graph).unwrap().p;
    let labels = graph.labels();
    let (mut pos, mut neg) = (vec![], vec![]);
    let mut k = 0;
    for i in 0..graph.n() { for j in (i+1)..graph.n() {
        if labels[i]==labels[j] { pos.push(p[k]) } else { neg.push(p[k]) }
        k += 1;
    }}
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    (mean(&pos), mean(&neg))
}

// deployed mae at every tau on the grid, via pooled subgraph counts on test
fn tau_sweep(params: &ttc::net::ModelParams, test: &EmbeddingSet, truth: &ttc::curves::PerfCurve, grid: ThresholdGrid) -> Vec<(f64, f64)> {
    let taus = default_tau_grid();
    let graphs = sample_subgraphs(test, 48, 40, 99).unwrap();
    let mut counters: Vec<PairCounter> = taus.iter().map(|_| PairCounter::new(grid)).collect();
    for g in &graphs {
        let p = forward(params, g).unwrap().p;
        let mut k = 0;
        for i in 0..g.n() { for j in (i+1)..g.n() {
            let d = chord_distance(g.feature(i), g.feature(j));
            for (t, &tau) in taus.iter().enumerate() { counters[t].add(d, p[k] > tau); }
            k += 1;
        }}
    }
    taus.iter().zip(&counters).map(|(&tau, c)| {
        let mae = c.to_curve().ok().map(|cv| mae_comb(&cv, truth).unwrap()).unwrap_or(f64::NAN);
        (tau, mae)
    }).collect()
}

// mirror of select_tau's fold scoring (thinning + common-population truth)
fn cv_landscape(params: &ttc::net::ModelParams, cal: &EmbeddingSet, folds: usize) -> Vec<(f64, f64)> {
    let grid = ThresholdGrid::default_unit_sphere();
    let taus = default_tau_grid();
    let class_ids = cal.class_ids();
    let mut fold_classes: Vec<Vec<i32>> = vec![Vec::new(); folds];
    for (k, &c) in class_ids.iter().enumerate() { fold_classes[k % folds].push(c); }
    let labels = cal.labels();
    let fold_of: Vec<Option<usize>> = labels.iter().map(|l| fold_classes.iter().position(|cs| cs.contains(l))).collect();
    let rho = {
        let mut counts = std::collections::BTreeMap::new();
        for &l in labels { *counts.entry(l).or_insert(0usize) += 1; }
        let all = labels.len() * (labels.len() - 1) / 2;
        counts.values().map(|&n| n * (n - 1) / 2).sum::<usize>() as f64 / all as f64
    };
    let mut pos_keep = vec![1.0f64; folds];
    for (f, classes) in fold_classes.iter().enumerate() {
        let sizes: Vec<usize> = classes.iter().map(|c| labels.iter().filter(|l| *l == c).count()).collect();
        let total: usize = sizes.iter().sum();
        let pos: usize = sizes.iter().map(|&n| n * (n - 1) / 2).sum();
        let all = total * total.saturating_sub(1) / 2;
        if pos > 0 && all > pos && rho < 1.0 {
            pos_keep[f] = (rho * (all - pos) as f64 / ((1.0 - rho) * pos as f64)).min(1.0);
        }
    }
    let graphs = sample_subgraphs(cal, 48, 40, 0x7A55_E1EC).unwrap();
    let mut counters: Vec<Vec<PairCounter>> = (0..folds).map(|_| taus.iter().map(|_| PairCounter::new(grid)).collect()).collect();
    let mut truth_counters: Vec<PairCounter> = (0..folds).map(|_| PairCounter::new(grid)).collect();
    let mut thin_acc = vec![0.0f64; folds];
    for g in &graphs {
        let p = forward(params, g).unwrap().p;
        let ni = g.node_index();
        let lg = g.labels();
        let mut k = 0;
        for i in 0..g.n() { for j in (i+1)..g.n() {
            if fold_of[ni[i]] == fold_of[ni[j]] {
                if let Some(f) = fold_of[ni[i]] {
                    let same = lg[i] == lg[j];
                    let mut keep = true;
                    if same {
                        thin_acc[f] += pos_keep[f];
                        if thin_acc[f] >= 1.0 { thin_acc[f] -= 1.0; } else { keep = false; }
                    }
                    if keep {
                        let d = chord_distance(g.feature(i), g.feature(j));
                        truth_counters[f].add(d, same);
                        for (t, &tau) in taus.iter().enumerate() { counters[f][t].add(d, p[k] > tau); }
                    }
                }
            }
            k += 1;
        }}
    }
    taus.iter().enumerate().map(|(t, &tau)| {
        let mut sum = 0.0; let mut n = 0usize; let mut dead = false;
        for f in 0..folds {
            let Ok(truth) = truth_counters[f].to_curve() else { continue };
            match counters[f][t].to_curve() {
                Ok(c) => { sum += mae_comb(&c, &truth).unwrap(); n += 1; }
                Err(_) => dead = true,
            }
        }
        (tau, if dead || n == 0 { f64::NAN } else { sum / n as f64 })
    }).collect()
}

fn main() {
    let grid = ThresholdGrid::default_unit_sphere();
    for kind in [ScenarioKind::SameDist, ScenarioKind::DiffDistDomain] {
        println!("=== {} ===", kind.name());
        for seed in [7u64, 8, 9] {
            let scen = ScenarioConfig { kind, seed, ..Default::default() };
            let part = generate_scenario(&scen).unwrap();
            let truth = exact_curves(&part.test, grid).unwrap();
            let pre = pretrain(&TrainConfig::pretrain_default(11 + seed), &part.train).unwrap();
            let (trp, trn) = sep(&pre.params, &part.train, 80);
            println!("seed {seed}: train {trp:.2}/{trn:.2}");
            let mut arms: Vec<(String, ttc::net::ModelParams)> = vec![("pt".into(), pre.params.clone())];
            for (fs, flr) in [(1500usize, 5e-3), (2000, 3e-3)] {
                let ft_cfg = TrainConfig { steps: fs, lr_max: flr, ..TrainConfig::finetune_default(13 + seed) };
                let ft = finetune(&pre.params, &ft_cfg, &part.cal).unwrap();
                arms.push((format!("ft{fs}@{flr:.0e}"), ft.params));
            }
            for (name, params) in &arms {
                let (cap, can) = sep(params, &part.cal, 80);
                print!("  [cal-fit {cap:.2}/{can:.2}]");
                let (tep, ten) = sep(params, &part.test, 80);
                let tau = select_tau(params, &part.cal, 3, &default_tau_grid()).unwrap();
                let sweep = tau_sweep(params, &part.test, &truth, grid);
                let deployed = sweep.iter().find(|(t, _)| (t - tau).abs() < 1e-9).unwrap().1;
                let best = sweep.iter().filter(|(_, m)| m.is_finite()).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
                println!("  {name}: test {tep:.2}/{ten:.2} cv-tau {tau:.2} mae {deployed:.4} | oracle-tau {:.2} mae {:.4}", best.0, best.1);
                if name == "pt" {
                    let cv = cv_landscape(params, &part.cal, 3);
                    let fmt = |v: &[(f64, f64)]| v.iter().map(|(t, m)| format!("{t:.2}:{m:.3}")).collect::<Vec<_>>().join(" ");
                    println!("    cv  : {}", fmt(&cv));
                    println!("    test: {}", fmt(&sweep));
                }
            }
            let train_curve = exact_curves(&part.train, grid).unwrap();
            let cal_curve = exact_curves(&part.cal, grid).unwrap();
            let mut line = "  baselines:".to_string();
            for m in CalibrationMethod::ALL {
                let c = CurveCalibrator::fit(m, &train_curve, &cal_curve).unwrap();
                let est = c.predict(&train_curve).unwrap();
                line += &format!(" {} {:.4}", m.name(), mae_comb(&est, &truth).unwrap());
            }
            let db = ttc::baselines::fit_dbscan(&part.cal, &grid).unwrap();
            let db_est = db.predict(&part.test).unwrap();
            line += &format!(" dbscan {:.4}", mae_comb(&db_est, &truth).unwrap());
            println!("{line}");
        }
    }
}
