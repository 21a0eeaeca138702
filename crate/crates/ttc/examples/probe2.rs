// temporary probe: density-loss ablation ordering on samedist
use ttc::curves::{chord_distance, exact_curves, mae_comb, PairCounter, ThresholdGrid};
use ttc::net::{forward, DensityMode};
use ttc::pipeline::*;
use ttc::synth::{generate_scenario, ScenarioConfig, ScenarioKind};

fn deployed_mae(
    params: &ttc::net::ModelParams,
    test: &ttc::EmbeddingSet,
    truth: &ttc::curves::PerfCurve,
    tau: f64,
    grid: ThresholdGrid,
) -> f64 {
    let graphs = ttc::graph::sample_subgraphs(test, 48, 40, 99).unwrap();
    let mut counter = PairCounter::new(grid);
    for g in &graphs {
        let p = forward(params, g).unwrap().p;
        let mut k = 0;
        for i in 0..g.n() {
            for j in (i + 1)..g.n() {
                counter.add(chord_distance(g.feature(i), g.feature(j)), p[k] > tau);
                k += 1;
            }
        }
    }
    mae_comb(&counter.to_curve().unwrap(), truth).unwrap()
}

fn main() {
    let grid = ThresholdGrid::default_unit_sphere();
    let arms: Vec<(&str, f64, DensityMode)> = vec![
        ("conn-only", 0.0, DensityMode::None),
        ("conn+nbr", 10.0, DensityMode::NbrOnly),
        ("conn+avg", 10.0, DensityMode::AvgOnly),
        ("conn+both", 10.0, DensityMode::Both),
    ];
    let mut sums = vec![0.0f64; arms.len()];
    for seed in [7u64, 8, 9, 10, 11] {
        let scen =
            ScenarioConfig { kind: ScenarioKind::SameDist, seed, ..Default::default() };
        let part = generate_scenario(&scen).unwrap();
        let truth = exact_curves(&part.test, grid).unwrap();
        print!("seed {seed}:");
        for (a, (name, lambda, mode)) in arms.iter().enumerate() {
            let mut pre_cfg = TrainConfig::pretrain_default(11 + seed);
            pre_cfg.lambda = *lambda;
            let pre = pretrain_with_mode(&pre_cfg, &part.train, *mode).unwrap();
            let mut ft_cfg = TrainConfig::finetune_default(13 + seed);
            ft_cfg.lambda = *lambda;
            let ft = finetune_with_mode(&pre.params, &ft_cfg, &part.cal, *mode).unwrap();
            let tau = select_tau(&ft.params, &part.cal, 3, &default_tau_grid()).unwrap();
            let mae = deployed_mae(&ft.params, &part.test, &truth, tau, grid);
            sums[a] += mae;
            print!("  {name} {mae:.4}");
        }
        println!();
    }
    print!("means:");
    for (a, (name, _, _)) in arms.iter().enumerate() {
        print!("  {name} {:.4}", sums[a] / 5.0);
    }
    println!();
}
