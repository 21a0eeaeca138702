//! Density statistics and the closed-form score estimators: build one vMF
//! cluster with a sprinkle of impurities, measure its verification scores,
//! and recover them from neighborhood density statistics alone. The
//! estimates tighten as the neighborhood grows.
//!
//! Run with `cargo run --release --example density_diagnostics`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ttc::density::{
    class_scores, nearest_neighborhoods, node_densities, theorem1_estimate, theorem2_estimate,
};
use ttc::synth::{sample_vmf, uniform_direction};
use ttc::{EmbeddingSet, Result};

fn main() -> Result<()> {
    let dim = 16;
    let kappa = 30.0;
    let cluster = 512;
    let purity = 0.95;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // one concentrated class plus impurity points from all over the sphere
    let n_noise = ((cluster as f64) * (1.0 - purity) / purity).round() as usize;
    let mean = uniform_direction(dim, &mut rng);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for row in sample_vmf(&mean, kappa, cluster, &mut rng)? {
        vectors.extend(row);
        labels.push(0);
    }
    for _ in 0..n_noise {
        vectors.extend(uniform_direction(dim, &mut rng));
        labels.push(1);
    }
    let set = EmbeddingSet::new(vectors, dim, labels)?;
    println!("{} cluster members + {n_noise} impurities (purity {purity})", cluster);

    let scores = class_scores(&set)?;
    let truth = scores.iter().find(|s| s.class_id == 0).unwrap();
    println!("measured: tpr score {:.4}, tnr score {:.4}", truth.tpr, truth.tnr);

    let members = set.indices_of_class(0);
    let n_cross = members.len() * n_noise;
    for k in [32usize, 128, 512] {
        let neighborhoods = nearest_neighborhoods(&set, k)?;
        let records = node_densities(&set, &neighborhoods)?;
        let member_records: Vec<_> =
            members.iter().map(|&i| records[i]).collect();
        let t1 = theorem1_estimate(&member_records, members.len(), k, false)?;
        let t2 = theorem2_estimate(&member_records, members.len(), n_cross)?;
        println!(
            "|N_i| = {k:3}: tpr estimate {:.4} (err {:.4}), tnr estimate {:.4} (err {:.4})",
            t1.value,
            (t1.value - truth.tpr).abs(),
            t2,
            (t2 - truth.tnr).abs()
        );
    }
    Ok(())
}
