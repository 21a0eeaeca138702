//! Draws one scenario of each kind and prints what the splits look like:
//! class counts, within-class alignment, and how the test distribution
//! departs from calibration. Writes the last scenario to ./scenario_out.
//!
//! Run with `cargo run --example generate_scenarios`.

use ttc::embedding::EmbeddingSet;
use ttc::io::write_embeddings_binary;
use ttc::synth::{
    generate_scenario_with_meta, PerturbKind, PerturbationSpec, ScenarioConfig, ScenarioKind,
};
use ttc::Result;

/// Mean cosine between same-class pairs — a quick compactness summary.
fn within_class_cosine(set: &EmbeddingSet) -> f64 {
    let labels = set.labels();
    let (mut acc, mut n) = (0.0, 0u64);
    for i in 0..set.len() {
        for j in (i + 1)..set.len() {
            if labels[i] == labels[j] {
                acc += set.cosine(i, j);
                n += 1;
            }
        }
    }
    acc / n as f64
}

fn describe(name: &str, set: &EmbeddingSet) {
    println!(
        "  {name:5} {:4} embeddings, {:2} classes, within-class cos {:.3}",
        set.len(),
        set.class_ids().len(),
        within_class_cosine(set)
    );
}

fn main() -> Result<()> {
    let kinds = [
        (ScenarioKind::SameDist, None),
        (ScenarioKind::ShiftDist, Some(PerturbationSpec::new(PerturbKind::GaussNoise, 0.1)?)),
        (ScenarioKind::DiffDistLongtail, None),
        (ScenarioKind::DiffDistDomain, None),
    ];

    for (kind, perturbation) in kinds {
        let config = ScenarioConfig { kind, perturbation, ..Default::default() };
        let (partition, meta) = generate_scenario_with_meta(&config)?;
        println!("{}:", kind.name());
        describe("train", &partition.train);
        describe("cal", &partition.cal);
        describe("test", &partition.test);

        // the generated class specs show the concentration regimes directly
        let kappa_span = |specs: &[ttc::synth::ClassSpec]| {
            let lo = specs.iter().map(|s| s.kappa).fold(f64::INFINITY, f64::min);
            let hi = specs.iter().map(|s| s.kappa).fold(0.0f64, f64::max);
            (lo, hi)
        };
        let (tl, th) = kappa_span(&meta.train);
        let (el, eh) = kappa_span(&meta.test);
        println!("  kappa: train [{tl:.0}, {th:.0}] vs test [{el:.0}, {eh:.0}]");
        if kind == ScenarioKind::DiffDistLongtail {
            let mut counts: Vec<usize> = meta.test.iter().map(|s| s.count).collect();
            counts.sort_unstable_by(|a, b| b.cmp(a));
            println!("  longtail test counts: {counts:?}");
        }

        if kind == ScenarioKind::DiffDistDomain {
            let dir = std::path::Path::new("scenario_out");
            std::fs::create_dir_all(dir)?;
            for (part, set) in [
                ("train", &partition.train),
                ("cal", &partition.cal),
                ("test", &partition.test),
            ] {
                write_embeddings_binary(&dir.join(format!("{part}.ttc1")), set)?;
            }
            println!("  written to {}/", dir.display());
        }
    }
    Ok(())
}
