// temporary: measure subspace mean-placement acceptance
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
fn dot(a: &[f64], b: &[f64]) -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() }
use ttc::synth::uniform_direction;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // orthonormal basis of an 8-dim subspace of R^16, Gram-Schmidt
    let dim = 16;
    let sub = 8;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < sub {
        let mut v = uniform_direction(dim, &mut rng);
        for b in &basis {
            let a = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= a * bi;
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            for vi in v.iter_mut() {
                *vi /= n;
            }
            basis.push(v);
        }
    }
    // pairwise |dot| distribution of subspace-uniform candidates
    let cand = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let coeff = uniform_direction(sub, rng);
        let mut m = vec![0.0; dim];
        for (c, b) in coeff.iter().zip(&basis) {
            for (mi, bi) in m.iter_mut().zip(b) {
                *mi += c * bi;
            }
        }
        let n = dot(&m, &m).sqrt();
        m.iter().map(|x| x / n).collect()
    };
    let mut below = 0;
    let n_mc = 100_000;
    for _ in 0..n_mc {
        let a = cand(&mut rng);
        let b = cand(&mut rng);
        if dot(&a, &b).abs() <= 0.4 {
            below += 1;
        }
    }
    println!("P(|dot| <= 0.4) for subspace pairs: {}", below as f64 / n_mc as f64);
    // sequential placement simulation, 16 means, 20 runs
    for cap in [0.4, 0.45, 0.5] {
        let mut worst = 0usize;
        let mut fails = 0;
        for _ in 0..20 {
            let mut taken: Vec<Vec<f64>> = Vec::new();
            'outer: for _ in 0..16 {
                for t in 0..50_000usize {
                    let c = cand(&mut rng);
                    if taken.iter().all(|x| dot(x, &c).abs() <= cap) {
                        taken.push(c);
                        worst = worst.max(t);
                        continue 'outer;
                    }
                }
                fails += 1;
                break;
            }
        }
        println!("cap {cap}: worst tries {worst}, failed runs {fails}/20");
    }
}
