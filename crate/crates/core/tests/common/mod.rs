use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use synergy_core::ingest::{build_marginals, fit_discretizer, reconcile};
use synergy_core::*;

fn feature(v: usize, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![10.0 * v as f64 + noise.sample(rng), noise.sample(rng)]
}

/// Samples `n` rows of each dataset from `j`, pushes them through the
/// discretize-tabulate-reconcile pipeline and returns the largest total
/// variation between a rebuilt marginal and the true one.
pub fn ingest_round_trip_tv(j: &DiscreteJoint, n: usize, seed: u64) -> f64 {
    let (n1, n2, ny) = j.dims();
    let atoms: Vec<(usize, usize, usize)> = j.mass().indexed_iter().map(|(ix, _)| ix).collect();
    let law = WeightedIndex::new(j.mass().iter().copied()).unwrap();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| atoms[law.sample(rng)];

    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    let mut dm = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, _, y) = draw(&mut rng);
        d1.push((feature(a, &noise, &mut rng), y));
        let (_, b, y) = draw(&mut rng);
        d2.push((feature(b, &noise, &mut rng), y));
        let (a, b, _) = draw(&mut rng);
        dm.push((feature(a, &noise, &mut rng), feature(b, &noise, &mut rng)));
    }
    let all1: Vec<Vec<f64>> = d1.iter().map(|r| r.0.clone()).chain(dm.iter().map(|r| r.0.clone())).collect();
    let all2: Vec<Vec<f64>> = d2.iter().map(|r| r.0.clone()).chain(dm.iter().map(|r| r.1.clone())).collect();
    let disc1 = fit_discretizer(&all1, n1, 2, seed).unwrap();
    let disc2 = fit_discretizer(&all2, n2, 2, seed).unwrap();
    let em = build_marginals(&d1, &d2, &dm, &disc1, &disc2, 0.0).unwrap();
    let rebuilt = reconcile(&em, 0.05).unwrap();

    // cluster ids are arbitrary; map each true value to its cluster
    let perm1: Vec<usize> = (0..n1).map(|v| disc1.assign(&[10.0 * v as f64, 0.0]).unwrap()).collect();
    let perm2: Vec<usize> = (0..n2).map(|v| disc2.assign(&[10.0 * v as f64, 0.0]).unwrap()).collect();
    let truth = pairwise_marginals(j);
    let tv = |cells: Vec<(f64, f64)>| 0.5 * cells.iter().map(|(a, b)| (a - b).abs()).sum::<f64>();
    let tv1 = tv((0..n1).flat_map(|a| (0..ny).map(move |y| (a, y))).map(|(a, y)| (truth.m1()[[a, y]], rebuilt.m1()[[perm1[a], y]])).collect());
    let tv2 = tv((0..n2).flat_map(|b| (0..ny).map(move |y| (b, y))).map(|(b, y)| (truth.m2()[[b, y]], rebuilt.m2()[[perm2[b], y]])).collect());
    let tv12 = tv((0..n1).flat_map(|a| (0..n2).map(move |b| (a, b))).map(|(a, b)| (truth.m12()[[a, b]], rebuilt.m12()[[perm1[a], perm2[b]]])).collect());
    tv1.max(tv2).max(tv12)
}
