use qrse_core::diagnostics::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn random_walk(n: usize, seed: u64) -> Vec<f64> {
    noise(n, seed)
        .into_iter()
        .scan(0.0, |acc, e| {
            *acc += e;
            Some(*acc)
        })
        .collect()
}

/// Slow rise over nine steps then a crash, plus a little noise.
fn sawtooth(n: usize, seed: u64) -> Vec<f64> {
    noise(n, seed)
        .into_iter()
        .enumerate()
        .map(|(t, e)| (t % 10) as f64 + 0.3 * e)
        .collect()
}

fn palindrome(n: usize, seed: u64) -> Vec<f64> {
    let half = noise(n / 2, seed);
    let mut x = half.clone();
    x.extend(half.iter().rev());
    x
}

#[test]
fn adf_examples() {
    let o = AdfOptions::default();
    assert!(adf_test(&random_walk(10_000, 1), &o).unwrap().p_value > 0.10);
    assert!(adf_test(&noise(10_000, 2), &o).unwrap().p_value < 0.01);
    let mut x = vec![0.0; 5000];
    let e = noise(5000, 3);
    for t in 1..5000 {
        x[t] = 0.5 * x[t - 1] + e[t];
    }
    let r = adf_test(&x, &o).unwrap();
    assert!(r.p_value < 0.01);
    assert!(r.config.contains_key("lags"));
}

#[test]
fn kpss_examples() {
    let o = KpssOptions::default();
    let trend: Vec<f64> = noise(2000, 4)
        .iter()
        .enumerate()
        .map(|(t, e)| 0.01 * t as f64 + 0.1 * e)
        .collect();
    assert!(kpss_test(&trend, &o).unwrap().p_value >= 0.10);
    assert!(kpss_test(&random_walk(10_000, 5), &o).unwrap().p_value <= 0.01);
    // White noise: ADF rejects a unit root and KPSS keeps stationarity.
    let wn = noise(5000, 6);
    assert!(adf_test(&wn, &AdfOptions::default()).unwrap().p_value < 0.01);
    assert!(kpss_test(&wn, &o).unwrap().p_value >= 0.10);
}

#[test]
fn ramsey_rothman_reversal_and_power() {
    let o = RamseyRothmanOptions::default();
    let p = palindrome(2000, 7);
    assert!(ramsey_rothman_test(&p, &o).unwrap().statistic.abs() < 1e-12);

    let x = noise(1000, 8);
    let mut rev = x.clone();
    rev.reverse();
    let a = ramsey_rothman_test(&x, &o).unwrap().statistic;
    let b = ramsey_rothman_test(&rev, &o).unwrap().statistic;
    assert!((a + b).abs() < 1e-12);

    let r = ramsey_rothman_test(&sawtooth(2000, 9), &o).unwrap();
    assert!(r.p_value < 0.01);
    assert_eq!(r.config["lag"], "1");
}

#[test]
fn dfk_reversal_and_power() {
    let o = DfkOptions::default();
    assert_eq!(dfk_test(&palindrome(2000, 10), &o).unwrap().statistic, 0.0);
    let x = noise(2000, 11);
    let mut rev = x.clone();
    rev.reverse();
    assert_eq!(dfk_test(&x, &o).unwrap().statistic, dfk_test(&rev, &o).unwrap().statistic);
    // Deterministic slow-rise, fast-fall cycle.
    let cycle: Vec<f64> = (0..2000).map(|t| (t % 7) as f64 + 0.01 * (t % 3) as f64).collect();
    assert!(dfk_test(&cycle, &o).unwrap().p_value < 0.01);
    let fixed = DfkOptions {
        symbolization: Symbolization::FixedWidth,
        ..o
    };
    assert!(dfk_test(&sawtooth(2000, 12), &fixed).unwrap().p_value < 0.01);
}

#[test]
fn hvg_invariants() {
    let x = noise(3000, 13);
    let g = hvg_build(&x);
    for i in 0..x.len() - 1 {
        assert!(g.has_edge(i, i + 1));
    }
    let degrees = g.degree();
    assert!(degrees[1..x.len() - 1].iter().all(|k| *k >= 2));
    assert_eq!(g.edge_count() * 2, degrees.iter().sum::<usize>());
    // Spot-check the visibility rule against direct evaluation.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..2000 {
        let i = rng.random_range(0..x.len() - 2);
        let j = rng.random_range(i + 1..(i + 40).min(x.len()));
        let visible = (i + 1..j).all(|k| x[k] < x[i] && x[k] < x[j]);
        assert_eq!(g.has_edge(i, j), visible, "({i}, {j})");
    }
    let monotone: Vec<f64> = (0..100).map(|t| t as f64).collect();
    assert_eq!(hvg_build(&monotone).edge_count(), 99);
}

#[test]
fn hvg_degree_law_on_uniform_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let degrees = hvg_build(&x).degree();
    let interior = &degrees[1..degrees.len() - 1];
    let n = interior.len() as f64;
    let p2 = interior.iter().filter(|k| **k == 2).count() as f64 / n;
    let se = (p2 * (1.0 - p2) / n).sqrt();
    assert!((p2 - 1.0 / 3.0).abs() < 3.0 * se, "P(2) = {p2}");
}

#[test]
fn hvg_degree_detects_chaos() {
    let mut x = vec![0.3];
    for t in 1..2000 {
        let v: f64 = x[t - 1];
        x.push(4.0 * v * (1.0 - v));
    }
    assert!(hvg_degree_test(&x, 200, 1).unwrap().p_value < 0.01);
    assert!(matches!(
        hvg_degree_test(&x[..400], 200, 1),
        Err(qrse_core::QrseError::InsufficientData(_))
    ));
}

#[test]
fn clustering_reversal_and_power() {
    assert_eq!(clustering_irreversibility_test(&palindrome(2000, 16), 0).unwrap().statistic, 0.0);
    assert!(clustering_irreversibility_test(&sawtooth(2000, 17), 0).unwrap().p_value < 0.01);
    assert!(clustering_irreversibility_test(&noise(499, 18), 0).is_err());
}

#[test]
fn surrogate_p_values_sit_on_the_add_one_lattice() {
    let x = noise(1000, 19);
    for r in [
        ramsey_rothman_test(&x, &RamseyRothmanOptions { replicates: 99, ..Default::default() }).unwrap(),
        dfk_test(&x, &DfkOptions { surrogates: 99, ..Default::default() }).unwrap(),
        hvg_degree_test(&x, 99, 0).unwrap(),
    ] {
        let m = r.p_value * 100.0 - 1.0;
        assert!((m - m.round()).abs() < 1e-9 && r.p_value > 0.0, "{}: {}", r.name, r.p_value);
        assert!(r.config.contains_key("seed"));
    }
}

#[test]
fn tests_are_deterministic_and_thread_independent() {
    let x = noise(800, 20);
    let specs = [
        TestSpec::RamseyRothman(RamseyRothmanOptions { seed: 3, ..Default::default() }),
        TestSpec::Dfk(DfkOptions { seed: 3, ..Default::default() }),
        TestSpec::HvgDegree { surrogates: 100, seed: 3 },
        TestSpec::Clustering { seed: 3 },
    ];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| specs.iter().map(|s| s.run(&x).unwrap()).collect::<Vec<_>>())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn full_length_surface_matches_direct_test() {
    let x = noise(600, 21);
    let spec = TestSpec::Dfk(DfkOptions { surrogates: 99, seed: 5, ..Default::default() });
    let s = rolling_test_surface(&x, &spec, &[600], 1).unwrap();
    assert_eq!(s.cells.len(), 1);
    assert_eq!(s.cells[0].result.as_ref().unwrap(), &spec.run(&x).unwrap());
}

#[test]
fn surface_dimensions_and_missing_cells() {
    let x = noise(700, 22);
    let spec = TestSpec::Clustering { seed: 0 };
    let s = rolling_test_surface(&x, &spec, &[300, 600], 50).unwrap();
    assert_eq!(s.row(300).count(), (700 - 300) / 50 + 1);
    assert_eq!(s.row(600).count(), (700 - 600) / 50 + 1);
    // Windows below the 500-point minimum are infeasible, not errors.
    assert!(s.row(300).all(|c| c.result.is_none()));
    assert!(s.row(600).all(|c| c.result.is_some()));
    let mut out = Vec::new();
    s.write_csv(&mut out, |t| t.to_string()).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("test,window_size,window_end,statistic,p_value\n"));
    assert!(text.contains("hvg_clustering,300,299,,\n"));
}

#[test]
fn white_noise_surface_p_values_look_uniform() {
    let mut means = 0.0;
    for seed in 0..200 {
        let x = noise(260, 1000 + seed);
        let spec = TestSpec::RamseyRothman(RamseyRothmanOptions {
            replicates: 99,
            seed,
            ..Default::default()
        });
        let s = rolling_test_surface(&x, &spec, &[100, 200], 20).unwrap();
        let ps: Vec<f64> = s.cells.iter().filter_map(|c| c.result.as_ref().map(|r| r.p_value)).collect();
        means += ps.iter().sum::<f64>() / ps.len() as f64;
    }
    let mean = means / 200.0;
    assert!((0.4..=0.6).contains(&mean), "mean p {mean}");
}
