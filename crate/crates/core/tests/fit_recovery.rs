use chrono::NaiveDate;
use qrse_core::fit::*;
use qrse_core::ingest::{ReturnPanel, TruncationRecord};
use qrse_core::model::*;
use qrse_core::regimes::{RegimeLabel, RegimeSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

fn params(mu: f64, temp: f64, alpha: f64, scale: f64) -> QrseParams {
    QrseParams::new(mu, temp, alpha, scale).unwrap()
}

fn draw(p: &QrseParams, n: usize, seed: u64) -> Vec<f64> {
    let grid = ReturnGrid::covering(p, 4001).unwrap();
    let d = marginal_density(&grid, p).unwrap();
    d.sample(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn fit_sample(x: &[f64], bins: usize) -> QrseFit {
    let grid = ReturnGrid::spanning(x, bins, 0.1).unwrap();
    let hist = bin_empirical(x, &grid, 500).unwrap();
    fit_qrse(&hist, &FitOptions::default()).unwrap()
}

fn theta_vec(p: &QrseParams) -> [f64; 4] {
    [p.mu, p.temp, p.alpha, p.scale]
}

#[test]
fn round_trip_within_bootstrap_error() {
    let truth = params(0.3, 1.05, -0.16, 1.69);
    let est = fit_sample(&draw(&truth, 100_000, 1), 801);
    assert!(est.converged);
    let reps: Vec<[f64; 4]> = (100..120)
        .map(|s| theta_vec(&fit_sample(&draw(&truth, 100_000, s), 801).params))
        .collect();
    let t = theta_vec(&truth);
    let e = theta_vec(&est.params);
    for i in 0..4 {
        let mean = reps.iter().map(|r| r[i]).sum::<f64>() / reps.len() as f64;
        let sd = (reps.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
        assert!((e[i] - t[i]).abs() < 3.0 * sd, "parameter {i}: {} vs {} (sd {sd})", e[i], t[i]);
    }
    assert!(est.soofi_id < 0.01);
}

#[test]
fn mirrored_histogram_has_no_unfulfilled_expectations() {
    let x = draw(&params(0.8, 0.7, -0.4, 1.2), 50_000, 3);
    let centre = 0.25;
    let mirrored: Vec<f64> = x.iter().flat_map(|&v| [v, 2.0 * centre - v]).collect();
    let f = fit_sample(&mirrored, 401);
    assert!(f.converged);
    assert!(f.zeta.abs() < 1e-3, "zeta {}", f.zeta);
    assert!((f.params.mu - centre).abs() < 1e-2);
}

#[test]
fn gaussian_data_drive_temperature_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..100_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1.5 * z
        })
        .collect();
    let grid = ReturnGrid::spanning(&x, 401, 0.1).unwrap();
    let hist = bin_empirical(&x, &grid, 500).unwrap();
    let f = fit_qrse(&hist, &FitOptions::default()).unwrap();
    assert!(f.params.temp > 100.0, "T = {}", f.params.temp);
    let kurt = model_moments(&ModelDistribution::evaluate(&grid, &f.params)).kurt;
    assert!((kurt - 3.0).abs() < 0.1, "kurtosis {kurt}");
}

#[test]
fn uniform_sample_fills_bins_evenly() {
    let grid = ReturnGrid::new(-5.0, 5.0, 101).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = Uniform::new_inclusive(-5.0, 5.0).unwrap();
    let n = 1_000_000;
    let x: Vec<f64> = (0..n).map(|_| u.sample(&mut rng)).collect();
    let h = bin_empirical(&x, &grid, 1).unwrap();
    // End nodes own half a cell.
    let cells = (grid.len() - 1) as f64;
    for (i, m) in h.mass.iter().enumerate() {
        let p = if i == 0 || i == grid.len() - 1 { 0.5 / cells } else { 1.0 / cells };
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((m - p).abs() < 5.0 * se, "bin {i}: {m} vs {p}");
    }
}

#[test]
fn kl_is_nonnegative_and_vanishes_on_identical_inputs() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let k = rng.random_range(2..20);
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let mut q: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        p.iter_mut().for_each(|v| *v /= sp);
        q.iter_mut().for_each(|v| *v /= sq);
        assert!(kl_masses(&p, &q, 1e-12) >= 0.0);
        assert_eq!(kl_masses(&p, &p, 1e-12), 0.0);
    }
    let p = params(0.3, 1.05, -0.16, 1.69);
    let grid = ReturnGrid::covering(&p, 401).unwrap();
    let model = marginal_density(&grid, &p).unwrap();
    let hist = EmpiricalHist {
        grid: grid.clone(),
        mass: model.marginal.clone(),
        n_obs: 1_000_000,
        window: None,
        sample_mean: 0.0,
        sample_sd: 1.0,
    };
    assert_eq!(kl_divergence(&model, &hist).unwrap(), 0.0);
}

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i as u64)
}

fn synthetic_panel(p: &QrseParams, assets: usize, dates: usize, seed: u64) -> ReturnPanel {
    let x = draw(p, assets * dates, seed);
    let returns: Vec<Vec<Option<f64>>> = x.chunks(dates).map(|c| c.iter().map(|v| Some(*v)).collect()).collect();
    ReturnPanel {
        assets: (0..assets).map(|i| format!("A{i}")).collect(),
        dates: (0..dates).map(day).collect(),
        returns,
        truncation: TruncationRecord::untruncated(assets * dates),
    }
}

fn all_bull(panel: &ReturnPanel) -> RegimeSeries {
    RegimeSeries::from_labels(panel.dates.clone(), vec![RegimeLabel::Bull; panel.dates.len()])
}

#[test]
fn stationary_panel_gives_stable_estimates() {
    let truth = params(0.3, 1.05, -0.16, 1.69);
    let panel = synthetic_panel(&truth, 100, 200, 21);
    let opts = RollingOptions {
        window_days: 20,
        stride: 20,
        grid_points: 201,
        min_obs: 500,
        ..Default::default()
    };
    let series = rolling_fit(&panel, &all_bull(&panel), &opts).unwrap();
    assert_eq!(series.records.len(), (200 - 20) / 20 + 1);

    let single: Vec<[f64; 4]> = (300..320)
        .map(|s| theta_vec(&fit_sample(&draw(&truth, 2000, s), 201).params))
        .collect();
    let rolled: Vec<[f64; 4]> = series.records.iter().map(|r| theta_vec(&r.fit.params)).collect();
    let sd = |v: &[[f64; 4]], i: usize| {
        let m = v.iter().map(|r| r[i]).sum::<f64>() / v.len() as f64;
        (v.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    for i in 0..4 {
        assert!(sd(&rolled, i) < 3.0 * sd(&single, i), "parameter {i}");
    }
}

#[test]
fn window_lattice_and_short_panels() {
    let truth = params(0.0, 1.0, 0.0, 1.0);
    let panel = synthetic_panel(&truth, 30, 95, 4);
    let opts = RollingOptions {
        window_days: 20,
        stride: 20,
        grid_points: 101,
        min_obs: 500,
        ..Default::default()
    };
    let series = rolling_fit(&panel, &all_bull(&panel), &opts).unwrap();
    assert_eq!(series.records.len() + series.skipped.len(), (95 - 20) / 20 + 1);
    assert_eq!(series.records[0].window_end, day(19));
    assert_eq!(series.records[1].window_start, day(20));

    let long = RollingOptions {
        window_days: 100,
        ..opts
    };
    let empty = rolling_fit(&panel, &all_bull(&panel), &long).unwrap();
    assert!(empty.records.is_empty() && empty.skipped.is_empty());

    let strict = RollingOptions {
        min_obs: 10_000,
        ..opts
    };
    let skipped = rolling_fit(&panel, &all_bull(&panel), &strict).unwrap();
    assert!(skipped.records.is_empty());
    assert_eq!(skipped.skipped.len(), 4);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let panel = synthetic_panel(&params(0.2, 0.8, -0.1, 1.3), 40, 60, 8);
    let opts = RollingOptions {
        window_days: 15,
        stride: 3,
        grid_points: 101,
        min_obs: 500,
        chunk_size: 4,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rolling_fit(&panel, &all_bull(&panel), &opts).unwrap())
    };
    assert_eq!(run(1), run(4));
}
