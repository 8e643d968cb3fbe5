//! Embedded analytic-identity and parameter-recovery checks.

use qrse_core::diagnostics::{hvg_build, iid_degree_probability};
use qrse_core::fit::{bin_empirical, fit_qrse, kl_masses, soofi_id, FitOptions};
use qrse_core::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::SelftestConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelftestHooks {
    /// Relative error injected into the temperature the choice kernel sees.
    /// Zero in normal runs; a nonzero value must make the identity check fail.
    pub kernel_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({})", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_params(rng: &mut ChaCha8Rng) -> QrseParams {
    QrseParams::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(0.05..5.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(0.2..5.0),
    )
    .expect("sampled parameters are valid")
}

fn weighted_skew(x: &[f64], w: &[f64]) -> f64 {
    let mean: f64 = x.iter().zip(w).map(|(x, w)| x * w).sum();
    let m = |k: i32| x.iter().zip(w).map(|(x, w)| (x - mean).powi(k) * w).sum::<f64>();
    m(3) / m(2).powf(1.5)
}

fn action_identities(cfg: &SelftestConfig, hooks: &SelftestHooks) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.identity_points {
        let p = random_params(&mut rng);
        let r = rng.random_range(-20.0..20.0);
        let seen = QrseParams {
            temp: p.temp * (1.0 + hooks.kernel_perturbation),
            ..p
        };
        let probs = conditional_action_prob(r, &seen);
        let expected = ((r - p.mu) / (2.0 * p.temp)).tanh();
        worst = worst
            .max((probs.buy + probs.sell - 1.0).abs())
            .max((probs.sell - probs.buy - expected).abs());
    }
    check(
        "action_identities",
        worst < 1e-12,
        format!("{} points, max error {worst:.3e}", cfg.identity_points),
    )
}

fn normalization_symmetry(cfg: &SelftestConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let (mut mass_err, mut skew_max): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let p = QrseParams { alpha: p.mu, ..p };
        let Ok(grid) = ReturnGrid::covering(&p, cfg.grid_points) else {
            return check("normalization_symmetry", false, format!("no covering grid for {p:?}"));
        };
        let d = ModelDistribution::evaluate(&grid, &p);
        mass_err = mass_err.max((d.marginal.iter().sum::<f64>() - 1.0).abs());
        skew_max = skew_max.max(weighted_skew(grid.points(), &d.marginal).abs());
    }
    check(
        "normalization_symmetry",
        mass_err < 1e-10 && skew_max < 1e-8,
        format!("mass error {mass_err:.3e}, |skew| {skew_max:.3e} when mu = alpha"),
    )
}

fn limit_shapes() -> Check {
    let kurt = |t: f64, n: usize| -> Option<f64> {
        let p = QrseParams::new(0.0, t, 0.0, 1.0).ok()?;
        let grid = ReturnGrid::covering(&p, n).ok()?;
        Some(model_moments(&ModelDistribution::evaluate(&grid, &p)).kurt)
    };
    match (kurt(1e-3, 4001), kurt(1e3, 2001)) {
        (Some(cold), Some(hot)) => check(
            "limit_shapes",
            (5.5..=6.5).contains(&cold) && (2.9..=3.1).contains(&hot),
            format!("kurtosis {cold:.3} at T=1e-3, {hot:.3} at T=1e3"),
        ),
        _ => check("limit_shapes", false, "grid construction failed".into()),
    }
}

fn skew_sign_law(cfg: &SelftestConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut violations = 0;
    let cases = 200;
    for _ in 0..cases {
        let alpha = rng.random_range(-2.0..2.0);
        let t = rng.random_range(0.1..3.0);
        let s = rng.random_range(0.3..4.0);
        let mut zeta = rng.random_range(0.05..1.0) * 3.0 * t;
        if rng.random::<bool>() {
            zeta = -zeta;
        }
        let p = QrseParams::new(alpha + zeta, t, alpha, s).expect("valid parameters");
        let skew = ReturnGrid::covering(&p, 1601)
            .map(|g| model_moments(&ModelDistribution::evaluate(&g, &p)).skew)
            .unwrap_or(f64::NAN);
        if skew.signum() != -zeta.signum() || skew.is_nan() {
            violations += 1;
        }
    }
    check(
        "skew_zeta_sign",
        violations == 0,
        format!("{violations} of {cases} cases violate sign(skew) = -sign(zeta)"),
    )
}

fn kl_contracts(cfg: &SelftestConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
    let mut min_kl = f64::INFINITY;
    let mut self_kl: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(2..30);
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let mut q: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        p.iter_mut().for_each(|v| *v /= sp);
        q.iter_mut().for_each(|v| *v /= sq);
        min_kl = min_kl.min(kl_masses(&p, &q, 1e-12));
        self_kl = self_kl.max(kl_masses(&p, &p, 1e-12).abs());
    }
    let id = soofi_id(std::f64::consts::LN_2).unwrap_or(f64::NAN);
    check(
        "kl_contracts",
        min_kl >= 0.0 && self_kl == 0.0 && (id - 0.5).abs() < 1e-12,
        format!("min KL {min_kl:.3e}, KL(p, p) {self_kl:.1e}, ID(ln 2) {id}"),
    )
}

fn hvg_degree_law(cfg: &SelftestConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(4));
    let x: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let degrees = hvg_build(&x).degree();
    let interior = &degrees[1..degrees.len() - 1];
    let n = interior.len() as f64;
    let mut worst: f64 = 0.0;
    for k in 2..=4 {
        let p = iid_degree_probability(k);
        let observed = interior.iter().filter(|d| **d == k).count() as f64 / n;
        worst = worst.max((observed - p).abs() / (p * (1.0 - p) / n).sqrt());
    }
    check(
        "hvg_degree_law",
        worst < 3.0,
        format!("largest deviation {worst:.2} standard errors over k = 2..4"),
    )
}

/// Fit windows drawn from randomized parameters and report the median
/// relative error per parameter.
fn parameter_recovery(cfg: &SelftestConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(5));
    let truths: Vec<(QrseParams, u64)> = (0..cfg.recovery_windows)
        .map(|_| {
            let p = QrseParams::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..5.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..5.0),
            )
            .expect("valid parameters");
            (p, rng.random())
        })
        .collect();
    let results: Vec<Option<([f64; 4], f64)>> = truths
        .par_iter()
        .map(|(truth, seed)| {
            let grid = ReturnGrid::covering(truth, 20_001).ok()?;
            let sample = marginal_density(&grid, truth)
                .ok()?
                .sample(&mut ChaCha8Rng::seed_from_u64(*seed), cfg.recovery_samples);
            let hist_grid = ReturnGrid::spanning(&sample, cfg.grid_points, 0.1).ok()?;
            let hist = bin_empirical(&sample, &hist_grid, 1).ok()?;
            let fit = fit_qrse(&hist, &FitOptions::default()).ok()?;
            let (e, t) = (fit.params, truth);
            let rel = [
                ((e.mu - t.mu) / t.mu).abs(),
                ((e.temp - t.temp) / t.temp).abs(),
                ((e.alpha - t.alpha) / t.alpha).abs(),
                ((e.scale - t.scale) / t.scale).abs(),
            ];
            Some((rel, fit.soofi_id))
        })
        .collect();
    let Some(results) = results.into_iter().collect::<Option<Vec<_>>>() else {
        return check("parameter_recovery", false, "a recovery window failed to fit".into());
    };
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    };
    let errs: Vec<f64> = (0..4).map(|i| median(results.iter().map(|r| r.0[i]).collect())).collect();
    let id = median(results.iter().map(|r| r.1).collect());
    check(
        "parameter_recovery",
        errs.iter().all(|e| *e < 0.05) && id < 0.01,
        format!(
            "{} windows, median relative error mu {:.4} T {:.4} alpha {:.4} S {:.4}, median ID {id:.5}",
            results.len(),
            errs[0],
            errs[1],
            errs[2],
            errs[3]
        ),
    )
}

/// Run every check in a fixed order.
pub fn run_selftest(cfg: &SelftestConfig, hooks: &SelftestHooks) -> Vec<Check> {
    vec![
        action_identities(cfg, hooks),
        normalization_symmetry(cfg),
        limit_shapes(),
        skew_sign_law(cfg),
        kl_contracts(cfg),
        hvg_degree_law(cfg),
        parameter_recovery(cfg),
    ]
}
