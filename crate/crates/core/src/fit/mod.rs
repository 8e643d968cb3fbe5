//! Fitting the model to empirical return windows by KL minimization.

mod bfgs;
mod rolling;

pub use bfgs::{minimize, numerical_gradient, BfgsOptions, Minimum};
pub use rolling::{
    rolling_fit, summarize_fits, FitRecord, FitSeries, RegimeSummary, RollingOptions, SummaryRow,
    SummaryTable, FIT_CSV_HEADER, SUMMARY_COLUMNS,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{QrseError, Result};
use crate::model::{
    action_difference, conditional_action_prob, normalized_masses, ModelDistribution, QrseParams,
    ReturnGrid,
};
use crate::stats::{mean_sd, summarize_weighted};

/// Relative frequencies of a pooled window sample on a grid of bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalHist {
    pub grid: ReturnGrid,
    pub mass: Vec<f64>,
    pub n_obs: usize,
    pub window: Option<(NaiveDate, NaiveDate)>,
    /// Mean of the raw (unbinned) sample, `r_bar`.
    pub sample_mean: f64,
    /// Population standard deviation of the raw sample, `sigma(r)`.
    pub sample_sd: f64,
}

/// Assign each value to its nearest grid node and normalize the counts.
///
/// Returns [`QrseError::UndersizedWindow`] when the sample holds fewer
/// than `min_obs` values; callers treat that as a signal to skip.
pub fn bin_empirical(sample: &[f64], grid: &ReturnGrid, min_obs: usize) -> Result<EmpiricalHist> {
    if sample.is_empty() || sample.len() < min_obs {
        return Err(QrseError::UndersizedWindow {
            n_obs: sample.len(),
            min_obs,
        });
    }
    let mut counts = vec![0usize; grid.len()];
    for &v in sample {
        let idx = grid.nearest(v).ok_or(QrseError::SampleOutsideGrid {
            value: v,
            lo: grid.lo(),
            hi: grid.hi(),
        })?;
        counts[idx] += 1;
    }
    let n = sample.len() as f64;
    let (sample_mean, sample_sd) = mean_sd(sample);
    Ok(EmpiricalHist {
        grid: grid.clone(),
        mass: counts.into_iter().map(|c| c as f64 / n).collect(),
        n_obs: sample.len(),
        window: None,
        sample_mean,
        sample_sd,
    })
}

/// Which distribution leads the KL divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `sum f_model ln(f_model / f_data)`.
    #[default]
    ModelData,
    /// `sum f_data ln(f_data / f_model)`, for sensitivity checks.
    DataModel,
}

/// Mass substituted for an empty bin in the denominator of the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EmptyBinFloor {
    /// Half of one observation's mass, `0.5 / n_obs`.
    #[default]
    HalfCount,
    /// `c / n_bins`; `PerBin(1e-10)` is a near-zero floor.
    PerBin(f64),
}

impl EmptyBinFloor {
    pub fn value(&self, n_bins: usize, n_obs: usize) -> f64 {
        match *self {
            EmptyBinFloor::HalfCount => 0.5 / n_obs.max(1) as f64,
            EmptyBinFloor::PerBin(c) => c / n_bins as f64,
        }
    }
}

/// KL divergence between two mass vectors, `sum p ln(p / q)`. Terms with
/// zero `p` are dropped; zero `q` is replaced by `floor`.
pub fn kl_masses(p: &[f64], q: &[f64], floor: f64) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / if b > 0.0 { b } else { floor }).ln())
        .sum()
}

/// Model-leading divergence `D[model || data]` with the default empty-bin floor.
pub fn kl_divergence(model: &ModelDistribution, hist: &EmpiricalHist) -> Result<f64> {
    kl_divergence_with(model, hist, KlDirection::ModelData, EmptyBinFloor::default())
}

pub fn kl_divergence_with(
    model: &ModelDistribution,
    hist: &EmpiricalHist,
    direction: KlDirection,
    floor: EmptyBinFloor,
) -> Result<f64> {
    if model.grid != hist.grid {
        return Err(QrseError::Alignment);
    }
    let eps = floor.value(hist.mass.len(), hist.n_obs);
    Ok(directed_kl(&model.marginal, &hist.mass, direction, eps))
}

fn directed_kl(model: &[f64], data: &[f64], direction: KlDirection, eps: f64) -> f64 {
    match direction {
        KlDirection::ModelData => kl_masses(model, data, eps),
        KlDirection::DataModel => kl_masses(data, model, eps),
    }
}

/// Information distinguishability `1 - exp(-kl)`.
pub fn soofi_id(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(QrseError::Parameter(format!("KL divergence must be non-negative, got {kl}")));
    }
    Ok(-(-kl).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub init: QrseParams,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub fd_step: f64,
    pub direction: KlDirection,
    pub empty_bin_floor: EmptyBinFloor,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: QrseParams::default(),
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            fd_step: 1e-5,
            direction: KlDirection::ModelData,
            empty_bin_floor: EmptyBinFloor::HalfCount,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrseFit {
    pub params: QrseParams,
    pub kl: f64,
    pub soofi_id: f64,
    pub zeta: f64,
    pub delta: f64,
    pub f_buy: f64,
    pub model_mean: f64,
    pub model_sd: f64,
    pub empirical_mean: f64,
    pub empirical_sd: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn to_free(p: &QrseParams) -> [f64; 4] {
    [p.mu, p.temp.ln(), p.alpha, p.scale.ln()]
}

fn from_free(x: &[f64]) -> QrseParams {
    QrseParams {
        mu: x[0],
        temp: x[1].exp(),
        alpha: x[2],
        scale: x[3].exp(),
    }
}

/// KL objective of `hist` as a function of `(mu, ln T, alpha, ln S)`.
pub fn objective(
    hist: &EmpiricalHist,
    direction: KlDirection,
    floor: EmptyBinFloor,
) -> impl Fn(&[f64]) -> f64 + '_ {
    let eps = floor.value(hist.mass.len(), hist.n_obs);
    move |x: &[f64]| {
        let params = from_free(x);
        if params.validate().is_err() {
            return f64::INFINITY;
        }
        let masses = normalized_masses(&hist.grid, &params);
        let kl = directed_kl(&masses, &hist.mass, direction, eps);
        if kl.is_finite() {
            kl
        } else {
            f64::INFINITY
        }
    }
}

/// Estimate `(mu, T, alpha, S)` for one window by quasi-Newton descent on
/// the KL divergence, with `T` and `S` optimized on the log scale.
///
/// Non-convergence is reported through [`QrseFit::converged`], never as an error.
pub fn fit_qrse(hist: &EmpiricalHist, options: &FitOptions) -> Result<QrseFit> {
    options.init.validate()?;
    let occupied = hist.mass.iter().filter(|&&m| m > 0.0).count();
    if occupied < 2 {
        return Err(QrseError::DegenerateWindow(format!(
            "histogram has {occupied} occupied bin(s)"
        )));
    }
    let f = objective(hist, options.direction, options.empty_bin_floor);
    let bfgs = BfgsOptions {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        fd_step: options.fd_step,
    };
    let min = minimize(&f, &to_free(&options.init), &bfgs);
    Ok(derive_fit(hist, from_free(&min.x), min.value, min.converged, min.iterations))
}

fn derive_fit(hist: &EmpiricalHist, params: QrseParams, kl: f64, converged: bool, iterations: usize) -> QrseFit {
    let dist = ModelDistribution::evaluate(&hist.grid, &params);
    let mut delta = 0.0;
    let mut f_buy = 0.0;
    for (&r, &m) in hist.grid.points().iter().zip(&dist.marginal) {
        delta += action_difference(r, &params) * (r - params.alpha) * m;
        f_buy += conditional_action_prob(r, &params).buy * m;
    }
    let moments = summarize_weighted(hist.grid.points(), &dist.marginal);
    let kl = kl.max(0.0);
    QrseFit {
        params,
        kl,
        soofi_id: -(-kl).exp_m1(),
        zeta: params.zeta(),
        delta,
        f_buy,
        model_mean: moments.mean,
        model_sd: moments.stdev,
        empirical_mean: hist.sample_mean,
        empirical_sd: hist.sample_sd,
        converged,
        iterations,
    }
}
