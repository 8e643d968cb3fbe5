//! Augmented Dickey–Fuller and KPSS tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{require_finite, TestResult};
use crate::error::{QrseError, Result};

struct Ols {
    beta: DVector<f64>,
    /// Diagonal of (X'X)^{-1}.
    xtx_inv_diag: DVector<f64>,
    ssr: f64,
    nobs: usize,
}

impl Ols {
    fn std_error(&self, i: usize) -> f64 {
        let dof = (self.nobs - self.beta.len()) as f64;
        (self.ssr / dof * self.xtx_inv_diag[i]).sqrt()
    }

    fn residuals(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        y - x * &self.beta
    }
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols> {
    let (nobs, p) = x.shape();
    if nobs <= p {
        return Err(QrseError::DegenerateRegression(format!(
            "{nobs} observations for {p} regressors"
        )));
    }
    let xtx = x.transpose() * x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| QrseError::DegenerateRegression("singular design matrix".into()))?;
    let beta = chol.solve(&(x.transpose() * y));
    let xtx_inv_diag = chol.inverse().diagonal();
    let ssr = (y - x * &beta).norm_squared();
    if !ssr.is_finite() || xtx_inv_diag.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(QrseError::DegenerateRegression("ill-conditioned design matrix".into()));
    }
    Ok(Ols {
        beta,
        xtx_inv_diag,
        ssr,
        nobs,
    })
}

fn require_variation(series: &[f64]) -> Result<()> {
    let first = series[0];
    if series.iter().all(|v| *v == first) {
        return Err(QrseError::DegenerateRegression("constant series".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfOptions {
    /// Largest augmentation lag; `None` uses floor(12 (n/100)^{1/4}).
    pub max_lags: Option<usize>,
    /// Choose the lag by AIC up to `max_lags`; otherwise use `max_lags` itself.
    pub autolag: bool,
}

impl Default for AdfOptions {
    fn default() -> Self {
        Self {
            max_lags: None,
            autolag: true,
        }
    }
}

/// Asymptotic critical values of the constant-only Dickey–Fuller t statistic.
pub const ADF_CRITICAL: [(f64, f64); 3] = [(0.01, -3.43), (0.05, -2.86), (0.10, -2.57)];

// MacKinnon (1994) normal-quantile polynomials, constant case, one variable.
const ADF_TAU_MAX: f64 = 2.74;
const ADF_TAU_MIN: f64 = -18.83;
const ADF_TAU_STAR: f64 = -1.61;
const ADF_SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
const ADF_LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];

fn adf_p_value(tau: f64) -> f64 {
    if tau > ADF_TAU_MAX {
        return 1.0;
    }
    if tau < ADF_TAU_MIN {
        return 0.0;
    }
    let coeffs: &[f64] = if tau <= ADF_TAU_STAR {
        &ADF_SMALL_P
    } else {
        &ADF_LARGE_P
    };
    let z = coeffs.iter().rev().fold(0.0, |acc, c| acc * tau + c);
    Normal::standard().cdf(z)
}

/// Design for regressing `dx[t]` on (1, x[t], dx[t-1], ..., dx[t-k]) over `t in first..dx.len()`.
fn adf_design(x: &[f64], dx: &[f64], k: usize, first: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = dx.len() - first;
    let design = DMatrix::from_fn(rows, k + 2, |r, c| {
        let t = first + r;
        match c {
            0 => 1.0,
            1 => x[t],
            j => dx[t + 1 - j],
        }
    });
    let y = DVector::from_fn(rows, |r, _| dx[first + r]);
    (design, y)
}

/// Unit-root test with constant. A small p-value rejects the unit root.
pub fn adf_test(series: &[f64], opts: &AdfOptions) -> Result<TestResult> {
    require_finite(series)?;
    let n = series.len();
    let max_lags = opts
        .max_lags
        .unwrap_or_else(|| (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize);
    if n < 25 + max_lags {
        return Err(QrseError::InsufficientData(format!(
            "ADF with {max_lags} lags needs at least {} points, got {n}",
            25 + max_lags
        )));
    }
    require_variation(series)?;
    let dx: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();

    let lag = if opts.autolag {
        // Common sample across candidate lags so AIC values are comparable.
        let mut best = (f64::INFINITY, 0);
        for k in 0..=max_lags {
            let (design, y) = adf_design(series, &dx, k, max_lags);
            let Ok(fit) = ols(&design, &y) else { continue };
            let nobs = fit.nobs as f64;
            let aic = nobs * (fit.ssr / nobs).ln() + 2.0 * (k + 2) as f64;
            if aic < best.0 {
                best = (aic, k);
            }
        }
        if best.0 == f64::INFINITY {
            return Err(QrseError::DegenerateRegression("no lag order gives a usable regression".into()));
        }
        best.1
    } else {
        max_lags
    };

    let (design, y) = adf_design(series, &dx, lag, lag);
    let fit = ols(&design, &y)?;
    let se = fit.std_error(1);
    if !(se > 0.0) {
        return Err(QrseError::DegenerateRegression("zero residual variance".into()));
    }
    let tau = fit.beta[1] / se;
    let mut r = TestResult::new("adf", tau, adf_p_value(tau), n)
        .with("regression", "c")
        .with("lags", lag)
        .with("max_lags", max_lags)
        .with("autolag", if opts.autolag { "aic" } else { "none" })
        .with("nobs", fit.nobs);
    for (level, cv) in ADF_CRITICAL {
        r = r.with(&format!("critical_{}", (level * 100.0).round()), cv);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KpssOptions {
    /// Bartlett lag window; `None` uses floor(4 (n/100)^{1/4}).
    pub bandwidth: Option<usize>,
}

/// Trend-stationarity critical values `(level, statistic)`, ascending statistic.
pub const KPSS_TREND_CRITICAL: [(f64, f64); 4] = [(0.10, 0.119), (0.05, 0.146), (0.025, 0.176), (0.01, 0.216)];

/// Linear interpolation in the critical-value table; clipped to [0.01, 0.10].
fn kpss_p_value(stat: f64) -> f64 {
    let t = &KPSS_TREND_CRITICAL;
    if stat <= t[0].1 {
        return t[0].0;
    }
    for w in t.windows(2) {
        let ((p0, c0), (p1, c1)) = (w[0], w[1]);
        if stat <= c1 {
            return p0 + (p1 - p0) * (stat - c0) / (c1 - c0);
        }
    }
    t[t.len() - 1].0
}

/// Stationarity around a linear trend. A small p-value rejects stationarity.
///
/// P-values come from the tabulated range and are clipped to [0.01, 0.10]:
/// 0.10 means "at least 0.10" and 0.01 means "at most 0.01".
pub fn kpss_test(series: &[f64], opts: &KpssOptions) -> Result<TestResult> {
    require_finite(series)?;
    let n = series.len();
    if n < 25 {
        return Err(QrseError::InsufficientData(format!("KPSS needs at least 25 points, got {n}")));
    }
    require_variation(series)?;
    let bandwidth = opts
        .bandwidth
        .unwrap_or_else(|| (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize)
        .min(n - 1);

    let design = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { r as f64 });
    let y = DVector::from_column_slice(series);
    let fit = ols(&design, &y)?;
    let e = fit.residuals(&design, &y);

    let nf = n as f64;
    let mut lrv = e.norm_squared() / nf;
    for l in 1..=bandwidth {
        let weight = 1.0 - l as f64 / (bandwidth as f64 + 1.0);
        let gamma: f64 = (l..n).map(|t| e[t] * e[t - l]).sum::<f64>() / nf;
        lrv += 2.0 * weight * gamma;
    }
    if !(lrv > 0.0) {
        return Err(QrseError::DegenerateRegression("non-positive long-run variance".into()));
    }
    let mut partial = 0.0;
    let mut sum_sq = 0.0;
    for v in e.iter() {
        partial += v;
        sum_sq += partial * partial;
    }
    let stat = sum_sq / (nf * nf * lrv);
    Ok(TestResult::new("kpss", stat, kpss_p_value(stat), n)
        .with("regression", "ct")
        .with("bandwidth", bandwidth)
        .with("kernel", "bartlett")
        .with("p_value_range", "[0.01, 0.10]"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adf_p_value_matches_reference_points() {
        // At the asymptotic critical values the approximation lands near the nominal levels.
        for (level, cv) in ADF_CRITICAL {
            let p = adf_p_value(cv);
            assert!((p - level).abs() < 0.25 * level, "{cv} -> {p}");
        }
        assert_eq!(adf_p_value(-30.0), 0.0);
        assert_eq!(adf_p_value(3.0), 1.0);
        assert!(adf_p_value(-2.0) < adf_p_value(-1.0));
    }

    #[test]
    fn kpss_table_interpolation() {
        assert_eq!(kpss_p_value(0.05), 0.10);
        assert_eq!(kpss_p_value(0.146), 0.05);
        assert!((kpss_p_value(0.196) - 0.0175).abs() < 1e-12);
        assert_eq!(kpss_p_value(5.0), 0.01);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = DMatrix::from_fn(10, 2, |r, c| if c == 0 { 1.0 } else { r as f64 });
        let y = DVector::from_fn(10, |r, _| 2.0 + 0.5 * r as f64 + if r % 2 == 0 { 0.01 } else { -0.01 });
        let fit = ols(&x, &y).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 0.02 && (fit.beta[1] - 0.5).abs() < 0.01);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = vec![3.0; 200];
        assert!(matches!(adf_test(&x, &AdfOptions::default()), Err(QrseError::DegenerateRegression(_))));
        assert!(matches!(kpss_test(&x, &KpssOptions::default()), Err(QrseError::DegenerateRegression(_))));
    }

    #[test]
    fn short_series_rejected() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        assert!(matches!(adf_test(&x, &AdfOptions::default()), Err(QrseError::InsufficientData(_))));
        assert!(matches!(kpss_test(&x, &KpssOptions::default()), Err(QrseError::InsufficientData(_))));
    }
}
