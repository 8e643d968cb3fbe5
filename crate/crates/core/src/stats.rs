//! Moment summaries shared by the empirical and model sides.
//!
//! All moments use the population convention: variance divides by `n`,
//! skewness is `m3 / m2^1.5` and kurtosis is the non-excess `m4 / m2^2`
//! (a Gaussian scores 3).

use serde::{Deserialize, Serialize};

use crate::error::{QrseError, Result};

/// Human-readable statement of the moment convention, printed in report headers.
pub const MOMENT_CONVENTION: &str =
    "population moments (variance divides by n); skew = m3/m2^1.5; kurt = m4/m2^2 (non-excess, Gaussian = 3)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub stdev: f64,
    pub skew: f64,
    pub kurt: f64,
    pub max: f64,
    pub n: usize,
}

/// Summary of an unweighted sample. Needs at least four values.
///
/// With zero spread, skew and kurt are undefined and reported as NaN.
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    let n = values.len();
    if n < 4 {
        return Err(QrseError::InsufficientData(format!(
            "summary statistics need at least 4 observations, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let (skew, kurt) = shape(m2, m3, m4);

    Ok(SummaryStats {
        min: sorted[0],
        mean,
        median,
        stdev: m2.sqrt(),
        skew,
        kurt,
        max: sorted[n - 1],
        n,
    })
}

/// Summary of a discrete distribution given by support points and masses.
///
/// Masses need not be normalized. The median is the linearly interpolated
/// point where the cumulative mass crosses one half.
pub fn summarize_weighted(points: &[f64], masses: &[f64]) -> SummaryStats {
    debug_assert_eq!(points.len(), masses.len());
    let total: f64 = masses.iter().sum();
    let mean = points.iter().zip(masses).map(|(x, w)| x * w).sum::<f64>() / total;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for (&x, &w) in points.iter().zip(masses) {
        let d = x - mean;
        let d2 = d * d;
        m2 += w * d2;
        m3 += w * d2 * d;
        m4 += w * d2 * d2;
    }
    m2 /= total;
    m3 /= total;
    m4 /= total;

    let mut median = points[points.len() - 1];
    let mut cum = 0.0;
    for i in 0..points.len() {
        let next = cum + masses[i] / total;
        if next >= 0.5 {
            median = if i == 0 || masses[i] == 0.0 {
                points[i]
            } else {
                let frac = (0.5 - cum) / (next - cum);
                points[i - 1] + frac * (points[i] - points[i - 1])
            };
            break;
        }
        cum = next;
    }
    let (skew, kurt) = shape(m2, m3, m4);

    SummaryStats {
        min: points[0],
        mean,
        median,
        stdev: m2.sqrt(),
        skew,
        kurt,
        max: points[points.len() - 1],
        n: points.len(),
    }
}

fn shape(m2: f64, m3: f64, m4: f64) -> (f64, f64) {
    if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (f64::NAN, f64::NAN)
    }
}

/// Population mean and standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_three_point_sample() {
        // {-1, 0, 1} has only three points; pad with a mirrored pair to keep n >= 4.
        let s = summarize(&[-1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.median, 0.0);
        assert_eq!(s.skew, 0.0);
    }

    #[test]
    fn one_to_four() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.stdev - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((s.stdev - 1.1180).abs() < 1e-4);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        // m4 = (2*5.0625 + 2*0.0625)/4 = 2.5625; kurt = 2.5625/1.5625
        assert!((s.kurt - 1.64).abs() < 1e-12);
    }

    #[test]
    fn too_few_observations() {
        assert!(matches!(
            summarize(&[1.0, 2.0, 3.0]),
            Err(QrseError::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_sample_has_undefined_shape() {
        let s = summarize(&[2.0; 6]).unwrap();
        assert_eq!(s.stdev, 0.0);
        assert!(s.skew.is_nan() && s.kurt.is_nan());
    }

    #[test]
    fn weighted_matches_unweighted_for_equal_masses() {
        let pts = [-2.0, -0.5, 0.0, 1.0, 3.0];
        let a = summarize(&pts).unwrap();
        let b = summarize_weighted(&pts, &[1.0; 5]);
        assert!((a.mean - b.mean).abs() < 1e-14);
        assert!((a.stdev - b.stdev).abs() < 1e-14);
        assert!((a.skew - b.skew).abs() < 1e-12);
        assert!((a.kurt - b.kurt).abs() < 1e-12);
    }
}
