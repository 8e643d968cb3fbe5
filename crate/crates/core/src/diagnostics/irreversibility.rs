//! Ramsey–Rothman bicovariance test and the false-flipped-symbols (DFK) test.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_finite, surrogate_p_value, surrogate_stats, TestResult, DEFAULT_SURROGATES};
use crate::error::{QrseError, Result};
use crate::stats::mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyRothmanOptions {
    pub lag: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Mean bootstrap block length; `None` uses n^{1/3}.
    pub mean_block: Option<f64>,
}

impl Default for RamseyRothmanOptions {
    fn default() -> Self {
        Self {
            lag: 1,
            replicates: DEFAULT_SURROGATES,
            seed: 0,
            mean_block: None,
        }
    }
}

/// B(k) = mean(x_t^2 x_{t-k}) - mean(x_t x_{t-k}^2).
fn bicovariance_difference(x: &[f64], k: usize) -> f64 {
    let terms = x.len() - k;
    let sum: f64 = (k..x.len())
        .map(|t| {
            let (a, b) = (x[t], x[t - k]);
            a * b * (a - b)
        })
        .sum();
    sum / terms as f64
}

/// Politis–Romano stationary bootstrap with circular wrap.
fn stationary_resample(x: &[f64], mean_block: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = x.len();
    let restart = 1.0 / mean_block;
    let mut out = Vec::with_capacity(n);
    let mut pos = rng.random_range(0..n);
    for _ in 0..n {
        out.push(x[pos]);
        pos = if rng.random::<f64>() < restart {
            rng.random_range(0..n)
        } else {
            (pos + 1) % n
        };
    }
    out
}

/// Symmetric-bicovariance test at one lag on the standardized series.
///
/// The statistic is B(k). Its null spread comes from a stationary
/// bootstrap centred on the replicate mean:
/// p = (1 + #{|B* - mean(B*)| >= |B|}) / (1 + M).
pub fn ramsey_rothman_test(series: &[f64], opts: &RamseyRothmanOptions) -> Result<TestResult> {
    require_finite(series)?;
    let n = series.len();
    let k = opts.lag;
    if k == 0 || 4 * k >= n {
        return Err(QrseError::Parameter(format!("lag must satisfy 1 <= k < n/4, got k = {k}, n = {n}")));
    }
    if n < 50 + k {
        return Err(QrseError::InsufficientData(format!(
            "Ramsey-Rothman at lag {k} needs at least {} points, got {n}",
            50 + k
        )));
    }
    if opts.replicates == 0 {
        return Err(QrseError::Parameter("replicates must be positive".into()));
    }
    let (mean, sd) = mean_sd(series);
    if !(sd > 0.0) {
        return Err(QrseError::DegenerateWindow("constant series".into()));
    }
    let z: Vec<f64> = series.iter().map(|v| (v - mean) / sd).collect();
    let b = bicovariance_difference(&z, k);
    let block = opts.mean_block.unwrap_or_else(|| (n as f64).cbrt()).max(1.0);
    let replicates = surrogate_stats(opts.replicates, opts.seed, |rng| {
        bicovariance_difference(&stationary_resample(&z, block, rng), k)
    });
    // Block junctions shrink B* toward zero, so centre on the replicate mean rather than B.
    let centre = replicates.iter().sum::<f64>() / replicates.len() as f64;
    let deviations: Vec<f64> = replicates.iter().map(|v| (v - centre).abs()).collect();
    Ok(TestResult::new("ramsey_rothman", b, surrogate_p_value(b.abs(), &deviations), n)
        .with("lag", k)
        .with("replicates", opts.replicates)
        .with("seed", opts.seed)
        .with("mean_block", block)
        .with("null", "stationary_bootstrap"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbolization {
    /// Equiprobable bins by rank.
    #[default]
    Quantile,
    /// Equal-width bins over the observed range.
    FixedWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfkOptions {
    pub n_symbols: usize,
    pub word_len: usize,
    pub surrogates: usize,
    pub seed: u64,
    pub symbolization: Symbolization,
}

impl Default for DfkOptions {
    fn default() -> Self {
        Self {
            n_symbols: 3,
            word_len: 3,
            surrogates: DEFAULT_SURROGATES,
            seed: 0,
            symbolization: Symbolization::Quantile,
        }
    }
}

fn symbolize(x: &[f64], n_symbols: usize, scheme: Symbolization) -> Vec<usize> {
    let n = x.len();
    match scheme {
        Symbolization::Quantile => {
            // Symbol from the count of strictly smaller values, so ties share a symbol.
            let mut sorted = x.to_vec();
            sorted.sort_by(f64::total_cmp);
            x.iter()
                .map(|v| sorted.partition_point(|s| s < v) * n_symbols / n)
                .collect()
        }
        Symbolization::FixedWidth => {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = (hi - lo) / n_symbols as f64;
            x.iter()
                .map(|v| (((v - lo) / width) as usize).min(n_symbols - 1))
                .collect()
        }
    }
}

struct WordCoder {
    n_symbols: usize,
    word_len: usize,
    reversed: Vec<usize>,
}

impl WordCoder {
    fn new(n_symbols: usize, word_len: usize) -> Self {
        let size = n_symbols.pow(word_len as u32);
        let reversed = (0..size)
            .map(|mut code| {
                let mut rev = 0;
                for _ in 0..word_len {
                    rev = rev * n_symbols + code % n_symbols;
                    code /= n_symbols;
                }
                rev
            })
            .collect();
        Self {
            n_symbols,
            word_len,
            reversed,
        }
    }

    /// Sum over words of (F(w) - F(rev w))^2 / (F(w) + F(rev w)).
    fn statistic(&self, symbols: &[usize]) -> f64 {
        let mut counts = vec![0u64; self.reversed.len()];
        for w in symbols.windows(self.word_len) {
            let code = w.iter().fold(0, |acc, s| acc * self.n_symbols + s);
            counts[code] += 1;
        }
        counts
            .iter()
            .zip(&self.reversed)
            .map(|(&f, &r)| {
                let (f, b) = (f as f64, counts[r] as f64);
                if f + b > 0.0 {
                    (f - b).powi(2) / (f + b)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Compares forward and time-reversed L-word frequencies of the symbolized
/// series against random-shuffle surrogates.
pub fn dfk_test(series: &[f64], opts: &DfkOptions) -> Result<TestResult> {
    require_finite(series)?;
    let (m, l) = (opts.n_symbols, opts.word_len);
    if m < 2 || l < 2 {
        return Err(QrseError::Parameter(format!("need n_symbols >= 2 and word_len >= 2, got {m} and {l}")));
    }
    if opts.surrogates == 0 {
        return Err(QrseError::Parameter("surrogates must be positive".into()));
    }
    let n = series.len();
    let needed = (m as f64).powi(l as i32) * 10.0;
    if (n as f64) < needed {
        return Err(QrseError::InsufficientData(format!(
            "{m} symbols with words of length {l} need at least {needed} points, got {n}"
        )));
    }
    let first = series[0];
    if series.iter().all(|v| *v == first) {
        return Err(QrseError::DegenerateWindow("constant series".into()));
    }
    let symbols = symbolize(series, m, opts.symbolization);
    let coder = WordCoder::new(m, l);
    let stat = coder.statistic(&symbols);
    let null = surrogate_stats(opts.surrogates, opts.seed, |rng| {
        let mut s = symbols.clone();
        s.shuffle(rng);
        coder.statistic(&s)
    });
    Ok(TestResult::new("dfk", stat, surrogate_p_value(stat, &null), n)
        .with("n_symbols", m)
        .with("word_len", l)
        .with("surrogates", opts.surrogates)
        .with("seed", opts.seed)
        .with(
            "symbolization",
            match opts.symbolization {
                Symbolization::Quantile => "quantile",
                Symbolization::FixedWidth => "fixed_width",
            },
        ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tied_values_share_a_symbol() {
        let s = symbolize(&[1.0, 1.0, 1.0, 2.0, 3.0, 3.0], 3, Symbolization::Quantile);
        assert_eq!(s, vec![0, 0, 0, 1, 2, 2]);
    }

    #[test]
    fn word_reversal_codes() {
        let c = WordCoder::new(3, 3);
        // 0,1,2 -> code 5; reversed 2,1,0 -> code 21.
        assert_eq!(c.reversed[5], 21);
        assert_eq!(c.reversed[21], 5);
        assert_eq!(c.reversed[13], 13);
    }

    #[test]
    fn quantile_symbols_are_equiprobable() {
        let x: Vec<f64> = (0..90).map(|i| ((i * 37) % 90) as f64).collect();
        let s = symbolize(&x, 3, Symbolization::Quantile);
        for k in 0..3 {
            assert_eq!(s.iter().filter(|v| **v == k).count(), 30);
        }
        let f = symbolize(&[0.0, 0.5, 1.0], 2, Symbolization::FixedWidth);
        assert_eq!(f, vec![0, 1, 1]);
    }

    #[test]
    fn bicovariance_flips_under_reversal() {
        let x: Vec<f64> = (0..60).map(|i| ((i * i) % 17) as f64 - 8.0).collect();
        let mut r = x.clone();
        r.reverse();
        assert!((bicovariance_difference(&x, 2) + bicovariance_difference(&r, 2)).abs() < 1e-12);
    }

    #[test]
    fn lag_bounds() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin()).collect();
        let o = RamseyRothmanOptions {
            lag: 25,
            ..Default::default()
        };
        assert!(matches!(ramsey_rothman_test(&x, &o), Err(QrseError::Parameter(_))));
        let o = RamseyRothmanOptions {
            lag: 0,
            ..Default::default()
        };
        assert!(matches!(ramsey_rothman_test(&x, &o), Err(QrseError::Parameter(_))));
    }

    #[test]
    fn dfk_occupancy() {
        let x: Vec<f64> = (0..269).map(|i| (i as f64 * 0.7).sin()).collect();
        assert!(matches!(dfk_test(&x, &DfkOptions::default()), Err(QrseError::InsufficientData(_))));
    }
}
