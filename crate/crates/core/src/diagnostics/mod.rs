//! Stationarity and time-irreversibility tests, plus rolling p-value surfaces.

mod hvg;
mod irreversibility;
mod stationarity;

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrseError, Result};

pub use hvg::{clustering_irreversibility_test, hvg_build, hvg_degree_test, iid_degree_probability, HvgGraph};
pub use irreversibility::{dfk_test, ramsey_rothman_test, DfkOptions, RamseyRothmanOptions, Symbolization};
pub use stationarity::{adf_test, kpss_test, AdfOptions, KpssOptions};

pub const DEFAULT_SURROGATES: usize = 500;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Every setting needed to reproduce the result, including the seed
    /// for surrogate-based tests.
    pub config: BTreeMap<String, String>,
    /// Inclusive index range of the tested series.
    pub window: (usize, usize),
}

impl TestResult {
    fn new(name: &str, statistic: f64, p_value: f64, n: usize) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            config: BTreeMap::new(),
            window: (0, n.saturating_sub(1)),
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Generator for surrogate `index` under `seed`; independent of scheduling.
pub(crate) fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Add-one Monte Carlo p-value: `(1 + #{s >= observed}) / (1 + M)`.
pub(crate) fn surrogate_p_value(observed: f64, surrogates: &[f64]) -> f64 {
    // Relative slack so that floating-point noise on exact ties counts as a tie.
    let tol = 1e-12 * observed.abs().max(1e-300);
    let exceed = surrogates.iter().filter(|s| **s >= observed - tol).count();
    (1 + exceed) as f64 / (1 + surrogates.len()) as f64
}

/// Runs `stat` on `replicates` surrogates in parallel, surrogate `i` drawing from `replicate_rng(seed, i)`.
pub(crate) fn surrogate_stats<F>(replicates: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|i| stat(&mut replicate_rng(seed, i)))
        .collect()
}

pub(crate) fn require_finite(series: &[f64]) -> Result<()> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(QrseError::Parameter(format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// Test selection with parameters, as used by rolling surfaces and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestSpec {
    Adf(AdfOptions),
    Kpss(KpssOptions),
    RamseyRothman(RamseyRothmanOptions),
    Dfk(DfkOptions),
    HvgDegree { surrogates: usize, seed: u64 },
    Clustering { seed: u64 },
}

impl TestSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TestSpec::Adf(_) => "adf",
            TestSpec::Kpss(_) => "kpss",
            TestSpec::RamseyRothman(_) => "ramsey_rothman",
            TestSpec::Dfk(_) => "dfk",
            TestSpec::HvgDegree { .. } => "hvg_degree",
            TestSpec::Clustering { .. } => "hvg_clustering",
        }
    }

    pub fn run(&self, series: &[f64]) -> Result<TestResult> {
        match self {
            TestSpec::Adf(o) => adf_test(series, o),
            TestSpec::Kpss(o) => kpss_test(series, o),
            TestSpec::RamseyRothman(o) => ramsey_rothman_test(series, o),
            TestSpec::Dfk(o) => dfk_test(series, o),
            TestSpec::HvgDegree { surrogates, seed } => hvg_degree_test(series, *surrogates, *seed),
            TestSpec::Clustering { seed } => clustering_irreversibility_test(series, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub window_size: usize,
    /// Index of the last observation in the window.
    pub window_end: usize,
    /// `None` when the test is infeasible on this window.
    pub result: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSurface {
    pub test: String,
    pub window_sizes: Vec<usize>,
    /// Row-major by window size, then window end.
    pub cells: Vec<SurfaceCell>,
}

impl TestSurface {
    pub fn row(&self, window_size: usize) -> impl Iterator<Item = &SurfaceCell> {
        self.cells.iter().filter(move |c| c.window_size == window_size)
    }

    /// `test,window_size,window_end,statistic,p_value`; infeasible cells
    /// have empty statistic and p-value. `label` maps a window-end index to
    /// its printed form, such as a date.
    pub fn write_csv<W: Write>(&self, out: W, label: impl Fn(usize) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["test", "window_size", "window_end", "statistic", "p_value"])?;
        for c in &self.cells {
            let (stat, p) = match &c.result {
                Some(r) => (r.statistic.to_string(), r.p_value.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([self.test.clone(), c.window_size.to_string(), label(c.window_end), stat, p])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `spec` on every window of every size in `window_sizes`, ends on the
/// lattice `size - 1, size - 1 + stride, ...`.
pub fn rolling_test_surface(
    series: &[f64],
    spec: &TestSpec,
    window_sizes: &[usize],
    stride: usize,
) -> Result<TestSurface> {
    if stride == 0 {
        return Err(QrseError::Parameter("stride must be positive".into()));
    }
    if let Some(&w) = window_sizes.iter().find(|w| **w == 0 || **w > series.len()) {
        return Err(QrseError::Parameter(format!(
            "window size {w} outside 1..={}",
            series.len()
        )));
    }
    let coords: Vec<(usize, usize)> = window_sizes
        .iter()
        .flat_map(|&w| (w - 1..series.len()).step_by(stride).map(move |end| (w, end)))
        .collect();
    let cells = coords
        .into_par_iter()
        .map(|(w, end)| {
            let start = end + 1 - w;
            let result = match spec.run(&series[start..=end]) {
                Ok(mut r) => {
                    r.window = (start, end);
                    Some(r)
                }
                Err(e) => {
                    log::debug!("{} infeasible on [{start}, {end}]: {e}", spec.name());
                    None
                }
            };
            SurfaceCell {
                window_size: w,
                window_end: end,
                result,
            }
        })
        .collect();
    Ok(TestSurface {
        test: spec.name().to_string(),
        window_sizes: window_sizes.to_vec(),
        cells,
    })
}
