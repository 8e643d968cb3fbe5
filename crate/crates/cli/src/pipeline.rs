use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use qrse_core::diagnostics::{rolling_test_surface, TestSurface};
use qrse_core::fit::{rolling_fit, summarize_fits};
use qrse_core::ingest::{compute_log_returns, read_price_panel, truncate_returns, ReturnPanel, DATE_FORMAT};
use qrse_core::regimes::{cap_weighted_index, classify_regimes, IndexSeries};
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const RETURNS_FILE: &str = "returns.csv";
pub const INDEX_FILE: &str = "index.csv";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes files into the output directory, each tagged with the config hash.
struct OutputDir {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
}

impl OutputDir {
    fn create(config: &PipelineConfig) -> Result<Self> {
        std::fs::create_dir_all(&config.out_dir).map_err(|e| CliError::io(&config.out_dir, e))?;
        Ok(Self {
            dir: config.out_dir.clone(),
            hash: config.hash()?,
            written: Vec::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// A `# config_hash=` comment line, then whatever `body` writes.
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> qrse_core::Result<()>) -> Result<()> {
        let mut buf = format!("# config_hash={}\n", self.hash).into_bytes();
        body(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let body = format!("# config_hash={}\n{text}", self.hash);
        self.write_bytes(name, body.as_bytes())
    }

    /// JSON has no comments, so the hash goes in a top-level field.
    fn json(&mut self, name: &str, mut value: Value) -> Result<()> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub retained_fraction: f64,
    pub removed: usize,
    pub files: Vec<String>,
}

/// Load prices, compute and truncate log returns, and build the index.
pub fn cmd_ingest(config: &PipelineConfig) -> Result<IngestOutcome> {
    let (prices, load) = read_price_panel(open(&config.input.prices)?, config.input.layout)?;
    let mut returns = compute_log_returns(&prices)?;
    if config.truncation.enabled {
        returns = truncate_returns(&returns, config.truncation.k_sd, config.truncation.scope)?;
    }
    let (index, source) = match &config.input.index {
        Some(path) => (IndexSeries::read_csv(open(path)?)?, "file"),
        None => (cap_weighted_index(&prices)?, "cap_weighted"),
    };
    let t = &returns.truncation;
    let retained = t.retained_fraction();
    log::info!(
        "{} assets, {} return dates, {} of {} returns removed ({:.2}% retained)",
        returns.assets.len(),
        returns.dates.len(),
        t.removed,
        t.observed,
        100.0 * retained
    );

    let mut out = OutputDir::create(config)?;
    out.csv(RETURNS_FILE, |w| returns.write_csv(w))?;
    out.csv(INDEX_FILE, |w| index.write_csv(w))?;
    out.json(
        INGEST_REPORT_FILE,
        json!({
            "load": load,
            "return_dates": returns.dates.len(),
            "truncation": t,
            "retained_fraction": retained,
            "retained_percent": format!("{:.2}%", 100.0 * retained),
            "index_source": source,
            "index_dates": index.dates.len(),
        }),
    )?;
    Ok(IngestOutcome {
        retained_fraction: retained,
        removed: t.removed,
        files: out.written,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOutcome {
    pub windows: usize,
    pub converged: usize,
    pub summary_regimes: Vec<String>,
    pub files: Vec<String>,
}

/// Percentage log returns of the index, labelled by the later date.
fn index_returns(index: &IndexSeries) -> (Vec<f64>, Vec<String>) {
    let r = index.level.windows(2).map(|w| 100.0 * (w[1] / w[0]).ln()).collect();
    let d = index.dates[1..].iter().map(|d| d.format(DATE_FORMAT).to_string()).collect();
    (r, d)
}

/// Regimes, rolling fits, the summary table and diagnostic surfaces from
/// the artifacts `cmd_ingest` left in the output directory.
pub fn cmd_analyze(config: &PipelineConfig) -> Result<AnalyzeOutcome> {
    let dir = &config.out_dir;
    let returns = ReturnPanel::read_csv(open(&dir.join(RETURNS_FILE))?)?;
    let index = IndexSeries::read_csv(open(&dir.join(INDEX_FILE))?)?;
    let mut out = OutputDir::create(config)?;

    let regimes = classify_regimes(&index, &config.regimes)?;
    out.csv("regimes.csv", |w| regimes.write_labels_csv(w))?;
    out.csv("regime_spans.csv", |w| regimes.write_spans_csv(w))?;

    let fits = rolling_fit(&returns, &regimes, &config.rolling)?;
    for (date, reason) in &fits.skipped {
        log::warn!("window ending {date} skipped: {reason}");
    }
    out.csv("fits.csv", |w| fits.write_csv(w))?;
    let converged = fits.records.iter().filter(|r| r.fit.converged).count();
    if converged == 0 {
        return Err(CliError::NoFits {
            skipped: fits.skipped.len(),
            unconverged: fits.records.len(),
        });
    }
    let summary = summarize_fits(&fits)?;
    for note in &summary.notes {
        log::warn!("{note}");
    }
    out.csv("summary.csv", |w| summary.write_csv(w))?;
    out.text("summary.txt", &summary.to_text())?;

    let mut diagnostics = Vec::new();
    if config.diagnostics.enabled {
        diagnostics = run_diagnostics(config, &index, &mut out)?;
    }

    let seeds: BTreeMap<String, u64> = config.seeds().into_iter().collect();
    let files = out.written.clone();
    out.json(
        MANIFEST_FILE,
        json!({
            "tool": "qrse",
            "version": env!("CARGO_PKG_VERSION"),
            "seeds": seeds,
            "regime_rules": {
                "short_span": config.regimes.short_span,
                "long_span": config.regimes.long_span,
                "ema_seed": config.regimes.seed,
                "ties": "previous_label",
            },
            "fits": {
                "windows": fits.records.len() + fits.skipped.len(),
                "fitted": fits.records.len(),
                "converged": converged,
                "skipped": fits.skipped.len(),
            },
            "diagnostics": diagnostics,
            "outputs": files,
        }),
    )?;
    Ok(AnalyzeOutcome {
        windows: fits.records.len() + fits.skipped.len(),
        converged,
        summary_regimes: summary.rows.iter().map(|r| r.regime.to_string()).collect(),
        files: out.written,
    })
}

/// One surface file per configured test, plus rejection rates per window size.
fn run_diagnostics(config: &PipelineConfig, index: &IndexSeries, out: &mut OutputDir) -> Result<Vec<Value>> {
    let d = &config.diagnostics;
    let (series, labels) = index_returns(index);
    let sizes: Vec<usize> = d.window_sizes.iter().copied().filter(|w| *w <= series.len()).collect();
    if sizes.len() < d.window_sizes.len() {
        log::warn!(
            "diagnostic window sizes above the series length {} dropped",
            series.len()
        );
    }
    let mut rates = csv_rates_header();
    let mut used_names: BTreeMap<&str, usize> = BTreeMap::new();
    let mut summary = Vec::new();
    for spec in &d.tests {
        let count = used_names.entry(spec.name()).or_insert(0);
        *count += 1;
        let file = if *count == 1 {
            format!("surface_{}.csv", spec.name())
        } else {
            format!("surface_{}_{}.csv", spec.name(), count)
        };
        let surface = if sizes.is_empty() {
            TestSurface {
                test: spec.name().into(),
                window_sizes: Vec::new(),
                cells: Vec::new(),
            }
        } else {
            rolling_test_surface(&series, spec, &sizes, d.stride)?
        };
        out.csv(&file, |w| surface.write_csv(w, |i| labels[i].clone()))?;
        for &w in &sizes {
            let row: Vec<_> = surface.row(w).collect();
            let feasible: Vec<_> = row.iter().filter_map(|c| c.result.as_ref()).collect();
            let rejected = feasible.iter().filter(|r| r.rejects(d.significance)).count();
            let rate = if feasible.is_empty() {
                String::new()
            } else {
                (rejected as f64 / feasible.len() as f64).to_string()
            };
            rates.push_str(&format!(
                "{},{file},{w},{},{},{rejected},{rate}\n",
                spec.name(),
                row.len(),
                feasible.len()
            ));
        }
        summary.push(json!({ "test": spec.name(), "file": file, "spec": spec }));
    }
    out.text("diagnostics.csv", &rates)?;
    Ok(summary)
}

fn csv_rates_header() -> String {
    "test,file,window_size,cells,feasible,rejections,rejection_rate\n".to_string()
}
