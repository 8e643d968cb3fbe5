//! Rolling-window estimation over a return panel and regime-conditional summaries.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bin_empirical, fit_qrse, FitOptions, QrseFit};
use crate::error::{QrseError, Result};
use crate::ingest::{ReturnPanel, DATE_FORMAT};
use crate::model::{QrseParams, ReturnGrid};
use crate::regimes::{RegimeLabel, RegimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingOptions {
    pub window_days: usize,
    pub stride: usize,
    pub grid_points: usize,
    /// Fractional widening of the window's sample range for the grid.
    pub grid_padding: f64,
    pub min_obs: usize,
    /// Windows per warm-start chain; chains run in parallel and each
    /// starts from `fit.init`.
    pub chunk_size: usize,
    pub fit: FitOptions,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            window_days: 120,
            stride: 1,
            grid_points: 801,
            grid_padding: 0.1,
            min_obs: 500,
            chunk_size: 64,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    /// Regime on the window's end date.
    pub regime: RegimeLabel,
    /// Some date in the window is warmup or unclassified.
    pub overlaps_warmup: bool,
    pub n_obs: usize,
    pub fit: QrseFit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitSeries {
    pub records: Vec<FitRecord>,
    /// `(window end, reason)` for windows that produced no fit.
    pub skipped: Vec<(NaiveDate, String)>,
}

pub const FIT_CSV_HEADER: [&str; 15] = [
    "window_end", "regime", "converged", "ID", "mu", "T", "alpha", "S", "r_bar", "sigma_r", "zeta",
    "delta", "f_buy", "kl", "iterations",
];

impl FitSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(FIT_CSV_HEADER)?;
        for r in &self.records {
            let f = &r.fit;
            w.write_record([
                r.window_end.format(DATE_FORMAT).to_string(),
                r.regime.to_string(),
                f.converged.to_string(),
                f.soofi_id.to_string(),
                f.params.mu.to_string(),
                f.params.temp.to_string(),
                f.params.alpha.to_string(),
                f.params.scale.to_string(),
                f.empirical_mean.to_string(),
                f.empirical_sd.to_string(),
                f.zeta.to_string(),
                f.delta.to_string(),
                f.f_buy.to_string(),
                f.kl.to_string(),
                f.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Window {
    start: usize,
    end: usize,
}

/// End indices `window - 1, window - 1 + stride, ...` that fit in `n_dates`.
fn windows(n_dates: usize, window: usize, stride: usize) -> Vec<Window> {
    if window == 0 || stride == 0 || n_dates < window {
        return Vec::new();
    }
    (window - 1..n_dates)
        .step_by(stride)
        .map(|end| Window {
            start: end + 1 - window,
            end,
        })
        .collect()
}

enum Outcome {
    Fit(FitRecord),
    Skip(NaiveDate, String),
}

/// Fit every window of `window_days` dates on the stride lattice, pooling
/// all assets' returns inside the window.
///
/// Within a chain of `chunk_size` windows each fit starts from the previous
/// optimum; a warm start that fails to converge is retried from `fit.init`.
/// Results do not depend on the number of worker threads.
pub fn rolling_fit(panel: &ReturnPanel, regimes: &RegimeSeries, opts: &RollingOptions) -> Result<FitSeries> {
    if opts.window_days == 0 || opts.stride == 0 || opts.chunk_size == 0 {
        return Err(QrseError::Parameter("window_days, stride and chunk_size must be positive".into()));
    }
    let wins = windows(panel.dates.len(), opts.window_days, opts.stride);
    if wins.is_empty() {
        log::warn!(
            "panel has {} dates, fewer than the {}-day window; no fits",
            panel.dates.len(),
            opts.window_days
        );
        return Ok(FitSeries::default());
    }

    let chunks: Vec<Vec<Outcome>> = wins
        .par_chunks(opts.chunk_size)
        .map(|chunk| {
            let mut warm: Option<QrseParams> = None;
            chunk
                .iter()
                .map(|w| {
                    let out = fit_window(panel, regimes, w, opts, warm);
                    warm = match &out {
                        Outcome::Fit(r) if r.fit.converged => Some(r.fit.params),
                        _ => None,
                    };
                    out
                })
                .collect()
        })
        .collect();

    let mut series = FitSeries::default();
    for outcome in chunks.into_iter().flatten() {
        match outcome {
            Outcome::Fit(r) => series.records.push(r),
            Outcome::Skip(d, reason) => {
                log::info!("skipping window ending {d}: {reason}");
                series.skipped.push((d, reason));
            }
        }
    }
    Ok(series)
}

fn fit_window(
    panel: &ReturnPanel,
    regimes: &RegimeSeries,
    w: &Window,
    opts: &RollingOptions,
    warm: Option<QrseParams>,
) -> Outcome {
    let end_date = panel.dates[w.end];
    let sample = panel.pooled_window(w.start, w.end);
    if sample.len() < opts.min_obs {
        return Outcome::Skip(
            end_date,
            QrseError::UndersizedWindow {
                n_obs: sample.len(),
                min_obs: opts.min_obs,
            }
            .to_string(),
        );
    }
    let attempt = || -> Result<QrseFit> {
        let grid = ReturnGrid::spanning(&sample, opts.grid_points, opts.grid_padding)?;
        let mut hist = bin_empirical(&sample, &grid, opts.min_obs)?;
        hist.window = Some((panel.dates[w.start], end_date));
        let fit = match warm {
            Some(init) => {
                let warm_fit = fit_qrse(&hist, &FitOptions { init, ..opts.fit })?;
                if warm_fit.converged {
                    warm_fit
                } else {
                    let cold = fit_qrse(&hist, &opts.fit)?;
                    if cold.converged || cold.kl < warm_fit.kl {
                        cold
                    } else {
                        warm_fit
                    }
                }
            }
            None => fit_qrse(&hist, &opts.fit)?,
        };
        Ok(fit)
    };
    match attempt() {
        Ok(fit) => {
            let labels: Vec<Option<RegimeLabel>> = (w.start..=w.end)
                .map(|t| regimes.label_on(panel.dates[t]))
                .collect();
            let overlaps_warmup = labels
                .iter()
                .any(|l| matches!(l, None | Some(RegimeLabel::Warmup)));
            Outcome::Fit(FitRecord {
                window_start: panel.dates[w.start],
                window_end: end_date,
                regime: labels.last().copied().flatten().unwrap_or(RegimeLabel::Warmup),
                overlaps_warmup,
                n_obs: sample.len(),
                fit,
            })
        }
        Err(e) => Outcome::Skip(end_date, e.to_string()),
    }
}

/// Table columns in display order.
pub const SUMMARY_COLUMNS: [&str; 8] = ["ID", "mu", "T", "alpha", "S", "r_bar", "zeta", "delta"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: f64,
    pub mu: f64,
    pub temp: f64,
    pub alpha: f64,
    pub scale: f64,
    pub r_bar: f64,
    pub zeta: f64,
    pub delta: f64,
}

impl SummaryRow {
    fn of(f: &QrseFit) -> [f64; 8] {
        [
            f.soofi_id,
            f.params.mu,
            f.params.temp,
            f.params.alpha,
            f.params.scale,
            f.empirical_mean,
            f.zeta,
            f.delta,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        Self {
            id: a[0],
            mu: a[1],
            temp: a[2],
            alpha: a[3],
            scale: a[4],
            r_bar: a[5],
            zeta: a[6],
            delta: a[7],
        }
    }

    pub fn values(&self) -> [f64; 8] {
        [
            self.id, self.mu, self.temp, self.alpha, self.scale, self.r_bar, self.zeta, self.delta,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: RegimeLabel,
    pub n_fits: usize,
    pub mean: SummaryRow,
    /// Population standard deviation across windows.
    pub sd: SummaryRow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<RegimeSummary>,
    pub notes: Vec<String>,
}

/// Mean and across-window dispersion of the point estimates per regime,
/// over converged fits whose windows lie entirely after warmup.
pub fn summarize_fits(fits: &FitSeries) -> Result<SummaryTable> {
    if fits.records.is_empty() {
        return Err(QrseError::InsufficientData("no fits to summarize".into()));
    }
    let mut groups: BTreeMap<RegimeLabel, Vec<[f64; 8]>> = BTreeMap::new();
    let mut table = SummaryTable::default();
    let mut excluded_warmup = 0;
    let mut unconverged = 0;
    for r in &fits.records {
        if r.overlaps_warmup || r.regime == RegimeLabel::Warmup {
            excluded_warmup += 1;
            continue;
        }
        if !r.fit.converged {
            unconverged += 1;
            continue;
        }
        groups.entry(r.regime).or_default().push(SummaryRow::of(&r.fit));
    }
    if excluded_warmup > 0 {
        table
            .notes
            .push(format!("{excluded_warmup} window(s) overlapping warmup excluded"));
    }
    if unconverged > 0 {
        table.notes.push(format!("{unconverged} unconverged fit(s) excluded"));
    }
    for label in [RegimeLabel::Bull, RegimeLabel::Bear] {
        let Some(rows) = groups.get(&label) else {
            table.notes.push(format!("{label}: no converged fits, row omitted"));
            continue;
        };
        let n = rows.len() as f64;
        let mut mean = [0.0; 8];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut sd = [0.0; 8];
        for row in rows {
            for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        table.rows.push(RegimeSummary {
            regime: label,
            n_fits: rows.len(),
            mean: SummaryRow::from_array(mean),
            sd: SummaryRow::from_array(sd.map(f64::sqrt)),
        });
    }
    Ok(table)
}

impl SummaryTable {
    /// `regime,n_fits,stat,ID,mu,T,alpha,S,r_bar,zeta,delta`, with a mean and an sd line per regime.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["regime", "n_fits", "stat"];
        header.extend(SUMMARY_COLUMNS);
        w.write_record(&header)?;
        for row in &self.rows {
            for (stat, vals) in [("mean", row.mean.values()), ("sd", row.sd.values())] {
                let mut rec = vec![row.regime.to_string(), row.n_fits.to_string(), stat.to_string()];
                rec.extend(vals.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text table: mean on one line, sd in parentheses below.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8}{:>7}", "", "n");
        for c in SUMMARY_COLUMNS {
            s.push_str(&format!("{c:>11}"));
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&format!("{:<8}{:>7}", row.regime.as_str(), row.n_fits));
            for v in row.mean.values() {
                s.push_str(&format!("{v:>11.4}"));
            }
            s.push('\n');
            s.push_str(&format!("{:<15}", ""));
            for v in row.sd.values() {
                s.push_str(&format!("{:>11}", format!("({v:.4})")));
            }
            s.push('\n');
        }
        for note in &self.notes {
            s.push_str(&format!("note: {note}\n"));
        }
        s
    }
}
