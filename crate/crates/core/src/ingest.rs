//! Price panel loading, log returns, outlier truncation and pooled summaries.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{QrseError, Result};
use crate::stats::{mean_sd, summarize, SummaryStats};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Closing prices (and optionally market caps) per asset and date.
///
/// Matrices are indexed `[asset][date]`; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub assets: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub close: Vec<Vec<Option<f64>>>,
    pub mcap: Option<Vec<Vec<Option<f64>>>>,
}

impl PricePanel {
    pub fn new(
        assets: Vec<String>,
        dates: Vec<NaiveDate>,
        close: Vec<Vec<Option<f64>>>,
        mcap: Option<Vec<Vec<Option<f64>>>>,
    ) -> Result<Self> {
        let panel = Self {
            assets,
            dates,
            close,
            mcap,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(QrseError::Schema(format!(
                "dates must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        check_matrix("close", &self.close, self.assets.len(), self.dates.len())?;
        if let Some(m) = &self.mcap {
            check_matrix("mcap", m, self.assets.len(), self.dates.len())?;
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.assets.len(), self.dates.len())
    }
}

fn check_matrix(name: &str, m: &[Vec<Option<f64>>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(QrseError::Schema(format!("{name} matrix must be {rows} x {cols}")));
    }
    for (i, row) in m.iter().enumerate() {
        if let Some(v) = row.iter().flatten().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(QrseError::Value {
                row: i,
                message: format!("{name} values must be positive, asset {i} has {v}"),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    /// `date,asset,close[,mcap]`, one observation per row.
    #[default]
    Long,
    /// `date,<asset1>,<asset2>,...`, one close column per asset.
    Wide,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    /// Blank or unparseable close cells.
    pub missing_close: usize,
    /// Blank or unparseable market-cap cells.
    pub missing_mcap: usize,
    pub assets: usize,
    pub dates: usize,
}

pub fn load_price_panel(path: &Path, layout: CsvLayout) -> Result<(PricePanel, LoadReport)> {
    let file = std::fs::File::open(path)?;
    read_price_panel(file, layout)
}

pub fn read_price_panel<R: Read>(reader: R, layout: CsvLayout) -> Result<(PricePanel, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_lowercase()).collect();
    match layout {
        CsvLayout::Long => read_long(&mut rdr, &headers),
        CsvLayout::Wide => read_wide(&mut rdr, &headers),
    }
}

fn column(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| QrseError::Schema(format!("missing required column `{name}`")))
}

fn parse_date(s: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| QrseError::Schema(format!("row {row}: column `date` holds `{s}`, expected YYYY-MM-DD")))
}

/// Blank or unparseable cells become `None`; non-positive numbers are errors.
fn parse_positive(s: &str, row: usize, name: &str) -> Result<Option<f64>> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
        Ok(v) if v.is_finite() => Err(QrseError::Value {
            row,
            message: format!("{name} must be positive, got {v}"),
        }),
        _ => Ok(None),
    }
}

type Cell = (Option<f64>, Option<f64>);

fn read_long<R: Read>(rdr: &mut csv::Reader<R>, headers: &[String]) -> Result<(PricePanel, LoadReport)> {
    let date_col = column(headers, "date")?;
    let asset_col = column(headers, "asset")?;
    let close_col = column(headers, "close")?;
    let mcap_col = headers.iter().position(|h| h == "mcap");

    let mut report = LoadReport::default();
    let mut assets: Vec<String> = Vec::new();
    let mut asset_idx: HashMap<String, usize> = HashMap::new();
    let mut dates = BTreeSet::new();
    let mut cells: HashMap<(usize, NaiveDate), Cell> = HashMap::new();

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        report.rows_read += 1;
        let date = parse_date(rec.get(date_col).unwrap_or(""), row)?;
        let asset = rec.get(asset_col).unwrap_or("").to_string();
        if asset.is_empty() {
            return Err(QrseError::Schema(format!("row {row}: empty `asset`")));
        }
        let close = parse_positive(rec.get(close_col).unwrap_or(""), row, "close")?;
        if close.is_none() {
            report.missing_close += 1;
        }
        let mcap = match mcap_col {
            Some(c) => {
                let m = parse_positive(rec.get(c).unwrap_or(""), row, "mcap")?;
                if m.is_none() {
                    report.missing_mcap += 1;
                }
                m
            }
            None => None,
        };
        let a = *asset_idx.entry(asset.clone()).or_insert_with(|| {
            assets.push(asset.clone());
            assets.len() - 1
        });
        if cells.insert((a, date), (close, mcap)).is_some() {
            return Err(QrseError::Schema(format!(
                "row {row}: duplicate date {date} for asset `{asset}`"
            )));
        }
        dates.insert(date);
    }

    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let mut close = vec![vec![None; dates.len()]; assets.len()];
    let mut mcap = mcap_col.map(|_| vec![vec![None; dates.len()]; assets.len()]);
    for (t, d) in dates.iter().enumerate() {
        for a in 0..assets.len() {
            if let Some(&(c, m)) = cells.get(&(a, *d)) {
                close[a][t] = c;
                if let Some(mm) = mcap.as_mut() {
                    mm[a][t] = m;
                }
            }
        }
    }
    report.assets = assets.len();
    report.dates = dates.len();
    Ok((PricePanel::new(assets, dates, close, mcap)?, report))
}

fn read_wide<R: Read>(rdr: &mut csv::Reader<R>, headers: &[String]) -> Result<(PricePanel, LoadReport)> {
    let date_col = column(headers, "date")?;
    let asset_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != date_col).collect();
    let raw_headers = rdr.headers()?.clone();
    let assets: Vec<String> = asset_cols.iter().map(|&c| raw_headers[c].to_string()).collect();
    let mut seen = BTreeSet::new();
    for a in &assets {
        if !seen.insert(a) {
            return Err(QrseError::Schema(format!("duplicate asset column `{a}`")));
        }
    }

    let mut report = LoadReport::default();
    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        report.rows_read += 1;
        let date = parse_date(rec.get(date_col).unwrap_or(""), row)?;
        let mut vals = Vec::with_capacity(asset_cols.len());
        for &c in &asset_cols {
            let v = parse_positive(rec.get(c).unwrap_or(""), row, "close")?;
            if v.is_none() {
                report.missing_close += 1;
            }
            vals.push(v);
        }
        rows.push((date, vals));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(QrseError::Schema(format!("duplicate date row {}", w[0].0)));
    }
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let close = (0..assets.len())
        .map(|a| rows.iter().map(|(_, v)| v[a]).collect())
        .collect();
    report.assets = assets.len();
    report.dates = dates.len();
    Ok((PricePanel::new(assets, dates, close, None)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationScope {
    /// One mean and sd over every return in the panel.
    #[default]
    Pooled,
    /// Separate moments per asset.
    PerAsset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRecord {
    /// `None` until truncation has been applied.
    pub k_sd: Option<f64>,
    pub scope: TruncationScope,
    /// `(mean, sd)` used for the cut: one entry when pooled, one per asset otherwise.
    pub moments: Vec<(f64, f64)>,
    pub removed: usize,
    /// Present returns before truncation.
    pub observed: usize,
}

impl TruncationRecord {
    pub fn untruncated(observed: usize) -> Self {
        Self {
            k_sd: None,
            scope: TruncationScope::Pooled,
            moments: Vec::new(),
            removed: 0,
            observed,
        }
    }

    pub fn retained_fraction(&self) -> f64 {
        if self.observed == 0 {
            1.0
        } else {
            (self.observed - self.removed) as f64 / self.observed as f64
        }
    }
}

/// Daily log returns in %/day, indexed `[asset][date]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub assets: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<Vec<Option<f64>>>,
    pub truncation: TruncationRecord,
}

impl ReturnPanel {
    pub fn present_count(&self) -> usize {
        self.returns.iter().flatten().flatten().count()
    }

    /// Every present return, asset-major.
    pub fn pooled(&self) -> Vec<f64> {
        self.returns.iter().flatten().flatten().copied().collect()
    }

    /// Present returns of all assets on dates `start..=end` (indices).
    pub fn pooled_window(&self, start: usize, end: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for t in start..=end {
            for row in &self.returns {
                if let Some(v) = row[t] {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Write present returns as `date,asset,return` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "asset", "return"])?;
        for (t, d) in self.dates.iter().enumerate() {
            let ds = d.format(DATE_FORMAT).to_string();
            for (a, name) in self.assets.iter().enumerate() {
                if let Some(v) = self.returns[a][t] {
                    w.write_record([ds.as_str(), name.as_str(), &v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read `date,asset,return` rows back into a panel. The truncation
    /// record is not persisted in the file and comes back as untruncated.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_lowercase()).collect();
        let date_col = column(&headers, "date")?;
        let asset_col = column(&headers, "asset")?;
        let ret_col = column(&headers, "return")?;
        let mut assets: Vec<String> = Vec::new();
        let mut asset_idx: HashMap<String, usize> = HashMap::new();
        let mut dates = BTreeSet::new();
        let mut cells = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let date = parse_date(rec.get(date_col).unwrap_or(""), row)?;
            let asset = rec.get(asset_col).unwrap_or("").to_string();
            let value: f64 = rec.get(ret_col).unwrap_or("").parse().map_err(|_| QrseError::Value {
                row,
                message: "unparseable return".into(),
            })?;
            let a = *asset_idx.entry(asset.clone()).or_insert_with(|| {
                assets.push(asset.clone());
                assets.len() - 1
            });
            if cells.insert((a, date), value).is_some() {
                return Err(QrseError::Schema(format!("row {row}: duplicate date {date} for asset `{asset}`")));
            }
            dates.insert(date);
        }
        let dates: Vec<NaiveDate> = dates.into_iter().collect();
        let returns: Vec<Vec<Option<f64>>> = (0..assets.len())
            .map(|a| dates.iter().map(|d| cells.get(&(a, *d)).copied()).collect())
            .collect();
        let observed = returns.iter().flatten().flatten().count();
        Ok(Self {
            assets,
            dates,
            returns,
            truncation: TruncationRecord::untruncated(observed),
        })
    }
}

/// `100 ln(p_t / p_{t-1})` wherever both prices exist.
pub fn compute_log_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    if panel.dates.len() < 2 {
        return Err(QrseError::InsufficientData(format!(
            "log returns need at least 2 dates, panel has {}",
            panel.dates.len()
        )));
    }
    let returns: Vec<Vec<Option<f64>>> = panel
        .close
        .iter()
        .map(|row| {
            row.windows(2)
                .map(|w| match (w[0], w[1]) {
                    (Some(a), Some(b)) => Some(100.0 * (b / a).ln()),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let observed = returns.iter().flatten().flatten().count();
    Ok(ReturnPanel {
        assets: panel.assets.clone(),
        dates: panel.dates[1..].to_vec(),
        returns,
        truncation: TruncationRecord::untruncated(observed),
    })
}

/// Remove returns more than `k_sd` standard deviations from the mean.
///
/// Moments come from the sample as it stands before the cut and are not
/// re-estimated afterwards. A panel already truncated with the same `k_sd`
/// and scope is returned unchanged.
pub fn truncate_returns(panel: &ReturnPanel, k_sd: f64, scope: TruncationScope) -> Result<ReturnPanel> {
    if !(k_sd > 0.0 && k_sd.is_finite()) {
        return Err(QrseError::Parameter(format!("k_sd must be positive, got {k_sd}")));
    }
    if panel.truncation.k_sd == Some(k_sd) && panel.truncation.scope == scope {
        return Ok(panel.clone());
    }
    let observed = panel.present_count();
    if observed < 2 {
        return Err(QrseError::InsufficientData(format!(
            "truncation needs at least 2 returns, panel has {observed}"
        )));
    }

    let moments: Vec<(f64, f64)> = match scope {
        TruncationScope::Pooled => vec![mean_sd(&panel.pooled())],
        TruncationScope::PerAsset => panel
            .returns
            .iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().flatten().copied().collect();
                if vals.is_empty() {
                    (0.0, 0.0)
                } else {
                    mean_sd(&vals)
                }
            })
            .collect(),
    };

    let mut removed = 0;
    let returns = panel
        .returns
        .iter()
        .enumerate()
        .map(|(a, row)| {
            let (mean, sd) = moments[if scope == TruncationScope::Pooled { 0 } else { a }];
            row.iter()
                .map(|v| match v {
                    Some(x) if (x - mean).abs() > k_sd * sd => {
                        removed += 1;
                        None
                    }
                    other => *other,
                })
                .collect()
        })
        .collect();

    Ok(ReturnPanel {
        assets: panel.assets.clone(),
        dates: panel.dates.clone(),
        returns,
        truncation: TruncationRecord {
            k_sd: Some(k_sd),
            scope,
            moments,
            removed,
            observed,
        },
    })
}

/// Moments of every present return pooled across assets and dates.
pub fn pooled_summary(panel: &ReturnPanel) -> Result<SummaryStats> {
    summarize(&panel.pooled())
}
