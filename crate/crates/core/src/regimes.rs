//! Market index construction and bull/bear classification from an EMA crossover.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{QrseError, Result};
use crate::ingest::{PricePanel, DATE_FORMAT};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    pub dates: Vec<NaiveDate>,
    /// Index level, base 100 on the first date.
    pub level: Vec<f64>,
}

impl IndexSeries {
    /// Rebase raw positive levels so the first date is 100.
    pub fn rebased(dates: Vec<NaiveDate>, raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.len() != dates.len() {
            return Err(QrseError::InsufficientData("index needs matching, non-empty dates and levels".into()));
        }
        if let Some(v) = raw.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(QrseError::Parameter(format!("index levels must be positive, got {v}")));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(QrseError::Schema(format!("index dates not increasing at {}", w[1])));
        }
        let base = raw[0];
        Ok(Self {
            dates,
            level: raw.iter().map(|v| 100.0 * v / base).collect(),
        })
    }

    /// Read a `date,close` file (an externally published index).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_lowercase()).collect();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| QrseError::Schema(format!("missing required column `{name}`")))
        };
        let date_col = find("date")?;
        let level_col = find("close").or_else(|_| find("level"))?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let s = rec.get(date_col).unwrap_or("");
            let date = NaiveDate::parse_from_str(s, DATE_FORMAT)
                .map_err(|_| QrseError::Schema(format!("row {}: bad date `{s}`", i + 1)))?;
            let v: f64 = rec.get(level_col).unwrap_or("").parse().map_err(|_| QrseError::Value {
                row: i + 1,
                message: "unparseable index level".into(),
            })?;
            rows.push((date, v));
        }
        rows.sort_by_key(|r| r.0);
        let (dates, raw): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Self::rebased(dates, &raw)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "level"])?;
        for (d, l) in self.dates.iter().zip(&self.level) {
            w.write_record([d.format(DATE_FORMAT).to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmaSeed {
    /// `out[0] = x[0]`.
    #[default]
    First,
    /// Running mean over the first `span` points, recursion afterwards.
    Sma,
}

/// Exponential moving average with smoothing `2 / (span + 1)`.
pub fn ema(values: &[f64], span: usize, seed: EmaSeed) -> Result<Vec<f64>> {
    if span < 1 {
        return Err(QrseError::Parameter("EMA span must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(QrseError::InsufficientData("EMA of an empty series".into()));
    }
    let lambda = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (t, &x) in values.iter().enumerate() {
        let v = match seed {
            EmaSeed::Sma if t < span => {
                sum += x;
                sum / (t + 1) as f64
            }
            _ if t == 0 => x,
            _ => out[t - 1] + lambda * (x - out[t - 1]),
        };
        out.push(v);
    }
    Ok(out)
}

/// Capitalization-weighted index, base 100.
///
/// The day-`t` index return is the simple return of each asset weighted by
/// its previous-day market cap, over assets priced on both days.
pub fn cap_weighted_index(panel: &PricePanel) -> Result<IndexSeries> {
    let mcap = panel
        .mcap
        .as_ref()
        .ok_or_else(|| QrseError::Schema("cap-weighted index needs an `mcap` column".into()))?;
    if panel.dates.len() < 2 {
        return Err(QrseError::InsufficientData("index needs at least 2 dates".into()));
    }
    let mut level = vec![100.0];
    for t in 1..panel.dates.len() {
        let mut weight = 0.0;
        let mut weighted = 0.0;
        for a in 0..panel.assets.len() {
            if let (Some(p0), Some(p1), Some(m)) = (panel.close[a][t - 1], panel.close[a][t], mcap[a][t - 1]) {
                let log_ret = (p1 / p0).ln();
                weighted += m * log_ret.exp_m1();
                weight += m;
            }
        }
        if weight <= 0.0 {
            return Err(QrseError::IndexGap { date: panel.dates[t] });
        }
        let prev = level[t - 1];
        level.push(prev * (1.0 + weighted / weight));
    }
    Ok(IndexSeries {
        dates: panel.dates.clone(),
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Bull,
    Bear,
    Warmup,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::Bull => "bull",
            RegimeLabel::Bear => "bear",
            RegimeLabel::Warmup => "warmup",
        }
    }
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub label: RegimeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSeries {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<RegimeLabel>,
    pub spans: Vec<RegimeSpan>,
}

impl RegimeSeries {
    pub fn from_labels(dates: Vec<NaiveDate>, labels: Vec<RegimeLabel>) -> Self {
        let spans = spans_from_labels(&dates, &labels);
        Self { dates, labels, spans }
    }

    pub fn label_on(&self, date: NaiveDate) -> Option<RegimeLabel> {
        self.dates.binary_search(&date).ok().map(|i| self.labels[i])
    }

    pub fn write_labels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "label"])?;
        for (d, l) in self.dates.iter().zip(&self.labels) {
            w.write_record([d.format(DATE_FORMAT).to_string().as_str(), l.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_spans_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["start", "end", "label"])?;
        for s in &self.spans {
            w.write_record([
                s.start.format(DATE_FORMAT).to_string().as_str(),
                s.end.format(DATE_FORMAT).to_string().as_str(),
                s.label.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Maximal runs of equal labels.
pub fn spans_from_labels(dates: &[NaiveDate], labels: &[RegimeLabel]) -> Vec<RegimeSpan> {
    let mut spans: Vec<RegimeSpan> = Vec::new();
    for (d, l) in dates.iter().zip(labels) {
        match spans.last_mut() {
            Some(s) if s.label == *l => s.end = *d,
            _ => spans.push(RegimeSpan {
                start: *d,
                end: *d,
                label: *l,
            }),
        }
    }
    spans
}

/// Expand spans back to one label per date.
pub fn labels_from_spans(dates: &[NaiveDate], spans: &[RegimeSpan]) -> Vec<Option<RegimeLabel>> {
    dates
        .iter()
        .map(|d| spans.iter().find(|s| s.start <= *d && *d <= s.end).map(|s| s.label))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeOptions {
    pub short_span: usize,
    pub long_span: usize,
    pub seed: EmaSeed,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        Self {
            short_span: 50,
            long_span: 200,
            seed: EmaSeed::First,
        }
    }
}

/// Bull when the short EMA is above the long EMA, bear when below. The
/// first `long_span` dates are warmup; exact ties keep the previous label
/// (bull if there is none yet).
pub fn classify_regimes(index: &IndexSeries, opts: &RegimeOptions) -> Result<RegimeSeries> {
    if opts.short_span < 1 || opts.long_span <= opts.short_span {
        return Err(QrseError::Parameter(format!(
            "need 1 <= short_span < long_span, got {} and {}",
            opts.short_span, opts.long_span
        )));
    }
    let n = index.level.len();
    if n <= opts.long_span {
        return Err(QrseError::InsufficientData(format!(
            "regime classification needs more than {} dates, index has {n}",
            opts.long_span
        )));
    }
    let short = ema(&index.level, opts.short_span, opts.seed)?;
    let long = ema(&index.level, opts.long_span, opts.seed)?;
    let mut labels = Vec::with_capacity(n);
    let mut prev = RegimeLabel::Bull;
    for t in 0..n {
        if t < opts.long_span {
            labels.push(RegimeLabel::Warmup);
            continue;
        }
        let label = if short[t] > long[t] {
            RegimeLabel::Bull
        } else if short[t] < long[t] {
            RegimeLabel::Bear
        } else {
            prev
        };
        prev = label;
        labels.push(label);
    }
    Ok(RegimeSeries::from_labels(index.dates.clone(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema(&[3.0; 10], 7, EmaSeed::First).unwrap(), vec![3.0; 10]);
        assert_eq!(ema(&[3.0; 10], 7, EmaSeed::Sma).unwrap(), vec![3.0; 10]);
        let x = [1.0, -2.0, 5.5, 0.25];
        assert_eq!(ema(&x, 1, EmaSeed::First).unwrap(), x.to_vec());
        assert_eq!(ema(&[0.0, 1.0], 3, EmaSeed::First).unwrap(), vec![0.0, 0.5]);
        assert!(ema(&x, 0, EmaSeed::First).is_err());
        assert!(ema(&[], 3, EmaSeed::First).is_err());
    }

    #[test]
    fn sma_seed() {
        let out = ema(&[1.0, 2.0, 3.0, 4.0], 3, EmaSeed::Sma).unwrap();
        assert_eq!(&out[..3], &[1.0, 1.5, 2.0]);
        assert_eq!(out[3], 0.5 * 4.0 + 0.5 * 2.0);
    }

    fn panel(close: Vec<Vec<f64>>, mcap: Vec<Vec<f64>>) -> PricePanel {
        let n = close[0].len();
        let wrap = |m: Vec<Vec<f64>>| m.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
        PricePanel::new(
            (0..close.len()).map(|i| format!("A{i}")).collect(),
            dates(n),
            wrap(close),
            Some(wrap(mcap)),
        )
        .unwrap()
    }

    #[test]
    fn single_asset_index_tracks_price() {
        let prices = vec![10.0, 11.0, 9.5, 12.25, 12.0];
        let idx = cap_weighted_index(&panel(vec![prices.clone()], vec![vec![1.0; 5]])).unwrap();
        for (l, p) in idx.level.iter().zip(&prices) {
            assert!((l / p / 10.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_simple_returns() {
        let idx = cap_weighted_index(&panel(
            vec![vec![100.0, 101.0], vec![100.0, 99.0]],
            vec![vec![5.0, 5.0], vec![5.0, 5.0]],
        ))
        .unwrap();
        assert!((idx.level[1] - 100.0).abs() < 1e-12);
        let idx = cap_weighted_index(&panel(
            vec![vec![100.0, 102.0], vec![100.0, 98.0]],
            vec![vec![3.0, 1.0], vec![1.0, 1.0]],
        ))
        .unwrap();
        assert!((idx.level[1] - 101.0).abs() < 1e-12);
    }

    #[test]
    fn index_gap() {
        let mut p = panel(vec![vec![1.0, 2.0, 3.0]], vec![vec![1.0; 3]]);
        p.close[0][1] = None;
        assert!(matches!(cap_weighted_index(&p), Err(QrseError::IndexGap { .. })));
        let mut p = panel(vec![vec![1.0, 2.0]], vec![vec![1.0; 2]]);
        p.mcap = None;
        assert!(cap_weighted_index(&p).is_err());
    }

    #[test]
    fn monotone_series() {
        let n = 400;
        let up = IndexSeries::rebased(dates(n), &(0..n).map(|t| 1.001f64.powi(t as i32)).collect::<Vec<_>>()).unwrap();
        let r = classify_regimes(&up, &RegimeOptions::default()).unwrap();
        assert!(r.labels[..200].iter().all(|l| *l == RegimeLabel::Warmup));
        assert!(r.labels[200..].iter().all(|l| *l == RegimeLabel::Bull));
        let down = IndexSeries::rebased(dates(n), &(0..n).map(|t| 0.999f64.powi(t as i32)).collect::<Vec<_>>()).unwrap();
        let r = classify_regimes(&down, &RegimeOptions::default()).unwrap();
        assert!(r.labels[200..].iter().all(|l| *l == RegimeLabel::Bear));
        assert_eq!(r.spans.len(), 2);
    }

    #[test]
    fn flat_index_ties_default_to_bull() {
        let idx = IndexSeries::rebased(dates(210), &[5.0; 210]).unwrap();
        let r = classify_regimes(&idx, &RegimeOptions::default()).unwrap();
        assert!(r.labels[200..].iter().all(|l| *l == RegimeLabel::Bull));
    }

    #[test]
    fn short_index_is_rejected() {
        let idx = IndexSeries::rebased(dates(200), &[1.0; 200]).unwrap();
        assert!(matches!(
            classify_regimes(&idx, &RegimeOptions::default()),
            Err(QrseError::InsufficientData(_))
        ));
    }

    #[test]
    fn index_file() {
        let csv = "date,close\n2020-01-02,4000\n2020-01-01,3600\n";
        let idx = IndexSeries::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(idx.level[0], 100.0);
        assert!((idx.level[1] - 4000.0 / 36.0).abs() < 1e-12);
    }
}
