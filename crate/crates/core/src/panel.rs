//! Date-indexed panel containers shared by the ingest, forecasting and
//! backtest layers.
//!
//! All panels are dense row-major matrices with one row per month. Missing
//! values are represented as `f64::NAN`; every consumer that tolerates
//! missing data says so explicitly, everything else treats NaN as a data
//! error. Dates are calendar months; the day-of-month is carried through
//! from the source but all alignment logic works on (year, month).

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// Per-series metadata for a raw macro panel column.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub id: String,
    /// FRED-MD transformation code, 1..=7.
    pub tcode: u8,
    /// Group identifier from the sidecar map, if the series appeared there.
    pub group: Option<u8>,
}

/// Raw (or transformed) macro panel: months x series, NaN = missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPanel {
    pub dates: Vec<NaiveDate>,
    pub series: Vec<SeriesMeta>,
    /// Row-major values, `dates.len() * series.len()`.
    pub values: Vec<f64>,
}

impl MacroPanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_series(&self) -> usize {
        self.series.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.series.len() + col]
    }

    pub fn set_value(&mut self, row: usize, col: usize, v: f64) {
        let w = self.series.len();
        self.values[row * w + col] = v;
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, col)).collect()
    }

    pub fn series_index(&self, id: &str) -> Option<usize> {
        self.series.iter().position(|s| s.id == id)
    }

    /// Basic shape and ordering checks shared by every constructor path.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.n_rows() * self.n_series() {
            return Err(Error::data(format!(
                "panel value buffer has {} entries, expected {} rows x {} series",
                self.values.len(),
                self.n_rows(),
                self.n_series()
            )));
        }
        validate_month_order(&self.dates)?;
        Ok(())
    }
}

/// Reduced factor panel: months x factors, no missing values allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub dates: Vec<NaiveDate>,
    /// One row per month.
    pub rows: Vec<Vec<f64>>,
}

impl FactorPanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_factors(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.dates.len() {
            return Err(Error::data(format!(
                "factor panel has {} rows but {} dates",
                self.rows.len(),
                self.dates.len()
            )));
        }
        let width = self.n_factors();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::data(format!(
                    "factor row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("factor row {i} contains non-finite values")));
            }
        }
        validate_month_order(&self.dates)?;
        Ok(())
    }
}

/// Monthly simple returns for a set of assets.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// One row per month, one entry per ticker.
    pub rows: Vec<Vec<f64>>,
}

impl AssetPanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Column of returns for one asset.
    pub fn asset_column(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[col]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.dates.len() {
            return Err(Error::data(format!(
                "asset panel has {} rows but {} dates",
                self.rows.len(),
                self.dates.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.tickers.len() {
                return Err(Error::data(format!(
                    "asset row {i} has {} entries, expected {}",
                    row.len(),
                    self.tickers.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("asset row {i} contains non-finite returns")));
            }
        }
        validate_month_order(&self.dates)?;
        Ok(())
    }
}

/// Serial month number, so consecutive calendar months differ by exactly 1.
pub fn month_index(d: NaiveDate) -> i64 {
    i64::from(d.year()) * 12 + i64::from(d.month0())
}

/// Dates must be strictly increasing month by month (duplicates and gaps in
/// ordering are data errors; gaps in coverage are allowed).
fn validate_month_order(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if month_index(w[1]) <= month_index(w[0]) {
            return Err(Error::data(format!(
                "dates not strictly increasing by month: {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// True if every step is exactly one calendar month.
pub fn is_consecutive_monthly(dates: &[NaiveDate]) -> bool {
    dates
        .windows(2)
        .all(|w| month_index(w[1]) == month_index(w[0]) + 1)
}

/// Accepts ISO (`2020-01-01`) and US FRED-MD style (`1/1/2020`) dates.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .map_err(|_| Error::data(format!("unparseable date '{s}'")))
}

/// Read a factor panel written by [`write_factor_csv`] (header row with a
/// `date` column followed by one column per factor).
pub fn read_factor_csv(path: &std::path::Path) -> Result<FactorPanel> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let mut fields = record.iter();
        let date = fields
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty row {i}", path.display())))?;
        dates.push(parse_date(date)?);
        let row: Result<Vec<f64>> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::data(format!("{}: bad number '{f}' in row {i}", path.display())))
            })
            .collect();
        rows.push(row?);
    }
    let panel = FactorPanel { dates, rows };
    panel.validate()?;
    Ok(panel)
}

pub fn write_factor_csv(panel: &FactorPanel, path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("date");
    for j in 0..panel.n_factors() {
        out.push_str(&format!(",f{}", j + 1));
    }
    out.push('\n');
    for (date, row) in panel.dates.iter().zip(&panel.rows) {
        out.push_str(&date.format("%Y-%m-%d").to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read monthly asset returns: header `date,<ticker>...`, one decimal simple
/// return per cell.
pub fn read_asset_csv(path: &std::path::Path) -> Result<AssetPanel> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .clone();
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if tickers.is_empty() {
        return Err(Error::data(format!("{}: no asset columns", path.display())));
    }
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let mut fields = record.iter();
        let date = fields
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty row {i}", path.display())))?;
        dates.push(parse_date(date)?);
        let row: Result<Vec<f64>> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::data(format!("{}: bad number '{f}' in row {i}", path.display())))
            })
            .collect();
        rows.push(row?);
    }
    let panel = AssetPanel { dates, tickers, rows };
    panel.validate()?;
    Ok(panel)
}

pub fn write_asset_csv(panel: &AssetPanel, path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("date");
    for t in &panel.tickers {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (date, row) in panel.dates.iter().zip(&panel.rows) {
        out.push_str(&date.format("%Y-%m-%d").to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_index_steps_by_one_across_year_boundary() {
        let dec = NaiveDate::from_ymd_opt(1999, 12, 1).unwrap();
        let jan = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        assert_eq!(month_index(jan), month_index(dec) + 1);
        assert!(is_consecutive_monthly(&[dec, jan]));
    }

    #[test]
    fn parse_date_accepts_both_styles() {
        assert_eq!(
            parse_date("1/1/1959").unwrap(),
            NaiveDate::from_ymd_opt(1959, 1, 1).unwrap()
        );
        assert_eq!(
            parse_date("1959-01-01").unwrap(),
            NaiveDate::from_ymd_opt(1959, 1, 1).unwrap()
        );
        assert!(parse_date("1959/1/1").is_err());
    }

    #[test]
    fn factor_csv_round_trip() {
        let panel = FactorPanel {
            dates: vec![
                NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2020, 2, 1).unwrap(),
            ],
            rows: vec![vec![1.5, -2.25], vec![0.125, 3.0]],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("factors.csv");
        write_factor_csv(&panel, &path).unwrap();
        let back = read_factor_csv(&path).unwrap();
        assert_eq!(panel, back);
    }

    #[test]
    fn unordered_dates_rejected() {
        let panel = FactorPanel {
            dates: vec![
                NaiveDate::from_ymd_opt(2020, 2, 1).unwrap(),
                NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            ],
            rows: vec![vec![0.0], vec![0.0]],
        };
        assert!(panel.validate().is_err());
    }
}
