//! FRED-MD CSV parsing and the sidecar group map.
//!
//! The data file layout: row 1 is the header (`sasdate` plus one column per
//! series), row 2 holds the transform codes behind a literal marker cell
//! (`Transform:`), and every following row is one month, dates formatted
//! `m/d/yyyy`. Empty cells are missing observations. The file does not carry
//! group memberships; those come from a separate two-column CSV.

use crate::error::{Error, Result};
use crate::panel::{parse_date, MacroPanel, SeriesMeta};

pub fn parse_fred_md(csv_text: &str) -> Result<MacroPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut records = reader.records();

    let header = records
        .next()
        .ok_or_else(|| Error::data("empty FRED-MD file"))?
        .map_err(|e| Error::data(format!("header row: {e}")))?;
    if header.len() < 2 {
        return Err(Error::data("FRED-MD header has no series columns"));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_owned()).collect();

    let tcode_row = records
        .next()
        .ok_or_else(|| Error::data("missing transform-code row"))?
        .map_err(|e| Error::data(format!("transform row: {e}")))?;
    let marker = tcode_row.get(0).unwrap_or("").trim();
    if !marker.to_ascii_lowercase().starts_with("transform") {
        return Err(Error::data(format!(
            "row 2 must start with a transform marker, found '{marker}'"
        )));
    }
    let mut series = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let cell = tcode_row.get(j + 1).unwrap_or("").trim();
        let code: f64 = cell
            .parse()
            .map_err(|_| Error::data(format!("column '{name}': unparseable tcode '{cell}'")))?;
        if code.fract() != 0.0 || !(1.0..=7.0).contains(&code) {
            return Err(Error::data(format!(
                "column '{name}': tcode {code} outside 1..7"
            )));
        }
        series.push(SeriesMeta { id: name.clone(), tcode: code as u8, group: None });
    }

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in records.enumerate() {
        let file_row = i + 3; // 1-based row in the file, after header and tcodes
        let record = record.map_err(|e| Error::data(format!("row {file_row}: {e}")))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue; // vintages end with blank lines
        }
        let date_cell = record.get(0).unwrap_or("").trim();
        let date = parse_date(date_cell)
            .map_err(|_| Error::data(format!("row {file_row}: unparseable date '{date_cell}'")))?;
        dates.push(date);
        for j in 0..series.len() {
            let cell = record.get(j + 1).unwrap_or("").trim();
            if cell.is_empty() {
                values.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::data(format!(
                        "row {file_row}, column '{}': bad number '{cell}'",
                        series[j].id
                    ))
                })?;
                values.push(v);
            }
        }
    }

    let panel = MacroPanel { dates, series, values };
    panel.validate()?;
    Ok(panel)
}

/// Parse the sidecar group map: header then `series_id,group_id` rows.
pub fn parse_group_map(csv_text: &str) -> Result<Vec<(String, u8)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let mut map = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("group map row {}: {e}", i + 2)))?;
        let id = record.get(0).unwrap_or("").trim().to_owned();
        let cell = record.get(1).unwrap_or("").trim();
        let group: u8 = cell
            .parse()
            .map_err(|_| Error::data(format!("group map '{id}': bad group '{cell}'")))?;
        if !(1..=7).contains(&group) {
            return Err(Error::data(format!("group map '{id}': group {group} outside 1..7")));
        }
        map.push((id, group));
    }
    Ok(map)
}

/// Bind group ids onto panel columns. Series absent from the map keep
/// `group: None`; map entries naming unknown series are ignored. Returns how
/// many columns were matched.
pub fn attach_groups(panel: &mut MacroPanel, map: &[(String, u8)]) -> usize {
    let mut matched = 0;
    for meta in &mut panel.series {
        if let Some((_, g)) = map.iter().find(|(id, _)| *id == meta.id) {
            meta.group = Some(*g);
            matched += 1;
        }
    }
    matched
}

/// Remove every column assigned to `group_id`. Excluding an absent group is
/// a no-op.
pub fn exclude_group(panel: &MacroPanel, group_id: u8) -> MacroPanel {
    let keep: Vec<usize> = (0..panel.n_series())
        .filter(|&j| panel.series[j].group != Some(group_id))
        .collect();
    select_columns(panel, &keep)
}

pub fn exclude_groups(panel: &MacroPanel, groups: &[u8]) -> MacroPanel {
    let keep: Vec<usize> = (0..panel.n_series())
        .filter(|&j| match panel.series[j].group {
            Some(g) => !groups.contains(&g),
            None => true,
        })
        .collect();
    select_columns(panel, &keep)
}

/// Drop columns whose missing fraction exceeds `max_missing_frac`. Returns
/// the reduced panel and the ids of the dropped series.
pub fn drop_sparse_columns(panel: &MacroPanel, max_missing_frac: f64) -> (MacroPanel, Vec<String>) {
    let n = panel.n_rows().max(1);
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..panel.n_series() {
        let missing = (0..panel.n_rows()).filter(|&i| panel.value(i, j).is_nan()).count();
        if missing as f64 / n as f64 > max_missing_frac {
            dropped.push(panel.series[j].id.clone());
        } else {
            keep.push(j);
        }
    }
    (select_columns(panel, &keep), dropped)
}

pub(crate) fn select_columns(panel: &MacroPanel, keep: &[usize]) -> MacroPanel {
    let series: Vec<SeriesMeta> = keep.iter().map(|&j| panel.series[j].clone()).collect();
    let mut values = Vec::with_capacity(panel.n_rows() * keep.len());
    for i in 0..panel.n_rows() {
        for &j in keep {
            values.push(panel.value(i, j));
        }
    }
    MacroPanel { dates: panel.dates.clone(), series, values }
}

/// Drop the first `n` rows of the panel (used for transform alignment).
pub(crate) fn drop_head_rows(panel: &MacroPanel, n: usize) -> MacroPanel {
    let n = n.min(panel.n_rows());
    MacroPanel {
        dates: panel.dates[n..].to_vec(),
        series: panel.series.clone(),
        values: panel.values[n * panel.n_series()..].to_vec(),
    }
}
