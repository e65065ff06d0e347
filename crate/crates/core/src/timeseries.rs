//! Aligned multivariate monthly series.
//!
//! A [`SeriesPanel`] holds one column per variable on a shared unit-step month
//! axis. Months are integer counts from year 0 (`year * 12 + month - 1`), so
//! lags and leads are plain integer offsets. Absent cells are kept in the
//! panel and only resolved when a delay matrix is built.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

/// Month index for `year`-`month` (month in 1..=12).
pub fn month_index(year: i64, month: u32) -> i64 {
    year * 12 + i64::from(month) - 1
}

/// Parses `YYYY-MM`.
pub fn parse_month(text: &str) -> Option<i64> {
    let (year, month) = text.trim().split_once('-')?;
    let year: i64 = year.parse().ok()?;
    let month: u32 = month.parse().ok()?;
    if !(1..=12).contains(&month) || year < 0 {
        return None;
    }
    Some(month_index(year, month))
}

pub fn format_month(index: i64) -> String {
    format!("{:04}-{:02}", index.div_euclid(12), index.rem_euclid(12) + 1)
}

/// Formats a value with 12 significant digits, shortest form.
pub fn format_value(value: f64) -> String {
    let rounded: f64 = format!("{value:.11e}").parse().unwrap_or(value);
    format!("{rounded}")
}

#[derive(Debug, Clone)]
pub struct SeriesPanel {
    variables: Vec<String>,
    start: i64,
    len: usize,
    // Absent cells hold NaN and `false` in the mask.
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
}

/// Equal schema, calendar and present cells; absent cells compare equal.
impl PartialEq for SeriesPanel {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.start == other.start
            && self.len == other.len
            && self.mask == other.mask
            && self.values.iter().zip(&other.values).zip(&self.mask).all(|((a, b), m)| {
                a.iter().zip(b).zip(m).all(|((x, y), &present)| !present || x == y)
            })
    }
}

impl SeriesPanel {
    /// Builds a panel from columns with optional cells.
    pub fn new(variables: Vec<String>, start: i64, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if variables.len() != columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} variable names for {} columns",
                variables.len(),
                columns.len()
            )));
        }
        for (i, name) in variables.iter().enumerate() {
            if variables[..i].contains(name) {
                return Err(Error::DuplicateVariable(name.clone()));
            }
        }
        let len = columns.first().map_or(0, Vec::len);
        if let Some((name, _)) = variables.iter().zip(&columns).find(|(_, c)| c.len() != len) {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` length differs from the time axis"
            )));
        }
        let mask = columns
            .iter()
            .map(|c| c.iter().map(Option::is_some).collect())
            .collect();
        let values = columns
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            .collect();
        Ok(Self {
            variables,
            start,
            len,
            values,
            mask,
        })
    }

    /// Builds a fully observed panel.
    pub fn from_columns(variables: Vec<String>, start: i64, columns: Vec<Vec<f64>>) -> Result<Self> {
        let columns = columns
            .into_iter()
            .map(|c| c.into_iter().map(Some).collect())
            .collect();
        Self::new(variables, start, columns)
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// First month index.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last month index. Meaningless for an empty panel.
    pub fn end(&self) -> i64 {
        self.start + self.len as i64 - 1
    }

    pub fn times(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len).map(move |i| self.start + i as i64)
    }

    pub fn index_of(&self, variable: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))
    }

    /// Raw column; absent cells are NaN.
    pub fn column(&self, var: usize) -> &[f64] {
        &self.values[var]
    }

    pub fn mask(&self, var: usize) -> &[bool] {
        &self.mask[var]
    }

    /// Value of variable `var` at month `time`, if inside the panel and present.
    pub fn get(&self, var: usize, time: i64) -> Option<f64> {
        let offset = time - self.start;
        if offset < 0 || offset >= self.len as i64 {
            return None;
        }
        let i = offset as usize;
        self.mask[var][i].then(|| self.values[var][i])
    }

    /// Present values of one column.
    pub fn present(&self, var: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[var]
            .iter()
            .zip(&self.mask[var])
            .filter_map(|(&v, &m)| m.then_some(v))
    }

    /// Returns a copy with one extra column.
    pub fn with_variable(&self, name: &str, column: Vec<Option<f64>>) -> Result<Self> {
        if self.variables.iter().any(|v| v == name) {
            return Err(Error::DuplicateVariable(name.to_string()));
        }
        if column.len() != self.len {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has {} cells for a panel of length {}",
                column.len(),
                self.len
            )));
        }
        let mut out = self.clone();
        out.variables.push(name.to_string());
        out.mask.push(column.iter().map(Option::is_some).collect());
        out.values
            .push(column.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect());
        Ok(out)
    }

    /// Applies `f(variable index, value)` to every present cell.
    pub fn map_present(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (var, column) in out.values.iter_mut().enumerate() {
            for (value, &present) in column.iter_mut().zip(&self.mask[var]) {
                if present {
                    *value = f(var, *value);
                }
            }
        }
        out
    }
}

/// Column selection applied while reading a CSV file.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Columns to keep, in order. `None` keeps every column.
    pub columns: Option<Vec<String>>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SeriesPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema).map_err(|e| e.context(path.display().to_string()))
}

/// Reads `time,<var1>,<var2>,...` with `YYYY-MM` times and empty cells as missing.
pub fn read_csv(reader: impl Read, schema: &CsvSchema) -> Result<SeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::InvalidArgument(
            "header must contain a time column and at least one variable".into(),
        ));
    }
    let names = &header[1..];
    let selected: Vec<usize> = match &schema.columns {
        None => (0..names.len()).collect(),
        Some(cols) => cols
            .iter()
            .map(|c| {
                names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::UnknownVariable(c.clone()))
            })
            .collect::<Result<_>>()?,
    };

    let mut start = None;
    let mut previous: Option<i64> = None;
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); selected.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let stamp = record.get(0).unwrap_or("");
        let month = parse_month(stamp).ok_or_else(|| Error::Parse {
            row,
            column: header[0].clone(),
            message: format!("expected YYYY-MM, found `{stamp}`"),
        })?;
        if let Some(prev) = previous {
            let (p, f) = (format_month(prev), format_month(month));
            if month == prev {
                return Err(Error::DuplicateMonth { row, month: f });
            }
            if month < prev {
                return Err(Error::NonMonotoneDates {
                    row,
                    previous: p,
                    found: f,
                });
            }
            if month != prev + 1 {
                return Err(Error::NonConsecutiveMonths {
                    row,
                    previous: p,
                    found: f,
                });
            }
        }
        start.get_or_insert(month);
        previous = Some(month);
        for (slot, &col) in columns.iter_mut().zip(&selected) {
            let cell = record.get(col + 1).unwrap_or("");
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: names[col].clone(),
                    message: format!("not a number: `{cell}`"),
                })?)
            };
            slot.push(value);
        }
    }
    let variables = selected.iter().map(|&c| names[c].clone()).collect();
    SeriesPanel::new(variables, start.unwrap_or(0), columns)
}

pub fn write_csv(panel: &SeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(panel, &mut file)
}

pub fn write_csv_to(panel: &SeriesPanel, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(panel.variables.iter().cloned());
    wtr.write_record(&header)?;
    for (i, t) in panel.times().enumerate() {
        let mut record = vec![format_month(t)];
        for var in 0..panel.variables.len() {
            record.push(if panel.mask[var][i] {
                format_value(panel.values[var][i])
            } else {
                String::new()
            });
        }
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

/// Per-variable location and scale, population formula.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub variables: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationStats {
    /// Fits on present cells with time `<= until` (all cells when `None`).
    pub fn fit(panel: &SeriesPanel, until: Option<i64>) -> Result<Self> {
        let mut means = Vec::with_capacity(panel.variables.len());
        let mut sds = Vec::with_capacity(panel.variables.len());
        for (var, name) in panel.variables.iter().enumerate() {
            let sample: Vec<f64> = panel
                .times()
                .filter(|&t| until.is_none_or(|u| t <= u))
                .filter_map(|t| panel.get(var, t))
                .collect();
            let n = sample.len() as f64;
            let mean = sample.iter().sum::<f64>() / n;
            let var_pop = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var_pop.sqrt();
            let distinct = sample.iter().any(|&x| x != sample[0]);
            if sample.len() < 2 || !distinct || !(sd > 0.0) {
                return Err(Error::ZeroVariance(name.clone()));
            }
            means.push(mean);
            sds.push(sd);
        }
        Ok(Self {
            variables: panel.variables.clone(),
            means,
            sds,
        })
    }

    fn lookup(&self, panel: &SeriesPanel) -> Result<Vec<usize>> {
        panel
            .variables
            .iter()
            .map(|name| {
                self.variables
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| Error::UnknownVariable(name.clone()))
            })
            .collect()
    }

    pub fn apply(&self, panel: &SeriesPanel) -> Result<SeriesPanel> {
        let idx = self.lookup(panel)?;
        Ok(panel.map_present(|var, x| (x - self.means[idx[var]]) / self.sds[idx[var]]))
    }

    pub fn invert(&self, panel: &SeriesPanel) -> Result<SeriesPanel> {
        let idx = self.lookup(panel)?;
        Ok(panel.map_present(|var, z| z * self.sds[idx[var]] + self.means[idx[var]]))
    }

    /// Maps one standardized value of `variable` back to raw units.
    pub fn invert_value(&self, variable: &str, z: f64) -> Result<f64> {
        let i = self
            .variables
            .iter()
            .position(|v| v == variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
        Ok(z * self.sds[i] + self.means[i])
    }
}

/// Maps each present cell to `(x - mean) / sd`.
///
/// With `stats == None` the statistics are fitted on the whole panel; pass
/// training statistics to transform test data unchanged.
pub fn standardize(
    panel: &SeriesPanel,
    stats: Option<&StandardizationStats>,
) -> Result<(SeriesPanel, StandardizationStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizationStats::fit(panel, None)?,
    };
    Ok((stats.apply(panel)?, stats))
}

/// Adds independent `N(0, sd_v^2)` noise to every present cell of variable `v`.
pub fn inject_noise(panel: &SeriesPanel, sds: &[f64], seed: u64) -> Result<SeriesPanel> {
    if sds.len() != panel.variables.len() {
        return Err(Error::InvalidArgument(format!(
            "{} noise levels for {} variables",
            sds.len(),
            panel.variables.len()
        )));
    }
    if let Some(sd) = sds.iter().find(|sd| !(**sd >= 0.0) || !sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sd must be >= 0, got {sd}")));
    }
    let mut out = panel.clone();
    for (var, &sd) in sds.iter().enumerate() {
        if sd == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = seed::sub_rng(seed, "noise", var as u64);
        for (value, &present) in out.values[var].iter_mut().zip(&panel.mask[var]) {
            if present {
                *value += normal.sample(&mut rng);
            }
        }
    }
    Ok(out)
}
