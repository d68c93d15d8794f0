//! Yearly panel ingestion: CSV parsing, positivity checks and serialization.
//!
//! The on-disk schema is a UTF-8 CSV whose header is exactly `year,value,flow`
//! followed by zero or more `iv_<name>` instrument columns.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest panel the estimation pipeline accepts.
pub const MIN_OBSERVATIONS: usize = 5;

const REQUIRED_HEADER: [&str; 3] = ["year", "value", "flow"];
const INSTRUMENT_PREFIX: &str = "iv_";

#[derive(Debug, Error, PartialEq)]
pub enum PanelError {
    #[error("missing header row")]
    MissingHeader,
    #[error("header must start with `year,value,flow`, found `{0}`")]
    BadHeader(String),
    #[error("extra column `{0}` must be named iv_<name>")]
    BadInstrumentName(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: malformed record: {message}")]
    Malformed { row: u64, message: String },
    #[error("row {row}, column `{column}`: `{cell}` is not a number")]
    NonNumeric {
        row: u64,
        column: String,
        cell: String,
    },
    #[error("row {row}, column `{column}`: value is not finite")]
    NonFinite { row: u64, column: String },
    #[error("duplicate year {0}")]
    DuplicateYear(i64),
    #[error("years must be strictly increasing ({previous} followed by {next})")]
    YearsNotIncreasing { previous: i64, next: i64 },
    #[error("series `{name}` has length {found}, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("panel has no observations")]
    Empty,
    #[error("panel has {found} observations, at least {required} required")]
    TooShort { found: usize, required: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

/// A named auxiliary series stored in an `iv_*` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    /// Full column name, including the `iv_` prefix.
    pub name: String,
    pub values: Vec<f64>,
}

/// Aligned yearly series of gross value, resource flow and optional instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPanel {
    years: Vec<i64>,
    value: Vec<f64>,
    flow: Vec<f64>,
    instruments: Vec<Instrument>,
}

impl RawPanel {
    /// Builds a panel, checking alignment, finiteness and year ordering.
    pub fn new(
        years: Vec<i64>,
        value: Vec<f64>,
        flow: Vec<f64>,
        instruments: Vec<Instrument>,
    ) -> Result<Self, PanelError> {
        let n = years.len();
        if n == 0 {
            return Err(PanelError::Empty);
        }
        let check_len = |name: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(PanelError::LengthMismatch {
                    name: name.to_string(),
                    expected: n,
                    found: len,
                })
            }
        };
        check_len("value", value.len())?;
        check_len("flow", flow.len())?;
        for inst in &instruments {
            check_len(&inst.name, inst.values.len())?;
        }

        let columns = [("value", &value), ("flow", &flow)]
            .into_iter()
            .chain(instruments.iter().map(|i| (i.name.as_str(), &i.values)));
        for (name, series) in columns {
            if let Some(row) = series.iter().position(|v| !v.is_finite()) {
                return Err(PanelError::NonFinite {
                    row: row as u64 + 1,
                    column: name.to_string(),
                });
            }
        }

        for pair in years.windows(2) {
            if pair[1] == pair[0] {
                return Err(PanelError::DuplicateYear(pair[1]));
            }
            if pair[1] < pair[0] {
                return Err(PanelError::YearsNotIncreasing {
                    previous: pair[0],
                    next: pair[1],
                });
            }
        }

        Ok(Self {
            years,
            value,
            flow,
            instruments,
        })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn flow(&self) -> &[f64] {
        &self.flow
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn instrument(&self, name: &str) -> Option<&Instrument> {
        self.instruments.iter().find(|i| i.name == name)
    }

    /// Errors unless the panel has at least [`MIN_OBSERVATIONS`] rows.
    pub fn require_min_len(&self) -> Result<(), PanelError> {
        if self.len() < MIN_OBSERVATIONS {
            return Err(PanelError::TooShort {
                found: self.len(),
                required: MIN_OBSERVATIONS,
            });
        }
        Ok(())
    }

    /// Returns a copy with value and flow multiplied by the given factors.
    pub fn rescaled(&self, value_factor: f64, flow_factor: f64) -> Self {
        Self {
            years: self.years.clone(),
            value: self.value.iter().map(|v| v * value_factor).collect(),
            flow: self.flow.iter().map(|q| q * flow_factor).collect(),
            instruments: self.instruments.clone(),
        }
    }
}

/// Parses the panel CSV schema.
pub fn parse_panel(text: &str) -> Result<RawPanel, PanelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(PanelError::Malformed {
                row: 1,
                message: e.to_string(),
            })
        }
        None => return Err(PanelError::MissingHeader),
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < 3 || names[..3] != REQUIRED_HEADER {
        return Err(PanelError::BadHeader(names.join(",")));
    }
    for (i, name) in names.iter().enumerate().skip(3) {
        if !name.starts_with(INSTRUMENT_PREFIX) || name.len() == INSTRUMENT_PREFIX.len() {
            return Err(PanelError::BadInstrumentName(name.clone()));
        }
        if names[..i].contains(name) {
            return Err(PanelError::DuplicateColumn(name.clone()));
        }
    }

    let width = names.len();
    let mut years = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width - 1];
    for result in records {
        let record = result.map_err(|e| PanelError::Malformed {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != width {
            return Err(PanelError::Ragged {
                row,
                expected: width,
                found: record.len(),
            });
        }
        let year_cell = &record[0];
        let year = year_cell.parse::<i64>().map_err(|_| PanelError::NonNumeric {
            row,
            column: names[0].clone(),
            cell: year_cell.to_string(),
        })?;
        if years.contains(&year) {
            return Err(PanelError::DuplicateYear(year));
        }
        years.push(year);
        for (j, column) in columns.iter_mut().enumerate() {
            let cell = &record[j + 1];
            let parsed = cell.parse::<f64>().map_err(|_| PanelError::NonNumeric {
                row,
                column: names[j + 1].clone(),
                cell: cell.to_string(),
            })?;
            if !parsed.is_finite() {
                return Err(PanelError::NonFinite {
                    row,
                    column: names[j + 1].clone(),
                });
            }
            column.push(parsed);
        }
    }

    let mut columns = columns.into_iter();
    let value = columns.next().unwrap_or_default();
    let flow = columns.next().unwrap_or_default();
    let instruments = names[3..]
        .iter()
        .cloned()
        .zip(columns)
        .map(|(name, values)| Instrument { name, values })
        .collect();
    RawPanel::new(years, value, flow, instruments)
}

pub fn read_panel(path: &Path) -> Result<RawPanel, PanelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PanelError::Io(format!("{}: {e}", path.display())))?;
    parse_panel(&text)
}

/// Formats a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a panel in the CSV schema understood by [`parse_panel`].
pub fn serialize_panel(panel: &RawPanel) -> String {
    let mut out = String::from("year,value,flow");
    for inst in &panel.instruments {
        out.push(',');
        out.push_str(&inst.name);
    }
    out.push('\n');
    for t in 0..panel.len() {
        let _ = write!(
            out,
            "{},{},{}",
            panel.years[t],
            format_f64(panel.value[t]),
            format_f64(panel.flow[t])
        );
        for inst in &panel.instruments {
            out.push(',');
            out.push_str(&format_f64(inst.values[t]));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelColumn {
    Value,
    Flow,
}

impl std::fmt::Display for PanelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PanelColumn::Value => "value",
            PanelColumn::Flow => "flow",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonPositiveCell {
    /// Zero-based data row index.
    pub row: usize,
    pub year: i64,
    pub column: PanelColumn,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<NonPositiveCell>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every cell of `value` or `flow` that is not strictly positive.
pub fn validate_positive(panel: &RawPanel) -> ValidationReport {
    let mut violations = Vec::new();
    for t in 0..panel.len() {
        for (column, series) in [
            (PanelColumn::Value, &panel.value),
            (PanelColumn::Flow, &panel.flow),
        ] {
            if !(series[t] > 0.0) {
                violations.push(NonPositiveCell {
                    row: t,
                    year: panel.years[t],
                    column,
                    value: series[t],
                });
            }
        }
    }
    ValidationReport { violations }
}
