//! Result tables and their CSV and JSON renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Estimate;

/// Output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!(
                "unknown format `{s}` (expected csv or json)"
            ))),
        }
    }
}

/// Outcome of a checked row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One result row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub model: String,
    pub params: Vec<(String, String)>,
    pub value: f64,
    /// `None` for exact values.
    pub std_error: Option<f64>,
    pub reps: u64,
    pub capped_fraction: f64,
    pub verdict: Option<Verdict>,
    pub diagnostics: String,
}

impl ResultRow {
    /// An exact (deterministic) value.
    pub fn exact(experiment: &str, model: &str, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            model: model.to_string(),
            params: Vec::new(),
            value,
            std_error: None,
            reps: 0,
            capped_fraction: 0.0,
            verdict: None,
            diagnostics: String::new(),
        }
    }

    /// A Monte Carlo estimate.
    pub fn estimate(experiment: &str, model: &str, e: &Estimate) -> Self {
        Self {
            std_error: Some(e.std_error),
            reps: e.reps,
            capped_fraction: e.capped_fraction,
            ..Self::exact(experiment, model, e.value)
        }
    }

    pub fn param(mut self, name: &str, value: impl std::fmt::Display) -> Self {
        self.params.push((name.to_string(), value.to_string()));
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.verdict = Some(Verdict::from_bool(pass));
        self
    }

    pub fn diagnostics(mut self, text: impl Into<String>) -> Self {
        self.diagnostics = text.into();
        self
    }

    fn params_field(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Rows of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Column names, in order.
pub const COLUMNS: [&str; 9] = [
    "experiment",
    "model",
    "params",
    "value",
    "std_error",
    "reps",
    "capped_fraction",
    "verdict",
    "diagnostics",
];

/// Renders `v` with 12 significant digits, dropping trailing zeros; plain
/// notation for decimal exponents in `[-5, 12)`, scientific otherwise.
/// Non-finite values render as `nan`, `inf` or `-inf`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn rounded(v: f64) -> Option<f64> {
    v.is_finite()
        .then(|| format_number(v).parse().expect("formatted number"))
}

#[derive(Serialize)]
struct JsonRow<'a> {
    experiment: &'a str,
    model: &'a str,
    params: String,
    value: Option<f64>,
    std_error: Option<f64>,
    reps: u64,
    capped_fraction: Option<f64>,
    verdict: Option<&'static str>,
    diagnostics: &'a str,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// Largest capped fraction over all rows.
    pub fn max_capped_fraction(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.capped_fraction)
            .fold(0.0, f64::max)
    }

    /// Rows whose verdict is `fail`.
    pub fn failures(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.verdict == Some(Verdict::Fail))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS).expect("write to memory");
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.model.clone(),
                r.params_field(),
                format_number(r.value),
                r.std_error.map(format_number).unwrap_or_default(),
                r.reps.to_string(),
                format_number(r.capped_fraction),
                r.verdict
                    .map(|v| v.as_str().to_string())
                    .unwrap_or_default(),
                r.diagnostics.clone(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 output")
    }

    /// JSON array of row objects with the CSV column names; numbers carry
    /// the same 12 significant digits, non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        let rows: Vec<JsonRow> = self
            .rows
            .iter()
            .map(|r| JsonRow {
                experiment: &r.experiment,
                model: &r.model,
                params: r.params_field(),
                value: rounded(r.value),
                std_error: r.std_error.and_then(rounded),
                reps: r.reps,
                capped_fraction: rounded(r.capped_fraction),
                verdict: r.verdict.map(Verdict::as_str),
                diagnostics: &r.diagnostics,
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("serializable rows");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    /// Writes the table to `path`.
    pub fn emit(&self, path: &Path, format: Format) -> Result<()> {
        std::fs::write(path, self.render(format)).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// `key=value;...` diagnostics from pairs of formatted numbers.
pub fn diag(pairs: &[(&str, f64)]) -> String {
    let mut s = String::new();
    for (idx, (k, v)) in pairs.iter().enumerate() {
        if idx > 0 {
            s.push(';');
        }
        let _ = write!(s, "{k}={}", format_number(*v));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(1.0 / 11.0), "0.0909090909091");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(1e-7), "1e-7");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_number(-2.5e-3), "-0.0025");
        assert_eq!(format_number(99999999999.99), "100000000000");
        assert_eq!(format_number(999999999999.9), "1e12");
        assert_eq!(format_number(f64::NAN), "nan");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable::new();
        assert_eq!(t.to_csv().lines().count(), 1);
        assert_eq!(t.to_json().trim(), "[]");
    }

    #[test]
    fn one_row_csv() {
        let mut t = ResultTable::new();
        t.push(
            ResultRow::exact("exact-survival", "lf", 0.25)
                .param("n", 3)
                .diagnostics("a=1, b=2"),
        );
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        let rec = rd.records().next().unwrap().unwrap();
        assert_eq!(rec.len(), 9);
        assert_eq!(&rec[2], "n=3");
        assert_eq!(&rec[8], "a=1, b=2");
    }
}
