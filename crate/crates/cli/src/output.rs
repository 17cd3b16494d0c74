//! CSV emission.
//!
//! Layout: a block of `# key: value` metadata lines (exactly one of which,
//! `# generated:`, carries a timestamp), a header row, then one row per grid
//! point. The last column, `status`, is `ok` or `error:<kind>: <message>`.
//!
//! Numbers carry 15 significant digits; magnitudes below `1e-4` (or at least
//! `1e15`) use exponent notation.

use crate::error::{CliError, CliResult};
use std::io::Write;
use std::path::Path;

pub const TIMESTAMP_PREFIX: &str = "# generated: ";

/// Formats `x` in the output dialect.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = x.abs();
    if !(1e-4..1e15).contains(&mag) {
        return format!("{x:.14e}");
    }
    let decimals = (14 - mag.log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format_number(*v),
            Cell::Text(t) => t.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// A row: the grid coordinates always, the results when the point succeeded.
#[derive(Debug)]
pub struct Row {
    pub coords: Vec<Cell>,
    pub values: CliResult<Vec<Cell>>,
}

#[derive(Debug)]
pub struct Table {
    pub command: &'static str,
    pub metadata: Vec<(String, String)>,
    pub coord_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(command: &'static str, coord_columns: &[&str], value_columns: Vec<String>) -> Self {
        Self {
            command,
            metadata: Vec::new(),
            coord_columns: coord_columns.iter().map(|s| s.to_string()).collect(),
            value_columns,
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_owned(), value.to_string()));
    }

    /// First failed row, which sets the exit status.
    pub fn first_error(&self) -> Option<&CliError> {
        self.rows.iter().find_map(|r| r.values.as_ref().err())
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.values.is_err()).count()
    }

    pub fn write(&self, out: &mut impl Write, timestamp: &str) -> CliResult<()> {
        writeln!(out, "# dicke-stark {}", self.command)?;
        writeln!(out, "# version: {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "{TIMESTAMP_PREFIX}{timestamp}")?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {}", v.replace('\n', " "))?;
        }
        writeln!(out, "# rows: {} (failed: {})", self.rows.len(), self.failed_rows())?;
        let mut w = csv::Writer::from_writer(out);
        let header = self.coord_columns.iter().chain(&self.value_columns).map(String::as_str).chain(["status"]);
        w.write_record(header)?;
        let width = self.value_columns.len();
        for row in &self.rows {
            let mut record: Vec<String> = row.coords.iter().map(Cell::render).collect();
            match &row.values {
                Ok(values) => {
                    debug_assert_eq!(values.len(), width);
                    record.extend(values.iter().map(Cell::render));
                    record.push("ok".into());
                }
                Err(e) => {
                    record.extend(std::iter::repeat_n(String::new(), width));
                    record.push(format!("error:{}: {e}", e.kind()));
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes to `path`, or to stdout when absent.
    pub fn emit(&self, path: Option<&Path>) -> CliResult<()> {
        let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        match path {
            Some(p) => {
                let mut buf = Vec::new();
                self.write(&mut buf, &timestamp)?;
                std::fs::write(p, buf)?;
            }
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                self.write(&mut lock, &timestamp)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_dialect() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(-20.2185), "-20.2185");
        assert_eq!(format_number(0.661437827766148), "0.661437827766148");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333333");
        assert_eq!(format_number(12345.678901234567), "12345.6789012346");
        assert_eq!(format_number(1.5e-5), "1.50000000000000e-5");
        assert_eq!(format_number(-2.0e-9), "-2.00000000000000e-9");
        assert_eq!(format_number(1e-4), "0.0001");
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(2e16), "2.00000000000000e16");
        for x in [0.1234567890123456, 7.77e-7, 42.0, -1e-3] {
            let back: f64 = format_number(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-14 * x.abs());
        }
    }

    #[test]
    fn failed_rows_keep_their_place() {
        let mut t = Table::new("test", &["x"], vec!["y".into()]);
        t.meta("note", "a, b");
        t.rows.push(Row {
            coords: vec![1.0.into()],
            values: Ok(vec![2.0.into()]),
        });
        t.rows.push(Row {
            coords: vec![2.0.into()],
            values: Err(CliError::Convergence("no luck, \"really\"".into())),
        });
        let mut buf = Vec::new();
        t.write(&mut buf, "T").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.iter().filter(|l| l.starts_with(TIMESTAMP_PREFIX)).count(), 1);
        assert!(lines.contains(&"x,y,status"));
        assert!(lines.contains(&"1,2,ok"));
        assert!(lines.last().unwrap().starts_with("2,,\"error:convergence:"));
        assert_eq!(t.first_error().unwrap().exit_code(), 4);
    }
}
