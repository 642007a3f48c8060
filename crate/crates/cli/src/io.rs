//! Delimited series and JSON summaries. All floats are written in a fixed
//! scientific format so identical runs give identical bytes.

use crate::error::{CliError, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Index(usize),
    Value(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Index(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Value(v)
    }
}

pub fn format_value(v: f64) -> String {
    format!("{v:.10e}")
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Index(i) => i.to_string(),
            Cell::Value(v) => format_value(v),
        }
    }
}

/// Owns the output directory and records every file written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<PathBuf>
    where
        R: IntoIterator<Item = Vec<Cell>>,
    {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        w.write_record(header).map_err(|e| csv_io(&path, e))?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(row.into_iter().map(Cell::render)).map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path.clone());
        Ok(path)
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    let kind = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    CliError::io(path, kind)
}

/// Independent variables accepted by `fit`.
pub const ABSCISSA_COLUMNS: [&str; 3] = ["time_s", "pin_W", "detuning_rad_s"];

/// A two-column data set read for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x_name: String,
    pub y_name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Read a series with header `(x, y)` where `x` is one of [`ABSCISSA_COLUMNS`].
/// Extra columns are allowed; `y_column` selects the ordinate, else the
/// second column. Lines starting with `#` are comments.
pub fn read_series(path: &Path, y_column: Option<&str>) -> Result<Series> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_series(&text, &path.display().to_string(), y_column)
}

pub fn parse_series(text: &str, path: &str, y_column: Option<&str>) -> Result<Series> {
    let err = |line: usize, message: String| CliError::Data { path: path.to_string(), line, message };
    // The reader's own line counter skips blank lines; count from the byte offset.
    let line_at = |pos: Option<&csv::Position>| {
        let bytes = text.as_bytes();
        let mut start = pos.map_or(0, |p| p.byte() as usize).min(bytes.len());
        while start < bytes.len() && matches!(bytes[start], b'\n' | b'\r') {
            start += 1;
        }
        bytes[..start].iter().filter(|&&b| b == b'\n').count() + 1
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records().map(|r| {
        r.map_err(|e| {
            let line = line_at(e.position());
            err(line, e.to_string())
        })
    });
    let header = records.next().ok_or_else(|| err(1, "empty data file".into()))??;
    let header_line = line_at(header.position());
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 2 {
        return Err(err(header_line, format!("expected at least two columns, found {}", names.len())));
    }
    if !ABSCISSA_COLUMNS.contains(&names[0]) {
        return Err(err(
            header_line,
            format!("first column must be one of {}, found '{}'", ABSCISSA_COLUMNS.join(" | "), names[0]),
        ));
    }
    let y_index = match y_column {
        None => 1,
        Some(name) => names
            .iter()
            .position(|n| *n == name)
            .filter(|&i| i > 0)
            .ok_or_else(|| err(header_line, format!("no column named '{name}'")))?,
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in records {
        let record = record?;
        let line = line_at(record.position());
        if record.len() != names.len() {
            return Err(err(line, format!("expected {} fields, found {}", names.len(), record.len())));
        }
        let parse = |i: usize| -> Result<f64> {
            match record[i].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(line, format!("column '{}': '{}' is not a finite number", names[i], &record[i]))),
            }
        };
        let (x, y) = (parse(0)?, parse(y_index)?);
        if xs.last().is_some_and(|&prev| x <= prev) {
            return Err(err(line, format!("'{}' must be strictly increasing", names[0])));
        }
        xs.push(x);
        ys.push(y);
    }
    if xs.is_empty() {
        return Err(err(header_line, "no data rows".into()));
    }
    Ok(Series { x_name: names[0].to_string(), y_name: names[y_index].to_string(), xs, ys })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_format() {
        assert_eq!(format_value(0.012), "1.2000000000e-2");
        assert_eq!(format_value(-3.0), "-3.0000000000e0");
        assert_eq!(Cell::from(61usize).render(), "61");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let xs = [0.0, 1e-6, 2e-6];
        let path = out
            .write_csv("t.csv", &["time_s", "transmission"], xs.iter().map(|&x| vec![x.into(), (1.0 - x).into()]))
            .unwrap();
        let s = read_series(&path, None).unwrap();
        assert_eq!(s.xs, xs.to_vec());
        assert_eq!(s.y_name, "transmission");
        assert_eq!(out.written().len(), 1);
    }

    #[test]
    fn selects_named_column() {
        let s = parse_series("time_s,a,b\n0,1,2\n1,3,4\n", "d", Some("b")).unwrap();
        assert_eq!(s.ys, vec![2.0, 4.0]);
        assert!(parse_series("time_s,a\n0,1\n", "d", Some("c")).is_err());
    }

    #[test]
    fn malformed_rows_report_line() {
        let cases = [
            ("time_s,y\n0,1\n1,abc\n", 3),
            ("# note\ntime_s,y\n0,1\n\n1,2,3\n", 5),
            ("time_s,y\n0,1\n0,2\n", 3),
            ("seconds,y\n0,1\n", 1),
            ("time_s,y\n", 1),
        ];
        for (text, want) in cases {
            match parse_series(text, "d.csv", None) {
                Err(CliError::Data { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
