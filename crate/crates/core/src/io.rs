//! Delimited-text series ingestion and demeaning.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Any missing or non-numeric cell is an error.
    #[default]
    Strict,
    /// Rows with a missing or non-numeric cell are dropped and counted.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub missing: MissingPolicy,
    /// `None` auto-detects among `,`, `;` and tab.
    pub delimiter: Option<u8>,
    /// Require more than `min_rows_per_column · n` rows.
    pub min_rows_per_column: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            missing: MissingPolicy::Strict,
            delimiter: None,
            min_rows_per_column: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFile {
    pub path: PathBuf,
    /// `T × n`, rows are time.
    pub data: DMatrix<f64>,
    pub columns: Vec<String>,
    pub dropped_rows: usize,
    /// A leading non-numeric (date) column was ignored.
    pub skipped_leading_column: bool,
}

impl SeriesFile {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }
}

fn detect_delimiter(text: &str) -> u8 {
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    (*b",;\t")
        .into_iter()
        .max_by_key(|&d| line.bytes().filter(|&b| b == d).count())
        .filter(|&d| line.bytes().any(|b| b == d))
        .unwrap_or(b',')
}

fn parse_cell(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.to_ascii_lowercase().as_str() {
        "" | "na" | "nan" | "null" | "." => None,
        _ => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

pub fn load_series(path: impl AsRef<Path>, options: &LoadOptions) -> Result<SeriesFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delimiter = options.delimiter.unwrap_or_else(|| detect_delimiter(&text));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push((line, rec.iter().map(str::to_owned).collect::<Vec<_>>()));
    }
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let Some((_, first)) = records.first() else {
        return Err(Error::TooShort {
            path: path.to_path_buf(),
            rows: 0,
            cols: 0,
            min: 0,
        });
    };

    // Leading date column: first field of the first data row is not numeric
    // while the rest are.
    let header = first.iter().any(|c| parse_cell(c).is_none())
        && !(first.len() > 1
            && parse_cell(&first[0]).is_none()
            && first[1..].iter().all(|c| parse_cell(c).is_some()));
    let data_start = usize::from(header);
    let probe = records.get(data_start).map(|(_, r)| r);
    let skip_first = probe.is_some_and(|r| {
        r.len() > 1 && parse_cell(&r[0]).is_none() && r[1..].iter().all(|c| parse_cell(c).is_some())
    });
    if skip_first {
        log::info!("{}: ignoring non-numeric leading column", path.display());
    }
    let offset = usize::from(skip_first);
    let width = first.len();
    let columns: Vec<String> = if header {
        first[offset..].to_vec()
    } else {
        (1..=width - offset).map(|k| format!("y{k}")).collect()
    };
    let n = columns.len();
    if n == 0 {
        return Err(parse_err(records[0].0, "no numeric columns".into()));
    }

    let mut values = Vec::new();
    let mut dropped = 0;
    for (line, rec) in &records[data_start..] {
        if rec.len() != width {
            return Err(parse_err(
                *line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let parsed: Vec<Option<f64>> = rec[offset..].iter().map(|c| parse_cell(c)).collect();
        if let Some(bad) = parsed.iter().position(Option::is_none) {
            match options.missing {
                MissingPolicy::Strict => {
                    return Err(parse_err(
                        *line,
                        format!("column {} is missing or not numeric: {:?}", bad + 1 + offset, rec[bad + offset]),
                    ))
                }
                MissingPolicy::Drop => {
                    dropped += 1;
                    continue;
                }
            }
        }
        values.extend(parsed.into_iter().flatten());
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with missing values", path.display());
    }
    let rows = values.len() / n;
    let min = options.min_rows_per_column * n;
    if rows == 0 || rows <= min {
        return Err(Error::TooShort {
            path: path.to_path_buf(),
            rows,
            cols: n,
            min,
        });
    }
    Ok(SeriesFile {
        path: path.to_path_buf(),
        data: DMatrix::from_row_slice(rows, n, &values),
        columns,
        dropped_rows: dropped,
        skipped_leading_column: skip_first,
    })
}

/// Subtract column means.
pub fn demean(series: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = series.clone();
    let rows = series.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / rows;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Column means are negligible relative to the data's scale.
pub fn is_demeaned(series: &DMatrix<f64>) -> bool {
    let rows = series.nrows() as f64;
    series.column_iter().all(|c| {
        let scale = c.amax();
        (c.sum() / rows).abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)
    })
}

/// CSV with a header row.
pub fn write_matrix_csv(path: impl AsRef<Path>, header: &[String], data: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in data.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn lenient() -> LoadOptions {
        LoadOptions {
            min_rows_per_column: 0,
            ..Default::default()
        }
    }

    #[test]
    fn small_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n3,4\n5,6\n");
        let s = load_series(&p, &lenient()).unwrap();
        assert_eq!(s.rows(), 3);
        assert_eq!(s.columns, vec!["a", "b"]);
        assert_eq!(s.data[(2, 1)], 6.0);
    }

    #[test]
    fn headerless_defaults_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "1,2\n3,4\n");
        let s = load_series(&p, &lenient()).unwrap();
        assert_eq!(s.columns, vec!["y1", "y2"]);
        assert_eq!(s.rows(), 2);
    }

    #[test]
    fn non_numeric_cell_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n3,oops\n5,6\n");
        match load_series(&p, &lenient()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let drop = LoadOptions {
            missing: MissingPolicy::Drop,
            ..lenient()
        };
        let s = load_series(&p, &drop).unwrap();
        assert_eq!((s.rows(), s.dropped_rows), (2, 1));
    }

    #[test]
    fn semicolon_matches_comma() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(&dir, "a.csv", "x,y\n1.5,-2\n3,4e-1\n");
        let b = write(&dir, "b.csv", "x;y\n1.5;-2\n3;4e-1\n");
        let c = write(&dir, "c.tsv", "x\ty\n1.5\t-2\n3\t4e-1\n");
        let sa = load_series(&a, &lenient()).unwrap();
        assert_eq!(sa.data, load_series(&b, &lenient()).unwrap().data);
        assert_eq!(sa.data, load_series(&c, &lenient()).unwrap().data);
    }

    #[test]
    fn date_column_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "date,wheat,corn\n2016-10-18,1,2\n2016-10-19,3,4\n");
        let s = load_series(&p, &lenient()).unwrap();
        assert!(s.skipped_leading_column);
        assert_eq!(s.columns, vec!["wheat", "corn"]);
        assert_eq!(s.data.ncols(), 2);
        let p = write(&dir, "e.csv", "2016-10-18,1,2\n2016-10-19,3,4\n");
        let s = load_series(&p, &lenient()).unwrap();
        assert!(s.skipped_leading_column);
        assert_eq!(s.rows(), 2);
    }

    #[test]
    fn too_short() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n3,4\n");
        assert!(matches!(
            load_series(&p, &LoadOptions::default()),
            Err(Error::TooShort { rows: 2, cols: 2, min: 40, .. })
        ));
        let empty = write(&dir, "e.csv", "");
        assert!(matches!(load_series(&empty, &lenient()), Err(Error::TooShort { .. })));
    }

    #[test]
    fn demean_examples() {
        let m = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 4.0, 4.0]);
        let d = demean(&m);
        assert_eq!(d.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(d.column(1).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(demean(&d), d);
        assert!(is_demeaned(&d));
        assert!(!is_demeaned(&m));
    }
}
