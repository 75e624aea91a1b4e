//! Tabular dataset loaders (delimited text and libsvm) and a matching CSV writer.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Feature matrix with optional integer labels, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub features: DenseMatrix,
    pub labels: Option<Vec<i64>>,
}

impl LabeledTable {
    pub fn new(features: DenseMatrix, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::invalid(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self { features, labels })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    /// First column holds an integer label.
    pub has_label_column: bool,
    pub delimiter: u8,
    /// Skip the first line.
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_label_column: false,
            delimiter: b',',
            has_header: false,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, has_label_column: bool, delimiter: char) -> Result<LabeledTable> {
    if !delimiter.is_ascii() {
        return Err(Error::invalid(format!("delimiter {delimiter:?} is not ASCII")));
    }
    load_csv_with(
        path,
        CsvOptions {
            has_label_column,
            delimiter: delimiter as u8,
            has_header: false,
        },
    )
}

pub fn load_csv_with(path: impl AsRef<Path>, options: CsvOptions) -> Result<LabeledTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, path, options)
}

fn parse_label(cell: &str) -> Option<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    // tolerate "1.0"-style labels as long as they are integral
    let f = cell.parse::<f64>().ok()?;
    (f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

/// Parses delimited numeric text; `path` is used only in diagnostics.
pub fn parse_csv(reader: impl Read, path: &Path, options: CsvOptions) -> Result<LabeledTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .delimiter(options.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let mut cells = record.iter();
        if options.has_label_column {
            let cell = cells.next().unwrap_or("");
            labels.push(parse_label(cell).ok_or_else(|| parse_err(line, format!("label {cell:?} is not an integer")))?);
        }
        let before = data.len();
        for (k, cell) in cells.enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("cell {} ({cell:?}) is not a number", k + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("cell {} is not finite", k + 1)));
            }
            data.push(v);
        }
        let got = data.len() - before;
        match width {
            None if got == 0 => return Err(parse_err(line, "row has no feature columns".into())),
            None => width = Some(got),
            Some(w) if w != got => {
                return Err(parse_err(line, format!("expected {w} feature columns, found {got}")));
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err(1, "file contains no data rows".into()))?;
    let features = DenseMatrix::new(rows, width, data)?;
    LabeledTable::new(features, options.has_label_column.then_some(labels))
}

/// Writes a table as comma-separated text, labels first when present.
///
/// Values use Rust's shortest round-trip float formatting, so reloading with
/// [`load_csv_with`] reproduces the matrix bit for bit.
pub fn write_csv(path: impl AsRef<Path>, table: &LabeledTable, header: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    if let Some(h) = header {
        writeln!(out, "{}", h.join(",")).map_err(io)?;
    }
    let f = &table.features;
    let mut line = String::new();
    for i in 0..f.rows() {
        line.clear();
        if let Some(l) = &table.labels {
            line.push_str(&l[i].to_string());
            line.push(',');
        }
        for (j, v) in f.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_libsvm(path: impl AsRef<Path>, dim: usize) -> Result<LabeledTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm(&text, dim, path)
}

/// Parses `label idx:val idx:val …` lines (1-based indices ≤ `dim`) into a
/// dense matrix; absent indices are zero. Blank lines are skipped.
pub fn parse_libsvm(text: &str, dim: usize, path: &Path) -> Result<LabeledTable> {
    if dim == 0 {
        return Err(Error::invalid("libsvm dimension must be positive"));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = (k + 1) as u64;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut tokens = raw.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        labels.push(parse_label(label).ok_or_else(|| err(format!("label {label:?} is not an integer")))?);
        let start = data.len();
        data.resize(start + dim, 0.0);
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed pair {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index in {tok:?}")))?;
            let val: f64 = val.parse().map_err(|_| err(format!("bad value in {tok:?}")))?;
            if idx == 0 || idx > dim {
                return Err(err(format!("index {idx} out of range 1..={dim}")));
            }
            if !val.is_finite() {
                return Err(err(format!("value in {tok:?} is not finite")));
            }
            data[start + idx - 1] = val;
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "file contains no data rows".into(),
        });
    }
    let features = DenseMatrix::new(labels.len(), dim, data)?;
    LabeledTable::new(features, Some(labels))
}

/// Subtracts each column's mean.
pub fn center_columns(m: &DenseMatrix) -> DenseMatrix {
    let (n, d) = m.shape();
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (mu, x) in means.iter_mut().zip(m.row(i)) {
            *mu += x;
        }
    }
    for mu in &mut means {
        *mu /= n as f64;
    }
    let mut out = m.clone();
    let data = out.as_mut_slice();
    for i in 0..n {
        for j in 0..d {
            data[i * d + j] -= means[j];
        }
    }
    out
}
