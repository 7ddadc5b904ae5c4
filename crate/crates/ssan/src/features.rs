//! Dense feature files: no header, comma separated, the first field an
//! integer class label (`-1` for unlabeled rows), then the features.
//!
//! Features are written with 17 significant digits so that a reload is
//! bit-identical.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ssan_core::Matrix;

use crate::error::{CliError, Result};

/// Label sentinel for rows without a class.
pub const UNLABELED: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub x: Matrix,
    pub labels: Vec<Option<usize>>,
}

impl FeatureFile {
    /// Labels of a file in which every row must carry one.
    pub fn require_labels(&self, path: &Path) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| CliError::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: "row is unlabeled but this file must be fully labeled".into(),
                })
            })
            .collect()
    }

    /// Labels if every row has one, `None` if none does.
    pub fn all_or_no_labels(&self, path: &Path) -> Result<Option<Vec<usize>>> {
        if self.labels.iter().all(Option::is_none) {
            return Ok(None);
        }
        self.require_labels(path).map(Some)
    }
}

pub fn load_feature_csv(path: &Path) -> Result<FeatureFile> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_feature_csv(file, path)
}

pub fn parse_feature_csv(input: impl Read, path: &Path) -> Result<FeatureFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut width = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.into_kind() {
                csv::ErrorKind::Io(io) => CliError::io(path, io),
                kind => parse_err(line, format!("{kind:?}")),
            }
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let fields = record.len();
        match width {
            None if fields < 2 => return Err(parse_err(line, "a row needs a label and at least one feature".into())),
            None => width = Some(fields),
            Some(w) if w != fields => {
                return Err(parse_err(
                    line,
                    format!("expected {w} fields as in the first row, found {fields}"),
                ));
            }
            Some(_) => {}
        }
        let label: i64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("label {:?} is not an integer", &record[0])))?;
        labels.push(match label {
            UNLABELED => None,
            l if l >= 0 => Some(l as usize),
            l => {
                return Err(parse_err(
                    line,
                    format!("label {l} is negative and not the unlabeled sentinel"),
                ))
            }
        });
        for (col, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("field {} ({field:?}) is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("field {} is not finite", col + 1)));
            }
            data.push(v);
        }
    }

    let Some(width) = width else {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: "file contains no rows".into(),
        });
    };
    let x = Matrix::new(labels.len(), width - 1, data)?;
    Ok(FeatureFile { x, labels })
}

pub fn write_feature_csv(path: &Path, x: &Matrix, labels: &[Option<usize>]) -> Result<()> {
    let mut out = Vec::new();
    write_feature_rows(&mut out, x, labels);
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn write_feature_rows(out: &mut Vec<u8>, x: &Matrix, labels: &[Option<usize>]) {
    assert_eq!(x.rows(), labels.len(), "one label per row");
    for (row, label) in x.row_iter().zip(labels) {
        match label {
            Some(l) => write!(out, "{l}"),
            None => write!(out, "{UNLABELED}"),
        }
        .expect("writing to memory");
        for v in row {
            write!(out, ",{v:.16e}").expect("writing to memory");
        }
        out.push(b'\n');
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FeatureFile> {
        parse_feature_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn parses_labels_and_features() {
        let f = parse("0,1.5,2.0\n1,0.0,3.0").unwrap();
        assert_eq!(f.x.shape(), (2, 2));
        assert_eq!(f.x.row(0), &[1.5, 2.0]);
        assert_eq!(f.labels, vec![Some(0), Some(1)]);
    }

    #[test]
    fn unlabeled_sentinel() {
        let f = parse("-1,4.0,5.0\n").unwrap();
        assert_eq!(f.labels, vec![None]);
        assert_eq!(f.all_or_no_labels(Path::new("m")).unwrap(), None);
        assert!(f.require_labels(Path::new("m")).is_err());
    }

    #[test]
    fn ragged_row_reports_its_line() {
        let err = parse("0,1,2,3\n1,1,2\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_non_numeric_and_bad_labels() {
        assert!(matches!(parse("0,1.0,abc\n"), Err(CliError::Parse { line: 1, .. })));
        assert!(matches!(parse("x,1.0\n"), Err(CliError::Parse { .. })));
        assert!(matches!(parse("0,1\n-2,1\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(parse("0,NaN\n"), Err(CliError::Parse { .. })));
    }

    #[test]
    fn empty_file_is_a_format_error() {
        assert!(matches!(parse(""), Err(CliError::Format { .. })));
        assert!(matches!(parse("\n\n"), Err(CliError::Format { .. })));
    }

    #[test]
    fn mixed_labels_need_all_or_none() {
        let f = parse("0,1\n-1,2\n").unwrap();
        assert!(f.all_or_no_labels(Path::new("m")).is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let values = [
            0.1,
            -1.0 / 3.0,
            1e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            -0.0,
            2.0f64.sqrt(),
        ];
        let x = Matrix::new(1, values.len(), values.to_vec()).unwrap();
        let mut buf = Vec::new();
        write_feature_rows(&mut buf, &x, &[Some(3)]);
        let back = parse_feature_csv(buf.as_slice(), Path::new("m")).unwrap();
        assert_eq!(back.labels, vec![Some(3)]);
        for (a, b) in back.x.as_slice().iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
