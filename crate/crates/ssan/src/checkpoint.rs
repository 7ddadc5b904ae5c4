//! Plain-text model checkpoints.
//!
//! ```text
//! ssan-checkpoint v1
//! shape <source_dim> <target_dim> <hidden> <common_dim> <classes>
//! slope <leaky slope>
//! param <name> <rows> <cols>
//! <one line of space-separated values per row>
//! ...
//! ```
//!
//! Values carry 17 significant digits, so loading restores the exact bits.

use std::fmt::Write as _;
use std::path::Path;

use ssan_core::model::{ModelShape, SsanModel};
use ssan_core::Matrix;

use crate::error::{CliError, Result};

const MAGIC: &str = "ssan-checkpoint v1";

pub fn to_text(model: &SsanModel) -> String {
    let s = model.shape();
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(
        out,
        "shape {} {} {} {} {}",
        s.source_dim, s.target_dim, s.hidden, s.common_dim, s.classes
    )
    .unwrap();
    writeln!(out, "slope {:.16e}", model.slope()).unwrap();
    for (name, m) in model.params() {
        writeln!(out, "param {name} {} {}", m.rows(), m.cols()).unwrap();
        for row in m.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

pub fn from_text(text: &str, path: &Path) -> Result<SsanModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l.trim()));
    let err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of checkpoint, expected {what}")))
    };
    let nums = |line: u64, fields: &[&str]| -> Result<Vec<usize>> {
        fields
            .iter()
            .map(|f| f.parse().map_err(|_| err(line, format!("{f:?} is not a count"))))
            .collect()
    };

    let (n, l) = next("header")?;
    if l != MAGIC {
        return Err(err(n, format!("expected {MAGIC:?}")));
    }
    let (n, l) = next("shape")?;
    let fields: Vec<&str> = l.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "shape" {
        return Err(err(n, "expected `shape` and five dimensions".into()));
    }
    let d = nums(n, &fields[1..])?;
    let shape = ModelShape {
        source_dim: d[0],
        target_dim: d[1],
        hidden: d[2],
        common_dim: d[3],
        classes: d[4],
    };
    let (n, l) = next("slope")?;
    let slope: f64 = l
        .strip_prefix("slope ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(n, "expected `slope <value>`".into()))?;

    let mut params = Vec::new();
    for _ in 0..ssan_core::model::PARAM_NAMES.len() {
        let (n, l) = next("param header")?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "param" {
            return Err(err(n, "expected `param <name> <rows> <cols>`".into()));
        }
        let dims = nums(n, &fields[2..])?;
        let (rows, cols) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, l) = next("parameter row")?;
            let before = data.len();
            for v in l.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|_| err(n, format!("{v:?} is not a number")))?);
            }
            if data.len() - before != cols {
                return Err(err(n, format!("expected {cols} values")));
            }
        }
        params.push((fields[1].to_string(), Matrix::new(rows, cols, data)?));
    }
    Ok(SsanModel::from_params(
        shape,
        slope,
        params.iter().map(|(name, m)| (name.as_str(), m.clone())),
    )?)
}

pub fn save(model: &SsanModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<SsanModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssan_core::model::InitSpec;

    fn model() -> SsanModel {
        let shape = ModelShape {
            source_dim: 3,
            target_dim: 2,
            hidden: 4,
            common_dim: 3,
            classes: 2,
        };
        SsanModel::init(shape, &InitSpec { seed: 9 })
            .unwrap()
            .with_slope(0.2)
            .unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let m = model();
        let back = from_text(&to_text(&m), Path::new("mem")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_or_corrupt_input_is_rejected() {
        let text = to_text(&model());
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(from_text(&cut, Path::new("m")).is_err());
        assert!(from_text(&text.replacen("v1", "v2", 1), Path::new("m")).is_err());
        let bad = text.replacen("param classifier.bias 1 2", "param classifier.bias 1 3", 1);
        assert!(from_text(&bad, Path::new("m")).is_err());
    }
}
