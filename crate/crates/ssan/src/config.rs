//! `key = value` experiment files. Keys are the long flag names without the
//! leading dashes; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, u64)>,
    path: std::path::PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("expected `key = value`, found {line:?}"),
                });
            };
            let key = key.trim().trim_start_matches("--").to_string();
            if entries
                .insert(key.clone(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self {
            entries,
            path: path.to_path_buf(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Parsed value of `key`, if present.
    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((value, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|_| CliError::Parse {
            path: self.path.clone(),
            line: *line,
            message: format!("invalid value {value:?} for {key:?}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_values_and_comments() {
        let c = ConfigFile::parse(
            "# run\nepochs = 500\n--alpha=0.1  # soft\n\nno-gs = true\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(c.get::<usize>("epochs").unwrap(), Some(500));
        assert_eq!(c.get::<f64>("alpha").unwrap(), Some(0.1));
        assert_eq!(c.get::<bool>("no-gs").unwrap(), Some(true));
        assert_eq!(c.get::<f64>("beta").unwrap(), None);
        assert_eq!(c.keys().count(), 3);
    }

    #[test]
    fn malformed_lines_and_values_report_line_numbers() {
        let err = ConfigFile::parse("epochs = 5\njunk\n", Path::new("c")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }));
        let c = ConfigFile::parse("\nepochs = many\n", Path::new("c")).unwrap();
        assert!(matches!(c.get::<usize>("epochs"), Err(CliError::Parse { line: 2, .. })));
        assert!(ConfigFile::parse("a = 1\na = 2\n", Path::new("c")).is_err());
    }
}
