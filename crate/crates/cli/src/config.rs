//! Key-value config files and flag merging. A config file holds one
//! `key = value` pair per line with `#` comments; every key mirrors a long
//! flag 1:1 and the flag wins. Each resolved lookup is recorded so commands
//! can write the fully resolved view next to their outputs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use rrk_core::Error;

#[derive(Debug)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    source: Option<PathBuf>,
    resolved: Vec<(String, String)>,
}

pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected `key = value`, got {raw:?}",
                path.display(),
                i + 1
            ))
            .into());
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let (file, source) = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                (parse_config(&text, path)?, Some(path.to_path_buf()))
            }
            None => (BTreeMap::new(), None),
        };
        Ok(Resolver {
            file,
            source,
            resolved: Vec::new(),
        })
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::Config(format!(
                    "config key {key} = {raw:?} does not parse{}",
                    self.source
                        .as_ref()
                        .map(|p| format!(" (from {})", p.display()))
                        .unwrap_or_default()
                ))
                .into()
            }),
        }
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    /// Flag, else file, else default.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Paths display without Display; same resolution, recorded verbatim.
    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).map(PathBuf::from),
        };
        if let Some(v) = &v {
            self.record(key, v.display());
        }
        Ok(v)
    }

    pub fn req_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        match self.path(key, flag)? {
            Some(v) => Ok(v),
            None => Err(Error::Config(format!("missing required option --{key}")).into()),
        }
    }

    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Writes the resolved view alongside a command's outputs.
    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.resolved_text())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolver(text: &str) -> Resolver {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, text).unwrap();
        Resolver::new(Some(&path)).unwrap()
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let mut r = resolver("lr = 0.5\nepochs = 7 # trailing comment\n");
        assert_eq!(r.get("lr", Some(0.25f64), 1e-3).unwrap(), 0.25);
        assert_eq!(r.get("epochs", None, 2usize).unwrap(), 7);
        assert_eq!(r.get("grad-accum", None, 4usize).unwrap(), 4);
        let text = r.resolved_text();
        assert_eq!(text, "lr = 0.25\nepochs = 7\ngrad-accum = 4\n");
    }

    #[test]
    fn missing_required_key_names_the_flag() {
        let mut r = Resolver::new(None).unwrap();
        let err = r.req_path("out-index", None).unwrap_err();
        assert!(err.to_string().contains("--out-index"));
    }

    #[test]
    fn unparseable_value_is_a_config_error() {
        let mut r = resolver("epochs = soon\n");
        let err = r.get("epochs", None, 2usize).unwrap_err();
        assert!(err.to_string().contains("epochs"));
        assert!(matches!(
            err.downcast_ref::<Error>(),
            Some(Error::Config(_))
        ));
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "lr 0.5\n").unwrap();
        let err = Resolver::new(Some(&path)).unwrap_err();
        assert!(err.to_string().contains("bad.cfg:1"));
    }
}
