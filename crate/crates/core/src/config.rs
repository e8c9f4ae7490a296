//! Flat `[section]` / `key = value` configuration files with strict key
//! checking and an echo of every resolved value.
//!
//! ```text
//! # comment
//! [fluid]
//! nu = 0.1
//! ```
//!
//! Values are read through a [`Table`] that records each key it hands out,
//! defaults included; [`Table::finish`] rejects keys nobody asked for and
//! [`Table::echo`] writes the resolved file back out.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Parsed configuration with usage tracking.
#[derive(Debug, Clone)]
pub struct Table {
    file: PathBuf,
    entries: BTreeMap<(String, String), Entry>,
    /// Resolved values in request order.
    resolved: Vec<(String, String, String)>,
}

impl Table {
    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| Error::Config {
                file: file.to_path_buf(),
                line,
                message,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("malformed section header `{content}`")))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(err(format!("invalid section name `{name}`")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(format!("invalid key `{key}`")));
            }
            if section.is_empty() {
                return Err(err(format!("key `{key}` appears before any section")));
            }
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            let previous = entries.insert(
                (section.clone(), key.to_string()),
                Entry {
                    value: value.to_string(),
                    line,
                    used: false,
                },
            );
            if let Some(p) = previous {
                return Err(err(format!("duplicate key `{section}.{key}` (first on line {})", p.line)));
            }
        }
        Ok(Self {
            file: file.to_path_buf(),
            entries,
            resolved: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            file: path.to_path_buf(),
            line: 0,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn file(&self) -> &Path {
        &self.file
    }

    fn error(&self, line: usize, message: String) -> Error {
        Error::Config {
            file: self.file.clone(),
            line,
            message,
        }
    }

    pub fn contains(&self, section: &str, key: &str) -> bool {
        self.entries.contains_key(&(section.to_string(), key.to_string()))
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.entries.get_mut(&(section.to_string(), key.to_string()))?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn record(&mut self, section: &str, key: &str, value: String) {
        self.resolved.push((section.to_string(), key.to_string(), value));
    }

    fn parse_value<T: FromStr>(&self, section: &str, key: &str, raw: &str, line: usize) -> Result<T>
    where
        T::Err: Display,
    {
        raw.parse::<T>()
            .map_err(|e| self.error(line, format!("`{section}.{key}`: cannot parse `{raw}`: {e}")))
    }

    /// Required value.
    pub fn get<T: FromStr + Display>(&mut self, section: &str, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let (raw, line) = self
            .take(section, key)
            .ok_or_else(|| self.error(0, format!("missing required key `{section}.{key}`")))?;
        let v = self.parse_value(section, key, &raw, line)?;
        self.record(section, key, raw);
        Ok(v)
    }

    /// Value or `default`.
    pub fn get_or<T: FromStr + Display>(&mut self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.take(section, key) {
            Some((raw, line)) => {
                let v = self.parse_value(section, key, &raw, line)?;
                self.record(section, key, raw);
                Ok(v)
            }
            None => {
                self.record(section, key, default.to_string());
                Ok(default)
            }
        }
    }

    /// Floating-point value or default; echoed with full precision.
    pub fn f64_or(&mut self, section: &str, key: &str, default: f64) -> Result<f64> {
        let v = match self.take(section, key) {
            Some((raw, line)) => self.parse_value::<f64>(section, key, &raw, line)?,
            None => default,
        };
        self.record(section, key, format!("{v:?}"));
        Ok(v)
    }

    /// Required floating-point value.
    pub fn f64(&mut self, section: &str, key: &str) -> Result<f64> {
        let (raw, line) = self
            .take(section, key)
            .ok_or_else(|| self.error(0, format!("missing required key `{section}.{key}`")))?;
        let v = self.parse_value::<f64>(section, key, &raw, line)?;
        self.record(section, key, format!("{v:?}"));
        Ok(v)
    }

    /// Optional floating-point value (not echoed when absent).
    pub fn f64_opt(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        if self.contains(section, key) {
            self.f64(section, key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Optional string (not echoed when absent).
    pub fn string_opt(&mut self, section: &str, key: &str) -> Result<Option<String>> {
        if self.contains(section, key) {
            self.get::<String>(section, key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Comma- or whitespace-separated list of values.
    pub fn list_or<T: FromStr + Display + Clone>(&mut self, section: &str, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let values = match self.take(section, key) {
            Some((raw, line)) => raw
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| self.parse_value::<T>(section, key, s, line))
                .collect::<Result<Vec<T>>>()?,
            None => default.to_vec(),
        };
        let text = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        self.record(section, key, text);
        Ok(values)
    }

    /// Floating-point list with full-precision echo.
    pub fn f64_list_or(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let values = self.list_or::<f64>(section, key, default)?;
        let last = self.resolved.last_mut().expect("just recorded");
        last.2 = values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ");
        Ok(values)
    }

    /// Path resolved against the directory of the config file; the echo
    /// records the resolved path.
    pub fn path_opt(&mut self, section: &str, key: &str) -> Result<Option<PathBuf>> {
        let Some((raw, _)) = self.take(section, key) else {
            return Ok(None);
        };
        let base = self.file.parent().unwrap_or(Path::new(""));
        let path = base.join(&raw);
        let path = std::path::absolute(&path).unwrap_or(path);
        self.record(section, key, path.display().to_string());
        Ok(Some(path))
    }

    /// Replaces or adds a value, as from a command-line override.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let line = self.entries.get(&(section.to_string(), key.to_string())).map_or(0, |e| e.line);
        self.entries.insert(
            (section.to_string(), key.to_string()),
            Entry {
                value: value.into(),
                line,
                used: false,
            },
        );
    }

    /// Value that must satisfy `check`; the error names the key and line.
    pub fn check<T>(&self, section: &str, key: &str, value: T, ok: bool, reason: &str) -> Result<T> {
        if ok {
            Ok(value)
        } else {
            let line = self
                .entries
                .get(&(section.to_string(), key.to_string()))
                .map_or(0, |e| e.line);
            Err(self.error(line, format!("`{section}.{key}` {reason}")))
        }
    }

    /// Rejects keys that were never requested.
    pub fn finish(&self) -> Result<()> {
        for ((section, key), e) in &self.entries {
            if !e.used {
                return Err(self.error(e.line, format!("unknown key `{section}.{key}`")));
            }
        }
        Ok(())
    }

    /// Resolved configuration as config-file text, grouped by section in
    /// first-use order.
    pub fn echo(&self) -> String {
        let mut order: Vec<&str> = Vec::new();
        for (s, _, _) in &self.resolved {
            if !order.contains(&s.as_str()) {
                order.push(s);
            }
        }
        let mut out = String::new();
        for (i, s) in order.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("[{s}]\n"));
            let mut seen: Vec<&str> = Vec::new();
            for (sec, key, value) in &self.resolved {
                if sec == s && !seen.contains(&key.as_str()) {
                    seen.push(key);
                    out.push_str(&format!("{key} = {value}\n"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Table {
        Table::parse(text, Path::new("test.cfg")).unwrap()
    }

    #[test]
    fn parses_sections_and_comments() {
        let mut t = table("# top\n[fluid]\nnu = 0.1 # trailing\nname = \"x y\"\n\n[solver]\nsteps=5\n");
        assert_eq!(t.f64("fluid", "nu").unwrap(), 0.1);
        assert_eq!(t.get::<String>("fluid", "name").unwrap(), "x y");
        assert_eq!(t.get::<u64>("solver", "steps").unwrap(), 5);
        t.finish().unwrap();
    }

    #[test]
    fn reports_line_numbers() {
        let err = Table::parse("[a]\nb = 1\nnonsense\n", Path::new("f.cfg")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = Table::parse("x = 1\n", Path::new("f.cfg")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let err = Table::parse("[a]\nb = 1\nb = 2\n", Path::new("f.cfg")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }));
        let mut t = table("[a]\nb = 1\nc = oops\n");
        t.get::<u32>("a", "b").unwrap();
        let err = t.get::<u32>("a", "c").unwrap_err();
        assert!(err.to_string().contains("a.c") && err.to_string().contains(":3:"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut t = table("[a]\nb = 1\ntypo = 2\n");
        t.get::<u32>("a", "b").unwrap();
        let err = t.finish().unwrap_err();
        assert!(err.to_string().contains("a.typo"));
    }

    #[test]
    fn echo_round_trip() {
        let mut t = table("[a]\nx = 0.1\nlist = 1, 2,3\n");
        let x = t.f64("a", "x").unwrap();
        let d = t.f64_or("b", "default", 1.0 / 3.0).unwrap();
        let l = t.list_or::<usize>("a", "list", &[]).unwrap();
        let text = t.echo();
        let mut u = Table::parse(&text, Path::new("echo.cfg")).unwrap();
        assert_eq!(u.f64("a", "x").unwrap(), x);
        assert_eq!(u.f64_or("b", "default", 0.0).unwrap(), d);
        assert_eq!(u.list_or::<usize>("a", "list", &[]).unwrap(), l);
        u.finish().unwrap();
        assert_eq!(u.echo(), text);
    }
}
