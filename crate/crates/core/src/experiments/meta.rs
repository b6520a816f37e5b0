//! `# key=value` metadata headers and key=value config files.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered metadata. Keys without `@` are parameters that can be fed back to
/// the CLI; `@`-prefixed keys are derived values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.push("version", super::VERSION);
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_derived(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((format!("@{key}"), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Parameters only: derived values and the version/command lines dropped.
    pub fn params(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .filter(|(k, _)| !k.starts_with('@') && k != "version" && k != "command")
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn write_to(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }

    /// Reads the leading `#` lines of a CSV.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else {
                break;
            };
            let rest = rest.trim();
            if rest.is_empty() {
                continue;
            }
            let (k, v) = rest.split_once('=').ok_or_else(|| {
                Error::Data(format!("metadata line {}: expected `# key=value`", i + 1))
            })?;
            m.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        if m.get("command").is_none() {
            return Err(Error::Data("metadata has no `command` entry".into()));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Data(format!("config line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Turns pairs into CLI tokens. `true`/`false` values become bare switches.
pub fn pairs_to_args<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Vec<String> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        match v {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.to_string());
            }
        }
    }
    args
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_round_trip() {
        let mut m = Metadata::new("sweep");
        m.push("lambda", 10).push("diag", false).push_derived("delta0_hat", 0.5);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap() + "delta,eta\n1,2\n";
        let back = Metadata::parse(&text).unwrap();
        assert_eq!(back, m);
        let params: Vec<_> = back.params().collect();
        assert_eq!(params, vec![("lambda", "10"), ("diag", "false")]);
        assert_eq!(pairs_to_args(params), vec!["--lambda", "10"]);
    }

    #[test]
    fn config_comments_and_errors() {
        let pairs = parse_config("# top\nlambda = 5 # trailing\n\nh=0.1\n").unwrap();
        assert_eq!(pairs, vec![("lambda".into(), "5".into()), ("h".into(), "0.1".into())]);
        assert!(parse_config("nonsense\n").is_err());
    }
}
