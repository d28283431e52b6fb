//! Flat `key = value` config files with per-command `[section]` blocks, and
//! the merge of file values with command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Sections a config file may contain besides the leading global block.
pub const SECTIONS: &[&str] = &[
    "train",
    "eval",
    "sweep",
    "verify-theory",
    "convert-dataset",
    "export-embeddings",
];

/// Parsed config file: global entries and one map per section.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub global: BTreeMap<String, String>,
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut file = ConfigFile::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::invalid(origin, Some(i + 1), format!("unknown section [{name}]")));
                }
                file.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(origin, Some(i + 1), format!("expected key = value, got '{line}'")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(Error::invalid(origin, Some(i + 1), "empty key"));
            }
            let map = match &current {
                Some(s) => file.sections.get_mut(s).expect("section inserted on header"),
                None => &mut file.global,
            };
            map.insert(k, v);
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Values for one command, with their precedence already resolved.
///
/// Global file entries are lenient: a command ignores the ones it does not
/// use. Section entries and flags are strict, so a leftover one is an error.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, bool)>,
}

impl Settings {
    pub fn new(file: Option<&ConfigFile>, command: &str) -> Self {
        let mut s = Settings::default();
        if let Some(f) = file {
            for (k, v) in &f.global {
                s.values.insert(k.clone(), (v.clone(), false));
            }
            for (k, v) in f.sections.get(command).into_iter().flatten() {
                s.values.insert(k.clone(), (v.clone(), true));
            }
        }
        s
    }

    /// Overrides with a flag value when the flag was given.
    pub fn flag(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), (v.to_string(), true));
        }
    }

    /// `KEY=VALUE` overrides from `--set`.
    pub fn overrides(&mut self, pairs: &[String]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{p}'")))?;
            self.values.insert(k.trim().to_string(), (v.trim().to_string(), true));
        }
        Ok(())
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key).map(|(v, _)| v)
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    pub fn take_flag(&mut self, key: &str) -> Result<bool> {
        match self.take(key).as_deref() {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(v) => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
        }
    }

    /// Removes every remaining key accepted by `accept`, in key order.
    pub fn drain_matching(&mut self, accept: impl Fn(&str) -> bool) -> Vec<(String, String)> {
        let keys: Vec<String> = self.values.keys().filter(|k| accept(k)).cloned().collect();
        keys.into_iter()
            .map(|k| {
                let (v, _) = self.values.remove(&k).expect("key listed");
                (k, v)
            })
            .collect()
    }

    /// Fails on strict keys nobody consumed.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<String> = self.values.into_iter().filter(|(_, (_, s))| *s).map(|(k, _)| k).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown settings: {}", unknown.join(", "))))
        }
    }
}
