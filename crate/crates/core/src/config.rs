//! Plain `key = value` documents.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored; lists
//! are comma separated. Every key must be consumed by the reader, so typos
//! surface as errors that name the file and line.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{file}: {message}")]
    Io { file: String, message: String },
    #[error("{file}:{line}: expected `key = value`")]
    Syntax { file: String, line: usize },
    #[error("{file}:{line}: duplicate key `{key}`")]
    Duplicate {
        file: String,
        line: usize,
        key: String,
    },
    #[error("{file}:{line}: unknown key `{key}`")]
    UnknownKey {
        file: String,
        line: usize,
        key: String,
    },
    #[error("{file}:{line}: field `{key}`: {message}")]
    BadValue {
        file: String,
        line: usize,
        key: String,
        message: String,
    },
    #[error("{file}: missing required field `{key}`")]
    Missing { file: String, key: String },
}

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Parsed document that tracks which keys have been read.
#[derive(Debug)]
pub struct KvDoc {
    file: String,
    entries: Vec<Entry>,
    used: RefCell<BTreeSet<String>>,
}

impl KvDoc {
    pub fn parse(text: &str, file: &str) -> Result<KvDoc, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                file: file.into(),
                line: i + 1,
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    file: file.into(),
                    line: i + 1,
                });
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::Duplicate {
                    file: file.into(),
                    line: i + 1,
                    key,
                });
            }
            entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line: i + 1,
            });
        }
        Ok(KvDoc {
            file: file.into(),
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &Path) -> Result<KvDoc, ConfigError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            file: file.clone(),
            message: e.to_string(),
        })?;
        KvDoc::parse(&text, &file)
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    /// Error pointing at `key`'s line.
    pub fn bad(&self, key: &str, message: impl Display) -> ConfigError {
        let line = self
            .entries
            .iter()
            .find(|e| e.key == key)
            .map_or(0, |e| e.line);
        ConfigError::BadValue {
            file: self.file.clone(),
            line,
            key: key.into(),
            message: message.to_string(),
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| self.bad(key, err)),
        }
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Overwrite `slot` when the key is present.
    pub fn set<T>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn require<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing {
            file: self.file.clone(),
            key: key.into(),
        })
    }

    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|err| self.bad(key, err)))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Fail on the first key nobody read.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().find(|e| !used.contains(&e.key)) {
            Some(e) => Err(ConfigError::UnknownKey {
                file: self.file.clone(),
                line: e.line,
                key: e.key.clone(),
            }),
            None => Ok(()),
        }
    }
}
