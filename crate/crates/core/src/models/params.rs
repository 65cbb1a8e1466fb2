use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use super::maps::{Poly, Weight};
use crate::error::{Error, Result};

/// Key-value parameters with source line numbers and unknown-key tracking.
#[derive(Clone, Debug, Default)]
pub struct Params {
    entries: BTreeMap<String, (String, usize)>,
    used: RefCell<BTreeSet<String>>,
}

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if self.entries.contains_key(key) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
        self.entries.insert(key.to_string(), (value.to_string(), line));
        Ok(())
    }

    /// Builds from `key = value` pairs, numbering lines from 1.
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Params {
        let mut p = Params::new();
        for (i, (k, v)) in pairs.iter().enumerate() {
            p.entries.insert(k.to_string(), (v.to_string(), i + 1));
        }
        p
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.entries.iter().map(|(k, (v, _))| (k, v))
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.1).unwrap_or(0)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn err(&self, key: &str, msg: String) -> Error {
        Error::Parse {
            line: self.line_of(key),
            msg,
        }
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| {
            self.used.borrow_mut().insert(key.to_string());
            v.as_str()
        })
    }

    pub fn req_str(&self, key: &str) -> Result<&str> {
        self.str(key).ok_or(Error::Parse {
            line: 0,
            msg: format!("missing required key `{key}`"),
        })
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.err(key, format!("`{key}`: expected a number, got `{v}`"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn req_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or(Error::Parse {
            line: 0,
            msg: format!("missing required key `{key}`"),
        })
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
                self.err(key, format!("`{key}`: expected a non-negative integer, got `{v}`"))
            }),
        }
    }

    pub fn vec(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => parse_list(v)
                .map(Some)
                .map_err(|bad| self.err(key, format!("`{key}`: bad number `{bad}`"))),
        }
    }

    pub fn req_vec(&self, key: &str) -> Result<Vec<f64>> {
        self.vec(key)?.ok_or(Error::Parse {
            line: 0,
            msg: format!("missing required key `{key}`"),
        })
    }

    pub fn usize_vec(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| t.trim().to_string()))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|bad| self.err(key, format!("`{key}`: bad integer `{bad}`"))),
        }
    }

    pub fn poly(&self, key: &str) -> Result<Option<Poly>> {
        Ok(self.vec(key)?.map(Poly))
    }

    /// `const:c`, `linear:c0,c1,…` or `power:c0,c1,p`.
    pub fn weight(&self, key: &str) -> Result<Option<Weight>> {
        let Some(v) = self.str(key) else {
            return Ok(None);
        };
        let (kind, rest) = v.split_once(':').unwrap_or(("const", v));
        let nums = parse_list(rest)
            .map_err(|bad| self.err(key, format!("`{key}`: bad number `{bad}`")))?;
        let w = match (kind.trim(), nums.as_slice()) {
            ("const", [c]) => Weight::Constant(*c),
            ("linear", [c0, rest @ ..]) => Weight::Linear {
                c0: *c0,
                c: rest.to_vec(),
            },
            ("power", [c0, c1, p]) => Weight::Power {
                c0: *c0,
                c1: *c1,
                p: *p,
            },
            _ => {
                return Err(self.err(
                    key,
                    format!("`{key}`: expected const:c, linear:c0,c… or power:c0,c1,p"),
                ))
            }
        };
        Ok(Some(w))
    }

    /// Errors on the first key that no builder consumed.
    pub fn finish(&self, section: &str) -> Result<()> {
        let used = self.used.borrow();
        for (k, (_, line)) in &self.entries {
            if !used.contains(k) {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown key `{k}` in [{section}]"),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| t.to_string()))
        .collect()
}
