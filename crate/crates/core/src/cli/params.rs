use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constrained::{AulaOptions, BarrierOptions};
use crate::error::{Error, Result};
use crate::optim::GaussNewtonOptions;

/// Layer a parameter value was resolved from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Default,
    File,
    CommandLine,
}

impl Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::CommandLine => "cmdline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub key: String,
    pub value: String,
    pub source: Source,
}

/// Layered key/value parameters (defaults < config file < command line)
/// that remembers every key it was asked for.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    file: BTreeMap<String, String>,
    cmdline: BTreeMap<String, String>,
    log: Vec<ParamRecord>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_file_text(&mut self, text: &str) -> Result<()> {
        self.file = parse_config(text)?;
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.set_file_text(&text)
    }

    pub fn set_cmdline(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.cmdline.insert(key.into(), value.into());
    }

    /// A store whose file layer is a previously written log, so every key
    /// resolves to the logged value.
    pub fn from_log(text: &str) -> Result<Self> {
        let mut s = Self::new();
        s.set_file_text(text)?;
        Ok(s)
    }

    /// Resolves `key`, falling back to `default`, and records the lookup.
    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let (value, source) = match self.log.iter().find(|r| r.key == key) {
            Some(r) => (r.value.clone(), None),
            None => match (self.cmdline.get(key), self.file.get(key)) {
                (Some(v), _) => (v.clone(), Some(Source::CommandLine)),
                (None, Some(v)) => (v.clone(), Some(Source::File)),
                (None, None) => (default.to_string(), Some(Source::Default)),
            },
        };
        let parsed = value.parse::<T>().map_err(|e| Error::InvalidOption {
            name: key.to_string(),
            reason: format!("cannot parse `{value}`: {e}"),
        })?;
        if let Some(source) = source {
            self.log.push(ParamRecord {
                key: key.to_string(),
                value,
                source,
            });
        }
        Ok(parsed)
    }

    pub fn log(&self) -> &[ParamRecord] {
        &self.log
    }

    /// One `key = value # source` line per consulted key, in lookup order.
    pub fn write_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.log {
            writeln!(w, "{} = {} # {}", r.key, r.value, r.source)?;
        }
        Ok(())
    }

    /// Keys supplied by file or command line that nothing asked for.
    pub fn unused_keys(&self) -> Vec<&str> {
        self.file
            .keys()
            .chain(self.cmdline.keys())
            .filter(|k| !self.log.iter().any(|r| &r.key == *k))
            .map(String::as_str)
            .collect()
    }
}

pub fn gauss_newton_options(
    store: &mut ParameterStore,
    base: GaussNewtonOptions,
) -> Result<GaussNewtonOptions> {
    Ok(GaussNewtonOptions {
        init_damping: store.get("opt/init_damping", base.init_damping)?,
        damping_increase: store.get("opt/damping_increase", base.damping_increase)?,
        damping_decrease: store.get("opt/damping_decrease", base.damping_decrease)?,
        init_step: store.get("opt/init_step", base.init_step)?,
        step_increase: store.get("opt/step_increase", base.step_increase)?,
        step_decrease: store.get("opt/step_decrease", base.step_decrease)?,
        decrease_ratio: store.get("opt/decrease_ratio", base.decrease_ratio)?,
        stop_tol: store.get("opt/stop_tol", base.stop_tol)?,
        max_iters: store.get("opt/max_iters", base.max_iters)?,
    })
}

pub fn aula_options(store: &mut ParameterStore) -> Result<AulaOptions> {
    let d = AulaOptions::default();
    let opts = AulaOptions {
        mu_init: store.get("aula/mu_init", d.mu_init)?,
        mu_increase: store.get("aula/mu_increase", d.mu_increase)?,
        violation_ratio: store.get("aula/violation_ratio", d.violation_ratio)?,
        kkt_tol: store.get("aula/kkt_tol", d.kkt_tol)?,
        outer_max: store.get("aula/outer_max", d.outer_max)?,
        inner: gauss_newton_options(store, d.inner)?,
    };
    opts.validate()?;
    Ok(opts)
}

pub fn barrier_options(store: &mut ParameterStore) -> Result<BarrierOptions> {
    let d = BarrierOptions::default();
    let mut inner = gauss_newton_options(store, d.inner)?;
    inner.stop_tol = store.get("barrier/inner_stop_tol", d.inner.stop_tol)?;
    Ok(BarrierOptions {
        barrier_init: store.get("barrier/init", d.barrier_init)?,
        barrier_decrease: store.get("barrier/decrease", d.barrier_decrease)?,
        barrier_tol: store.get("barrier/tol", d.barrier_tol)?,
        inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_per_key() {
        let mut s = ParameterStore::new();
        s.set_file_text("a = 1\nb = 2 # trailing\n# comment\n").unwrap();
        s.set_cmdline("a", "10");
        assert_eq!(s.get("a", 0.0).unwrap(), 10.0);
        assert_eq!(s.get("b", 0.0).unwrap(), 2.0);
        assert_eq!(s.get("c", 3.5).unwrap(), 3.5);
        let sources: Vec<Source> = s.log().iter().map(|r| r.source).collect();
        assert_eq!(sources, [Source::CommandLine, Source::File, Source::Default]);
    }

    #[test]
    fn each_key_logged_once() {
        let mut s = ParameterStore::new();
        assert_eq!(s.get("x", 1usize).unwrap(), 1);
        assert_eq!(s.get("x", 7usize).unwrap(), 1);
        assert_eq!(s.log().len(), 1);
    }

    #[test]
    fn log_replays() {
        let mut s = ParameterStore::new();
        s.set_cmdline("KOMO/moveTo/precision", "250");
        let a: f64 = s.get("KOMO/moveTo/precision", 1e3).unwrap();
        let b: f64 = s.get("KOMO/moveTo/collisionPrecision", -1e0).unwrap();
        let c: usize = s.get("opt/max_iters", 300).unwrap();
        let mut text = Vec::new();
        s.write_log(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.contains("KOMO/moveTo/precision = 250 # cmdline"));

        let mut r = ParameterStore::from_log(&text).unwrap();
        assert_eq!(r.get("KOMO/moveTo/precision", 0.0).unwrap(), a);
        assert_eq!(r.get("KOMO/moveTo/collisionPrecision", 0.0).unwrap(), b);
        assert_eq!(r.get("opt/max_iters", 0usize).unwrap(), c);
    }

    #[test]
    fn bad_lines_and_values() {
        assert!(matches!(parse_config("a 1"), Err(Error::Parse { line: 1, .. })));
        let mut s = ParameterStore::new();
        s.set_cmdline("n", "abc");
        assert!(matches!(s.get("n", 1usize), Err(Error::InvalidOption { .. })));
    }

    #[test]
    fn unused_keys_are_reported() {
        let mut s = ParameterStore::new();
        s.set_file_text("used = 1\ntypo = 2\n").unwrap();
        s.get("used", 0.0).unwrap();
        assert_eq!(s.unused_keys(), ["typo"]);
    }

    #[test]
    fn option_loading() {
        let mut s = ParameterStore::new();
        s.set_cmdline("opt/max_iters", "7");
        let a = aula_options(&mut s).unwrap();
        assert_eq!(a.inner.max_iters, 7);
        assert_eq!(a.mu_init, 1.0);
        let b = barrier_options(&mut s).unwrap();
        assert_eq!(b.inner.stop_tol, 1e-9);
        assert_eq!(b.inner.max_iters, 7);
    }
}
