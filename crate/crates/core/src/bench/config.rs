//! Plain `key = value` configuration files. Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};

use super::{log_grid, Method, SweepSpec};

pub type ConfigMap = BTreeMap<String, String>;

pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", no + 1)));
        }
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse::<f64>(key, v.trim()))
        .collect()
}

/// `lo:hi:count` for a log-spaced grid, or a comma-separated list.
pub(crate) fn parse_snr_grid(value: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() == 3 {
        let lo = parse("snr_grid", parts[0].trim())?;
        let hi = parse("snr_grid", parts[1].trim())?;
        let count = parse("snr_grid", parts[2].trim())?;
        return log_grid(lo, hi, count);
    }
    parse_list("snr_grid", value)
}

impl SweepSpec {
    /// Overrides fields named by the keys in `map`. Unknown keys are an error.
    pub fn apply_config(&mut self, map: &ConfigMap) -> Result<()> {
        for (key, value) in map {
            match key.as_str() {
                "L" | "signal_len" => self.signal_len = parse(key, value)?,
                "n" => self.n = parse(key, value)?,
                "trials" => self.trials = parse(key, value)?,
                "seed" => self.seed = parse(key, value)?,
                "snr" | "snr_grid" => self.snr_grid = parse_snr_grid(value)?,
                "methods" | "method" => {
                    self.methods = value
                        .split(',')
                        .map(|m| m.parse::<Method>())
                        .collect::<Result<_>>()?
                }
                "lambda" => self.estimator.lambda = Some(parse(key, value)?),
                "out" => self.out = Some(PathBuf::from(value)),
                "force_sync" => self.force_sync = parse(key, value)?,
                "record_wall_time" => self.record_wall_time = parse(key, value)?,
                "em_max_iters" => self.estimator.em_max_iters = parse(key, value)?,
                "em_tol" => self.estimator.em_tol = parse(key, value)?,
                "em_starts" => self.estimator.em_starts = parse(key, value)?,
                "mom_starts" => self.estimator.mom_starts = parse(key, value)?,
                "mom_max_iters" => self.estimator.mom_max_iters = parse(key, value)?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }
}
