//! Scenario files and exact numeric arguments.

use homlab_core::scenario::{build_catalog_scenario, catalog_names, ScenarioError, SystemSpec};
use num_rational::Ratio;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario file {path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("not a number: {0:?}")]
    BadNumber(String),
    #[error("{0} is not the reciprocal of a positive integer")]
    NotReciprocal(String),
}

/// Loads a catalog key or a scenario file (anything ending in `.toml` or
/// naming an existing file).
pub fn load_scenario(arg: &str) -> Result<SystemSpec, ConfigError> {
    let path = Path::new(arg);
    if arg.ends_with(".toml") || (path.exists() && !catalog_names().contains(&arg)) {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: arg.to_string(), source })?;
        return scenario_from_toml(&text, arg);
    }
    Ok(build_catalog_scenario(arg)?)
}

pub fn scenario_from_toml(text: &str, origin: &str) -> Result<SystemSpec, ConfigError> {
    let spec: SystemSpec = toml::from_str(text).map_err(|source| ConfigError::Toml { path: origin.to_string(), source })?;
    Ok(spec.validated()?)
}

pub fn scenario_to_toml(spec: &SystemSpec) -> String {
    toml::to_string(spec).expect("scenario types serialize to TOML")
}

/// Parses `"1/8"`, `"3"` or `"0.0125"` exactly.
pub fn parse_rational(s: &str) -> Result<Ratio<i64>, ConfigError> {
    let bad = || ConfigError::BadNumber(s.to_string());
    let s = s.trim();
    if s.contains('/') {
        let r: Ratio<i64> = s.parse().map_err(|_| bad())?;
        return Ok(r);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 17 {
        return Err(bad());
    }
    let digits: i64 = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let den = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let r = Ratio::new(digits, den);
    Ok(if neg { -r } else { r })
}

pub fn parse_rational_list(s: &str) -> Result<Vec<Ratio<i64>>, ConfigError> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_rational).collect()
}

pub fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `k` with `r = 1/k`.
pub fn reciprocal(r: Ratio<i64>) -> Result<usize, ConfigError> {
    if *r.numer() == 1 && *r.denom() >= 1 {
        Ok(*r.denom() as usize)
    } else {
        Err(ConfigError::NotReciprocal(r.to_string()))
    }
}
