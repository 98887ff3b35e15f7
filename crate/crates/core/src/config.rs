//! TOML configuration files for the command-line tool.
//!
//! Every section and key is optional; command-line flags override file values.
//! Unknown keys are rejected, and every validation failure names its key.

use std::path::Path;

use serde::Deserialize;

use crate::adaptive::BootstrapMethod;
use crate::error::{Error, Result};
use crate::harness::{BootstrapSettings, ExperimentConfig, MuGrid, MuPrimeRule};
use crate::location::TestKind;
use crate::model::{ModelParams, ProxySpec, DEFAULT_BOUND};
use crate::working_mle::EmConfig;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub em: EmSection,
}

/// Parameters of a single simulated dataset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mu: Option<f64>,
    pub phi: Option<f64>,
    pub n: Option<usize>,
    pub proxy: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub mu_prime: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub proxies: Option<Vec<String>>,
    pub custom_proxy: Option<Vec<ProxySpec>>,
    pub phi_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<usize>>,
    pub mu_grid: Option<Vec<f64>>,
    pub h_grid: Option<Vec<f64>>,
    pub mu_prime: Option<f64>,
    pub delta_prime: Option<f64>,
    pub alpha: Option<f64>,
    pub reps: Option<usize>,
    pub tests: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub alpha: Option<f64>,
    pub tests: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub resamples: Option<usize>,
    pub alpha_prime: Option<f64>,
    pub method: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub search_bound: Option<f64>,
}

fn keyed(key: &str, err: Error) -> Error {
    match err {
        Error::Domain(msg) => Error::Domain(format!("{key}: {msg}")),
        other => other,
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Domain(format!("{key}: {msg}"))
}

fn require<T: Clone>(key: &str, value: &Option<T>) -> Result<T> {
    value.clone().ok_or_else(|| invalid(key, "required but not set"))
}

fn probability(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(invalid(key, format_args!("must lie in (0, 1), got {v}")))
    }
}

fn phi_value(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(invalid(key, format_args!("must lie in (0, 1], got {v}")))
    }
}

/// Resolve test names, dropping repeats.
pub fn parse_tests(key: &str, names: &[String]) -> Result<Vec<TestKind>> {
    if names.is_empty() {
        return Err(invalid(key, "must name at least one test"));
    }
    let mut out = Vec::new();
    for name in names {
        let kind: TestKind = name.parse().map_err(|e| keyed(key, e))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

pub fn proxy_by_label(key: &str, label: &str) -> Result<ProxySpec> {
    ProxySpec::by_label(label).ok_or_else(|| {
        invalid(
            key,
            format_args!("unknown proxy `{label}` (expected hvar, unif, pos1, pos2, neg1 or neg2)"),
        )
    })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn em_config(&self) -> Result<EmConfig> {
        let d = EmConfig::default();
        let em = EmConfig {
            tol: self.em.tol.unwrap_or(d.tol),
            max_iter: self.em.max_iter.unwrap_or(d.max_iter),
            search_bound: self.em.search_bound.unwrap_or(d.search_bound),
            verify_grid: None,
        };
        em.validate().map_err(|e| keyed("em", e))?;
        Ok(em)
    }

    pub fn bootstrap_settings(&self) -> Result<BootstrapSettings> {
        let d = BootstrapSettings::default();
        let method = match &self.bootstrap.method {
            Some(m) => m.parse::<BootstrapMethod>().map_err(|e| keyed("bootstrap.method", e))?,
            None => d.method,
        };
        let settings = BootstrapSettings {
            n_resamples: self.bootstrap.resamples.unwrap_or(d.n_resamples),
            alpha_prime: self.bootstrap.alpha_prime.unwrap_or(d.alpha_prime),
            method,
        };
        if settings.n_resamples < 100 {
            return Err(invalid(
                "bootstrap.resamples",
                format_args!("must be at least 100, got {}", settings.n_resamples),
            ));
        }
        if !(settings.alpha_prime > 0.0 && settings.alpha_prime < 0.5) {
            return Err(invalid(
                "bootstrap.alpha_prime",
                format_args!("must lie in (0, 0.5), got {}", settings.alpha_prime),
            ));
        }
        Ok(settings)
    }

    /// Model for `generate`; `n` is returned alongside.
    pub fn model_params(&self) -> Result<(ModelParams, usize)> {
        let m = &self.model;
        let mu = require("model.mu", &m.mu)?;
        let phi = phi_value("model.phi", require("model.phi", &m.phi)?)?;
        let n = require("model.n", &m.n)?;
        if n == 0 {
            return Err(invalid("model.n", "must be at least 1"));
        }
        let mut proxy = match &m.proxy {
            Some(label) => proxy_by_label("model.proxy", label)?,
            None if m.a.is_some() && m.b.is_some() => ProxySpec {
                label: "custom".into(),
                a: 0.0,
                b: 0.0,
                constant: None,
            },
            None => return Err(invalid("model.proxy", "required unless both a and b are set")),
        };
        if let Some(a) = m.a {
            proxy.a = a;
        }
        if let Some(b) = m.b {
            proxy.b = b;
        }
        proxy.validate().map_err(|e| keyed("model.a/model.b", e))?;
        let bound = self.em.search_bound.unwrap_or(DEFAULT_BOUND);
        if !(mu.abs() <= bound) {
            return Err(invalid("model.mu", format_args!("{mu} lies outside [-{bound}, {bound}]")));
        }
        if let Some(mp) = m.mu_prime {
            if mp == 0.0 || !mp.is_finite() {
                return Err(invalid("model.mu_prime", format_args!("must be finite and nonzero, got {mp}")));
            }
        }
        let params = ModelParams {
            mu,
            phi,
            mu_prime: m.mu_prime,
            proxy,
            bound,
        };
        params.validate().map_err(|e| keyed("model", e))?;
        Ok((params, n))
    }

    /// Level and test list for the `test` subcommand.
    pub fn test_selection(&self) -> Result<(f64, Vec<TestKind>)> {
        let alpha = probability("test.alpha", self.test.alpha.unwrap_or(1e-4))?;
        let tests = match &self.test.tests {
            Some(names) => parse_tests("test.tests", names)?,
            None => TestKind::ALL.to_vec(),
        };
        Ok((alpha, tests))
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        let mut proxy_specs = match &e.proxies {
            Some(labels) => labels
                .iter()
                .map(|l| proxy_by_label("experiment.proxies", l))
                .collect::<Result<Vec<_>>>()?,
            None if e.custom_proxy.is_some() => Vec::new(),
            None => ProxySpec::regimes(),
        };
        for spec in e.custom_proxy.iter().flatten() {
            spec.validate().map_err(|err| keyed("experiment.custom_proxy", err))?;
            proxy_specs.push(spec.clone());
        }
        if proxy_specs.is_empty() {
            return Err(invalid("experiment.proxies", "must name at least one proxy regime"));
        }

        let phi_grid = require("experiment.phi_grid", &e.phi_grid)?;
        if phi_grid.is_empty() {
            return Err(invalid("experiment.phi_grid", "must not be empty"));
        }
        for &phi in &phi_grid {
            phi_value("experiment.phi_grid", phi)?;
        }
        let n_grid = require("experiment.n_grid", &e.n_grid)?;
        if n_grid.is_empty() || n_grid.contains(&0) {
            return Err(invalid("experiment.n_grid", "must be a non-empty list of positive sizes"));
        }
        let mu_grid = match (&e.mu_grid, &e.h_grid) {
            (Some(_), Some(_)) => {
                return Err(invalid("experiment.h_grid", "set either mu_grid or h_grid, not both"))
            }
            (Some(v), None) => MuGrid::Absolute(v.clone()),
            (None, Some(v)) => MuGrid::Local(v.clone()),
            (None, None) => return Err(invalid("experiment.mu_grid", "required (or h_grid)")),
        };
        let grid_key = match mu_grid {
            MuGrid::Absolute(_) => "experiment.mu_grid",
            MuGrid::Local(_) => "experiment.h_grid",
        };
        let grid_values = match &mu_grid {
            MuGrid::Absolute(v) | MuGrid::Local(v) => v,
        };
        if grid_values.is_empty() {
            return Err(invalid(grid_key, "must not be empty"));
        }
        if let Some(v) = grid_values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(grid_key, format_args!("{v} is not finite")));
        }
        let mu_prime_rule = match (e.mu_prime, e.delta_prime) {
            (Some(_), Some(_)) => {
                return Err(invalid("experiment.delta_prime", "set either mu_prime or delta_prime, not both"))
            }
            (Some(v), None) => MuPrimeRule::Fixed(v),
            (None, Some(v)) => MuPrimeRule::Delta(v),
            (None, None) => MuPrimeRule::Delta(5.0),
        };
        let (MuPrimeRule::Fixed(v) | MuPrimeRule::Delta(v)) = mu_prime_rule;
        if v == 0.0 || !v.is_finite() {
            let key = match mu_prime_rule {
                MuPrimeRule::Fixed(_) => "experiment.mu_prime",
                MuPrimeRule::Delta(_) => "experiment.delta_prime",
            };
            return Err(invalid(key, format_args!("must be finite and nonzero, got {v}")));
        }
        let alpha = probability("experiment.alpha", e.alpha.unwrap_or(1e-4))?;
        let reps = e.reps.unwrap_or(2000);
        if reps == 0 {
            return Err(invalid("experiment.reps", "must be at least 1"));
        }
        let tests = match &e.tests {
            Some(names) => parse_tests("experiment.tests", names)?,
            None => TestKind::ALL.to_vec(),
        };
        let em = self.em_config()?;
        let config = ExperimentConfig {
            proxy_specs,
            phi_grid,
            n_grid,
            mu_grid,
            mu_prime_rule,
            alpha,
            reps,
            tests,
            bootstrap: self.bootstrap_settings()?,
            em,
            root_seed: self.seed.unwrap_or(0),
        };
        config.validate().map_err(|err| match err {
            Error::Domain(msg) if msg.starts_with("mu_grid") => keyed(grid_key, Error::Domain(msg)),
            other => keyed("experiment", other),
        })?;
        Ok(config)
    }
}
