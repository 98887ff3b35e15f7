//! Monte Carlo driver for calibration, power and agreement studies.
//!
//! Design cells are enumerated proxy-major (proxy, phi, n, mu). Each (cell, rep)
//! pair owns two substreams of the root seed, `[cell, rep, 0]` for the data and
//! `[cell, rep, 1]` for the bootstrap, so tables do not depend on how reps are
//! scheduled across threads. Every configured test runs on the same simulated
//! dataset within a rep.

use std::io::Write;

use rayon::prelude::*;

use crate::adaptive::{bootstrap_upper_bound, select_branch, BootstrapConfig, BootstrapMethod};
use crate::error::{Error, Result};
use crate::location::{naive_test, weighted_test, Branch, TestKind};
use crate::model::{
    asymptotic_power_naive, asymptotic_power_weighted, generate_dataset, pitman_efficiency,
    ModelParams, ProxySpec,
};
use crate::statdist::RngStream;
use crate::working_mle::{wtd_plus_test, EmConfig};

const DATA_STREAM: u64 = 0;
const BOOTSTRAP_STREAM: u64 = 1;

/// Effect sizes, either as given or as local alternatives `mu = h / sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MuGrid {
    Absolute(Vec<f64>),
    Local(Vec<f64>),
}

impl MuGrid {
    fn values(&self) -> &[f64] {
        match self {
            MuGrid::Absolute(v) | MuGrid::Local(v) => v,
        }
    }

    fn mu(&self, value: f64, n: usize) -> f64 {
        match self {
            MuGrid::Absolute(_) => value,
            MuGrid::Local(_) => value / (n as f64).sqrt(),
        }
    }
}

/// Positive-control mean for a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuPrimeRule {
    Fixed(f64),
    /// `mu' = delta / (phi sqrt(n))`
    Delta(f64),
}

impl MuPrimeRule {
    pub fn mu_prime(self, phi: f64, n: usize) -> f64 {
        match self {
            MuPrimeRule::Fixed(v) => v,
            MuPrimeRule::Delta(delta) => delta / (phi * (n as f64).sqrt()),
        }
    }
}

/// Bootstrap settings shared by every rep; the stream is derived per rep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSettings {
    pub n_resamples: usize,
    pub alpha_prime: f64,
    pub method: BootstrapMethod,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            n_resamples: 2000,
            alpha_prime: 0.05,
            method: BootstrapMethod::Basic,
        }
    }
}

impl BootstrapSettings {
    fn with_stream(self, stream: RngStream) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.n_resamples,
            alpha_prime: self.alpha_prime,
            method: self.method,
            stream,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub proxy_specs: Vec<ProxySpec>,
    pub phi_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub mu_grid: MuGrid,
    pub mu_prime_rule: MuPrimeRule,
    pub alpha: f64,
    pub reps: usize,
    pub tests: Vec<TestKind>,
    pub bootstrap: BootstrapSettings,
    pub em: EmConfig,
    pub root_seed: u64,
}

impl ExperimentConfig {
    /// Table regimes, all five tests, `alpha = 1e-4`, 2000 reps. The phi, n and
    /// mu grids have no sensible default and must be supplied.
    pub fn new(phi_grid: Vec<f64>, n_grid: Vec<usize>, mu_grid: MuGrid, root_seed: u64) -> Self {
        ExperimentConfig {
            proxy_specs: ProxySpec::regimes(),
            phi_grid,
            n_grid,
            mu_grid,
            mu_prime_rule: MuPrimeRule::Delta(5.0),
            alpha: 1e-4,
            reps: 2000,
            tests: TestKind::ALL.to_vec(),
            bootstrap: BootstrapSettings::default(),
            em: EmConfig::default(),
            root_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.proxy_specs.is_empty() {
            return Err(Error::domain("proxy_specs must not be empty"));
        }
        for spec in &self.proxy_specs {
            spec.validate()?;
        }
        if self.phi_grid.is_empty() {
            return Err(Error::domain("phi_grid must not be empty"));
        }
        if let Some(phi) = self.phi_grid.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::domain(format!("phi_grid: {phi} is outside (0, 1]")));
        }
        if self.n_grid.is_empty() {
            return Err(Error::domain("n_grid must not be empty"));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::domain("n_grid: sample sizes must be at least 1"));
        }
        if self.mu_grid.values().is_empty() {
            return Err(Error::domain("mu_grid must not be empty"));
        }
        for &v in self.mu_grid.values() {
            for &n in &self.n_grid {
                let mu = self.mu_grid.mu(v, n);
                if !(mu.abs() <= self.em.search_bound) {
                    return Err(Error::domain(format!(
                        "mu_grid: mu = {mu} (n = {n}) lies outside the parameter bound {}",
                        self.em.search_bound
                    )));
                }
            }
        }
        match self.mu_prime_rule {
            MuPrimeRule::Fixed(v) | MuPrimeRule::Delta(v) if v == 0.0 || !v.is_finite() => {
                return Err(Error::domain("mu_prime must be finite and nonzero"));
            }
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.reps == 0 {
            return Err(Error::domain("reps must be at least 1"));
        }
        if self.tests.is_empty() {
            return Err(Error::domain("tests must not be empty"));
        }
        self.em.validate()?;
        self.bootstrap.with_stream(RngStream::new(0)).validate()
    }

    fn runs(&self, kind: TestKind) -> bool {
        self.tests.contains(&kind)
    }
}

/// One design point.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    index: u64,
    proxy: ProxySpec,
    phi: f64,
    n: usize,
    mu: f64,
}

fn cells(config: &ExperimentConfig, mu_values: &[f64], local: bool) -> Vec<Cell> {
    let mut out = Vec::new();
    for proxy in &config.proxy_specs {
        for &phi in &config.phi_grid {
            for &n in &config.n_grid {
                for &v in mu_values {
                    let mu = if local { v / (n as f64).sqrt() } else { v };
                    out.push(Cell {
                        index: out.len() as u64,
                        proxy: proxy.clone(),
                        phi,
                        n,
                        mu,
                    });
                }
            }
        }
    }
    out
}

/// Rejection counts for one test in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRow {
    pub proxy_label: String,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub n: usize,
    pub mu: f64,
    pub test: TestKind,
    pub rejections: u64,
    pub reps: usize,
    pub reject_rate: f64,
    pub mc_se: f64,
    pub alpha: f64,
    /// Limiting power for the naive and weighted tests.
    pub theory_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
}

pub type PowerTable = RejectionTable;
pub type CalibrationTable = RejectionTable;

pub const REJECTION_HEADER: &str =
    "proxy_label,a,b,phi,n,mu,test_name,reject_rate,mc_se,reps,alpha,theory_power";

impl RejectionTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{REJECTION_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.proxy_label,
                r.a,
                r.b,
                r.phi,
                r.n,
                r.mu,
                r.test,
                r.reject_rate,
                r.mc_se,
                r.reps,
                r.alpha,
                r.theory_power.map(|p| p.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Rows for one test in one regime, in grid order.
    pub fn select<'a>(
        &'a self,
        proxy_label: &'a str,
        test: TestKind,
    ) -> impl Iterator<Item = &'a RejectionRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.proxy_label == proxy_label && r.test == test)
    }
}

/// Binomial standard error of a proportion.
pub fn binomial_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

/// Decisions of every configured test on one dataset, as a bit per test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Decisions(u8);

impl Decisions {
    fn bit(kind: TestKind) -> u8 {
        1 << (kind as u8)
    }

    fn set(&mut self, kind: TestKind, reject: bool) {
        if reject {
            self.0 |= Self::bit(kind);
        }
    }

    fn rejected(self, kind: TestKind) -> bool {
        self.0 & Self::bit(kind) != 0
    }
}

fn run_rep(cell: &Cell, rep: u64, config: &ExperimentConfig) -> Result<Decisions> {
    let rep_stream = RngStream::with_path(config.root_seed, &[cell.index, rep]);
    let params = ModelParams {
        mu: cell.mu,
        phi: cell.phi,
        mu_prime: Some(config.mu_prime_rule.mu_prime(cell.phi, cell.n)),
        proxy: cell.proxy.clone(),
        bound: config.em.search_bound,
    };
    let data = generate_dataset(&params, cell.n, &rep_stream.child(DATA_STREAM))?;
    let (y, gamma) = (data.y(), data.gamma());
    let alpha = config.alpha;

    let runs = |kind| config.runs(kind);
    let a_wtd = runs(TestKind::AdaptiveWeighted);
    let a_plus = runs(TestKind::AdaptiveWeightedPlus);

    let naive = if runs(TestKind::Naive) || a_wtd || a_plus {
        Some(naive_test(y, alpha)?.reject)
    } else {
        None
    };
    let wtd = if runs(TestKind::Weighted) || a_wtd {
        Some(weighted_test(y, gamma, alpha)?.reject)
    } else {
        None
    };
    let wtd_plus = if runs(TestKind::WeightedPlus) || a_plus {
        Some(wtd_plus_test(y, gamma, alpha, &config.em)?.reject)
    } else {
        None
    };

    // The bootstrap only matters when the two candidate decisions differ.
    let contested = (a_wtd && naive != wtd) || (a_plus && naive != wtd_plus);
    let branch = if contested {
        let boot = config.bootstrap.with_stream(rep_stream.child(BOOTSTRAP_STREAM));
        let y_prime = data.y_prime().expect("harness always simulates the positive control");
        select_branch(bootstrap_upper_bound(gamma, y_prime, &boot)?.value)
    } else {
        Branch::Naive
    };
    let pick = |inner: Option<bool>| match branch {
        Branch::Naive => naive,
        Branch::Weighted => inner,
    };

    let mut d = Decisions::default();
    for (kind, decision) in [
        (TestKind::Naive, naive),
        (TestKind::Weighted, wtd),
        (TestKind::WeightedPlus, wtd_plus),
        (TestKind::AdaptiveWeighted, pick(wtd)),
        (TestKind::AdaptiveWeightedPlus, pick(wtd_plus)),
    ] {
        if runs(kind) {
            d.set(kind, decision.expect("decision computed for every configured test"));
        }
    }
    Ok(d)
}

fn run_cells(config: &ExperimentConfig, cells: &[Cell]) -> Result<RejectionTable> {
    let mut rows = Vec::new();
    for cell in cells {
        let decisions = (0..config.reps as u64)
            .into_par_iter()
            .map(|rep| run_rep(cell, rep, config))
            .collect::<Result<Vec<_>>>()?;
        let psi = pitman_efficiency(&cell.proxy, cell.phi).ok().map(|r| r.psi);
        let h = cell.mu * (cell.n as f64).sqrt();
        for &test in &config.tests {
            let rejections = decisions.iter().filter(|d| d.rejected(test)).count() as u64;
            let rate = rejections as f64 / config.reps as f64;
            let theory_power = match test {
                _ if h < 0.0 => None,
                TestKind::Naive => Some(asymptotic_power_naive(h, cell.phi, config.alpha)?),
                TestKind::Weighted => match (psi, cell.proxy.constant) {
                    (Some(psi), _) => Some(asymptotic_power_weighted(h, cell.phi, psi, config.alpha)?),
                    // point-mass weights: the weighted test is the naive test
                    (None, Some(_)) => Some(asymptotic_power_naive(h, cell.phi, config.alpha)?),
                    (None, None) => None,
                },
                _ => None,
            };
            rows.push(RejectionRow {
                proxy_label: cell.proxy.label.clone(),
                a: cell.proxy.a,
                b: cell.proxy.b,
                phi: cell.phi,
                n: cell.n,
                mu: cell.mu,
                test,
                rejections,
                reps: config.reps,
                reject_rate: rate,
                mc_se: binomial_se(rate, config.reps),
                alpha: config.alpha,
                theory_power,
            });
        }
    }
    Ok(RejectionTable { rows })
}

/// Rejection rates over the full (proxy, phi, n, mu) grid.
pub fn run_power_experiment(config: &ExperimentConfig) -> Result<PowerTable> {
    config.validate()?;
    if !config.mu_grid.values().iter().any(|&v| v > 0.0) {
        return Err(Error::domain("mu_grid: a power experiment needs some mu > 0"));
    }
    let local = matches!(config.mu_grid, MuGrid::Local(_));
    run_cells(config, &cells(config, config.mu_grid.values(), local))
}

/// Rejection rates with `mu` forced to zero; the configured mu grid is ignored.
pub fn run_calibration_experiment(config: &ExperimentConfig) -> Result<CalibrationTable> {
    config.validate()?;
    run_cells(config, &cells(config, &[0.0], false))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub proxy_label: String,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub n: usize,
    pub mu: f64,
    pub agreements: u64,
    pub reps: usize,
    pub agreement_rate: f64,
    pub mc_se: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgreementTable {
    pub rows: Vec<AgreementRow>,
}

pub const AGREEMENT_HEADER: &str = "proxy_label,a,b,phi,n,mu,agreement_rate,mc_se,reps,alpha";

impl AgreementTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{AGREEMENT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.proxy_label, r.a, r.b, r.phi, r.n, r.mu, r.agreement_rate, r.mc_se, r.reps, r.alpha
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// How often the fixed-weight and EM-refined weighted tests reach the same
/// decision. No positive control is simulated.
pub fn run_agreement_experiment(config: &ExperimentConfig) -> Result<AgreementTable> {
    config.validate()?;
    let local = matches!(config.mu_grid, MuGrid::Local(_));
    let mut rows = Vec::new();
    for cell in cells(config, config.mu_grid.values(), local) {
        let params = ModelParams {
            mu: cell.mu,
            phi: cell.phi,
            mu_prime: None,
            proxy: cell.proxy.clone(),
            bound: config.em.search_bound,
        };
        let agree = (0..config.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let stream = RngStream::with_path(config.root_seed, &[cell.index, rep, DATA_STREAM]);
                let data = generate_dataset(&params, cell.n, &stream)?;
                let wtd = weighted_test(data.y(), data.gamma(), config.alpha)?;
                let plus = wtd_plus_test(data.y(), data.gamma(), config.alpha, &config.em)?;
                Ok(wtd.reject == plus.reject)
            })
            .collect::<Result<Vec<bool>>>()?;
        let agreements = agree.iter().filter(|&&a| a).count() as u64;
        let rate = agreements as f64 / config.reps as f64;
        rows.push(AgreementRow {
            proxy_label: cell.proxy.label.clone(),
            a: cell.proxy.a,
            b: cell.proxy.b,
            phi: cell.phi,
            n: cell.n,
            mu: cell.mu,
            agreements,
            reps: config.reps,
            agreement_rate: rate,
            mc_se: binomial_se(rate, config.reps),
            alpha: config.alpha,
        });
    }
    Ok(AgreementTable { rows })
}
