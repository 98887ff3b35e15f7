//! Positive-control estimate of the efficiency ratio `psi`, its bootstrap upper
//! confidence bound, and the adaptive tests that drop the proxies when the bound
//! says they cannot help.
//!
//! The bound is computed from `(gamma, y_prime)` alone. The outcome vector is
//! only read after the branch has been chosen.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Degeneracy, Error, Result};
use crate::location::{naive_test, weighted_test, Branch, TestKind, TestResult};
use crate::model::check_weights;
use crate::statdist::RngStream;
use crate::working_mle::{wtd_plus_test, EmConfig};

/// Denominators at or below this are treated as zero.
pub const PSI_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEstimate {
    pub psi_hat: f64,
    pub n: usize,
    pub degenerate: Option<Degeneracy>,
}

/// Sufficient sums for the plug-in estimate, with weights pre-divided by
/// their maximum (the estimate is invariant to that scale).
#[derive(Debug, Default, Clone, Copy)]
struct PsiSums {
    gy: f64,
    y: f64,
    g2: f64,
}

impl PsiSums {
    #[inline]
    fn push(&mut self, g: f64, y: f64) {
        self.gy += g * y;
        self.y += y;
        self.g2 += g * g;
    }

    fn finish(self, n: usize, scale: f64) -> PsiEstimate {
        let nf = n as f64;
        let rms = (self.g2 / nf).sqrt();
        let denominator = (self.y / nf) * rms * scale;
        if !(denominator > PSI_EPSILON) {
            return PsiEstimate {
                psi_hat: f64::NAN,
                n,
                degenerate: Some(Degeneracy::NonpositiveControlMean),
            };
        }
        PsiEstimate {
            psi_hat: self.gy / (self.y * rms),
            n,
            degenerate: None,
        }
    }
}

fn check_pairs(gamma: &[f64], y_prime: &[f64]) -> Result<()> {
    if gamma.is_empty() {
        return Err(Error::domain("psi estimate needs at least one observation"));
    }
    if gamma.len() != y_prime.len() {
        return Err(Error::domain(format!(
            "gamma has {} rows but y_prime has {}",
            gamma.len(),
            y_prime.len()
        )));
    }
    check_weights(gamma)
}

fn max_weight(gamma: &[f64]) -> f64 {
    gamma.iter().copied().fold(0.0, f64::max)
}

/// Plug-in estimate `mean(g y') / (mean(y') sqrt(mean(g^2)))`.
pub fn estimate_psi(gamma: &[f64], y_prime: &[f64]) -> Result<PsiEstimate> {
    check_pairs(gamma, y_prime)?;
    let scale = max_weight(gamma);
    let n = gamma.len();
    if scale == 0.0 {
        return Ok(PsiSums::default().finish(n, 0.0));
    }
    let mut sums = PsiSums::default();
    for (g, y) in gamma.iter().zip(y_prime) {
        sums.push(g / scale, *y);
    }
    Ok(sums.finish(n, scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMethod {
    /// Reverse percentile: `2 psi_hat - q_{alpha'}(psi*)`.
    #[default]
    Basic,
    /// `q_{1 - alpha'}(psi*)`.
    Percentile,
}

impl BootstrapMethod {
    pub fn name(self) -> &'static str {
        match self {
            BootstrapMethod::Basic => "basic",
            BootstrapMethod::Percentile => "percentile",
        }
    }
}

impl fmt::Display for BootstrapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BootstrapMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" => Ok(BootstrapMethod::Basic),
            "percentile" => Ok(BootstrapMethod::Percentile),
            other => Err(Error::domain(format!(
                "unknown bootstrap method `{other}` (expected basic or percentile)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub alpha_prime: f64,
    pub method: BootstrapMethod,
    pub stream: RngStream,
}

impl BootstrapConfig {
    pub fn new(stream: RngStream) -> Self {
        BootstrapConfig {
            n_resamples: 2000,
            alpha_prime: 0.05,
            method: BootstrapMethod::Basic,
            stream,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_resamples < 100 {
            return Err(Error::domain(format!(
                "bootstrap needs at least 100 resamples, got {}",
                self.n_resamples
            )));
        }
        if !(self.alpha_prime > 0.0 && self.alpha_prime < 0.5) {
            return Err(Error::domain(format!(
                "alpha_prime must lie in (0, 0.5), got {}",
                self.alpha_prime
            )));
        }
        Ok(())
    }
}

/// Bootstrap upper confidence bound for `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperBound {
    pub value: f64,
    pub psi: PsiEstimate,
    /// Resamples whose estimate was degenerate; they count as pushing the bound up.
    pub degenerate_resamples: usize,
}

impl UpperBound {
    pub fn branch(&self) -> Branch {
        select_branch(self.value)
    }
}

/// Naive only on evidence (`bound < 1`) that the proxies hurt; weighted otherwise.
pub fn select_branch(upper_bound: f64) -> Branch {
    if upper_bound < 1.0 {
        Branch::Naive
    } else {
        Branch::Weighted
    }
}

/// Resample `(gamma_i, y'_i)` pairs jointly and turn the bootstrap distribution
/// of the estimate into a `1 - alpha'` upper bound.
///
/// Degenerate resamples are placed at `+inf` on the scale the bound is read
/// from, so they can only raise it. A degenerate estimate on the original data
/// gives an infinite bound.
pub fn bootstrap_upper_bound(
    gamma: &[f64],
    y_prime: &[f64],
    config: &BootstrapConfig,
) -> Result<UpperBound> {
    config.validate()?;
    let psi = estimate_psi(gamma, y_prime)?;
    if psi.degenerate.is_some() {
        return Ok(UpperBound {
            value: f64::INFINITY,
            psi,
            degenerate_resamples: 0,
        });
    }
    let n = gamma.len();
    let scale = max_weight(gamma);
    let g: Vec<f64> = gamma.iter().map(|v| v / scale).collect();
    let mut rng = config.stream.rng();
    let mut values = Vec::with_capacity(config.n_resamples);
    let mut degenerate_resamples = 0;
    for _ in 0..config.n_resamples {
        let mut sums = PsiSums::default();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            sums.push(g[i], y_prime[i]);
        }
        let star = sums.finish(n, scale);
        let v = match (star.degenerate, config.method) {
            (Some(_), _) => {
                degenerate_resamples += 1;
                f64::INFINITY
            }
            (None, BootstrapMethod::Percentile) => star.psi_hat,
            (None, BootstrapMethod::Basic) => 2.0 * psi.psi_hat - star.psi_hat,
        };
        values.push(v);
    }
    values.sort_by(f64::total_cmp);
    Ok(UpperBound {
        value: quantile_sorted(&values, 1.0 - config.alpha_prime),
        psi,
        degenerate_resamples,
    })
}

/// Linear-interpolation quantile of sorted data; an infinite neighbour wins.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let a = sorted[lo];
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return a;
    }
    let b = sorted[lo + 1];
    if a == b {
        a
    } else if b.is_infinite() {
        b
    } else {
        a + frac * (b - a)
    }
}

/// Which weighted test an adaptive test falls back on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InnerTest {
    Weighted,
    WeightedPlus,
}

impl InnerTest {
    pub fn adaptive_kind(self) -> TestKind {
        match self {
            InnerTest::Weighted => TestKind::AdaptiveWeighted,
            InnerTest::WeightedPlus => TestKind::AdaptiveWeightedPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    pub result: TestResult,
    pub bound: UpperBound,
}

/// Relabel the chosen inner result as the adaptive test's result.
pub fn dispatch(kind: TestKind, branch: Branch, chosen: TestResult) -> TestResult {
    TestResult {
        test: kind,
        branch: Some(branch),
        ..chosen
    }
}

/// Naive test when the upper bound on `psi` is below one, the inner weighted
/// test otherwise.
pub fn adaptive_test(
    y: &[f64],
    gamma: &[f64],
    y_prime: Option<&[f64]>,
    alpha: f64,
    bootstrap: &BootstrapConfig,
    em: &EmConfig,
    inner: InnerTest,
) -> Result<AdaptiveOutcome> {
    let y_prime =
        y_prime.ok_or_else(|| Error::domain("adaptive tests need positive-control outcomes"))?;
    if y.len() != gamma.len() {
        return Err(Error::domain(format!(
            "y has {} rows but gamma has {}",
            y.len(),
            gamma.len()
        )));
    }
    let bound = bootstrap_upper_bound(gamma, y_prime, bootstrap)?;
    let branch = bound.branch();
    let chosen = match (branch, inner) {
        (Branch::Naive, _) => naive_test(y, alpha)?,
        (Branch::Weighted, InnerTest::Weighted) => weighted_test(y, gamma, alpha)?,
        (Branch::Weighted, InnerTest::WeightedPlus) => wtd_plus_test(y, gamma, alpha, em)?,
    };
    Ok(AdaptiveOutcome {
        result: dispatch(inner.adaptive_kind(), branch, chosen),
        bound,
    })
}
