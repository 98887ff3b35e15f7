//! Maximum likelihood in the working model, where the proxies are held fixed
//! and read as prior probabilities: `Z_i | gamma_i ~ Ber(gamma_i)` and
//! `Y_i | Z_i ~ N(mu Z_i, 1)`.
//!
//! The EM iteration alternates a weighted mean (M-step) with a posterior update
//! of the weights (E-step). Its standard error comes from the Louis observed
//! information, which for this one-parameter model is
//! `sum(g) - sum(g (1 - g) (y - mu)^2)` evaluated at the fitted weights `g`.

use crate::error::{Degeneracy, Error, Result};
use crate::location::{TestKind, TestResult};
use crate::model::{check_weights, DEFAULT_BOUND};
use crate::statdist::{log_add_exp, normal_ln_pdf};

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Stop once an M-step moves the estimate by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Estimates are clamped to `[-search_bound, search_bound]`.
    pub search_bound: f64,
    /// When set, the fit is checked against a grid search with this many points.
    pub verify_grid: Option<usize>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-10,
            max_iter: 500,
            search_bound: DEFAULT_BOUND,
            verify_grid: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::domain(format!("EM tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("EM max_iter must be at least 1"));
        }
        if !(self.search_bound > 0.0 && self.search_bound.is_finite()) {
            return Err(Error::domain(format!(
                "EM search_bound must be positive, got {}",
                self.search_bound
            )));
        }
        if matches!(self.verify_grid, Some(k) if k < 2) {
            return Err(Error::domain("EM verify_grid needs at least 2 points"));
        }
        Ok(())
    }
}

/// One EM iterate: the estimate after an M-step and the working
/// log-likelihood there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmStep {
    pub mu: f64,
    pub loglik: f64,
}

/// Outcome of the optional grid check of the EM fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCheck {
    pub argmax: f64,
    pub max_loglik: f64,
    /// The EM estimate is at least as likely as every grid point.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub mu_hat: f64,
    /// Posterior weights at `mu_hat`.
    pub gamma_hat: Vec<f64>,
    /// Louis observed information; the standard error is `1 / sqrt(info)`.
    pub info: f64,
    pub std_error: Option<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some M-step hit the parameter bound.
    pub clamped: bool,
    pub trace: Vec<EmStep>,
    pub grid_check: Option<GridCheck>,
}

fn check_inputs(y: &[f64], gamma: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::domain("working likelihood needs at least one observation"));
    }
    if y.len() != gamma.len() {
        return Err(Error::domain(format!(
            "y has {} rows but gamma has {}",
            y.len(),
            gamma.len()
        )));
    }
    check_weights(gamma)
}

/// Log of `(1 - g) phi(y | 0) + g phi(y | mu)`.
#[inline]
fn term_loglik(mu: f64, y: f64, g: f64) -> f64 {
    log_add_exp((1.0 - g).ln() + normal_ln_pdf(y, 0.0), g.ln() + normal_ln_pdf(y, mu))
}

/// Working log-likelihood `sum_i log((1 - g_i) phi(y_i | 0) + g_i phi(y_i | mu))`.
pub fn working_loglik(mu: f64, y: &[f64], gamma: &[f64]) -> Result<f64> {
    check_inputs(y, gamma)?;
    Ok(y.iter().zip(gamma).map(|(&y, &g)| term_loglik(mu, y, g)).sum())
}

/// Per-row quantities that do not change across EM iterations.
struct Prepared {
    /// `ln(1 - g) - ln(g)`; `-inf` for `g = 1`, unused for `g = 0`.
    log_odds_null: Vec<f64>,
    ln_g: Vec<f64>,
}

impl Prepared {
    fn new(gamma: &[f64]) -> Self {
        Prepared {
            log_odds_null: gamma.iter().map(|g| (1.0 - g).ln() - g.ln()).collect(),
            ln_g: gamma.iter().map(|g| g.ln()).collect(),
        }
    }

    /// E-step at `mu`: overwrite `gamma_hat` with posteriors and return the
    /// working log-likelihood at `mu`.
    fn e_step(&self, mu: f64, y: &[f64], gamma: &[f64], gamma_hat: &mut [f64]) -> f64 {
        let half_mu_sq = 0.5 * mu * mu;
        let mut loglik = 0.0;
        for i in 0..y.len() {
            let g = gamma[i];
            if g == 0.0 {
                gamma_hat[i] = 0.0;
                loglik += normal_ln_pdf(y[i], 0.0);
                continue;
            }
            // t = log of null component over shifted component
            let t = self.log_odds_null[i] + half_mu_sq - mu * y[i];
            let ln_shifted = self.ln_g[i] + normal_ln_pdf(y[i], mu);
            if t == f64::NEG_INFINITY {
                gamma_hat[i] = 1.0;
                loglik += ln_shifted;
            } else if t > 0.0 {
                let e = (-t).exp();
                gamma_hat[i] = e / (1.0 + e);
                loglik += ln_shifted + t + e.ln_1p();
            } else {
                let e = t.exp();
                gamma_hat[i] = 1.0 / (1.0 + e);
                loglik += ln_shifted + e.ln_1p();
            }
        }
        loglik
    }
}

/// Louis observed information `sum(g) - sum(g (1 - g) (y - mu)^2)`.
pub fn louis_information(mu_hat: f64, gamma_hat: &[f64], y: &[f64]) -> f64 {
    gamma_hat
        .iter()
        .zip(y)
        .map(|(&g, &y)| {
            let r = y - mu_hat;
            g - g * (1.0 - g) * r * r
        })
        .sum()
}

/// Louis standard error, or `Degenerate(NonpositiveInformation)` when the
/// information is not positive.
pub fn louis_se(mu_hat: f64, gamma_hat: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(y, gamma_hat)?;
    let info = louis_information(mu_hat, gamma_hat, y);
    if info > 0.0 {
        Ok(1.0 / info.sqrt())
    } else {
        Err(Error::Degenerate(Degeneracy::NonpositiveInformation))
    }
}

/// Fit the working-model MLE by EM, starting from `gamma_hat = gamma` so that
/// the first iterate is the fixed-weight estimate.
pub fn em_fit(y: &[f64], gamma: &[f64], config: &EmConfig) -> Result<EmFit> {
    check_inputs(y, gamma)?;
    config.validate()?;
    if gamma.iter().all(|&g| g == 0.0) {
        return Err(Error::Degenerate(Degeneracy::ZeroWeights));
    }
    let bound = config.search_bound;
    let prep = Prepared::new(gamma);
    let mut gamma_hat = gamma.to_vec();
    let mut trace = Vec::new();
    let mut clamped = false;
    let mut converged = false;
    let mut prev: Option<f64> = None;
    let mut mu = 0.0;
    let mut loglik = f64::NAN;

    for _ in 0..config.max_iter {
        let (mut sum_g, mut sum_gy) = (0.0, 0.0);
        for (g, y) in gamma_hat.iter().zip(y) {
            sum_g += g;
            sum_gy += g * y;
        }
        if !(sum_g > 0.0) {
            return Err(Error::Degenerate(Degeneracy::ZeroWeights));
        }
        mu = sum_gy / sum_g;
        if mu.abs() > bound {
            mu = mu.clamp(-bound, bound);
            clamped = true;
        }
        loglik = prep.e_step(mu, y, gamma, &mut gamma_hat);
        trace.push(EmStep { mu, loglik });
        if let Some(p) = prev {
            if (mu - p).abs() < config.tol {
                converged = true;
                break;
            }
        }
        prev = Some(mu);
    }

    let info = louis_information(mu, &gamma_hat, y);
    let grid_check = match config.verify_grid {
        Some(points) => {
            let profile = loglik_profile(y, gamma, -bound, bound, points)?;
            let (argmax, max_loglik) = profile
                .iter()
                .copied()
                .fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });
            Some(GridCheck {
                argmax,
                max_loglik,
                agrees: loglik >= max_loglik - 1e-9 * (1.0 + loglik.abs()),
            })
        }
        None => None,
    };

    Ok(EmFit {
        mu_hat: mu,
        std_error: (info > 0.0).then(|| 1.0 / info.sqrt()),
        gamma_hat,
        info,
        loglik,
        iterations: trace.len(),
        converged,
        clamped,
        trace,
        grid_check,
    })
}

/// Test built on the working-model MLE and its Louis standard error.
///
/// Zero weights and nonpositive information both give a flagged non-rejection.
pub fn wtd_plus_test(y: &[f64], gamma: &[f64], alpha: f64, config: &EmConfig) -> Result<TestResult> {
    match em_fit(y, gamma, config) {
        Ok(fit) => wtd_plus_from_fit(&fit, alpha),
        Err(Error::Degenerate(reason)) => {
            TestResult::degenerate(TestKind::WeightedPlus, y.len(), f64::NAN, alpha, reason)
        }
        Err(e) => Err(e),
    }
}

pub fn wtd_plus_from_fit(fit: &EmFit, alpha: f64) -> Result<TestResult> {
    let n = fit.gamma_hat.len();
    match fit.std_error {
        Some(se) => TestResult::decided(TestKind::WeightedPlus, n, fit.mu_hat, se, fit.mu_hat / se, alpha),
        None => TestResult::degenerate(
            TestKind::WeightedPlus,
            n,
            fit.mu_hat,
            alpha,
            Degeneracy::NonpositiveInformation,
        ),
    }
}

/// Working log-likelihood on `points` evenly spaced values of `mu` in `[lo, hi]`.
pub fn loglik_profile(
    y: &[f64],
    gamma: &[f64],
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    check_inputs(y, gamma)?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("profile needs lo < hi, got [{lo}, {hi}]")));
    }
    if points < 2 {
        return Err(Error::domain("profile needs at least 2 points"));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            let mu = if k + 1 == points { hi } else { lo + step * k as f64 };
            let ll = y.iter().zip(gamma).map(|(&y, &g)| term_loglik(mu, y, g)).sum();
            (mu, ll)
        })
        .collect())
}

/// Number of sign changes in the successive differences of a profile; exact
/// ties are skipped. A unimodal interior maximum gives 1.
pub fn profile_sign_changes(profile: &[(f64, f64)]) -> usize {
    let signs: Vec<bool> = profile
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .filter(|d| *d != 0.0)
        .map(|d| d > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}
