//! One-sided location tests of `H0: mu = 0` against `mu > 0`: the naive z-test on
//! the raw outcomes and the test built on the proxy-weighted mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Degeneracy, Error, Result};
use crate::model::check_weights;
use crate::statdist::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "wtd")]
    Weighted,
    #[serde(rename = "wtd+")]
    WeightedPlus,
    #[serde(rename = "a_wtd")]
    AdaptiveWeighted,
    #[serde(rename = "a_wtd+")]
    AdaptiveWeightedPlus,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::Naive,
        TestKind::Weighted,
        TestKind::WeightedPlus,
        TestKind::AdaptiveWeighted,
        TestKind::AdaptiveWeightedPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Naive => "naive",
            TestKind::Weighted => "wtd",
            TestKind::WeightedPlus => "wtd+",
            TestKind::AdaptiveWeighted => "a_wtd",
            TestKind::AdaptiveWeightedPlus => "a_wtd+",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, TestKind::AdaptiveWeighted | TestKind::AdaptiveWeightedPlus)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown test `{s}` (expected one of naive, wtd, wtd+, a_wtd, a_wtd+)"
                ))
            })
    }
}

/// Which inner test an adaptive test dispatched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Naive,
    Weighted,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Naive => "naive",
            Branch::Weighted => "weighted",
        }
    }
}

/// Outcome of one test on one dataset.
///
/// A degenerate result (no usable standard error) never rejects. For the
/// zero-weight case the estimate itself is undefined and reported as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test: TestKind,
    pub n: usize,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub statistic: Option<f64>,
    pub threshold: f64,
    pub reject: bool,
    pub alpha: f64,
    pub degenerate: Option<Degeneracy>,
    /// Set only by adaptive tests.
    pub branch: Option<Branch>,
}

impl TestResult {
    pub const CSV_HEADER: &'static str =
        "test_name,n,alpha,estimate,std_error,statistic,threshold,reject,degenerate,branch";

    pub(crate) fn decided(
        test: TestKind,
        n: usize,
        estimate: f64,
        std_error: f64,
        statistic: f64,
        alpha: f64,
    ) -> Result<Self> {
        let threshold = z_threshold(alpha)?;
        Ok(TestResult {
            test,
            n,
            estimate,
            std_error: Some(std_error),
            statistic: Some(statistic),
            threshold,
            reject: statistic > threshold,
            alpha,
            degenerate: None,
            branch: None,
        })
    }

    pub(crate) fn degenerate(
        test: TestKind,
        n: usize,
        estimate: f64,
        alpha: f64,
        reason: Degeneracy,
    ) -> Result<Self> {
        Ok(TestResult {
            test,
            n,
            estimate,
            std_error: None,
            statistic: None,
            threshold: z_threshold(alpha)?,
            reject: false,
            alpha,
            degenerate: Some(reason),
            branch: None,
        })
    }

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.test,
            self.n,
            self.alpha,
            self.estimate,
            opt(self.std_error),
            opt(self.statistic),
            self.threshold,
            self.reject,
            self.degenerate.map(|d| d.code()).unwrap_or(""),
            self.branch.map(|b| b.name()).unwrap_or(""),
        )
    }
}

/// `z_{1-alpha}`, computed from the lower tail so small `alpha` loses nothing.
pub fn z_threshold(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(-normal_quantile(alpha)?)
}

/// One-sample z-test on the raw outcomes.
pub fn naive_test(y: &[f64], alpha: f64) -> Result<TestResult> {
    if y.is_empty() {
        return Err(Error::domain("naive test needs at least one observation"));
    }
    let n = y.len();
    let sum: f64 = y.iter().sum();
    let root_n = (n as f64).sqrt();
    // sum / sqrt(n) == sqrt(n) * mean, written so constant weights reproduce it bit for bit
    TestResult::decided(TestKind::Naive, n, sum / n as f64, 1.0 / root_n, sum / root_n, alpha)
}

/// z-test on the proxy-weighted mean, with the standard error taken
/// conditionally on the weights.
pub fn weighted_test(y: &[f64], gamma: &[f64], alpha: f64) -> Result<TestResult> {
    if y.is_empty() {
        return Err(Error::domain("weighted test needs at least one observation"));
    }
    if y.len() != gamma.len() {
        return Err(Error::domain(format!(
            "y has {} rows but gamma has {}",
            y.len(),
            gamma.len()
        )));
    }
    check_weights(gamma)?;
    let n = y.len();
    let sum_g: f64 = gamma.iter().sum();
    if sum_g <= 0.0 {
        return TestResult::degenerate(TestKind::Weighted, n, f64::NAN, alpha, Degeneracy::ZeroWeights);
    }
    let sum_gy: f64 = gamma.iter().zip(y).map(|(g, y)| g * y).sum();
    let sum_g2: f64 = gamma.iter().map(|g| g * g).sum();
    let estimate = sum_gy / sum_g;
    let std_error = sum_g2.sqrt() / sum_g;

    // The statistic is scale free in gamma; normalizing by the largest weight
    // makes constant weights collapse exactly onto the naive statistic.
    let g_max = gamma.iter().copied().fold(0.0, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (g, y) in gamma.iter().zip(y) {
        let w = g / g_max;
        num += w * y;
        den += w * w;
    }
    TestResult::decided(TestKind::Weighted, n, estimate, std_error, num / den.sqrt(), alpha)
}
