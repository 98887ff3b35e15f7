//! The data-generating process: latent success indicators `Z`, outcomes `Y`
//! shifted by `mu` when `Z = 1`, proxies `gamma` drawn from Beta laws that
//! depend on `Z`, and an optional positive-control outcome sharing the same `Z`.
//!
//! Closed-form moments of that process live here too. They serve as the
//! theoretical oracles for the simulation checks and for the asymptotic power
//! curves attached to experiment tables.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statdist::{bernoulli, normal_quantile, normal_sf, BetaSampler, RngStream};

/// Default bound `K` on the effect size parameter space `[-K, K]`.
pub const DEFAULT_BOUND: f64 = 10.0;

/// Law of the proxies given the latent variable.
///
/// With offsets `(a, b)`, `gamma | Z=1 ~ Beta(1+a, 1+b)` and
/// `gamma | Z=0 ~ Beta(1+b, 1+a)`. A `constant` override replaces both laws by a
/// point mass, which is only useful for reduction checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySpec {
    pub label: String,
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

impl ProxySpec {
    pub fn new(label: impl Into<String>, a: f64, b: f64) -> Result<Self> {
        let spec = ProxySpec {
            label: label.into(),
            a,
            b,
            constant: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Point-mass proxies, `gamma_i = value` for every row.
    pub fn constant(label: impl Into<String>, value: f64) -> Result<Self> {
        let spec = ProxySpec {
            label: label.into(),
            a: 0.0,
            b: 0.0,
            constant: Some(value),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.constant {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::domain(format!(
                    "proxy `{}`: constant weight must lie in [0, 1], got {c}",
                    self.label
                )));
            }
            return Ok(());
        }
        if !(self.a > -1.0 && self.a.is_finite()) || !(self.b > -1.0 && self.b.is_finite()) {
            return Err(Error::domain(format!(
                "proxy `{}`: offsets must satisfy a, b > -1, got ({}, {})",
                self.label, self.a, self.b
            )));
        }
        Ok(())
    }

    /// Beta shapes of `gamma` given `Z`.
    pub fn shapes(&self, z: bool) -> (f64, f64) {
        if z {
            (1.0 + self.a, 1.0 + self.b)
        } else {
            (1.0 + self.b, 1.0 + self.a)
        }
    }

    pub fn hvar() -> Self {
        Self::fixed("HVar", -0.9, -0.9)
    }
    pub fn unif() -> Self {
        Self::fixed("Unif", 0.0, 0.0)
    }
    pub fn pos1() -> Self {
        Self::fixed("Pos1", 0.1, -0.1)
    }
    pub fn pos2() -> Self {
        Self::fixed("Pos2", 2.0, -0.25)
    }
    pub fn neg1() -> Self {
        Self::fixed("Neg1", -0.1, 0.1)
    }
    pub fn neg2() -> Self {
        Self::fixed("Neg2", -0.25, 2.0)
    }

    fn fixed(label: &str, a: f64, b: f64) -> Self {
        ProxySpec {
            label: label.to_string(),
            a,
            b,
            constant: None,
        }
    }

    /// The six named regimes, in table order.
    pub fn regimes() -> Vec<ProxySpec> {
        vec![
            Self::hvar(),
            Self::unif(),
            Self::pos1(),
            Self::pos2(),
            Self::neg1(),
            Self::neg2(),
        ]
    }

    /// Look up a named regime, ignoring case.
    pub fn by_label(label: &str) -> Option<ProxySpec> {
        Self::regimes()
            .into_iter()
            .find(|s| s.label.eq_ignore_ascii_case(label))
    }
}

/// Generative parameters for one design cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub phi: f64,
    pub mu_prime: Option<f64>,
    pub proxy: ProxySpec,
    pub bound: f64,
}

impl ModelParams {
    pub fn new(mu: f64, phi: f64, proxy: ProxySpec) -> Result<Self> {
        let params = ModelParams {
            mu,
            phi,
            mu_prime: None,
            proxy,
            bound: DEFAULT_BOUND,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_positive_control(mut self, mu_prime: f64) -> Result<Self> {
        self.mu_prime = Some(mu_prime);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::domain(format!("bound must be positive, got {}", self.bound)));
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return Err(Error::domain(format!("phi must lie in (0, 1], got {}", self.phi)));
        }
        if !(self.mu.abs() <= self.bound) {
            return Err(Error::domain(format!(
                "mu = {} lies outside [-{b}, {b}]",
                self.mu,
                b = self.bound
            )));
        }
        if let Some(mp) = self.mu_prime {
            if mp == 0.0 || !mp.is_finite() {
                return Err(Error::domain(format!(
                    "positive-control mean must be finite and nonzero, got {mp}"
                )));
            }
        }
        self.proxy.validate()
    }
}

/// Observations from one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    gamma: Vec<f64>,
    y_prime: Option<Vec<f64>>,
    z: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::domain("dataset needs at least one row"));
        }
        if y.len() != gamma.len() {
            return Err(Error::domain(format!(
                "y has {} rows but gamma has {}",
                y.len(),
                gamma.len()
            )));
        }
        check_weights(&gamma)?;
        Ok(Dataset {
            y,
            gamma,
            y_prime: None,
            z: None,
        })
    }

    pub fn with_positive_control(mut self, y_prime: Vec<f64>) -> Result<Self> {
        if y_prime.len() != self.y.len() {
            return Err(Error::domain(format!(
                "y_prime has {} rows, expected {}",
                y_prime.len(),
                self.y.len()
            )));
        }
        self.y_prime = Some(y_prime);
        Ok(self)
    }

    pub fn with_latent(mut self, z: Vec<bool>) -> Result<Self> {
        if z.len() != self.y.len() {
            return Err(Error::domain(format!(
                "z has {} rows, expected {}",
                z.len(),
                self.y.len()
            )));
        }
        self.z = Some(z);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn y_prime(&self) -> Option<&[f64]> {
        self.y_prime.as_deref()
    }

    /// Latent truths; kept for diagnostics only, never read by any test.
    pub fn z(&self) -> Option<&[bool]> {
        self.z.as_deref()
    }

    /// Write as CSV with header `y,gamma,y_prime,z`; absent columns are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "y,gamma,y_prime,z")?;
        for i in 0..self.len() {
            let yp = self
                .y_prime
                .as_ref()
                .map(|v| format_real(v[i]))
                .unwrap_or_default();
            let z = match &self.z {
                Some(z) => if z[i] { "1" } else { "0" },
                None => "",
            };
            writeln!(
                out,
                "{},{},{},{}",
                format_real(self.y[i]),
                format_real(self.gamma[i]),
                yp,
                z
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Parse the CSV written by [`Dataset::write_csv`].
    ///
    /// `y` and `gamma` columns are required. `y_prime` and `z` may be missing or
    /// left empty, but must then be empty on every row.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(format!("line 1: unreadable header: {e}")))?
            .clone();
        let column = |name: &str| headers.iter().position(|h| h == name);
        for h in headers.iter() {
            if !matches!(h, "y" | "gamma" | "y_prime" | "z") {
                return Err(Error::Parse(format!("line 1: unknown column `{h}`")));
            }
        }
        let y_col = column("y").ok_or_else(|| Error::Parse("line 1: missing column `y`".into()))?;
        let g_col = column("gamma")
            .ok_or_else(|| Error::Parse("line 1: missing column `gamma`".into()))?;
        let yp_col = column("y_prime");
        let z_col = column("z");

        let mut y = Vec::new();
        let mut gamma = Vec::new();
        let mut y_prime: Vec<Option<f64>> = Vec::new();
        let mut z: Vec<Option<bool>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(format!("malformed CSV: {e}")))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let field = |col: usize, name: &str| -> Result<Option<f64>> {
                let raw = record.get(col).unwrap_or("");
                if raw.is_empty() {
                    return Ok(None);
                }
                raw.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("line {line}: field `{name}`: not a number: `{raw}`")))
            };
            let required = |col: usize, name: &str| -> Result<f64> {
                field(col, name)?
                    .ok_or_else(|| Error::Parse(format!("line {line}: field `{name}` is empty")))
            };
            y.push(required(y_col, "y")?);
            let g = required(g_col, "gamma")?;
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Parse(format!(
                    "line {line}: field `gamma`: {g} is outside [0, 1]"
                )));
            }
            gamma.push(g);
            y_prime.push(match yp_col {
                Some(c) => field(c, "y_prime")?,
                None => None,
            });
            z.push(match z_col {
                Some(c) => match record.get(c).unwrap_or("") {
                    "" => None,
                    "0" => Some(false),
                    "1" => Some(true),
                    other => {
                        return Err(Error::Parse(format!(
                            "line {line}: field `z`: expected 0 or 1, got `{other}`"
                        )))
                    }
                },
                None => None,
            });
        }
        if y.is_empty() {
            return Err(Error::Parse("dataset has no rows".into()));
        }
        let y_prime = all_or_nothing(y_prime, "y_prime")?;
        let z = all_or_nothing(z, "z")?;
        let mut data = Dataset::new(y, gamma)?;
        if let Some(yp) = y_prime {
            data = data.with_positive_control(yp)?;
        }
        if let Some(z) = z {
            data = data.with_latent(z)?;
        }
        Ok(data)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn all_or_nothing<T>(values: Vec<Option<T>>, name: &str) -> Result<Option<Vec<T>>> {
    let present = values.iter().filter(|v| v.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if let Some(row) = values.iter().position(|v| v.is_none()) {
        // +2: header line, 1-based numbering
        return Err(Error::Parse(format!(
            "line {}: field `{name}` is empty but other rows fill it",
            row + 2
        )));
    }
    Ok(Some(values.into_iter().flatten().collect()))
}

/// Seventeen significant digits: enough to round-trip every `f64`.
pub(crate) fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn check_weights(gamma: &[f64]) -> Result<()> {
    if let Some((i, g)) = gamma
        .iter()
        .enumerate()
        .find(|(_, g)| !(0.0..=1.0).contains(*g))
    {
        return Err(Error::domain(format!(
            "gamma[{i}] = {g} lies outside [0, 1]"
        )));
    }
    Ok(())
}

/// Draw `n` i.i.d. rows from the (possibly augmented) model.
///
/// Per row the draws are taken in a fixed order: `Z`, the outcome noise, the
/// proxy, then the positive-control noise when `mu_prime` is set.
pub fn generate_dataset(params: &ModelParams, n: usize, stream: &RngStream) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let mut rng = stream.rng();
    let proxy = ProxyDraw::new(&params.proxy)?;

    let mut y = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut y_prime = params.mu_prime.map(|_| Vec::with_capacity(n));
    for _ in 0..n {
        let zi = bernoulli(params.phi, &mut rng);
        let shift = if zi { params.mu } else { 0.0 };
        let noise: f64 = rng.sample(StandardNormal);
        y.push(shift + noise);
        gamma.push(proxy.sample(zi, &mut rng));
        if let (Some(out), Some(mp)) = (y_prime.as_mut(), params.mu_prime) {
            let noise: f64 = rng.sample(StandardNormal);
            out.push(if zi { mp } else { 0.0 } + noise);
        }
        z.push(zi);
    }

    let mut data = Dataset::new(y, gamma)?.with_latent(z)?;
    if let Some(yp) = y_prime {
        data = data.with_positive_control(yp)?;
    }
    Ok(data)
}

enum ProxyDraw {
    Constant(f64),
    Beta { given1: BetaSampler, given0: BetaSampler },
}

impl ProxyDraw {
    fn new(spec: &ProxySpec) -> Result<Self> {
        spec.validate()?;
        if let Some(c) = spec.constant {
            return Ok(ProxyDraw::Constant(c));
        }
        let (a1, b1) = spec.shapes(true);
        let (a0, b0) = spec.shapes(false);
        Ok(ProxyDraw::Beta {
            given1: BetaSampler::new(a1, b1)?,
            given0: BetaSampler::new(a0, b0)?,
        })
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, z: bool, rng: &mut R) -> f64 {
        match self {
            ProxyDraw::Constant(c) => *c,
            ProxyDraw::Beta { given1, given0 } => {
                if z {
                    given1.sample(rng)
                } else {
                    given0.sample(rng)
                }
            }
        }
    }
}

/// Conditional and marginal moments of the proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyMoments {
    /// `E[gamma | Z = 1]`
    pub e1_gamma: f64,
    /// `E[gamma | Z = 0]`
    pub e0_gamma: f64,
    pub e1_gamma_sq: f64,
    pub e0_gamma_sq: f64,
    pub e_gamma: f64,
    pub e_gamma_sq: f64,
    pub var_gamma: f64,
}

fn beta_raw_moments(alpha: f64, beta: f64) -> (f64, f64) {
    let s = alpha + beta;
    (alpha / s, alpha * (alpha + 1.0) / (s * (s + 1.0)))
}

pub fn proxy_moments(spec: &ProxySpec, phi: f64) -> Result<ProxyMoments> {
    spec.validate()?;
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::domain(format!("phi must lie in (0, 1], got {phi}")));
    }
    let ((m1, s1), (m0, s0)) = match spec.constant {
        Some(c) => ((c, c * c), (c, c * c)),
        None => {
            let (a1, b1) = spec.shapes(true);
            let (a0, b0) = spec.shapes(false);
            (beta_raw_moments(a1, b1), beta_raw_moments(a0, b0))
        }
    };
    let e_gamma = phi * m1 + (1.0 - phi) * m0;
    let e_gamma_sq = phi * s1 + (1.0 - phi) * s0;
    Ok(ProxyMoments {
        e1_gamma: m1,
        e0_gamma: m0,
        e1_gamma_sq: s1,
        e0_gamma_sq: s0,
        e_gamma,
        e_gamma_sq,
        var_gamma: e_gamma_sq - e_gamma * e_gamma,
    })
}

/// Pitman efficiency of the weighted test relative to the naive test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    pub psi: f64,
    pub psi_sq: f64,
    /// `E[gamma | Z=1] / E[gamma]`
    pub bias_factor: f64,
    /// `1 + cv^2[gamma]`
    pub variance_factor: f64,
}

pub fn pitman_efficiency(spec: &ProxySpec, phi: f64) -> Result<EfficiencyReport> {
    let m = proxy_moments(spec, phi)?;
    if !(m.var_gamma > 1e-14 * m.e_gamma_sq) {
        return Err(Error::domain(format!(
            "proxy `{}` has no variance at phi = {phi}",
            spec.label
        )));
    }
    let psi_sq = m.e1_gamma * m.e1_gamma / m.e_gamma_sq;
    Ok(EfficiencyReport {
        psi: psi_sq.sqrt(),
        psi_sq,
        bias_factor: m.e1_gamma / m.e_gamma,
        variance_factor: 1.0 + m.var_gamma / (m.e_gamma * m.e_gamma),
    })
}

/// Closed-form moments of `(Y, gamma)` under the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeMoments {
    pub e_y: f64,
    pub var_y: f64,
    pub e_y_gamma: f64,
    pub var_y_gamma: f64,
    pub cov_y_gamma_gamma: f64,
}

pub fn outcome_moments(mu: f64, phi: f64, spec: &ProxySpec) -> Result<OutcomeMoments> {
    let m = proxy_moments(spec, phi)?;
    let mu2 = mu * mu;
    Ok(OutcomeMoments {
        e_y: mu * phi,
        var_y: 1.0 + mu2 * phi * (1.0 - phi),
        e_y_gamma: mu * phi * m.e1_gamma,
        var_y_gamma: (1.0 - phi) * m.e0_gamma_sq + (mu2 + 1.0) * phi * m.e1_gamma_sq
            - mu2 * phi * phi * m.e1_gamma * m.e1_gamma,
        cov_y_gamma_gamma: mu * phi * m.e1_gamma_sq - mu * phi * m.e1_gamma * m.e_gamma,
    })
}

fn check_power_args(h: f64, alpha: f64) -> Result<()> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("h must be finite and >= 0, got {h}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Limiting power of the naive test against `mu_n = h / sqrt(n)`.
pub fn asymptotic_power_naive(h: f64, phi: f64, alpha: f64) -> Result<f64> {
    check_power_args(h, alpha)?;
    let z = normal_quantile(1.0 - alpha)?;
    Ok(normal_sf(z - h * phi))
}

/// Limiting power of the weighted test; the naive shift scaled by `psi`.
pub fn asymptotic_power_weighted(h: f64, phi: f64, psi: f64, alpha: f64) -> Result<f64> {
    check_power_args(h, alpha)?;
    let z = normal_quantile(1.0 - alpha)?;
    Ok(normal_sf(z - h * phi * psi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn regimes_match_table() {
        let r = ProxySpec::regimes();
        let got: Vec<(&str, f64, f64)> = r.iter().map(|s| (s.label.as_str(), s.a, s.b)).collect();
        assert_eq!(
            got,
            vec![
                ("HVar", -0.9, -0.9),
                ("Unif", 0.0, 0.0),
                ("Pos1", 0.1, -0.1),
                ("Pos2", 2.0, -0.25),
                ("Neg1", -0.1, 0.1),
                ("Neg2", -0.25, 2.0),
            ]
        );
        assert_eq!(ProxySpec::by_label("pos2"), Some(ProxySpec::pos2()));
        assert_eq!(ProxySpec::by_label("nope"), None);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ProxySpec::new("x", -1.0, 0.0).is_err());
        assert!(ProxySpec::new("x", 0.0, -1.5).is_err());
        assert!(ProxySpec::constant("c", 1.5).is_err());
        assert!(ModelParams::new(0.0, 0.0, ProxySpec::unif()).is_err());
        assert!(ModelParams::new(0.0, 1.2, ProxySpec::unif()).is_err());
        assert!(ModelParams::new(10.5, 0.3, ProxySpec::unif()).is_err());
        assert!(ModelParams::new(10.0, 1.0, ProxySpec::unif()).is_ok());
        let p = ModelParams::new(1.0, 0.3, ProxySpec::unif()).unwrap();
        assert!(p.clone().with_positive_control(0.0).is_err());
        assert!(p.with_positive_control(-2.0).is_ok());
        let p = ModelParams::new(1.0, 0.3, ProxySpec::unif()).unwrap();
        assert!(generate_dataset(&p, 0, &RngStream::new(0)).is_err());
    }

    #[test]
    fn proxy_moment_examples() {
        for phi in [0.1, 0.3, 0.9, 1.0] {
            let m = proxy_moments(&ProxySpec::unif(), phi).unwrap();
            assert!(close(m.e1_gamma, 0.5, 1e-15));
            assert!(close(m.e_gamma_sq, 1.0 / 3.0, 1e-15));
        }
        let m = proxy_moments(&ProxySpec::hvar(), 0.3).unwrap();
        assert!(close(m.e1_gamma, 0.5, 1e-15) && close(m.e0_gamma, 0.5, 1e-15));
        // Beta(0.1, 0.1): 0.1 * 1.1 / (0.2 * 1.2)
        assert!(close(m.e_gamma_sq, 0.458_333_333_333_333_3, 1e-12));
        let m = proxy_moments(&ProxySpec::pos1(), 0.3).unwrap();
        assert!(close(m.e1_gamma, 0.55, 1e-15) && close(m.e0_gamma, 0.45, 1e-15));
    }

    #[test]
    fn pitman_examples() {
        for phi in [0.05, 0.3, 0.7] {
            let r = pitman_efficiency(&ProxySpec::unif(), phi).unwrap();
            assert!(close(r.psi_sq, 0.75, 1e-12));
            assert!(close(r.psi, 0.866_025_403_784_438_6, 1e-12));
            let r = pitman_efficiency(&ProxySpec::hvar(), phi).unwrap();
            assert!(close(r.psi, 0.738_548_945_875_996_4, 1e-12));
            assert!(r.psi_sq < 1.0);
        }
        // mpmath reference values
        let r = pitman_efficiency(&ProxySpec::pos2(), 0.3).unwrap();
        assert!(close(r.psi_sq, 2.522_821_576_763_485_5, 1e-12));
        let r = pitman_efficiency(&ProxySpec::pos1(), 0.3).unwrap();
        assert!(close(r.psi_sq, 0.960_317_460_317_460_3, 1e-12));
        assert!(pitman_efficiency(&ProxySpec::constant("c", 0.4).unwrap(), 0.3).is_err());
    }

    #[test]
    fn pitman_factorizations_agree() {
        let mut phi = 0.02;
        while phi <= 1.0 {
            for spec in ProxySpec::regimes() {
                let r = pitman_efficiency(&spec, phi).unwrap();
                let other = r.bias_factor * r.bias_factor / r.variance_factor;
                assert!((r.psi_sq - other).abs() <= 1e-12 * r.psi_sq.max(1.0), "{} {phi}", spec.label);
                assert!(close(r.psi * r.psi, r.psi_sq, 1e-12));
            }
            phi += 0.02;
        }
    }

    #[test]
    fn independent_proxies_never_beat_naive() {
        for a in [-0.95, -0.9, -0.5, 0.0, 0.5, 2.0, 10.0] {
            let spec = ProxySpec::new("sym", a, a).unwrap();
            for k in 1..=50 {
                let phi = k as f64 / 50.0;
                assert!(pitman_efficiency(&spec, phi).unwrap().psi_sq <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn efficiency_falls_as_phi_rises_for_positive_proxies() {
        for spec in [ProxySpec::pos1(), ProxySpec::pos2()] {
            let m = proxy_moments(&spec, 0.5).unwrap();
            assert!(m.e0_gamma_sq < m.e1_gamma_sq);
            let mut prev = f64::INFINITY;
            for k in 1..100 {
                let psi_sq = pitman_efficiency(&spec, k as f64 / 100.0).unwrap().psi_sq;
                assert!(psi_sq <= prev + 1e-15);
                prev = psi_sq;
            }
        }
    }

    #[test]
    fn power_examples() {
        assert!(close(asymptotic_power_naive(0.0, 0.3, 0.05).unwrap(), 0.05, 1e-12));
        assert!(close(asymptotic_power_naive(0.0, 0.3, 1e-4).unwrap(), 1e-4, 1e-15));
        assert!(close(asymptotic_power_weighted(0.0, 0.3, 0.7, 0.05).unwrap(), 0.05, 1e-12));
        // mpmath: 1 - Phi(z_.95 - 2.5) = 0.80376494001549
        assert!(close(asymptotic_power_naive(5.0, 0.5, 0.05).unwrap(), 0.803_764_940_015_494, 1e-10));
        // mpmath: 1 - Phi(z_.95 - 2.5 sqrt(.75)) = 0.69854135094446
        let psi = 0.75f64.sqrt();
        assert!(close(asymptotic_power_weighted(5.0, 0.5, psi, 0.05).unwrap(), 0.698_541_350_944_46, 1e-10));
        let mut prev = 0.0;
        for k in 0..100 {
            let p = asymptotic_power_naive(k as f64 * 0.1, 0.4, 0.01).unwrap();
            assert!(p > prev);
            prev = p;
        }
        for h in [0.0, 1.0, 4.0] {
            assert_eq!(
                asymptotic_power_weighted(h, 0.3, 1.0, 0.05).unwrap(),
                asymptotic_power_naive(h, 0.3, 0.05).unwrap()
            );
        }
        assert!(asymptotic_power_naive(-1.0, 0.3, 0.05).is_err());
        assert!(asymptotic_power_naive(1.0, 0.3, 1.0).is_err());
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let bad = "y,gamma,y_prime,z\n1.0,0.5,,\n2.0,1.5,,\n";
        let err = Dataset::read_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("gamma"), "{err}");
        let bad = "y,gamma,y_prime,z\n1.0,0.5,,\nabc,0.5,,\n";
        let err = Dataset::read_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("`y`"), "{err}");
        let bad = "y,gamma,y_prime,z\n1.0,0.5,2.0,\n1.0,0.5,,\n";
        let err = Dataset::read_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("y_prime"), "{err}");
        let bad = "y,gamma,extra\n1.0,0.5,3\n";
        assert!(Dataset::read_csv(bad.as_bytes()).is_err());
        let minimal = "y,gamma\n1.5,0.25\n-2,1\n";
        let d = Dataset::read_csv(minimal.as_bytes()).unwrap();
        assert_eq!(d.y(), &[1.5, -2.0]);
        assert!(d.y_prime().is_none() && d.z().is_none());
    }
}
