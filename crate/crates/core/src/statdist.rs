//! Random substreams and the handful of distributions the tests are built on.
//!
//! Every random draw in the crate comes from an [`RngStream`]: a root seed plus a
//! path of indices (for example `[cell, rep, purpose]`). The path is hashed into a
//! ChaCha8 key, so a stream's output depends only on its identity and never on
//! which thread happens to consume it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use sha2::{Digest, Sha256};
use libm::erfc;

use crate::error::{Error, Result};

/// Generator handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

const STREAM_DOMAIN: &[u8] = b"noisy-proxy/rng-stream/v1";

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Identity of a deterministic random substream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        RngStream {
            root_seed,
            path: Vec::new(),
        }
    }

    pub fn with_path(root_seed: u64, path: &[u64]) -> Self {
        RngStream {
            root_seed,
            path: path.to_vec(),
        }
    }

    /// Substream one level below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        RngStream {
            root_seed: self.root_seed,
            path,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update(self.root_seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for index in &self.path {
            hasher.update(index.to_le_bytes());
        }
        let mut key = [0u8; 32];
        key.copy_from_slice(&hasher.finalize());
        ChaCha8Rng::from_seed(key)
    }
}

/// Density of N(mean, 1) at `y`.
#[inline]
pub fn normal_pdf(y: f64, mean: f64) -> f64 {
    let d = y - mean;
    FRAC_1_SQRT_2PI * (-0.5 * d * d).exp()
}

/// Log density of N(mean, 1) at `y`.
#[inline]
pub fn normal_ln_pdf(y: f64, mean: f64) -> f64 {
    let d = y - mean;
    -0.5 * d * d - LN_SQRT_2PI
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal survival function, `1 - normal_cdf(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Inverse of the standard normal distribution function.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by one
/// Newton step on the lower-tail probability, which brings the result to
/// within a few ulps across the whole open interval.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    if p > 0.5 {
        // 1 - p is exact here.
        return Ok(-lower_tail_quantile(1.0 - p));
    }
    Ok(lower_tail_quantile(p))
}

fn lower_tail_quantile(p: f64) -> f64 {
    let x = acklam(p);
    let err = normal_cdf(x) - p;
    x - err / normal_pdf(x, 0.0)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `ln(e^a + e^b)` with `-inf` treated as an absent term.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Beta(alpha, beta) sampler valid for every pair of positive shapes.
///
/// Thin wrapper over `rand_distr::Beta` (Cheng's BB/BC algorithms), which
/// covers the shapes below one produced by proxy offsets in (-1, 0).
#[derive(Debug, Clone, Copy)]
pub struct BetaSampler {
    inner: Beta<f64>,
}

impl BetaSampler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::domain(format!(
                "beta shapes must be positive and finite, got ({alpha}, {beta})"
            )));
        }
        let inner = Beta::new(alpha, beta)
            .map_err(|e| Error::domain(format!("beta({alpha}, {beta}): {e}")))?;
        Ok(BetaSampler { inner })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inner.sample(rng)
    }
}

/// One draw from Beta(alpha, beta).
pub fn beta_sample<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    Ok(BetaSampler::new(alpha, beta)?.sample(rng))
}

/// One Bernoulli(p) draw.
#[inline]
pub fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}
