//! Scalar numerics shared by the models: standard-normal functions evaluated
//! in log space, entropies, adaptive quadrature and deterministic seeding.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `ln(1e-300)`: floor applied to log-probabilities in likelihood sums.
pub const LOG_PROB_FLOOR: f64 = -690.775_527_898_213_7;
/// `ln(1 - 1e-16)`.
pub const LOG_PROB_CEIL: f64 = -1.000_000_000_000_000_1e-16;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, accurate in both tails. Below -20 an asymptotic series replaces
/// the direct evaluation, which would underflow near -38.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 5.0 {
        return (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p();
    }
    if x > -20.0 {
        return norm_cdf(x).ln();
    }
    let x2 = x * x;
    let inv = 1.0 / x2;
    // 1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸
    let series = 1.0 - inv * (1.0 - inv * (3.0 - inv * (15.0 - inv * 105.0)));
    -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// `ln Φ(x)` clamped to `[ln 1e-300, ln(1 - 1e-16)]` for use in likelihood sums.
#[inline]
pub fn log_norm_cdf_clamped(x: f64) -> f64 {
    log_norm_cdf(x).clamp(LOG_PROB_FLOOR, LOG_PROB_CEIL)
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, stable for large negative `x`.
#[inline]
pub fn mills_ratio(x: f64) -> f64 {
    (log_norm_pdf(x) - log_norm_cdf(x)).exp()
}

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Shannon entropy in nats of a discrete distribution.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlogx(v)).sum::<f64>()
}

/// Entropy of a Bernoulli(p) variable in nats.
#[inline]
pub fn binary_entropy(p: f64) -> f64 {
    -(xlogx(p) + xlogx(1.0 - p))
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// The interval is first cut into `panels` equal pieces so that narrow peaks
/// are not missed by the initial five-point estimate.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut breaks: Vec<f64> = (0..panels).map(|k| a + width * k as f64).collect();
    breaks.push(b);
    adaptive_simpson_panels(f, &breaks, tol)
}

/// Adaptive Simpson quadrature over consecutive panels delimited by the
/// sorted `breaks`. Each panel refines until the Richardson error estimate
/// falls below its length-proportional share of `tol`.
pub fn adaptive_simpson_panels<F>(f: F, breaks: &[f64], tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if breaks.len() < 2 {
        return 0.0;
    }
    let span = breaks[breaks.len() - 1] - breaks[0];
    if span <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let panel_tol = tol * (hi - lo) / span;
        let flo = f(lo);
        let fhi = f(hi);
        let fmid = f(0.5 * (lo + hi));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_step(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, 40);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Mixes a base seed with a stream label into a new 64-bit seed (SplitMix64
/// finalizer), so that independent random streams can be derived from one
/// user-facing seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator used throughout the crate.
pub fn rng_from(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// `n` evenly spaced values covering `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) const TWO_PI: f64 = 2.0 * PI;
