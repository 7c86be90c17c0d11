//! Independent per-objective Gaussian-process regression with an RBF kernel.
//!
//! Each objective gets its own GP with a zero or constant empirical prior
//! mean. Amplitude, lengthscale and (optionally) noise variance are chosen by
//! maximizing the log marginal likelihood with a multi-start coordinate search
//! in log space. Fitted models are immutable; refitting produces a new value.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::stats::{self, squared_distance};
use crate::{Error, Result};

/// Hyper-parameters of `k(x, x') = amplitude * exp(-‖x - x'‖² / lengthscale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub amplitude: f64,
    pub lengthscale: f64,
}

impl KernelConfig {
    pub fn new(amplitude: f64, lengthscale: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid(format!("kernel amplitude must be positive, got {amplitude}")));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::invalid(format!("kernel lengthscale must be positive, got {lengthscale}")));
        }
        Ok(Self { amplitude, lengthscale })
    }

    /// Kernel value without a dimension check.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.amplitude * (-squared_distance(x, y) / self.lengthscale).exp()
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { amplitude: 1.0, lengthscale: 1.0 }
    }
}

pub fn rbf_kernel(x: &[f64], x2: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::dim_mismatch("rbf_kernel", x.len(), x2.len()));
    }
    Ok(cfg.eval(x, x2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveObservation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Fixed(f64),
    Fitted,
}

/// Constant prior mean of each objective's GP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    #[default]
    Zero,
    /// Mean of the training targets.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFitOptions {
    pub noise: NoiseMode,
    #[serde(default)]
    pub prior_mean: PriorMean,
    pub amplitude_bounds: (f64, f64),
    pub lengthscale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Number of best grid points that seed a local search.
    pub restarts: usize,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            noise: NoiseMode::Fitted,
            prior_mean: PriorMean::Zero,
            amplitude_bounds: (1e-3, 1e3),
            lengthscale_bounds: (1e-3, 1e3),
            noise_bounds: (1e-8, 1.0),
            restarts: 2,
        }
    }
}

const JITTER_REL: f64 = 1e-8;
const JITTER_MAX_REL: f64 = 1e-4;

/// A fitted single-output GP.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    mean: f64,
    kernel: KernelConfig,
    noise: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_ml: f64,
}

impl GpModel {
    /// Conditions a GP with fixed hyper-parameters on `(inputs, targets)`.
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, kernel: KernelConfig, noise: f64) -> Result<Self> {
        Self::with_mean(inputs, targets, 0.0, kernel, noise)
    }

    /// Like [`GpModel::new`] with constant prior mean `mean`.
    pub fn with_mean(inputs: Vec<Vec<f64>>, targets: Vec<f64>, mean: f64, kernel: KernelConfig, noise: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid(format!("GP prior mean must be finite, got {mean}")));
        }
        if inputs.is_empty() {
            return Err(Error::invalid("GP needs at least one observation"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::dim_mismatch("GP targets", inputs.len(), targets.len()));
        }
        let d = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
            return Err(Error::dim_mismatch("GP input", d, bad.len()));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be non-negative, got {noise}")));
        }
        let n = inputs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| kernel.eval(&inputs[i], &inputs[j]));
        let (chol, jitter) = cholesky_with_jitter(&gram, noise, kernel.amplitude)?;
        let y = DVector::from_iterator(n, targets.iter().map(|t| t - mean));
        let alpha = chol.solve(&y);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let log_ml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * stats::TWO_PI.ln();
        Ok(Self { inputs, targets, mean, kernel, noise, jitter, chol, alpha, log_ml })
    }

    pub fn kernel(&self) -> KernelConfig {
        self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_ml
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.inputs.len();
        let kstar = DVector::from_fn(n, |i, _| self.kernel.eval(x, &self.inputs[i]));
        let mean = self.mean + kstar.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&kstar).unwrap_or_else(|| DVector::zeros(n));
        let var = (self.kernel.amplitude - v.norm_squared()).max(0.0);
        (mean, var)
    }
}

fn cholesky_with_jitter(gram: &DMatrix<f64>, noise: f64, amplitude: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_REL * amplitude;
    let max = JITTER_MAX_REL * amplitude;
    loop {
        let mut k = gram.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise + jitter;
        }
        if let Some(c) = Cholesky::new(k) {
            return Ok((c, jitter));
        }
        if jitter >= max {
            return Err(Error::Numerical(format!(
                "kernel matrix not positive definite with jitter {jitter:e}"
            )));
        }
        jitter = (jitter * 2.0).min(max);
    }
}

/// Fits a GP to objective `objective` of `data` by maximizing the log marginal
/// likelihood over the bounded hyper-parameter box.
pub fn fit_gp(data: &[ObjectiveObservation], objective: usize, opts: &GpFitOptions) -> Result<GpModel> {
    if data.is_empty() {
        return Err(Error::invalid("fit_gp needs at least one observation"));
    }
    let l = data[0].y.len();
    if objective >= l {
        return Err(Error::invalid(format!("objective index {objective} out of range for {l} objectives")));
    }
    if let Some(bad) = data.iter().find(|o| o.y.len() != l) {
        return Err(Error::dim_mismatch("observation outputs", l, bad.y.len()));
    }
    let inputs: Vec<Vec<f64>> = data.iter().map(|o| o.x.clone()).collect();
    let targets: Vec<f64> = data.iter().map(|o| o.y[objective]).collect();
    fit_targets(inputs, targets, opts)
}

fn fit_targets(inputs: Vec<Vec<f64>>, targets: Vec<f64>, opts: &GpFitOptions) -> Result<GpModel> {
    let lo = [opts.amplitude_bounds.0.ln(), opts.lengthscale_bounds.0.ln(), opts.noise_bounds.0.ln()];
    let hi = [opts.amplitude_bounds.1.ln(), opts.lengthscale_bounds.1.ln(), opts.noise_bounds.1.ln()];
    let fit_noise = matches!(opts.noise, NoiseMode::Fitted);
    let mean = match opts.prior_mean {
        PriorMean::Zero => 0.0,
        PriorMean::Empirical => stats::mean(&targets),
    };
    let fixed_noise = match opts.noise {
        NoiseMode::Fixed(v) => v,
        NoiseMode::Fitted => 0.0,
    };

    let objective = |theta: &[f64; 3]| -> f64 {
        let kernel = KernelConfig { amplitude: theta[0].exp(), lengthscale: theta[1].exp() };
        let noise = if fit_noise { theta[2].exp() } else { fixed_noise };
        match GpModel::with_mean(inputs.clone(), targets.clone(), mean, kernel, noise) {
            Ok(m) if m.log_ml.is_finite() => m.log_ml,
            _ => f64::NEG_INFINITY,
        }
    };

    let clamp = |v: f64, k: usize| v.clamp(lo[k], hi[k]);
    let amp_grid = [0.01f64, 0.1, 1.0, 10.0];
    let len_grid = [0.01f64, 0.1, 1.0, 10.0];
    let noise_grid: &[f64] = if fit_noise { &[1e-6, 1e-3, 1e-1] } else { &[1.0] };

    let mut probes: Vec<([f64; 3], f64)> = Vec::new();
    for &a in &amp_grid {
        for &ls in &len_grid {
            for &nz in noise_grid {
                let theta = [clamp(a.ln(), 0), clamp(ls.ln(), 1), clamp(nz.ln(), 2)];
                probes.push((theta, objective(&theta)));
            }
        }
    }
    probes.sort_by(|a, b| b.1.total_cmp(&a.1));

    let dims = if fit_noise { 3 } else { 2 };
    let mut best = probes[0];
    for start in probes.iter().take(opts.restarts.max(1)) {
        let (mut theta, mut value) = *start;
        let mut step = 1.0;
        while step > 1e-3 {
            let mut improved = false;
            for k in 0..dims {
                for dir in [1.0, -1.0] {
                    let mut cand = theta;
                    cand[k] = clamp(cand[k] + dir * step, k);
                    if cand[k] == theta[k] {
                        continue;
                    }
                    let v = objective(&cand);
                    if v > value {
                        theta = cand;
                        value = v;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if value > best.1 {
            best = (theta, value);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Numerical("marginal likelihood is not finite at any probed hyper-parameter".into()));
    }
    // exp(ln b) can land one ulp outside the box
    let kernel = KernelConfig {
        amplitude: best.0[0].exp().clamp(opts.amplitude_bounds.0, opts.amplitude_bounds.1),
        lengthscale: best.0[1].exp().clamp(opts.lengthscale_bounds.0, opts.lengthscale_bounds.1),
    };
    let noise = if fit_noise { best.0[2].exp().clamp(opts.noise_bounds.0, opts.noise_bounds.1) } else { fixed_noise };
    GpModel::with_mean(inputs, targets, mean, kernel, noise)
}

/// Independent GPs, one per objective.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    models: Vec<GpModel>,
}

impl GpPosterior {
    pub fn from_models(models: Vec<GpModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::invalid("GpPosterior needs at least one objective"));
        }
        Ok(Self { models })
    }

    /// Fits every objective of `data` independently.
    pub fn fit(data: &[ObjectiveObservation], opts: &GpFitOptions) -> Result<Self> {
        let l = data.first().map(|o| o.y.len()).ok_or_else(|| Error::invalid("no observations"))?;
        let models = (0..l).map(|k| fit_gp(data, k, opts)).collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn n_objectives(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    /// Per-objective posterior means and standard deviations at `x`.
    pub fn predict(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.models
            .iter()
            .map(|m| {
                let (mu, var) = m.predict(x);
                (mu, var.sqrt())
            })
            .unzip()
    }
}

/// Draws `n` objective vectors from the independent posterior marginals at `x`.
pub fn sample_posterior(post: &GpPosterior, x: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let (mean, std) = post.predict(x);
    let mut rng = stats::rng_from(seed, 0x6770);
    Ok(sample_independent(&mean, &std, n, &mut rng))
}

/// `n` draws from `N(mean, diag(std²))`.
pub fn sample_independent<R: Rng + ?Sized>(mean: &[f64], std: &[f64], n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            mean.iter()
                .zip(std)
                .map(|(m, s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s * z
                })
                .collect()
        })
        .collect()
}
