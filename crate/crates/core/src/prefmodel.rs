//! Bayesian model of the decision maker's weight vector.
//!
//! Pairwise comparisons (PC) and improvement requests (IR) enter through
//! probit likelihoods; the prior is Dirichlet. The posterior is sampled with a
//! random-walk Metropolis chain on the softmax logits of `w` (last logit pinned
//! to zero), with the Jacobian of the transform folded into the target. For the
//! augmented scalarization the reference point is sampled jointly as a second
//! block with a Gaussian prior.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::stats::{self, log_norm_cdf_clamped};
use crate::utility::{AugmentedCsfUtility, CsfUtility, UtilityModel, WeightVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcRecord {
    pub preferred: Vec<f64>,
    pub other: Vec<f64>,
}

/// The decision maker asked for objective `dim` (zero-based) to be improved at `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrRecord {
    pub f: Vec<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    #[serde(default)]
    pub pc: Vec<PcRecord>,
    #[serde(default)]
    pub ir: Vec<IrRecord>,
}

impl PreferenceDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pc.len() + self.ir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pc.is_empty() && self.ir.is_empty()
    }

    /// Checks that every record lives in `l`-dimensional objective space.
    pub fn validate(&self, l: usize) -> Result<()> {
        for r in &self.pc {
            if r.preferred.len() != l || r.other.len() != l {
                return Err(Error::dim_mismatch("PC record", l, r.preferred.len().max(r.other.len())));
            }
        }
        for r in &self.ir {
            if r.f.len() != l {
                return Err(Error::dim_mismatch("IR record", l, r.f.len()));
            }
            if r.dim >= l {
                return Err(Error::invalid(format!("IR dimension {} out of range for {l} objectives", r.dim)));
            }
        }
        Ok(())
    }
}

/// Standard deviations of the PC utility noise and IR gradient noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_pc: f64,
    pub sigma_ir: f64,
}

impl NoiseConfig {
    pub fn new(sigma_pc: f64, sigma_ir: f64) -> Result<Self> {
        if !(sigma_pc > 0.0 && sigma_ir > 0.0) {
            return Err(Error::invalid("noise scales must be positive"));
        }
        Ok(Self { sigma_pc, sigma_ir })
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_pc: 0.1, sigma_ir: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirichletPrior {
    pub alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("Dirichlet prior needs at least one concentration"));
        }
        if alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::invalid("Dirichlet concentrations must be positive"));
        }
        Ok(Self { alpha })
    }

    /// The default `(2, …, 2)` prior.
    pub fn symmetric(l: usize) -> Self {
        Self { alpha: vec![2.0; l] }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Log density at `w`; `-∞` off the open simplex.
    pub fn log_density(&self, w: &[f64]) -> f64 {
        if w.len() != self.alpha.len() || w.iter().any(|v| !(*v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > WeightVector::SUM_TOLERANCE {
            return f64::NEG_INFINITY;
        }
        let a0: f64 = self.alpha.iter().sum();
        let log_norm = libm::lgamma(a0) - self.alpha.iter().map(|a| libm::lgamma(*a)).sum::<f64>();
        log_norm + self.alpha.iter().zip(w).map(|(a, x)| (a - 1.0) * x.ln()).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector {
        loop {
            let g: Vec<f64> = self
                .alpha
                .iter()
                .map(|&a| rand_distr::Gamma::new(a, 1.0).map(|d| rng.sample(d)).unwrap_or(0.0))
                .collect();
            if let Ok(w) = WeightVector::normalized(&g) {
                return w;
            }
        }
    }
}

/// Which parametric utility the weight posterior belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityFamily {
    Csf,
    /// Augmented scalarization with an unknown reference point drawn from
    /// `N(0, reference_prior_var · I)`.
    AugmentedCsf { rho: f64, reference_prior_var: f64 },
}

impl UtilityFamily {
    pub fn augmented_default() -> Self {
        UtilityFamily::AugmentedCsf { rho: AugmentedCsfUtility::DEFAULT_RHO, reference_prior_var: 0.01 }
    }

    pub fn has_reference(&self) -> bool {
        matches!(self, UtilityFamily::AugmentedCsf { .. })
    }

    /// Builds the utility for one parameter draw.
    pub fn utility(&self, w: &WeightVector, reference: Option<&[f64]>) -> ParametricUtility {
        match *self {
            UtilityFamily::Csf => ParametricUtility::Csf(CsfUtility::new(w.clone())),
            UtilityFamily::AugmentedCsf { rho, .. } => {
                let r = reference.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; w.len()]);
                ParametricUtility::Augmented(AugmentedCsfUtility { weights: w.clone(), reference: r, rho })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParametricUtility {
    Csf(CsfUtility),
    Augmented(AugmentedCsfUtility),
}

impl ParametricUtility {
    pub fn weights(&self) -> &WeightVector {
        match self {
            ParametricUtility::Csf(u) => &u.weights,
            ParametricUtility::Augmented(u) => &u.weights,
        }
    }
}

impl UtilityModel for ParametricUtility {
    fn n_objectives(&self) -> usize {
        self.weights().len()
    }

    #[inline]
    fn value(&self, f: &[f64]) -> f64 {
        match self {
            ParametricUtility::Csf(u) => u.value(f),
            ParametricUtility::Augmented(u) => u.value(f),
        }
    }

    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        match self {
            ParametricUtility::Csf(u) => u.gradient(f),
            ParametricUtility::Augmented(u) => u.gradient(f),
        }
    }
}

/// `Σ_i ln Φ((U(f_i) - U(f'_i)) / (√2 σ_PC))`.
pub fn pc_log_likelihood<U: UtilityModel + ?Sized>(data: &PreferenceDataset, u: &U, noise: &NoiseConfig) -> f64 {
    let scale = 1.0 / (std::f64::consts::SQRT_2 * noise.sigma_pc);
    data.pc
        .iter()
        .map(|r| log_norm_cdf_clamped((u.value(&r.preferred) - u.value(&r.other)) * scale))
        .sum()
}

/// Each IR record expands to `L - 1` relations `dim ≻ ℓ'`, each contributing
/// `ln Φ((g_dim(f) - g_ℓ'(f)) / σ_IR)`.
pub fn ir_log_likelihood<U: UtilityModel + ?Sized>(data: &PreferenceDataset, u: &U, noise: &NoiseConfig) -> f64 {
    let inv = 1.0 / noise.sigma_ir;
    let mut total = 0.0;
    for r in &data.ir {
        let g = u.gradient(&r.f);
        let gk = g[r.dim];
        for (l, gl) in g.iter().enumerate() {
            if l != r.dim {
                total += log_norm_cdf_clamped((gk - gl) * inv);
            }
        }
    }
    total
}

/// Log of the unnormalized posterior at `w` (and the reference point for the
/// augmented family). Returns `-∞` when `w` is not strictly inside the simplex.
pub fn log_posterior_unnorm(
    w: &[f64],
    reference: Option<&[f64]>,
    prior: &DirichletPrior,
    data: &PreferenceDataset,
    noise: &NoiseConfig,
    family: &UtilityFamily,
) -> f64 {
    let log_prior = prior.log_density(w);
    if !log_prior.is_finite() {
        return f64::NEG_INFINITY;
    }
    let Ok(weights) = WeightVector::new(w.to_vec()) else {
        return f64::NEG_INFINITY;
    };
    let mut total = log_prior;
    if let UtilityFamily::AugmentedCsf { reference_prior_var, .. } = *family {
        let Some(r) = reference else {
            return f64::NEG_INFINITY;
        };
        total += r
            .iter()
            .map(|v| -0.5 * v * v / reference_prior_var - 0.5 * (stats::TWO_PI * reference_prior_var).ln())
            .sum::<f64>();
    }
    let u = family.utility(&weights, reference);
    total += pc_log_likelihood(data, &u, noise);
    if data.ir.is_empty() {
        return total;
    }
    // IR records carry no information about the reference point, so their
    // gradients are taken with the reference at the origin.
    let u_ir = if family.has_reference() { family.utility(&weights, None) } else { u };
    total + ir_log_likelihood(data, &u_ir, noise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub initial_step: f64,
    /// Prior draws screened at the start of each chain; the chain starts from
    /// the best of these and the warm state.
    #[serde(default = "default_restart_draws")]
    pub restart_draws: usize,
    /// Probability of an independence proposal drawn from the prior, which
    /// lets the chain move between separated modes.
    #[serde(default = "default_independence_prob")]
    pub independence_prob: f64,
}

fn default_restart_draws() -> usize {
    256
}

fn default_independence_prob() -> f64 {
    0.1
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            burn_in: 2000,
            thin: 5,
            target_accept: 0.3,
            initial_step: 0.5,
            restart_draws: default_restart_draws(),
            independence_prob: default_independence_prob(),
        }
    }
}

/// End state of a chain, reused to warm-start the next refresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub logits: Vec<f64>,
    pub reference: Vec<f64>,
    pub log_step: f64,
    pub log_step_reference: f64,
    /// Logits of evenly spaced samples from the chain, used as restart
    /// points and mixture centres by the next refresh. New data can cut the
    /// posterior sharply (IR answers under the CSF are near step functions in
    /// `w`), and a single warm state may then sit on the wrong side.
    #[serde(default)]
    pub anchors: Vec<Vec<f64>>,
}

/// Number of anchors kept in [`ChainState`].
pub const CHAIN_ANCHORS: usize = 64;

/// Log density of the equal-weight Gaussian mixture with centres `anchors`
/// and common scale `width`, up to a constant.
fn anchor_mixture_log_density(x: &[f64], anchors: &[Vec<f64>], width: f64) -> f64 {
    let terms: Vec<f64> = anchors
        .iter()
        .map(|a| -0.5 * stats::squared_distance(x, a) / (width * width))
        .collect();
    stats::logsumexp(&terms)
}

/// Draws from `p(w | D_pre)`; every sample satisfies the simplex invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub family: UtilityFamily,
    pub weights: Vec<WeightVector>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<Vec<f64>>,
    pub seed: u64,
    pub acceptance_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub chain: ChainState,
}

impl PosteriorSamples {
    /// Wraps a fixed set of weight vectors (for instance, a known truth).
    pub fn from_weights(weights: Vec<WeightVector>) -> Result<Self> {
        let first = weights.first().ok_or_else(|| Error::invalid("at least one sample is required"))?;
        let l = first.len();
        Ok(Self {
            family: UtilityFamily::Csf,
            chain: ChainState { logits: vec![0.0; l - 1], reference: Vec::new(), log_step: 0.0, log_step_reference: 0.0, anchors: Vec::new() },
            weights,
            references: Vec::new(),
            seed: 0,
            acceptance_rate: 1.0,
            warning: None,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n_objectives(&self) -> usize {
        self.weights[0].len()
    }

    pub fn utility(&self, i: usize) -> ParametricUtility {
        self.family.utility(&self.weights[i], self.references.get(i).map(Vec::as_slice))
    }

    pub fn utilities(&self) -> Vec<ParametricUtility> {
        (0..self.len()).map(|i| self.utility(i)).collect()
    }

    /// At most `k` utilities taken at evenly spaced positions of the chain.
    pub fn subsample(&self, k: usize) -> Vec<ParametricUtility> {
        let n = self.len();
        if k == 0 || k >= n {
            return self.utilities();
        }
        (0..k).map(|j| self.utility(j * n / k)).collect()
    }

    pub fn mean_weights(&self) -> Vec<f64> {
        let l = self.n_objectives();
        let mut m = vec![0.0; l];
        for w in &self.weights {
            for (a, b) in m.iter_mut().zip(w.as_slice()) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.len() as f64);
        m
    }

    /// Per-dimension empirical quantile `q ∈ [0, 1]` of the weights.
    pub fn weight_quantile(&self, q: f64) -> Vec<f64> {
        let l = self.n_objectives();
        (0..l)
            .map(|d| {
                let mut col: Vec<f64> = self.weights.iter().map(|w| w[d]).collect();
                col.sort_by(f64::total_cmp);
                let pos = (q.clamp(0.0, 1.0) * (col.len() - 1) as f64).round() as usize;
                col[pos]
            })
            .collect()
    }
}

fn softmax_last_pinned(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(0.0, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    w.push((-max).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

struct Target<'a> {
    prior: &'a DirichletPrior,
    data: &'a PreferenceDataset,
    noise: &'a NoiseConfig,
    family: &'a UtilityFamily,
}

impl Target<'_> {
    /// Log density in logit coordinates: posterior plus `Σ_ℓ ln w_ℓ`, the log
    /// Jacobian of the additive-logistic map.
    fn eval(&self, logits: &[f64], reference: &[f64]) -> f64 {
        let w = softmax_last_pinned(logits);
        if w.iter().any(|v| !(*v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        let r = self.family.has_reference().then_some(reference);
        let lp = log_posterior_unnorm(&w, r, self.prior, self.data, self.noise, self.family);
        lp + w.iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Log likelihood part of an `eval` value: the target minus the prior
    /// density in logit coordinates.
    fn likelihood_part(&self, logits: &[f64], value: f64) -> f64 {
        let w = softmax_last_pinned(logits);
        value - self.prior.log_density(&w) - w.iter().map(|v| v.ln()).sum::<f64>()
    }
}

fn logits_of(w: &WeightVector) -> Vec<f64> {
    let s = w.as_slice();
    let last = s[s.len() - 1].max(f64::MIN_POSITIVE).ln();
    s[..s.len() - 1].iter().map(|v| v.max(f64::MIN_POSITIVE).ln() - last).collect()
}

/// Samples `cfg.n_samples` weight vectors from the posterior with adaptive
/// random-walk Metropolis. Deterministic given `seed` and `warm`.
pub fn sample_weights(
    prior: &DirichletPrior,
    data: &PreferenceDataset,
    noise: &NoiseConfig,
    family: &UtilityFamily,
    cfg: &McmcConfig,
    seed: u64,
    warm: Option<&ChainState>,
) -> Result<PosteriorSamples> {
    let l = prior.dim();
    if l < 2 {
        return Err(Error::invalid("weight posterior needs at least two objectives"));
    }
    if cfg.n_samples == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    data.validate(l)?;
    let thin = cfg.thin.max(1);
    let with_ref = family.has_reference();
    let target = Target { prior, data, noise, family };
    let mut rng = stats::rng_from(seed, 0x4d434d43);

    let mut state = match warm {
        Some(c) if c.logits.len() == l - 1 && (!with_ref || c.reference.len() == l) => c.clone(),
        _ => ChainState {
            logits: vec![0.0; l - 1],
            reference: if with_ref { vec![0.0; l] } else { Vec::new() },
            log_step: cfg.initial_step.ln(),
            log_step_reference: (0.05f64).ln(),
            anchors: Vec::new(),
        },
    };
    let anchors: Vec<Vec<f64>> = std::mem::take(&mut state.anchors)
        .into_iter()
        .filter(|a| a.len() == l - 1 && a.iter().all(|v| v.is_finite()))
        .collect();
    // fixed for the whole chain so the mixture proposal has a fixed density
    let anchor_width = state.log_step.exp().clamp(0.01, 0.5);
    let mut current = target.eval(&state.logits, &state.reference);
    if !current.is_finite() {
        state.logits.iter_mut().for_each(|v| *v = 0.0);
        state.reference.iter_mut().for_each(|v| *v = 0.0);
        current = target.eval(&state.logits, &state.reference);
    }
    for a in &anchors {
        let v = target.eval(a, &state.reference);
        if v > current {
            state.logits = a.clone();
            current = v;
        }
    }
    for _ in 0..cfg.restart_draws {
        let logits = logits_of(&prior.sample(&mut rng));
        let v = target.eval(&logits, &state.reference);
        if v > current {
            state.logits = logits;
            current = v;
        }
    }

    const WINDOW: usize = 50;
    let mut window_acc = [0usize; 2];
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let total = cfg.burn_in + cfg.n_samples * thin;
    let mut weights = Vec::with_capacity(cfg.n_samples);
    let mut kept_logits: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_samples);
    let mut references = Vec::new();

    for it in 0..total {
        let burning = it < cfg.burn_in;

        if cfg.independence_prob > 0.0 && rng.random::<f64>() < cfg.independence_prob {
            if anchors.is_empty() || rng.random::<bool>() {
                // prior proposal: the acceptance ratio is the likelihood ratio
                let prop = logits_of(&prior.sample(&mut rng));
                let cand = target.eval(&prop, &state.reference);
                let u: f64 = rng.random();
                if cand.is_finite()
                    && u.ln() < target.likelihood_part(&prop, cand) - target.likelihood_part(&state.logits, current)
                {
                    state.logits = prop;
                    current = cand;
                }
            } else {
                // proposal from a Gaussian mixture around the previous chain's samples
                let centre = &anchors[rng.random_range(0..anchors.len())];
                let prop: Vec<f64> = centre
                    .iter()
                    .map(|c| {
                        let z: f64 = rng.sample(StandardNormal);
                        c + anchor_width * z
                    })
                    .collect();
                let cand = target.eval(&prop, &state.reference);
                let u: f64 = rng.random();
                let log_q_ratio = anchor_mixture_log_density(&state.logits, &anchors, anchor_width)
                    - anchor_mixture_log_density(&prop, &anchors, anchor_width);
                if cand.is_finite() && u.ln() < cand - current + log_q_ratio {
                    state.logits = prop;
                    current = cand;
                }
            }
        }

        // block 1: logits
        let step = state.log_step.exp();
        let prop: Vec<f64> = state
            .logits
            .iter()
            .map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v + step * z
            })
            .collect();
        let cand = target.eval(&prop, &state.reference);
        let u: f64 = rng.random();
        if cand.is_finite() && u.ln() < cand - current {
            state.logits = prop;
            current = cand;
            window_acc[0] += 1;
            if !burning {
                accepted += 1;
            }
        }
        if !burning {
            proposed += 1;
        }

        // block 2: reference point
        if with_ref {
            let step = state.log_step_reference.exp();
            let prop: Vec<f64> = state
                .reference
                .iter()
                .map(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    v + step * z
                })
                .collect();
            let cand = target.eval(&state.logits, &prop);
            let u: f64 = rng.random();
            if cand.is_finite() && u.ln() < cand - current {
                state.reference = prop;
                current = cand;
                window_acc[1] += 1;
            }
        }

        if burning && (it + 1) % WINDOW == 0 {
            let rate = window_acc[0] as f64 / WINDOW as f64;
            state.log_step = (state.log_step + (rate - cfg.target_accept)).clamp(-12.0, 3.0);
            if with_ref {
                let rate = window_acc[1] as f64 / WINDOW as f64;
                state.log_step_reference = (state.log_step_reference + (rate - cfg.target_accept)).clamp(-12.0, 2.0);
            }
            window_acc = [0, 0];
        }

        if !burning && (it - cfg.burn_in + 1).is_multiple_of(thin) {
            let w = WeightVector::normalized(&softmax_last_pinned(&state.logits))?;
            weights.push(w);
            kept_logits.push(state.logits.clone());
            if with_ref {
                references.push(state.reference.clone());
            }
        }
    }

    let acceptance_rate = if proposed > 0 { accepted as f64 / proposed as f64 } else { 0.0 };
    let warning = (acceptance_rate < 0.01)
        .then(|| format!("MCMC acceptance rate {acceptance_rate:.4} is below 1% after adaptation"));
    if let Some(msg) = &warning {
        log::warn!("{msg}");
    }
    let stride = (kept_logits.len() / CHAIN_ANCHORS).max(1);
    state.anchors = kept_logits.into_iter().step_by(stride).take(CHAIN_ANCHORS).collect();
    Ok(PosteriorSamples { family: *family, weights, references, seed, acceptance_rate, warning, chain: state })
}

/// Mean Euclidean distance between the posterior samples and `w_true`.
pub fn w_error(samples: &PosteriorSamples, w_true: &WeightVector) -> Result<f64> {
    if samples.n_objectives() != w_true.len() {
        return Err(Error::dim_mismatch("w_error", samples.n_objectives(), w_true.len()));
    }
    let total: f64 = samples
        .weights
        .iter()
        .map(|w| stats::squared_distance(w.as_slice(), w_true.as_slice()).sqrt())
        .sum();
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    fn csf(v: &[f64]) -> CsfUtility {
        CsfUtility::new(wv(v))
    }

    #[test]
    fn pc_likelihood_examples() {
        let noise = NoiseConfig::new(0.1, 0.1).unwrap();
        let u = csf(&[0.5, 0.5]);
        let mut d = PreferenceDataset::new();
        assert_eq!(pc_log_likelihood(&d, &u, &noise), 0.0);
        d.pc.push(PcRecord { preferred: vec![0.3, 0.3], other: vec![0.3, 0.3] });
        assert_abs_diff_eq!(pc_log_likelihood(&d, &u, &noise), 0.5f64.ln(), epsilon = 1e-12);

        // U(f) - U(f') = √2 σ: U = 2 min(f), so shift f by √2·0.1/2.
        let delta = std::f64::consts::SQRT_2 * 0.1 / 2.0;
        let d = PreferenceDataset {
            pc: vec![PcRecord { preferred: vec![0.3 + delta, 0.9], other: vec![0.3, 0.9] }],
            ir: vec![],
        };
        assert_abs_diff_eq!(pc_log_likelihood(&d, &u, &noise), -0.172_753_779_023_450_3, epsilon = 1e-9);
    }

    #[test]
    fn ir_likelihood_examples() {
        let noise = NoiseConfig::new(0.1, 0.1).unwrap();
        let u = csf(&[0.5, 0.5]);
        let d = PreferenceDataset { pc: vec![], ir: vec![IrRecord { f: vec![0.4, 0.6], dim: 0 }] };
        assert!(ir_log_likelihood(&d, &u, &noise).abs() < 1e-15);

        // equal gradients: a constant utility has g = 0 everywhere
        struct Flat;
        impl UtilityModel for Flat {
            fn n_objectives(&self) -> usize {
                2
            }
            fn value(&self, _: &[f64]) -> f64 {
                0.0
            }
            fn gradient(&self, _: &[f64]) -> Vec<f64> {
                vec![0.0, 0.0]
            }
        }
        assert_abs_diff_eq!(ir_log_likelihood(&d, &Flat, &noise), 0.5f64.ln(), epsilon = 1e-12);

        // L = 3: inactive requested dim gives one informative term and one ln ½
        let u3 = csf(&[0.2, 0.3, 0.5]);
        let d3 = PreferenceDataset { pc: vec![], ir: vec![IrRecord { f: vec![0.9, 0.1, 0.9], dim: 2 }] };
        let expected = log_norm_cdf_clamped(-1.0 / 0.3 / 0.1) + 0.5f64.ln();
        assert_abs_diff_eq!(ir_log_likelihood(&d3, &u3, &noise), expected, epsilon = 1e-12);
    }

    #[test]
    fn posterior_examples() {
        let prior = DirichletPrior::symmetric(2);
        let noise = NoiseConfig::default();
        let empty = PreferenceDataset::new();
        let lp = log_posterior_unnorm(&[0.5, 0.5], None, &prior, &empty, &noise, &UtilityFamily::Csf);
        assert_abs_diff_eq!(lp, 1.5f64.ln(), epsilon = 1e-12);
        let a = log_posterior_unnorm(&[0.2, 0.8], None, &prior, &empty, &noise, &UtilityFamily::Csf);
        assert_abs_diff_eq!(lp - a, prior.log_density(&[0.5, 0.5]) - prior.log_density(&[0.2, 0.8]), epsilon = 1e-12);
        assert_eq!(
            log_posterior_unnorm(&[1.0, 0.0], None, &prior, &empty, &noise, &UtilityFamily::Csf),
            f64::NEG_INFINITY
        );

        let data = PreferenceDataset {
            pc: vec![PcRecord { preferred: vec![0.7, 0.2], other: vec![0.3, 0.4] }],
            ir: vec![IrRecord { f: vec![0.5, 0.1], dim: 1 }],
        };
        let w = [0.35, 0.65];
        let u = csf(&w);
        let sum = prior.log_density(&w) + pc_log_likelihood(&data, &u, &noise) + ir_log_likelihood(&data, &u, &noise);
        let lp = log_posterior_unnorm(&w, None, &prior, &data, &noise, &UtilityFamily::Csf);
        assert_abs_diff_eq!(lp, sum, epsilon = 1e-12);
    }

    #[test]
    fn pc_likelihood_swap_symmetry() {
        let noise = NoiseConfig::new(0.07, 0.1).unwrap();
        let u = csf(&[0.3, 0.7]);
        let f = vec![0.6, 0.2];
        let g = vec![0.1, 0.5];
        let fwd = PreferenceDataset { pc: vec![PcRecord { preferred: f.clone(), other: g.clone() }], ir: vec![] };
        let rev = PreferenceDataset { pc: vec![PcRecord { preferred: g, other: f }], ir: vec![] };
        let p = pc_log_likelihood(&fwd, &u, &noise).exp();
        let q = pc_log_likelihood(&rev, &u, &noise).exp();
        assert_abs_diff_eq!(p + q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn consistent_record_raises_posterior() {
        let prior = DirichletPrior::symmetric(2);
        let noise = NoiseConfig::default();
        let w = [0.7, 0.3];
        let u = csf(&w);
        let (a, b) = (vec![0.8, 0.3], vec![0.4, 0.5]);
        assert!(u.value(&a) > u.value(&b));
        let good = PreferenceDataset { pc: vec![PcRecord { preferred: a.clone(), other: b.clone() }], ir: vec![] };
        let bad = PreferenceDataset { pc: vec![PcRecord { preferred: b, other: a }], ir: vec![] };
        let lg = log_posterior_unnorm(&w, None, &prior, &good, &noise, &UtilityFamily::Csf);
        let lb = log_posterior_unnorm(&w, None, &prior, &bad, &noise, &UtilityFamily::Csf);
        assert!(lg > lb);
    }

    #[test]
    fn dataset_wire_format() {
        let d = PreferenceDataset {
            pc: vec![PcRecord { preferred: vec![0.5, 0.25], other: vec![0.125, 1.0] }],
            ir: vec![IrRecord { f: vec![0.5, 0.5], dim: 1 }],
        };
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"pc":[{"preferred":[0.5,0.25],"other":[0.125,1.0]}],"ir":[{"f":[0.5,0.5],"dim":1}]}"#);
        let back: PreferenceDataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        assert!(d.validate(2).is_ok());
        assert!(d.validate(3).is_err());
        let bad = PreferenceDataset { pc: vec![], ir: vec![IrRecord { f: vec![0.5, 0.5], dim: 2 }] };
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn prior_recovery_dirichlet_2_2() {
        let cfg = McmcConfig { n_samples: 20_000, ..Default::default() };
        let s = sample_weights(
            &DirichletPrior::symmetric(2),
            &PreferenceDataset::new(),
            &NoiseConfig::default(),
            &UtilityFamily::Csf,
            &cfg,
            11,
            None,
        )
        .unwrap();
        let w1: Vec<f64> = s.weights.iter().map(|w| w[0]).collect();
        assert!((stats::mean(&w1) - 0.5).abs() < 0.01);
        assert!((stats::sample_variance(&w1) - 0.05).abs() < 0.01);
        assert!(s.warning.is_none());
    }

    #[test]
    fn sampler_is_deterministic_and_inside_simplex() {
        let data = PreferenceDataset {
            pc: vec![PcRecord { preferred: vec![0.9, 0.1], other: vec![0.1, 0.9] }],
            ir: vec![IrRecord { f: vec![0.5, 0.5], dim: 0 }],
        };
        let cfg = McmcConfig { n_samples: 200, burn_in: 300, ..Default::default() };
        let run = |seed| {
            sample_weights(&DirichletPrior::symmetric(2), &data, &NoiseConfig::default(), &UtilityFamily::Csf, &cfg, seed, None)
                .unwrap()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a, b);
        assert_ne!(a.weights, run(6).weights);
        for w in &a.weights {
            assert!(w.as_slice().iter().all(|v| *v > 0.0));
            assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn augmented_family_samples_reference() {
        let family = UtilityFamily::augmented_default();
        let cfg = McmcConfig { n_samples: 100, burn_in: 200, ..Default::default() };
        let s = sample_weights(
            &DirichletPrior::symmetric(2),
            &PreferenceDataset::new(),
            &NoiseConfig::default(),
            &family,
            &cfg,
            1,
            None,
        )
        .unwrap();
        assert_eq!(s.references.len(), 100);
        assert!(matches!(s.utility(0), ParametricUtility::Augmented(_)));
    }

    #[test]
    fn w_error_examples() {
        let truth = wv(&[0.5, 0.5]);
        let same = PosteriorSamples::from_weights(vec![truth.clone(); 4]).unwrap();
        assert_eq!(w_error(&same, &truth).unwrap(), 0.0);
        let off = PosteriorSamples::from_weights(vec![wv(&[0.6, 0.4]); 3]).unwrap();
        assert_abs_diff_eq!(w_error(&off, &truth).unwrap(), 0.02f64.sqrt(), epsilon = 1e-12);
        let mixed = PosteriorSamples::from_weights(vec![wv(&[0.6, 0.4]), wv(&[0.1, 0.9]), truth.clone()]).unwrap();
        let mut rev = mixed.clone();
        rev.weights.reverse();
        assert_abs_diff_eq!(w_error(&mixed, &truth).unwrap(), w_error(&rev, &truth).unwrap(), epsilon = 1e-15);
        assert!(w_error(&same, &WeightVector::uniform(3)).is_err());
    }

    fn simulated_data(w_true: &[f64], n_pc: usize, n_ir: usize, noise: &NoiseConfig, seed: u64) -> PreferenceDataset {
        let u = csf(w_true);
        let l = w_true.len();
        let mut rng = stats::rng_from(seed, 0x5EED);
        let mut data = PreferenceDataset::new();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..l).map(|_| rng.random::<f64>()).collect() };
        for _ in 0..n_pc {
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let ea: f64 = rng.sample(StandardNormal);
            let eb: f64 = rng.sample(StandardNormal);
            if u.value(&a) + noise.sigma_pc * ea > u.value(&b) + noise.sigma_pc * eb {
                data.pc.push(PcRecord { preferred: a, other: b });
            } else {
                data.pc.push(PcRecord { preferred: b, other: a });
            }
        }
        for _ in 0..n_ir {
            let f = draw(&mut rng);
            let g = u.gradient(&f);
            let dim = (0..l)
                .map(|k| {
                    let e: f64 = rng.sample(StandardNormal);
                    (k, g[k] + noise.sigma_ir * e)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            data.ir.push(IrRecord { f, dim });
        }
        data
    }

    #[test]
    fn informative_data_matches_simplex_grid() {
        let noise = NoiseConfig::new(0.01, 0.01).unwrap();
        let data = simulated_data(&[0.8, 0.2], 200, 0, &noise, 11);
        let prior = DirichletPrior::symmetric(2);
        let fam = UtilityFamily::Csf;
        // posterior mean of w1 on a dense grid of the 1-simplex
        let n = 20_000;
        let logs: Vec<f64> = (1..n)
            .map(|i| {
                let w1 = i as f64 / n as f64;
                log_posterior_unnorm(&[w1, 1.0 - w1], None, &prior, &data, &noise, &fam)
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m) = (0.0, 0.0);
        for (i, lp) in logs.iter().enumerate() {
            let p = (lp - top).exp();
            z += p;
            m += p * (i + 1) as f64 / n as f64;
        }
        let grid_mean = m / z;
        assert!(grid_mean > 0.6 && grid_mean < 1.0, "{grid_mean}");
        let post = sample_weights(&prior, &data, &noise, &fam, &McmcConfig::default(), 5, None).unwrap();
        let mc_mean = post.mean_weights()[0];
        assert!(mc_mean > 0.6 && mc_mean < 1.0, "{mc_mean}");
        assert!((mc_mean - grid_mean).abs() < 0.01, "mcmc {mc_mean} grid {grid_mean}");
    }

    #[test]
    fn posterior_contracts_with_more_records() {
        let noise = NoiseConfig::default();
        let prior = DirichletPrior::symmetric(3);
        let w_true = [0.5, 0.3, 0.2];
        let cfg = McmcConfig { n_samples: 500, burn_in: 1000, ..Default::default() };
        let mut mean_err = [0.0; 3];
        let seeds = 10;
        for seed in 0..seeds {
            for (k, n) in [0usize, 10, 40].into_iter().enumerate() {
                let data = simulated_data(&w_true, n / 2, n / 2, &noise, seed);
                let post = sample_weights(&prior, &data, &noise, &UtilityFamily::Csf, &cfg, seed, None).unwrap();
                mean_err[k] += w_error(&post, &wv(&w_true)).unwrap() / seeds as f64;
            }
        }
        assert!(mean_err[0] >= mean_err[1] && mean_err[1] >= mean_err[2], "{mean_err:?}");
    }
}
