//! Simulated decision maker with a hidden ground-truth utility.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::prefmodel::NoiseConfig;
use crate::stats;
use crate::utility::{AugmentedCsfUtility, CsfUtility, UtilityModel, WeightVector};
use crate::{Error, Result};

/// `U(f) = Σ_i λ_i σ(β_iᵀf + b_i)` with non-negative `λ` and `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisModel {
    pub lambda: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl BasisModel {
    pub fn new(lambda: Vec<f64>, beta: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let m = lambda.len();
        if m == 0 || beta.len() != m || offset.len() != m {
            return Err(Error::invalid("basis model needs M ≥ 1 matching λ, β and offsets"));
        }
        let l = beta[0].len();
        if l == 0 || beta.iter().any(|b| b.len() != l) {
            return Err(Error::invalid("basis vectors must share one positive length"));
        }
        if lambda.iter().chain(beta.iter().flatten()).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("λ and β must be finite and non-negative"));
        }
        Ok(Self { lambda, beta, offset })
    }

    fn activations(&self, f: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let f = f.to_vec();
        self.beta.iter().zip(&self.offset).map(move |(b, c)| {
            let z: f64 = b.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>() + c;
            1.0 / (1.0 + (-z).exp())
        })
    }
}

impl UtilityModel for BasisModel {
    fn n_objectives(&self) -> usize {
        self.beta[0].len()
    }

    fn value(&self, f: &[f64]) -> f64 {
        self.lambda.iter().zip(self.activations(f)).map(|(l, p)| l * p).sum()
    }

    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_objectives()];
        for ((lam, b), p) in self.lambda.iter().zip(&self.beta).zip(self.activations(f)) {
            let s = lam * p * (1.0 - p);
            for (gi, bi) in g.iter_mut().zip(b) {
                *gi += s * bi;
            }
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueUtility {
    Csf(CsfUtility),
    AugmentedCsf(AugmentedCsfUtility),
    Basis(BasisModel),
}

impl TrueUtility {
    /// The true weight vector, when the truth has one.
    pub fn weights(&self) -> Option<&WeightVector> {
        match self {
            TrueUtility::Csf(u) => Some(&u.weights),
            TrueUtility::AugmentedCsf(u) => Some(&u.weights),
            TrueUtility::Basis(_) => None,
        }
    }
}

impl UtilityModel for TrueUtility {
    fn n_objectives(&self) -> usize {
        match self {
            TrueUtility::Csf(u) => u.n_objectives(),
            TrueUtility::AugmentedCsf(u) => u.n_objectives(),
            TrueUtility::Basis(u) => u.n_objectives(),
        }
    }

    fn value(&self, f: &[f64]) -> f64 {
        match self {
            TrueUtility::Csf(u) => u.value(f),
            TrueUtility::AugmentedCsf(u) => u.value(f),
            TrueUtility::Basis(u) => u.value(f),
        }
    }

    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        match self {
            TrueUtility::Csf(u) => u.gradient(f),
            TrueUtility::AugmentedCsf(u) => u.gradient(f),
            TrueUtility::Basis(u) => u.gradient(f),
        }
    }
}

/// Draws a random monotone basis-function utility over `l` objectives.
pub fn sample_basis_truth(m: usize, l: usize, seed: u64) -> Result<TrueUtility> {
    if m == 0 || l == 0 {
        return Err(Error::invalid("basis truth needs M ≥ 1 and L ≥ 1"));
    }
    let mut rng = stats::rng_from(seed, 0xBA515);
    let mut lambda = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let mut offset = Vec::with_capacity(m);
    for _ in 0..m {
        let z: f64 = StandardNormal.sample(&mut rng);
        lambda.push(z.abs());
        beta.push((0..l).map(|_| rng.random::<f64>()).collect());
        offset.push(rng.random::<f64>());
    }
    Ok(TrueUtility::Basis(BasisModel::new(lambda, beta, offset)?))
}

/// Answers queries from a hidden truth. Each answer draws its noise from a
/// stream keyed by `(seed, counter)`, so answer sequences are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDm {
    pub truth: TrueUtility,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub counter: u64,
}

impl SimulatedDm {
    pub fn new(truth: TrueUtility, noise: NoiseConfig, seed: u64) -> Self {
        Self { truth, noise, seed, counter: 0 }
    }

    fn next_rng(&mut self) -> rand_chacha::ChaCha8Rng {
        let rng = stats::rng_from(self.seed, self.counter.wrapping_add(0xD0_0000));
        self.counter += 1;
        rng
    }

    /// `true` when `f` is reported as preferred over `other`.
    pub fn answer_pc(&mut self, f: &[f64], other: &[f64]) -> bool {
        let mut rng = self.next_rng();
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        self.truth.value(f) + self.noise.sigma_pc * e1 > self.truth.value(other) + self.noise.sigma_pc * e2
    }

    /// The objective the decision maker most wants improved at `f`: the
    /// argmax of the gradient perturbed by i.i.d. Gaussian noise.
    pub fn answer_ir(&mut self, f: &[f64]) -> usize {
        let mut rng = self.next_rng();
        let g = self.truth.gradient(f);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, gi) in g.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = gi + self.noise.sigma_ir * e;
            if v > best.1 {
                best = (i, v);
            }
        }
        best.0
    }
}
