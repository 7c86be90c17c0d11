//! Utility functions over objective space.
//!
//! All models share [`UtilityModel`], so acquisition and query-selection code
//! can be written once for the Chebyshev scalarization, its augmented variant,
//! the simulated decision maker's basis-function truth, and the preferential
//! GP.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A utility on objective space: larger is preferred.
pub trait UtilityModel {
    fn n_objectives(&self) -> usize;

    /// `U(f)`. The caller guarantees `f.len() == n_objectives()`.
    fn value(&self, f: &[f64]) -> f64;

    /// `∂U/∂f_ℓ` for every ℓ (a subgradient where `U` is not differentiable).
    fn gradient(&self, f: &[f64]) -> Vec<f64>;
}

impl<T: UtilityModel + ?Sized> UtilityModel for &T {
    fn n_objectives(&self) -> usize {
        (**self).n_objectives()
    }
    fn value(&self, f: &[f64]) -> f64 {
        (**self).value(f)
    }
    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        (**self).gradient(f)
    }
}

/// A point strictly inside the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector must have at least one entry"));
        }
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("weights must be positive, got {bad}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("weights must sum to 1, got {sum}")));
        }
        Ok(Self(w))
    }

    /// Rescales positive values onto the simplex.
    pub fn normalized(values: &[f64]) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::invalid("cannot normalize weights with non-positive sum"));
        }
        Self::new(values.iter().map(|v| v / sum).collect())
    }

    pub fn uniform(l: usize) -> Self {
        Self(vec![1.0 / l as f64; l])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Index of `min_ℓ ratio(ℓ)`, lowest index on ties.
#[inline]
fn active_index(f: &[f64], w: &[f64], reference: Option<&[f64]>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (l, (&fl, &wl)) in f.iter().zip(w).enumerate() {
        let shifted = reference.map_or(fl, |r| fl - r[l]);
        let v = shifted / wl;
        if v < best.1 {
            best = (l, v);
        }
    }
    best
}

/// Chebyshev scalarization `U(f) = min_ℓ f_ℓ / w_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsfUtility {
    pub weights: WeightVector,
}

impl CsfUtility {
    pub fn new(weights: WeightVector) -> Self {
        Self { weights }
    }
}

impl UtilityModel for CsfUtility {
    fn n_objectives(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    fn value(&self, f: &[f64]) -> f64 {
        active_index(f, self.weights.as_slice(), None).1
    }

    /// Subgradient `1/w_ℓ*` at the active coordinate, zero elsewhere.
    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let (l, _) = active_index(f, self.weights.as_slice(), None);
        let mut g = vec![0.0; f.len()];
        g[l] = 1.0 / self.weights[l];
        g
    }
}

/// Augmented Chebyshev scalarization relative to a reference point:
/// `min_ℓ (f_ℓ - r_ℓ)/w_ℓ + ρ Σ_ℓ (f_ℓ - r_ℓ)/w_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCsfUtility {
    pub weights: WeightVector,
    pub reference: Vec<f64>,
    pub rho: f64,
}

impl AugmentedCsfUtility {
    pub const DEFAULT_RHO: f64 = 0.001;

    pub fn new(weights: WeightVector, reference: Vec<f64>, rho: f64) -> Result<Self> {
        if reference.len() != weights.len() {
            return Err(Error::dim_mismatch("reference point", weights.len(), reference.len()));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("augmentation coefficient must be positive, got {rho}")));
        }
        Ok(Self { weights, reference, rho })
    }
}

impl UtilityModel for AugmentedCsfUtility {
    fn n_objectives(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, f: &[f64]) -> f64 {
        let w = self.weights.as_slice();
        let (_, min) = active_index(f, w, Some(&self.reference));
        let sum: f64 = f.iter().zip(&self.reference).zip(w).map(|((fl, rl), wl)| (fl - rl) / wl).sum();
        min + self.rho * sum
    }

    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let w = self.weights.as_slice();
        let (l, _) = active_index(f, w, Some(&self.reference));
        let mut g: Vec<f64> = w.iter().map(|wl| self.rho / wl).collect();
        g[l] += 1.0 / w[l];
        g
    }
}

fn check_dim(u: &impl UtilityModel, f: &[f64]) -> Result<()> {
    if f.len() != u.n_objectives() {
        return Err(Error::dim_mismatch("objective vector", u.n_objectives(), f.len()));
    }
    Ok(())
}

pub fn csf_value(u: &CsfUtility, f: &[f64]) -> Result<f64> {
    check_dim(u, f)?;
    Ok(u.value(f))
}

pub fn csf_gradient(u: &CsfUtility, f: &[f64]) -> Result<Vec<f64>> {
    check_dim(u, f)?;
    Ok(u.gradient(f))
}

pub fn augmented_csf_value(u: &AugmentedCsfUtility, f: &[f64]) -> Result<f64> {
    check_dim(u, f)?;
    Ok(u.value(f))
}
