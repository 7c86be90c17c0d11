//! Mutual-information (BALD) selection of preference queries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{score_candidates, select_next};
use crate::prefmodel::NoiseConfig;
use crate::stats::{self, binary_entropy, entropy, log_norm_cdf_clamped, logsumexp, norm_cdf};
use crate::utility::UtilityModel;
use crate::{Error, Result};

/// "Do you prefer `first` over `second`?"
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcQuery {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// "Which objective should improve most at `f`?"
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrQuery {
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Pc,
    Ir,
}

impl std::str::FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pc" => Ok(QueryKind::Pc),
            "ir" => Ok(QueryKind::Ir),
            _ => Err(Error::invalid(format!("unknown query kind '{s}'; expected pc or ir"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Query {
    Pc(PcQuery),
    Ir(IrQuery),
}

impl Query {
    pub fn kind(&self) -> QueryKind {
        match self {
            Query::Pc(_) => QueryKind::Pc,
            Query::Ir(_) => QueryKind::Ir,
        }
    }
}

/// BALD for a binary outcome with per-sample success probabilities `p`.
pub fn bald_binary(p: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let cond = p.iter().map(|&v| binary_entropy(v)).sum::<f64>() / n;
    (binary_entropy(mean) - cond).max(0.0)
}

/// BALD for a categorical outcome; each row is one sample's distribution.
pub fn bald_categorical(probs: &[Vec<f64>]) -> f64 {
    let Some(first) = probs.first() else {
        return 0.0;
    };
    let n = probs.len() as f64;
    let mut mean = vec![0.0; first.len()];
    let mut cond = 0.0;
    for row in probs {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
        cond += entropy(row) / n;
    }
    (entropy(&mean) - cond).max(0.0)
}

/// `P(first ≻ second | U) = Φ((U(first) - U(second)) / (√2 σ_PC))`.
pub fn pc_probability<U: UtilityModel + ?Sized>(u: &U, q: &PcQuery, noise: &NoiseConfig) -> f64 {
    norm_cdf((u.value(&q.first) - u.value(&q.second)) / (std::f64::consts::SQRT_2 * noise.sigma_pc))
}

/// Normalized IR answer distribution: `p(z) ∝ Π_{ℓ≠z} Φ((g_z - g_ℓ)/σ_IR)`.
pub fn ir_distribution<U: UtilityModel + ?Sized>(u: &U, f: &[f64], noise: &NoiseConfig) -> Vec<f64> {
    let g = u.gradient(f);
    let logits: Vec<f64> = (0..g.len())
        .map(|z| {
            (0..g.len())
                .filter(|&l| l != z)
                .map(|l| log_norm_cdf_clamped((g[z] - g[l]) / noise.sigma_ir))
                .sum()
        })
        .collect();
    let norm = logsumexp(&logits);
    logits.iter().map(|v| (v - norm).exp()).collect()
}

fn check_pool<U>(utilities: &[U]) -> Result<()> {
    if utilities.is_empty() {
        return Err(Error::invalid("mutual information needs at least one utility sample"));
    }
    Ok(())
}

/// `MI(z_PC; w)` estimated over the utility samples, in nats.
pub fn mi_pc<U: UtilityModel>(q: &PcQuery, utilities: &[U], noise: &NoiseConfig) -> Result<f64> {
    check_pool(utilities)?;
    if q.first.len() != q.second.len() {
        return Err(Error::dim_mismatch("PC query", q.first.len(), q.second.len()));
    }
    let p: Vec<f64> = utilities.iter().map(|u| pc_probability(u, q, noise)).collect();
    Ok(bald_binary(&p))
}

/// `MI(z_IR; w)` over the `L`-way answer, in nats.
pub fn mi_ir<U: UtilityModel>(q: &IrQuery, utilities: &[U], noise: &NoiseConfig) -> Result<f64> {
    check_pool(utilities)?;
    let probs: Vec<Vec<f64>> = utilities.iter().map(|u| ir_distribution(u, &q.f, noise)).collect();
    Ok(bald_categorical(&probs))
}

/// PC mutual information when the utility difference `s = U(f) - U(f')` is
/// Gaussian `N(m, v)` under the model, as for the preferential GP.
pub fn mi_pc_gaussian(m: f64, v: f64, sigma_pc: f64) -> f64 {
    let c2 = 2.0 * sigma_pc * sigma_pc;
    let marginal = binary_entropy(norm_cdf(m / (c2 + v.max(0.0)).sqrt()));
    if v <= 1e-18 {
        return 0.0;
    }
    let sd = v.sqrt();
    let scale = 1.0 / c2.sqrt();
    let mut breaks: Vec<f64> = (-8..=8).map(|k| m + f64::from(k) * sd).collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.retain(|b| *b >= m - 8.0 * sd && *b <= m + 8.0 * sd);
    breaks.dedup();
    let cond = stats::adaptive_simpson_panels(
        |s| stats::norm_pdf((s - m) / sd) / sd * binary_entropy(norm_cdf(s * scale)),
        &breaks,
        1e-10,
    );
    (marginal - cond).max(0.0)
}

/// Mutual information of any query.
pub fn mi_query<U: UtilityModel>(q: &Query, utilities: &[U], noise: &NoiseConfig) -> Result<f64> {
    match q {
        Query::Pc(p) => mi_pc(p, utilities, noise),
        Query::Ir(i) => mi_ir(i, utilities, noise),
    }
}

/// Index of the most informative query in the pool, lowest index on ties.
pub fn select_query<U: UtilityModel + Sync>(pool: &[Query], utilities: &[U], noise: &NoiseConfig) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::invalid("query pool is empty"));
    }
    check_pool(utilities)?;
    let scores = score_candidates(pool.len(), |i| mi_query(&pool[i], utilities, noise).unwrap_or(f64::NAN));
    select_next(&scores)
}

fn pool_point<R: Rng + ?Sized>(anchors: &[Vec<f64>], l: usize, rng: &mut R) -> Vec<f64> {
    if !anchors.is_empty() && rng.random::<bool>() {
        anchors[rng.random_range(0..anchors.len())].clone()
    } else {
        (0..l).map(|_| rng.random::<f64>()).collect()
    }
}

/// Draws `size` candidate queries. Each objective vector comes with equal
/// probability from `anchors` (typically GP means at the candidate inputs) or
/// uniformly from `[0, 1]^L`.
pub fn build_query_pool<R: Rng + ?Sized>(
    kind: QueryKind,
    anchors: &[Vec<f64>],
    l: usize,
    size: usize,
    rng: &mut R,
) -> Vec<Query> {
    (0..size)
        .map(|_| match kind {
            QueryKind::Pc => {
                let first = pool_point(anchors, l, rng);
                let second = pool_point(anchors, l, rng);
                Query::Pc(PcQuery { first, second })
            }
            QueryKind::Ir => Query::Ir(IrQuery { f: pool_point(anchors, l, rng) }),
        })
        .collect()
}

/// Default pool size per query round.
pub const DEFAULT_POOL_SIZE: usize = 256;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::{CsfUtility, WeightVector};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn csf(w: &[f64]) -> CsfUtility {
        CsfUtility::new(WeightVector::new(w.to_vec()).unwrap())
    }

    fn noise() -> NoiseConfig {
        NoiseConfig::default()
    }

    #[test]
    fn pc_examples() {
        let us = [csf(&[0.3, 0.7]), csf(&[0.6, 0.4])];
        let same = PcQuery { first: vec![0.4, 0.5], second: vec![0.4, 0.5] };
        assert_eq!(mi_pc(&same, &us, &noise()).unwrap(), 0.0);
        let consensus = PcQuery { first: vec![0.95, 0.95], second: vec![0.05, 0.05] };
        assert!(mi_pc(&consensus, &us, &noise()).unwrap() < 1e-6);

        let p = [0.999, 0.001];
        let exact = binary_entropy(0.5) - binary_entropy(0.999);
        assert_abs_diff_eq!(bald_binary(&p), exact, epsilon = 1e-15);
        assert!(exact < LN_2 && exact > LN_2 - 0.01);
    }

    #[test]
    fn ir_examples() {
        let us = [csf(&[0.3, 0.7]), csf(&[0.6, 0.4])];
        let q = IrQuery { f: vec![0.5, 0.35] };
        let ir = mi_ir(&q, &us, &noise()).unwrap();
        let p: Vec<f64> = us
            .iter()
            .map(|u| {
                let g = u.gradient(&q.f);
                norm_cdf((g[0] - g[1]) / noise().sigma_ir)
            })
            .collect();
        assert_abs_diff_eq!(ir, bald_binary(&p), epsilon = 1e-9);

        // gradients equal everywhere give a uniform categorical
        struct Flat;
        impl UtilityModel for Flat {
            fn n_objectives(&self) -> usize {
                3
            }
            fn value(&self, f: &[f64]) -> f64 {
                f.iter().sum()
            }
            fn gradient(&self, _: &[f64]) -> Vec<f64> {
                vec![1.0; 3]
            }
        }
        assert_abs_diff_eq!(mi_ir(&IrQuery { f: vec![0.2; 3] }, &[Flat, Flat], &noise()).unwrap(), 0.0, epsilon = 1e-15);

        // opposite saturated answers at L = 2
        let us = [csf(&[0.5, 0.5]), csf(&[0.5, 0.5])];
        let a = mi_ir(&IrQuery { f: vec![0.2, 0.8] }, &us, &noise()).unwrap();
        assert_eq!(a, 0.0);
        let split = [csf(&[0.9, 0.1]), csf(&[0.1, 0.9])];
        let b = mi_ir(&IrQuery { f: vec![0.5, 0.5] }, &split, &noise()).unwrap();
        assert_abs_diff_eq!(b, LN_2, epsilon = 1e-9);
    }

    #[test]
    fn select_query_examples() {
        let us = [csf(&[0.2, 0.8]), csf(&[0.8, 0.2])];
        let pool = vec![
            Query::Pc(PcQuery { first: vec![0.5, 0.5], second: vec![0.5, 0.5] }),
            Query::Pc(PcQuery { first: vec![0.9, 0.2], second: vec![0.2, 0.9] }),
        ];
        assert_eq!(select_query(&pool, &us, &noise()).unwrap(), 1);
        let same = vec![pool[1].clone(), pool[1].clone(), pool[1].clone()];
        assert_eq!(select_query(&same, &us, &noise()).unwrap(), 0);
        assert!(select_query(&[], &us, &noise()).is_err());

        // ordering with two samples, computed from the two-point formula
        let pool = vec![
            Query::Pc(PcQuery { first: vec![0.6, 0.4], second: vec![0.4, 0.6] }),
            Query::Pc(PcQuery { first: vec![0.52, 0.48], second: vec![0.48, 0.52] }),
        ];
        let hand: Vec<f64> = pool
            .iter()
            .map(|q| {
                let Query::Pc(q) = q else { unreachable!() };
                let p: Vec<f64> = us
                    .iter()
                    .map(|u| norm_cdf((u.value(&q.first) - u.value(&q.second)) / (std::f64::consts::SQRT_2 * 0.1)))
                    .collect();
                binary_entropy(0.5 * (p[0] + p[1])) - 0.5 * (binary_entropy(p[0]) + binary_entropy(p[1]))
            })
            .collect();
        let expected = if hand[0] >= hand[1] { 0 } else { 1 };
        assert_eq!(select_query(&pool, &us, &noise()).unwrap(), expected);
    }

    #[test]
    fn gaussian_pc_mi_limits() {
        assert_eq!(mi_pc_gaussian(0.3, 0.0, 0.1), 0.0);
        let small = mi_pc_gaussian(0.0, 1e-6, 0.1);
        let large = mi_pc_gaussian(0.0, 1.0, 0.1);
        assert!(small < large);
        assert!(large <= LN_2);
        // far-saturated mean carries no information
        assert!(mi_pc_gaussian(5.0, 0.01, 0.1) < 1e-6);
    }

    #[test]
    fn pool_has_requested_shape() {
        let mut rng = stats::rng_from(1, 1);
        let anchors = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let pool = build_query_pool(QueryKind::Pc, &anchors, 2, 256, &mut rng);
        assert_eq!(pool.len(), 256);
        assert!(pool.iter().all(|q| q.kind() == QueryKind::Pc));
        let pool = build_query_pool(QueryKind::Ir, &[], 3, 10, &mut rng);
        assert!(pool.iter().all(|q| matches!(q, Query::Ir(i) if i.f.len() == 3)));
    }

    fn samples() -> impl Strategy<Value = Vec<CsfUtility>> {
        proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, 3), 1..8)
            .prop_map(|ws| ws.iter().map(|w| CsfUtility::new(WeightVector::normalized(w).unwrap())).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mi_is_bounded(us in samples(), f in proptest::collection::vec(0.0f64..1.0, 3), g in proptest::collection::vec(0.0f64..1.0, 3)) {
            let pc = mi_pc(&PcQuery { first: f.clone(), second: g.clone() }, &us, &noise()).unwrap();
            prop_assert!((0.0..=LN_2 + 1e-12).contains(&pc));
            let ir = mi_ir(&IrQuery { f: f.clone() }, &us, &noise()).unwrap();
            prop_assert!((0.0..=3f64.ln() + 1e-12).contains(&ir));
            let swapped = mi_pc(&PcQuery { first: g, second: f.clone() }, &us, &noise()).unwrap();
            prop_assert!((pc - swapped).abs() < 1e-12);
            let single = mi_pc(&PcQuery { first: f.clone(), second: vec![0.5; 3] }, &us[..1], &noise()).unwrap();
            prop_assert_eq!(single, 0.0);
            prop_assert_eq!(mi_ir(&IrQuery { f }, &us[..1], &noise()).unwrap(), 0.0);
        }
    }
}
