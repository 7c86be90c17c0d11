//! Expected improvement over the joint uncertainty in `f(x)` and the utility.
//!
//! For the Chebyshev scalarization the utility of a Gaussian `f` has the
//! closed-form survival function `S(u) = Π_ℓ (1 - Φ((w_ℓ u - μ_ℓ)/σ_ℓ))`, so
//! the expectation over `f` reduces to a one-dimensional integral. We
//! integrate `∫_b^∞ S(u) du`, which equals `∫_b^∞ (u - b) h(u) du` after
//! integration by parts and avoids differentiating `S`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::kernelgp::GpPosterior;
use crate::prefmodel::DirichletPrior;
use crate::stats::{self, norm_cdf, norm_pdf};
use crate::utility::{CsfUtility, UtilityModel, WeightVector};
use crate::{Error, Result};

/// Standard deviations at or below this are treated as exact.
pub const DEGENERATE_STD: f64 = 1e-12;
/// Absolute tolerance of the adaptive quadrature.
pub const QUADRATURE_TOL: f64 = 1e-8;
const TAIL_SIGMAS: f64 = 8.0;

/// Best utility among the observed objective vectors, one entry per utility
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IncumbentState {
    pub best: Vec<f64>,
}

impl IncumbentState {
    pub fn new<U: UtilityModel>(utilities: &[U], observed_y: &[Vec<f64>]) -> Result<Self> {
        if observed_y.is_empty() {
            return Err(Error::invalid("incumbent needs at least one observation"));
        }
        let best = utilities
            .iter()
            .map(|u| observed_y.iter().map(|y| u.value(y)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self { best })
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }
}

fn check_moments(mean: &[f64], std: &[f64], w: &WeightVector) -> Result<()> {
    if mean.len() != std.len() || mean.len() != w.len() {
        return Err(Error::dim_mismatch("predictive moments", w.len(), mean.len().max(std.len())));
    }
    if std.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("predictive standard deviations must be non-negative"));
    }
    Ok(())
}

/// `P(U_w(f) > u)` for independent `f_ℓ ~ N(μ_ℓ, σ_ℓ²)`.
pub fn csf_survival(u: f64, mean: &[f64], std: &[f64], w: &WeightVector) -> f64 {
    let mut s = 1.0;
    for l in 0..mean.len() {
        let t = w[l] * u - mean[l];
        if std[l] <= DEGENERATE_STD {
            if t >= 0.0 {
                return 0.0;
            }
        } else {
            s *= norm_cdf(-t / std[l]);
        }
    }
    s
}

/// `H(u | w) = 1 - Π_ℓ (1 - Φ((w_ℓ u - μ_ℓ)/σ_ℓ))`.
pub fn csf_cdf(u: f64, mean: &[f64], std: &[f64], w: &WeightVector) -> f64 {
    1.0 - csf_survival(u, mean, std, w)
}

/// `h(u | w) = dH/du`. Only meaningful when every `σ_ℓ > 0`.
pub fn csf_density(u: f64, mean: &[f64], std: &[f64], w: &WeightVector) -> f64 {
    let l = mean.len();
    let z: Vec<f64> = (0..l).map(|k| (w[k] * u - mean[k]) / std[k]).collect();
    let surv: Vec<f64> = z.iter().map(|v| norm_cdf(-v)).collect();
    (0..l)
        .map(|k| {
            let others: f64 = (0..l).filter(|&j| j != k).map(|j| surv[j]).product();
            w[k] / std[k] * norm_pdf(z[k]) * others
        })
        .sum()
}

/// Breakpoints `μ_ℓ/w_ℓ + kσ_ℓ/w_ℓ` for even `k` in `-8..=8`, clipped to `(lo, hi)` and
/// bracketed by the endpoints.
fn breakpoints(mean: &[f64], std: &[f64], w: &WeightVector, lo: f64, hi: f64) -> Vec<f64> {
    let mut b = vec![lo, hi];
    for l in 0..mean.len() {
        if std[l] <= DEGENERATE_STD {
            continue;
        }
        let c = mean[l] / w[l];
        let s = std[l] / w[l];
        for k in (-8..=8).step_by(2) {
            let p = c + f64::from(k) * s;
            if p > lo && p < hi {
                b.push(p);
            }
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Range `[lo, hi]` outside which `h(u | w)` carries at most an 8σ tail.
pub fn csf_support(mean: &[f64], std: &[f64], w: &WeightVector) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for l in 0..mean.len() {
        lo = lo.min((mean[l] - TAIL_SIGMAS * std[l]) / w[l]);
        hi = hi.max((mean[l] + TAIL_SIGMAS * std[l]) / w[l]);
    }
    (lo, hi)
}

/// `∫ h(u | w) du` over the 8σ support; should be 1 up to quadrature error.
pub fn csf_density_mass(mean: &[f64], std: &[f64], w: &WeightVector) -> Result<f64> {
    check_moments(mean, std, w)?;
    if std.iter().any(|s| *s <= DEGENERATE_STD) {
        return Err(Error::invalid("density is undefined with a degenerate objective"));
    }
    let (lo, hi) = csf_support(mean, std, w);
    let breaks = breakpoints(mean, std, w, lo, hi);
    Ok(stats::adaptive_simpson_panels(|u| csf_density(u, mean, std, w), &breaks, QUADRATURE_TOL))
}

/// Closed-form `E[max(U - b, 0)]` for `U ~ N(m, s²)`.
pub fn gaussian_ei(m: f64, s: f64, b: f64) -> f64 {
    if s <= DEGENERATE_STD {
        return (m - b).max(0.0);
    }
    let z = (m - b) / s;
    ((m - b) * norm_cdf(z) + s * norm_pdf(z)).max(0.0)
}

/// `E_f[max(U_w(f) - b, 0)]` for the Chebyshev scalarization by adaptive
/// quadrature of the survival function.
///
/// Objectives with zero variance cap the utility at `μ_ℓ/w_ℓ`; if every
/// objective is exact this is the deterministic improvement.
pub fn ei_csf(mean: &[f64], std: &[f64], w: &WeightVector, best: f64) -> Result<f64> {
    check_moments(mean, std, w)?;
    let mut cap = f64::INFINITY;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for l in 0..mean.len() {
        if std[l] <= DEGENERATE_STD {
            cap = cap.min(mean[l] / w[l]);
        } else {
            lo = lo.min((mean[l] - TAIL_SIGMAS * std[l]) / w[l]);
            hi = hi.max((mean[l] + TAIL_SIGMAS * std[l]) / w[l]);
        }
    }
    if !hi.is_finite() {
        return Ok((cap - best).max(0.0));
    }
    let upper = hi.min(cap);
    if upper <= best {
        return Ok(0.0);
    }
    // below `lo` every factor of S is within Φ(-8) of one
    let flat = (lo.min(upper) - best).max(0.0);
    let start = best.max(lo);
    if upper <= start {
        return Ok(flat);
    }
    let breaks = breakpoints(mean, std, w, start, upper);
    let tail = stats::adaptive_simpson_panels(|u| csf_survival(u, mean, std, w), &breaks, QUADRATURE_TOL);
    Ok((flat + tail).max(0.0))
}

/// Quadrature EI averaged over a set of weight samples.
pub fn ei_quadrature(mean: &[f64], std: &[f64], weights: &[WeightVector], inc: &IncumbentState) -> Result<f64> {
    if weights.is_empty() || weights.len() != inc.len() {
        return Err(Error::invalid("weight samples and incumbents must be non-empty and paired"));
    }
    let mut total = 0.0;
    for (w, &b) in weights.iter().zip(&inc.best) {
        total += ei_csf(mean, std, w, b)?;
    }
    Ok(total / weights.len() as f64)
}

/// EI under a single known weight vector.
pub fn ei_true_pref(mean: &[f64], std: &[f64], w_true: &WeightVector, best: f64) -> Result<f64> {
    ei_csf(mean, std, w_true, best)
}

/// Monte-Carlo EI: `n_f` independent draws of `f` per utility sample.
pub fn ei_mc<U: UtilityModel, R: Rng + ?Sized>(
    mean: &[f64],
    std: &[f64],
    utilities: &[U],
    inc: &IncumbentState,
    n_f: usize,
    rng: &mut R,
) -> Result<f64> {
    if utilities.is_empty() || utilities.len() != inc.len() {
        return Err(Error::invalid("utility samples and incumbents must be non-empty and paired"));
    }
    if n_f == 0 {
        return Err(Error::invalid("n_f must be at least 1"));
    }
    if mean.len() != std.len() {
        return Err(Error::dim_mismatch("predictive moments", mean.len(), std.len()));
    }
    let mut f = vec![0.0; mean.len()];
    let mut total = 0.0;
    for (u, &b) in utilities.iter().zip(&inc.best) {
        let mut acc = 0.0;
        for _ in 0..n_f {
            for l in 0..mean.len() {
                let z: f64 = rng.sample(StandardNormal);
                f[l] = mean[l] + std[l] * z;
            }
            acc += (u.value(&f) - b).max(0.0);
        }
        total += acc / n_f as f64;
    }
    Ok(total / utilities.len() as f64)
}

/// Scores `n` candidates in parallel. The result does not depend on the
/// thread count.
pub fn score_candidates<F>(n: usize, score: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..n).into_par_iter().map(score).collect()
}

/// Index of the largest finite score; ties go to the lowest index.
pub fn select_next(scores: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::Numerical("no candidate has a finite acquisition score".into()))
}

/// Random-scalarization baseline: draw one `w` from the prior and maximize
/// the known-preference EI under it. Candidates flagged in `excluded` are
/// skipped.
pub fn random_scalarization_select(
    gp: &GpPosterior,
    unit_candidates: &[Vec<f64>],
    observed_y: &[Vec<f64>],
    prior: &DirichletPrior,
    excluded: &[bool],
    seed: u64,
) -> Result<usize> {
    if unit_candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    let mut rng = stats::rng_from(seed, 0x5CA1A5);
    let w = prior.sample(&mut rng);
    let u = CsfUtility::new(w.clone());
    let inc = IncumbentState::new(std::slice::from_ref(&u), observed_y)?;
    let b = inc.best[0];
    let scores = score_candidates(unit_candidates.len(), |i| {
        if excluded.get(i).copied().unwrap_or(false) {
            return f64::NEG_INFINITY;
        }
        let (m, s) = gp.predict(&unit_candidates[i]);
        ei_csf(&m, &s, &w, b).unwrap_or(f64::NAN)
    });
    select_next(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelgp::{GpModel, KernelConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_objective_matches_closed_form() {
        let w = wv(&[1.0]);
        for &(m, s, b) in &[(0.6, 0.1, 0.5), (0.3, 0.2, 0.7), (0.5, 1e-3, 0.5), (0.0, 2.0, -1.0)] {
            let q = ei_csf(&[m], &[s], &w, b).unwrap();
            let z: f64 = (m - b) / s;
            let exact = (m - b) * norm_cdf(z) + s * norm_pdf(z);
            assert_abs_diff_eq!(q, exact, epsilon = 1e-6);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let cases: [(&[f64], &[f64], &[f64]); 3] = [
            (&[0.6, 0.6], &[0.05, 0.05], &[0.5, 0.5]),
            (&[0.2, 0.9, 0.4], &[0.3, 0.01, 0.1], &[0.2, 0.5, 0.3]),
            (&[0.5, 0.1], &[1e-3, 0.4], &[0.9, 0.1]),
        ];
        for (m, s, w) in cases {
            let mass = csf_density_mass(m, s, &wv(w)).unwrap();
            assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        }
    }

    #[test]
    fn degenerate_and_far_incumbent() {
        let w = wv(&[0.5, 0.5]);
        // U_w(μ) = min(0.6, 0.8)/0.5 = 1.2
        assert_abs_diff_eq!(ei_csf(&[0.6, 0.4], &[0.0, 0.0], &w, 0.7).unwrap(), 0.1, epsilon = 1e-12);
        assert_eq!(ei_csf(&[0.6, 0.4], &[0.0, 0.0], &w, 0.8).unwrap(), 0.0);
        assert_eq!(ei_csf(&[0.6, 0.6], &[0.05, 0.05], &w, 1e6).unwrap(), 0.0);
        let u = CsfUtility::new(w.clone());
        let inc = IncumbentState { best: vec![0.7] };
        let mut rng = stats::rng_from(0, 0);
        let mc = ei_mc(&[0.6, 0.4], &[0.0, 0.0], &[u], &inc, 10, &mut rng).unwrap();
        assert_abs_diff_eq!(mc, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn mc_matches_quadrature_on_spec_state() {
        let w = wv(&[0.5, 0.5]);
        let mean = [0.6, 0.6];
        let std = [0.05, 0.05];
        let inc = IncumbentState { best: vec![1.0] };
        let q = ei_quadrature(&mean, &std, std::slice::from_ref(&w), &inc).unwrap();
        let mut rng = stats::rng_from(3, 0);
        let mc = ei_mc(&mean, &std, &[CsfUtility::new(w)], &inc, 100_000, &mut rng).unwrap();
        assert!((mc - q).abs() / q.max(1e-4) <= 0.02, "mc {mc} quad {q}");
    }

    #[test]
    fn partially_degenerate_caps_utility() {
        // f1 exact at 0.5 caps U at 1.0; f2 broad
        let w = wv(&[0.5, 0.5]);
        let q = ei_csf(&[0.5, 0.5], &[0.0, 0.2], &w, 0.8).unwrap();
        let inc = IncumbentState { best: vec![0.8] };
        let mut rng = stats::rng_from(4, 0);
        let mc = ei_mc(&[0.5, 0.5], &[0.0, 0.2], &[CsfUtility::new(w)], &inc, 200_000, &mut rng).unwrap();
        assert!((mc - q).abs() / q < 0.02, "{mc} {q}");
    }

    #[test]
    fn select_next_rules() {
        assert_eq!(select_next(&[0.1, 0.5, 0.2]).unwrap(), 1);
        assert_eq!(select_next(&[0.3, 0.3, 0.3]).unwrap(), 0);
        assert_eq!(select_next(&[f64::NAN, f64::NEG_INFINITY, 0.0]).unwrap(), 2);
        assert!(select_next(&[f64::NAN, f64::INFINITY]).is_err());
        assert!(select_next(&[]).is_err());
    }

    fn two_point_gp(y1: [f64; 2], y2: [f64; 2]) -> GpPosterior {
        let inputs = vec![vec![0.0], vec![1.0]];
        let kernel = KernelConfig::new(1.0, 0.1).unwrap();
        let models = (0..2)
            .map(|l| GpModel::new(inputs.clone(), vec![y1[l], y2[l]], kernel, 1e-6).unwrap())
            .collect();
        GpPosterior::from_models(models).unwrap()
    }

    #[test]
    fn dominating_candidate_wins() {
        // A = x 0 dominates B = x 1 in mean, variances equal by symmetry
        let gp = two_point_gp([0.8, 0.7], [0.5, 0.4]);
        let cands = [vec![0.0], vec![1.0]];
        let observed = vec![vec![0.3, 0.3]];
        for seed in 0..5 {
            let w = DirichletPrior::symmetric(2).sample(&mut stats::rng_from(seed, 9));
            let inc = IncumbentState::new(&[CsfUtility::new(w.clone())], &observed).unwrap();
            let scores: Vec<f64> = cands
                .iter()
                .map(|x| {
                    let (m, s) = gp.predict(x);
                    ei_quadrature(&m, &s, std::slice::from_ref(&w), &inc).unwrap()
                })
                .collect();
            assert_eq!(select_next(&scores).unwrap(), 0);
        }
    }

    #[test]
    fn random_scalarization_properties() {
        let gp = two_point_gp([0.9, 0.1], [0.1, 0.9]);
        let cands = vec![vec![0.0], vec![1.0]];
        let observed = vec![vec![0.05, 0.05]];
        let prior = DirichletPrior::symmetric(2);
        let pick = |seed| random_scalarization_select(&gp, &cands, &observed, &prior, &[false, false], seed).unwrap();
        assert_eq!(pick(1), pick(1));
        let picks: std::collections::BTreeSet<usize> = (0..40).map(pick).collect();
        assert_eq!(picks.len(), 2);
        let single = random_scalarization_select(&gp, &cands[..1], &observed, &prior, &[false], 3).unwrap();
        assert_eq!(single, 0);
        let masked = random_scalarization_select(&gp, &cands, &observed, &prior, &[true, false], 3).unwrap();
        assert_eq!(masked, 1);
    }

    // With several objectives a wider spread on a non-binding objective makes
    // it binding more often, so EI can fall. Values checked against adaptive
    // quadrature of the survival-function integral.
    #[test]
    fn wider_posterior_can_lower_multi_objective_ei() {
        let m = [0.9731467368646222, 0.9218548940558636, 0.4247011566470722];
        let s = [0.05322757415072488, 0.2278026379639941, 0.2817943904406622];
        let w = wv(&[0.38109565992723565, 0.3672000384177202, 0.2517043016550442]);
        let b = CsfUtility::new(w.clone()).value(&m);
        let s2: Vec<f64> = s.iter().map(|v| v * 1.918429451275227).collect();
        let lo = ei_csf(&m, &s, &w, b).unwrap();
        let hi = ei_csf(&m, &s2, &w, b).unwrap();
        assert_abs_diff_eq!(lo, 0.2264128198546106, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 0.2240291804174867, epsilon = 1e-6);
    }

    fn state() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, WeightVector, f64)> {
        (2usize..=3).prop_flat_map(|l| {
            (
                proptest::collection::vec(0.0f64..1.0, l),
                proptest::collection::vec(0.0f64..0.3, l),
                proptest::collection::vec(0.05f64..1.0, l),
                0.0f64..2.5,
            )
                .prop_map(|(m, s, w, b)| (m, s, WeightVector::normalized(&w).unwrap(), b))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ei_is_nonnegative((m, s, w, b) in state()) {
            prop_assert!(ei_csf(&m, &s, &w, b).unwrap() >= 0.0);
            let inc = IncumbentState { best: vec![b] };
            let mut rng = stats::rng_from(0, 1);
            prop_assert!(ei_mc(&m, &s, &[CsfUtility::new(w)], &inc, 50, &mut rng).unwrap() >= 0.0);
        }

        #[test]
        fn wider_posterior_never_lowers_single_objective_ei(m in 0.0f64..1.0, s in 0.0f64..0.3, b in 0.0f64..1.5, k in 1.0f64..3.0) {
            let w = wv(&[1.0]);
            let b = b.max(m);
            let lo = ei_csf(&[m], &[s], &w, b).unwrap();
            let hi = ei_csf(&[m], &[s * k], &w, b).unwrap();
            prop_assert!(hi >= lo - 1e-9, "{} {}", lo, hi);
        }

        #[test]
        fn deterministic_scores((m, s, w, b) in state()) {
            prop_assert_eq!(ei_csf(&m, &s, &w, b).unwrap(), ei_csf(&m, &s, &w, b).unwrap());
            let inc = IncumbentState { best: vec![b] };
            let u = [CsfUtility::new(w)];
            let a = ei_mc(&m, &s, &u, &inc, 20, &mut stats::rng_from(5, 5)).unwrap();
            let c = ei_mc(&m, &s, &u, &inc, 20, &mut stats::rng_from(5, 5)).unwrap();
            prop_assert_eq!(a, c);
        }
    }
}
