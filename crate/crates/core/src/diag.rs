//! Numerical self-checks against independent oracles.
//!
//! Each check builds its own reference value (Monte Carlo, dense trapezoid
//! rules, closed forms, grid integration) rather than reusing the integrator
//! under test. The CLI `diag` command and the acceptance tests run these.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::acquisition::{csf_density, csf_support, ei_csf, ei_mc, ei_quadrature, IncumbentState};
use crate::dmsim::{sample_basis_truth, SimulatedDm};
use crate::kernelgp::KernelConfig;
use crate::pgpm::{ep_fit, monotonicity_violations, PgpmConfig, PgpmPosterior, PgpmTrainingSet};
use crate::prefmodel::{sample_weights, DirichletPrior, McmcConfig, NoiseConfig, PcRecord, PreferenceDataset, UtilityFamily};
use crate::stats::{self, norm_cdf, norm_pdf};
use crate::utility::{CsfUtility, UtilityModel, WeightVector};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// A random posterior state over `l` objectives with an incumbent near the
/// bulk of the utility distribution.
#[derive(Debug, Clone)]
pub struct EiState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub w: WeightVector,
    pub best: f64,
}

fn dirichlet_ones<R: Rng + ?Sized>(l: usize, rng: &mut R) -> WeightVector {
    let g = Gamma::<f64>::new(1.0, 1.0).expect("valid gamma");
    let v: Vec<f64> = (0..l).map(|_| g.sample(rng).max(1e-3)).collect();
    WeightVector::normalized(&v).expect("positive weights")
}

pub fn random_ei_state<R: Rng + ?Sized>(l: usize, rng: &mut R) -> EiState {
    let mean: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..0.9)).collect();
    let std: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..0.3)).collect();
    let w = dirichlet_ones(l, rng);
    let (k, u0) = (0..l)
        .map(|i| (i, mean[i] / w[i]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("l >= 1");
    let spread = std[k] / w[k];
    let best = u0 + spread * rng.random_range(-1.0..1.0);
    EiState { mean, std, w, best }
}

/// Quadrature EI against Monte-Carlo EI with `draws` samples on `n_states`
/// random states with L in {2, 3}. Passes when every state agrees within 5%
/// relative, with a 1e-4 absolute floor.
pub fn ei_mc_vs_quadrature(n_states: usize, draws: usize, seed: u64) -> Result<Check> {
    let mut rng = stats::rng_from(seed, 0xE1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..n_states {
        let l = 2 + i % 2;
        let s = random_ei_state(l, &mut rng);
        let inc = IncumbentState { best: vec![s.best] };
        let q = ei_quadrature(&s.mean, &s.std, std::slice::from_ref(&s.w), &inc)?;
        let mut mc_rng = stats::rng_from(seed, 0x1000 + i as u64);
        let mc = ei_mc(&s.mean, &s.std, &[CsfUtility::new(s.w.clone())], &inc, draws, &mut mc_rng)?;
        let err = (mc - q).abs() / (0.05 * q).max(1e-4);
        worst = worst.max(err);
        if err > 1.0 {
            failures += 1;
        }
    }
    Ok(Check::new(
        "ei_mc_vs_quadrature",
        failures == 0,
        format!("{n_states} states, {draws} draws, {failures} outside tolerance, worst error/tolerance {worst:.3}"),
    ))
}

/// Dense trapezoid integral of the CSF utility density.
pub fn trapezoid_density_mass(mean: &[f64], std: &[f64], w: &WeightVector, points: usize) -> f64 {
    let (lo, hi) = csf_support(mean, std, w);
    let h = (hi - lo) / (points - 1) as f64;
    let mut total = 0.0;
    for i in 0..points {
        let u = lo + h * i as f64;
        let wt = if i == 0 || i + 1 == points { 0.5 } else { 1.0 };
        total += wt * csf_density(u, mean, std, w);
    }
    total * h
}

/// The utility density integrates to one within 1e-3 on `n_states` random
/// states.
pub fn density_normalization(n_states: usize, seed: u64) -> Check {
    let mut rng = stats::rng_from(seed, 0xD5);
    let mut worst: f64 = 0.0;
    for i in 0..n_states {
        let s = random_ei_state(2 + i % 2, &mut rng);
        let mass = trapezoid_density_mass(&s.mean, &s.std, &s.w, 200_001);
        worst = worst.max((mass - 1.0).abs());
    }
    Check::new(
        "density_normalization",
        worst <= 1e-3,
        format!("{n_states} states, max |mass - 1| = {worst:.2e}"),
    )
}

/// With one objective the utility EI equals Gaussian EI within 1e-6.
pub fn single_objective_closed_form(n_states: usize, seed: u64) -> Result<Check> {
    let mut rng = stats::rng_from(seed, 0x11);
    let w = WeightVector::new(vec![1.0])?;
    let mut worst: f64 = 0.0;
    for _ in 0..n_states {
        let m: f64 = rng.random_range(-1.0..1.0);
        let s: f64 = rng.random_range(1e-3..1.0);
        let b = m + s * rng.random_range(-3.0..3.0);
        let z = (m - b) / s;
        let exact = (m - b) * norm_cdf(z) + s * norm_pdf(z);
        worst = worst.max((ei_csf(&[m], &[s], &w, b)? - exact).abs());
    }
    Ok(Check::new(
        "single_objective_closed_form",
        worst <= 1e-6,
        format!("{n_states} states, max abs error {worst:.2e}"),
    ))
}

/// With no data the sampler reproduces the Dirichlet(2, 2) mean and variance
/// within 0.01 at `t` samples.
pub fn mcmc_prior_recovery(t: usize, seed: u64) -> Result<Check> {
    let prior = DirichletPrior::new(vec![2.0, 2.0])?;
    let cfg = McmcConfig { n_samples: t, ..McmcConfig::default() };
    let post = sample_weights(
        &prior,
        &PreferenceDataset::new(),
        &NoiseConfig::default(),
        &UtilityFamily::Csf,
        &cfg,
        seed,
        None,
    )?;
    let w1: Vec<f64> = post.weights.iter().map(|w| w[0]).collect();
    let (m, v) = (stats::mean(&w1), stats::sample_variance(&w1));
    // Beta(2, 2): mean 1/2, variance 1/20
    let (dm, dv) = ((m - 0.5).abs(), (v - 0.05).abs());
    Ok(Check::new(
        "mcmc_prior_recovery",
        dm <= 0.01 && dv <= 0.01,
        format!("T = {t}: mean {m:.4} (target 0.5), variance {v:.4} (target 0.05)"),
    ))
}

/// Moments of `(u1, u2) ~ N(0, K) Φ((u1 − u2)/(√2 σ))` by dense grid
/// integration: `([E u1, E u2], [[Var u1, Cov], [Cov, Var u2]])`.
pub fn two_point_grid_oracle(k11: f64, k12: f64, k22: f64, sigma: f64, n: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let det = k11 * k22 - k12 * k12;
    let (i11, i12, i22) = (k22 / det, -k12 / det, k11 / det);
    let (s1, s2) = (8.0 * k11.sqrt(), 8.0 * k22.sqrt());
    let (h1, h2) = (2.0 * s1 / (n - 1) as f64, 2.0 * s2 / (n - 1) as f64);
    let mut z = 0.0;
    let mut m = [0.0; 2];
    let mut mm = [[0.0; 2]; 2];
    for a in 0..n {
        let u1 = -s1 + h1 * a as f64;
        for b in 0..n {
            let u2 = -s2 + h2 * b as f64;
            let q = i11 * u1 * u1 + 2.0 * i12 * u1 * u2 + i22 * u2 * u2;
            let p = (-0.5 * q).exp() * norm_cdf((u1 - u2) / (std::f64::consts::SQRT_2 * sigma));
            z += p;
            m[0] += p * u1;
            m[1] += p * u2;
            mm[0][0] += p * u1 * u1;
            mm[0][1] += p * u1 * u2;
            mm[1][1] += p * u2 * u2;
        }
    }
    let mean = [m[0] / z, m[1] / z];
    let c01 = mm[0][1] / z - mean[0] * mean[1];
    let cov = [[mm[0][0] / z - mean[0] * mean[0], c01], [c01, mm[1][1] / z - mean[1] * mean[1]]];
    (mean, cov)
}

/// EP on one comparison between two points against the grid oracle: means,
/// variances and the covariance within 10%.
pub fn pgpm_two_point(n_cases: usize, seed: u64) -> Result<Check> {
    let mut rng = stats::rng_from(seed, 0x2B);
    let cfg = PgpmConfig::default();
    let k: KernelConfig = cfg.kernel;
    let mut worst: f64 = 0.0;
    for _ in 0..n_cases {
        let a: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let train = PgpmTrainingSet::new(vec![a.clone(), b.clone()], vec![(0, 1)], vec![], cfg.nu, cfg.sigma_pc)?;
        let post = ep_fit(&train, &cfg)?;
        let (om, oc) = two_point_grid_oracle(k.eval(&a, &a), k.eval(&a, &b), k.eval(&b, &b), cfg.sigma_pc, 801);
        let mean_scale = om[0].abs().max(om[1].abs());
        for i in 0..2 {
            worst = worst.max((post.mean[i] - om[i]).abs() / mean_scale);
            for j in 0..2 {
                let scale = (oc[i][i] * oc[j][j]).sqrt();
                worst = worst.max((post.cov[(i, j)] - oc[i][j]).abs() / scale);
            }
        }
    }
    Ok(Check::new(
        "pgpm_two_point",
        worst <= 0.1,
        format!("{n_cases} pairs, worst relative moment error {worst:.4}"),
    ))
}

/// Predictive-mean monotonicity of the preferential GP fitted to comparisons
/// from a monotone truth: at most 5% of grid edges decrease, and no decrease
/// exceeds 1e-3.
pub fn pgpm_monotonicity(seeds: &[u64], records: usize) -> Result<Check> {
    let cfg = PgpmConfig::default();
    let mut worst_frac: f64 = 0.0;
    let mut worst_drop: f64 = 0.0;
    for &seed in seeds {
        let truth = sample_basis_truth(crate::harness::DEFAULT_BASIS_TERMS, 2, seed)?;
        let mut dm = SimulatedDm::new(truth, NoiseConfig::default(), seed);
        let mut rng = stats::rng_from(seed, 0x303);
        let mut data = PreferenceDataset::new();
        for _ in 0..records {
            let a: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            let rec = if dm.answer_pc(&a, &b) { PcRecord { preferred: a, other: b } } else { PcRecord { preferred: b, other: a } };
            data.pc.push(rec);
        }
        let post = PgpmPosterior::fit(&data, 2, &cfg)?;
        let (frac, drop) = monotonicity_violations(&post, 2, 0.0, 1.0, 21);
        worst_frac = worst_frac.max(frac);
        worst_drop = worst_drop.max(drop);
    }
    Ok(Check::new(
        "pgpm_monotonicity",
        worst_frac <= 0.05 && worst_drop <= 1e-3,
        format!(
            "{} fits, nu = {:e}: worst fraction of decreasing edges {worst_frac:.4}, largest decrease {worst_drop:.2e}",
            seeds.len(),
            cfg.nu
        ),
    ))
}

/// Basis-truth gradients against central differences.
pub fn basis_gradient(probes: usize, seed: u64) -> Result<Check> {
    let truth = sample_basis_truth(5, 3, seed)?;
    let mut rng = stats::rng_from(seed, 0x6D);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let f: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let g = truth.gradient(&f);
        for d in 0..3 {
            let mut up = f.clone();
            let mut dn = f.clone();
            up[d] += h;
            dn[d] -= h;
            let fd = (truth.value(&up) - truth.value(&dn)) / (2.0 * h);
            worst = worst.max((fd - g[d]).abs());
        }
    }
    Ok(Check::new("basis_gradient", worst <= 1e-5, format!("{probes} probes, max abs error {worst:.2e}")))
}

/// Every check at its full size.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        ei_mc_vs_quadrature(50, 100_000, seed)?,
        density_normalization(20, seed),
        single_objective_closed_form(20, seed)?,
        mcmc_prior_recovery(20_000, seed)?,
        pgpm_two_point(5, seed)?,
        pgpm_monotonicity(&[seed, seed + 1, seed + 2], 20)?,
        basis_gradient(100, seed)?,
    ])
}
