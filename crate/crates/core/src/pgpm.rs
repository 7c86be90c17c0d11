//! Preferential Gaussian process with soft monotonicity constraints.
//!
//! The latent vector stacks utility values at the objective vectors seen in
//! pairwise comparisons and partial derivatives of the utility at a grid of
//! constraint points. Every likelihood factor is a probit of a linear
//! function `s = aᵀz` of the latent: `U(f) - U(f')` for a comparison and
//! `∂U/∂f_ℓ` for a monotonicity constraint. Expectation propagation keeps one
//! rank-one Gaussian site per factor, so inference runs entirely in the
//! `q`-dimensional space of site projections, with `G = A K Aᵀ` standing in for
//! the kernel matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acquisition::gaussian_ei;
use crate::active::{mi_pc_gaussian, PcQuery};
use crate::kernelgp::KernelConfig;
use crate::prefmodel::PreferenceDataset;
use crate::stats::{linspace, mills_ratio};
use crate::utility::UtilityModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgpmConfig {
    pub kernel: KernelConfig,
    /// Strictness of the monotonicity probit, `Φ(∂U / ν)`.
    pub nu: f64,
    pub sigma_pc: f64,
    /// Constraint grid points per objective axis; `None` picks 4 for `L ≤ 2`
    /// and 3 otherwise.
    pub constraints_per_axis: Option<usize>,
    pub damping: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for PgpmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig { amplitude: 1.0, lengthscale: 0.5 },
            nu: 1e-6,
            sigma_pc: 0.1,
            constraints_per_axis: None,
            damping: 0.8,
            max_sweeps: 200,
            tolerance: 1e-6,
        }
    }
}

impl PgpmConfig {
    pub fn per_axis(&self, l: usize) -> usize {
        self.constraints_per_axis.unwrap_or(if l <= 2 { 4 } else { 3 })
    }
}

/// Distinct utility locations, comparisons between them and derivative
/// constraints `(point, dimension)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgpmTrainingSet {
    pub points: Vec<Vec<f64>>,
    /// `(preferred, other)` indices into `points`.
    pub pairs: Vec<(usize, usize)>,
    pub constraints: Vec<(Vec<f64>, usize)>,
    pub nu: f64,
    pub sigma_pc: f64,
}

impl PgpmTrainingSet {
    /// Builds the training set from the PC records of `data`, constraining
    /// every objective at each point of a `per_axis^L` grid over the bounding
    /// box of the compared objective vectors. IR records are ignored.
    pub fn from_dataset(data: &PreferenceDataset, l: usize, per_axis: usize, nu: f64, sigma_pc: f64) -> Result<Self> {
        data.validate(l)?;
        let mut points: Vec<Vec<f64>> = Vec::new();
        let index_of = |p: &Vec<f64>, points: &mut Vec<Vec<f64>>| -> usize {
            if let Some(i) = points.iter().position(|q| q == p) {
                i
            } else {
                points.push(p.clone());
                points.len() - 1
            }
        };
        let mut pairs = Vec::new();
        for r in &data.pc {
            if r.preferred == r.other {
                continue;
            }
            let a = index_of(&r.preferred, &mut points);
            let b = index_of(&r.other, &mut points);
            pairs.push((a, b));
        }
        let constraints = if points.is_empty() {
            Vec::new()
        } else {
            constraint_grid(&points, per_axis)
                .into_iter()
                .flat_map(|c| (0..l).map(move |a| (c.clone(), a)))
                .collect()
        };
        Self::new(points, pairs, constraints, nu, sigma_pc)
    }

    pub fn new(
        points: Vec<Vec<f64>>,
        pairs: Vec<(usize, usize)>,
        constraints: Vec<(Vec<f64>, usize)>,
        nu: f64,
        sigma_pc: f64,
    ) -> Result<Self> {
        if !(nu > 0.0 && sigma_pc > 0.0) {
            return Err(Error::invalid("ν and σ_PC must be positive"));
        }
        let l = points.first().or(constraints.first().map(|c| &c.0)).map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != l) || constraints.iter().any(|(c, a)| c.len() != l || *a >= l) {
            return Err(Error::invalid("training points and constraints must share one dimension"));
        }
        if pairs.iter().any(|&(a, b)| a >= points.len() || b >= points.len()) {
            return Err(Error::invalid("comparison index out of range"));
        }
        Ok(Self { points, pairs, constraints, nu, sigma_pc })
    }

    pub fn latent_dim(&self) -> usize {
        self.points.len() + self.constraints.len()
    }

    fn n_sites(&self) -> usize {
        self.pairs.len() + self.constraints.len()
    }
}

/// Uniform grid over the bounding box of `points`, duplicates removed.
pub fn constraint_grid(points: &[Vec<f64>], per_axis: usize) -> Vec<Vec<f64>> {
    let l = points[0].len();
    let axes: Vec<Vec<f64>> = (0..l)
        .map(|d| {
            let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            let mut axis = if hi > lo { linspace(lo, hi, per_axis.max(1)) } else { vec![lo] };
            axis.dedup();
            axis
        })
        .collect();
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    grid
}

/// `∂k(c, x)/∂c_a`.
fn dk(c: &[f64], x: &[f64], a: usize, kernel: &KernelConfig) -> f64 {
    -2.0 * (c[a] - x[a]) / kernel.lengthscale * kernel.eval(c, x)
}

/// `∂²k(c, c')/∂c_a ∂c'_b`.
fn ddk(c: &[f64], c2: &[f64], a: usize, b: usize, kernel: &KernelConfig) -> f64 {
    let t = kernel.lengthscale;
    let delta = if a == b { 1.0 } else { 0.0 };
    kernel.eval(c, c2) * (2.0 * delta / t - 4.0 * (c[a] - c2[a]) * (c[b] - c2[b]) / (t * t))
}

/// Prior covariance of `[U(points); ∂U(constraints)]`.
pub fn build_joint_prior(train: &PgpmTrainingSet, kernel: &KernelConfig) -> DMatrix<f64> {
    let n = train.points.len();
    let d = train.latent_dim();
    let mut k = DMatrix::zeros(d, d);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&train.points[i], &train.points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        for (m, (c, a)) in train.constraints.iter().enumerate() {
            let v = dk(c, &train.points[i], *a, kernel);
            k[(i, n + m)] = v;
            k[(n + m, i)] = v;
        }
    }
    for (m, (c, a)) in train.constraints.iter().enumerate() {
        for (m2, (c2, b)) in train.constraints.iter().enumerate().skip(m) {
            let v = ddk(c, c2, *a, *b, kernel);
            k[(n + m, n + m2)] = v;
            k[(n + m2, n + m)] = v;
        }
    }
    k
}

/// Cross-covariances between `U(x)` and every latent.
fn cross_cov(train: &PgpmTrainingSet, kernel: &KernelConfig, x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = train.points.iter().map(|p| kernel.eval(p, x)).collect();
    out.extend(train.constraints.iter().map(|(c, a)| dk(c, x, *a, kernel)));
    out
}

/// `A k`: project latent-space covariances onto the sites.
fn project(train: &PgpmTrainingSet, latent: &[f64]) -> DVector<f64> {
    let n = train.points.len();
    let mut out = Vec::with_capacity(train.n_sites());
    out.extend(train.pairs.iter().map(|&(a, b)| latent[a] - latent[b]));
    out.extend((0..train.constraints.len()).map(|m| latent[n + m]));
    DVector::from_vec(out)
}

fn site_scales(train: &PgpmTrainingSet) -> Vec<f64> {
    let pc = 1.0 / (std::f64::consts::SQRT_2 * train.sigma_pc);
    let mono = 1.0 / train.nu;
    let mut c = vec![pc; train.pairs.len()];
    c.extend(std::iter::repeat_n(mono, train.constraints.len()));
    c
}

#[derive(Debug, Clone)]
pub struct PgpmPosterior {
    train: PgpmTrainingSet,
    kernel: KernelConfig,
    /// Approximate posterior mean of the latent vector.
    pub mean: DVector<f64>,
    /// Approximate posterior covariance of the latent vector.
    pub cov: DMatrix<f64>,
    pub site_tau: Vec<f64>,
    pub site_nu: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    beta: DVector<f64>,
    w: DMatrix<f64>,
}

struct SiteSpace {
    cs: DMatrix<f64>,
    w: DMatrix<f64>,
}

/// `Cs = G - G W G` with `W = S^½ B⁻¹ S^½`, `B = I + S^½ G S^½`.
fn site_posterior(g: &DMatrix<f64>, tau: &[f64]) -> Result<SiteSpace> {
    let q = tau.len();
    let sq: Vec<f64> = tau.iter().map(|t| t.max(0.0).sqrt()).collect();
    let mut b = DMatrix::identity(q, q);
    for i in 0..q {
        for j in 0..q {
            b[(i, j)] += sq[i] * g[(i, j)] * sq[j];
        }
    }
    let chol = b.cholesky().ok_or_else(|| Error::Numerical("EP matrix B is not positive definite".into()))?;
    let binv = chol.inverse();
    let mut w = binv;
    for i in 0..q {
        for j in 0..q {
            w[(i, j)] *= sq[i] * sq[j];
        }
    }
    let cs = g - g * &w * g;
    Ok(SiteSpace { cs, w })
}

/// Runs expectation propagation. A result is returned even when the sweep
/// cap is hit; `converged` reports which case occurred.
pub fn ep_fit(train: &PgpmTrainingSet, cfg: &PgpmConfig) -> Result<PgpmPosterior> {
    if train.pairs.is_empty() {
        return Err(Error::invalid("PGPM needs at least one pairwise comparison"));
    }
    fit_sites(train, cfg)
}

fn fit_sites(train: &PgpmTrainingSet, cfg: &PgpmConfig) -> Result<PgpmPosterior> {
    let kernel = cfg.kernel;
    let mut k = build_joint_prior(train, &kernel);
    let jitter = 1e-8 * kernel.amplitude;
    for i in 0..k.nrows() {
        k[(i, i)] += jitter;
    }
    let q = train.n_sites();
    // G = A K Aᵀ, built column by column from A K
    let ak: Vec<DVector<f64>> =
        (0..k.ncols()).map(|j| project(train, k.column(j).as_slice())).collect();
    let mut g = DMatrix::zeros(q, q);
    for col in 0..q {
        let row_col: Vec<f64> = ak.iter().map(|v| v[col]).collect();
        let gcol = project(train, &row_col);
        for r in 0..q {
            g[(r, col)] = gcol[r];
        }
    }
    let g = (&g + g.transpose()) * 0.5;

    let scales = site_scales(train);
    let mut tau = vec![0.0; q];
    let mut nut = vec![0.0; q];
    let mut cs = g.clone();
    let mut ms: DVector<f64> = DVector::zeros(q);
    let mut converged = q == 0;
    let mut sweeps = 0;

    while !converged && sweeps < cfg.max_sweeps {
        sweeps += 1;
        let old_tau = tau.clone();
        let old_nu = nut.clone();
        for j in 0..q {
            let v = cs[(j, j)];
            let m = ms[j];
            if !(v > 0.0) {
                continue;
            }
            let tau_c = 1.0 / v - tau[j];
            if !(tau_c > 0.0) {
                continue;
            }
            let nu_c = m / v - nut[j];
            let (mc, vc) = (nu_c / tau_c, 1.0 / tau_c);
            let c = scales[j];
            let denom2 = 1.0 + c * c * vc;
            let denom = denom2.sqrt();
            let z = c * mc / denom;
            let r = mills_ratio(z);
            let m_hat = mc + vc * c * r / denom;
            let v_hat = vc - vc * vc * c * c * r * (z + r) / denom2;
            if !(v_hat > 0.0 && v_hat.is_finite() && m_hat.is_finite()) {
                continue;
            }
            let tau_new = (1.0 / v_hat - tau_c).max(0.0);
            let nu_new = m_hat / v_hat - nu_c;
            let tau_d = cfg.damping * tau_new + (1.0 - cfg.damping) * tau[j];
            let nu_d = cfg.damping * nu_new + (1.0 - cfg.damping) * nut[j];
            let dtau = tau_d - tau[j];
            tau[j] = tau_d;
            nut[j] = nu_d;
            let col = cs.column(j).clone_owned();
            let denom = 1.0 + dtau * col[j];
            if denom > 0.0 {
                cs -= (dtau / denom) * &col * col.transpose();
            }
            ms = &cs * DVector::from_column_slice(&nut);
        }
        cs = site_posterior(&g, &tau)?.cs;
        ms = &cs * DVector::from_column_slice(&nut);
        let change = tau
            .iter()
            .zip(&old_tau)
            .chain(nut.iter().zip(&old_nu))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        converged = change < cfg.tolerance;
    }

    let SiteSpace { w, .. } = site_posterior(&g, &tau)?;
    let nu_vec = DVector::from_column_slice(&nut);
    let beta = &nu_vec - &w * (&g * &nu_vec);

    // latent-space moments: μ = K Aᵀ β, Σ = K - K Aᵀ W A K
    let d = k.nrows();
    let mut ak_mat = DMatrix::zeros(q, d);
    for (j, v) in ak.iter().enumerate() {
        ak_mat.set_column(j, v);
    }
    let mean = ak_mat.transpose() * &beta;
    let cov = &k - ak_mat.transpose() * &w * &ak_mat;

    Ok(PgpmPosterior { train: train.clone(), kernel, mean, cov, site_tau: tau, site_nu: nut, converged, sweeps, beta, w })
}

impl PgpmPosterior {
    /// The GP prior (no sites); predictions are mean 0, variance `θ1`.
    pub fn prior(cfg: &PgpmConfig) -> Self {
        let train = PgpmTrainingSet { points: Vec::new(), pairs: Vec::new(), constraints: Vec::new(), nu: cfg.nu, sigma_pc: cfg.sigma_pc };
        fit_sites(&train, cfg).expect("empty EP problem cannot fail")
    }

    /// Fits to the PC records of `data`.
    pub fn fit(data: &PreferenceDataset, l: usize, cfg: &PgpmConfig) -> Result<Self> {
        let train = PgpmTrainingSet::from_dataset(data, l, cfg.per_axis(l), cfg.nu, cfg.sigma_pc)?;
        if train.pairs.is_empty() {
            return Ok(Self::prior(cfg));
        }
        ep_fit(&train, cfg)
    }

    pub fn training_set(&self) -> &PgpmTrainingSet {
        &self.train
    }

    pub fn kernel(&self) -> KernelConfig {
        self.kernel
    }

    /// Predictive mean and variance of `U(x)`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        if self.beta.is_empty() {
            return (0.0, self.kernel.amplitude);
        }
        let p = project(&self.train, &cross_cov(&self.train, &self.kernel, x));
        let mean = p.dot(&self.beta);
        let var = self.kernel.amplitude - p.dot(&(&self.w * &p));
        if var < 0.0 {
            log::debug!("clamping negative PGPM predictive variance {var}");
        }
        (mean, var.max(0.0))
    }

    /// Predictive mean and covariance of `U` at several points.
    pub fn predict_joint(&self, xs: &[&[f64]]) -> (Vec<f64>, DMatrix<f64>) {
        let n = xs.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.kernel.eval(xs[i], xs[j]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        if self.beta.is_empty() {
            return (vec![0.0; n], cov);
        }
        let ps: Vec<DVector<f64>> =
            xs.iter().map(|x| project(&self.train, &cross_cov(&self.train, &self.kernel, x))).collect();
        let means = ps.iter().map(|p| p.dot(&self.beta)).collect();
        for i in 0..n {
            let wp = &self.w * &ps[i];
            for j in i..n {
                let v = cov[(i, j)] - ps[j].dot(&wp);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        (means, cov)
    }

    /// `MI(z_PC; U)` for a comparison query under the Gaussian predictive.
    pub fn mi_pc(&self, q: &PcQuery) -> f64 {
        let (m, c) = self.predict_joint(&[&q.first, &q.second]);
        let v = c[(0, 0)] + c[(1, 1)] - 2.0 * c[(0, 1)];
        mi_pc_gaussian(m[0] - m[1], v.max(0.0), self.train.sigma_pc)
    }

    /// Best predictive mean among the observed objective vectors.
    pub fn incumbent(&self, observed_y: &[Vec<f64>]) -> f64 {
        observed_y.iter().map(|y| self.predict(y).0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// EI over `f ~ N(mean, diag(std²))`: Monte Carlo over `f`, closed-form
    /// Gaussian EI for `U` given `f`.
    pub fn expected_improvement<R: Rng + ?Sized>(&self, mean: &[f64], std: &[f64], best: f64, n_f: usize, rng: &mut R) -> f64 {
        let mut f = vec![0.0; mean.len()];
        let mut acc = 0.0;
        for _ in 0..n_f.max(1) {
            for l in 0..mean.len() {
                let z: f64 = rng.sample(StandardNormal);
                f[l] = mean[l] + std[l] * z;
            }
            let (m, v) = self.predict(&f);
            acc += gaussian_ei(m, v.sqrt(), best);
        }
        acc / n_f.max(1) as f64
    }
}

impl UtilityModel for PgpmPosterior {
    fn n_objectives(&self) -> usize {
        self.train.points.first().map_or(0, Vec::len)
    }

    fn value(&self, f: &[f64]) -> f64 {
        self.predict(f).0
    }

    /// Gradient of the predictive mean.
    fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let l = f.len();
        let n = self.train.points.len();
        let mut g = vec![0.0; l];
        if self.beta.is_empty() {
            return g;
        }
        for (b, gb) in g.iter_mut().enumerate() {
            // d/df_b of every latent cross-covariance, then projected
            let mut d: Vec<f64> = self.train.points.iter().map(|p| dk(f, p, b, &self.kernel)).collect();
            d.extend(self.train.constraints.iter().map(|(c, a)| ddk(c, f, *a, b, &self.kernel)));
            debug_assert_eq!(d.len(), n + self.train.constraints.len());
            *gb = project(&self.train, &d).dot(&self.beta);
        }
        g
    }
}

/// Fraction of grid edges along which the predictive mean decreases, and the
/// largest decrease. `per_axis^L` grid over `[lo, hi]^L`.
pub fn monotonicity_violations(post: &PgpmPosterior, l: usize, lo: f64, hi: f64, per_axis: usize) -> (f64, f64) {
    let axis = linspace(lo, hi, per_axis);
    let grid = constraint_grid(&[vec![lo; l], vec![hi; l]], per_axis);
    let values: Vec<f64> = grid.iter().map(|x| post.predict(x).0).collect();
    let mut edges = 0usize;
    let mut bad = 0usize;
    let mut worst = 0.0f64;
    let stride = |d: usize| per_axis.pow((l - 1 - d) as u32);
    for (i, x) in grid.iter().enumerate() {
        for (d, xd) in x.iter().enumerate() {
            let pos = axis.iter().position(|v| v == xd).unwrap_or(0);
            if pos + 1 >= per_axis {
                continue;
            }
            let j = i + stride(d);
            edges += 1;
            let drop = values[i] - values[j];
            if drop > 0.0 {
                bad += 1;
                worst = worst.max(drop);
            }
        }
    }
    (if edges == 0 { 0.0 } else { bad as f64 / edges as f64 }, worst)
}

/// Draws from the predictive `U(x)` distribution.
pub fn sample_utility<R: Rng + ?Sized>(post: &PgpmPosterior, x: &[f64], n: usize, rng: &mut R) -> Vec<f64> {
    let (m, v) = post.predict(x);
    let s = v.sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            m + s * z
        })
        .collect()
}
