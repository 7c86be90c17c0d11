//! Interactive optimization session.
//!
//! A [`Session`] owns everything one optimization needs: the candidate set,
//! objective observations, preference data, the current weight posterior and
//! at most one pending preference query. It moves through four operations
//! (`next_query`, `answer`, `suggest`, `observe`) and serializes to JSON so a
//! session can be persisted and resumed with identical behaviour. Every
//! random choice draws from a stream keyed by the session seed and an
//! operation counter that is part of the persisted state.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, ei_csf, score_candidates, select_next, IncumbentState};
use crate::active::{self, build_query_pool, IrQuery, PcQuery, Query, QueryKind};
use crate::benchmarks::{BenchmarkName, BenchmarkProblem, BenchmarkSpec, DtlzNorm};
use crate::dmsim::TrueUtility;
use crate::kernelgp::{GpFitOptions, GpPosterior, ObjectiveObservation, PriorMean};
use crate::pgpm::{PgpmConfig, PgpmPosterior};
use crate::prefmodel::{
    self, DirichletPrior, IrRecord, McmcConfig, NoiseConfig, ParametricUtility, PcRecord, PosteriorSamples,
    PreferenceDataset, UtilityFamily,
};
use crate::stats::{self, derive_seed};
use crate::utility::{CsfUtility, UtilityModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// EI over the weight posterior, learned from PC and IR answers.
    Proposed,
    ProposedPc,
    ProposedIr,
    /// Uniformly random candidate selection.
    Random,
    /// Random scalarization: one prior draw of `w` per iteration.
    MoboRs,
    /// EI under the true utility.
    EiTp,
    /// EI under a monotone preferential GP learned from PC answers.
    ProposedPgpm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Proposed,
        Method::ProposedPc,
        Method::ProposedIr,
        Method::Random,
        Method::MoboRs,
        Method::EiTp,
        Method::ProposedPgpm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedPc => "proposed-pc",
            Method::ProposedIr => "proposed-ir",
            Method::Random => "random",
            Method::MoboRs => "mobo-rs",
            Method::EiTp => "ei-tp",
            Method::ProposedPgpm => "proposed-pgpm",
        }
    }

    pub fn uses_pc(&self) -> bool {
        matches!(self, Method::Proposed | Method::ProposedPc | Method::ProposedPgpm)
    }

    pub fn uses_ir(&self) -> bool {
        matches!(self, Method::Proposed | Method::ProposedIr)
    }

    pub fn learns_preferences(&self) -> bool {
        self.uses_pc() || self.uses_ir()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        // the CSF model learned from comparisons only
        if lower == "proposed-csf" {
            return Ok(Method::ProposedPc);
        }
        Method::ALL.into_iter().find(|m| m.as_str() == lower).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
            Error::Config(format!("unknown method '{s}'; valid methods: {}", valid.join(", ")))
        })
    }
}

/// Affine map between original objective units and the scaled space where
/// larger is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScale {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// When set, smaller original values are better.
    #[serde(default)]
    pub minimize: bool,
}

impl ObjectiveScale {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, minimize: bool) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config("objective bounds must be non-empty and paired".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a)) {
            return Err(Error::Config("each objective bound needs lower < upper".into()));
        }
        Ok(Self { lower, upper, minimize })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn to_scaled(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(l, v)| {
                let span = self.upper[l] - self.lower[l];
                if self.minimize {
                    (self.upper[l] - v) / span
                } else {
                    (v - self.lower[l]) / span
                }
            })
            .collect()
    }

    pub fn to_original(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .enumerate()
            .map(|(l, v)| {
                let span = self.upper[l] - self.lower[l];
                if self.minimize {
                    self.upper[l] - v * span
                } else {
                    self.lower[l] + v * span
                }
            })
            .collect()
    }
}

/// Where objective values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProblemSource {
    /// A built-in test function; the session can evaluate candidates itself.
    Benchmark {
        name: BenchmarkName,
        #[serde(default)]
        dtlz_norm: DtlzNorm,
    },
    /// The client evaluates objectives and reports them through `observe`.
    External,
}

fn default_alpha() -> f64 {
    2.0
}
fn default_ei_weight_samples() -> usize {
    64
}
fn default_mc_samples() -> usize {
    1000
}
fn default_pgpm_f_samples() -> usize {
    32
}
fn default_pool_size() -> usize {
    active::DEFAULT_POOL_SIZE
}
fn default_initial_points() -> usize {
    4
}
fn default_method() -> Method {
    Method::Proposed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "family_default")]
    pub utility_family: UtilityFamily,
    /// Symmetric Dirichlet concentration.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    /// Evenly spaced posterior samples used in the EI average.
    #[serde(default = "default_ei_weight_samples")]
    pub ei_weight_samples: usize,
    /// Joint `(w, f)` draws for Monte-Carlo EI.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Objective draws per candidate for the preferential-GP EI.
    #[serde(default = "default_pgpm_f_samples")]
    pub pgpm_f_samples: usize,
    #[serde(default)]
    pub pgpm: PgpmConfig,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_initial_points")]
    pub initial_points: usize,
    #[serde(default)]
    pub seed: u64,
    /// Known truth for the EI-TP baseline. Never exposed through summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_utility: Option<TrueUtility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_labels: Option<Vec<String>>,
}

fn family_default() -> UtilityFamily {
    UtilityFamily::Csf
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            method: Method::Proposed,
            utility_family: UtilityFamily::Csf,
            alpha: 2.0,
            noise: NoiseConfig::default(),
            mcmc: McmcConfig::default(),
            ei_weight_samples: default_ei_weight_samples(),
            mc_samples: default_mc_samples(),
            pgpm_f_samples: default_pgpm_f_samples(),
            pgpm: PgpmConfig::default(),
            pool_size: default_pool_size(),
            initial_points: default_initial_points(),
            seed: 0,
            true_utility: None,
            objective_labels: None,
        }
    }
}

impl SessionConfig {
    fn validate(&self, l: usize) -> Result<()> {
        if l == 0 {
            return Err(Error::Config("number of objectives must be at least 1".into()));
        }
        if self.method.learns_preferences() && l < 2 {
            return Err(Error::Config("preference learning needs at least two objectives".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("Dirichlet concentration must be positive".into()));
        }
        if !(self.noise.sigma_pc > 0.0 && self.noise.sigma_ir > 0.0) {
            return Err(Error::Config("noise scales must be positive".into()));
        }
        if self.mcmc.n_samples == 0 || self.ei_weight_samples == 0 || self.mc_samples == 0 || self.pool_size == 0 {
            return Err(Error::Config("sample counts and pool size must be at least 1".into()));
        }
        if self.method == Method::EiTp && self.true_utility.is_none() {
            return Err(Error::Config("ei-tp needs the true utility".into()));
        }
        if let Some(t) = &self.true_utility {
            if t.n_objectives() != l {
                return Err(Error::Config("true utility dimension does not match the objectives".into()));
            }
        }
        if let Some(labels) = &self.objective_labels {
            if labels.len() != l {
                return Err(Error::Config(format!("expected {l} objective labels, got {}", labels.len())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Candidate index when `x` is one of the candidates.
    pub index: Option<usize>,
    /// Input in original units.
    pub x: Vec<f64>,
    /// Objectives in scaled units.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub id: u64,
    pub query: Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcChoice {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Answer {
    Pc { preferred: PcChoice },
    Ir { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub id: u64,
    pub query: Query,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub index: usize,
    /// Input in original units.
    pub x: Vec<f64>,
    /// Acquisition value; absent for random picks.
    pub score: Option<f64>,
    /// Whether this is one of the initial random points.
    pub initial: bool,
}

/// A query in both original and scaled units, for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub id: u64,
    pub kind: QueryKind,
    /// PC: the two objective vectors in original units; IR: one vector.
    pub vectors: Vec<Vec<f64>>,
    pub scaled: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub mutual_information: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncumbentSummary {
    pub observation: usize,
    pub index: Option<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub n_objectives: usize,
    pub input_dim: usize,
    pub method: Method,
    pub n_observations: usize,
    pub n_pc: usize,
    pub n_ir: usize,
    pub incumbent: Option<IncumbentSummary>,
    pub posterior_mean_w: Option<Vec<f64>>,
    pub w_quantile_05: Option<Vec<f64>>,
    pub w_quantile_95: Option<Vec<f64>>,
    pub pending: Option<PendingQuery>,
    pub recent_queries: Vec<QueryLogEntry>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Default)]
struct Caches {
    benchmark: Option<std::sync::Arc<BenchmarkProblem>>,
    unit_candidates: Vec<Vec<f64>>,
    gp: Option<(usize, std::sync::Arc<GpPosterior>)>,
    pgpm: Option<(usize, std::sync::Arc<PgpmPosterior>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub config: SessionConfig,
    pub source: ProblemSource,
    pub n_objectives: usize,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub scale: ObjectiveScale,
    /// Candidate inputs in original units.
    pub candidates: Vec<Vec<f64>>,
    pub observations: Vec<Observation>,
    pub preferences: PreferenceDataset,
    pub posterior: Option<PosteriorSamples>,
    pub pending: Option<PendingQuery>,
    pub counter: u64,
    pub next_query_id: u64,
    pub log: Vec<QueryLogEntry>,
    #[serde(skip)]
    caches: Caches,
}

impl Session {
    /// A session on a built-in benchmark, with objectives scaled over its
    /// candidate set.
    pub fn benchmark(config: SessionConfig, name: BenchmarkName, dtlz_norm: DtlzNorm) -> Result<Self> {
        let problem = BenchmarkProblem::new(BenchmarkSpec::new(name).with_dtlz_norm(dtlz_norm))?;
        let l = problem.n_objectives();
        let mut lower = vec![f64::INFINITY; l];
        let mut upper = vec![f64::NEG_INFINITY; l];
        for row in &problem.raw {
            for j in 0..l {
                lower[j] = lower[j].min(row[j]);
                upper[j] = upper[j].max(row[j]);
            }
        }
        let scale = ObjectiveScale::new(lower, upper, true)?;
        let spec = problem.spec.clone();
        let candidates = problem.candidates.clone();
        let mut s = Self::build(
            config,
            ProblemSource::Benchmark { name, dtlz_norm },
            l,
            spec.lower.clone(),
            spec.upper.clone(),
            scale,
            candidates,
        )?;
        s.caches.benchmark = Some(std::sync::Arc::new(problem));
        Ok(s)
    }

    /// A session whose objectives are evaluated by the client. Inputs are
    /// normalized by `input_bounds` (or the candidates' bounding box).
    pub fn external(
        config: SessionConfig,
        candidates: Vec<Vec<f64>>,
        input_bounds: Option<(Vec<f64>, Vec<f64>)>,
        scale: ObjectiveScale,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("external mode needs a non-empty candidate list".into()));
        }
        let d = candidates[0].len();
        if d == 0 || candidates.iter().any(|c| c.len() != d || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("candidates must share one positive dimension and be finite".into()));
        }
        let (lower, upper) = match input_bounds {
            Some((lo, hi)) => {
                if lo.len() != d || hi.len() != d || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
                    return Err(Error::Config("input bounds must match the candidate dimension with lower < upper".into()));
                }
                (lo, hi)
            }
            None => {
                let lo: Vec<f64> = (0..d).map(|j| candidates.iter().map(|c| c[j]).fold(f64::INFINITY, f64::min)).collect();
                let hi: Vec<f64> =
                    (0..d).map(|j| candidates.iter().map(|c| c[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
                let hi = hi.iter().zip(&lo).map(|(h, l)| if h > l { *h } else { l + 1.0 }).collect();
                (lo, hi)
            }
        };
        let l = scale.len();
        Self::build(config, ProblemSource::External, l, lower, upper, scale, candidates)
    }

    fn build(
        config: SessionConfig,
        source: ProblemSource,
        l: usize,
        input_lower: Vec<f64>,
        input_upper: Vec<f64>,
        scale: ObjectiveScale,
        candidates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        config.validate(l)?;
        let mut s = Self {
            config,
            source,
            n_objectives: l,
            input_lower,
            input_upper,
            scale,
            candidates,
            observations: Vec::new(),
            preferences: PreferenceDataset::new(),
            posterior: None,
            pending: None,
            counter: 0,
            next_query_id: 1,
            log: Vec::new(),
            caches: Caches::default(),
        };
        s.rehydrate()?;
        if s.uses_weight_posterior() {
            s.refresh_posterior()?;
        }
        Ok(s)
    }

    /// Restores a session from its JSON snapshot.
    pub fn from_json(json: &str) -> Result<Self> {
        let mut s: Session = serde_json::from_str(json)?;
        s.config.validate(s.n_objectives)?;
        s.rehydrate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn rehydrate(&mut self) -> Result<()> {
        if let ProblemSource::Benchmark { name, dtlz_norm } = self.source {
            if self.caches.benchmark.is_none() {
                let p = BenchmarkProblem::new(BenchmarkSpec::new(name).with_dtlz_norm(dtlz_norm))?;
                self.caches.benchmark = Some(std::sync::Arc::new(p));
            }
        }
        self.caches.unit_candidates = self.candidates.iter().map(|x| self.to_unit(x)).collect();
        Ok(())
    }

    fn uses_weight_posterior(&self) -> bool {
        self.config.method != Method::ProposedPgpm
    }

    pub fn input_dim(&self) -> usize {
        self.input_lower.len()
    }

    pub fn benchmark_problem(&self) -> Option<&BenchmarkProblem> {
        self.caches.benchmark.as_deref()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.input_lower[j]) / (self.input_upper[j] - self.input_lower[j]))
            .collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.config
            .objective_labels
            .clone()
            .unwrap_or_else(|| (1..=self.n_objectives).map(|i| format!("f{i}")).collect())
    }

    fn next_seed(&mut self) -> u64 {
        let s = derive_seed(self.config.seed, self.counter);
        self.counter += 1;
        s
    }

    fn observed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.candidates.len()];
        for o in &self.observations {
            if let Some(i) = o.index {
                mask[i] = true;
            }
        }
        mask
    }

    fn observed_y(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|o| o.y.clone()).collect()
    }

    fn gp(&mut self) -> Result<std::sync::Arc<GpPosterior>> {
        let n = self.observations.len();
        if let Some((k, gp)) = &self.caches.gp {
            if *k == n {
                return Ok(gp.clone());
            }
        }
        let data: Vec<ObjectiveObservation> =
            self.observations.iter().map(|o| ObjectiveObservation { x: self.to_unit(&o.x), y: o.y.clone() }).collect();
        let gp = std::sync::Arc::new(GpPosterior::fit(&data, &GpFitOptions { prior_mean: PriorMean::Empirical, ..GpFitOptions::default() })?);
        self.caches.gp = Some((n, gp.clone()));
        Ok(gp)
    }

    fn pgpm(&mut self) -> Result<std::sync::Arc<PgpmPosterior>> {
        let n = self.preferences.pc.len();
        if let Some((k, p)) = &self.caches.pgpm {
            if *k == n {
                return Ok(p.clone());
            }
        }
        let cfg = PgpmConfig { sigma_pc: self.config.noise.sigma_pc, ..self.config.pgpm.clone() };
        let p = std::sync::Arc::new(PgpmPosterior::fit(&self.preferences, self.n_objectives, &cfg)?);
        self.caches.pgpm = Some((n, p.clone()));
        Ok(p)
    }

    fn prior(&self) -> DirichletPrior {
        DirichletPrior { alpha: vec![self.config.alpha; self.n_objectives] }
    }

    fn refresh_posterior(&mut self) -> Result<()> {
        let seed = self.next_seed();
        let warm = self.posterior.as_ref().map(|p| p.chain.clone());
        let post = prefmodel::sample_weights(
            &self.prior(),
            &self.preferences,
            &self.config.noise,
            &self.config.utility_family,
            &self.config.mcmc,
            seed,
            warm.as_ref(),
        )?;
        self.posterior = Some(post);
        Ok(())
    }

    /// Selects a preference query by mutual information and makes it pending.
    pub fn next_query(&mut self, kind: QueryKind) -> Result<QueryPayload> {
        if self.pending.is_some() {
            return Err(Error::Conflict("a query is already pending".into()));
        }
        if self.n_objectives < 2 {
            return Err(Error::invalid("preference queries need at least two objectives"));
        }
        if kind == QueryKind::Ir && self.config.method == Method::ProposedPgpm {
            return Err(Error::invalid("the preferential GP learns from comparisons only"));
        }
        let anchors: Vec<Vec<f64>> = if self.observations.is_empty() {
            Vec::new()
        } else {
            let gp = self.gp()?;
            self.caches.unit_candidates.iter().map(|x| gp.predict(x).0).collect()
        };
        let seed = self.next_seed();
        let mut rng = stats::rng_from(seed, 0x9001);
        let pool = build_query_pool(kind, &anchors, self.n_objectives, self.config.pool_size, &mut rng);
        let (idx, mi) = if self.config.method == Method::ProposedPgpm {
            let post = self.pgpm()?;
            let scores = score_candidates(pool.len(), |i| match &pool[i] {
                Query::Pc(q) => post.mi_pc(q),
                Query::Ir(_) => f64::NAN,
            });
            let i = select_next(&scores)?;
            (i, scores[i])
        } else {
            let utilities = self.posterior_utilities()?;
            let i = active::select_query(&pool, &utilities, &self.config.noise)?;
            let mi = active::mi_query(&pool[i], &utilities, &self.config.noise)?;
            (i, mi)
        };
        let pending = PendingQuery { id: self.next_query_id, query: pool[idx].clone() };
        self.next_query_id += 1;
        self.pending = Some(pending.clone());
        Ok(self.payload(&pending, mi))
    }

    fn posterior_utilities(&self) -> Result<Vec<ParametricUtility>> {
        let post = self.posterior.as_ref().ok_or_else(|| Error::invalid("no weight posterior available"))?;
        Ok(post.utilities())
    }

    /// Display form of a pending query.
    pub fn payload(&self, pending: &PendingQuery, mutual_information: f64) -> QueryPayload {
        let (kind, scaled) = match &pending.query {
            Query::Pc(q) => (QueryKind::Pc, vec![q.first.clone(), q.second.clone()]),
            Query::Ir(q) => (QueryKind::Ir, vec![q.f.clone()]),
        };
        QueryPayload {
            id: pending.id,
            kind,
            vectors: scaled.iter().map(|f| self.scale.to_original(f)).collect(),
            scaled,
            labels: self.labels(),
            mutual_information,
        }
    }

    /// Records the answer to the pending query and refreshes the posterior.
    pub fn answer(&mut self, query_id: u64, answer: Answer) -> Result<()> {
        let pending = self.pending.clone().ok_or_else(|| Error::Conflict("no query is pending".into()))?;
        if pending.id != query_id {
            return Err(Error::Conflict(format!("query {query_id} is not the pending query {}", pending.id)));
        }
        match (&pending.query, answer) {
            (Query::Pc(q), Answer::Pc { preferred }) => {
                let (a, b) = match preferred {
                    PcChoice::First => (q.first.clone(), q.second.clone()),
                    PcChoice::Second => (q.second.clone(), q.first.clone()),
                };
                self.preferences.pc.push(PcRecord { preferred: a, other: b });
            }
            (Query::Ir(q), Answer::Ir { dim }) => {
                if dim >= self.n_objectives {
                    return Err(Error::invalid(format!(
                        "dimension {dim} out of range for {} objectives",
                        self.n_objectives
                    )));
                }
                self.preferences.ir.push(IrRecord { f: q.f.clone(), dim });
            }
            _ => return Err(Error::invalid("answer kind does not match the pending query")),
        }
        self.pending = None;
        self.log.push(QueryLogEntry { id: pending.id, query: pending.query, answer });
        if self.uses_weight_posterior() {
            self.refresh_posterior()?;
        }
        Ok(())
    }

    /// Adds preference records directly, bypassing the query protocol.
    pub fn add_preferences(&mut self, data: &PreferenceDataset) -> Result<()> {
        data.validate(self.n_objectives)?;
        self.preferences.pc.extend(data.pc.iter().cloned());
        self.preferences.ir.extend(data.ir.iter().cloned());
        if self.uses_weight_posterior() {
            self.refresh_posterior()?;
        }
        Ok(())
    }

    /// Chooses the next candidate to evaluate.
    pub fn suggest(&mut self) -> Result<Suggestion> {
        let mask = self.observed_mask();
        if mask.iter().all(|m| *m) {
            return Err(Error::invalid("every candidate has already been observed"));
        }
        let seed = self.next_seed();
        if self.observations.len() < self.config.initial_points || self.config.method == Method::Random {
            // initial designs depend only on the session seed so methods
            // compared on one seed start from the same points
            let mut rng = if self.observations.len() < self.config.initial_points {
                stats::rng_from(derive_seed(self.config.seed, 0x1417), self.observations.len() as u64)
            } else {
                stats::rng_from(seed, 0x1A1D)
            };
            let free: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
            let index = free[rng.random_range(0..free.len())];
            return Ok(Suggestion {
                index,
                x: self.candidates[index].clone(),
                score: None,
                initial: self.observations.len() < self.config.initial_points,
            });
        }
        let gp = self.gp()?;
        let observed_y = self.observed_y();
        let (index, score) = match self.config.method {
            Method::Random => unreachable!(),
            Method::MoboRs => {
                let i = acquisition::random_scalarization_select(
                    &gp,
                    &self.caches.unit_candidates,
                    &observed_y,
                    &self.prior(),
                    &mask,
                    seed,
                )?;
                (i, None)
            }
            Method::EiTp => {
                let truth = self.config.true_utility.clone().ok_or_else(|| Error::Config("ei-tp needs the true utility".into()))?;
                let scores = self.score_true(&gp, &truth, &observed_y, &mask, seed)?;
                let i = select_next(&scores)?;
                (i, Some(scores[i]))
            }
            Method::ProposedPgpm => {
                let post = self.pgpm()?;
                let best = post.incumbent(&observed_y);
                let n_f = self.config.pgpm_f_samples;
                let units = &self.caches.unit_candidates;
                let scores = score_candidates(units.len(), |i| {
                    if mask[i] {
                        return f64::NEG_INFINITY;
                    }
                    let (m, s) = gp.predict(&units[i]);
                    let mut rng = stats::rng_from(seed, i as u64);
                    post.expected_improvement(&m, &s, best, n_f, &mut rng)
                });
                let i = select_next(&scores)?;
                (i, Some(scores[i]))
            }
            Method::Proposed | Method::ProposedPc | Method::ProposedIr => {
                let scores = self.score_posterior(&gp, &observed_y, &mask, seed)?;
                let i = select_next(&scores)?;
                (i, Some(scores[i]))
            }
        };
        Ok(Suggestion { index, x: self.candidates[index].clone(), score, initial: false })
    }

    fn score_posterior(&self, gp: &GpPosterior, observed_y: &[Vec<f64>], mask: &[bool], seed: u64) -> Result<Vec<f64>> {
        let post = self.posterior.as_ref().ok_or_else(|| Error::invalid("no weight posterior available"))?;
        let utilities = post.subsample(self.config.ei_weight_samples);
        let inc = IncumbentState::new(&utilities, observed_y)?;
        let units = &self.caches.unit_candidates;
        Ok(match self.config.utility_family {
            UtilityFamily::Csf => {
                let weights: Vec<_> = utilities.iter().map(|u| u.weights().clone()).collect();
                score_candidates(units.len(), |i| {
                    if mask[i] {
                        return f64::NEG_INFINITY;
                    }
                    let (m, s) = gp.predict(&units[i]);
                    acquisition::ei_quadrature(&m, &s, &weights, &inc).unwrap_or(f64::NAN)
                })
            }
            UtilityFamily::AugmentedCsf { .. } => {
                let n_f = (self.config.mc_samples / utilities.len()).max(1);
                score_candidates(units.len(), |i| {
                    if mask[i] {
                        return f64::NEG_INFINITY;
                    }
                    let (m, s) = gp.predict(&units[i]);
                    let mut rng = stats::rng_from(seed, i as u64);
                    acquisition::ei_mc(&m, &s, &utilities, &inc, n_f, &mut rng).unwrap_or(f64::NAN)
                })
            }
        })
    }

    fn score_true(
        &self,
        gp: &GpPosterior,
        truth: &TrueUtility,
        observed_y: &[Vec<f64>],
        mask: &[bool],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let inc = IncumbentState::new(std::slice::from_ref(truth), observed_y)?;
        let best = inc.best[0];
        let units = &self.caches.unit_candidates;
        let n_f = self.config.mc_samples;
        Ok(score_candidates(units.len(), |i| {
            if mask[i] {
                return f64::NEG_INFINITY;
            }
            let (m, s) = gp.predict(&units[i]);
            match truth {
                TrueUtility::Csf(u) => ei_csf(&m, &s, &u.weights, best).unwrap_or(f64::NAN),
                other => {
                    let mut rng = stats::rng_from(seed, i as u64);
                    acquisition::ei_mc(&m, &s, std::slice::from_ref(other), &inc, n_f, &mut rng).unwrap_or(f64::NAN)
                }
            }
        }))
    }

    /// Records an evaluation. `y` is in original units; in benchmark mode it
    /// may be omitted and is then computed from the test function.
    pub fn observe(&mut self, x: Vec<f64>, y: Option<Vec<f64>>) -> Result<usize> {
        if x.len() != self.input_dim() {
            return Err(Error::dim_mismatch("observation input", self.input_dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation input must be finite"));
        }
        let index = self.candidates.iter().position(|c| *c == x);
        let scaled = match y {
            Some(y) => {
                if y.len() != self.n_objectives {
                    return Err(Error::dim_mismatch("observation output", self.n_objectives, y.len()));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("observation output must be finite"));
                }
                self.scale.to_scaled(&y)
            }
            None => {
                let problem = self
                    .benchmark_problem()
                    .ok_or_else(|| Error::invalid("objective values are required in external mode"))?;
                match index {
                    Some(i) => problem.scaled[i].clone(),
                    None => self.scale.to_scaled(&problem.spec.evaluate(&x)?),
                }
            }
        };
        self.observations.push(Observation { index, x, y: scaled });
        Ok(self.observations.len() - 1)
    }

    /// Observes candidate `index` of a benchmark session.
    pub fn observe_candidate(&mut self, index: usize) -> Result<usize> {
        let x = self.candidates.get(index).cloned().ok_or_else(|| Error::invalid("candidate index out of range"))?;
        self.observe(x, None)
    }

    /// Observation with the best posterior-mean utility.
    pub fn incumbent(&mut self) -> Result<Option<IncumbentSummary>> {
        if self.observations.is_empty() {
            return Ok(None);
        }
        let values: Vec<f64> = if self.config.method == Method::ProposedPgpm {
            let post = self.pgpm()?;
            self.observations.iter().map(|o| post.value(&o.y)).collect()
        } else if let Some(post) = &self.posterior {
            let us = post.subsample(self.config.ei_weight_samples);
            self.observations
                .iter()
                .map(|o| us.iter().map(|u| u.value(&o.y)).sum::<f64>() / us.len() as f64)
                .collect()
        } else {
            let u = CsfUtility::new(crate::utility::WeightVector::uniform(self.n_objectives));
            self.observations.iter().map(|o| u.value(&o.y)).collect()
        };
        let best = select_next(&values)?;
        let o = &self.observations[best];
        Ok(Some(IncumbentSummary { observation: best, index: o.index, x: o.x.clone(), y: self.scale.to_original(&o.y) }))
    }

    /// State document for clients; never includes the true utility.
    pub fn summary(&mut self) -> Result<SessionSummary> {
        let incumbent = self.incumbent()?;
        let (mean, q05, q95, warning) = match &self.posterior {
            Some(p) => (
                Some(p.mean_weights()),
                Some(p.weight_quantile(0.05)),
                Some(p.weight_quantile(0.95)),
                p.warning.clone(),
            ),
            None => (None, None, None, None),
        };
        let start = self.log.len().saturating_sub(10);
        Ok(SessionSummary {
            n_objectives: self.n_objectives,
            input_dim: self.input_dim(),
            method: self.config.method,
            n_observations: self.observations.len(),
            n_pc: self.preferences.pc.len(),
            n_ir: self.preferences.ir.len(),
            incumbent,
            posterior_mean_w: mean,
            w_quantile_05: q05,
            w_quantile_95: q95,
            pending: self.pending.clone(),
            recent_queries: self.log[start..].to_vec(),
            warning,
        })
    }
}

/// Shorthand used by tests and bindings: a PC query from two vectors.
pub fn pc_query(first: Vec<f64>, second: Vec<f64>) -> Query {
    Query::Pc(PcQuery { first, second })
}

/// Shorthand for an IR query.
pub fn ir_query(f: Vec<f64>) -> Query {
    Query::Ir(IrQuery { f })
}
