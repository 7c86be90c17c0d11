//! Experiment runner: the optimization loop against a simulated decision
//! maker, baselines, regret metrics and CSV/JSON output.
//!
//! One run alternates a preference round (queries chosen by mutual
//! information and answered by [`SimulatedDm`]) with one BO step. All random
//! streams derive from the run seed, so a run is bit-reproducible.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{build_query_pool, select_query, Query, QueryKind};
use crate::benchmarks::{BenchmarkName, DtlzNorm};
use crate::dmsim::{sample_basis_truth, SimulatedDm, TrueUtility};
use crate::engine::{Answer, Method, PcChoice, QueryLogEntry, Session, SessionConfig};
use crate::prefmodel::{self, DirichletPrior, IrRecord, McmcConfig, NoiseConfig, PcRecord, PreferenceDataset, UtilityFamily};
use crate::stats::{self, derive_seed};
use crate::utility::{AugmentedCsfUtility, CsfUtility, UtilityModel};
use crate::{Error, Result};

/// How the hidden truth of each run is drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    /// CSF with `w ~ Dirichlet(α)`.
    #[default]
    Csf,
    /// Augmented CSF with `w ~ Dirichlet(α)` and reference point 0.
    AugmentedCsf { rho: f64 },
    /// Sum of `terms` sigmoid basis functions.
    Basis { terms: usize },
}

pub const DEFAULT_BASIS_TERMS: usize = 5;

fn d_iterations() -> usize {
    30
}
fn d_initial() -> usize {
    4
}
fn d_seeds() -> Vec<u64> {
    (1..=10).collect()
}
fn d_sigma() -> f64 {
    0.1
}
fn d_alpha() -> f64 {
    2.0
}
fn d_mc() -> usize {
    1000
}
fn d_ei_w() -> usize {
    64
}
fn d_family() -> UtilityFamily {
    UtilityFamily::Csf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkName,
    pub method: Method,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_initial")]
    pub initial_points: usize,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_sigma")]
    pub sigma_pc: f64,
    #[serde(default = "d_sigma")]
    pub sigma_ir: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_mc")]
    pub mc_samples: usize,
    #[serde(default = "d_ei_w")]
    pub ei_weight_samples: usize,
    #[serde(default)]
    pub truth: TruthSpec,
    #[serde(default = "d_family")]
    pub family: UtilityFamily,
    #[serde(default)]
    pub dtlz_norm: DtlzNorm,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

impl ExperimentConfig {
    pub fn new(benchmark: BenchmarkName, method: Method) -> Self {
        Self {
            benchmark,
            method,
            iterations: d_iterations(),
            initial_points: d_initial(),
            seeds: d_seeds(),
            sigma_pc: d_sigma(),
            sigma_ir: d_sigma(),
            alpha: d_alpha(),
            mc_samples: d_mc(),
            ei_weight_samples: d_ei_w(),
            truth: TruthSpec::Csf,
            family: d_family(),
            dtlz_norm: DtlzNorm::default(),
            mcmc: McmcConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.sigma_pc > 0.0 && self.sigma_ir > 0.0) {
            return Err(Error::Config("noise scales must be positive".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.mc_samples == 0 || self.ei_weight_samples == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        if let TruthSpec::Basis { terms: 0 } = self.truth {
            return Err(Error::Config("basis truth needs at least one term".into()));
        }
        Ok(())
    }

    fn noise(&self) -> NoiseConfig {
        NoiseConfig { sigma_pc: self.sigma_pc, sigma_ir: self.sigma_ir }
    }
}

/// Draws the hidden truth for one run.
pub fn sample_truth(spec: TruthSpec, l: usize, alpha: f64, seed: u64) -> Result<TrueUtility> {
    let prior = DirichletPrior::new(vec![alpha; l])?;
    let mut rng = stats::rng_from(seed, 0x7247);
    Ok(match spec {
        TruthSpec::Csf => TrueUtility::Csf(CsfUtility::new(prior.sample(&mut rng))),
        TruthSpec::AugmentedCsf { rho } => {
            TrueUtility::AugmentedCsf(AugmentedCsfUtility::new(prior.sample(&mut rng), vec![0.0; l], rho)?)
        }
        TruthSpec::Basis { terms } => sample_basis_truth(terms, l, seed)?,
    })
}

/// `max_c U(f_c) − max_{observed} U(f)`.
pub fn simple_regret<U: UtilityModel + ?Sized>(truth: &U, candidates: &[Vec<f64>], observed: &[Vec<f64>]) -> f64 {
    let best = candidates.iter().map(|f| truth.value(f)).fold(f64::NEG_INFINITY, f64::max);
    let got = observed.iter().map(|f| truth.value(f)).fold(f64::NEG_INFINITY, f64::max);
    (best - got).max(0.0)
}

/// Per-iteration mean and standard error across equal-length curves.
pub fn aggregate(curves: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let first = curves.first().ok_or_else(|| Error::invalid("no curves to aggregate"))?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::invalid("curves differ in length"));
    }
    let n = curves.len() as f64;
    Ok((0..first.len())
        .map(|t| {
            // sorted so the result does not depend on curve order
            let mut col: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            col.sort_by(f64::total_cmp);
            let se = if curves.len() > 1 { (stats::sample_variance(&col) / n).sqrt() } else { 0.0 };
            (stats::mean(&col), se)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 is the state after the initial design.
    pub iteration: usize,
    pub seed: u64,
    pub regret: f64,
    /// NaN when the method keeps no weight posterior or the truth has no `w`.
    pub w_error: f64,
    /// True utility of the best observation so far.
    pub incumbent: f64,
    pub selected_index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub truth: TrueUtility,
    pub records: Vec<IterationRecord>,
    pub queries: Vec<QueryLogEntry>,
}

impl RunTrace {
    pub fn regret_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.regret).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.regret)
    }
}

/// Seeds of the independent streams a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub session: u64,
    pub truth: u64,
    pub dm: u64,
}

impl RunSeeds {
    pub fn new(seed: u64) -> Self {
        Self { session: derive_seed(seed, 1), truth: derive_seed(seed, 2), dm: derive_seed(seed, 3) }
    }
}

/// Session configuration a run uses; the service reproduces a harness run by
/// creating a session with this configuration.
pub fn session_config(cfg: &ExperimentConfig, truth: &TrueUtility, seed: u64) -> SessionConfig {
    SessionConfig {
        method: cfg.method,
        utility_family: cfg.family,
        alpha: cfg.alpha,
        noise: cfg.noise(),
        mcmc: cfg.mcmc.clone(),
        ei_weight_samples: cfg.ei_weight_samples,
        mc_samples: cfg.mc_samples,
        initial_points: cfg.initial_points,
        seed: RunSeeds::new(seed).session,
        true_utility: (cfg.method == Method::EiTp).then(|| truth.clone()),
        ..SessionConfig::default()
    }
}

/// The simulated decision maker's answer to `query`.
pub fn answer_with(dm: &mut SimulatedDm, query: &Query) -> Answer {
    match query {
        Query::Pc(q) => {
            let first = dm.answer_pc(&q.first, &q.second);
            Answer::Pc { preferred: if first { PcChoice::First } else { PcChoice::Second } }
        }
        Query::Ir(q) => Answer::Ir { dim: dm.answer_ir(&q.f) },
    }
}

/// One optimization run for `seed`.
pub fn run_mbo_apl(cfg: &ExperimentConfig, seed: u64) -> Result<RunTrace> {
    cfg.validate()?;
    let seeds = RunSeeds::new(seed);
    let l = crate::benchmarks::BenchmarkSpec::new(cfg.benchmark).n_objectives;
    let truth = sample_truth(cfg.truth, l, cfg.alpha, seeds.truth)?;
    let mut session = Session::benchmark(session_config(cfg, &truth, seed), cfg.benchmark, cfg.dtlz_norm)?;
    let mut dm = SimulatedDm::new(truth.clone(), cfg.noise(), seeds.dm);
    let scaled = session.benchmark_problem().expect("benchmark session").scaled.clone();
    let candidates = session.candidates.clone();
    let best_value = scaled.iter().map(|f| truth.value(f)).fold(f64::NEG_INFINITY, f64::max);

    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut incumbent = f64::NEG_INFINITY;
    let mut last = 0;
    for _ in 0..cfg.initial_points {
        let s = session.suggest()?;
        session.observe_candidate(s.index)?;
        incumbent = incumbent.max(truth.value(&scaled[s.index]));
        last = s.index;
    }
    let w_err = |session: &Session| match (truth.weights(), &session.posterior) {
        (Some(w), Some(p)) if cfg.method.learns_preferences() => prefmodel::w_error(p, w).unwrap_or(f64::NAN),
        _ => f64::NAN,
    };
    let record = |t: usize, idx: usize, inc: f64, w: f64| IterationRecord {
        iteration: t,
        seed,
        regret: (best_value - inc).max(0.0),
        w_error: w,
        incumbent: inc,
        selected_index: idx,
        x: candidates[idx].clone(),
        y: scaled[idx].clone(),
    };
    records.push(record(0, last, incumbent, w_err(&session)));

    for t in 1..=cfg.iterations {
        let mut kinds = Vec::new();
        if cfg.method.uses_pc() {
            kinds.push(QueryKind::Pc);
        }
        if cfg.method.uses_ir() {
            kinds.push(QueryKind::Ir);
        }
        for kind in kinds {
            let q = session.next_query(kind)?;
            let pending = session.pending.clone().expect("query pending");
            session.answer(q.id, answer_with(&mut dm, &pending.query))?;
        }
        let s = session.suggest()?;
        session.observe_candidate(s.index)?;
        incumbent = incumbent.max(truth.value(&scaled[s.index]));
        records.push(record(t, s.index, incumbent, w_err(&session)));
    }
    Ok(RunTrace { seed, truth, records, queries: session.log.clone() })
}

/// Runs every seed of `cfg`, in parallel, returning traces in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunTrace>> {
    cfg.validate()?;
    cfg.seeds.par_iter().map(|&s| run_mbo_apl(cfg, s)).collect()
}

pub const CSV_HEADER: &str = "iteration,seed,regret,w_error,incumbent,selected_index";

/// Writes the per-iteration CSV for `traces`.
pub fn write_csv<W: Write>(traces: &[RunTrace], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for tr in traces {
        for r in &tr.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.seed, r.regret, r.w_error, r.incumbent, r.selected_index
            )?;
        }
    }
    Ok(())
}

/// Run manifest: the full configuration and each run's truth.
pub fn manifest(cfg: &ExperimentConfig, traces: &[RunTrace]) -> serde_json::Value {
    serde_json::json!({
        "config": cfg,
        "runs": traces.iter().map(|t| serde_json::json!({
            "seed": t.seed,
            "truth": t.truth,
            "final_regret": t.final_regret(),
            "queries": t.queries.len(),
        })).collect::<Vec<_>>(),
    })
}

/// Query selection rule for a standalone preference-learning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Maximize mutual information over the pool.
    Active,
    /// Take a uniformly random pool element.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefLearningConfig {
    pub n_objectives: usize,
    pub rounds: usize,
    pub noise: NoiseConfig,
    pub alpha: f64,
    pub pool_size: usize,
    pub mcmc: McmcConfig,
}

impl Default for PrefLearningConfig {
    fn default() -> Self {
        Self {
            n_objectives: 3,
            rounds: 30,
            noise: NoiseConfig::default(),
            alpha: 2.0,
            pool_size: crate::active::DEFAULT_POOL_SIZE,
            mcmc: McmcConfig::default(),
        }
    }
}

/// Learns a CSF truth from one PC and one IR answer per round, without
/// optimization. Returns `w_error` after each round (entry 0 is the prior).
pub fn run_pref_learning(cfg: &PrefLearningConfig, selection: Selection, seed: u64) -> Result<Vec<f64>> {
    let l = cfg.n_objectives;
    let seeds = RunSeeds::new(seed);
    let truth = sample_truth(TruthSpec::Csf, l, cfg.alpha, seeds.truth)?;
    let w_true = truth.weights().expect("csf truth").clone();
    let mut dm = SimulatedDm::new(truth, cfg.noise, seeds.dm);
    let prior = DirichletPrior::new(vec![cfg.alpha; l])?;
    let family = UtilityFamily::Csf;
    let mut data = PreferenceDataset::new();
    let mut post = prefmodel::sample_weights(&prior, &data, &cfg.noise, &family, &cfg.mcmc, derive_seed(seeds.session, 0), None)?;
    let mut errors = vec![prefmodel::w_error(&post, &w_true)?];
    let mut counter = 1u64;
    for _ in 0..cfg.rounds {
        for kind in [QueryKind::Pc, QueryKind::Ir] {
            let mut rng = stats::rng_from(seeds.session, counter);
            let pool = build_query_pool(kind, &[], l, cfg.pool_size, &mut rng);
            let q = match selection {
                Selection::Active => {
                    let utilities = post.utilities();
                    pool[select_query(&pool, &utilities, &cfg.noise)?].clone()
                }
                Selection::Random => pool[0].clone(),
            };
            match (&q, answer_with(&mut dm, &q)) {
                (Query::Pc(q), Answer::Pc { preferred }) => {
                    let (a, b) = match preferred {
                        PcChoice::First => (q.first.clone(), q.second.clone()),
                        PcChoice::Second => (q.second.clone(), q.first.clone()),
                    };
                    data.pc.push(PcRecord { preferred: a, other: b });
                }
                (Query::Ir(q), Answer::Ir { dim }) => data.ir.push(IrRecord { f: q.f.clone(), dim }),
                _ => unreachable!(),
            }
            post = prefmodel::sample_weights(
                &prior,
                &data,
                &cfg.noise,
                &family,
                &cfg.mcmc,
                derive_seed(seeds.session, counter),
                Some(&post.chain),
            )?;
            counter += 1;
        }
        errors.push(prefmodel::w_error(&post, &w_true)?);
    }
    Ok(errors)
}
