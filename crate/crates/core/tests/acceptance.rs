//! Acceptance suite. Runs every primary criterion at its stated size and
//! tolerance, prints one PASS/FAIL line each, and exits non-zero if any fail.
//!
//! `ACCEPTANCE_ONLY=3,5` restricts the run to the listed criteria.

use std::time::Instant;

use prefmobo::benchmarks::BenchmarkName;
use prefmobo::diag;
use prefmobo::engine::Method;
use prefmobo::harness::{
    run_experiment, run_pref_learning, write_csv, ExperimentConfig, PrefLearningConfig, RunTrace, Selection,
    TruthSpec, DEFAULT_BASIS_TERMS,
};

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_final_regret(benchmark: BenchmarkName, method: Method, truth: TruthSpec) -> f64 {
    let cfg = ExperimentConfig { seeds: SEEDS.collect(), truth, ..ExperimentConfig::new(benchmark, method) };
    let traces = run_experiment(&cfg).expect("experiment runs");
    mean(&traces.iter().map(RunTrace::final_regret).collect::<Vec<_>>())
}

fn active_vs_random() -> Outcome {
    let cfg = PrefLearningConfig::default();
    let curves = |sel| -> Vec<Vec<f64>> { SEEDS.map(|s| run_pref_learning(&cfg, sel, s).expect("runs")).collect() };
    let active = curves(Selection::Active);
    let random = curves(Selection::Random);
    let at = |c: &[Vec<f64>], r: usize| mean(&c.iter().map(|e| e[r]).collect::<Vec<_>>());
    let mut passed = true;
    let mut parts = Vec::new();
    for r in [10, 20, 30] {
        let (a, b) = (at(&active, r), at(&random, r));
        passed &= a <= b;
        parts.push(format!("round {r}: active {a:.4} random {b:.4}"));
    }
    let last = at(&active, 30);
    passed &= last <= 0.15;
    Outcome { passed, detail: format!("{}; active at 30 {last:.4} <= 0.15", parts.join(", ")) }
}

fn regret_ordering() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for b in [BenchmarkName::Schaffer2, BenchmarkName::Kursawe] {
        let r = |m| mean_final_regret(b, m, TruthSpec::Csf);
        let (p, rs, rnd, tp) = (r(Method::Proposed), r(Method::MoboRs), r(Method::Random), r(Method::EiTp));
        passed &= p <= rs && p <= rnd && (p - tp).abs() <= 0.1;
        parts.push(format!("{b}: proposed {p:.4} mobo-rs {rs:.4} random {rnd:.4} ei-tp {tp:.4}"));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn ablation() -> Outcome {
    let r = |m| mean_final_regret(BenchmarkName::Dtlz3, m, TruthSpec::Csf);
    let (pc, ir, rnd) = (r(Method::ProposedPc), r(Method::ProposedIr), r(Method::Random));
    Outcome {
        passed: pc <= rnd && ir <= rnd,
        detail: format!("dtlz3: proposed-pc {pc:.4} proposed-ir {ir:.4} random {rnd:.4}"),
    }
}

fn from_checks(checks: Vec<diag::Check>) -> Outcome {
    Outcome {
        passed: checks.iter().all(|c| c.passed),
        detail: checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; "),
    }
}

fn ei_oracle() -> Outcome {
    from_checks(vec![diag::ei_mc_vs_quadrature(50, 100_000, 2024).expect("check runs")])
}

fn density() -> Outcome {
    from_checks(vec![
        diag::density_normalization(20, 2024),
        diag::single_objective_closed_form(20, 2024).expect("check runs"),
    ])
}

fn prior_recovery() -> Outcome {
    from_checks(vec![diag::mcmc_prior_recovery(20_000, 2024).expect("check runs")])
}

fn pgpm_oracle() -> Outcome {
    from_checks(vec![
        diag::pgpm_two_point(5, 2024).expect("check runs"),
        diag::pgpm_monotonicity(&[1, 2, 3, 4, 5], 20).expect("check runs"),
    ])
}

fn pgpm_vs_csf() -> Outcome {
    let truth = TruthSpec::Basis { terms: DEFAULT_BASIS_TERMS };
    let pg = mean_final_regret(BenchmarkName::Schaffer2, Method::ProposedPgpm, truth);
    let csf = mean_final_regret(BenchmarkName::Schaffer2, Method::ProposedPc, truth);
    Outcome { passed: pg <= csf, detail: format!("schaffer2, basis truth: proposed-pgpm {pg:.4} proposed-csf {csf:.4}") }
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig { seeds: vec![1, 2, 3], iterations: 5, ..ExperimentConfig::new(BenchmarkName::Kursawe, Method::Proposed) };
    let csv = || {
        let mut out = Vec::new();
        write_csv(&run_experiment(&cfg).expect("runs"), &mut out).expect("writes");
        out
    };
    let (a, b) = (csv(), csv());
    Outcome { passed: a == b, detail: format!("two runs, {} bytes each, identical: {}", a.len(), a == b) }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("active-vs-random preference learning", active_vs_random),
        ("regret ordering on schaffer2 and kursawe", regret_ordering),
        ("ablation direction on dtlz3", ablation),
        ("EI Monte-Carlo vs quadrature", ei_oracle),
        ("density normalization and single-objective EI", density),
        ("MCMC prior recovery", prior_recovery),
        ("preferential GP oracle and monotonicity", pgpm_oracle),
        ("preferential GP vs CSF under basis truth", pgpm_vs_csf),
        ("determinism of CSV output", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        if !out.passed {
            failed += 1;
        }
        println!(
            "[{}] criterion {n} ({name}): {} [{:.1}s]",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
