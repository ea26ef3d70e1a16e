//! Run orchestration: instances, reference solutions, traces and summaries.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cli::config::{BetaSpec, EtaSpec, ExperimentConfig, Problem};
use crate::engine::{run_observed, RunConfig, SnapshotPolicy};
use crate::error::Result;
use crate::graph::{check_stepsize_strongly_convex, generate_random_graph, max_eigenvalue, Graph};
use crate::linalg::Stacked;
use crate::metrics::{broadcast_summary, theorem1_certificate, RunOutcome, CERTIFICATE_MAX_N};
use crate::objective::{make_lasso_instance, make_logistic_instance, make_quadratic_instance, Instance};
use crate::reference::{laplacian_seminorm, solve_centralized, ReferenceSolution, DEFAULT_MAX_ITER};
use crate::trigger::{ThresholdRule, TriggerSchedule};

pub const TRACE_HEADER: &str =
    "round,objective_gap,consensus_error,primal_residual,broadcasts_agent0,broadcasts_total_cum";

/// Objective-gap levels used by schedule comparisons.
pub const COMPARE_THRESHOLDS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// One row of `trace.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub objective_gap: f64,
    pub consensus_error: f64,
    pub primal_residual: f64,
    pub broadcasts_agent0: usize,
    pub broadcasts_total: usize,
}

impl TraceRow {
    fn is_finite(&self) -> bool {
        self.objective_gap.is_finite() && self.consensus_error.is_finite() && self.primal_residual.is_finite()
    }

    fn csv(&self) -> String {
        if self.is_finite() {
            format!(
                "{},{:e},{:e},{:e},{},{}",
                self.round,
                self.objective_gap,
                self.consensus_error,
                self.primal_residual,
                self.broadcasts_agent0,
                self.broadcasts_total
            )
        } else {
            divergence_row(self.round, self.broadcasts_agent0, self.broadcasts_total)
        }
    }
}

fn divergence_row(round: usize, b0: usize, total: usize) -> String {
    format!("{round},diverged,diverged,diverged,{b0},{total}")
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub name: String,
    pub dir: PathBuf,
    pub seed: u64,
    pub schedule: TriggerSchedule,
    pub outcome: RunOutcome,
    pub rows: Vec<TraceRow>,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, RunOutcome::Diverged { .. })
    }

    /// Agent-0 broadcasts up to the first round with objective gap `≤ level`.
    pub fn broadcasts_to_reach(&self, level: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.objective_gap.is_finite() && r.objective_gap <= level)
            .map(|r| r.broadcasts_agent0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub schedule: String,
    pub broadcasts: Vec<Option<usize>>,
    /// Relative to the `zero` schedule; `None` when either side never got there.
    pub ratios: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub rows: Vec<ComparisonRow>,
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# agent-0 broadcasts to reach objective gap (ratio vs zero), seed {}", self.seed)?;
        write!(f, "{:<24}", "schedule")?;
        for t in &self.thresholds {
            write!(f, " {:>18}", format!("{t:e}"))?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<24}", row.schedule)?;
            for (b, r) in row.broadcasts.iter().zip(&row.ratios) {
                let cell = match (b, r) {
                    (Some(b), Some(r)) => format!("{b} ({r:.3})"),
                    (Some(b), None) => b.to_string(),
                    (None, _) => "—".to_string(),
                };
                write!(f, " {cell:>18}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Builds the table for runs that share an instance and seed.
pub fn compare_schedules(runs: &[&RunSummary]) -> ComparisonTable {
    let baseline = runs
        .iter()
        .find(|r| r.schedule.to_string() == "zero");
    let base: Vec<Option<usize>> = COMPARE_THRESHOLDS
        .iter()
        .map(|t| baseline.and_then(|b| b.broadcasts_to_reach(*t)))
        .collect();
    let rows = runs
        .iter()
        .map(|run| {
            let broadcasts: Vec<Option<usize>> =
                COMPARE_THRESHOLDS.iter().map(|t| run.broadcasts_to_reach(*t)).collect();
            let ratios = broadcasts
                .iter()
                .zip(&base)
                .map(|(b, z)| match (b, z) {
                    (Some(b), Some(z)) if *z > 0 => Some(*b as f64 / *z as f64),
                    _ => None,
                })
                .collect();
            ComparisonRow {
                schedule: run.schedule.to_string(),
                broadcasts,
                ratios,
            }
        })
        .collect();
    ComparisonTable {
        seed: runs.first().map_or(0, |r| r.seed),
        thresholds: COMPARE_THRESHOLDS.to_vec(),
        rows,
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub runs: Vec<RunSummary>,
    pub comparisons: Vec<ComparisonTable>,
}

impl ExperimentReport {
    pub fn diverged_runs(&self) -> Vec<&RunSummary> {
        self.runs.iter().filter(|r| r.diverged()).collect()
    }
}

pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<Instance> {
    match cfg.problem {
        Problem::Lasso => make_lasso_instance(cfg.n, cfg.samples, cfg.m, cfg.tau, seed),
        Problem::Logistic => make_logistic_instance(cfg.n, cfg.samples, cfg.m, cfg.ridge, seed),
        Problem::Quadratic => make_quadratic_instance(cfg.n, cfg.m, seed),
    }
}

pub fn build_graph(cfg: &ExperimentConfig, seed: u64) -> Result<Graph> {
    generate_random_graph(cfg.n, cfg.graph_r, cfg.graph_seed.unwrap_or(seed))
}

/// Resolves `β` and the diagonal of `H`, deriving `auto` entries from the graph and objective.
pub fn resolve_stepsizes(cfg: &ExperimentConfig, graph: &Graph, instance: &Instance) -> Result<(f64, Vec<f64>)> {
    let beta = match cfg.beta {
        BetaSpec::Value(b) => b,
        BetaSpec::Auto => 1.0 / (max_eigenvalue(&graph.laplacian(), 1e-12)? + 1.0),
    };
    let eta = match &cfg.eta {
        EtaSpec::Scalar(v) => vec![*v; cfg.n],
        EtaSpec::PerAgent(v) => v.clone(),
        EtaSpec::Auto => auto_eta(instance),
    };
    Ok((beta, eta))
}

fn auto_eta(instance: &Instance) -> Vec<f64> {
    let lipschitz = instance.objective.lipschitz();
    let k1 = strong_convexity_k1(instance);
    lipschitz
        .iter()
        .map(|l| match k1 {
            Some(k1) => 1.0 + l * l / k1,
            None => 1.0 + l,
        })
        .collect()
}

/// `k₁ = min_i μ_i` when every agent is strongly convex.
fn strong_convexity_k1(instance: &Instance) -> Option<f64> {
    let mu = instance.objective.strong_convexity();
    let k1 = mu.iter().copied().fold(f64::INFINITY, f64::min);
    (k1 > 0.0 && k1.is_finite()).then_some(k1)
}

/// Loads `cache/<key>.txt` under `cache_dir`, or solves and writes it.
pub fn load_or_solve_reference(instance: &Instance, tol: f64, cache_dir: &Path) -> Result<ReferenceSolution> {
    let hash = instance.content_hash();
    let path = cache_dir.join(format!("{}.txt", ReferenceSolution::cache_key(&hash, tol)));
    if let Ok(text) = fs::read_to_string(&path) {
        match ReferenceSolution::from_text(&text, &hash) {
            Ok(sol) => return Ok(sol),
            Err(e) => log::warn!("ignoring unreadable reference cache {}: {e}", path.display()),
        }
    }
    let sol = solve_centralized(&instance.objective, tol, DEFAULT_MAX_ITER)?;
    if !sol.certified {
        log::warn!(
            "reference solver stopped at residual {:e} above tolerance {tol:e}",
            sol.solver_residual
        );
    }
    fs::create_dir_all(cache_dir)?;
    fs::write(&path, sol.to_text(&hash))?;
    Ok(sol)
}

fn run_name(problem: Problem, seed: u64, schedule: &TriggerSchedule) -> String {
    let slug: String = schedule
        .to_string()
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '.' | '-' => c,
            '^' => 'p',
            _ => '_',
        })
        .collect();
    format!("{problem}_seed{seed}_{slug}")
}

/// Runs every (seed, schedule) pair, writing `trace.csv` and `summary.txt`
/// per run under `cfg.out`, plus comparison tables in compare mode.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    fs::create_dir_all(&cfg.out)?;
    let cache_dir = cfg.out.join("cache");
    let mut schedules = cfg.schedules.clone();
    if cfg.compare && !schedules.iter().any(|s| s.to_string() == "zero") {
        schedules.insert(0, TriggerSchedule::uniform(ThresholdRule::Zero));
    }

    let mut report = ExperimentReport::default();
    for &seed in &cfg.seeds {
        let instance = build_instance(cfg, seed)?;
        let graph = build_graph(cfg, seed)?;
        fs::create_dir_all(&cache_dir)?;
        fs::write(
            cache_dir.join(format!("instance_{}.txt", instance.content_hash())),
            instance.to_text(),
        )?;
        let reference = load_or_solve_reference(&instance, cfg.reference_tol, &cache_dir)?;
        let (beta, eta) = resolve_stepsizes(cfg, &graph, &instance)?;

        let first = report.runs.len();
        for schedule in &schedules {
            let mut run_cfg = RunConfig::new(
                graph.clone(),
                instance.objective.clone(),
                schedule.clone(),
                beta,
                eta.clone(),
                cfg.rounds,
            );
            run_cfg.seed = seed;
            run_cfg.stepsize_policy = cfg.stepsize_policy;
            if let Some(v) = cfg.variant {
                run_cfg.variant = v;
            }
            let name = run_name(cfg.problem, seed, schedule);
            let dir = cfg.out.join(&name);
            let summary = execute_run(cfg, &run_cfg, &instance, &reference, name, dir)?;
            if let RunOutcome::Diverged { agent, round } = summary.outcome {
                log::error!("run {} diverged at agent {agent}, round {round}", summary.name);
            }
            report.runs.push(summary);
        }
        if cfg.compare {
            let runs: Vec<&RunSummary> = report.runs[first..].iter().collect();
            let table = compare_schedules(&runs);
            fs::write(cfg.out.join(format!("compare_seed{seed}.txt")), table.to_string())?;
            report.comparisons.push(table);
        }
    }
    Ok(report)
}

fn execute_run(
    cfg: &ExperimentConfig,
    run_cfg: &RunConfig,
    instance: &Instance,
    reference: &ReferenceSolution,
    name: String,
    dir: PathBuf,
) -> Result<RunSummary> {
    let certify = cfg.certificate && run_cfg.n() <= CERTIFICATE_MAX_N;
    // full snapshots only when the certificate needs ergodic averages
    let mut run_cfg = run_cfg.clone();
    run_cfg.snapshots = if certify {
        SnapshotPolicy::Auto
    } else {
        SnapshotPolicy::Stride(cfg.rounds.max(1))
    };

    let laplacian = run_cfg.graph.laplacian();
    let n = run_cfg.n();
    let target = Stacked::replicate(n, &reference.x_star);
    let x0 = run_cfg.initial_primal();
    let denominator = x0.sub(&target).frobenius_norm();
    let relative = denominator > 0.0;

    let mut cumulative = vec![0usize; n];
    let mut rows = Vec::with_capacity(cfg.rounds + 1);
    let started = Instant::now();
    let trace = run_observed(&run_cfg, |view| {
        for (c, b) in cumulative.iter_mut().zip(&view.record.broadcasts) {
            *c += usize::from(*b);
        }
        let distance = view.x.sub(&target).frobenius_norm();
        rows.push(TraceRow {
            round: view.record.round,
            objective_gap: (run_cfg.objective.value_stacked(view.x) - reference.f_star).abs(),
            consensus_error: laplacian_seminorm(&laplacian, view.x),
            primal_residual: if relative { distance / denominator } else { distance },
            broadcasts_agent0: cumulative[0],
            broadcasts_total: cumulative.iter().sum(),
        });
    })?;
    let elapsed = started.elapsed().as_secs_f64();

    fs::create_dir_all(&dir)?;
    let mut csv = String::with_capacity(rows.len() * 64);
    csv.push_str(TRACE_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv());
        csv.push('\n');
    }
    if let RunOutcome::Diverged { round, .. } = trace.outcome {
        csv.push_str(&divergence_row(round, cumulative[0], cumulative.iter().sum()));
        csv.push('\n');
    }
    fs::write(dir.join("trace.csv"), csv)?;

    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
    kv("run", name.clone());
    kv("problem", cfg.problem.to_string());
    kv("seed", run_cfg.seed.to_string());
    kv("schedule", run_cfg.schedule.to_string());
    kv("config", trace.config_echo.clone());
    kv("instance.hash", instance.content_hash());
    kv("reference.f_star", format!("{:e}", reference.f_star));
    kv("reference.residual", format!("{:e}", reference.solver_residual));
    kv("reference.certified", reference.certified.to_string());
    kv("stepsize.composite.holds", trace.stepsize.holds.to_string());
    kv("stepsize.composite.margin", format!("{:e}", trace.stepsize.margin));
    if let Some(k1) = strong_convexity_k1(instance) {
        let mu = run_cfg.objective.strong_convexity();
        let check = check_stepsize_strongly_convex(
            &run_cfg.eta,
            run_cfg.beta,
            &laplacian,
            &run_cfg.objective.lipschitz(),
            &mu,
            k1,
        )?;
        kv("stepsize.strongly_convex.k1", format!("{k1:e}"));
        kv("stepsize.strongly_convex.holds", check.holds.to_string());
        kv("stepsize.strongly_convex.margin", format!("{:e}", check.margin));
    }
    match trace.outcome {
        RunOutcome::Completed => kv("outcome", "completed".into()),
        RunOutcome::Diverged { agent, round } => kv("outcome", format!("diverged agent={agent} round={round}")),
    }
    let completed = trace.rounds();
    kv("rounds.completed", completed.to_string());
    kv("wall_time.total_s", format!("{elapsed:.6}"));
    kv("wall_time.per_round_s", format!("{:.6e}", elapsed / completed.max(1) as f64));
    if let Some(last) = rows.last() {
        kv("final.objective_gap", format!("{:e}", last.objective_gap));
        kv("final.consensus_error", format!("{:e}", last.consensus_error));
        kv("final.primal_residual", format!("{:e}", last.primal_residual));
    }
    kv("primal_residual.kind", if relative { "relative" } else { "absolute" }.into());
    let broadcasts = broadcast_summary(&trace);
    kv("broadcasts.agent0", broadcasts.totals.first().copied().unwrap_or(0).to_string());
    kv("broadcasts.total", broadcasts.totals.iter().sum::<usize>().to_string());
    if cfg.certificate {
        if !certify {
            kv("certificate", format!("skipped: n = {n} exceeds {CERTIFICATE_MAX_N}"));
        } else if trace.diverged() {
            kv("certificate", "skipped: run diverged".into());
        } else {
            match theorem1_certificate(&run_cfg, &trace, reference, cfg.rho) {
                Ok(rep) => {
                    let failures = rep.verdicts.iter().filter(|v| !v.holds).count();
                    kv("certificate", if rep.all_hold() { "holds" } else { "violated" }.into());
                    kv("certificate.checked_rounds", rep.verdicts.len().to_string());
                    kv("certificate.violations", failures.to_string());
                    s.push_str(&rep.certificate.report(completed));
                }
                Err(e) => kv("certificate", format!("not applicable: {e}")),
            }
        }
    }
    fs::write(dir.join("summary.txt"), s)?;

    Ok(RunSummary {
        name,
        dir,
        seed: run_cfg.seed,
        schedule: run_cfg.schedule.clone(),
        outcome: trace.outcome.clone(),
        rows,
    })
}
