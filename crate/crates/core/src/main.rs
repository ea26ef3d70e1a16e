use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use etlalm::cli::{parse_assignments, run_experiment, Assignment, ExperimentConfig};

/// Event-triggered decentralized composite optimization experiments.
#[derive(Parser, Debug)]
#[command(name = "etlalm", version)]
struct Args {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lasso, logistic or quadratic.
    #[arg(long)]
    problem: Option<String>,
    /// Threshold schedule(s), comma separated, e.g. `poly:20:1.2,zero`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    /// Seed(s), comma separated.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Penalty parameter, or `auto`.
    #[arg(long)]
    beta: Option<String>,
    /// Diagonal of H: scalar, comma separated per-agent list, or `auto`.
    #[arg(long)]
    eta: Option<String>,
    /// Edge fraction of the random graph.
    #[arg(long = "graph-r")]
    graph_r: Option<String>,
    /// Check the ergodic bound certificate (networks of at most 64 agents).
    #[arg(long)]
    certificate: bool,
    /// Also run the zero schedule and tabulate agent-0 broadcasts per schedule.
    #[arg(long)]
    compare: bool,
}

impl Args {
    fn assignments(&self) -> Vec<Assignment> {
        let flag = |key: &str, flag: &str, value: &Option<String>| {
            value.as_ref().map(|v| Assignment {
                key: key.to_string(),
                value: v.clone(),
                location: format!("--{flag}"),
            })
        };
        let mut out: Vec<Assignment> = [
            flag("problem", "problem", &self.problem),
            flag("schedule", "schedule", &self.schedule),
            flag("rounds", "rounds", &self.rounds),
            flag("seeds", "seed", &self.seed),
            flag("out", "out", &self.out),
            flag("beta", "beta", &self.beta),
            flag("eta", "eta", &self.eta),
            flag("graph_r", "graph-r", &self.graph_r),
        ]
        .into_iter()
        .flatten()
        .collect();
        if self.certificate {
            out.push(flag("certificate", "certificate", &Some("true".into())).expect("set"));
        }
        if self.compare {
            out.push(flag("compare", "compare", &Some("true".into())).expect("set"));
        }
        out
    }
}

fn load(args: &Args) -> etlalm::Result<ExperimentConfig> {
    let mut assignments = match &args.config {
        Some(path) => parse_assignments(&std::fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    assignments.extend(args.assignments());
    ExperimentConfig::from_assignments(&assignments)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for run in &report.runs {
        let last = run.rows.last();
        println!(
            "{}: {} rounds, objective gap {:e}, agent-0 broadcasts {}",
            run.name,
            last.map_or(0, |r| r.round),
            last.map_or(f64::NAN, |r| r.objective_gap),
            last.map_or(0, |r| r.broadcasts_agent0),
        );
    }
    for table in &report.comparisons {
        print!("{table}");
    }
    let diverged = report.diverged_runs();
    if diverged.is_empty() {
        ExitCode::SUCCESS
    } else {
        for run in diverged {
            eprintln!("diverged: {}", run.name);
        }
        ExitCode::FAILURE
    }
}
