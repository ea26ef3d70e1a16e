//! Synchronous round loop of the event-triggered algorithm.
//!
//! Each round `k → k+1` runs three phases separated by network-wide barriers:
//!
//! 1. **primal**: every agent computes `x_{i,k+1}` from its own round-`k`
//!    state and the broadcast copies it holds;
//! 2. **broadcast**: every agent tests its trigger against `x̃_{i,k}`, updates
//!    `x̃_{i,k+1}`, and delivers the new copy to its neighbors if it fired;
//! 3. **dual**: every agent updates `z_i` with the fully delivered `x̃_{k+1}`.
//!
//! Per-agent work inside a phase only touches that agent's state, so phases
//! may run in parallel without affecting the result. [`matrix_lalm_step`] is
//! the stacked periodic iteration, kept as an independent oracle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{check_stepsize_composite, Graph, StepsizeCheck};
use crate::linalg::{distance, Stacked, SymmetricMatrix};
use crate::metrics::{RoundRecord, RunOutcome, RunTrace};
use crate::objective::{CompositeObjective, NonsmoothPart, SmoothPart};
use crate::trigger::{should_broadcast, Threshold, TriggerSchedule};

/// Which primal update the agents run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Proximal step on `f_i + g_i`.
    Composite,
    /// Closed-form gradient step; requires `g ≡ 0`.
    Smooth,
    /// Proximal step without a gradient term; requires `f ≡ 0`.
    NonsmoothOnly,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Composite => "composite",
            Variant::Smooth => "smooth",
            Variant::NonsmoothOnly => "nonsmooth-only",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "composite" => Ok(Variant::Composite),
            "smooth" => Ok(Variant::Smooth),
            "nonsmooth-only" | "nonsmooth" => Ok(Variant::NonsmoothOnly),
            other => Err(Error::parse("variant", format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepsizePolicy {
    /// Reject configurations that fail the stepsize condition.
    Enforce,
    /// Log a warning and run anyway.
    WarnOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialPoint {
    Zero,
    Given(Stacked),
    /// Entries uniform in `[-scale, scale]`, drawn from the run seed.
    Random { scale: f64 },
}

/// How often full `x`/`z` snapshots are kept in the trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotPolicy {
    /// Every round while the snapshots stay under [`AUTO_SNAPSHOT_BUDGET`]
    /// stored reals per field, otherwise the smallest stride that fits.
    Auto,
    Stride(usize),
}

pub const AUTO_SNAPSHOT_BUDGET: usize = 4_000_000;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub graph: Graph,
    pub objective: CompositeObjective,
    pub schedule: TriggerSchedule,
    pub beta: f64,
    /// Diagonal of `H`.
    pub eta: Vec<f64>,
    pub rounds: usize,
    pub seed: u64,
    pub variant: Variant,
    pub x0: InitialPoint,
    /// `None` means `z_{i,0} = 0`.
    pub z0: Option<Stacked>,
    pub stepsize_policy: StepsizePolicy,
    pub snapshots: SnapshotPolicy,
}

impl RunConfig {
    pub fn new(
        graph: Graph,
        objective: CompositeObjective,
        schedule: TriggerSchedule,
        beta: f64,
        eta: Vec<f64>,
        rounds: usize,
    ) -> Self {
        let variant = if objective.is_smooth() {
            Variant::Smooth
        } else if objective.is_nonsmooth_only() {
            Variant::NonsmoothOnly
        } else {
            Variant::Composite
        };
        RunConfig {
            graph,
            objective,
            schedule,
            beta,
            eta,
            rounds,
            seed: 0,
            variant,
            x0: InitialPoint::Zero,
            z0: None,
            stepsize_policy: StepsizePolicy::Enforce,
            snapshots: SnapshotPolicy::Auto,
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Structural checks plus the stepsize condition of the chosen regime:
    /// `H − βL − L_f ≻ 0`, with `L_f = 0` for the nonsmooth-only variant.
    pub fn validate(&self) -> Result<StepsizeCheck> {
        let n = self.graph.n();
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta={} must be positive", self.beta)));
        }
        if self.eta.len() != n {
            return Err(Error::Config(format!(
                "{} stepsize weights for {n} agents",
                self.eta.len()
            )));
        }
        if let Some(e) = self.eta.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("eta={e} must be positive")));
        }
        if self.objective.n() != n {
            return Err(Error::Config(format!(
                "objective has {} agents, graph has {n}",
                self.objective.n()
            )));
        }
        if !self.graph.is_connected() {
            return Err(Error::Config("communication graph is not connected".into()));
        }
        match self.variant {
            Variant::Smooth if !self.objective.is_smooth() => {
                return Err(Error::Config("smooth variant requires g = 0 for every agent".into()))
            }
            Variant::NonsmoothOnly if !self.objective.is_nonsmooth_only() => {
                return Err(Error::Config(
                    "nonsmooth-only variant requires f = 0 for every agent".into(),
                ))
            }
            _ => {}
        }
        self.schedule.validate()?;
        for (what, block) in [
            ("x0", match &self.x0 {
                InitialPoint::Given(x) => Some(x),
                _ => None,
            }),
            ("z0", self.z0.as_ref()),
        ] {
            if let Some(b) = block {
                if b.rows() != n || b.cols() != self.dim() {
                    return Err(Error::Config(format!(
                        "{what} is {}x{}, expected {n}x{}",
                        b.rows(),
                        b.cols(),
                        self.dim()
                    )));
                }
            }
        }
        let lipschitz = match self.variant {
            Variant::NonsmoothOnly => vec![0.0; n],
            _ => self.objective.lipschitz(),
        };
        let check = check_stepsize_composite(&self.eta, self.beta, &self.graph.laplacian(), &lipschitz)?;
        if !check.holds {
            match self.stepsize_policy {
                StepsizePolicy::Enforce => {
                    return Err(Error::Config(format!(
                        "stepsize condition fails: smallest eigenvalue of H - beta L - L_f is {:e}",
                        check.margin
                    )))
                }
                StepsizePolicy::WarnOnly => log::warn!(
                    "stepsize condition fails (margin {:e}); running anyway",
                    check.margin
                ),
            }
        }
        Ok(check)
    }

    pub fn initial_primal(&self) -> Stacked {
        let (n, m) = (self.n(), self.dim());
        match &self.x0 {
            InitialPoint::Zero => Stacked::zeros(n, m),
            InitialPoint::Given(x) => x.clone(),
            InitialPoint::Random { scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let data = (0..n * m).map(|_| rng.random_range(-*scale..=*scale)).collect();
                Stacked::from_vec(n, m, data).expect("sized")
            }
        }
    }

    pub fn snapshot_stride(&self) -> usize {
        match self.snapshots {
            SnapshotPolicy::Auto => {
                let total = (self.rounds + 1) * self.n() * self.dim();
                total.div_ceil(AUTO_SNAPSHOT_BUDGET).max(1)
            }
            SnapshotPolicy::Stride(s) => s.max(1),
        }
    }

    /// Short human-readable echo used in trace headers and summaries.
    pub fn echo(&self) -> String {
        format!(
            "n={} m={} edges={} beta={} eta=[{}] schedule={} variant={} rounds={} seed={}",
            self.n(),
            self.dim(),
            self.graph.edge_count(),
            self.beta,
            summarize(&self.eta),
            self.schedule,
            self.variant,
            self.rounds,
            self.seed
        )
    }
}

fn summarize(v: &[f64]) -> String {
    if v.windows(2).all(|w| w[0] == w[1]) {
        format!("{}; x{}", v.first().copied().unwrap_or(0.0), v.len())
    } else {
        v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: usize,
    /// True primal iterate `x_{i,k}`.
    pub x: Vec<f64>,
    /// Dual iterate `z_{i,k}`.
    pub z: Vec<f64>,
    /// Last broadcast copy `x̃_{i,k}`.
    pub x_tilde: Vec<f64>,
    /// Last copy received from each neighbor.
    pub neighbor_tilde: BTreeMap<usize, Vec<f64>>,
    pub broadcast_count: usize,
}

impl AgentState {
    /// `Σ_{j∈N_i}(x̃_i − x̃_j)` in ascending neighbor order; the caller applies `β`.
    pub fn laplacian_disagreement(&self, neighbors: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.x_tilde.len()];
        for j in neighbors {
            let xj = self.neighbor_tilde.get(j).ok_or_else(|| {
                Error::Protocol(format!("agent {} holds no broadcast from neighbor {j}", self.id))
            })?;
            for ((o, a), b) in out.iter_mut().zip(&self.x_tilde).zip(xj) {
                *o += a - b;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Primal,
    Broadcast,
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BroadcastEvent {
    pub round: usize,
    pub agent: usize,
}

/// What the broadcast phase of one round produced.
#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastReport {
    pub fired: Vec<bool>,
    /// `‖x_{i,k} − x̃_{i,k}‖` after the phase.
    pub deviation: Vec<f64>,
    /// `E_{i,k}`, `None` for periodic agents.
    pub threshold: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
    pub round: usize,
    pub phase: Phase,
    pub events: Vec<BroadcastEvent>,
}

/// `x − (z + ∇f + β·d)/η`: the point handed to the proximal map.
fn prox_argument(x: &[f64], z: &[f64], grad: Option<&[f64]>, dis: &[f64], eta: f64, beta: f64) -> Vec<f64> {
    match grad {
        Some(g) => x
            .iter()
            .zip(z)
            .zip(g.iter().zip(dis))
            .map(|((xj, zj), (gj, dj))| xj - (zj + gj + beta * dj) / eta)
            .collect(),
        None => x
            .iter()
            .zip(z)
            .zip(dis)
            .map(|((xj, zj), dj)| xj - (zj + 0.0 + beta * dj) / eta)
            .collect(),
    }
}

/// `prox_{g/η}(x − (z + ∇f(x) + β·d)/η)`.
pub fn primal_step_composite(
    x: &[f64],
    z: &[f64],
    grad: &[f64],
    disagreement: &[f64],
    eta: f64,
    beta: f64,
    g: &NonsmoothPart,
) -> Vec<f64> {
    g.prox(1.0 / eta, &prox_argument(x, z, Some(grad), disagreement, eta, beta))
}

/// Closed-form update for `g ≡ 0`: `x − (z + ∇f(x) + β·d)/η`.
pub fn primal_step_smooth(x: &[f64], z: &[f64], grad: &[f64], disagreement: &[f64], eta: f64, beta: f64) -> Vec<f64> {
    prox_argument(x, z, Some(grad), disagreement, eta, beta)
}

/// Update for `f ≡ 0`: `prox_{g/η}(x − (z + β·d)/η)`.
pub fn primal_step_nonsmooth(
    x: &[f64],
    z: &[f64],
    disagreement: &[f64],
    eta: f64,
    beta: f64,
    g: &NonsmoothPart,
) -> Vec<f64> {
    g.prox(1.0 / eta, &prox_argument(x, z, None, disagreement, eta, beta))
}

/// `z + β·d` with `d` the disagreement over the freshly broadcast copies.
pub fn dual_step(z: &[f64], disagreement: &[f64], beta: f64) -> Vec<f64> {
    z.iter().zip(disagreement).map(|(zj, dj)| zj + beta * dj).collect()
}

fn primal_update(agent: &AgentState, config: &RunConfig) -> Result<Vec<f64>> {
    let i = agent.id;
    let dis = agent.laplacian_disagreement(config.graph.neighbors(i))?;
    let obj = config.objective.agent(i);
    let (eta, beta) = (config.eta[i], config.beta);
    Ok(match config.variant {
        Variant::Composite => {
            let grad = obj.smooth.gradient(&agent.x);
            primal_step_composite(&agent.x, &agent.z, &grad, &dis, eta, beta, &obj.nonsmooth)
        }
        Variant::Smooth => {
            let grad = obj.smooth.gradient(&agent.x);
            primal_step_smooth(&agent.x, &agent.z, &grad, &dis, eta, beta)
        }
        Variant::NonsmoothOnly => primal_step_nonsmooth(&agent.x, &agent.z, &dis, eta, beta, &obj.nonsmooth),
    })
}

fn broadcast_decision(agent: &AgentState, config: &RunConfig, k: usize) -> Result<(bool, Option<f64>)> {
    Ok(match config.schedule.threshold(agent.id, k)? {
        Threshold::Bound(e) => (should_broadcast(&agent.x, &agent.x_tilde, e), Some(e)),
        Threshold::Periodic { period } => (k % period == 0, None),
    })
}

impl NetworkState {
    /// Round-0 state: `x_{i,0}` from the config, `z_{i,0}` (zero by default),
    /// and the unconditional initial broadcast already delivered.
    pub fn initialize(config: &RunConfig) -> Result<Self> {
        let x0 = config.initial_primal();
        let z0 = config
            .z0
            .clone()
            .unwrap_or_else(|| Stacked::zeros(config.n(), config.dim()));
        let mut agents: Vec<AgentState> = (0..config.n())
            .map(|i| AgentState {
                id: i,
                x: x0.row(i).to_vec(),
                z: z0.row(i).to_vec(),
                x_tilde: x0.row(i).to_vec(),
                neighbor_tilde: BTreeMap::new(),
                broadcast_count: 1,
            })
            .collect();
        for i in 0..config.n() {
            for &j in config.graph.neighbors(i) {
                agents[j].neighbor_tilde.insert(i, x0.row(i).to_vec());
            }
        }
        Ok(NetworkState {
            agents,
            round: 0,
            phase: Phase::Primal,
            events: (0..config.n()).map(|agent| BroadcastEvent { round: 0, agent }).collect(),
        })
    }

    fn expect_phase(&self, want: Phase) -> Result<()> {
        if self.phase != want {
            return Err(Error::Protocol(format!(
                "round {}: {want:?} phase requested while in {:?} phase",
                self.round, self.phase
            )));
        }
        Ok(())
    }

    /// Phase A. `order = None` processes agents in parallel.
    pub fn primal_phase(&mut self, config: &RunConfig, order: Option<&[usize]>) -> Result<()> {
        self.expect_phase(Phase::Primal)?;
        let next_round = self.round + 1;
        let updates: Vec<Result<Vec<f64>>> = match order {
            None => self.agents.par_iter().map(|a| primal_update(a, config)).collect(),
            Some(order) => {
                let mut out: Vec<Option<Result<Vec<f64>>>> = Vec::new();
                out.resize_with(self.agents.len(), || None);
                for &i in order {
                    out[i] = Some(primal_update(&self.agents[i], config));
                }
                out.into_iter()
                    .map(|r| r.unwrap_or_else(|| Err(Error::Protocol("agent skipped in order".into()))))
                    .collect()
            }
        };
        let mut fresh = Vec::with_capacity(updates.len());
        for (i, u) in updates.into_iter().enumerate() {
            let x = u?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { agent: i, round: next_round });
            }
            fresh.push(x);
        }
        for (a, x) in self.agents.iter_mut().zip(fresh) {
            a.x = x;
        }
        self.phase = Phase::Broadcast;
        Ok(())
    }

    /// Phase B: trigger tests, `x̃` updates and delivery to neighbors.
    pub fn broadcast_phase(&mut self, config: &RunConfig, order: Option<&[usize]>) -> Result<BroadcastReport> {
        self.expect_phase(Phase::Broadcast)?;
        let k = self.round + 1;
        let decisions: Vec<(bool, Option<f64>)> = match order {
            None => self
                .agents
                .par_iter()
                .map(|a| broadcast_decision(a, config, k))
                .collect::<Result<_>>()?,
            Some(order) => {
                let mut out = vec![(false, None); self.agents.len()];
                for &i in order {
                    out[i] = broadcast_decision(&self.agents[i], config, k)?;
                }
                out
            }
        };
        for (a, (fire, _)) in self.agents.iter_mut().zip(&decisions) {
            if *fire {
                a.x_tilde.clone_from(&a.x);
                a.broadcast_count += 1;
            }
        }
        for i in 0..self.agents.len() {
            if !decisions[i].0 {
                continue;
            }
            self.events.push(BroadcastEvent { round: k, agent: i });
            let payload = self.agents[i].x_tilde.clone();
            for &j in config.graph.neighbors(i) {
                self.agents[j].neighbor_tilde.insert(i, payload.clone());
            }
        }
        let deviation: Vec<f64> = self.agents.iter().map(|a| distance(&a.x, &a.x_tilde)).collect();
        for (i, (dev, (_, e))) in deviation.iter().zip(&decisions).enumerate() {
            if let Some(e) = e {
                if dev > e {
                    return Err(Error::Protocol(format!(
                        "agent {i} exceeds its trigger bound at round {k}: {dev:e} > {e:e}"
                    )));
                }
            }
        }
        self.phase = Phase::Dual;
        Ok(BroadcastReport {
            fired: decisions.iter().map(|d| d.0).collect(),
            deviation,
            threshold: decisions.iter().map(|d| d.1).collect(),
        })
    }

    /// Phase C; closes the round.
    pub fn dual_phase(&mut self, config: &RunConfig, order: Option<&[usize]>) -> Result<()> {
        self.expect_phase(Phase::Dual)?;
        let beta = config.beta;
        let step = |a: &AgentState| -> Result<Vec<f64>> {
            let dis = a.laplacian_disagreement(config.graph.neighbors(a.id))?;
            Ok(dual_step(&a.z, &dis, beta))
        };
        let updates: Vec<Vec<f64>> = match order {
            None => self.agents.par_iter().map(step).collect::<Result<_>>()?,
            Some(order) => {
                let mut out = vec![Vec::new(); self.agents.len()];
                for &i in order {
                    out[i] = step(&self.agents[i])?;
                }
                out
            }
        };
        let next_round = self.round + 1;
        for (i, (a, z)) in self.agents.iter_mut().zip(updates).enumerate() {
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { agent: i, round: next_round });
            }
            a.z = z;
        }
        self.round = next_round;
        self.phase = Phase::Primal;
        Ok(())
    }

    /// One full round with parallel per-agent phases.
    pub fn run_round(&mut self, config: &RunConfig) -> Result<BroadcastReport> {
        self.primal_phase(config, None)?;
        let report = self.broadcast_phase(config, None)?;
        self.dual_phase(config, None)?;
        Ok(report)
    }

    /// One full round processing agents sequentially in `order` within each phase.
    pub fn run_round_ordered(&mut self, config: &RunConfig, order: &[usize]) -> Result<BroadcastReport> {
        let mut seen = vec![false; self.agents.len()];
        for &i in order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Contract("order must be a permutation of the agents".into()));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Contract("order must be a permutation of the agents".into()));
        }
        self.primal_phase(config, Some(order))?;
        let report = self.broadcast_phase(config, Some(order))?;
        self.dual_phase(config, Some(order))?;
        Ok(report)
    }

    pub fn primal(&self) -> Stacked {
        self.stack(|a| &a.x)
    }

    pub fn dual(&self) -> Stacked {
        self.stack(|a| &a.z)
    }

    pub fn broadcast_copies(&self) -> Stacked {
        self.stack(|a| &a.x_tilde)
    }

    pub fn broadcast_counts(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.broadcast_count).collect()
    }

    fn stack(&self, f: impl Fn(&AgentState) -> &Vec<f64>) -> Stacked {
        let rows: Vec<Vec<f64>> = self.agents.iter().map(|a| f(a).clone()).collect();
        Stacked::from_rows(&rows).expect("agents share a dimension")
    }
}

/// Periodic stacked iteration with explicit Laplacian products:
/// `x⁺_i = prox_{g_i/η_i}(x_i − (z_i + ∇f_i(x_i) + β(Lx)_i)/η_i)`, `z⁺ = z + βLx⁺`.
pub fn matrix_lalm_step(
    x: &Stacked,
    z: &Stacked,
    objective: &CompositeObjective,
    laplacian: &SymmetricMatrix,
    eta: &[f64],
    beta: f64,
) -> (Stacked, Stacked) {
    let lx = laplacian.mul_stacked(x);
    let mut next = Stacked::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let obj = objective.agent(i);
        let grad = match &obj.smooth {
            SmoothPart::Zero { .. } => None,
            s => Some(s.gradient(x.row(i))),
        };
        let arg = prox_argument(x.row(i), z.row(i), grad.as_deref(), lx.row(i), eta[i], beta);
        next.row_mut(i).copy_from_slice(&obj.nonsmooth.prox(1.0 / eta[i], &arg));
    }
    let lnext = laplacian.mul_stacked(&next);
    let mut z_next = z.clone();
    for (zn, l) in z_next.as_mut_slice().iter_mut().zip(lnext.as_slice()) {
        *zn += beta * l;
    }
    (next, z_next)
}

fn dual_feasibility(z: &Stacked) -> (f64, f64) {
    let sum = z.column_sums().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (sum, z.max_abs())
}

/// Runs `config.rounds` rounds and records the trace. A non-finite iterate
/// stops the run; the partial trace is returned with [`RunOutcome::Diverged`].
pub fn run(config: &RunConfig) -> Result<RunTrace> {
    run_observed(config, |_| {})
}

/// Per-round view handed to a [`run_observed`] callback, snapshot or not.
pub struct RoundView<'a> {
    pub record: &'a RoundRecord,
    pub x: &'a Stacked,
    /// `Σ_{k'=1}^{k} x_{k'}`.
    pub ergodic_sum: &'a Stacked,
}

/// [`run`], calling `observer` after round 0 and after every completed round.
pub fn run_observed<F: FnMut(RoundView<'_>)>(config: &RunConfig, mut observer: F) -> Result<RunTrace> {
    let stepsize = config.validate()?;
    let stride = config.snapshot_stride();
    let mut state = NetworkState::initialize(config)?;
    let (n, m) = (config.n(), config.dim());

    let mut ergodic_sum = Stacked::zeros(n, m);
    let mut records = Vec::with_capacity(config.rounds + 1);
    let z0 = state.dual();
    let (ds, dm) = dual_feasibility(&z0);
    records.push(RoundRecord {
        round: 0,
        broadcasts: vec![true; n],
        deviation: vec![0.0; n],
        threshold: vec![None; n],
        dual_sum_norm: ds,
        dual_max_abs: dm,
        x: Some(state.primal()),
        z: Some(z0),
        ergodic_sum: Some(ergodic_sum.clone()),
    });
    observer(RoundView {
        record: &records[0],
        x: records[0].x.as_ref().expect("round 0 is kept"),
        ergodic_sum: &ergodic_sum,
    });

    let mut outcome = RunOutcome::Completed;
    for k in 1..=config.rounds {
        let report = match state.run_round(config) {
            Ok(r) => r,
            Err(Error::Divergence { agent, round }) => {
                outcome = RunOutcome::Diverged { agent, round };
                break;
            }
            Err(e) => return Err(e),
        };
        let x = state.primal();
        let z = state.dual();
        ergodic_sum.add_assign(&x);
        let keep = k % stride == 0 || k == config.rounds;
        let (ds, dm) = dual_feasibility(&z);
        let mut record = RoundRecord {
            round: k,
            broadcasts: report.fired,
            deviation: report.deviation,
            threshold: report.threshold,
            dual_sum_norm: ds,
            dual_max_abs: dm,
            x: None,
            z: None,
            ergodic_sum: None,
        };
        observer(RoundView {
            record: &record,
            x: &x,
            ergodic_sum: &ergodic_sum,
        });
        if keep {
            record.x = Some(x);
            record.z = Some(z);
            record.ergodic_sum = Some(ergodic_sum.clone());
        }
        records.push(record);
    }

    Ok(RunTrace {
        config_echo: config.echo(),
        stepsize,
        snapshot_stride: stride,
        records,
        final_state: state,
        outcome,
    })
}
