//! Trace post-processing: ergodic averages, error measures, broadcast
//! accounting, empirical rate fits and the `O(1/t)` bound certificate.

use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{
    check_stepsize_composite, max_eigenvalue, primal_weight, symmetric_eigen, StepsizeCheck,
};
use crate::linalg::{Stacked, SymmetricMatrix};
use crate::objective::CompositeObjective;
use crate::engine::NetworkState;
use crate::reference::{dual_from_primal, laplacian_seminorm, ReferenceSolution};

/// Minimum acceptable coefficient of determination for a rate fit.
pub const RATE_FIT_MIN_R2: f64 = 0.9;

/// Largest network the certificate will eigendecompose for `y*`.
pub const CERTIFICATE_MAX_N: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Completed,
    Diverged { agent: usize, round: usize },
}

/// Everything recorded at the end of round `round`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Whether each agent broadcast this round (all true at round 0).
    pub broadcasts: Vec<bool>,
    /// `‖x_{i,k} − x̃_{i,k}‖`.
    pub deviation: Vec<f64>,
    /// `E_{i,k}`; `None` at round 0 and for periodic agents.
    pub threshold: Vec<Option<f64>>,
    /// `‖Σ_i z_{i,k}‖_∞`.
    pub dual_sum_norm: f64,
    /// `max_i ‖z_{i,k}‖_∞`.
    pub dual_max_abs: f64,
    pub x: Option<Stacked>,
    pub z: Option<Stacked>,
    /// `Σ_{k'=1}^{k} x_{k'}`.
    pub ergodic_sum: Option<Stacked>,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub config_echo: String,
    pub stepsize: StepsizeCheck,
    pub snapshot_stride: usize,
    pub records: Vec<RoundRecord>,
    pub final_state: NetworkState,
    pub outcome: RunOutcome,
}

impl RunTrace {
    /// Number of completed rounds.
    pub fn rounds(&self) -> usize {
        self.records.len() - 1
    }

    pub fn primal_at(&self, k: usize) -> Option<&Stacked> {
        self.records.get(k).and_then(|r| r.x.as_ref())
    }

    pub fn dual_at(&self, k: usize) -> Option<&Stacked> {
        self.records.get(k).and_then(|r| r.z.as_ref())
    }

    /// Rounds that carry full snapshots.
    pub fn snapshot_rounds(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().filter(|r| r.x.is_some()).map(|r| r.round)
    }

    pub fn diverged(&self) -> bool {
        matches!(self.outcome, RunOutcome::Diverged { .. })
    }
}

/// `x̂_t = (1/t) Σ_{k=1}^{t} x_k`.
pub fn ergodic_average(trace: &RunTrace, t: usize) -> Result<Stacked> {
    if t == 0 || t > trace.rounds() {
        return Err(Error::Contract(format!(
            "ergodic average needs 1 <= t <= {}, got {t}",
            trace.rounds()
        )));
    }
    let sum = trace.records[t]
        .ergodic_sum
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("round {t} was thinned out of the trace")))?;
    Ok(sum.scaled(1.0 / t as f64))
}

/// `‖√L v‖ = √(Σ_coord vᵀLv)`.
pub fn consensus_error(laplacian: &SymmetricMatrix, v: &Stacked) -> f64 {
    laplacian_seminorm(laplacian, v)
}

/// `|Σ_i F_i(v_i) − F*|`.
pub fn objective_gap(objective: &CompositeObjective, v: &Stacked, f_star: f64) -> f64 {
    (objective.value_stacked(v) - f_star).abs()
}

/// `‖x_k − 1⊗x*‖_F / ‖x_0 − 1⊗x*‖_F`.
pub fn primal_residual(trace: &RunTrace, k: usize, x_star: &[f64]) -> Result<f64> {
    let x0 = trace.primal_at(0).ok_or_else(|| Error::Contract("trace lacks round 0".into()))?;
    let xk = trace
        .primal_at(k)
        .ok_or_else(|| Error::Contract(format!("round {k} not available in the trace")))?;
    primal_residual_of(x0, xk, x_star)
}

pub fn primal_residual_of(x0: &Stacked, xk: &Stacked, x_star: &[f64]) -> Result<f64> {
    let target = Stacked::replicate(x0.rows(), x_star);
    let den = x0.sub(&target).frobenius_norm();
    if den == 0.0 {
        return Err(Error::Contract("initial point already equals the optimum".into()));
    }
    Ok(xk.sub(&target).frobenius_norm() / den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastSummary {
    /// Per-agent totals, the round-0 broadcast included.
    pub totals: Vec<usize>,
    /// `cumulative[k][i]`: broadcasts by agent `i` in rounds `0..=k`.
    pub cumulative: Vec<Vec<usize>>,
    /// Network-wide cumulative count per round.
    pub cumulative_total: Vec<usize>,
}

pub fn broadcast_summary(trace: &RunTrace) -> BroadcastSummary {
    let n = trace.records.first().map_or(0, |r| r.broadcasts.len());
    let mut running = vec![0usize; n];
    let mut cumulative = Vec::with_capacity(trace.records.len());
    let mut cumulative_total = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        for (c, b) in running.iter_mut().zip(&r.broadcasts) {
            *c += usize::from(*b);
        }
        cumulative_total.push(running.iter().sum());
        cumulative.push(running.clone());
    }
    BroadcastSummary {
        totals: running,
        cumulative,
        cumulative_total,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateModel {
    /// `ln v` against `ln t`: power laws.
    LogLog,
    /// `ln v` against `t`: geometric decay.
    SemiLog,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    pub fn is_reliable(&self) -> bool {
        self.r_squared >= RATE_FIT_MIN_R2
    }
}

/// Least-squares line through the transformed series.
pub fn rate_fit(series: &[(f64, f64)], model: RateModel) -> Result<RateFit> {
    if series.len() < 10 {
        return Err(Error::Contract(format!(
            "rate fit needs at least 10 points, got {}",
            series.len()
        )));
    }
    let mut pts = Vec::with_capacity(series.len());
    for &(t, v) in series {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Contract(format!("rate fit needs positive values, got {v} at t={t}")));
        }
        let x = match model {
            RateModel::LogLog => {
                if !(t > 0.0) {
                    return Err(Error::Contract(format!("log-log fit needs t > 0, got {t}")));
                }
                t.ln()
            }
            RateModel::SemiLog => t,
        };
        pts.push((x, v.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("rate fit needs at least two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Constants of the ergodic bound for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Certificate {
    pub n: usize,
    /// `max{2βλ̄(L), 1}`.
    pub a: f64,
    /// `min{λ_min(L_f), 1/λ̄(βL + 11ᵀ/n)}`.
    pub b: f64,
    pub rho: f64,
    pub y_star_norm: f64,
    /// `‖x_0 − x*‖_P` with `P = H − βL`.
    pub initial_distance: f64,
    /// `‖L(βL + 11ᵀ/n)⁻¹‖`.
    pub coupling_norm: f64,
    /// `threshold_sums[t] = Σ_{k=1}^{t} E_{k−1}`, with `E_0 = 0` (round 0 always broadcasts).
    pub threshold_sums: Vec<f64>,
}

impl Theorem1Certificate {
    /// `A_t = (2a√n/b) Σ_{k=1}^{t} E_{k−1}`.
    pub fn a_t(&self, t: usize) -> f64 {
        let s = self.threshold_sums[t];
        if s == 0.0 {
            return 0.0;
        }
        2.0 * self.a * (self.n as f64).sqrt() / self.b * s
    }

    fn numerator(&self, t: usize) -> f64 {
        let base = self.initial_distance
            + self.rho * self.coupling_norm
            + (2.0 * self.b).sqrt() * self.a_t(t);
        base * base
    }

    /// Upper bound on `‖√L x̂_t‖`.
    pub fn bound_consensus(&self, t: usize) -> f64 {
        self.numerator(t) / (2.0 * t as f64 * (self.rho - self.y_star_norm))
    }

    /// Upper bound on `F(x̂_t) − F(x*)`.
    pub fn bound_objective_upper(&self, t: usize) -> f64 {
        self.numerator(t) / (2.0 * t as f64)
    }

    /// Lower bound on `F(x̂_t) − F(x*)`.
    pub fn bound_objective_lower(&self, t: usize) -> f64 {
        -self.y_star_norm * self.bound_consensus(t)
    }

    /// Flat `key = value` block for run summaries.
    pub fn report(&self, horizon: usize) -> String {
        let t = horizon.max(1).min(self.threshold_sums.len() - 1);
        format!(
            "certificate.a = {:e}\ncertificate.b = {:e}\ncertificate.rho = {:e}\n\
             certificate.y_star_norm = {:e}\ncertificate.initial_distance_P = {:e}\n\
             certificate.coupling_norm = {:e}\ncertificate.A_t = {:e}\n\
             certificate.bound_consensus_t = {:e}\ncertificate.bound_objective_upper_t = {:e}\n\
             certificate.bound_objective_lower_t = {:e}\ncertificate.t = {t}\n",
            self.a,
            self.b,
            self.rho,
            self.y_star_norm,
            self.initial_distance,
            self.coupling_norm,
            self.a_t(t),
            self.bound_consensus(t),
            self.bound_objective_upper(t),
            self.bound_objective_lower(t),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertificateVerdict {
    pub t: usize,
    pub consensus: f64,
    pub consensus_bound: f64,
    /// Signed `F(x̂_t) − F*`.
    pub objective_gap: f64,
    pub objective_lower: f64,
    pub objective_upper: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub certificate: Theorem1Certificate,
    pub verdicts: Vec<CertificateVerdict>,
}

impl CertificateReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }
}

/// Least-norm `y` with `(√L ⊗ I) y = z`, through the eigendecomposition of `L`.
pub fn least_norm_dual(laplacian: &SymmetricMatrix, z: &Stacked) -> Result<Stacked> {
    let eig = symmetric_eigen(laplacian)?;
    let cutoff = 1e-9 * eig.values.last().copied().unwrap_or(0.0).abs().max(1.0);
    let mut y = Stacked::zeros(z.rows(), z.cols());
    for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
        if *lambda <= cutoff {
            continue;
        }
        let inv_sqrt = 1.0 / lambda.sqrt();
        for c in 0..z.cols() {
            let proj: f64 = (0..z.rows()).map(|i| v[i] * z.get(i, c)).sum();
            for i in 0..z.rows() {
                y.set(i, c, y.get(i, c) + inv_sqrt * proj * v[i]);
            }
        }
    }
    Ok(y)
}

/// `‖L(βL + 11ᵀ/n)⁻¹‖₂`, computed numerically.
pub fn coupling_norm(laplacian: &SymmetricMatrix, beta: f64) -> Result<f64> {
    let n = laplacian.n();
    let mut b = laplacian.scaled(beta);
    for i in 0..n {
        for j in 0..=i {
            b.set(i, j, b.get(i, j) + 1.0 / n as f64);
        }
    }
    let eig = symmetric_eigen(&b)?;
    if eig.values[0] <= 0.0 {
        return Err(Error::Contract("βL + 11ᵀ/n is singular; is the graph connected?".into()));
    }
    let b_inv = eig.reconstruct(|l| 1.0 / l);
    // M = L B⁻¹ (general), then ‖M‖ = √λ_max(MᵀM)
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| laplacian.get(i, k) * b_inv.get(k, j)).sum())
                .collect()
        })
        .collect();
    let mut mtm = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            mtm.set(i, j, (0..n).map(|k| m[k][i] * m[k][j]).sum());
        }
    }
    let top = symmetric_eigen(&mtm)?.values.last().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt())
}

/// Default `ρ` for a given `‖y*‖`: twice the norm, and at least 1.
pub fn default_rho(y_star_norm: f64) -> f64 {
    (2.0 * y_star_norm).max(y_star_norm + 1.0)
}

/// Computes the certificate constants for `config` and checks every retained
/// round of `trace` against the consensus bound and the two-sided objective bound.
pub fn theorem1_certificate(
    config: &RunConfig,
    trace: &RunTrace,
    reference: &ReferenceSolution,
    rho: Option<f64>,
) -> Result<CertificateReport> {
    let n = config.n();
    if n > CERTIFICATE_MAX_N {
        return Err(Error::Unsupported(format!(
            "certificate needs an eigendecomposition of L; limited to n <= {CERTIFICATE_MAX_N}, got {n}"
        )));
    }
    if config.z0.is_some() {
        return Err(Error::Config("certificate assumes the default z_0 = 0".into()));
    }
    if !config.schedule.is_summable() {
        return Err(Error::Config("certificate needs a summable threshold schedule".into()));
    }
    let laplacian = config.graph.laplacian();
    let lipschitz = config.objective.lipschitz();
    let check = check_stepsize_composite(&config.eta, config.beta, &laplacian, &lipschitz)?;
    if !check.holds {
        return Err(Error::Config(format!(
            "certificate needs P - L_f > 0; margin is {:e}",
            check.margin
        )));
    }

    let beta = config.beta;
    let a = (2.0 * beta * max_eigenvalue(&laplacian, 1e-12)?).max(1.0);
    let lf_min = lipschitz.iter().copied().fold(f64::INFINITY, f64::min);
    let mut shifted = laplacian.scaled(beta);
    for i in 0..n {
        for j in 0..=i {
            shifted.set(i, j, shifted.get(i, j) + 1.0 / n as f64);
        }
    }
    let b = lf_min.min(1.0 / max_eigenvalue(&shifted, 1e-12)?);
    if !(b > 0.0) {
        return Err(Error::Unsupported(
            "certificate needs every l_{f_i} > 0 (b would vanish)".into(),
        ));
    }

    let z_star = dual_from_primal(&config.objective, &reference.x_star);
    let y_star_norm = least_norm_dual(&laplacian, &z_star)?.frobenius_norm();
    let rho = rho.unwrap_or_else(|| default_rho(y_star_norm));
    if !(rho > y_star_norm) {
        return Err(Error::Config(format!(
            "rho={rho} must exceed the optimal dual norm {y_star_norm}"
        )));
    }

    let x0 = trace
        .primal_at(0)
        .ok_or_else(|| Error::Contract("trace lacks round 0".into()))?;
    let diff = x0.sub(&Stacked::replicate(n, &reference.x_star));
    let initial_distance = primal_weight(&config.eta, beta, &laplacian)
        .stacked_quad_form(&diff)
        .max(0.0)
        .sqrt();

    let horizon = trace.rounds();
    let mut threshold_sums = Vec::with_capacity(horizon + 1);
    let mut running = 0.0;
    threshold_sums.push(0.0);
    for t in 1..=horizon {
        // adds E_{t-1}; E_0 = 0 since every agent broadcasts at round 0
        if t >= 2 {
            running += config
                .schedule
                .max_threshold(n, t - 1)?
                .expect("summable schedules have bounds");
        }
        threshold_sums.push(running);
    }

    let certificate = Theorem1Certificate {
        n,
        a,
        b,
        rho,
        y_star_norm,
        initial_distance,
        coupling_norm: coupling_norm(&laplacian, beta)?,
        threshold_sums,
    };

    let verdicts = trace
        .records
        .iter()
        .filter(|r| r.round >= 1 && r.ergodic_sum.is_some())
        .map(|r| {
            let t = r.round;
            let x_hat = ergodic_average(trace, t)?;
            let consensus = consensus_error(&laplacian, &x_hat);
            let gap = config.objective.value_stacked(&x_hat) - reference.f_star;
            let consensus_bound = certificate.bound_consensus(t);
            let lower = certificate.bound_objective_lower(t);
            let upper = certificate.bound_objective_upper(t);
            Ok(CertificateVerdict {
                t,
                consensus,
                consensus_bound,
                objective_gap: gap,
                objective_lower: lower,
                objective_upper: upper,
                holds: consensus <= consensus_bound && lower <= gap && gap <= upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CertificateReport {
        certificate,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn consensus_error_examples() {
        let l = Graph::path(2).laplacian();
        let v = Stacked::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        // vᵀLv = [1 0]·[[1,−1],[−1,1]]·[1 0]ᵀ = 1
        assert!((consensus_error(&l, &v) - 1.0).abs() < 1e-15);
        let c = Stacked::replicate(2, &[3.5, -1.0]);
        assert_eq!(consensus_error(&l, &c), 0.0);
    }

    #[test]
    fn rate_fit_exact_laws() {
        let power: Vec<(f64, f64)> = (1..=50).map(|t| (t as f64, 3.0 / t as f64)).collect();
        let fit = rate_fit(&power, RateModel::LogLog).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let geo: Vec<(f64, f64)> = (0..40).map(|t| (t as f64, 2.0 * 0.8f64.powi(t))).collect();
        let fit = rate_fit(&geo, RateModel::SemiLog).unwrap();
        assert!((fit.slope - 0.8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let series: Vec<(f64, f64)> = (1..=200)
            .map(|t| {
                let noise = 1.0 + 0.01 * rng.random_range(-1.0..1.0);
                (t as f64, 5.0 / t as f64 * noise)
            })
            .collect();
        let fit = rate_fit(&series, RateModel::LogLog).unwrap();
        assert!((-1.1..=-0.9).contains(&fit.slope), "{fit:?}");
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        let short: Vec<(f64, f64)> = (1..5).map(|t| (t as f64, 1.0)).collect();
        assert!(rate_fit(&short, RateModel::LogLog).is_err());
        let mut s: Vec<(f64, f64)> = (1..=20).map(|t| (t as f64, 1.0 / t as f64)).collect();
        s[3].1 = 0.0;
        assert!(rate_fit(&s, RateModel::SemiLog).is_err());
    }

    #[test]
    fn coupling_norm_is_inverse_beta() {
        // L and βL + 11ᵀ/n share eigenvectors: the product has eigenvalues 0 and 1/β
        for (g, beta) in [(Graph::ring(6), 0.3), (Graph::complete(4), 0.05), (Graph::path(5), 2.0)] {
            let c = coupling_norm(&g.laplacian(), beta).unwrap();
            assert!((c - 1.0 / beta).abs() < 1e-9 / beta, "{c} vs {}", 1.0 / beta);
        }
    }

    #[test]
    fn least_norm_dual_solves_the_system() {
        let g = Graph::ring(5);
        let l = g.laplacian();
        let eig = symmetric_eigen(&l).unwrap();
        let sqrt_l = eig.reconstruct(|v| v.max(0.0).sqrt());
        let z = Stacked::from_rows(&[vec![1.0], vec![-2.0], vec![0.5], vec![0.25], vec![0.25]]).unwrap();
        assert!(z.column_sums()[0].abs() < 1e-15);
        let y = least_norm_dual(&l, &z).unwrap();
        let back = sqrt_l.mul_stacked(&y);
        for i in 0..5 {
            assert!((back.get(i, 0) - z.get(i, 0)).abs() < 1e-12);
        }
        // orthogonal to the null space
        assert!(y.column_sums()[0].abs() < 1e-12);
    }

    #[test]
    fn default_rho_exceeds_the_norm() {
        assert!(default_rho(0.0) > 0.0);
        assert!(default_rho(5.0) > 5.0);
    }
}
