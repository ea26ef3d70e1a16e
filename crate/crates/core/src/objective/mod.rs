//! Per-agent composite objectives `F_i = f_i + g_i`.
//!
//! The smooth part exposes value, gradient and its curvature constants
//! (gradient Lipschitz bound and strong-convexity modulus); the nonsmooth part
//! exposes value and proximal map. Both are closed enums: every instance the
//! crate generates or loads is one of these shapes, which keeps them
//! serializable.

mod instances;
mod io;

pub(crate) use instances::quadratic_minimizer as instances_quadratic_minimizer;
pub(crate) use io::fmt_real;
pub use instances::{
    make_lasso_instance, make_logistic_instance, make_quadratic_instance, Instance, InstanceKind,
    LABEL_FLIP_PROBABILITY,
};

use crate::error::{Error, Result};
use crate::linalg::{dot, Stacked};

/// Component-wise `sign(y)·max(|y| − t, 0)`.
pub fn soft_threshold(y: &[f64], t: f64) -> Vec<f64> {
    debug_assert!(t >= 0.0);
    y.iter().map(|v| soft_threshold_scalar(*v, t)).collect()
}

fn soft_threshold_scalar(y: f64, t: f64) -> f64 {
    if y > t {
        y - t
    } else if y < -t {
        y + t
    } else {
        0.0
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-s})`.
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SmoothPart {
    Zero {
        dim: usize,
    },
    /// `½‖b − Aθ‖²`.
    LeastSquares {
        a: Stacked,
        b: Vec<f64>,
        lipschitz: f64,
    },
    /// `Σ_j ln(1 + exp(−y_j⟨M_j, θ⟩)) + ridge/2·‖θ‖²`.
    Logistic {
        features: Stacked,
        labels: Vec<f64>,
        ridge: f64,
        lipschitz: f64,
    },
    /// `½(θ − c)ᵀ diag(d) (θ − c)`.
    Quadratic {
        diag: Vec<f64>,
        center: Vec<f64>,
    },
}

impl SmoothPart {
    /// Least squares with `l = λ_max(AᵀA)` computed from the data.
    pub fn least_squares(a: Stacked, b: Vec<f64>) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::Contract("A and b disagree on row count".into()));
        }
        let lipschitz = instances::gram_max_eigenvalue(&a)?;
        Ok(SmoothPart::LeastSquares { a, b, lipschitz })
    }

    /// Logistic loss with `l = ¼λ_max(Σ M_j M_jᵀ) + ridge`.
    pub fn logistic(features: Stacked, labels: Vec<f64>, ridge: f64) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Contract("features and labels disagree on sample count".into()));
        }
        if labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::Contract("labels must be ±1".into()));
        }
        let lipschitz = 0.25 * instances::gram_max_eigenvalue(&features)? + ridge;
        Ok(SmoothPart::Logistic {
            features,
            labels,
            ridge,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothPart::Zero { dim } => *dim,
            SmoothPart::LeastSquares { a, .. } => a.cols(),
            SmoothPart::Logistic { features, .. } => features.cols(),
            SmoothPart::Quadratic { diag, .. } => diag.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SmoothPart::Zero { .. })
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        match self {
            SmoothPart::Zero { .. } => 0.0,
            SmoothPart::LeastSquares { a, b, .. } => {
                0.5 * (0..a.rows())
                    .map(|r| {
                        let res = b[r] - dot(a.row(r), theta);
                        res * res
                    })
                    .sum::<f64>()
            }
            SmoothPart::Logistic {
                features,
                labels,
                ridge,
                ..
            } => {
                let loss: f64 = (0..features.rows())
                    .map(|j| softplus(-labels[j] * dot(features.row(j), theta)))
                    .sum();
                loss + 0.5 * ridge * dot(theta, theta)
            }
            SmoothPart::Quadratic { diag, center } => {
                0.5 * diag
                    .iter()
                    .zip(center)
                    .zip(theta)
                    .map(|((d, c), t)| d * (t - c) * (t - c))
                    .sum::<f64>()
            }
        }
    }

    /// Writes `∇f(θ)` into `out`.
    pub fn gradient_into(&self, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            SmoothPart::Zero { .. } => {}
            SmoothPart::LeastSquares { a, b, .. } => {
                for r in 0..a.rows() {
                    let row = a.row(r);
                    let res = dot(row, theta) - b[r];
                    for (o, ar) in out.iter_mut().zip(row) {
                        *o += ar * res;
                    }
                }
            }
            SmoothPart::Logistic {
                features,
                labels,
                ridge,
                ..
            } => {
                for j in 0..features.rows() {
                    let row = features.row(j);
                    let w = -labels[j] * sigmoid(-labels[j] * dot(row, theta));
                    for (o, mj) in out.iter_mut().zip(row) {
                        *o += w * mj;
                    }
                }
                for (o, t) in out.iter_mut().zip(theta) {
                    *o += ridge * t;
                }
            }
            SmoothPart::Quadratic { diag, center } => {
                for ((o, d), (c, t)) in out.iter_mut().zip(diag).zip(center.iter().zip(theta)) {
                    *o = d * (t - c);
                }
            }
        }
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        self.gradient_into(theta, &mut g);
        g
    }

    /// `l_{f_i}`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            SmoothPart::Zero { .. } => 0.0,
            SmoothPart::LeastSquares { lipschitz, .. } => *lipschitz,
            SmoothPart::Logistic { lipschitz, .. } => *lipschitz,
            SmoothPart::Quadratic { diag, .. } => diag.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `μ_{f_i}`; zero when merely convex.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            SmoothPart::Zero { .. } | SmoothPart::LeastSquares { .. } => 0.0,
            SmoothPart::Logistic { ridge, .. } => *ridge,
            SmoothPart::Quadratic { diag, .. } => {
                diag.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NonsmoothPart {
    Zero { dim: usize },
    /// `weight·‖θ‖₁`.
    L1 { dim: usize, weight: f64 },
}

impl NonsmoothPart {
    pub fn dim(&self) -> usize {
        match self {
            NonsmoothPart::Zero { dim } | NonsmoothPart::L1 { dim, .. } => *dim,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NonsmoothPart::Zero { .. })
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        match self {
            NonsmoothPart::Zero { .. } => 0.0,
            NonsmoothPart::L1 { weight, .. } => weight * theta.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// `argmin_x g(x) + ‖x − y‖²/(2t)`.
    pub fn prox(&self, t: f64, y: &[f64]) -> Vec<f64> {
        match self {
            NonsmoothPart::Zero { .. } => y.to_vec(),
            NonsmoothPart::L1 { weight, .. } => soft_threshold(y, t * weight),
        }
    }

    /// Euclidean distance from `w` to the subdifferential `∂g(x)`.
    pub fn subdifferential_distance(&self, x: &[f64], w: &[f64]) -> f64 {
        match self {
            NonsmoothPart::Zero { .. } => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NonsmoothPart::L1 { weight, .. } => x
                .iter()
                .zip(w)
                .map(|(xj, wj)| {
                    let d = if *xj > 0.0 {
                        wj - weight
                    } else if *xj < 0.0 {
                        wj + weight
                    } else {
                        (wj.abs() - weight).max(0.0)
                    };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `F_i = f_i + g_i` held by one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentObjective {
    pub smooth: SmoothPart,
    pub nonsmooth: NonsmoothPart,
}

impl AgentObjective {
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.smooth.value(theta) + self.nonsmooth.value(theta)
    }
}

/// The network objective: one composite term per agent, shared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeObjective {
    dim: usize,
    agents: Vec<AgentObjective>,
}

impl CompositeObjective {
    pub fn new(agents: Vec<AgentObjective>) -> Result<Self> {
        let dim = agents
            .first()
            .ok_or_else(|| Error::Contract("objective needs at least one agent".into()))?
            .smooth
            .dim();
        for (i, a) in agents.iter().enumerate() {
            if a.smooth.dim() != dim || a.nonsmooth.dim() != dim {
                return Err(Error::Contract(format!(
                    "agent {i} has dimension {}/{} but the objective uses {dim}",
                    a.smooth.dim(),
                    a.nonsmooth.dim()
                )));
            }
        }
        Ok(CompositeObjective { dim, agents })
    }

    /// `f_i = g_i = 0` for every agent.
    pub fn zero(n: usize, dim: usize) -> Self {
        Self::new(vec![
            AgentObjective {
                smooth: SmoothPart::Zero { dim },
                nonsmooth: NonsmoothPart::Zero { dim },
            };
            n
        ])
        .expect("consistent dimensions")
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent(&self, i: usize) -> &AgentObjective {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[AgentObjective] {
        &self.agents
    }

    /// Diagonal of `L_f`.
    pub fn lipschitz(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.smooth.lipschitz()).collect()
    }

    /// Diagonal of `M`.
    pub fn strong_convexity(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.smooth.strong_convexity()).collect()
    }

    pub fn is_smooth(&self) -> bool {
        self.agents.iter().all(|a| a.nonsmooth.is_zero())
    }

    pub fn is_nonsmooth_only(&self) -> bool {
        self.agents.iter().all(|a| a.smooth.is_zero())
    }

    /// `Σ_i F_i(θ)` at a common point.
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.agents.iter().map(|a| a.value(theta)).sum()
    }

    /// `Σ_i F_i(v_i)`: each agent's block evaluated in its own objective.
    pub fn value_stacked(&self, v: &Stacked) -> f64 {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.value(v.row(i)))
            .sum()
    }

    /// `Σ_i ∇f_i(θ)`.
    pub fn smooth_gradient_sum(&self, theta: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for a in &self.agents {
            a.smooth.gradient_into(theta, &mut g);
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += gi;
            }
        }
        total
    }

    /// Stacked `∇f(v)`, block `i` being `∇f_i(v_i)`.
    pub fn smooth_gradient_stacked(&self, v: &Stacked) -> Stacked {
        let mut out = Stacked::zeros(v.rows(), v.cols());
        for (i, a) in self.agents.iter().enumerate() {
            a.smooth.gradient_into(v.row(i), out.row_mut(i));
        }
        out
    }

    /// `Σ_i g_i` collapsed into a single nonsmooth term, when the family allows it.
    pub fn nonsmooth_sum(&self) -> NonsmoothPart {
        let weight: f64 = self
            .agents
            .iter()
            .map(|a| match &a.nonsmooth {
                NonsmoothPart::Zero { .. } => 0.0,
                NonsmoothPart::L1 { weight, .. } => *weight,
            })
            .sum();
        if self.is_smooth() {
            NonsmoothPart::Zero { dim: self.dim }
        } else {
            NonsmoothPart::L1 {
                dim: self.dim,
                weight,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0], 1.0), vec![2.0]);
        assert_eq!(soft_threshold(&[-0.5], 1.0), vec![0.0]);
        assert_eq!(soft_threshold(&[-4.0], 1.5), vec![-2.5]);
        let y = [0.3, -7.0, 0.0];
        assert_eq!(soft_threshold(&y, 0.0), y.to_vec());
    }

    #[test]
    fn identity_least_squares() {
        let a = Stacked::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = SmoothPart::least_squares(a, vec![0.0, 0.0]).unwrap();
        let theta = [0.7, -1.2];
        assert!((f.value(&theta) - 0.5 * (0.49 + 1.44)).abs() < 1e-15);
        assert_eq!(f.gradient(&theta), theta.to_vec());
        assert!((f.lipschitz() - 1.0).abs() < 1e-12);
        assert_eq!(f.strong_convexity(), 0.0);
    }

    #[test]
    fn logistic_at_origin() {
        let m = vec![0.4, -1.0, 1.0];
        let features = Stacked::from_rows(&[m.clone()]).unwrap();
        for y in [1.0, -1.0] {
            let f = SmoothPart::logistic(features.clone(), vec![y], 0.0).unwrap();
            let theta = [0.0; 3];
            assert!((f.value(&theta) - std::f64::consts::LN_2).abs() < 1e-15);
            let g = f.gradient(&theta);
            for (gj, mj) in g.iter().zip(&m) {
                assert!((gj + 0.5 * y * mj).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let features = Stacked::from_rows(&[vec![1.0]]).unwrap();
        let f = SmoothPart::logistic(features, vec![1.0], 0.0).unwrap();
        assert!((f.value(&[-800.0]) - 800.0).abs() < 1e-9);
        assert!(f.value(&[800.0]) >= 0.0);
        assert!(f.gradient(&[-800.0])[0].is_finite());
    }

    #[test]
    fn l1_prox_and_subdifferential() {
        let g = NonsmoothPart::L1 { dim: 3, weight: 0.5 };
        let y = [2.0, 0.2, -1.0];
        let x = g.prox(2.0, &y);
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
        // optimality: (y − x)/t ∈ ∂g(x)
        let w: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a - b) / 2.0).collect();
        assert!(g.subdifferential_distance(&x, &w) < 1e-15);
        assert!(g.subdifferential_distance(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]) > 0.49);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let a = AgentObjective {
            smooth: SmoothPart::Zero { dim: 2 },
            nonsmooth: NonsmoothPart::Zero { dim: 3 },
        };
        assert!(CompositeObjective::new(vec![a]).is_err());
        assert!(CompositeObjective::new(vec![]).is_err());
    }
}
