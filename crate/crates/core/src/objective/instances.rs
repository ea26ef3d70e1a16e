//! Seeded instance generators for the two case studies plus a diagonal
//! quadratic family with a closed-form minimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AgentObjective, CompositeObjective, NonsmoothPart, SmoothPart};
use crate::error::{Error, Result};
use crate::graph::symmetric_eigen;
use crate::linalg::{norm, Stacked, SymmetricMatrix};

/// Probability that a generated logistic label is flipped.
pub const LABEL_FLIP_PROBABILITY: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceKind {
    Lasso { samples_per_agent: usize, tau: f64 },
    Logistic { samples_per_agent: usize, ridge: f64 },
    Quadratic,
    /// Hand-built objective with no generator behind it.
    Custom,
}

impl InstanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceKind::Lasso { .. } => "lasso",
            InstanceKind::Logistic { .. } => "logistic",
            InstanceKind::Quadratic => "quadratic",
            InstanceKind::Custom => "custom",
        }
    }
}

/// A generated (or loaded) objective together with the parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub kind: InstanceKind,
    pub seed: u64,
    pub objective: CompositeObjective,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.objective.n()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Closed-form minimizer `(Σ D_i)⁻¹ Σ D_i c_i` when every agent is a
    /// diagonal quadratic with no nonsmooth part.
    pub fn quadratic_minimizer(&self) -> Option<Vec<f64>> {
        quadratic_minimizer(&self.objective)
    }
}

pub(crate) fn quadratic_minimizer(objective: &CompositeObjective) -> Option<Vec<f64>> {
    let m = objective.dim();
    let mut num = vec![0.0; m];
    let mut den = vec![0.0; m];
    for a in objective.agents() {
        match (&a.smooth, &a.nonsmooth) {
            (SmoothPart::Quadratic { diag, center }, NonsmoothPart::Zero { .. }) => {
                for j in 0..m {
                    num[j] += diag[j] * center[j];
                    den[j] += diag[j];
                }
            }
            _ => return None,
        }
    }
    Some(num.iter().zip(&den).map(|(a, b)| a / b).collect())
}

/// `λ_max(AᵀA)`, computed on whichever Gram matrix is smaller.
pub(crate) fn gram_max_eigenvalue(a: &Stacked) -> Result<f64> {
    let (p, m) = (a.rows(), a.cols());
    if p == 0 || m == 0 {
        return Ok(0.0);
    }
    let gram = if p <= m {
        let mut g = SymmetricMatrix::zeros(p);
        for i in 0..p {
            for j in 0..=i {
                g.set(i, j, crate::linalg::dot(a.row(i), a.row(j)));
            }
        }
        g
    } else {
        let mut g = SymmetricMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                g.set(i, j, (0..p).map(|r| a.get(r, i) * a.get(r, j)).sum());
            }
        }
        g
    };
    let e = symmetric_eigen(&gram)?;
    Ok(e.values.last().copied().unwrap_or(0.0).max(0.0))
}

fn check_counts(counts: &[(&str, usize)]) -> Result<()> {
    for (name, v) in counts {
        if *v == 0 {
            return Err(Error::Config(format!("{name} must be positive")));
        }
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `f_i(θ) = ½‖b_i − A_iθ‖²`, `g_i = τ‖θ‖₁`, with unit-norm rows of `A_i` and unit-norm `b_i`.
pub fn make_lasso_instance(
    n: usize,
    samples_per_agent: usize,
    dim: usize,
    tau: f64,
    seed: u64,
) -> Result<Instance> {
    check_counts(&[("n", n), ("samples per agent", samples_per_agent), ("dimension", dim)])?;
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("tau={tau} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::with_capacity(n);
    for _ in 0..n {
        let mut a = Stacked::zeros(samples_per_agent, dim);
        for r in 0..samples_per_agent {
            let row = a.row_mut(r);
            row.iter_mut().for_each(|v| *v = normal(&mut rng));
            let nr = norm(row);
            row.iter_mut().for_each(|v| *v /= nr);
        }
        let mut b: Vec<f64> = (0..samples_per_agent).map(|_| normal(&mut rng)).collect();
        let nb = norm(&b);
        b.iter_mut().for_each(|v| *v /= nb);
        agents.push(AgentObjective {
            smooth: SmoothPart::least_squares(a, b)?,
            nonsmooth: NonsmoothPart::L1 { dim, weight: tau },
        });
    }
    Ok(Instance {
        kind: InstanceKind::Lasso {
            samples_per_agent,
            tau,
        },
        seed,
        objective: CompositeObjective::new(agents)?,
    })
}

/// Logistic regression with a bias feature fixed at 1, labels from a seeded
/// ground-truth model with [`LABEL_FLIP_PROBABILITY`] noise, optional ridge.
pub fn make_logistic_instance(
    n: usize,
    samples_per_agent: usize,
    dim: usize,
    ridge: f64,
    seed: u64,
) -> Result<Instance> {
    check_counts(&[("n", n), ("samples per agent", samples_per_agent), ("dimension", dim)])?;
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge={ridge} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let mut agents = Vec::with_capacity(n);
    for _ in 0..n {
        let mut features = Stacked::zeros(samples_per_agent, dim);
        let mut labels = Vec::with_capacity(samples_per_agent);
        for j in 0..samples_per_agent {
            let row = features.row_mut(j);
            for v in row.iter_mut().take(dim - 1) {
                *v = normal(&mut rng);
            }
            row[dim - 1] = 1.0;
            let mut y = if crate::linalg::dot(row, &truth) >= 0.0 {
                1.0
            } else {
                -1.0
            };
            if rng.random::<f64>() < LABEL_FLIP_PROBABILITY {
                y = -y;
            }
            labels.push(y);
        }
        agents.push(AgentObjective {
            smooth: SmoothPart::logistic(features, labels, ridge)?,
            nonsmooth: NonsmoothPart::Zero { dim },
        });
    }
    Ok(Instance {
        kind: InstanceKind::Logistic {
            samples_per_agent,
            ridge,
        },
        seed,
        objective: CompositeObjective::new(agents)?,
    })
}

/// `f_i(θ) = ½(θ − c_i)ᵀ D_i (θ − c_i)` with `D_i` uniform in `[1, 2]` and
/// standard-normal centers; `g_i = 0`.
pub fn make_quadratic_instance(n: usize, dim: usize, seed: u64) -> Result<Instance> {
    check_counts(&[("n", n), ("dimension", dim)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = (0..n)
        .map(|_| {
            let diag = (0..dim).map(|_| rng.random_range(1.0..=2.0)).collect();
            let center = (0..dim).map(|_| normal(&mut rng)).collect();
            AgentObjective {
                smooth: SmoothPart::Quadratic { diag, center },
                nonsmooth: NonsmoothPart::Zero { dim },
            }
        })
        .collect();
    Ok(Instance {
        kind: InstanceKind::Quadratic,
        seed,
        objective: CompositeObjective::new(agents)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lasso_layout() {
        let inst = make_lasso_instance(100, 3, 50, 0.1, 7).unwrap();
        assert_eq!(inst.n(), 100);
        assert_eq!(inst.dim(), 50);
        for a in inst.objective.agents() {
            let SmoothPart::LeastSquares { a: mat, b, lipschitz } = &a.smooth else {
                panic!("expected least squares")
            };
            assert_eq!((mat.rows(), mat.cols()), (3, 50));
            for r in 0..3 {
                assert!((norm(mat.row(r)) - 1.0).abs() < 1e-12);
            }
            assert!((norm(b) - 1.0).abs() < 1e-12);
            // unit rows: λ_max(AAᵀ) is between 1 and the trace 3
            assert!(*lipschitz >= 1.0 - 1e-12 && *lipschitz <= 3.0 + 1e-12);
            assert_eq!(a.nonsmooth, NonsmoothPart::L1 { dim: 50, weight: 0.1 });
        }
    }

    #[test]
    fn logistic_layout() {
        let inst = make_logistic_instance(100, 8, 10, 0.0, 3).unwrap();
        let mut samples = 0;
        for a in inst.objective.agents() {
            let SmoothPart::Logistic { features, labels, .. } = &a.smooth else {
                panic!("expected logistic")
            };
            samples += features.rows();
            assert!((0..features.rows()).all(|j| features.get(j, 9) == 1.0));
            assert!(labels.iter().all(|y| y.abs() == 1.0));
        }
        assert_eq!(samples, 800);
        assert_eq!(inst.objective.strong_convexity(), vec![0.0; 100]);
        let ridged = make_logistic_instance(4, 8, 10, 0.1, 3).unwrap();
        assert_eq!(ridged.objective.strong_convexity(), vec![0.1; 4]);
    }

    #[test]
    fn quadratic_minimizer_examples() {
        let two = CompositeObjective::new(vec![
            AgentObjective {
                smooth: SmoothPart::Quadratic { diag: vec![1.0], center: vec![0.0] },
                nonsmooth: NonsmoothPart::Zero { dim: 1 },
            },
            AgentObjective {
                smooth: SmoothPart::Quadratic { diag: vec![1.0], center: vec![2.0] },
                nonsmooth: NonsmoothPart::Zero { dim: 1 },
            },
        ])
        .unwrap();
        assert_eq!(quadratic_minimizer(&two), Some(vec![1.0]));

        let one = make_quadratic_instance(1, 4, 11).unwrap();
        let SmoothPart::Quadratic { center, .. } = &one.objective.agent(0).smooth else {
            panic!()
        };
        let xs = one.quadratic_minimizer().unwrap();
        for (a, b) in xs.iter().zip(center) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_constants() {
        let inst = make_quadratic_instance(5, 3, 2).unwrap();
        for a in inst.objective.agents() {
            let SmoothPart::Quadratic { diag, .. } = &a.smooth else { panic!() };
            assert!(diag.iter().all(|d| (1.0..=2.0).contains(d)));
            assert!(a.smooth.strong_convexity() <= a.smooth.lipschitz());
        }
    }

    #[test]
    fn generators_reject_zero_counts() {
        assert!(make_lasso_instance(0, 3, 5, 0.1, 0).is_err());
        assert!(make_logistic_instance(2, 0, 5, 0.0, 0).is_err());
        assert!(make_quadratic_instance(2, 0, 0).is_err());
    }
}
