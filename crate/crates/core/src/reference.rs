//! Centralized ground truth: `min_θ Σ_i F_i(θ)` solved on one machine, plus
//! the KKT residual of a stacked primal-dual pair.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{distance, Stacked, SymmetricMatrix};
use crate::objective::{CompositeObjective, NonsmoothPart};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    /// `F(x_star)`, by evaluation.
    pub f_star: f64,
    /// Norm of the proximal-gradient mapping at `x_star`.
    pub solver_residual: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before `tol` was met.
    pub certified: bool,
    pub tol: f64,
}

/// Proximal gradient with fixed step `1/l`, `l = Σ_i l_{f_i}`, started at
/// the origin; diagonal quadratics use their closed form instead.
pub fn solve_centralized(objective: &CompositeObjective, tol: f64, max_iter: usize) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tol={tol} must be positive")));
    }
    let lipschitz: f64 = objective.lipschitz().iter().sum();
    let step_l = if lipschitz > 0.0 { lipschitz } else { 1.0 };
    let g = objective.nonsmooth_sum();
    let mapping = |theta: &[f64]| -> (Vec<f64>, f64) {
        let grad = objective.smooth_gradient_sum(theta);
        let arg: Vec<f64> = theta.iter().zip(&grad).map(|(t, gr)| t - gr / step_l).collect();
        let next = g.prox(1.0 / step_l, &arg);
        let res = step_l * distance(theta, &next);
        (next, res)
    };

    if let Some(x) = crate::objective::instances_quadratic_minimizer(objective) {
        let (_, res) = mapping(&x);
        return Ok(ReferenceSolution {
            f_star: objective.value(&x),
            x_star: x,
            solver_residual: res,
            iterations: 0,
            certified: true,
            tol,
        });
    }

    let mut theta = vec![0.0; objective.dim()];
    for it in 0..max_iter {
        let (next, res) = mapping(&theta);
        if res <= tol {
            return Ok(ReferenceSolution {
                f_star: objective.value(&theta),
                x_star: theta,
                solver_residual: res,
                iterations: it,
                certified: true,
                tol,
            });
        }
        theta = next;
    }
    let (_, res) = mapping(&theta);
    log::warn!("centralized solver stopped after {max_iter} iterations with residual {res:e}");
    Ok(ReferenceSolution {
        f_star: objective.value(&theta),
        x_star: theta,
        solver_residual: res,
        iterations: max_iter,
        certified: res <= tol,
        tol,
    })
}

/// A dual point `z*` paired with the consensus optimum `1 ⊗ x*`:
/// `z*_i = −∇f_i(x*) − s_i` with `s_i ∈ ∂g_i(x*)`. Where the ℓ1 subgradient is
/// set-valued the aggregate `−Σ∇f_i(x*)` is split in proportion to the
/// agents' weights, which makes `Σ_i z*_i` vanish up to solver accuracy.
pub fn dual_from_primal(objective: &CompositeObjective, x_star: &[f64]) -> Stacked {
    let n = objective.n();
    let m = objective.dim();
    let total_grad = objective.smooth_gradient_sum(x_star);
    let total_weight: f64 = objective
        .agents()
        .iter()
        .map(|a| match a.nonsmooth {
            NonsmoothPart::L1 { weight, .. } => weight,
            NonsmoothPart::Zero { .. } => 0.0,
        })
        .sum();
    let mut z = Stacked::zeros(n, m);
    for (i, a) in objective.agents().iter().enumerate() {
        let grad = a.smooth.gradient(x_star);
        let row = z.row_mut(i);
        for j in 0..m {
            let s = match a.nonsmooth {
                NonsmoothPart::Zero { .. } => 0.0,
                NonsmoothPart::L1 { weight, .. } => {
                    if x_star[j] > 0.0 {
                        weight
                    } else if x_star[j] < 0.0 {
                        -weight
                    } else if total_weight > 0.0 {
                        (-total_grad[j] * weight / total_weight).clamp(-weight, weight)
                    } else {
                        0.0
                    }
                }
            };
            row[j] = -grad[j] - s;
        }
    }
    z
}

/// `‖v‖_L = √(Σ_coord vᵀLv)`, never materializing `√L`.
///
/// `laplacian` must have zero row sums; the form is summed edge by edge as
/// `Σ_{i<j} −L_ij ‖v_i − v_j‖²` so a consensual `v` gives exactly zero.
pub fn laplacian_seminorm(laplacian: &SymmetricMatrix, v: &Stacked) -> f64 {
    let n = laplacian.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = -laplacian.get(i, j);
            if w != 0.0 {
                let d = crate::linalg::distance(v.row(i), v.row(j));
                total += w * d * d;
            }
        }
    }
    total.max(0.0).sqrt()
}

/// `dist(−z, ∇f(x) + ∂g(x)) + ‖x‖_L`; zero exactly at a KKT pair.
pub fn kkt_residual(x: &Stacked, z: &Stacked, objective: &CompositeObjective, laplacian: &SymmetricMatrix) -> f64 {
    let mut stationarity = 0.0;
    for (i, a) in objective.agents().iter().enumerate() {
        let grad = a.smooth.gradient(x.row(i));
        let w: Vec<f64> = z.row(i).iter().zip(&grad).map(|(zj, gj)| -zj - gj).collect();
        let d = a.nonsmooth.subdifferential_distance(x.row(i), &w);
        stationarity += d * d;
    }
    stationarity.sqrt() + laplacian_seminorm(laplacian, x)
}

impl ReferenceSolution {
    /// Cache file stem: instance hash plus tolerance.
    pub fn cache_key(instance_hash: &str, tol: f64) -> String {
        format!("reference_{instance_hash}_{tol:e}")
    }

    pub fn to_text(&self, instance_hash: &str) -> String {
        use crate::objective::fmt_real;
        let mut s = String::new();
        writeln!(s, "etlalm-reference v1").unwrap();
        writeln!(s, "instance {instance_hash}").unwrap();
        writeln!(s, "tol {}", fmt_real(self.tol)).unwrap();
        writeln!(s, "f_star {}", fmt_real(self.f_star)).unwrap();
        writeln!(s, "residual {}", fmt_real(self.solver_residual)).unwrap();
        writeln!(s, "iterations {}", self.iterations).unwrap();
        writeln!(s, "certified {}", self.certified).unwrap();
        let xs: Vec<String> = self.x_star.iter().map(|v| fmt_real(*v)).collect();
        writeln!(s, "x_star {}", xs.join(" ")).unwrap();
        s
    }

    /// Parses a cached solution, checking it belongs to `instance_hash`.
    pub fn from_text(text: &str, instance_hash: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut field = |key: &str, lineno: usize| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(format!("line {lineno}"), "unexpected end"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(Some(r).filter(|r| r.is_empty())))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(format!("line {lineno}"), format!("expected '{key}'")))
        };
        let bad = |lineno: usize, what: &str| Error::parse(format!("line {lineno}"), format!("bad {what}"));
        if field("etlalm-reference v1", 1)? != "" {
            return Err(bad(1, "header"));
        }
        let hash = field("instance", 2)?;
        if hash != instance_hash {
            return Err(Error::parse("line 2", format!("cached for instance {hash}, not {instance_hash}")));
        }
        let tol = field("tol", 3)?.parse().map_err(|_| bad(3, "tol"))?;
        let f_star = field("f_star", 4)?.parse().map_err(|_| bad(4, "f_star"))?;
        let solver_residual = field("residual", 5)?.parse().map_err(|_| bad(5, "residual"))?;
        let iterations = field("iterations", 6)?.parse().map_err(|_| bad(6, "iterations"))?;
        let certified = field("certified", 7)?.parse().map_err(|_| bad(7, "certified"))?;
        let x_star = field("x_star", 8)?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(8, "x_star")))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceSolution {
            x_star,
            f_star,
            solver_residual,
            iterations,
            certified,
            tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::objective::{make_lasso_instance, make_quadratic_instance, AgentObjective, SmoothPart};

    fn one_dim_lasso() -> CompositeObjective {
        let a = Stacked::from_rows(&[vec![1.0]]).unwrap();
        CompositeObjective::new(vec![AgentObjective {
            smooth: SmoothPart::least_squares(a, vec![3.0]).unwrap(),
            nonsmooth: NonsmoothPart::L1 { dim: 1, weight: 1.0 },
        }])
        .unwrap()
    }

    #[test]
    fn one_dimensional_soft_threshold_optimum() {
        // min ½(θ−3)² + |θ| → θ* = 2, F* = ½ + 2
        let sol = solve_centralized(&one_dim_lasso(), 1e-12, 1000).unwrap();
        assert!(sol.certified);
        assert!((sol.x_star[0] - 2.0).abs() < 1e-12);
        assert!((sol.f_star - 2.5).abs() < 1e-12);
    }

    #[test]
    fn huge_tolerance_returns_the_start() {
        let sol = solve_centralized(&one_dim_lasso(), 1e6, 1000).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.x_star, vec![0.0]);
    }

    #[test]
    fn quadratic_uses_closed_form() {
        let inst = make_quadratic_instance(6, 3, 4).unwrap();
        let sol = solve_centralized(&inst.objective, 1e-10, 10).unwrap();
        assert_eq!(Some(sol.x_star.clone()), inst.quadratic_minimizer());
        assert!(sol.solver_residual < 1e-10);
    }

    #[test]
    fn exhausted_budget_is_not_certified() {
        let inst = make_lasso_instance(5, 3, 8, 0.1, 2).unwrap();
        let sol = solve_centralized(&inst.objective, 1e-14, 3).unwrap();
        assert!(!sol.certified);
        assert_eq!(sol.iterations, 3);
    }

    #[test]
    fn kkt_residual_at_optimum_and_off_consensus() {
        let inst = make_quadratic_instance(4, 2, 8).unwrap();
        let sol = solve_centralized(&inst.objective, 1e-12, 10).unwrap();
        let lap = Graph::ring(4).laplacian();
        let x = Stacked::replicate(4, &sol.x_star);
        let z = dual_from_primal(&inst.objective, &sol.x_star);
        assert!(kkt_residual(&x, &z, &inst.objective, &lap) < 1e-12);

        let mut y = x.clone();
        y.set(0, 0, y.get(0, 0) + 1.0);
        let r = kkt_residual(&y, &z, &inst.objective, &lap);
        assert!(r >= laplacian_seminorm(&lap, &y));
        assert!(laplacian_seminorm(&lap, &y) > 0.0);
    }

    #[test]
    fn lasso_dual_is_balanced() {
        let inst = make_lasso_instance(6, 3, 5, 0.1, 5).unwrap();
        let sol = solve_centralized(&inst.objective, 1e-12, DEFAULT_MAX_ITER).unwrap();
        let z = dual_from_primal(&inst.objective, &sol.x_star);
        let sums = z.column_sums();
        assert!(sums.iter().all(|s| s.abs() < 1e-9), "{sums:?}");
        let lap = Graph::complete(6).laplacian();
        let x = Stacked::replicate(6, &sol.x_star);
        assert!(kkt_residual(&x, &z, &inst.objective, &lap) < 1e-9);
    }

    #[test]
    fn cache_text_round_trip() {
        let sol = solve_centralized(&one_dim_lasso(), 1e-12, 100).unwrap();
        let text = sol.to_text("abc");
        assert_eq!(ReferenceSolution::from_text(&text, "abc").unwrap(), sol);
        assert!(ReferenceSolution::from_text(&text, "other").is_err());
    }
}
