//! Extreme eigenvalues of dense symmetric matrices.
//!
//! Power iteration is the primary route. It runs on `M + sI` with a
//! Gershgorin shift `s` that makes the spectrum nonnegative, so the dominant
//! eigenvalue is the largest one. When it stalls (small spectral gap) and the
//! matrix is small enough, a cyclic Jacobi eigensolve takes over.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, SymmetricMatrix};

/// Largest dimension handed to the dense fallback.
pub const DENSE_FALLBACK_MAX_N: usize = 512;

const POWER_MAX_ITER: usize = 20_000;
const JACOBI_MAX_SWEEPS: usize = 100;
const START_VECTOR_SEED: u64 = 0x5eed_0f_1a7;

/// Full eigendecomposition, eigenvalues ascending, `vectors[k]` the unit
/// eigenvector of `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Eigen {
    /// Rebuilds `Σ_k φ(λ_k) v_k v_kᵀ`.
    pub fn reconstruct(&self, phi: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.values.len();
        let mut out = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = self
                    .values
                    .iter()
                    .zip(&self.vectors)
                    .map(|(l, v)| phi(*l) * v[i] * v[j])
                    .sum();
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Cyclic Jacobi rotations.
pub fn symmetric_eigen(m: &SymmetricMatrix) -> Result<Eigen> {
    let n = m.n();
    let mut a = m.to_rows();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m.frobenius_norm();

    let mut converged = scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        // the sweep loop may exit right after the sweep that finished the job
        if off > 1e-12 * scale {
            return Err(Error::NoConvergence {
                iterations: JACOBI_MAX_SWEEPS,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    Ok(Eigen { values, vectors })
}

fn gershgorin_lower(m: &SymmetricMatrix) -> f64 {
    (0..m.n())
        .map(|i| {
            let row = m.row(i);
            let off: f64 = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v.abs())
                .sum();
            row[i] - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// Dominant eigenvalue by power iteration on `M + shift·I`, reported for `M`.
fn power_iteration(m: &SymmetricMatrix, tol: f64) -> std::result::Result<f64, usize> {
    let n = m.n();
    let shift = (-gershgorin_lower(m)).max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(START_VECTOR_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let scale = m.frobenius_norm();
    for _ in 0..POWER_MAX_ITER {
        let mut w = m.mul_vec(&v);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        let lambda_shifted = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda_shifted * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let lambda = lambda_shifted - shift;
        let target = tol * lambda.abs().max(f64::EPSILON * scale);
        if residual <= target {
            return Ok(lambda);
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(lambda);
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(POWER_MAX_ITER)
}

/// Largest eigenvalue of `m` to relative tolerance `tol`.
pub fn max_eigenvalue(m: &SymmetricMatrix, tol: f64) -> Result<f64> {
    if m.n() == 0 {
        return Err(Error::Contract("empty matrix".into()));
    }
    if m.is_zero() {
        return Ok(0.0);
    }
    match power_iteration(m, tol) {
        Ok(l) => Ok(l),
        Err(iterations) if m.n() > DENSE_FALLBACK_MAX_N => Err(Error::NoConvergence { iterations }),
        Err(_) => Ok(*symmetric_eigen(m)?.values.last().expect("nonempty")),
    }
}

/// Smallest eigenvalue, via `λ_min(M) = c − λ_max(cI − M)` with `c = λ_max(M) + 1`.
pub fn min_eigenvalue(m: &SymmetricMatrix, tol: f64) -> Result<f64> {
    let c = max_eigenvalue(m, tol)? + 1.0;
    let mut shifted = m.scaled(-1.0);
    shifted.add_to_diagonal(c);
    Ok(c - max_eigenvalue(&shifted, tol)?)
}
