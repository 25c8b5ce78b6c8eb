//! Numerical validation helpers shared by the test suites and the
//! `invariants` experiment: finite-difference gradient checks (central
//! differences, tangent-space perturbations for simplex-constrained
//! parameters), identity residuals, and KKT residuals for the constrained
//! proximal steps. Everything here is independent of the solver paths it
//! checks.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ambiguity::{BregmanGeometry, ProxSolution};
use crate::error::Result;
use crate::mdp::{objective, Kernel, TabularMdp, TabularPolicy};
use crate::param::ParamKernel;

/// Central-difference step at parameter magnitude `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Scale-aware relative error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

/// Random dense MDP and kernel with interior rows, for identity and
/// gradient checks.
pub fn random_instance(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> (TabularMdp, Kernel) {
    let cost = Array3::from_shape_fn((n_states, n_actions, n_states), |_| rng.gen::<f64>() * 5.0);
    let mut rho = Array1::from_shape_fn(n_states, |_| 0.2 + rng.gen::<f64>());
    let z = rho.sum();
    rho.mapv_inplace(|x| x / z);
    let mut probs = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut row: Vec<f64> = (0..n_states).map(|_| 0.1 + rng.gen::<f64>()).collect();
            let z: f64 = row.iter().sum();
            for x in &mut row {
                *x /= z;
            }
            for (s2, &x) in row.iter().enumerate() {
                probs[(s, a, s2)] = x;
            }
        }
    }
    (
        TabularMdp::new(cost, rho, gamma).unwrap(),
        Kernel::new(probs).unwrap(),
    )
}

/// Random interior policy (strictly positive rows).
pub fn random_policy(n_states: usize, n_actions: usize, rng: &mut ChaCha8Rng) -> TabularPolicy {
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let row: Vec<f64> = (0..n_actions).map(|_| 0.1 + rng.gen::<f64>()).collect();
        let z: f64 = row.iter().sum();
        for (a, x) in row.iter().enumerate() {
            probs[(s, a)] = x / z;
        }
    }
    TabularPolicy::new(probs).unwrap()
}

/// Zero-sum unit direction (tangent to the simplex).
pub fn zero_sum_direction(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut d: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mean = d.iter().sum::<f64>() / len as f64;
        for x in &mut d {
            *x -= mean;
        }
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            for x in &mut d {
                *x /= norm;
            }
            return d;
        }
    }
}

/// Max relative error between the direct-parameterization gradient and
/// central finite differences along `n_dirs` random tangent directions.
pub fn fd_check_grad_direct(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    p: &Kernel,
    n_dirs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let grad = crate::mdp::grad_direct(mdp, pi, p)?;
    let (s_n, a_n) = (pi.n_states(), pi.n_actions());
    let mut worst: f64 = 0.0;
    for _ in 0..n_dirs {
        // one random tangent direction per state
        let mut dir = Array2::zeros((s_n, a_n));
        for s in 0..s_n {
            let d = zero_sum_direction(a_n, rng);
            for (a, &x) in d.iter().enumerate() {
                dir[(s, a)] = x;
            }
        }
        let h = fd_step(1.0);
        let shift = |sign: f64| -> Result<f64> {
            let probs = pi.probs() + &(&dir * (sign * h));
            let pol = TabularPolicy::new(probs)?;
            objective(mdp, &pol, p)
        };
        let fd = (shift(1.0)? - shift(-1.0)?) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - analytic).abs() / 1.0f64.max(analytic.abs()));
    }
    Ok(worst)
}

/// Same check for the tabular softmax gradient (unconstrained logits).
pub fn fd_check_grad_softmax(
    mdp: &TabularMdp,
    theta: &Array2<f64>,
    p: &Kernel,
    n_dirs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let grad = crate::mdp::grad_softmax(mdp, theta, p)?;
    let (s_n, a_n) = theta.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..n_dirs {
        let mut dir = Array2::zeros((s_n, a_n));
        let mut norm = 0.0;
        for x in dir.iter_mut() {
            *x = rng.gen::<f64>() - 0.5;
            norm += *x * *x;
        }
        let norm = norm.sqrt();
        dir.mapv_inplace(|x| x / norm);
        let h = fd_step(1.0);
        let eval = |sign: f64| -> Result<f64> {
            let th = theta + &(&dir * (sign * h));
            let pol = TabularPolicy::softmax(&th)?;
            objective(mdp, &pol, p)
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - analytic).abs() / 1.0f64.max(analytic.abs()));
    }
    Ok(worst)
}

/// Kernel-gradient check with per-row tangent perturbations.
pub fn fd_check_transition_grad(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    p: &Kernel,
    n_dirs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let grad = crate::inner::transition_grad(mdp, pi, p)?;
    let (s_n, a_n, _) = p.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..n_dirs {
        let mut dir = Array3::zeros((s_n, a_n, s_n));
        for s in 0..s_n {
            for a in 0..a_n {
                let d = zero_sum_direction(s_n, rng);
                for (s2, &x) in d.iter().enumerate() {
                    dir[(s, a, s2)] = x;
                }
            }
        }
        let h = fd_step(1.0);
        let eval = |sign: f64| -> Result<f64> {
            let probs = p.probs() + &(&dir * (sign * h));
            let kernel = Kernel::new(probs)?;
            objective(mdp, pi, &kernel)
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - analytic).abs() / 1.0f64.max(analytic.abs()));
    }
    Ok(worst)
}

/// Parametric transition gradient vs per-coordinate central differences of
/// the exact objective.
pub fn fd_check_parametric_grad(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    kernel: &mut impl ParamKernel,
) -> Result<f64> {
    let grad = crate::param::transition_grad_parametric(mdp, pi, kernel)?;
    let xi0 = kernel.xi();
    let mut worst: f64 = 0.0;
    for i in 0..xi0.len() {
        let h = fd_step(xi0[i]);
        let mut eval = |sign: f64| -> Result<f64> {
            let mut xi = xi0.clone();
            xi[i] += sign * h;
            kernel.set_xi(&xi)?;
            let p = kernel.to_kernel(mdp.n_states(), mdp.n_actions())?;
            objective(mdp, pi, &p)
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / 1.0f64.max(grad[i].abs()));
    }
    kernel.set_xi(&xi0)?;
    Ok(worst)
}

/// Score check: `d log p(s2 | s, a) / d xi` vs central differences.
pub fn fd_check_score(kernel: &mut impl ParamKernel, s: usize, a: usize, s2: usize) -> Result<f64> {
    let score = kernel.score(s, a, s2)?;
    let xi0 = kernel.xi();
    let mut worst: f64 = 0.0;
    for i in 0..xi0.len() {
        let h = fd_step(xi0[i]);
        let mut eval = |sign: f64| -> Result<f64> {
            let mut xi = xi0.clone();
            xi[i] += sign * h;
            kernel.set_xi(&xi)?;
            Ok(kernel.row(s, a)?[s2].ln())
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * h);
        worst = worst.max((fd - score[i]).abs() / 1.0f64.max(score[i].abs()));
    }
    kernel.set_xi(&xi0)?;
    Ok(worst)
}

/// Stationarity residual of a constrained SE proximal solution: for the
/// projection of `y` onto the simplex intersected with the L1 ball, every
/// coordinate must satisfy the subgradient condition within `tol`.
pub fn prox_kkt_residual(
    nominal: &[f64],
    kappa: f64,
    y: &[f64],
    sol: &ProxSolution,
) -> f64 {
    let mut worst: f64 = 0.0;
    let lambda = if sol.lambda.is_finite() { sol.lambda } else { 0.0 };
    // complementary slackness of the budget constraint
    let dist: f64 = sol
        .probs
        .iter()
        .zip(nominal)
        .map(|(p, c)| (p - c).abs())
        .sum();
    if sol.lambda.is_finite() && sol.lambda > 1e-9 {
        worst = worst.max((dist - kappa).abs());
    } else if sol.lambda == 0.0 {
        worst = worst.max((dist - kappa).max(0.0));
    }
    for i in 0..y.len() {
        let p = sol.probs[i];
        let c = nominal[i];
        // stationarity: y_i - p_i - mu - lambda * u_i = 0 with
        // u_i in sign(p_i - c_i) (interval [-1, 1] at p_i = c_i),
        // relaxed to an inequality at p_i = 0
        let resid = y[i] - p - sol.mu;
        let r = if p > 1e-12 {
            if (p - c).abs() > 1e-12 {
                (resid - lambda * (p - c).signum()).abs()
            } else {
                (resid.abs() - lambda).max(0.0)
            }
        } else {
            // p = 0 <= c: u_i = -1 allowed plus nonnegativity multiplier
            (resid + lambda).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

fn bregman(geometry: BregmanGeometry, x: &[f64], y: &[f64]) -> f64 {
    match geometry {
        BregmanGeometry::SquaredEuclidean => {
            0.5 * x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        }
        BregmanGeometry::KullbackLeibler => x
            .iter()
            .zip(y)
            .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 })
            .sum(),
    }
}

/// Three-point inequality residual for one mirror-descent step: returns
/// `B(y, x_t) - B(y, x_{t+1}) - alpha <q, x_{t+1} - y> - B(x_{t+1}, x_t)`,
/// which must be nonnegative (up to rounding) for every feasible `y`.
pub fn three_point_residual(
    geometry: BregmanGeometry,
    x_t: &[f64],
    x_next: &[f64],
    q: &[f64],
    y: &[f64],
    alpha: f64,
) -> f64 {
    let inner: f64 = q
        .iter()
        .zip(x_next.iter().zip(y))
        .map(|(qi, (xn, yi))| qi * (xn - yi))
        .sum();
    bregman(geometry, y, x_t) - bregman(geometry, y, x_next) - alpha * inner
        - bregman(geometry, x_next, x_t)
}

/// Random point of the probability simplex.
pub fn random_simplex_point(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let z: f64 = v.iter().sum();
    for x in &mut v {
        *x /= z;
    }
    v
}

/// Random point of the L1 cell `{p in simplex, ||p - nominal||_1 <= kappa}`
/// (rejection from simplex draws mixed toward the nominal).
pub fn random_feasible_cell_point(
    nominal: &[f64],
    kappa: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    loop {
        let q = random_simplex_point(nominal.len(), rng);
        // mix toward nominal until within budget
        let t: f64 = rng.gen();
        let p: Vec<f64> = q
            .iter()
            .zip(nominal)
            .map(|(qi, ci)| ci + t * (qi - ci))
            .collect();
        let dist: f64 = p.iter().zip(nominal).map(|(a, b)| (a - b).abs()).sum();
        if dist <= kappa {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monte_carlo::stream_rng;

    #[test]
    fn zero_sum_directions_are_tangent() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..10 {
            let d = zero_sum_direction(4, &mut rng);
            assert!(d.iter().sum::<f64>().abs() < 1e-12);
            let n: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn feasible_cell_points_feasible() {
        let mut rng = stream_rng(6, 0);
        let nominal = [0.5, 0.3, 0.2];
        for _ in 0..100 {
            let p = random_feasible_cell_point(&nominal, 0.4, &mut rng);
            assert!(crate::ambiguity::is_feasible_cell(&nominal, 0.4, &p, 1e-9));
        }
    }
}
