//! Robust policy evaluation: transition mirror ascent (TMA) over a
//! rectangular ambiguity set, the robust Bellman policy operator it reduces
//! to in the infinite-step limit, and robust value iteration for both the
//! fixed-policy and optimality problems.

use ndarray::{Array1, Array2, Array3};

use crate::ambiguity::{
    linmax_l1_cell, linmax_shared_budget, prox_se_cell, prox_se_s, AmbiguitySet, BregmanGeometry,
};
use crate::error::{Result, RmdpError};
use crate::mdp::{objective_of_value, policy_evaluate, Kernel, TabularMdp, TabularPolicy, ValueVector};

/// Step-size schedule for the inner ascent. `Infinite` is the closed-form
/// limit where each step applies the robust Bellman policy operator once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    Geometric { beta0: f64, ratio: f64 },
    Infinite,
}

impl StepSchedule {
    /// Geometric schedule at the smallest ratio that preserves the linear
    /// rate, `1 / (1 - (1 - gamma) / m)`, for a mismatch bound `m`.
    pub fn geometric_for(beta0: f64, gamma: f64, m: f64) -> Result<Self> {
        let denom = 1.0 - (1.0 - gamma) / m;
        if !(denom > 0.0) {
            return Err(RmdpError::InvalidParameter {
                name: "m",
                reason: format!("mismatch coefficient {m} too small for gamma {gamma}"),
            });
        }
        Ok(StepSchedule::Geometric {
            beta0,
            ratio: 1.0 / denom,
        })
    }

    fn beta_at(&self, t: usize) -> Option<f64> {
        match *self {
            StepSchedule::Constant(b) => Some(b),
            StepSchedule::Geometric { beta0, ratio } => {
                Some((beta0 * ratio.powi(t as i32)).min(1e12))
            }
            StepSchedule::Infinite => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerConfig {
    pub geometry: BregmanGeometry,
    pub step_schedule: StepSchedule,
    pub max_iters: usize,
    /// Stop once the certified optimality-gap bound drops below this value
    /// (in cost units of the objective).
    pub residual_tol: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            geometry: BregmanGeometry::SquaredEuclidean,
            step_schedule: StepSchedule::Infinite,
            max_iters: 10_000,
            residual_tol: 1e-8,
        }
    }
}

/// Action-next-state values `g_sas' = c_sas' + gamma v_s'`.
pub fn action_next_state_value(mdp: &TabularMdp, v: &ValueVector) -> Array3<f64> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut g = Array3::zeros((s_n, a_n, s_n));
    for s in 0..s_n {
        for a in 0..a_n {
            for s2 in 0..s_n {
                g[(s, a, s2)] = mdp.cost()[(s, a, s2)] + mdp.gamma() * v.0[s2];
            }
        }
    }
    g
}

/// Exact gradient of `J` with respect to the kernel:
/// `dJ/dp_sas' = d_s pi_sa (c_sas' + gamma v_s') / (1 - gamma)`.
pub fn transition_grad(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<Array3<f64>> {
    let v = policy_evaluate(mdp, pi, p)?;
    let d = crate::mdp::occupancy(mdp, pi, p)?;
    let g = action_next_state_value(mdp, &v);
    let scale = 1.0 / (1.0 - mdp.gamma());
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut out = Array3::zeros((s_n, a_n, s_n));
    for s in 0..s_n {
        for a in 0..a_n {
            let w = scale * d.0[s] * pi.probs()[(s, a)];
            for s2 in 0..s_n {
                out[(s, a, s2)] = w * g[(s, a, s2)];
            }
        }
    }
    Ok(out)
}

/// One step of the robust Bellman policy operator `T_pi` at `v`, together
/// with the argmax kernel. Per-cell (or per-state) linear maximization via
/// the greedy L1 transfer.
pub fn robust_bellman_policy_step(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    v: &ValueVector,
    set: &AmbiguitySet,
) -> Result<(ValueVector, Kernel)> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    if v.0.len() != s_n {
        return Err(RmdpError::ShapeMismatch {
            context: "robust_bellman_policy_step",
            expected: format!("value of length {s_n}"),
            actual: format!("length {}", v.0.len()),
        });
    }
    if v.0.iter().any(|x| !x.is_finite()) {
        return Err(RmdpError::NonFinite {
            context: "robust_bellman_policy_step value",
        });
    }
    let g = action_next_state_value(mdp, v);
    let mut w = Array1::zeros(s_n);
    let mut probs = Array3::zeros((s_n, a_n, s_n));
    match set {
        AmbiguitySet::SaRect(sa) => {
            for s in 0..s_n {
                let mut acc = 0.0;
                for a in 0..a_n {
                    let z: Vec<f64> = (0..s_n).map(|s2| g[(s, a, s2)]).collect();
                    let nominal: Vec<f64> = sa.nominal().row(s, a).to_vec();
                    let p = linmax_l1_cell(&nominal, sa.kappa()[(s, a)], &z)?;
                    let val: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
                    acc += pi.probs()[(s, a)] * val;
                    for s2 in 0..s_n {
                        probs[(s, a, s2)] = p[s2];
                    }
                }
                w[s] = acc;
            }
        }
        AmbiguitySet::SRect(sr) => {
            for s in 0..s_n {
                let z = Array2::from_shape_fn((a_n, s_n), |(a, s2)| g[(s, a, s2)]);
                let weights: Vec<f64> = pi.probs().row(s).to_vec();
                let nominal: Vec<Vec<f64>> =
                    (0..a_n).map(|a| sr.nominal().row(s, a).to_vec()).collect();
                let rows = linmax_shared_budget(&nominal, sr.kappa()[s], &z, &weights)?;
                let mut acc = 0.0;
                for a in 0..a_n {
                    let val: f64 = rows[a].iter().zip(z.row(a)).map(|(p, zz)| p * zz).sum();
                    acc += weights[a] * val;
                    for s2 in 0..s_n {
                        probs[(s, a, s2)] = rows[a][s2];
                    }
                }
                w[s] = acc;
            }
        }
    }
    Ok((ValueVector(w), Kernel::new(probs)?))
}

/// One mirror-ascent step on the kernel at step size `beta` (or the
/// Bellman-operator limit). Cells are updated independently; the squared
/// Euclidean geometry is the only one with a constrained closed form here.
pub fn tma_step(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    p_t: &Kernel,
    set: &AmbiguitySet,
    geometry: BregmanGeometry,
    beta: Option<f64>,
) -> Result<Kernel> {
    if geometry != BregmanGeometry::SquaredEuclidean {
        return Err(RmdpError::Config(
            "inner proximal steps under an L1 budget require the squared Euclidean geometry"
                .into(),
        ));
    }
    let v = policy_evaluate(mdp, pi, p_t)?;
    match beta {
        None => {
            let (_, p_next) = robust_bellman_policy_step(mdp, pi, &v, set)?;
            Ok(p_next)
        }
        Some(b) => {
            if b == 0.0 {
                return Ok(p_t.clone());
            }
            let g = action_next_state_value(mdp, &v);
            let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
            let mut probs = Array3::zeros((s_n, a_n, s_n));
            match set {
                AmbiguitySet::SaRect(sa) => {
                    for s in 0..s_n {
                        for a in 0..a_n {
                            let base: Vec<f64> = p_t.row(s, a).to_vec();
                            let gv: Vec<f64> = (0..s_n).map(|s2| g[(s, a, s2)]).collect();
                            let nominal: Vec<f64> = sa.nominal().row(s, a).to_vec();
                            let sol =
                                prox_se_cell(&nominal, sa.kappa()[(s, a)], &base, &gv, b)?;
                            for s2 in 0..s_n {
                                probs[(s, a, s2)] = sol.probs[s2];
                            }
                        }
                    }
                }
                AmbiguitySet::SRect(sr) => {
                    for s in 0..s_n {
                        let base =
                            Array2::from_shape_fn((a_n, s_n), |(a, s2)| p_t.probs()[(s, a, s2)]);
                        // shared-budget gradient carries the policy weights
                        let gw = Array2::from_shape_fn((a_n, s_n), |(a, s2)| {
                            pi.probs()[(s, a)] * g[(s, a, s2)]
                        });
                        let sol = prox_se_s(sr, s, &base, &gw, b)?;
                        for a in 0..a_n {
                            for s2 in 0..s_n {
                                probs[(s, a, s2)] = sol.probs[a][s2];
                            }
                        }
                    }
                }
            }
            Kernel::new(probs)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TmaRow {
    pub iter: usize,
    pub j: f64,
    pub residual: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct TmaResult {
    pub kernel: Kernel,
    pub value: ValueVector,
    /// `J(pi, kernel)` for the returned (best-so-far) kernel.
    pub j: f64,
    pub trace: Vec<TmaRow>,
    pub converged: bool,
    pub iters: usize,
}

/// Mirror ascent to a certified tolerance: stops once
/// `||T_pi v_t - v_t||_inf / (1 - gamma) <= residual_tol`, which bounds the
/// remaining optimality gap of the inner maximization. Returns the
/// best-so-far kernel; non-convergence is reported as a flag, not an error.
pub fn tma_solve(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    set: &AmbiguitySet,
    config: &InnerConfig,
    warm_start: Option<&Kernel>,
) -> Result<TmaResult> {
    let mut p = warm_start.unwrap_or(set.nominal()).clone();
    let mut trace = Vec::new();
    let mut best_j = f64::NEG_INFINITY;
    let mut best = None;
    let mut converged = false;
    let mut iters = 0;
    for t in 0..=config.max_iters {
        let v = policy_evaluate(mdp, pi, &p)?;
        let j = objective_of_value(mdp, &v);
        let (w, p_bellman) = robust_bellman_policy_step(mdp, pi, &v, set)?;
        let residual = w
            .0
            .iter()
            .zip(v.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / (1.0 - mdp.gamma());
        let beta = config.step_schedule.beta_at(t).unwrap_or(f64::INFINITY);
        trace.push(TmaRow {
            iter: t,
            j,
            residual,
            beta,
        });
        if j > best_j {
            best_j = j;
            best = Some((p.clone(), v.clone()));
        }
        iters = t;
        if residual <= config.residual_tol {
            converged = true;
            break;
        }
        if t == config.max_iters {
            break;
        }
        p = match config.step_schedule {
            StepSchedule::Infinite => p_bellman,
            sched => tma_step(mdp, pi, &p, set, config.geometry, sched.beta_at(t))?,
        };
    }
    let (kernel, value) = best.expect("at least one iterate");
    Ok(TmaResult {
        kernel,
        value,
        j: best_j,
        trace,
        converged,
        iters,
    })
}

/// Fixed-policy robust value iteration: iterate `v <- T_pi v` until
/// `||v_{t+1} - v_t||_inf <= tol (1 - gamma) / gamma`, which guarantees the
/// returned value is within `tol` of the robust value in sup norm.
pub fn robust_value_iterate_policy(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    set: &AmbiguitySet,
    tol: f64,
) -> Result<(ValueVector, Kernel)> {
    let mut v = ValueVector(Array1::zeros(mdp.n_states()));
    let stop = tol * (1.0 - mdp.gamma()) / mdp.gamma();
    let max_iters = 1_000_000;
    for _ in 0..max_iters {
        let (w, kernel) = robust_bellman_policy_step(mdp, pi, &v, set)?;
        let diff = w
            .0
            .iter()
            .zip(v.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        v = w;
        if diff <= stop {
            return Ok((v, kernel));
        }
    }
    Err(RmdpError::Convergence {
        context: "robust_value_iterate_policy",
        iters: max_iters,
        residual: f64::NAN,
    })
}

/// Outcome of robust value iteration with the optimality operator.
#[derive(Debug, Clone)]
pub struct RviResult {
    pub value: ValueVector,
    pub policy: TabularPolicy,
    pub kernel: Kernel,
    pub iters: usize,
    pub converged: bool,
    /// False if any per-state minimax policy extraction missed its
    /// optimality certificate (the value itself is still exact).
    pub extraction_certified: bool,
}

/// Robust Bellman optimality backup at `v` for every state. Returns the
/// backed-up values, the greedy (per-state minimax) policy, and the worst
/// kernel responding to that policy.
pub fn robust_bellman_optimal_step(
    mdp: &TabularMdp,
    v: &ValueVector,
    set: &AmbiguitySet,
) -> Result<(ValueVector, TabularPolicy, Kernel, bool)> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let g = action_next_state_value(mdp, v);
    let mut w = Array1::zeros(s_n);
    let mut pi = Array2::zeros((s_n, a_n));
    let mut probs = Array3::zeros((s_n, a_n, s_n));
    let mut certified = true;
    match set {
        AmbiguitySet::SaRect(sa) => {
            for s in 0..s_n {
                let mut best_a = 0;
                let mut best_val = f64::INFINITY;
                let mut rows: Vec<Vec<f64>> = Vec::with_capacity(a_n);
                for a in 0..a_n {
                    let z: Vec<f64> = (0..s_n).map(|s2| g[(s, a, s2)]).collect();
                    let nominal: Vec<f64> = sa.nominal().row(s, a).to_vec();
                    let p = linmax_l1_cell(&nominal, sa.kappa()[(s, a)], &z)?;
                    let val: f64 = p.iter().zip(&z).map(|(x, y)| x * y).sum();
                    if val < best_val {
                        best_val = val;
                        best_a = a;
                    }
                    rows.push(p);
                }
                w[s] = best_val;
                pi[(s, best_a)] = 1.0;
                for (a, row) in rows.iter().enumerate() {
                    for s2 in 0..s_n {
                        probs[(s, a, s2)] = row[s2];
                    }
                }
            }
        }
        AmbiguitySet::SRect(sr) => {
            for s in 0..s_n {
                let z = Array2::from_shape_fn((a_n, s_n), |(a, s2)| g[(s, a, s2)]);
                let nominal: Vec<Vec<f64>> =
                    (0..a_n).map(|a| sr.nominal().row(s, a).to_vec()).collect();
                let mm = srect_state_minimax(&nominal, sr.kappa()[s], &z)?;
                w[s] = mm.value;
                certified &= mm.certified;
                for a in 0..a_n {
                    pi[(s, a)] = mm.policy[a];
                }
                // worst kernel responding to the extracted policy
                let rows = linmax_shared_budget(&nominal, sr.kappa()[s], &z, &mm.policy)?;
                for a in 0..a_n {
                    for s2 in 0..s_n {
                        probs[(s, a, s2)] = rows[a][s2];
                    }
                }
            }
        }
    }
    Ok((
        ValueVector(w),
        TabularPolicy::new(pi)?,
        Kernel::new(probs)?,
        certified,
    ))
}

/// Optimal robust value iteration: `v <- T v` with the optimality operator
/// until `||v_{t+1} - v_t||_inf <= tol (1 - gamma) / gamma`.
pub fn robust_value_iterate_optimal(
    mdp: &TabularMdp,
    set: &AmbiguitySet,
    tol: f64,
) -> Result<RviResult> {
    let mut v = ValueVector(Array1::zeros(mdp.n_states()));
    let stop = tol * (1.0 - mdp.gamma()) / mdp.gamma();
    let max_iters = 1_000_000;
    let mut certified = true;
    for t in 0..max_iters {
        let (w, policy, kernel, cert) = robust_bellman_optimal_step(mdp, &v, set)?;
        certified &= cert;
        let diff = w
            .0
            .iter()
            .zip(v.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        v = w;
        if diff <= stop {
            return Ok(RviResult {
                value: v,
                policy,
                kernel,
                iters: t + 1,
                converged: true,
                extraction_certified: certified,
            });
        }
    }
    Err(RmdpError::Convergence {
        context: "robust_value_iterate_optimal",
        iters: max_iters,
        residual: f64::NAN,
    })
}

/// Per-state minimax for the s-rectangular optimality operator:
/// `min_{pi_s in simplex} max_{p_s in P_s} sum_a pi_sa p_sa^T z_a`.
pub struct StateMinimax {
    pub value: f64,
    pub policy: Vec<f64>,
    pub certified: bool,
}

/// The saddle value equals `max_{p in P_s} min_a p_sa^T z_a` (the payoff is
/// bilinear and both sets are compact and convex). The inner structure is a
/// fractional knapsack per action, so the max-min value is computed by
/// bisection on the common target level; the minimizing policy follows from
/// the equalized marginal-gain condition and is verified against the exact
/// best response.
pub fn srect_state_minimax(
    nominal: &[Vec<f64>],
    kappa: f64,
    z: &Array2<f64>,
) -> Result<StateMinimax> {
    let a_n = nominal.len();
    let s_n = nominal[0].len();
    let scale = z.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
    let tol = 1e-12 * scale;

    // per-action transfer curves: donors ascending in z, mass capacities
    struct Curve {
        base: f64,
        // (gain per unit mass, mass capacity), steepest first
        segs: Vec<(f64, f64)>,
        max_value: f64,
    }
    let mut curves = Vec::with_capacity(a_n);
    for a in 0..a_n {
        let za: Vec<f64> = z.row(a).to_vec();
        let best = {
            let mut b = 0;
            for (i, &x) in za.iter().enumerate().skip(1) {
                if x > za[b] {
                    b = i;
                }
            }
            b
        };
        let base: f64 = nominal[a].iter().zip(&za).map(|(p, v)| p * v).sum();
        let mut order: Vec<usize> = (0..s_n).filter(|&i| i != best).collect();
        order.sort_by(|&i, &j| za[i].partial_cmp(&za[j]).unwrap().then(i.cmp(&j)));
        let mut segs = Vec::new();
        let mut budget_mass = kappa / 2.0;
        let mut max_value = base;
        for i in order {
            if budget_mass <= 0.0 {
                break;
            }
            let gain = za[best] - za[i];
            if gain <= 0.0 {
                break;
            }
            let cap = nominal[a][i].min(budget_mass);
            if cap > 0.0 {
                segs.push((gain, cap));
                max_value += gain * cap;
                budget_mass -= cap;
            }
        }
        curves.push(Curve {
            base,
            segs,
            max_value,
        });
    }

    // mass budget (in units of moved mass, kappa/2 total) needed for action
    // `a` to reach value u, and the marginal gain of its active segment
    let budget_for = |c: &Curve, u: f64| -> (f64, f64) {
        if u <= c.base + tol {
            let slope = c.segs.first().map(|s| s.0).unwrap_or(0.0);
            return (0.0, slope);
        }
        let mut need = u - c.base;
        let mut used = 0.0;
        for &(gain, cap) in &c.segs {
            let full = gain * cap;
            if need <= full + tol {
                return (used + need / gain, gain);
            }
            need -= full;
            used += cap;
        }
        (f64::INFINITY, 0.0)
    };

    let u_lo = curves
        .iter()
        .map(|c| c.base)
        .fold(f64::INFINITY, f64::min);
    let u_hi = curves
        .iter()
        .map(|c| c.max_value)
        .fold(f64::INFINITY, f64::min);

    let total_mass = kappa / 2.0;
    let total_budget = |u: f64| -> f64 { curves.iter().map(|c| budget_for(c, u).0).sum() };

    let u_star = if total_budget(u_hi) <= total_mass + tol {
        u_hi
    } else {
        let mut lo = u_lo;
        let mut hi = u_hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total_budget(mid) <= total_mass {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + scale) {
                break;
            }
        }
        lo
    };

    // binding actions sit at the target level; the minimizing policy
    // weights equalize the adversary's marginal gain across them
    let bind_tol = 1e-7 * (1.0 + scale);
    let mut policy = vec![0.0; a_n];
    let mut saturated: Option<usize> = None;
    let mut weights = Vec::new();
    for (a, c) in curves.iter().enumerate() {
        let reachable = u_star <= c.max_value + bind_tol;
        let binding = reachable && {
            // at the level, or raised to it by the adversary
            let (b, _) = budget_for(c, u_star.min(c.max_value));
            b.is_finite()
        } && c.base <= u_star + bind_tol;
        if !binding {
            continue;
        }
        let (_, slope) = budget_for(c, u_star.min(c.max_value));
        if slope <= tol || u_star >= c.max_value - bind_tol {
            if saturated.is_none() {
                saturated = Some(a);
            }
        } else {
            weights.push((a, 1.0 / slope));
        }
    }
    if let Some(a) = saturated {
        policy[a] = 1.0;
    } else if !weights.is_empty() {
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        for (a, w) in &weights {
            policy[*a] = w / total;
        }
    } else {
        // degenerate fallback: lowest nominal action
        let mut best = 0;
        for (a, c) in curves.iter().enumerate().skip(1) {
            if c.base < curves[best].base {
                best = a;
            }
        }
        policy[best] = 1.0;
    }

    // certificate: the exact best response to the extracted policy must not
    // beat the saddle value
    let rows = linmax_shared_budget(nominal, kappa, z, &policy)?;
    let f_pi: f64 = rows
        .iter()
        .enumerate()
        .map(|(a, row)| {
            policy[a]
                * row
                    .iter()
                    .zip(z.row(a))
                    .map(|(p, zz)| p * zz)
                    .sum::<f64>()
        })
        .sum();
    let mut certified = f_pi <= u_star + 1e-7 * (1.0 + scale);

    if !certified {
        // fall back to the best of a few simple candidates by exact best
        // response; keeps the policy sane when the extraction degenerates
        let mut cands: Vec<Vec<f64>> = Vec::new();
        for a in 0..a_n {
            let mut p = vec![0.0; a_n];
            p[a] = 1.0;
            cands.push(p);
        }
        cands.push(vec![1.0 / a_n as f64; a_n]);
        cands.push(policy.clone());
        let mut best_f = f64::INFINITY;
        let mut best_p = policy.clone();
        for cand in cands {
            let rows = linmax_shared_budget(nominal, kappa, z, &cand)?;
            let f: f64 = rows
                .iter()
                .enumerate()
                .map(|(a, row)| {
                    cand[a]
                        * row
                            .iter()
                            .zip(z.row(a))
                            .map(|(p, zz)| p * zz)
                            .sum::<f64>()
                })
                .sum();
            if f < best_f {
                best_f = f;
                best_p = cand;
            }
        }
        policy = best_p;
        certified = best_f <= u_star + 1e-7 * (1.0 + scale);
    }

    Ok(StateMinimax {
        value: u_star,
        policy,
        certified,
    })
}
