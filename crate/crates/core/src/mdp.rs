//! Exact tabular MDP computations: value functions, occupancy measures,
//! policy gradients, and the performance-difference identities the solvers
//! are checked against.
//!
//! All types are immutable after construction and all operations are pure;
//! linear systems are solved by dense LU factorization, sized for models
//! with at most a couple of thousand states.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Result, RmdpError};

const ROW_SUM_TOL: f64 = 1e-10;
const RHO_SUM_TOL: f64 = 1e-12;

fn check_distribution(context: &'static str, v: &[f64], tol: f64) -> Result<()> {
    let sum: f64 = v.iter().sum();
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !sum.is_finite() || (sum - 1.0).abs() > tol || min < -tol {
        return Err(RmdpError::NotADistribution { context, sum, min });
    }
    Ok(())
}

/// Finite MDP with costs indexed `(s, a, s')`, initial distribution `rho`,
/// and discount `gamma` in (0, 1). The transition kernel is held separately
/// (see [`Kernel`]) because the robust solvers treat it as a decision
/// variable of the adversary.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    cost: Array3<f64>,
    rho: Array1<f64>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(cost: Array3<f64>, rho: Array1<f64>, gamma: f64) -> Result<Self> {
        let (s, a, s2) = cost.dim();
        if s == 0 || a == 0 || s != s2 {
            return Err(RmdpError::ShapeMismatch {
                context: "TabularMdp cost tensor",
                expected: "(S, A, S) with S, A > 0".into(),
                actual: format!("({s}, {a}, {s2})"),
            });
        }
        if rho.len() != s {
            return Err(RmdpError::ShapeMismatch {
                context: "TabularMdp rho",
                expected: format!("length {s}"),
                actual: format!("length {}", rho.len()),
            });
        }
        check_distribution("TabularMdp rho", rho.as_slice().unwrap(), RHO_SUM_TOL)?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(RmdpError::InvalidParameter {
                name: "gamma",
                reason: format!("must lie strictly in (0, 1), got {gamma}"),
            });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(RmdpError::NonFinite {
                context: "TabularMdp cost tensor",
            });
        }
        Ok(Self {
            n_states: s,
            n_actions: a,
            cost,
            rho,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn cost(&self) -> &Array3<f64> {
        &self.cost
    }

    pub fn rho(&self) -> &Array1<f64> {
        &self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Largest absolute cost entry. Value and q-value bounds scale with
    /// `cost_scale / (1 - gamma)`; costs are used raw, never rescaled.
    pub fn cost_scale(&self) -> f64 {
        self.cost.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Transition kernel: `probs[(s, a, s')]`, each row `(s, a, ·)` a
/// probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    probs: Array3<f64>,
}

impl Kernel {
    pub fn new(probs: Array3<f64>) -> Result<Self> {
        let (s, _a, s2) = probs.dim();
        if s != s2 {
            return Err(RmdpError::ShapeMismatch {
                context: "Kernel",
                expected: "(S, A, S)".into(),
                actual: format!("{:?}", probs.dim()),
            });
        }
        let (s_n, a_n, _) = probs.dim();
        for si in 0..s_n {
            for ai in 0..a_n {
                let row: Vec<f64> = probs.slice(ndarray::s![si, ai, ..]).to_vec();
                check_distribution("Kernel row", &row, ROW_SUM_TOL)?;
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    pub fn row(&self, s: usize, a: usize) -> ndarray::ArrayView1<'_, f64> {
        self.probs.slice(ndarray::s![s, a, ..])
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.probs.dim()
    }
}

/// Stationary randomized policy: `probs[(s, a)]`, each row a probability
/// vector over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: Array2<f64>,
}

impl TabularPolicy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for row in probs.rows() {
            check_distribution("TabularPolicy row", row.as_slice().unwrap(), ROW_SUM_TOL)?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    /// Deterministic policy taking `actions[s]` at state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(RmdpError::InvalidParameter {
                    name: "actions",
                    reason: format!("action {a} out of range at state {s}"),
                });
            }
            probs[(s, a)] = 1.0;
        }
        Ok(Self { probs })
    }

    /// Row-wise softmax of a logit table; always row-stochastic.
    pub fn softmax(logits: &Array2<f64>) -> Result<Self> {
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(RmdpError::NonFinite {
                context: "softmax logits",
            });
        }
        let mut probs = Array2::zeros(logits.raw_dim());
        for (mut out, row) in probs.rows_mut().into_iter().zip(logits.rows()) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &x) in out.iter_mut().zip(row.iter()) {
                *o = (x - m).exp();
                z += *o;
            }
            out.mapv_inplace(|x| x / z);
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }
}

/// State values in cost units.
#[derive(Debug, Clone)]
pub struct ValueVector(pub Array1<f64>);

/// Action values `q[(s, a)]`.
#[derive(Debug, Clone)]
pub struct QTable(pub Array2<f64>);

/// Advantage `psi = q - v` broadcast over actions.
#[derive(Debug, Clone)]
pub struct Advantage(pub Array2<f64>);

/// Discounted state occupancy measure; sums to one and dominates
/// `(1 - gamma) * rho` entrywise.
#[derive(Debug, Clone)]
pub struct Occupancy(pub Array1<f64>);

fn check_shapes(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<()> {
    let want = (mdp.n_states, mdp.n_actions, mdp.n_states);
    if p.dim() != want {
        return Err(RmdpError::ShapeMismatch {
            context: "kernel vs mdp",
            expected: format!("{want:?}"),
            actual: format!("{:?}", p.dim()),
        });
    }
    if pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions {
        return Err(RmdpError::ShapeMismatch {
            context: "policy vs mdp",
            expected: format!("({}, {})", mdp.n_states, mdp.n_actions),
            actual: format!("({}, {})", pi.n_states(), pi.n_actions()),
        });
    }
    Ok(())
}

/// State-to-state transition matrix under `pi`: `P[(s, s')] = sum_a pi_sa p_sas'`.
fn policy_transition(pi: &TabularPolicy, p: &Kernel) -> Array2<f64> {
    let (s_n, a_n, _) = p.dim();
    let mut out = Array2::zeros((s_n, s_n));
    for s in 0..s_n {
        for a in 0..a_n {
            let w = pi.probs()[(s, a)];
            if w == 0.0 {
                continue;
            }
            for s2 in 0..s_n {
                out[(s, s2)] += w * p.probs()[(s, a, s2)];
            }
        }
    }
    out
}

/// Expected one-step cost under `pi`: `c[s] = sum_a pi_sa sum_s' p_sas' c_sas'`.
fn policy_cost(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Array1<f64> {
    let (s_n, a_n, _) = p.dim();
    let mut out = Array1::zeros(s_n);
    for s in 0..s_n {
        for a in 0..a_n {
            let w = pi.probs()[(s, a)];
            if w == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for s2 in 0..s_n {
                acc += p.probs()[(s, a, s2)] * mdp.cost()[(s, a, s2)];
            }
            out[s] += w * acc;
        }
    }
    out
}

fn lu_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = b.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
    let rhs = nalgebra::DVector::from_fn(n, |i, _| b[i]);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| RmdpError::LinearSolve("singular system".into()))?;
    Ok(Array1::from_iter(sol.iter().cloned()))
}

/// Value function of `pi` under kernel `p`: the unique solution of
/// `(I - gamma P_pi) v = c_pi`, computed by a direct dense solve.
pub fn policy_evaluate(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<ValueVector> {
    check_shapes(mdp, pi, p)?;
    let n = mdp.n_states();
    let p_pi = policy_transition(pi, p);
    let c_pi = policy_cost(mdp, pi, p);
    let mut a = Array2::eye(n);
    a.scaled_add(-mdp.gamma(), &p_pi);
    let v = lu_solve(&a, &c_pi)?;
    Ok(ValueVector(v))
}

/// Action values: `q_sa = sum_s' p_sas' (c_sas' + gamma v_s')` with `v`
/// the value of `pi` itself, so `v_s = sum_a pi_sa q_sa`.
pub fn q_values(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<QTable> {
    let v = policy_evaluate(mdp, pi, p)?;
    Ok(q_from_value(mdp, p, &v))
}

/// Action values induced by an arbitrary state-value vector.
pub fn q_from_value(mdp: &TabularMdp, p: &Kernel, v: &ValueVector) -> QTable {
    let (s_n, a_n, _) = p.dim();
    let mut q = Array2::zeros((s_n, a_n));
    for s in 0..s_n {
        for a in 0..a_n {
            let mut acc = 0.0;
            for s2 in 0..s_n {
                acc += p.probs()[(s, a, s2)] * (mdp.cost()[(s, a, s2)] + mdp.gamma() * v.0[s2]);
            }
            q[(s, a)] = acc;
        }
    }
    QTable(q)
}

/// Advantage `psi = q - v` with `v_s = sum_a pi_sa q_sa`.
pub fn advantage(pi: &TabularPolicy, q: &QTable) -> Advantage {
    let mut psi = q.0.clone();
    for (s, mut row) in psi.rows_mut().into_iter().enumerate() {
        let v: f64 = pi
            .probs()
            .row(s)
            .iter()
            .zip(q.0.row(s).iter())
            .map(|(pi_a, q_a)| pi_a * q_a)
            .sum();
        row.mapv_inplace(|x| x - v);
    }
    Advantage(psi)
}

/// Discounted state occupancy `d = (1 - gamma) rho^T (I - gamma P_pi)^{-1}`,
/// solved as the transposed linear system.
pub fn occupancy(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<Occupancy> {
    check_shapes(mdp, pi, p)?;
    let n = mdp.n_states();
    let p_pi = policy_transition(pi, p);
    let mut a = Array2::eye(n);
    // transpose: d solves (I - gamma P_pi^T) d = (1 - gamma) rho
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= mdp.gamma() * p_pi[(j, i)];
        }
    }
    let rhs = mdp.rho() * (1.0 - mdp.gamma());
    let d = lu_solve(&a, &rhs)?;
    Ok(Occupancy(d))
}

/// Discounted objective `J = rho^T v`.
pub fn objective(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<f64> {
    let v = policy_evaluate(mdp, pi, p)?;
    Ok(mdp.rho().dot(&v.0))
}

pub fn objective_of_value(mdp: &TabularMdp, v: &ValueVector) -> f64 {
    mdp.rho().dot(&v.0)
}

/// Gradient of `J` in the direct parameterization:
/// `dJ/dpi_sa = d_s q_sa / (1 - gamma)`.
pub fn grad_direct(mdp: &TabularMdp, pi: &TabularPolicy, p: &Kernel) -> Result<Array2<f64>> {
    let d = occupancy(mdp, pi, p)?;
    let q = q_values(mdp, pi, p)?;
    let scale = 1.0 / (1.0 - mdp.gamma());
    let mut g = q.0;
    for (s, mut row) in g.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|x| scale * d.0[s] * x);
    }
    Ok(g)
}

/// Gradient of `J` in the tabular softmax parameterization:
/// `dJ/dtheta_sa = d_s pi_sa psi_sa / (1 - gamma)`. Each per-state row of
/// the gradient sums to zero.
pub fn grad_softmax(mdp: &TabularMdp, theta: &Array2<f64>, p: &Kernel) -> Result<Array2<f64>> {
    let pi = TabularPolicy::softmax(theta)?;
    let d = occupancy(mdp, &pi, p)?;
    let q = q_values(mdp, &pi, p)?;
    let psi = advantage(&pi, &q);
    let scale = 1.0 / (1.0 - mdp.gamma());
    let mut g = psi.0;
    for (s, mut row) in g.rows_mut().into_iter().enumerate() {
        for (a, x) in row.iter_mut().enumerate() {
            *x *= scale * d.0[s] * pi.probs()[(s, a)];
        }
    }
    Ok(g)
}

/// Residuals of the two performance-difference identities for a pair of
/// policies under a fixed kernel. Both are exact identities, so each
/// residual should vanish up to solver accuracy.
///
/// First: `J(pi1) - J(pi2) = E_{d^{pi1}} [ sum_a pi1_sa psi^{pi2}_sa ] / (1 - gamma)`.
/// Second: `J(pi1) - J(pi2) = E_{d^{pi2}} [ sum_a (pi1_sa - pi2_sa) q^{pi1}_sa ] / (1 - gamma)`.
pub fn perf_diff_check(
    mdp: &TabularMdp,
    pi1: &TabularPolicy,
    pi2: &TabularPolicy,
    p: &Kernel,
) -> Result<(f64, f64)> {
    let j1 = objective(mdp, pi1, p)?;
    let j2 = objective(mdp, pi2, p)?;
    let lhs = j1 - j2;
    let scale = 1.0 / (1.0 - mdp.gamma());

    let d1 = occupancy(mdp, pi1, p)?;
    let q2 = q_values(mdp, pi2, p)?;
    let psi2 = advantage(pi2, &q2);
    let mut rhs1 = 0.0;
    for s in 0..mdp.n_states() {
        let mut acc = 0.0;
        for a in 0..mdp.n_actions() {
            acc += pi1.probs()[(s, a)] * psi2.0[(s, a)];
        }
        rhs1 += d1.0[s] * acc;
    }
    rhs1 *= scale;

    let d2 = occupancy(mdp, pi2, p)?;
    let q1 = q_values(mdp, pi1, p)?;
    let mut rhs2 = 0.0;
    for s in 0..mdp.n_states() {
        let mut acc = 0.0;
        for a in 0..mdp.n_actions() {
            acc += (pi1.probs()[(s, a)] - pi2.probs()[(s, a)]) * q1.0[(s, a)];
        }
        rhs2 += d2.0[s] * acc;
    }
    rhs2 *= scale;

    Ok(((lhs - rhs1).abs(), (lhs - rhs2).abs()))
}
