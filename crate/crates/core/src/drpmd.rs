//! Double-loop robust policy mirror descent (DRPMD): the outer loop
//! alternates a certified inner worst-case kernel search with one policy
//! mirror-descent step, under a geometrically decaying inner tolerance.
//! The reported policy is the best iterate by traced objective.

use std::time::Instant;

use ndarray::Array2;

use crate::ambiguity::{prox_kl_simplex, project_simplex, AmbiguitySet, BregmanGeometry};
use crate::error::{Result, RmdpError};
use crate::inner::{tma_solve, InnerConfig};
use crate::mdp::{q_from_value, Kernel, QTable, TabularMdp, TabularPolicy};

/// Outer policy parameterization. The linear-feature softmax class is the
/// sampling solvers' domain (see [`crate::monte_carlo`]); the exact outer
/// loop works on tabular policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Direct(BregmanGeometry),
    SoftmaxTabular,
    SoftmaxLinear,
}

/// Outer step-size regimes. The geometric families grow by a fixed ratio
/// per iteration derived from the discount and a distribution-mismatch
/// upper bound `m`; the softmax regime uses the constant step `1 / l`,
/// with smoothness constant `l = 8 / (1 - gamma)^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterStepSchedule {
    SublinearGeometric { alpha0: f64, m: f64 },
    LinearSRect { alpha0: f64, m: f64 },
    SoftmaxConstant,
}

/// Step sizes saturate here; by that point the proximal updates have long
/// since reached their vertex limits, so growing further only risks
/// overflow.
const ALPHA_CAP: f64 = 1e12;

impl OuterStepSchedule {
    pub fn alpha_at(&self, t: usize, gamma: f64) -> f64 {
        match *self {
            OuterStepSchedule::SublinearGeometric { alpha0, m } => {
                let ratio = m / (1.0 - gamma);
                (alpha0 * ratio.powi(t as i32)).min(ALPHA_CAP)
            }
            OuterStepSchedule::LinearSRect { alpha0, m } => {
                let ratio = (m / (1.0 - gamma)) / (1.0 - (1.0 - gamma).powi(2) / m);
                (alpha0 * ratio.powi(t as i32)).min(ALPHA_CAP)
            }
            OuterStepSchedule::SoftmaxConstant => (1.0 - gamma).powi(3) / 8.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            OuterStepSchedule::SublinearGeometric { alpha0, m }
            | OuterStepSchedule::LinearSRect { alpha0, m } => {
                if m < 1.0 {
                    return Err(RmdpError::Config(format!(
                        "mismatch bound m must be >= 1 (the occupancy/initial ratio always is), got {m}"
                    )));
                }
                if alpha0 <= 0.0 {
                    return Err(RmdpError::Config("alpha0 must be positive".into()));
                }
            }
            OuterStepSchedule::SoftmaxConstant => {}
        }
        Ok(())
    }
}

/// Conservative default for the distribution mismatch coefficient:
/// occupancies are bounded by one, so `sup ||d / rho||_inf <= 1 / min_s rho_s`.
pub fn mismatch_upper_bound(mdp: &TabularMdp) -> Result<f64> {
    let min_rho = mdp.rho().iter().cloned().fold(f64::INFINITY, f64::min);
    if min_rho <= 0.0 {
        return Err(RmdpError::Config(
            "mismatch bound needs full-support rho; supply m explicitly".into(),
        ));
    }
    Ok(1.0 / min_rho)
}

/// Inner-tolerance schedule `eps_{t+1} = max(floor, decay * eps_t)` with
/// `decay <= gamma`. A floor equal to `eps0` reproduces the fixed-tolerance
/// variant; a floor of zero the fully decaying one.
#[derive(Debug, Clone, Copy)]
pub struct ToleranceSchedule {
    pub eps0: f64,
    pub decay: f64,
    pub floor: f64,
}

impl ToleranceSchedule {
    pub fn decaying(eps0: f64, decay: f64) -> Self {
        Self {
            eps0,
            decay,
            floor: 0.0,
        }
    }

    pub fn fixed(eps: f64) -> Self {
        Self {
            eps0: eps,
            decay: 0.0,
            floor: eps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OuterConfig {
    pub parameterization: Parameterization,
    pub step_schedule: OuterStepSchedule,
    pub tol_schedule: ToleranceSchedule,
    pub max_outer: usize,
    pub inner: InnerConfig,
    /// Start each inner solve from the previous worst-case kernel instead
    /// of the nominal one. Off by default: the fixed/decaying tolerance
    /// comparison presumes each inner solve starts fresh.
    pub warm_start: bool,
    /// Stop when successive traced objectives move less than this.
    pub termination_tol: f64,
    /// Optional wall-clock budget for the solve loop.
    pub wall_limit: Option<std::time::Duration>,
}

impl OuterConfig {
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        self.step_schedule.validate()?;
        let ts = &self.tol_schedule;
        if !(ts.eps0 >= 0.0 && ts.floor >= 0.0) || ts.decay < 0.0 {
            return Err(RmdpError::Config(
                "tolerance schedule must be nonnegative".into(),
            ));
        }
        if ts.decay > mdp.gamma() {
            return Err(RmdpError::Config(format!(
                "tolerance decay {} must not exceed gamma {}",
                ts.decay,
                mdp.gamma()
            )));
        }
        if matches!(self.parameterization, Parameterization::SoftmaxLinear) {
            return Err(RmdpError::Config(
                "linear-feature softmax policies are handled by the sampling solvers".into(),
            ));
        }
        if matches!(
            (self.parameterization, self.step_schedule),
            (
                Parameterization::SoftmaxTabular,
                OuterStepSchedule::SublinearGeometric { .. }
            ) | (
                Parameterization::SoftmaxTabular,
                OuterStepSchedule::LinearSRect { .. }
            ) | (
                Parameterization::Direct(_),
                OuterStepSchedule::SoftmaxConstant
            )
        ) {
            return Err(RmdpError::Config(
                "step schedule does not match the parameterization".into(),
            ));
        }
        Ok(())
    }
}

/// One per-state mirror-descent step on a direct (tabular) policy at step
/// size `alpha`: SE reduces to a projected gradient step, KL to
/// multiplicative weights.
pub fn pmd_update_direct(
    pi_t: &TabularPolicy,
    q: &QTable,
    alpha: f64,
    geometry: BregmanGeometry,
) -> Result<TabularPolicy> {
    let (s_n, a_n) = (pi_t.n_states(), pi_t.n_actions());
    if q.0.dim() != (s_n, a_n) {
        return Err(RmdpError::ShapeMismatch {
            context: "pmd_update_direct",
            expected: format!("q of shape ({s_n}, {a_n})"),
            actual: format!("{:?}", q.0.dim()),
        });
    }
    let mut out = Array2::zeros((s_n, a_n));
    for s in 0..s_n {
        let base: Vec<f64> = pi_t.probs().row(s).to_vec();
        let qs: Vec<f64> = q.0.row(s).to_vec();
        let row = match geometry {
            BregmanGeometry::SquaredEuclidean => {
                let shifted: Vec<f64> = base
                    .iter()
                    .zip(&qs)
                    .map(|(&p, &qv)| p - alpha * qv)
                    .collect();
                project_simplex(&shifted)?
            }
            BregmanGeometry::KullbackLeibler => prox_kl_simplex(&base, &qs, alpha)?,
        };
        for (a, v) in row.into_iter().enumerate() {
            out[(s, a)] = v;
        }
    }
    TabularPolicy::new(out)
}

/// Plain gradient step on softmax logits (the SE mirror step is
/// unconstrained here).
pub fn pg_update_softmax(
    theta: &Array2<f64>,
    grad: &Array2<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(RmdpError::NonFinite {
            context: "pg_update_softmax gradient",
        });
    }
    Ok(theta - &(grad * alpha))
}

#[derive(Debug, Clone)]
pub enum PolicyParam {
    Direct(TabularPolicy),
    SoftmaxTabular(Array2<f64>),
}

impl PolicyParam {
    pub fn as_tabular(&self) -> Result<TabularPolicy> {
        match self {
            PolicyParam::Direct(p) => Ok(p.clone()),
            PolicyParam::SoftmaxTabular(theta) => TabularPolicy::softmax(theta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DrpmdRow {
    pub t: usize,
    pub j: f64,
    pub eps: f64,
    pub alpha: f64,
    pub inner_iters: usize,
    pub wall_ns: u128,
}

#[derive(Debug, Clone)]
pub struct DrpmdReport {
    pub rows: Vec<DrpmdRow>,
    /// Index of the reported (best) iterate: the traced objective at
    /// `best_t` is the minimum over the whole trace.
    pub best_t: usize,
    pub policy: PolicyParam,
    pub kernel: Kernel,
    pub inner_all_converged: bool,
    pub total_inner_iters: usize,
    pub terminated_early: bool,
    pub hit_wall_limit: bool,
}

impl DrpmdReport {
    pub fn best_j(&self) -> f64 {
        self.rows[self.best_t].j
    }
}

/// Run the double loop: per iteration, solve the inner worst case to the
/// current certified tolerance, trace `J(pi_t, p_t)`, take one outer step,
/// and shrink the tolerance. Inner non-convergence is recorded and the
/// loop continues with the best inner iterate.
pub fn drpmd_solve(
    mdp: &TabularMdp,
    set: &AmbiguitySet,
    config: &OuterConfig,
) -> Result<DrpmdReport> {
    config.validate(mdp)?;
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();

    let mut direct = match config.parameterization {
        Parameterization::Direct(_) => Some(TabularPolicy::uniform(s_n, a_n)),
        _ => None,
    };
    let mut theta = match config.parameterization {
        Parameterization::SoftmaxTabular => Some(Array2::<f64>::zeros((s_n, a_n))),
        _ => None,
    };

    let mut eps = config.tol_schedule.eps0;
    let mut rows: Vec<DrpmdRow> = Vec::new();
    let mut best: Option<(usize, f64, PolicyParam, Kernel)> = None;
    let mut prev_kernel: Option<Kernel> = None;
    let mut inner_all_converged = true;
    let mut total_inner_iters = 0;
    let mut terminated_early = false;
    let mut hit_wall_limit = false;
    let started = Instant::now();

    for t in 0..config.max_outer {
        let pi_t = match (&direct, &theta) {
            (Some(p), _) => p.clone(),
            (_, Some(th)) => TabularPolicy::softmax(th)?,
            _ => unreachable!(),
        };
        let snapshot = match (&direct, &theta) {
            (Some(p), _) => PolicyParam::Direct(p.clone()),
            (_, Some(th)) => PolicyParam::SoftmaxTabular(th.clone()),
            _ => unreachable!(),
        };

        let inner_cfg = InnerConfig {
            residual_tol: eps,
            ..config.inner.clone()
        };
        let warm = if config.warm_start {
            prev_kernel.as_ref()
        } else {
            None
        };
        let inner = tma_solve(mdp, &pi_t, set, &inner_cfg, warm)?;
        inner_all_converged &= inner.converged;
        total_inner_iters += inner.iters;

        let alpha = config.step_schedule.alpha_at(t, gamma);
        rows.push(DrpmdRow {
            t,
            j: inner.j,
            eps,
            alpha,
            inner_iters: inner.iters,
            wall_ns: started.elapsed().as_nanos(),
        });
        let improved = match &best {
            None => true,
            Some((_, bj, _, _)) => inner.j < *bj,
        };
        if improved {
            best = Some((t, inner.j, snapshot, inner.kernel.clone()));
        }

        if rows.len() >= 2 {
            let prev = rows[rows.len() - 2].j;
            if (inner.j - prev).abs() <= config.termination_tol {
                terminated_early = true;
                break;
            }
        }
        if let Some(limit) = config.wall_limit {
            if started.elapsed() >= limit {
                hit_wall_limit = true;
                break;
            }
        }

        match config.parameterization {
            Parameterization::Direct(geometry) => {
                let q = q_from_value(mdp, &inner.kernel, &inner.value);
                let next = pmd_update_direct(direct.as_ref().unwrap(), &q, alpha, geometry)?;
                direct = Some(next);
            }
            Parameterization::SoftmaxTabular => {
                let th = theta.as_ref().unwrap();
                let grad = crate::mdp::grad_softmax(mdp, th, &inner.kernel)?;
                theta = Some(pg_update_softmax(th, &grad, alpha)?);
            }
            Parameterization::SoftmaxLinear => unreachable!("rejected by validate"),
        }

        prev_kernel = Some(inner.kernel);
        eps = (config.tol_schedule.decay * eps).max(config.tol_schedule.floor);
    }

    let (best_t, _, policy, kernel) = best.ok_or_else(|| {
        RmdpError::Config("drpmd_solve ran zero iterations (max_outer = 0)".into())
    })?;
    Ok(DrpmdReport {
        rows,
        best_t,
        policy,
        kernel,
        inner_all_converged,
        total_inner_iters,
        terminated_early,
        hit_wall_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array3};

    #[test]
    fn alpha_schedules() {
        let s = OuterStepSchedule::SoftmaxConstant;
        // gamma = 0.95: (0.05)^3 / 8 = 1.5625e-5
        assert!((s.alpha_at(0, 0.95) - 1.5625e-5).abs() < 1e-18);
        let g = OuterStepSchedule::SublinearGeometric {
            alpha0: 0.05,
            m: 2.0,
        };
        assert!((g.alpha_at(1, 0.95) - 0.05 * 40.0).abs() < 1e-12);
        // saturates instead of overflowing
        assert_eq!(g.alpha_at(100_000, 0.95), 1e12);
    }

    #[test]
    fn pmd_alpha_zero_is_identity() {
        let pi = TabularPolicy::uniform(2, 3);
        let q = QTable(arr2(&[[1.0, 2.0, 3.0], [0.5, 0.1, 0.9]]));
        let next = pmd_update_direct(&pi, &q, 0.0, BregmanGeometry::SquaredEuclidean).unwrap();
        assert_eq!(next.probs(), pi.probs());
        let next = pmd_update_direct(&pi, &q, 0.0, BregmanGeometry::KullbackLeibler).unwrap();
        for (a, b) in next.probs().iter().zip(pi.probs().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pmd_constant_q_leaves_policy_unchanged_under_se() {
        // a constant shift is orthogonal to the simplex
        let pi = TabularPolicy::uniform(1, 4);
        let q = QTable(arr2(&[[2.5, 2.5, 2.5, 2.5]]));
        let next = pmd_update_direct(&pi, &q, 0.7, BregmanGeometry::SquaredEuclidean).unwrap();
        for (a, b) in next.probs().iter().zip(pi.probs().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pmd_hand_projection() {
        // 1 state, q = (0, 1), alpha = 1, SE from uniform:
        // project (0.5, -0.5) -> (1, 0)
        let pi = TabularPolicy::uniform(1, 2);
        let q = QTable(arr2(&[[0.0, 1.0]]));
        let next = pmd_update_direct(&pi, &q, 1.0, BregmanGeometry::SquaredEuclidean).unwrap();
        assert!((next.probs()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(next.probs()[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn softmax_update_zero_gradient() {
        let theta = arr2(&[[0.3, -0.2]]);
        let next = pg_update_softmax(&theta, &Array2::zeros((1, 2)), 0.1).unwrap();
        assert_eq!(next, theta);
        assert!(pg_update_softmax(&theta, &arr2(&[[f64::NAN, 0.0]]), 0.1).is_err());
    }

    #[test]
    fn config_rejects_mismatched_schedules() {
        let mdp = TabularMdp::new(Array3::zeros((1, 1, 1)), arr1(&[1.0]), 0.9).unwrap();
        let cfg = OuterConfig {
            parameterization: Parameterization::SoftmaxTabular,
            step_schedule: OuterStepSchedule::SublinearGeometric {
                alpha0: 0.1,
                m: 1.0,
            },
            tol_schedule: ToleranceSchedule::decaying(0.1, 0.9),
            max_outer: 10,
            inner: InnerConfig::default(),
            warm_start: false,
            termination_tol: 1e-5,
            wall_limit: None,
        };
        assert!(cfg.validate(&mdp).is_err());
        let cfg2 = OuterConfig {
            parameterization: Parameterization::Direct(BregmanGeometry::SquaredEuclidean),
            tol_schedule: ToleranceSchedule::decaying(0.1, 0.95),
            ..cfg
        };
        // decay 0.95 > gamma 0.9 rejected
        assert!(cfg2.validate(&mdp).is_err());
    }
}
