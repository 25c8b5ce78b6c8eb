//! Sampling-based solvers: trajectory generation, score-function gradient
//! estimators for both the transition parameters (adversary) and the
//! policy parameters (agent), and the incremental mirror-ascent/descent
//! loops built on them.
//!
//! Cost convention throughout: the inner (transition) updates ascend the
//! discounted cost, the outer (policy) updates descend it. Reward-to-go at
//! step `i` is discounted from step `i`; the optional `gamma^i` step factor
//! restores full from-start discounting inside the updates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, RmdpError};
use crate::mdp::{Kernel, TabularMdp};
use crate::param::{EntropyTransition, ParamKernel, RadialFeatures, XiSet};

/// One sampled episode. `states` has one more entry than `actions`/`costs`.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<usize>,
    pub costs: Vec<f64>,
    /// RNG stream index the episode was drawn from.
    pub stream: u64,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Reward-to-go `G_i = sum_{t >= i} gamma^{t-i} c_t`.
    pub fn reward_to_go(&self, gamma: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.costs.len()];
        let mut acc = 0.0;
        for (i, &c) in self.costs.iter().enumerate().rev() {
            acc = c + gamma * acc;
            g[i] = acc;
        }
        g
    }

    /// Discounted return from the episode start.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.costs.iter().rev() {
            acc = c + gamma * acc;
        }
        acc
    }
}

/// Environment with a (possibly parameterized) transition law. Fixed-kernel
/// environments leave the parameter interface at its empty default.
pub trait McModel {
    type State: Clone;

    fn n_actions(&self) -> usize;
    fn init_state(&self, rng: &mut ChaCha8Rng) -> Self::State;
    fn step(&self, s: &Self::State, a: usize, rng: &mut ChaCha8Rng) -> Result<StepOutcome<Self::State>>;

    fn xi_dim(&self) -> usize {
        0
    }
    fn xi(&self) -> Vec<f64> {
        Vec::new()
    }
    fn set_xi(&mut self, _xi: &[f64]) -> Result<()> {
        Ok(())
    }
    /// Score of the transition density, `d log p(next | s, a) / d xi`.
    fn score_xi(&self, _s: &Self::State, _a: usize, _next: &Self::State) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome<S> {
    pub next: S,
    pub cost: f64,
    pub done: bool,
}

/// Differentiable stochastic policy over a state type.
pub trait DifferentiablePolicy<S> {
    fn n_actions(&self) -> usize;
    fn action_probs(&self, s: &S) -> Vec<f64>;
    /// Score `d log pi(a | s) / d theta` (packed).
    fn score_theta(&self, s: &S, a: usize) -> Vec<f64>;
    fn theta(&self) -> Vec<f64>;
    fn set_theta(&mut self, theta: &[f64]) -> Result<()>;

    fn sample_action(&self, s: &S, rng: &mut ChaCha8Rng) -> usize {
        let probs = self.action_probs(s);
        sample_index(&probs, rng)
    }
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Deterministic per-trajectory generator: same master seed and stream
/// index give the same draws regardless of scheduling.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Sample one episode of at most `horizon` steps under `policy` and the
/// model's current transition law.
pub fn sample_trajectory<M: McModel, P: DifferentiablePolicy<M::State>>(
    model: &M,
    policy: &P,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory<M::State>> {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut costs = Vec::with_capacity(horizon);
    let mut s = model.init_state(rng);
    states.push(s.clone());
    for _ in 0..horizon {
        let a = policy.sample_action(&s, rng);
        let out = model.step(&s, a, rng)?;
        if !out.cost.is_finite() {
            return Err(RmdpError::NonFinite {
                context: "trajectory cost",
            });
        }
        actions.push(a);
        costs.push(out.cost);
        states.push(out.next.clone());
        s = out.next;
        if out.done {
            break;
        }
    }
    Ok(Trajectory {
        states,
        actions,
        costs,
        stream: 0,
    })
}

/// Batch score-function estimate of the transition gradient:
/// mean over trajectories of `sum_i score(S_i, A_i, S_{i+1}) * G_i` with
/// `G_i` discounted from the episode start. Unbiased for the exact
/// transition gradient up to horizon truncation.
pub fn mc_transition_grad_estimate<M: McModel>(
    trajectories: &[Trajectory<M::State>],
    model: &M,
    gamma: f64,
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(RmdpError::InvalidParameter {
            name: "trajectories",
            reason: "empty batch".into(),
        });
    }
    let mut grad = vec![0.0; model.xi_dim()];
    for traj in trajectories {
        let rtg = traj.reward_to_go(gamma);
        let mut disc = 1.0;
        for i in 0..traj.len() {
            let score = model.score_xi(&traj.states[i], traj.actions[i], &traj.states[i + 1]);
            let g_from_start = disc * rtg[i];
            for (gi, si) in grad.iter_mut().zip(&score) {
                *gi += si * g_from_start;
            }
            disc *= gamma;
        }
    }
    let m = trajectories.len() as f64;
    for g in &mut grad {
        *g /= m;
    }
    Ok(grad)
}

/// Batch REINFORCE estimate of the policy gradient, same weighting as
/// [`mc_transition_grad_estimate`] with the policy score.
pub fn mc_policy_grad_estimate<S, P: DifferentiablePolicy<S>>(
    trajectories: &[Trajectory<S>],
    policy: &P,
    gamma: f64,
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(RmdpError::InvalidParameter {
            name: "trajectories",
            reason: "empty batch".into(),
        });
    }
    let dim = policy.theta().len();
    let mut grad = vec![0.0; dim];
    for traj in trajectories {
        let rtg = traj.reward_to_go(gamma);
        let mut disc = 1.0;
        for i in 0..traj.len() {
            let score = policy.score_theta(&traj.states[i], traj.actions[i]);
            let g_from_start = disc * rtg[i];
            for (gi, si) in grad.iter_mut().zip(&score) {
                *gi += si * g_from_start;
            }
            disc *= gamma;
        }
    }
    let m = trajectories.len() as f64;
    for g in &mut grad {
        *g /= m;
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct McConfig {
    /// outer passes (alternations)
    pub passes: usize,
    /// trajectories per inner (transition) pass
    pub inner_trajectories: usize,
    /// trajectories per outer (policy) pass
    pub outer_trajectories: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// inner step size
    pub beta: f64,
    /// outer step size
    pub alpha: f64,
    /// multiply each per-step update by `gamma^i`
    pub discount_step_factor: bool,
    pub master_seed: u64,
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(RmdpError::Config("horizon must be at least 1".into()));
        }
        if self.beta < 0.0 || self.alpha < 0.0 {
            return Err(RmdpError::Config("step sizes must be nonnegative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RmdpError::Config("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Upper bound on the mass dropped by capping episodes at the horizon.
    pub fn truncation_bias_bound(&self, cost_scale: f64) -> f64 {
        self.gamma.powi(self.horizon as i32) * cost_scale / (1.0 - self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Inner,
    Outer,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Inner => write!(f, "inner"),
            Phase::Outer => write!(f, "outer"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct McRow {
    pub pass: usize,
    pub phase: Phase,
    pub episode: usize,
    pub j_estimate: f64,
    pub param_norm: f64,
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn guard_finite(v: &[f64], context: &'static str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RmdpError::NonFinite { context });
    }
    Ok(())
}

/// One incremental mirror-ascent pass over the transition parameters:
/// per sampled episode, per step, move `xi` along the score weighted by
/// the reward-to-go (and the optional `gamma^i` factor), projecting onto
/// the parameter set after every step.
pub fn mctma<M: McModel, P: DifferentiablePolicy<M::State>>(
    model: &mut M,
    policy: &P,
    xi_set: &XiSet,
    cfg: &McConfig,
    pass: usize,
    stream_base: u64,
    rows: &mut Vec<McRow>,
) -> Result<()> {
    cfg.validate()?;
    for m in 0..cfg.inner_trajectories {
        let mut rng = stream_rng(cfg.master_seed, stream_base + m as u64);
        let traj = sample_trajectory(model, policy, cfg.horizon, &mut rng)?;
        let rtg = traj.reward_to_go(cfg.gamma);
        let mut disc = 1.0;
        for i in 0..traj.len() {
            let score = model.score_xi(&traj.states[i], traj.actions[i], &traj.states[i + 1]);
            let factor = if cfg.discount_step_factor { disc } else { 1.0 };
            let mut xi = model.xi();
            for (x, s) in xi.iter_mut().zip(&score) {
                *x += cfg.beta * factor * rtg[i] * s;
            }
            let xi = xi_set.project(&xi)?;
            guard_finite(&xi, "mctma transition parameters")?;
            model.set_xi(&xi)?;
            disc *= cfg.gamma;
        }
        rows.push(McRow {
            pass,
            phase: Phase::Inner,
            episode: m,
            j_estimate: traj.discounted_return(cfg.gamma),
            param_norm: l2_norm(&model.xi()),
        });
    }
    Ok(())
}

fn reinforce_pass<M: McModel, P: DifferentiablePolicy<M::State>>(
    model: &M,
    policy: &mut P,
    cfg: &McConfig,
    pass: usize,
    stream_base: u64,
    rows: &mut Vec<McRow>,
) -> Result<()> {
    for n in 0..cfg.outer_trajectories {
        let mut rng = stream_rng(cfg.master_seed, stream_base + n as u64);
        let traj = sample_trajectory(model, policy, cfg.horizon, &mut rng)?;
        let rtg = traj.reward_to_go(cfg.gamma);
        let mut disc = 1.0;
        for i in 0..traj.len() {
            let score = policy.score_theta(&traj.states[i], traj.actions[i]);
            let factor = if cfg.discount_step_factor { disc } else { 1.0 };
            let mut theta = policy.theta();
            for (t, s) in theta.iter_mut().zip(&score) {
                *t -= cfg.alpha * factor * rtg[i] * s;
            }
            guard_finite(&theta, "policy parameters")?;
            policy.set_theta(&theta)?;
            disc *= cfg.gamma;
        }
        rows.push(McRow {
            pass,
            phase: Phase::Outer,
            episode: n,
            j_estimate: traj.discounted_return(cfg.gamma),
            param_norm: l2_norm(&policy.theta()),
        });
    }
    Ok(())
}

/// Robust Monte-Carlo policy mirror descent: alternate an adversarial
/// transition pass (ascent on `xi` over `xi_set`) with a policy pass
/// (descent on `theta`), both driven by sampled episodes.
pub fn rmcpmd<M: McModel, P: DifferentiablePolicy<M::State>>(
    model: &mut M,
    policy: &mut P,
    xi_set: &XiSet,
    cfg: &McConfig,
) -> Result<McReport> {
    cfg.validate()?;
    xi_set.validate()?;
    let mut rows = Vec::new();
    let per_pass = (cfg.inner_trajectories + cfg.outer_trajectories) as u64;
    for pass in 0..cfg.passes {
        let base = pass as u64 * per_pass;
        mctma(model, policy, xi_set, cfg, pass, base, &mut rows)?;
        reinforce_pass(
            model,
            policy,
            cfg,
            pass,
            base + cfg.inner_trajectories as u64,
            &mut rows,
        )?;
    }
    Ok(McReport {
        rows,
        theta: policy.theta(),
        xi: model.xi(),
    })
}

/// Non-robust Monte-Carlo policy gradient: the same outer machinery with
/// the transition law left at its nominal parameters.
pub fn mc_pg<M: McModel, P: DifferentiablePolicy<M::State>>(
    model: &M,
    policy: &mut P,
    cfg: &McConfig,
) -> Result<McReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for pass in 0..cfg.passes {
        let base = pass as u64 * cfg.outer_trajectories as u64;
        reinforce_pass(model, policy, cfg, pass, base, &mut rows)?;
    }
    Ok(McReport {
        rows,
        theta: policy.theta(),
        xi: model.xi(),
    })
}

/// Tabular model with a fixed explicit kernel.
#[derive(Debug, Clone)]
pub struct TabularFixedModel {
    pub mdp: TabularMdp,
    pub kernel: Kernel,
}

impl McModel for TabularFixedModel {
    type State = usize;

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn init_state(&self, rng: &mut ChaCha8Rng) -> usize {
        sample_index(self.mdp.rho().as_slice().unwrap(), rng)
    }

    fn step(&self, s: &usize, a: usize, rng: &mut ChaCha8Rng) -> Result<StepOutcome<usize>> {
        let row: Vec<f64> = self.kernel.row(*s, a).to_vec();
        let next = sample_index(&row, rng);
        Ok(StepOutcome {
            cost: self.mdp.cost()[(*s, a, next)],
            next,
            done: false,
        })
    }
}

/// Tabular model whose kernel is an entropy-tilted parametric family.
#[derive(Debug, Clone)]
pub struct TabularEntropyModel {
    pub mdp: TabularMdp,
    pub kernel: EntropyTransition,
}

impl McModel for TabularEntropyModel {
    type State = usize;

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn init_state(&self, rng: &mut ChaCha8Rng) -> usize {
        sample_index(self.mdp.rho().as_slice().unwrap(), rng)
    }

    fn step(&self, s: &usize, a: usize, rng: &mut ChaCha8Rng) -> Result<StepOutcome<usize>> {
        let row = self.kernel.row(*s, a)?;
        let next = sample_index(&row, rng);
        Ok(StepOutcome {
            cost: self.mdp.cost()[(*s, a, next)],
            next,
            done: false,
        })
    }

    fn xi_dim(&self) -> usize {
        ParamKernel::xi_dim(&self.kernel)
    }

    fn xi(&self) -> Vec<f64> {
        ParamKernel::xi(&self.kernel)
    }

    fn set_xi(&mut self, xi: &[f64]) -> Result<()> {
        ParamKernel::set_xi(&mut self.kernel, xi)
    }

    fn score_xi(&self, s: &usize, a: usize, next: &usize) -> Vec<f64> {
        self.kernel.score(*s, a, *next).unwrap_or_default()
    }
}

/// Tabular softmax policy over state indices (one logit per state-action).
#[derive(Debug, Clone)]
pub struct TabularSoftmaxPolicy {
    pub logits: ndarray::Array2<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            logits: ndarray::Array2::zeros((n_states, n_actions)),
        }
    }
}

impl DifferentiablePolicy<usize> for TabularSoftmaxPolicy {
    fn n_actions(&self) -> usize {
        self.logits.ncols()
    }

    fn action_probs(&self, s: &usize) -> Vec<f64> {
        let row = self.logits.row(*s);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
        let z: f64 = p.iter().sum();
        for x in &mut p {
            *x /= z;
        }
        p
    }

    fn score_theta(&self, s: &usize, a: usize) -> Vec<f64> {
        let (s_n, a_n) = self.logits.dim();
        let probs = self.action_probs(s);
        let mut score = vec![0.0; s_n * a_n];
        for a2 in 0..a_n {
            let indicator = if a2 == a { 1.0 } else { 0.0 };
            score[s * a_n + a2] = indicator - probs[a2];
        }
        score
    }

    fn theta(&self) -> Vec<f64> {
        self.logits.iter().cloned().collect()
    }

    fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        let (s_n, a_n) = self.logits.dim();
        if theta.len() != s_n * a_n {
            return Err(RmdpError::ShapeMismatch {
                context: "TabularSoftmaxPolicy::set_theta",
                expected: format!("dim {}", s_n * a_n),
                actual: format!("dim {}", theta.len()),
            });
        }
        self.logits = ndarray::Array2::from_shape_vec((s_n, a_n), theta.to_vec()).unwrap();
        Ok(())
    }
}

/// Softmax policy with a shared weight vector over state-action features:
/// `pi(a | s) ~ exp(theta . zeta(s, a))` for scalar states.
#[derive(Debug, Clone)]
pub struct SaFeatureSoftmax {
    pub theta: Vec<f64>,
    pub features: RadialFeatures,
    pub action_values: Vec<f64>,
}

impl DifferentiablePolicy<f64> for SaFeatureSoftmax {
    fn n_actions(&self) -> usize {
        self.action_values.len()
    }

    fn action_probs(&self, s: &f64) -> Vec<f64> {
        let logits: Vec<f64> = self
            .action_values
            .iter()
            .map(|&av| {
                self.features
                    .eval(*s, av)
                    .iter()
                    .zip(&self.theta)
                    .map(|(z, t)| z * t)
                    .sum()
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
        let z: f64 = p.iter().sum();
        for x in &mut p {
            *x /= z;
        }
        p
    }

    fn score_theta(&self, s: &f64, a: usize) -> Vec<f64> {
        let probs = self.action_probs(s);
        let zeta_a = self.features.eval(*s, self.action_values[a]);
        let mut mean = vec![0.0; zeta_a.len()];
        for (a2, &pa) in probs.iter().enumerate() {
            let z = self.features.eval(*s, self.action_values[a2]);
            for (m, zi) in mean.iter_mut().zip(&z) {
                *m += pa * zi;
            }
        }
        zeta_a.iter().zip(&mean).map(|(z, m)| z - m).collect()
    }

    fn theta(&self) -> Vec<f64> {
        self.theta.clone()
    }

    fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(RmdpError::ShapeMismatch {
                context: "SaFeatureSoftmax::set_theta",
                expected: format!("dim {}", self.theta.len()),
                actual: format!("dim {}", theta.len()),
            });
        }
        self.theta = theta.to_vec();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array3};

    fn chain_model() -> TabularFixedModel {
        // deterministic single-action chain 0 -> 1 -> 1 with cost 1 then 0
        let mut probs = Array3::zeros((2, 1, 2));
        probs[(0, 0, 1)] = 1.0;
        probs[(1, 0, 1)] = 1.0;
        let mut cost = Array3::zeros((2, 1, 2));
        cost[(0, 0, 1)] = 1.0;
        TabularFixedModel {
            mdp: TabularMdp::new(cost, arr1(&[1.0, 0.0]), 0.9).unwrap(),
            kernel: Kernel::new(probs).unwrap(),
        }
    }

    #[test]
    fn deterministic_chain_trajectory() {
        let model = chain_model();
        let policy = TabularSoftmaxPolicy::zeros(2, 1);
        let mut rng = stream_rng(7, 0);
        let traj = sample_trajectory(&model, &policy, 4, &mut rng).unwrap();
        assert_eq!(traj.states, vec![0, 1, 1, 1, 1]);
        assert_eq!(traj.costs, vec![1.0, 0.0, 0.0, 0.0]);
        assert!((traj.discounted_return(0.9) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn horizon_zero_is_rejected_and_one_is_single_step() {
        let model = chain_model();
        let policy = TabularSoftmaxPolicy::zeros(2, 1);
        let mut rng = stream_rng(7, 0);
        let traj = sample_trajectory(&model, &policy, 1, &mut rng).unwrap();
        assert_eq!(traj.states.len(), 2);
        let cfg = McConfig {
            passes: 1,
            inner_trajectories: 1,
            outer_trajectories: 1,
            horizon: 0,
            gamma: 0.9,
            beta: 0.1,
            alpha: 0.1,
            discount_step_factor: true,
            master_seed: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn reward_to_go_matches_manual() {
        let traj = Trajectory::<usize> {
            states: vec![0, 0, 0],
            actions: vec![0, 0],
            costs: vec![2.0, 3.0],
            stream: 0,
        };
        let g = traj.reward_to_go(0.5);
        assert!((g[0] - (2.0 + 0.5 * 3.0)).abs() < 1e-15);
        assert!((g[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let model = chain_model();
        let trajs: Vec<Trajectory<usize>> = Vec::new();
        assert!(mc_transition_grad_estimate(&trajs, &model, 0.9).is_err());
    }

    #[test]
    fn single_deterministic_trajectory_estimate_is_definitional() {
        // with a single trajectory, the estimator is exactly
        // sum_i score_i * G_i; fixed-kernel model has empty scores, so use
        // the policy-side estimator
        let model = chain_model();
        let policy = TabularSoftmaxPolicy::zeros(2, 1);
        let mut rng = stream_rng(3, 0);
        let traj = sample_trajectory(&model, &policy, 3, &mut rng).unwrap();
        let grad = mc_policy_grad_estimate(&[traj.clone()], &policy, 0.9).unwrap();
        // single action => score identically zero
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn seed_determinism_bitwise() {
        let mut model = chain_model();
        let mut policy = TabularSoftmaxPolicy::zeros(2, 1);
        let cfg = McConfig {
            passes: 2,
            inner_trajectories: 2,
            outer_trajectories: 2,
            horizon: 10,
            gamma: 0.9,
            beta: 0.0,
            alpha: 0.01,
            discount_step_factor: true,
            master_seed: 42,
        };
        let set = XiSet::Product(vec![]);
        let r1 = rmcpmd(&mut model, &mut policy, &set, &cfg).unwrap();
        let mut model2 = chain_model();
        let mut policy2 = TabularSoftmaxPolicy::zeros(2, 1);
        let r2 = rmcpmd(&mut model2, &mut policy2, &set, &cfg).unwrap();
        assert_eq!(r1.rows.len(), r2.rows.len());
        for (a, b) in r1.rows.iter().zip(&r2.rows) {
            assert_eq!(a.j_estimate.to_bits(), b.j_estimate.to_bits());
            assert_eq!(a.param_norm.to_bits(), b.param_norm.to_bits());
        }
        assert_eq!(r1.theta, r2.theta);
    }

    #[test]
    fn tabular_softmax_score_rows_sum_to_zero() {
        let mut pol = TabularSoftmaxPolicy::zeros(2, 3);
        pol.logits[(0, 1)] = 0.7;
        let sc = pol.score_theta(&0, 1);
        let sum: f64 = sc[0..3].iter().sum();
        assert!(sum.abs() < 1e-12);
        assert!(sc[3..].iter().all(|&x| x == 0.0));
    }
}
