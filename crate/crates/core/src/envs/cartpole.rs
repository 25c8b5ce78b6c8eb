//! Cart-pole balancing with a multiplicative disturbance on the
//! deterministic next state: after the Euler physics step produces
//! `s_bar`, the realized next state is `Normal((1 + delta) * s_bar, Sigma)`
//! with isotropic noise. The disturbance factor `delta` is the adversary's
//! parameter.
//!
//! Physics constants are the classic benchmark values (cart mass 1.0,
//! pole mass 0.1, half-length 0.5, force 10, dt 0.02, 12 degree angle and
//! 2.4 position limits).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RmdpError};
use crate::monte_carlo::{sample_trajectory, DifferentiablePolicy, McModel, StepOutcome};

pub type CartState = [f64; 4]; // x, x_dot, theta, theta_dot

#[derive(Debug, Clone)]
pub struct CartPoleConfig {
    pub gravity: f64,
    pub masscart: f64,
    pub masspole: f64,
    /// half-length of the pole
    pub length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub theta_limit: f64,
    pub x_limit: f64,
    pub max_steps: usize,
    /// isotropic transition noise standard deviation
    pub noise_std: f64,
    /// initial state: each coordinate uniform in [-init_span, init_span]
    pub init_span: f64,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            masscart: 1.0,
            masspole: 0.1,
            length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            theta_limit: 12.0 * std::f64::consts::PI / 180.0,
            x_limit: 2.4,
            max_steps: 10_000,
            noise_std: 1e-2,
            init_span: 0.05,
        }
    }
}

/// Euler-integrated ideal dynamics; action 0 pushes left, 1 pushes right.
pub fn deterministic_step(cfg: &CartPoleConfig, s: &CartState, action: usize) -> CartState {
    let force = if action == 1 {
        cfg.force_mag
    } else {
        -cfg.force_mag
    };
    let [x, x_dot, theta, theta_dot] = *s;
    let total_mass = cfg.masscart + cfg.masspole;
    let polemass_length = cfg.masspole * cfg.length;
    let cos = theta.cos();
    let sin = theta.sin();
    let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (cfg.gravity * sin - cos * temp)
        / (cfg.length * (4.0 / 3.0 - cfg.masspole * cos * cos / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
    [
        x + cfg.dt * x_dot,
        x_dot + cfg.dt * x_acc,
        theta + cfg.dt * theta_dot,
        theta_dot + cfg.dt * theta_acc,
    ]
}

pub fn is_failure(cfg: &CartPoleConfig, s: &CartState) -> bool {
    s[0].abs() > cfg.x_limit || s[2].abs() > cfg.theta_limit
}

/// Cart-pole with the disturbance parameter `delta` exposed as the
/// adversary's transition parameter. Cost is zero per surviving step and
/// one on the step that fails.
#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    pub cfg: CartPoleConfig,
    pub delta: f64,
    /// when set, the per-episode disturbance is drawn uniformly from
    /// [0, delta] instead of held fixed (evaluation mode uses fixed draws
    /// per episode made by the caller)
    pub noise_enabled: bool,
}

impl CartPoleEnv {
    pub fn new(cfg: CartPoleConfig, delta: f64) -> Self {
        Self {
            cfg,
            delta,
            noise_enabled: true,
        }
    }
}

impl McModel for CartPoleEnv {
    type State = CartState;

    fn n_actions(&self) -> usize {
        2
    }

    fn init_state(&self, rng: &mut ChaCha8Rng) -> CartState {
        let mut s = [0.0; 4];
        for v in &mut s {
            *v = (rng.gen::<f64>() * 2.0 - 1.0) * self.cfg.init_span;
        }
        s
    }

    fn step(&self, s: &CartState, a: usize, rng: &mut ChaCha8Rng) -> Result<StepOutcome<CartState>> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(RmdpError::NonFinite {
                context: "cart-pole state",
            });
        }
        let bar = deterministic_step(&self.cfg, s, a);
        let mut next = [0.0; 4];
        for i in 0..4 {
            let noise: f64 = if self.noise_enabled && self.cfg.noise_std > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                self.cfg.noise_std * z
            } else {
                0.0
            };
            next[i] = (1.0 + self.delta) * bar[i] + noise;
        }
        let done = is_failure(&self.cfg, &next);
        Ok(StepOutcome {
            next,
            cost: if done { 1.0 } else { 0.0 },
            done,
        })
    }

    fn xi_dim(&self) -> usize {
        1
    }

    fn xi(&self) -> Vec<f64> {
        vec![self.delta]
    }

    fn set_xi(&mut self, xi: &[f64]) -> Result<()> {
        if xi.len() != 1 || !xi[0].is_finite() {
            return Err(RmdpError::InvalidParameter {
                name: "delta",
                reason: "expected one finite disturbance factor".into(),
            });
        }
        self.delta = xi[0];
        Ok(())
    }

    /// `d log p / d delta` for `next ~ Normal((1 + delta) s_bar, sigma^2 I)`
    /// requires the pre-noise state; recompute it from `(s, a)`.
    fn score_xi(&self, s: &CartState, a: usize, next: &CartState) -> Vec<f64> {
        let bar = deterministic_step(&self.cfg, s, a);
        let var = self.cfg.noise_std * self.cfg.noise_std;
        if var == 0.0 {
            return vec![0.0];
        }
        let mut acc = 0.0;
        for i in 0..4 {
            acc += (next[i] - (1.0 + self.delta) * bar[i]) * bar[i];
        }
        vec![acc / var]
    }
}

/// Softmax policy over two actions with radial features of the state on a
/// lattice of centers.
#[derive(Debug, Clone)]
pub struct CartPolePolicy {
    /// per-action weights, laid out action-major: theta[a * K + k]
    pub theta: Vec<f64>,
    pub centers: Vec<CartState>,
    pub inv_widths: [f64; 4],
}

impl CartPolePolicy {
    /// 16-center lattice: two symmetric values per state dimension.
    pub fn lattice(scales: [f64; 4], widths: [f64; 4]) -> Self {
        let mut centers = Vec::with_capacity(16);
        for i in 0..16 {
            let mut c = [0.0; 4];
            for (d, v) in c.iter_mut().enumerate() {
                let sign = if (i >> d) & 1 == 1 { 1.0 } else { -1.0 };
                *v = sign * scales[d];
            }
            centers.push(c);
        }
        let inv_widths = [
            1.0 / widths[0],
            1.0 / widths[1],
            1.0 / widths[2],
            1.0 / widths[3],
        ];
        Self {
            theta: vec![0.0; 2 * centers.len()],
            centers,
            inv_widths,
        }
    }

    pub fn features(&self, s: &CartState) -> Vec<f64> {
        self.centers
            .iter()
            .map(|c| {
                let mut d2 = 0.0;
                for i in 0..4 {
                    let d = (s[i] - c[i]) * self.inv_widths[i];
                    d2 += d * d;
                }
                (-0.5 * d2).exp()
            })
            .collect()
    }

    fn logits(&self, feats: &[f64]) -> [f64; 2] {
        let k = self.centers.len();
        let mut out = [0.0; 2];
        for a in 0..2 {
            out[a] = self.theta[a * k..(a + 1) * k]
                .iter()
                .zip(feats)
                .map(|(t, f)| t * f)
                .sum();
        }
        out
    }
}

impl DifferentiablePolicy<CartState> for CartPolePolicy {
    fn n_actions(&self) -> usize {
        2
    }

    fn action_probs(&self, s: &CartState) -> Vec<f64> {
        let feats = self.features(s);
        let logits = self.logits(&feats);
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let z = e0 + e1;
        vec![e0 / z, e1 / z]
    }

    fn score_theta(&self, s: &CartState, a: usize) -> Vec<f64> {
        let feats = self.features(s);
        let probs = self.action_probs(s);
        let k = self.centers.len();
        let mut score = vec![0.0; 2 * k];
        for a2 in 0..2 {
            let coef = (if a2 == a { 1.0 } else { 0.0 }) - probs[a2];
            for (j, f) in feats.iter().enumerate() {
                score[a2 * k + j] = coef * f;
            }
        }
        score
    }

    fn theta(&self) -> Vec<f64> {
        self.theta.clone()
    }

    fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(RmdpError::ShapeMismatch {
                context: "CartPolePolicy::set_theta",
                expected: format!("dim {}", self.theta.len()),
                actual: format!("dim {}", theta.len()),
            });
        }
        self.theta = theta.to_vec();
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RobustnessRow {
    pub level: usize,
    pub kappa: f64,
    pub min_steps: usize,
    pub max_steps: usize,
    pub mean_steps: f64,
    pub success_rate: f64,
}

/// Evaluate a trained policy across disturbance levels: per episode the
/// disturbance is drawn uniformly from `[0, kappa_level]`, and success
/// means surviving `success_bar` steps.
pub fn cartpole_robustness_eval(
    cfg: &CartPoleConfig,
    policy: &CartPolePolicy,
    levels: &[(usize, f64)],
    episodes: usize,
    success_bar: usize,
    master_seed: u64,
) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::with_capacity(levels.len());
    for (row_idx, &(level, kappa)) in levels.iter().enumerate() {
        if episodes == 0 {
            continue;
        }
        let mut min_steps = usize::MAX;
        let mut max_steps = 0usize;
        let mut total = 0usize;
        let mut successes = 0usize;
        for ep in 0..episodes {
            let mut rng = crate::monte_carlo::stream_rng(
                master_seed,
                (row_idx * episodes + ep) as u64,
            );
            let delta = if kappa > 0.0 {
                rng.gen::<f64>() * kappa
            } else {
                0.0
            };
            let env = CartPoleEnv::new(cfg.clone(), delta);
            let traj = sample_trajectory(&env, policy, success_bar, &mut rng)?;
            let steps = traj.len();
            let survived = steps >= success_bar && traj.costs.iter().all(|&c| c == 0.0);
            min_steps = min_steps.min(steps);
            max_steps = max_steps.max(steps);
            total += steps;
            if survived {
                successes += 1;
            }
        }
        rows.push(RobustnessRow {
            level,
            kappa,
            min_steps,
            max_steps,
            mean_steps: total as f64 / episodes as f64,
            success_rate: successes as f64 / episodes as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monte_carlo::stream_rng;

    #[test]
    fn noiseless_zero_delta_matches_reference_integrator() {
        // independent reimplementation of the same equations of motion
        let cfg = CartPoleConfig {
            noise_std: 0.0,
            ..Default::default()
        };
        let env = CartPoleEnv::new(cfg.clone(), 0.0);
        let mut s: CartState = [0.01, -0.02, 0.03, 0.01];
        let mut reference = s;
        let mut rng = stream_rng(0, 0);
        for step in 0..50 {
            let a = step % 2;
            let out = env.step(&s, a, &mut rng).unwrap();
            s = out.next;
            // oracle: recompute accelerations from first principles
            let f = if a == 1 { 10.0 } else { -10.0 };
            let (mc, mp, l, g, dt) = (1.0, 0.1, 0.5, 9.8, 0.02);
            let sin = reference[2].sin();
            let cos = reference[2].cos();
            let tmp = (f + mp * l * reference[3] * reference[3] * sin) / (mc + mp);
            let th_acc = (g * sin - cos * tmp) / (l * (4.0 / 3.0 - mp * cos * cos / (mc + mp)));
            let x_acc = tmp - mp * l * th_acc * cos / (mc + mp);
            reference = [
                reference[0] + dt * reference[1],
                reference[1] + dt * x_acc,
                reference[2] + dt * reference[3],
                reference[3] + dt * th_acc,
            ];
            for i in 0..4 {
                assert!(
                    (s[i] - reference[i]).abs() < 1e-10,
                    "dim {i} diverged at step {step}"
                );
            }
            if out.done {
                break;
            }
        }
    }

    #[test]
    fn upright_state_stays_near_equilibrium_under_alternating_force() {
        // open-loop alternation cannot hold the unstable upright point, so
        // the force alternates with the lean (bang-bang toward the fall)
        let cfg = CartPoleConfig {
            noise_std: 0.0,
            ..Default::default()
        };
        let env = CartPoleEnv::new(cfg.clone(), 0.0);
        let mut s: CartState = [0.0, 0.0, 0.0, 0.0];
        let mut rng = stream_rng(0, 0);
        for step in 0..100 {
            let a = if s[2] + 0.2 * s[3] > 0.0 { 1 } else { 0 };
            let out = env.step(&s, a, &mut rng).unwrap();
            assert!(!out.done, "fell at step {step}");
            s = out.next;
        }
        assert!(s[2].abs() < cfg.theta_limit / 2.0);
    }

    #[test]
    fn failure_costs_one_and_terminates() {
        let cfg = CartPoleConfig {
            noise_std: 0.0,
            ..Default::default()
        };
        let env = CartPoleEnv::new(cfg, 0.0);
        // tilted far: repeatedly pushing one way falls quickly
        let mut s: CartState = [0.0, 0.0, 0.18, 1.5];
        let mut rng = stream_rng(0, 0);
        let mut fell = false;
        for _ in 0..100 {
            let out = env.step(&s, 1, &mut rng).unwrap();
            if out.done {
                assert_eq!(out.cost, 1.0);
                fell = true;
                break;
            }
            assert_eq!(out.cost, 0.0);
            s = out.next;
        }
        assert!(fell);
    }

    #[test]
    fn delta_score_matches_finite_differences_of_log_density() {
        let cfg = CartPoleConfig::default();
        let env = CartPoleEnv::new(cfg.clone(), 0.05);
        let s: CartState = [0.1, -0.3, 0.05, 0.2];
        let mut rng = stream_rng(9, 0);
        let out = env.step(&s, 1, &mut rng).unwrap();
        let log_p = |delta: f64| -> f64 {
            let bar = deterministic_step(&cfg, &s, 1);
            let var = cfg.noise_std * cfg.noise_std;
            let mut acc = 0.0;
            for i in 0..4 {
                let r = out.next[i] - (1.0 + delta) * bar[i];
                acc += -0.5 * r * r / var;
            }
            acc
        };
        let h = 1e-7;
        let fd = (log_p(0.05 + h) - log_p(0.05 - h)) / (2.0 * h);
        let score = env.score_xi(&s, 1, &out.next)[0];
        assert!(
            (fd - score).abs() <= 1e-4 * (1.0 + fd.abs()),
            "fd {fd} vs score {score}"
        );
    }

    #[test]
    fn empty_episode_budget_yields_empty_table() {
        let cfg = CartPoleConfig::default();
        let policy = CartPolePolicy::lattice([1.0, 1.0, 0.1, 1.0], [1.0, 1.0, 0.2, 1.0]);
        let rows =
            cartpole_robustness_eval(&cfg, &policy, &[(0, 0.0), (1, 0.05)], 0, 100, 1).unwrap();
        assert!(rows.is_empty());
    }
}
