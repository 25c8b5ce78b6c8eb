//! Randomly generated finite MDPs parameterized by size and branching
//! factor, paired with L1 rectangular ambiguity sets.
//!
//! Sampling is fully determined by the seed and runs through a fixed draw
//! order (per-cell support, per-cell simplex weights, then costs, then
//! budgets), so a given spec reproduces byte-identical models across runs
//! and platforms.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ambiguity::{SRectL1Set, SaRectL1Set};
use crate::error::{Result, RmdpError};
use crate::mdp::{Kernel, TabularMdp};

#[derive(Debug, Clone)]
pub struct GarnetSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// number of reachable successors per (s, a) cell
    pub branching: usize,
    pub cost_max: f64,
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl GarnetSpec {
    pub fn new(n_states: usize, n_actions: usize, branching: usize, seed: u64) -> Self {
        Self {
            n_states,
            n_actions,
            branching,
            cost_max: 5.0,
            kappa_lo: 0.3,
            kappa_hi: 0.6,
            gamma: 0.95,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GarnetInstance {
    pub mdp: TabularMdp,
    pub nominal: Kernel,
    pub sa_set: SaRectL1Set,
    pub s_set: SRectL1Set,
}

/// Generate a model: each `(s, a)` row is supported on exactly `branching`
/// states with uniform-simplex weights, costs are uniform on
/// `[0, cost_max]`, budgets uniform on `[kappa_lo, kappa_hi]`, and the
/// initial distribution is uniform.
pub fn garnet_generate(spec: &GarnetSpec) -> Result<GarnetInstance> {
    let (s_n, a_n, b) = (spec.n_states, spec.n_actions, spec.branching);
    if b == 0 || b > s_n {
        return Err(RmdpError::InvalidParameter {
            name: "branching",
            reason: format!("need 1 <= b <= S, got b = {b}, S = {s_n}"),
        });
    }
    if spec.cost_max <= 0.0 {
        return Err(RmdpError::InvalidParameter {
            name: "cost_max",
            reason: "must be positive".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut probs = Array3::zeros((s_n, a_n, s_n));
    for s in 0..s_n {
        for a in 0..a_n {
            // partial Fisher-Yates for the support, then sort it so weight
            // assignment is order-independent
            let mut idx: Vec<usize> = (0..s_n).collect();
            for i in 0..b {
                let j = rng.gen_range(i..s_n);
                idx.swap(i, j);
            }
            let mut support = idx[..b].to_vec();
            support.sort_unstable();
            // uniform over the simplex: normalized exponential draws
            let mut weights = Vec::with_capacity(b);
            let mut total = 0.0;
            for _ in 0..b {
                let u: f64 = rng.gen();
                let e = -(1.0 - u).ln();
                weights.push(e);
                total += e;
            }
            for (k, &s2) in support.iter().enumerate() {
                probs[(s, a, s2)] = weights[k] / total;
            }
        }
    }

    let mut cost = Array3::zeros((s_n, a_n, s_n));
    for s in 0..s_n {
        for a in 0..a_n {
            for s2 in 0..s_n {
                cost[(s, a, s2)] = rng.gen::<f64>() * spec.cost_max;
            }
        }
    }

    let mut kappa_sa = Array2::zeros((s_n, a_n));
    for s in 0..s_n {
        for a in 0..a_n {
            kappa_sa[(s, a)] = spec.kappa_lo + rng.gen::<f64>() * (spec.kappa_hi - spec.kappa_lo);
        }
    }
    let mut kappa_s = Array1::zeros(s_n);
    for s in 0..s_n {
        kappa_s[s] = spec.kappa_lo + rng.gen::<f64>() * (spec.kappa_hi - spec.kappa_lo);
    }

    let rho = Array1::from_elem(s_n, 1.0 / s_n as f64);
    let mdp = TabularMdp::new(cost, rho, spec.gamma)?;
    let nominal = Kernel::new(probs)?;
    let sa_set = SaRectL1Set::new(nominal.clone(), kappa_sa)?;
    let s_set = SRectL1Set::new(nominal.clone(), kappa_s)?;
    Ok(GarnetInstance {
        mdp,
        nominal,
        sa_set,
        s_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branching_controls_support_size() {
        let inst = garnet_generate(&GarnetSpec::new(6, 3, 2, 11)).unwrap();
        for s in 0..6 {
            for a in 0..3 {
                let nz = inst
                    .nominal
                    .row(s, a)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .count();
                assert_eq!(nz, 2);
            }
        }
    }

    #[test]
    fn dense_and_deterministic_extremes() {
        let dense = garnet_generate(&GarnetSpec::new(4, 2, 4, 5)).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert!(dense.nominal.row(s, a).iter().all(|&p| p > 0.0));
            }
        }
        let det = garnet_generate(&GarnetSpec::new(4, 2, 1, 5)).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let row = det.nominal.row(s, a);
                assert!(row.iter().any(|&p| (p - 1.0).abs() < 1e-15));
            }
        }
        assert!(garnet_generate(&GarnetSpec::new(4, 2, 5, 5)).is_err());
    }

    #[test]
    fn same_seed_same_model() {
        let a = garnet_generate(&GarnetSpec::new(5, 4, 3, 123)).unwrap();
        let b = garnet_generate(&GarnetSpec::new(5, 4, 3, 123)).unwrap();
        assert_eq!(a.nominal.probs(), b.nominal.probs());
        assert_eq!(a.mdp.cost(), b.mdp.cost());
        assert_eq!(a.sa_set.kappa(), b.sa_set.kappa());
        assert_eq!(a.s_set.kappa(), b.s_set.kappa());
        let c = garnet_generate(&GarnetSpec::new(5, 4, 3, 124)).unwrap();
        assert_ne!(a.nominal.probs(), c.nominal.probs());
    }

    #[test]
    fn budgets_respect_configured_range() {
        let inst = garnet_generate(&GarnetSpec::new(5, 4, 3, 7)).unwrap();
        for &k in inst.sa_set.kappa() {
            assert!((0.3..=0.6).contains(&k));
        }
        for &k in inst.s_set.kappa() {
            assert!((0.3..=0.6).contains(&k));
        }
    }
}
