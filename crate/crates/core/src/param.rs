//! Parametric transition kernels and their exact gradients.
//!
//! Two families: an entropy-tilted kernel for discrete state spaces
//! (a softmax reweighting of a nominal kernel driven by state features)
//! and a Gaussian-mixture kernel for scalar continuous state spaces.
//! Both expose score functions (gradients of the log transition density in
//! the kernel parameters), which feed the exact transition-gradient
//! computation and its mirror-ascent loop, and the sampled estimators in
//! [`crate::monte_carlo`].

use ndarray::{Array1, Array2, Array3};
use statrs::function::erf::erf;

use crate::error::{Result, RmdpError};
use crate::mdp::{objective_of_value, occupancy, policy_evaluate, Kernel, TabularMdp, TabularPolicy};

/// Minimum admissible magnitude for the temperature `lambda . zeta(s, a)`.
pub const LAMBDA_FLOOR: f64 = 1e-6;

/// Radial features over a scalar state and a scalar action value, one
/// center/width triple per output dimension.
#[derive(Debug, Clone)]
pub struct RadialFeatures {
    pub centers_s: Vec<f64>,
    pub centers_a: Vec<f64>,
    pub widths: Vec<f64>,
}

impl RadialFeatures {
    pub fn new(centers_s: Vec<f64>, centers_a: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if centers_s.len() != centers_a.len() || centers_s.len() != widths.len() {
            return Err(RmdpError::ShapeMismatch {
                context: "RadialFeatures",
                expected: "equal-length center and width lists".into(),
                actual: format!(
                    "{} / {} / {}",
                    centers_s.len(),
                    centers_a.len(),
                    widths.len()
                ),
            });
        }
        if widths.iter().any(|&w| w <= 0.0) {
            return Err(RmdpError::InvalidParameter {
                name: "widths",
                reason: "must be strictly positive".into(),
            });
        }
        Ok(Self {
            centers_s,
            centers_a,
            widths,
        })
    }

    pub fn dim(&self) -> usize {
        self.widths.len()
    }

    pub fn eval(&self, s: f64, a: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let ds = s - self.centers_s[i];
                let da = a - self.centers_a[i];
                (-(ds * ds + da * da) / (2.0 * self.widths[i] * self.widths[i])).exp()
            })
            .collect()
    }
}

/// Parameter-set geometry for the kernel parameters, with Euclidean
/// projections. `Product` concatenates independent blocks.
#[derive(Debug, Clone)]
pub enum XiSet {
    L1Ball { center: Vec<f64>, radius: f64 },
    LinfBall { center: Vec<f64>, radius: f64 },
    /// `{ w : sum w = 1, lo <= w <= hi }`
    BoxSimplex { lo: Vec<f64>, hi: Vec<f64> },
    Product(Vec<XiSet>),
}

impl XiSet {
    pub fn dim(&self) -> usize {
        match self {
            XiSet::L1Ball { center, .. } | XiSet::LinfBall { center, .. } => center.len(),
            XiSet::BoxSimplex { lo, .. } => lo.len(),
            XiSet::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            XiSet::L1Ball { center, .. } | XiSet::LinfBall { center, .. } => center.clone(),
            XiSet::BoxSimplex { lo, hi } => {
                // feasible interior point: clamp the uniform vector
                let n = lo.len();
                let uniform = vec![1.0 / n as f64; n];
                project_box_simplex(&uniform, lo, hi).expect("validated box")
            }
            XiSet::Product(parts) => parts.iter().flat_map(|p| p.center()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            XiSet::L1Ball { radius, .. } | XiSet::LinfBall { radius, .. } => {
                if *radius < 0.0 {
                    return Err(RmdpError::InvalidParameter {
                        name: "radius",
                        reason: "must be nonnegative".into(),
                    });
                }
            }
            XiSet::BoxSimplex { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| l > h || *l < 0.0) {
                    return Err(RmdpError::InvalidParameter {
                        name: "box",
                        reason: "need 0 <= lo <= hi".into(),
                    });
                }
                let (slo, shi): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
                if slo > 1.0 + 1e-12 || shi < 1.0 - 1e-12 {
                    return Err(RmdpError::InvalidParameter {
                        name: "box",
                        reason: format!("simplex unreachable: sum(lo)={slo}, sum(hi)={shi}"),
                    });
                }
            }
            XiSet::Product(parts) => {
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.dim() {
            return Err(RmdpError::ShapeMismatch {
                context: "XiSet::project",
                expected: format!("dim {}", self.dim()),
                actual: format!("dim {}", xi.len()),
            });
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(RmdpError::NonFinite {
                context: "XiSet::project",
            });
        }
        match self {
            XiSet::L1Ball { center, radius } => {
                let d: Vec<f64> = xi.iter().zip(center).map(|(x, c)| x - c).collect();
                let proj = project_l1_ball(&d, *radius);
                Ok(proj.iter().zip(center).map(|(p, c)| p + c).collect())
            }
            XiSet::LinfBall { center, radius } => Ok(xi
                .iter()
                .zip(center)
                .map(|(x, c)| x.max(c - radius).min(c + radius))
                .collect()),
            XiSet::BoxSimplex { lo, hi } => project_box_simplex(xi, lo, hi),
            XiSet::Product(parts) => {
                let mut out = Vec::with_capacity(xi.len());
                let mut offset = 0;
                for p in parts {
                    let d = p.dim();
                    out.extend(p.project(&xi[offset..offset + d])?);
                    offset += d;
                }
                Ok(out)
            }
        }
    }

    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        match self {
            XiSet::L1Ball { center, radius } => {
                xi.iter()
                    .zip(center)
                    .map(|(x, c)| (x - c).abs())
                    .sum::<f64>()
                    <= radius + tol
            }
            XiSet::LinfBall { center, radius } => xi
                .iter()
                .zip(center)
                .all(|(x, c)| (x - c).abs() <= radius + tol),
            XiSet::BoxSimplex { lo, hi } => {
                (xi.iter().sum::<f64>() - 1.0).abs() <= tol
                    && xi
                        .iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
            }
            XiSet::Product(parts) => {
                let mut offset = 0;
                parts.iter().all(|p| {
                    let d = p.dim();
                    let ok = p.contains(&xi[offset..offset + d], tol);
                    offset += d;
                    ok
                })
            }
        }
    }
}

/// Euclidean projection of `d` onto the L1 ball of the given radius
/// centered at the origin (sort-and-threshold on the absolute values).
pub fn project_l1_ball(d: &[f64], radius: f64) -> Vec<f64> {
    let norm: f64 = d.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return d.to_vec();
    }
    if radius == 0.0 {
        return vec![0.0; d.len()];
    }
    let mut mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        }
    }
    d.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Euclidean projection onto the box-constrained simplex
/// `{ w : sum w = 1, lo <= w <= hi }` by bisection on the mass multiplier.
pub fn project_box_simplex(x: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let clamp_at = |tau: f64| -> Vec<f64> {
        x.iter()
            .zip(lo.iter().zip(hi))
            .map(|(xi, (l, h))| (xi - tau).max(*l).min(*h))
            .collect()
    };
    let mass = |tau: f64| -> f64 { clamp_at(tau).iter().sum() };
    let span = x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + hi.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + 1.0;
    let mut left = -span;
    let mut right = span;
    if mass(left) < 1.0 - 1e-12 || mass(right) > 1.0 + 1e-12 {
        return Err(RmdpError::InvalidParameter {
            name: "box simplex",
            reason: "unit mass not reachable within the box".into(),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if mass(mid) > 1.0 {
            left = mid;
        } else {
            right = mid;
        }
        if right - left < 1e-14 * span {
            break;
        }
    }
    Ok(clamp_at(0.5 * (left + right)))
}

/// Discrete kernels parameterized by a low-dimensional vector, with rows
/// and score functions. Gradients are taken with respect to the packed
/// parameter vector `xi`.
pub trait ParamKernel {
    fn xi_dim(&self) -> usize;
    fn xi(&self) -> Vec<f64>;
    fn set_xi(&mut self, xi: &[f64]) -> Result<()>;
    /// Transition row `p(. | s, a)`.
    fn row(&self, s: usize, a: usize) -> Result<Vec<f64>>;
    /// Score `d log p(s' | s, a) / d xi`.
    fn score(&self, s: usize, a: usize, s2: usize) -> Result<Vec<f64>>;

    fn to_kernel(&self, n_states: usize, n_actions: usize) -> Result<Kernel> {
        let mut probs = Array3::zeros((n_states, n_actions, n_states));
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = self.row(s, a)?;
                for s2 in 0..n_states {
                    probs[(s, a, s2)] = row[s2];
                }
            }
        }
        Kernel::new(probs)
    }
}

/// Softmax tilt of a nominal kernel:
/// `p_sas' ~ nominal_sas' * exp(eta . phi(s') / (lambda . zeta(s, a)))`.
///
/// `phi` holds per-state features (rows), `zeta` per-(s,a) features.
/// The tilt temperature `lambda . zeta` must stay bounded away from zero.
#[derive(Debug, Clone)]
pub struct EntropyTransition {
    nominal: Kernel,
    pub eta: Array1<f64>,
    pub lambda: Array1<f64>,
    phi: Array2<f64>,
    zeta: Array3<f64>,
}

impl EntropyTransition {
    pub fn new(
        nominal: Kernel,
        eta: Array1<f64>,
        lambda: Array1<f64>,
        phi: Array2<f64>,
        zeta: Array3<f64>,
    ) -> Result<Self> {
        let (s_n, a_n, _) = nominal.dim();
        if phi.nrows() != s_n || phi.ncols() != eta.len() {
            return Err(RmdpError::ShapeMismatch {
                context: "EntropyTransition phi",
                expected: format!("({s_n}, {})", eta.len()),
                actual: format!("{:?}", phi.dim()),
            });
        }
        if zeta.dim() != (s_n, a_n, lambda.len()) {
            return Err(RmdpError::ShapeMismatch {
                context: "EntropyTransition zeta",
                expected: format!("({s_n}, {a_n}, {})", lambda.len()),
                actual: format!("{:?}", zeta.dim()),
            });
        }
        let tr = Self {
            nominal,
            eta,
            lambda,
            phi,
            zeta,
        };
        tr.check_temperature()?;
        Ok(tr)
    }

    pub fn nominal(&self) -> &Kernel {
        &self.nominal
    }

    pub fn n_states(&self) -> usize {
        self.nominal.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.nominal.dim().1
    }

    fn temperature(&self, s: usize, a: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.lambda.len() {
            acc += self.lambda[k] * self.zeta[(s, a, k)];
        }
        acc
    }

    fn check_temperature(&self) -> Result<()> {
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                if self.temperature(s, a).abs() < LAMBDA_FLOOR {
                    return Err(RmdpError::InvalidParameter {
                        name: "lambda",
                        reason: format!(
                            "temperature |lambda . zeta({s}, {a})| below {LAMBDA_FLOOR}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sufficient condition that every parameter in `xi_set` keeps all
    /// temperatures above the floor, via the ball radius and feature norms.
    pub fn temperatures_safe_for(&self, xi_set: &XiSet) -> Result<()> {
        let l = self.eta.len();
        let lambda_slack = |s: usize, a: usize| -> f64 {
            let zeta_row: Vec<f64> = (0..self.lambda.len())
                .map(|k| self.zeta[(s, a, k)])
                .collect();
            let (r1, rinf) = match xi_set {
                XiSet::L1Ball { radius, .. } => (0.0, *radius),
                XiSet::LinfBall { radius, .. } => (*radius, 0.0),
                _ => (f64::INFINITY, f64::INFINITY),
            };
            // L-inf ball: deviation bounded by r * ||zeta||_1;
            // L1 ball: bounded by r * ||zeta||_inf
            let z1: f64 = zeta_row.iter().map(|z| z.abs()).sum();
            let zinf = zeta_row.iter().fold(0.0f64, |m, z| m.max(z.abs()));
            self.temperature(s, a).abs() - (r1 * z1).min(rinf * zinf)
        };
        let _ = l;
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                if lambda_slack(s, a) < LAMBDA_FLOOR {
                    return Err(RmdpError::InvalidParameter {
                        name: "xi_set",
                        reason: format!(
                            "parameter ball may drive temperature at ({s}, {a}) below {LAMBDA_FLOOR}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

impl ParamKernel for EntropyTransition {
    fn xi_dim(&self) -> usize {
        self.eta.len() + self.lambda.len()
    }

    fn xi(&self) -> Vec<f64> {
        self.eta.iter().chain(self.lambda.iter()).cloned().collect()
    }

    fn set_xi(&mut self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.xi_dim() {
            return Err(RmdpError::ShapeMismatch {
                context: "EntropyTransition::set_xi",
                expected: format!("dim {}", self.xi_dim()),
                actual: format!("dim {}", xi.len()),
            });
        }
        let l = self.eta.len();
        self.eta = Array1::from_vec(xi[..l].to_vec());
        self.lambda = Array1::from_vec(xi[l..].to_vec());
        self.check_temperature()
    }

    fn row(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        let temp = self.temperature(s, a);
        if temp.abs() < LAMBDA_FLOOR {
            return Err(RmdpError::InvalidParameter {
                name: "lambda",
                reason: format!("temperature at ({s}, {a}) below {LAMBDA_FLOOR}"),
            });
        }
        let s_n = self.n_states();
        let logits: Vec<f64> = (0..s_n)
            .map(|s2| {
                let mut e = 0.0;
                for i in 0..self.eta.len() {
                    e += self.eta[i] * self.phi[(s2, i)];
                }
                e / temp
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut row: Vec<f64> = (0..s_n)
            .map(|s2| self.nominal.probs()[(s, a, s2)] * (logits[s2] - m).exp())
            .collect();
        let z: f64 = row.iter().sum();
        if z <= 0.0 {
            return Err(RmdpError::NonFinite {
                context: "entropy transition normalization",
            });
        }
        for x in &mut row {
            *x /= z;
        }
        Ok(row)
    }

    fn score(&self, s: usize, a: usize, s2: usize) -> Result<Vec<f64>> {
        let temp = self.temperature(s, a);
        let row = self.row(s, a)?;
        let l = self.eta.len();
        let n = self.lambda.len();
        let mut out = vec![0.0; l + n];
        // expected feature and expected tilt under the current row
        let mut mean_phi = vec![0.0; l];
        let mut mean_tilt = 0.0;
        for (j, &pj) in row.iter().enumerate() {
            let mut tilt_j = 0.0;
            for i in 0..l {
                mean_phi[i] += pj * self.phi[(j, i)];
                tilt_j += self.eta[i] * self.phi[(j, i)];
            }
            mean_tilt += pj * tilt_j;
        }
        let mut tilt_s2 = 0.0;
        for i in 0..l {
            out[i] = (self.phi[(s2, i)] - mean_phi[i]) / temp;
            tilt_s2 += self.eta[i] * self.phi[(s2, i)];
        }
        for k in 0..n {
            out[l + k] = (mean_tilt - tilt_s2) * self.zeta[(s, a, k)] / (temp * temp);
        }
        Ok(out)
    }
}

/// Gaussian-mixture transition over a scalar next state: component means
/// are linear in the radial features, `mu_m = eta_m . zeta(s, a)`;
/// standard deviations are fixed.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTransition {
    pub weights: Array1<f64>,
    pub means: Vec<Array1<f64>>,
    pub sigmas: Array1<f64>,
    pub features: RadialFeatures,
}

/// Log-density and scores of the mixture at one transition; `underflow`
/// marks a point so deep in the tails that every component vanished, in
/// which case the scores are zeroed.
#[derive(Debug, Clone)]
pub struct GmLogDensity {
    pub log_p: f64,
    pub d_weights: Vec<f64>,
    pub d_means: Vec<Vec<f64>>,
    pub underflow: bool,
}

const LN_2PI_SQRT: f64 = 0.918938533204672741780329736406; // ln(sqrt(2 pi))

impl GaussianMixtureTransition {
    pub fn new(
        weights: Array1<f64>,
        means: Vec<Array1<f64>>,
        sigmas: Array1<f64>,
        features: RadialFeatures,
    ) -> Result<Self> {
        let m = weights.len();
        if means.len() != m || sigmas.len() != m {
            return Err(RmdpError::ShapeMismatch {
                context: "GaussianMixtureTransition",
                expected: format!("{m} means and sigmas"),
                actual: format!("{} / {}", means.len(), sigmas.len()),
            });
        }
        if sigmas.iter().any(|&s| s <= 0.0) {
            return Err(RmdpError::InvalidParameter {
                name: "sigmas",
                reason: "must be strictly positive".into(),
            });
        }
        let wsum: f64 = weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-10 || weights.iter().any(|&w| w < 0.0) {
            return Err(RmdpError::NotADistribution {
                context: "GaussianMixtureTransition weights",
                sum: wsum,
                min: weights.iter().cloned().fold(f64::INFINITY, f64::min),
            });
        }
        if means.iter().any(|e| e.len() != features.dim()) {
            return Err(RmdpError::ShapeMismatch {
                context: "GaussianMixtureTransition means",
                expected: format!("feature dim {}", features.dim()),
                actual: "mismatched eta length".into(),
            });
        }
        Ok(Self {
            weights,
            means,
            sigmas,
            features,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn component_mean(&self, m: usize, s: f64, a: f64) -> f64 {
        let zeta = self.features.eval(s, a);
        self.means[m].iter().zip(&zeta).map(|(e, z)| e * z).sum()
    }

    /// Natural-log mixture density and scores at `(s, a, s')`, stabilized
    /// by log-sum-exp over components.
    pub fn log_density(&self, s: f64, a: f64, s_next: f64) -> GmLogDensity {
        let m_n = self.n_components();
        let zeta = self.features.eval(s, a);
        let mut log_comp = vec![f64::NEG_INFINITY; m_n];
        let mut resid = vec![0.0; m_n];
        for m in 0..m_n {
            let mu: f64 = self.means[m].iter().zip(&zeta).map(|(e, z)| e * z).sum();
            let sig = self.sigmas[m];
            let z = (s_next - mu) / sig;
            resid[m] = s_next - mu;
            log_comp[m] = -0.5 * z * z - sig.ln() - LN_2PI_SQRT;
        }
        let max = log_comp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // below ln(min subnormal) the density itself is not representable
        if max < -745.0 {
            return GmLogDensity {
                log_p: f64::NEG_INFINITY,
                d_weights: vec![0.0; m_n],
                d_means: vec![vec![0.0; zeta.len()]; m_n],
                underflow: true,
            };
        }
        let mut mix = 0.0;
        for m in 0..m_n {
            mix += self.weights[m] * (log_comp[m] - max).exp();
        }
        let log_p = max + mix.ln();
        let mut d_weights = vec![0.0; m_n];
        let mut d_means = vec![vec![0.0; zeta.len()]; m_n];
        for m in 0..m_n {
            // component density over mixture density
            let dens_ratio = (log_comp[m] - log_p).exp();
            d_weights[m] = dens_ratio;
            let resp = self.weights[m] * dens_ratio;
            let coef = resp * resid[m] / (self.sigmas[m] * self.sigmas[m]);
            for (k, z) in zeta.iter().enumerate() {
                d_means[m][k] = coef * z;
            }
        }
        GmLogDensity {
            log_p,
            d_weights,
            d_means,
            underflow: false,
        }
    }

    /// Draw a next state: pick a component by weight, then sample its
    /// normal.
    pub fn sample(&self, s: f64, a: f64, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut comp = self.n_components() - 1;
        for m in 0..self.n_components() {
            acc += self.weights[m];
            if u < acc {
                comp = m;
                break;
            }
        }
        let mu = self.component_mean(comp, s, a);
        let noise: f64 = rng.sample(StandardNormal);
        mu + self.sigmas[comp] * noise
    }

    /// Packed parameters `(weights, eta_1, ..., eta_M)`.
    pub fn xi(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.weights.iter().cloned().collect();
        for e in &self.means {
            out.extend(e.iter().cloned());
        }
        out
    }

    pub fn set_xi(&mut self, xi: &[f64]) -> Result<()> {
        let m = self.n_components();
        let k = self.features.dim();
        if xi.len() != m + m * k {
            return Err(RmdpError::ShapeMismatch {
                context: "GaussianMixtureTransition::set_xi",
                expected: format!("dim {}", m + m * k),
                actual: format!("dim {}", xi.len()),
            });
        }
        self.weights = Array1::from_vec(xi[..m].to_vec());
        for i in 0..m {
            self.means[i] = Array1::from_vec(xi[m + i * k..m + (i + 1) * k].to_vec());
        }
        Ok(())
    }

    /// Packed scores aligned with [`Self::xi`].
    pub fn score_xi(&self, s: f64, a: f64, s_next: f64) -> Vec<f64> {
        let d = self.log_density(s, a, s_next);
        let mut out = d.d_weights;
        for dm in d.d_means {
            out.extend(dm);
        }
        out
    }
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(lo_z < Z <= hi_z)` for standard normal `Z`, stable in both tails:
/// the difference is taken between complementary tails on the side where
/// the bin lives, avoiding `1 - 1` cancellation.
fn normal_bin_prob(lo_z: f64, hi_z: f64) -> f64 {
    let q = |z: f64| -> f64 {
        if z.is_infinite() {
            return if z > 0.0 { 0.0 } else { 2.0 };
        }
        erfc(z / std::f64::consts::SQRT_2)
    };
    let mid_right = match (lo_z.is_finite(), hi_z.is_finite()) {
        (true, true) => lo_z + hi_z >= 0.0,
        (false, _) => false,
        (_, false) => true,
    };
    let p = if mid_right {
        // upper-tail complements: Q(lo) - Q(hi)
        0.5 * (q(lo_z) - q(hi_z))
    } else {
        // lower-tail complements: Phi(hi) - Phi(lo)
        0.5 * (q(-hi_z) - q(-lo_z))
    };
    p.max(0.0)
}

/// Gaussian-mixture kernel pushed onto a state grid: bin probabilities are
/// CDF differences with the end bins absorbing the tails. Implements the
/// discrete [`ParamKernel`] interface so the exact transition gradient and
/// its ascent loop apply to a discretized surrogate of a continuous model.
#[derive(Debug, Clone)]
pub struct DiscretizedGm {
    pub gm: GaussianMixtureTransition,
    /// bin centers, ascending
    pub grid: Vec<f64>,
    /// interior bin edges (length `grid.len() - 1`)
    edges: Vec<f64>,
    /// action index -> scalar action value
    pub action_values: Vec<f64>,
}

impl DiscretizedGm {
    pub fn new(gm: GaussianMixtureTransition, grid: Vec<f64>, action_values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(RmdpError::InvalidParameter {
                name: "grid",
                reason: "need at least two bins".into(),
            });
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RmdpError::InvalidParameter {
                name: "grid",
                reason: "bin centers must be strictly increasing".into(),
            });
        }
        let edges = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            gm,
            grid,
            edges,
            action_values,
        })
    }

    fn bin_bounds(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            self.edges[i - 1]
        };
        let hi = if i + 1 == self.grid.len() {
            f64::INFINITY
        } else {
            self.edges[i]
        };
        (lo, hi)
    }
}

impl ParamKernel for DiscretizedGm {
    fn xi_dim(&self) -> usize {
        self.gm.xi().len()
    }

    fn xi(&self) -> Vec<f64> {
        self.gm.xi()
    }

    fn set_xi(&mut self, xi: &[f64]) -> Result<()> {
        self.gm.set_xi(xi)
    }

    fn row(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        let sv = self.grid[s];
        let av = self.action_values[a];
        let zeta = self.gm.features.eval(sv, av);
        let n = self.grid.len();
        let mut row = vec![0.0; n];
        for m in 0..self.gm.n_components() {
            let mu: f64 = self.gm.means[m].iter().zip(&zeta).map(|(e, z)| e * z).sum();
            let sig = self.gm.sigmas[m];
            let w = self.gm.weights[m];
            for (i, r) in row.iter_mut().enumerate() {
                let (lo, hi) = self.bin_bounds(i);
                let c_lo = if lo.is_finite() {
                    norm_cdf((lo - mu) / sig)
                } else {
                    0.0
                };
                let c_hi = if hi.is_finite() {
                    norm_cdf((hi - mu) / sig)
                } else {
                    1.0
                };
                *r += w * (c_hi - c_lo);
            }
        }
        // per-component CDF differences telescope to exactly one, so the
        // row is linear in the weights; no renormalization, or the weight
        // scores would no longer be the row's log-derivatives
        Ok(row)
    }

    fn score(&self, s: usize, a: usize, s2: usize) -> Result<Vec<f64>> {
        let sv = self.grid[s];
        let av = self.action_values[a];
        let zeta = self.gm.features.eval(sv, av);
        let m_n = self.gm.n_components();
        let k = self.gm.features.dim();
        let (lo, hi) = self.bin_bounds(s2);
        let mut comp_prob = vec![0.0; m_n];
        let mut dmu = vec![0.0; m_n];
        let mut total = 0.0;
        for m in 0..m_n {
            let mu: f64 = self.gm.means[m].iter().zip(&zeta).map(|(e, z)| e * z).sum();
            let sig = self.gm.sigmas[m];
            let (c_lo, p_lo) = if lo.is_finite() {
                let z = (lo - mu) / sig;
                (norm_cdf(z), norm_pdf(z))
            } else {
                (0.0, 0.0)
            };
            let (c_hi, p_hi) = if hi.is_finite() {
                let z = (hi - mu) / sig;
                (norm_cdf(z), norm_pdf(z))
            } else {
                (1.0, 0.0)
            };
            comp_prob[m] = c_hi - c_lo;
            // d/dmu [ Phi((hi-mu)/sig) - Phi((lo-mu)/sig) ]
            dmu[m] = (p_lo - p_hi) / sig;
            total += self.gm.weights[m] * comp_prob[m];
        }
        let mut out = vec![0.0; m_n + m_n * k];
        if total <= 0.0 {
            return Ok(out);
        }
        for m in 0..m_n {
            out[m] = comp_prob[m] / total;
            let coef = self.gm.weights[m] * dmu[m] / total;
            for (j, z) in zeta.iter().enumerate() {
                out[m_n + m * k + j] = coef * z;
            }
        }
        Ok(out)
    }
}

/// Exact transition gradient for a discrete model with a parametric
/// kernel, as the occupancy-weighted expectation of the score times the
/// action-next-state value, divided by `1 - gamma`.
pub fn transition_grad_parametric(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    kernel: &impl ParamKernel,
) -> Result<Vec<f64>> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let p = kernel.to_kernel(s_n, a_n)?;
    let v = policy_evaluate(mdp, pi, &p)?;
    let d = occupancy(mdp, pi, &p)?;
    let scale = 1.0 / (1.0 - mdp.gamma());
    let mut grad = vec![0.0; kernel.xi_dim()];
    for s in 0..s_n {
        if d.0[s] == 0.0 {
            continue;
        }
        for a in 0..a_n {
            let w = d.0[s] * pi.probs()[(s, a)];
            if w == 0.0 {
                continue;
            }
            for s2 in 0..s_n {
                let pr = p.probs()[(s, a, s2)];
                if pr == 0.0 {
                    continue;
                }
                let g = mdp.cost()[(s, a, s2)] + mdp.gamma() * v.0[s2];
                let score = kernel.score(s, a, s2)?;
                for (gi, si) in grad.iter_mut().zip(&score) {
                    *gi += scale * w * pr * si * g;
                }
            }
        }
    }
    Ok(grad)
}

/// Step sizes for the parametric ascent.
#[derive(Debug, Clone, Copy)]
pub enum GtmaSchedule {
    Constant(f64),
    Geometric { beta0: f64, ratio: f64 },
}

impl GtmaSchedule {
    fn beta_at(&self, t: usize) -> f64 {
        match *self {
            GtmaSchedule::Constant(b) => b,
            GtmaSchedule::Geometric { beta0, ratio } => (beta0 * ratio.powi(t as i32)).min(1e12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GtmaResult {
    pub xi: Vec<f64>,
    pub j_trace: Vec<f64>,
    pub best_j: f64,
}

/// Projected gradient ascent (SE mirror steps) on the kernel parameters
/// over `xi_set`, with exact gradients on a discrete model. Every iterate
/// is projected, so feasibility is maintained exactly; the final parameters
/// are the best traced iterate.
pub fn generalized_tma(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    kernel: &mut impl ParamKernel,
    xi_set: &XiSet,
    schedule: GtmaSchedule,
    iters: usize,
) -> Result<GtmaResult> {
    xi_set.validate()?;
    let mut xi = xi_set.project(&kernel.xi())?;
    kernel.set_xi(&xi)?;
    let mut j_trace = Vec::with_capacity(iters + 1);
    let mut best = (f64::NEG_INFINITY, xi.clone());
    for t in 0..=iters {
        let p = kernel.to_kernel(mdp.n_states(), mdp.n_actions())?;
        let j = objective_of_value(mdp, &policy_evaluate(mdp, pi, &p)?);
        j_trace.push(j);
        if j > best.0 {
            best = (j, xi.clone());
        }
        if t == iters {
            break;
        }
        let grad = transition_grad_parametric(mdp, pi, kernel)?;
        let beta = schedule.beta_at(t);
        let stepped: Vec<f64> = xi.iter().zip(&grad).map(|(x, g)| x + beta * g).collect();
        xi = xi_set.project(&stepped)?;
        kernel.set_xi(&xi)?;
    }
    kernel.set_xi(&best.1)?;
    Ok(GtmaResult {
        xi: best.1,
        j_trace,
        best_j: best.0,
    })
}
