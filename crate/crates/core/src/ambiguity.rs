//! Ambiguity-set geometry over L1 balls around a nominal kernel:
//! membership, linear maximization (the worst-case one-step response),
//! and Bregman proximal steps for the mirror-ascent inner solvers.
//!
//! Per-cell operations are pure and independent across `(s, a)` cells, so
//! callers may fan them out concurrently.

use ndarray::{Array1, Array2};

use crate::error::{Result, RmdpError};
use crate::mdp::Kernel;

/// Distance-generating function for mirror steps. KL is only used on the
/// bare simplex (outer policy updates); inner proxes under an L1 budget use
/// the squared Euclidean geometry, where the constrained step has a clean
/// two-multiplier form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregmanGeometry {
    SquaredEuclidean,
    KullbackLeibler,
}

/// (s,a)-rectangular set: independent L1 balls
/// `{ p in simplex : ||p - nominal_sa||_1 <= kappa_sa }` per cell.
#[derive(Debug, Clone)]
pub struct SaRectL1Set {
    nominal: Kernel,
    kappa: Array2<f64>,
}

impl SaRectL1Set {
    pub fn new(nominal: Kernel, kappa: Array2<f64>) -> Result<Self> {
        let (s, a, _) = nominal.dim();
        if kappa.dim() != (s, a) {
            return Err(RmdpError::ShapeMismatch {
                context: "SaRectL1Set kappa",
                expected: format!("({s}, {a})"),
                actual: format!("{:?}", kappa.dim()),
            });
        }
        if kappa.iter().any(|&k| !(0.0..=2.0).contains(&k)) {
            return Err(RmdpError::InvalidParameter {
                name: "kappa",
                reason: "each (s,a) budget must lie in [0, 2]".into(),
            });
        }
        Ok(Self { nominal, kappa })
    }

    pub fn nominal(&self) -> &Kernel {
        &self.nominal
    }

    pub fn kappa(&self) -> &Array2<f64> {
        &self.kappa
    }
}

/// s-rectangular set: one budget per state shared across actions,
/// `{ p_s : sum_a ||p_sa - nominal_sa||_1 <= kappa_s }`.
#[derive(Debug, Clone)]
pub struct SRectL1Set {
    nominal: Kernel,
    kappa: Array1<f64>,
}

impl SRectL1Set {
    pub fn new(nominal: Kernel, kappa: Array1<f64>) -> Result<Self> {
        let (s, a, _) = nominal.dim();
        if kappa.len() != s {
            return Err(RmdpError::ShapeMismatch {
                context: "SRectL1Set kappa",
                expected: format!("length {s}"),
                actual: format!("length {}", kappa.len()),
            });
        }
        let hi = 2.0 * a as f64;
        if kappa.iter().any(|&k| !(0.0..=hi).contains(&k)) {
            return Err(RmdpError::InvalidParameter {
                name: "kappa",
                reason: format!("each state budget must lie in [0, {hi}]"),
            });
        }
        Ok(Self { nominal, kappa })
    }

    pub fn nominal(&self) -> &Kernel {
        &self.nominal
    }

    pub fn kappa(&self) -> &Array1<f64> {
        &self.kappa
    }
}

/// Rectangular ambiguity set around a nominal kernel.
#[derive(Debug, Clone)]
pub enum AmbiguitySet {
    SaRect(SaRectL1Set),
    SRect(SRectL1Set),
}

impl AmbiguitySet {
    pub fn nominal(&self) -> &Kernel {
        match self {
            AmbiguitySet::SaRect(s) => s.nominal(),
            AmbiguitySet::SRect(s) => s.nominal(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            AmbiguitySet::SaRect(s) => s.kappa().iter().all(|&k| k == 0.0),
            AmbiguitySet::SRect(s) => s.kappa().iter().all(|&k| k == 0.0),
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
/// Idempotent; the output sums to one exactly up to rounding.
pub fn project_simplex(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(RmdpError::InvalidParameter {
            name: "x",
            reason: "cannot project an empty vector".into(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(RmdpError::NonFinite {
            context: "project_simplex",
        });
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    let mut support = 0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
            support = k + 1;
        }
    }
    debug_assert!(support > 0);
    Ok(x.iter().map(|&v| (v - tau).max(0.0)).collect())
}

/// Sorted greedy mass transfer maximizing `p^T z` over
/// `{ p in simplex : ||p - nominal||_1 <= kappa }`: up to `kappa / 2` of
/// probability mass moves from the lowest-z donors to the argmax-z state.
/// Ties break toward the lowest state index.
pub fn linmax_sa(set: &SaRectL1Set, s: usize, a: usize, z: &[f64]) -> Result<Vec<f64>> {
    let nominal: Vec<f64> = set.nominal().row(s, a).to_vec();
    linmax_l1_cell(&nominal, set.kappa()[(s, a)], z)
}

/// Worst-case response for one L1 cell; see [`linmax_sa`].
pub fn linmax_l1_cell(nominal: &[f64], kappa: f64, z: &[f64]) -> Result<Vec<f64>> {
    if nominal.len() != z.len() {
        return Err(RmdpError::ShapeMismatch {
            context: "linmax cell",
            expected: format!("z of length {}", nominal.len()),
            actual: format!("length {}", z.len()),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(RmdpError::NonFinite {
            context: "linmax objective",
        });
    }
    let mut p = nominal.to_vec();
    if kappa == 0.0 {
        return Ok(p);
    }
    let best = argmax_lowest(z);
    let mut budget = kappa / 2.0;
    // donors in ascending z order, lowest index first on ties
    let mut order: Vec<usize> = (0..z.len()).filter(|&i| i != best).collect();
    order.sort_by(|&i, &j| z[i].partial_cmp(&z[j]).unwrap().then(i.cmp(&j)));
    for i in order {
        if budget <= 0.0 {
            break;
        }
        let take = p[i].min(budget);
        p[i] -= take;
        p[best] += take;
        budget -= take;
    }
    Ok(p)
}

fn argmax_lowest(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Shared-budget worst case for one state of an s-rectangular set:
/// maximize `sum_a w_a p_a^T z_a` subject to per-action simplexes and
/// `sum_a ||p_a - nominal_a||_1 <= kappa_s`. Greedy over (action, donor)
/// transfers ranked by marginal gain `w_a (z_a_best - z_a_donor)`; this is
/// a fractional knapsack, so the greedy order is exact.
pub fn linmax_s(
    set: &SRectL1Set,
    s: usize,
    z: &Array2<f64>,
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let (s_n, a_n, _) = set.nominal().dim();
    if s >= s_n || z.nrows() != a_n || z.ncols() != s_n || weights.len() != a_n {
        return Err(RmdpError::ShapeMismatch {
            context: "linmax_s",
            expected: format!("z ({a_n}, {s_n}), weights length {a_n}"),
            actual: format!("z {:?}, weights length {}", z.dim(), weights.len()),
        });
    }
    let nominal: Vec<Vec<f64>> = (0..a_n).map(|a| set.nominal().row(s, a).to_vec()).collect();
    linmax_shared_budget(&nominal, set.kappa()[s], z, weights)
}

pub(crate) fn linmax_shared_budget(
    nominal: &[Vec<f64>],
    kappa: f64,
    z: &Array2<f64>,
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let a_n = nominal.len();
    let mut p: Vec<Vec<f64>> = nominal.to_vec();
    if kappa == 0.0 {
        return Ok(p);
    }
    let best: Vec<usize> = (0..a_n).map(|a| argmax_lowest(&z.row(a).to_vec())).collect();
    // candidate transfers: (gain per unit mass, action, donor)
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for a in 0..a_n {
        for j in 0..z.ncols() {
            if j == best[a] {
                continue;
            }
            let gain = weights[a] * (z[(a, best[a])] - z[(a, j)]);
            if gain > 0.0 {
                cands.push((gain, a, j));
            }
        }
    }
    cands.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut budget = kappa / 2.0;
    for (_gain, a, j) in cands {
        if budget <= 0.0 {
            break;
        }
        let take = p[a][j].min(budget);
        p[a][j] -= take;
        p[a][best[a]] += take;
        budget -= take;
    }
    Ok(p)
}

/// Solution of a constrained SE proximal step together with the Lagrange
/// multipliers, exposed so callers can verify stationarity directly.
#[derive(Debug, Clone)]
pub struct ProxSolution {
    pub probs: Vec<f64>,
    /// multiplier of the simplex (mass) constraint
    pub mu: f64,
    /// multiplier of the L1 budget constraint
    pub lambda: f64,
}

const BISECT_MAX: usize = 200;
const BISECT_REL: f64 = 1e-12;

/// Given the shrinkage level `lambda`, the minimizer of
/// `1/2 (x - y_i)^2 + lambda |x - c_i|` over `x >= 0` is the clamped
/// soft-threshold toward `c_i`.
fn shrink_entry(y: f64, c: f64, lambda: f64, mu: f64) -> f64 {
    let w = y - mu;
    let d = w - c;
    let x = if d > lambda {
        w - lambda
    } else if d < -lambda {
        w + lambda
    } else {
        c
    };
    x.max(0.0)
}

fn mass_at(y: &[f64], c: &[f64], lambda: f64, mu: f64) -> f64 {
    y.iter()
        .zip(c)
        .map(|(&yi, &ci)| shrink_entry(yi, ci, lambda, mu))
        .sum()
}

/// Bisection on the simplex multiplier `mu` so the shrunk entries sum to one.
fn solve_mu(y: &[f64], c: &[f64], lambda: f64) -> Result<f64> {
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = y_min - lambda - 2.0;
    let mut hi = y_max + lambda;
    // expand until bracketed: mass is nonincreasing in mu
    let mut guard = 0;
    while mass_at(y, c, lambda, lo) < 1.0 {
        lo -= (hi - lo).abs().max(1.0);
        guard += 1;
        if guard > 64 {
            return Err(RmdpError::Convergence {
                context: "prox mu bracket",
                iters: guard,
                residual: mass_at(y, c, lambda, lo) - 1.0,
            });
        }
    }
    while mass_at(y, c, lambda, hi) > 1.0 {
        hi += (hi - lo).abs().max(1.0);
        guard += 1;
        if guard > 64 {
            return Err(RmdpError::Convergence {
                context: "prox mu bracket",
                iters: guard,
                residual: mass_at(y, c, lambda, hi) - 1.0,
            });
        }
    }
    for _ in 0..BISECT_MAX {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval collapsed to adjacent floats
        }
        if mass_at(y, c, lambda, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn cell_projection(y: &[f64], c: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let mu = solve_mu(y, c, lambda)?;
    let mut p: Vec<f64> = y
        .iter()
        .zip(c)
        .map(|(&yi, &ci)| shrink_entry(yi, ci, lambda, mu))
        .collect();
    // exact mass correction spread over the coordinates that respond to mu
    // (interior and off the soft-threshold kink); removes the residual the
    // multiplier precision leaves behind
    let residual: f64 = p.iter().sum::<f64>() - 1.0;
    if residual != 0.0 {
        let free: Vec<usize> = p
            .iter()
            .zip(c)
            .enumerate()
            .filter(|(_, (&pi, &ci))| pi > 0.0 && (lambda == 0.0 || (pi - ci).abs() > 1e-12))
            .map(|(i, _)| i)
            .collect();
        if !free.is_empty() {
            let shift = residual / free.len() as f64;
            for i in free {
                p[i] -= shift;
            }
        }
    }
    Ok((p, mu))
}

fn l1_dist(p: &[f64], c: &[f64]) -> f64 {
    p.iter().zip(c).map(|(&a, &b)| (a - b).abs()).sum()
}

/// SE proximal step on one (s,a) cell: the Euclidean projection of
/// `base + beta * g` onto the simplex intersected with the L1 ball around
/// the nominal row, by bisection on the simplex and budget multipliers.
pub fn prox_se_sa(
    set: &SaRectL1Set,
    s: usize,
    a: usize,
    base: &[f64],
    g: &[f64],
    beta: f64,
) -> Result<ProxSolution> {
    let nominal: Vec<f64> = set.nominal().row(s, a).to_vec();
    prox_se_cell(&nominal, set.kappa()[(s, a)], base, g, beta)
}

pub(crate) fn prox_se_cell(
    nominal: &[f64],
    kappa: f64,
    base: &[f64],
    g: &[f64],
    beta: f64,
) -> Result<ProxSolution> {
    let n = nominal.len();
    if base.len() != n || g.len() != n {
        return Err(RmdpError::ShapeMismatch {
            context: "prox_se cell",
            expected: format!("vectors of length {n}"),
            actual: format!("base {}, g {}", base.len(), g.len()),
        });
    }
    let y: Vec<f64> = base.iter().zip(g).map(|(&b, &gi)| b + beta * gi).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RmdpError::NonFinite { context: "prox_se" });
    }
    // already feasible: the projection is the identity
    let sum: f64 = y.iter().sum();
    if (sum - 1.0).abs() <= 1e-13
        && y.iter().all(|&v| v >= 0.0)
        && l1_dist(&y, nominal) <= kappa + 1e-13
    {
        return Ok(ProxSolution {
            probs: y,
            mu: 0.0,
            lambda: 0.0,
        });
    }
    // plain simplex projection first; if it satisfies the budget, lambda = 0
    let (p0, mu0) = cell_projection(&y, nominal, 0.0)?;
    if l1_dist(&p0, nominal) <= kappa {
        return Ok(ProxSolution {
            probs: p0,
            mu: mu0,
            lambda: 0.0,
        });
    }
    if kappa == 0.0 {
        return Ok(ProxSolution {
            probs: nominal.to_vec(),
            mu: 0.0,
            lambda: f64::INFINITY,
        });
    }
    // bisect the budget multiplier; distance to nominal shrinks with lambda
    let mut lo = 0.0;
    let mut hi = y
        .iter()
        .zip(nominal)
        .map(|(&yi, &ci)| (yi - ci).abs())
        .fold(0.0f64, f64::max)
        + 1.0;
    let mut p = p0;
    let mut mu = mu0;
    for _ in 0..BISECT_MAX {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (pm, mm) = cell_projection(&y, nominal, mid)?;
        let dist = l1_dist(&pm, nominal);
        if dist > kappa {
            lo = mid;
        } else {
            hi = mid;
            p = pm;
            mu = mm;
        }
    }
    if hi - lo > BISECT_REL * (1.0 + hi) {
        return Err(RmdpError::Convergence {
            context: "prox_se budget multiplier",
            iters: BISECT_MAX,
            residual: hi - lo,
        });
    }
    Ok(ProxSolution {
        probs: p,
        mu,
        lambda: 0.5 * (lo + hi),
    })
}

/// Per-action solutions of the shared-budget SE prox for one state.
#[derive(Debug, Clone)]
pub struct ProxSolutionS {
    pub probs: Vec<Vec<f64>>,
    pub mus: Vec<f64>,
    pub lambda: f64,
}

/// SE proximal step for one state of an s-rectangular set: outer bisection
/// on the shared budget multiplier, inner per-action simplex projections.
/// `base` and `g` are indexed `(a, s')`; `g` is expected to carry the
/// policy weights already.
pub fn prox_se_s(
    set: &SRectL1Set,
    s: usize,
    base: &Array2<f64>,
    g: &Array2<f64>,
    beta: f64,
) -> Result<ProxSolutionS> {
    let (s_n, a_n, _) = set.nominal().dim();
    if s >= s_n || base.dim() != (a_n, s_n) || g.dim() != (a_n, s_n) {
        return Err(RmdpError::ShapeMismatch {
            context: "prox_se_s",
            expected: format!("base, g of shape ({a_n}, {s_n})"),
            actual: format!("base {:?}, g {:?}", base.dim(), g.dim()),
        });
    }
    let nominal: Vec<Vec<f64>> = (0..a_n).map(|a| set.nominal().row(s, a).to_vec()).collect();
    let kappa = set.kappa()[s];
    let ys: Vec<Vec<f64>> = (0..a_n)
        .map(|a| {
            base.row(a)
                .iter()
                .zip(g.row(a))
                .map(|(&b, &gi)| b + beta * gi)
                .collect()
        })
        .collect();
    if ys.iter().flatten().any(|v| !v.is_finite()) {
        return Err(RmdpError::NonFinite {
            context: "prox_se_s",
        });
    }

    let project_all = |lambda: f64| -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
        let mut probs = Vec::with_capacity(a_n);
        let mut mus = Vec::with_capacity(a_n);
        let mut dist = 0.0;
        for a in 0..a_n {
            let (p, mu) = cell_projection(&ys[a], &nominal[a], lambda)?;
            dist += l1_dist(&p, &nominal[a]);
            probs.push(p);
            mus.push(mu);
        }
        Ok((probs, mus, dist))
    };

    let (p0, mu0, d0) = project_all(0.0)?;
    if d0 <= kappa {
        return Ok(ProxSolutionS {
            probs: p0,
            mus: mu0,
            lambda: 0.0,
        });
    }
    if kappa == 0.0 {
        return Ok(ProxSolutionS {
            probs: nominal,
            mus: vec![0.0; a_n],
            lambda: f64::INFINITY,
        });
    }
    let mut lo = 0.0;
    let mut hi = ys
        .iter()
        .zip(&nominal)
        .flat_map(|(y, c)| y.iter().zip(c).map(|(&yi, &ci)| (yi - ci).abs()))
        .fold(0.0f64, f64::max)
        + 1.0;
    let mut best = (p0, mu0);
    for _ in 0..BISECT_MAX {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (pm, mm, dist) = project_all(mid)?;
        if dist > kappa {
            lo = mid;
        } else {
            hi = mid;
            best = (pm, mm);
        }
    }
    if hi - lo > BISECT_REL * (1.0 + hi) {
        return Err(RmdpError::Convergence {
            context: "prox_se_s budget multiplier",
            iters: BISECT_MAX,
            residual: hi - lo,
        });
    }
    Ok(ProxSolutionS {
        probs: best.0,
        mus: best.1,
        lambda: 0.5 * (lo + hi),
    })
}

/// Multiplicative-weights step on the simplex (KL geometry, descent
/// orientation): `p_i` proportional to `base_i * exp(-beta * g_i)`,
/// stabilized by max-subtraction in the exponent. Entries are floored at
/// a tiny positive value so the output stays strictly positive even when
/// the exponent underflows.
pub fn prox_kl_simplex(base: &[f64], g: &[f64], beta: f64) -> Result<Vec<f64>> {
    if base.len() != g.len() {
        return Err(RmdpError::ShapeMismatch {
            context: "prox_kl_simplex",
            expected: format!("g of length {}", base.len()),
            actual: format!("length {}", g.len()),
        });
    }
    if base.iter().any(|&b| b <= 0.0) {
        return Err(RmdpError::InvalidParameter {
            name: "base",
            reason: "KL prox requires a strictly positive base distribution".into(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) || !beta.is_finite() {
        return Err(RmdpError::NonFinite {
            context: "prox_kl_simplex",
        });
    }
    let shift = g
        .iter()
        .map(|&gi| -beta * gi)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = base
        .iter()
        .zip(g)
        .map(|(&b, &gi)| (b.ln() + (-beta * gi) - shift).exp().max(1e-300))
        .collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    Ok(p)
}

/// Exact-to-tolerance membership check used by the feasibility tests.
pub fn is_feasible_cell(nominal: &[f64], kappa: f64, p: &[f64], tol: f64) -> bool {
    let sum: f64 = p.iter().sum();
    (sum - 1.0).abs() <= tol
        && p.iter().all(|&x| x >= -tol)
        && l1_dist(p, nominal) <= kappa + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array3};

    fn kernel2() -> Kernel {
        let mut probs = Array3::zeros((2, 1, 2));
        probs[(0, 0, 0)] = 0.6;
        probs[(0, 0, 1)] = 0.4;
        probs[(1, 0, 0)] = 0.3;
        probs[(1, 0, 1)] = 0.7;
        Kernel::new(probs).unwrap()
    }

    #[test]
    fn simplex_projection_fixed_points() {
        let p = project_simplex(&[0.2, 0.3, 0.5]).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15);
        assert!((p[1] - 0.3).abs() < 1e-15);
        assert!((p[2] - 0.5).abs() < 1e-15);
        let v = project_simplex(&[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        assert!(project_simplex(&[]).is_err());
    }

    #[test]
    fn simplex_projection_idempotent() {
        let p = project_simplex(&[0.9, -0.4, 0.8, 0.1]).unwrap();
        let q = project_simplex(&p).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linmax_zero_budget_returns_nominal() {
        let set = SaRectL1Set::new(kernel2(), arr2(&[[0.0], [0.0]])).unwrap();
        let p = linmax_sa(&set, 0, 0, &[1.0, 5.0]).unwrap();
        assert_eq!(p, vec![0.6, 0.4]);
    }

    #[test]
    fn linmax_full_budget_is_vertex() {
        let set = SaRectL1Set::new(kernel2(), arr2(&[[2.0], [2.0]])).unwrap();
        let p = linmax_sa(&set, 0, 0, &[1.0, 5.0]).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        // ties resolve to the lowest index
        let p = linmax_sa(&set, 0, 0, &[3.0, 3.0]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn linmax_partial_budget_moves_half_kappa() {
        let set = SaRectL1Set::new(kernel2(), arr2(&[[0.4], [0.4]])).unwrap();
        let p = linmax_sa(&set, 0, 0, &[1.0, 5.0]).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15);
        assert!((p[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn linmax_s_single_action_matches_sa() {
        let nominal = kernel2();
        let s_set = SRectL1Set::new(nominal.clone(), arr1(&[0.4, 0.4])).unwrap();
        let sa_set = SaRectL1Set::new(nominal, arr2(&[[0.4], [0.4]])).unwrap();
        let z = arr2(&[[1.0, 5.0]]);
        let ps = linmax_s(&s_set, 0, &z, &[1.0]).unwrap();
        let pa = linmax_sa(&sa_set, 0, 0, &[1.0, 5.0]).unwrap();
        for (a, b) in ps[0].iter().zip(&pa) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn prox_beta_zero_returns_base() {
        let set = SaRectL1Set::new(kernel2(), arr2(&[[0.5], [0.5]])).unwrap();
        let sol = prox_se_sa(&set, 0, 0, &[0.6, 0.4], &[3.0, -1.0], 0.0).unwrap();
        assert!((sol.probs[0] - 0.6).abs() < 1e-12);
        assert!((sol.probs[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn prox_kappa_zero_returns_nominal() {
        let set = SaRectL1Set::new(kernel2(), arr2(&[[0.0], [0.0]])).unwrap();
        let sol = prox_se_sa(&set, 0, 0, &[0.6, 0.4], &[3.0, -1.0], 10.0).unwrap();
        assert!((sol.probs[0] - 0.6).abs() < 1e-12);
        assert!((sol.probs[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn prox_s_inactive_budget_is_plain_projection() {
        let s_set = SRectL1Set::new(kernel2(), arr1(&[2.0, 2.0])).unwrap();
        let base = arr2(&[[0.6, 0.4]]);
        let g = arr2(&[[1.0, 0.0]]);
        let sol = prox_se_s(&s_set, 0, &base, &g, 0.1).unwrap();
        let direct = project_simplex(&[0.7, 0.4]).unwrap();
        for (a, b) in sol.probs[0].iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(sol.lambda, 0.0);
    }

    #[test]
    fn kl_prox_hand_case() {
        // uniform base, g = (1, 0), beta = ln 2 -> (1/3, 2/3)
        let p = prox_kl_simplex(&[0.5, 0.5], &[1.0, 0.0], std::f64::consts::LN_2).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        // beta = 0 returns the base
        let p = prox_kl_simplex(&[0.3, 0.7], &[5.0, -2.0], 0.0).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-12);
        // strictly positive output even under extreme exponents
        let p = prox_kl_simplex(&[0.5, 0.5], &[1.0, 0.0], 1e6).unwrap();
        assert!(p[0] > 0.0 && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(prox_kl_simplex(&[0.0, 1.0], &[0.0, 0.0], 1.0).is_err());
    }
}
