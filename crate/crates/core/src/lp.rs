//! Small dense linear-program solver (two-phase primal simplex with
//! Bland's rule). Sized for the validation suites: a few hundred variables
//! at most. Kept independent of the greedy ambiguity-set routines so the
//! two can be checked against each other.

use crate::error::{Result, RmdpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Rel,
    pub rhs: f64,
}

/// Maximize `objective . x` over `x >= 0` subject to the constraints.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const EPS: f64 = 1e-9;

struct Tableau {
    // rows x cols, last col = rhs
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.a[row][col];
        for x in &mut self.a[row] {
            *x /= piv;
        }
        let pivot_row = self.a[row].clone();
        for (r, arow) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = arow[col];
            if f == 0.0 {
                continue;
            }
            for (x, &pr) in arow.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
        }
        self.basis[row] = col;
    }

    /// Primal simplex on the current tableau maximizing `obj` (a row of
    /// reduced costs is recomputed from scratch each iteration; simple and
    /// robust at these sizes).
    fn run(&mut self, obj: &[f64], max_iters: usize) -> Result<()> {
        for _ in 0..max_iters {
            // reduced costs: c_j - c_B . B^{-1} A_j
            let m = self.a.len();
            let mut reduced = vec![0.0; self.n_cols];
            for j in 0..self.n_cols {
                let mut z = 0.0;
                for r in 0..m {
                    z += obj[self.basis[r]] * self.a[r][j];
                }
                reduced[j] = obj[j] - z;
            }
            // Bland: entering = lowest index with positive reduced cost
            let entering = match (0..self.n_cols).find(|&j| reduced[j] > EPS) {
                Some(j) => j,
                None => return Ok(()),
            };
            // ratio test, ties to lowest row index
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let coef = self.a[r][entering];
                if coef > EPS {
                    let ratio = self.a[r][self.n_cols] / coef;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((_, best)) if ratio < best - EPS => leave = Some((r, ratio)),
                        Some((br, best))
                            if (ratio - best).abs() <= EPS && self.basis[r] < self.basis[br] =>
                        {
                            leave = Some((r, ratio))
                        }
                        _ => {}
                    }
                }
            }
            let (row, _) = leave.ok_or_else(|| {
                RmdpError::LinearProgram("unbounded linear program".into())
            })?;
            self.pivot(row, entering);
        }
        Err(RmdpError::LinearProgram(
            "simplex iteration limit exceeded".into(),
        ))
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    for c in &lp.constraints {
        if c.coeffs.len() != n {
            return Err(RmdpError::LinearProgram(format!(
                "constraint has {} coefficients, expected {n}",
                c.coeffs.len()
            )));
        }
    }

    // normalize rhs >= 0
    let rows: Vec<Constraint> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                Constraint {
                    coeffs: c.coeffs.iter().map(|v| -v).collect(),
                    rel: match c.rel {
                        Rel::Le => Rel::Ge,
                        Rel::Ge => Rel::Le,
                        Rel::Eq => Rel::Eq,
                    },
                    rhs: -c.rhs,
                }
            } else {
                c.clone()
            }
        })
        .collect();

    let n_slack = rows.iter().filter(|c| c.rel != Rel::Eq).count();
    let n_art = rows.iter().filter(|c| c.rel != Rel::Le).count();
    let n_cols = n + n_slack + n_art;

    let mut a = vec![vec![0.0; n_cols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut slack_idx = n;
    let mut art_idx = n + n_slack;
    for (r, c) in rows.iter().enumerate() {
        a[r][..n].copy_from_slice(&c.coeffs);
        a[r][n_cols] = c.rhs;
        match c.rel {
            Rel::Le => {
                a[r][slack_idx] = 1.0;
                basis[r] = slack_idx;
                slack_idx += 1;
            }
            Rel::Ge => {
                a[r][slack_idx] = -1.0;
                slack_idx += 1;
                a[r][art_idx] = 1.0;
                basis[r] = art_idx;
                art_idx += 1;
            }
            Rel::Eq => {
                a[r][art_idx] = 1.0;
                basis[r] = art_idx;
                art_idx += 1;
            }
        }
    }

    let mut tab = Tableau { a, basis, n_cols };
    let max_iters = 200 * (n_cols + m + 10);

    if n_art > 0 {
        // phase 1: maximize -sum(artificials)
        let mut obj1 = vec![0.0; n_cols];
        for j in (n + n_slack)..n_cols {
            obj1[j] = -1.0;
        }
        tab.run(&obj1, max_iters)?;
        let phase1: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= n + n_slack)
            .map(|(r, _)| tab.a[r][n_cols])
            .sum();
        if phase1 > 1e-7 {
            return Err(RmdpError::LinearProgram("infeasible program".into()));
        }
        // pivot lingering artificials out of the basis where possible
        for r in 0..m {
            if tab.basis[r] >= n + n_slack {
                if let Some(j) = (0..n + n_slack).find(|&j| tab.a[r][j].abs() > EPS) {
                    tab.pivot(r, j);
                }
            }
        }
        // freeze artificial columns at zero
        for row in &mut tab.a {
            for j in (n + n_slack)..n_cols {
                row[j] = 0.0;
            }
        }
    }

    let mut obj2 = vec![0.0; n_cols];
    obj2[..n].copy_from_slice(&lp.objective);
    tab.run(&obj2, max_iters)?;

    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.a[r][n_cols];
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, objective })
}

/// LP formulation of the per-cell worst case `max p^T z` over
/// `{ p in simplex : ||p - nominal||_1 <= kappa }`, used as the oracle the
/// greedy transfer is validated against. Variables are `(p, t)` with
/// `t_i >= |p_i - nominal_i|`.
pub fn linmax_cell_oracle(nominal: &[f64], kappa: f64, z: &[f64]) -> Result<LpSolution> {
    let n = nominal.len();
    let mut objective = vec![0.0; 2 * n];
    objective[..n].copy_from_slice(z);
    let mut constraints = Vec::new();
    // sum p = 1
    let mut row = vec![0.0; 2 * n];
    row[..n].fill(1.0);
    constraints.push(Constraint {
        coeffs: row,
        rel: Rel::Eq,
        rhs: 1.0,
    });
    // p_i - t_i <= c_i  and  -p_i - t_i <= -c_i
    for i in 0..n {
        let mut up = vec![0.0; 2 * n];
        up[i] = 1.0;
        up[n + i] = -1.0;
        constraints.push(Constraint {
            coeffs: up,
            rel: Rel::Le,
            rhs: nominal[i],
        });
        let mut dn = vec![0.0; 2 * n];
        dn[i] = -1.0;
        dn[n + i] = -1.0;
        constraints.push(Constraint {
            coeffs: dn,
            rel: Rel::Le,
            rhs: -nominal[i],
        });
    }
    // sum t <= kappa
    let mut bud = vec![0.0; 2 * n];
    bud[n..].fill(1.0);
    constraints.push(Constraint {
        coeffs: bud,
        rel: Rel::Le,
        rhs: kappa,
    });
    let sol = solve(&LinearProgram {
        objective,
        constraints,
    })?;
    Ok(LpSolution {
        objective: z.iter().zip(&sol.x[..n]).map(|(a, b)| a * b).sum(),
        x: sol.x[..n].to_vec(),
    })
}

/// Shared-budget oracle for one state of an s-rectangular set:
/// `max sum_a w_a p_a^T z_a` with per-action simplexes and a joint L1
/// budget. Variables `(p_11..p_AS, t_11..t_AS)`.
pub fn linmax_shared_oracle(
    nominal: &[Vec<f64>],
    kappa: f64,
    z: &ndarray::Array2<f64>,
    weights: &[f64],
) -> Result<LpSolution> {
    let a_n = nominal.len();
    let s_n = nominal[0].len();
    let nv = a_n * s_n;
    let idx = |a: usize, s: usize| a * s_n + s;
    let mut objective = vec![0.0; 2 * nv];
    for a in 0..a_n {
        for s in 0..s_n {
            objective[idx(a, s)] = weights[a] * z[(a, s)];
        }
    }
    let mut constraints = Vec::new();
    for a in 0..a_n {
        let mut row = vec![0.0; 2 * nv];
        for s in 0..s_n {
            row[idx(a, s)] = 1.0;
        }
        constraints.push(Constraint {
            coeffs: row,
            rel: Rel::Eq,
            rhs: 1.0,
        });
    }
    for a in 0..a_n {
        for s in 0..s_n {
            let mut up = vec![0.0; 2 * nv];
            up[idx(a, s)] = 1.0;
            up[nv + idx(a, s)] = -1.0;
            constraints.push(Constraint {
                coeffs: up,
                rel: Rel::Le,
                rhs: nominal[a][s],
            });
            let mut dn = vec![0.0; 2 * nv];
            dn[idx(a, s)] = -1.0;
            dn[nv + idx(a, s)] = -1.0;
            constraints.push(Constraint {
                coeffs: dn,
                rel: Rel::Le,
                rhs: -nominal[a][s],
            });
        }
    }
    let mut bud = vec![0.0; 2 * nv];
    bud[nv..].fill(1.0);
    constraints.push(Constraint {
        coeffs: bud,
        rel: Rel::Le,
        rhs: kappa,
    });
    let sol = solve(&LinearProgram {
        objective: objective.clone(),
        constraints,
    })?;
    Ok(LpSolution {
        objective: objective[..nv]
            .iter()
            .zip(&sol.x[..nv])
            .map(|(a, b)| a * b)
            .sum(),
        x: sol.x[..nv].to_vec(),
    })
}
