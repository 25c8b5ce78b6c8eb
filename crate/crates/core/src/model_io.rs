//! JSON model files: a tabular MDP with its nominal kernel and an optional
//! ambiguity block.
//!
//! Schema:
//! `{"S": int, "A": int, "gamma": float, "rho": [S], "cost": [S][A][S],
//!   "kernel": [S][A][S], "ambiguity": {"type": "sa_l1" | "s_l1",
//!   "kappa": [...]}}`
//! where `kappa` is row-major `S*A` for `sa_l1` and length `S` for `s_l1`.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguitySet, SRectL1Set, SaRectL1Set};
use crate::error::{Result, RmdpError};
use crate::mdp::{Kernel, TabularMdp};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbiguityFile {
    #[serde(rename = "type")]
    pub kind: String,
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "S")]
    pub n_states: usize,
    #[serde(rename = "A")]
    pub n_actions: usize,
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub cost: Vec<Vec<Vec<f64>>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambiguity: Option<AmbiguityFile>,
}

fn tensor_to_nested(t: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    let (s_n, a_n, s2_n) = t.dim();
    (0..s_n)
        .map(|s| {
            (0..a_n)
                .map(|a| (0..s2_n).map(|s2| t[(s, a, s2)]).collect())
                .collect()
        })
        .collect()
}

fn nested_to_tensor(v: &[Vec<Vec<f64>>], context: &'static str) -> Result<Array3<f64>> {
    let s_n = v.len();
    let a_n = v.first().map(|x| x.len()).unwrap_or(0);
    let s2_n = v
        .first()
        .and_then(|x| x.first())
        .map(|x| x.len())
        .unwrap_or(0);
    let mut out = Array3::zeros((s_n, a_n, s2_n));
    for (s, plane) in v.iter().enumerate() {
        if plane.len() != a_n {
            return Err(RmdpError::ShapeMismatch {
                context,
                expected: format!("{a_n} action rows"),
                actual: format!("{}", plane.len()),
            });
        }
        for (a, row) in plane.iter().enumerate() {
            if row.len() != s2_n {
                return Err(RmdpError::ShapeMismatch {
                    context,
                    expected: format!("{s2_n} successors"),
                    actual: format!("{}", row.len()),
                });
            }
            for (s2, &x) in row.iter().enumerate() {
                out[(s, a, s2)] = x;
            }
        }
    }
    Ok(out)
}

impl ModelFile {
    pub fn from_parts(
        mdp: &TabularMdp,
        kernel: &Kernel,
        ambiguity: Option<&AmbiguitySet>,
    ) -> Self {
        let ambiguity = ambiguity.map(|set| match set {
            AmbiguitySet::SaRect(s) => AmbiguityFile {
                kind: "sa_l1".into(),
                kappa: s.kappa().iter().cloned().collect(),
            },
            AmbiguitySet::SRect(s) => AmbiguityFile {
                kind: "s_l1".into(),
                kappa: s.kappa().iter().cloned().collect(),
            },
        });
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            rho: mdp.rho().to_vec(),
            cost: tensor_to_nested(mdp.cost()),
            kernel: tensor_to_nested(kernel.probs()),
            ambiguity,
        }
    }

    pub fn to_parts(&self) -> Result<(TabularMdp, Kernel, Option<AmbiguitySet>)> {
        let cost = nested_to_tensor(&self.cost, "model cost")?;
        let probs = nested_to_tensor(&self.kernel, "model kernel")?;
        if cost.dim() != (self.n_states, self.n_actions, self.n_states) {
            return Err(RmdpError::ShapeMismatch {
                context: "model cost",
                expected: format!("({0}, {1}, {0})", self.n_states, self.n_actions),
                actual: format!("{:?}", cost.dim()),
            });
        }
        let mdp = TabularMdp::new(cost, Array1::from_vec(self.rho.clone()), self.gamma)?;
        let kernel = Kernel::new(probs)?;
        let set = match &self.ambiguity {
            None => None,
            Some(f) => match f.kind.as_str() {
                "sa_l1" => {
                    if f.kappa.len() != self.n_states * self.n_actions {
                        return Err(RmdpError::ShapeMismatch {
                            context: "ambiguity kappa",
                            expected: format!("{}", self.n_states * self.n_actions),
                            actual: format!("{}", f.kappa.len()),
                        });
                    }
                    let kappa = Array2::from_shape_vec(
                        (self.n_states, self.n_actions),
                        f.kappa.clone(),
                    )
                    .unwrap();
                    Some(AmbiguitySet::SaRect(SaRectL1Set::new(
                        kernel.clone(),
                        kappa,
                    )?))
                }
                "s_l1" => {
                    if f.kappa.len() != self.n_states {
                        return Err(RmdpError::ShapeMismatch {
                            context: "ambiguity kappa",
                            expected: format!("{}", self.n_states),
                            actual: format!("{}", f.kappa.len()),
                        });
                    }
                    Some(AmbiguitySet::SRect(SRectL1Set::new(
                        kernel.clone(),
                        Array1::from_vec(f.kappa.clone()),
                    )?))
                }
                other => {
                    return Err(RmdpError::Config(format!(
                        "unknown ambiguity type {other:?}"
                    )))
                }
            },
        };
        Ok((mdp, kernel, set))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RmdpError::Config(format!("model file: {e}")))
    }
}
