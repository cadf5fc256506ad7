//! JSON form of a layered MDP: `{"H", "layer_sizes", "A", "P"}` with `P[s][a][s']`.

use std::fmt;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::{LayeredMdp, ROW_SUM_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    #[serde(rename = "H")]
    pub horizon: usize,
    pub layer_sizes: Vec<usize>,
    #[serde(rename = "A")]
    pub num_actions: usize,
    /// Dense kernel indexed `[s][a][s']` over non-terminal states.
    #[serde(rename = "P")]
    pub transitions: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Horizon(String),
    InitialLayer(usize),
    Shape(String),
    Negative { s: usize, a: usize, next: usize },
    RowSum { s: usize, a: usize, sum: f64 },
    LayerSupport { s: usize, a: usize, next: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Horizon(msg) => write!(f, "horizon: {msg}"),
            Violation::InitialLayer(w) => {
                write!(f, "initial layer: |S_0| must be 1, got {w}")
            }
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::Negative { s, a, next } => {
                write!(f, "nonnegative: P({next}|{s},{a}) < 0 or not finite")
            }
            Violation::RowSum { s, a, sum } => write!(f, "row sum: row ({s},{a}) sums to {sum}"),
            Violation::LayerSupport { s, a, next } => write!(
                f,
                "layer support: P({next}|{s},{a}) > 0 outside the next layer"
            ),
        }
    }
}

/// Checks every structural invariant and itemizes the violations.
pub fn validate_mdp(doc: &MdpDocument) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let h = doc.horizon;
    let num_states: usize = doc.layer_sizes.iter().sum();
    if h == 0 {
        out.push(Violation::Horizon("H must be at least 1".into()));
    }
    if doc.layer_sizes.len() != h {
        out.push(Violation::Horizon(format!(
            "layer_sizes has {} entries but H = {h}",
            doc.layer_sizes.len()
        )));
    }
    if let Some(&w) = doc.layer_sizes.first() {
        if w != 1 {
            out.push(Violation::InitialLayer(w));
        }
    }
    if doc.layer_sizes.iter().any(|&w| w == 0) {
        out.push(Violation::Shape("empty layer".into()));
    }
    if h > num_states {
        out.push(Violation::Horizon(format!("H = {h} exceeds S = {num_states}")));
    }
    if doc.num_actions == 0 {
        out.push(Violation::Shape("A must be at least 1".into()));
    }
    if doc.transitions.len() != num_states {
        out.push(Violation::Shape(format!(
            "P has {} state rows, expected {num_states}",
            doc.transitions.len()
        )));
    }
    if !out.is_empty() {
        return Err(out);
    }

    let mut layer_of = Vec::with_capacity(num_states);
    for (layer, &w) in doc.layer_sizes.iter().enumerate() {
        layer_of.extend(std::iter::repeat(layer).take(w));
    }
    for (s, per_action) in doc.transitions.iter().enumerate() {
        if per_action.len() != doc.num_actions {
            out.push(Violation::Shape(format!(
                "P[{s}] has {} actions, expected {}",
                per_action.len(),
                doc.num_actions
            )));
            continue;
        }
        for (a, row) in per_action.iter().enumerate() {
            if row.len() != num_states {
                out.push(Violation::Shape(format!(
                    "P[{s}][{a}] has {} entries, expected {num_states}",
                    row.len()
                )));
                continue;
            }
            let mut sum = 0.0;
            for (next, &p) in row.iter().enumerate() {
                if !(p >= 0.0) || !p.is_finite() {
                    out.push(Violation::Negative { s, a, next });
                    continue;
                }
                if p > 0.0 && layer_of[next] != layer_of[s] + 1 {
                    out.push(Violation::LayerSupport { s, a, next });
                }
                sum += p;
            }
            // Last-layer rows lead to the implicit terminal state and stay empty.
            let is_last = layer_of[s] + 1 == h;
            if !is_last && (sum - 1.0).abs() > ROW_SUM_TOL {
                out.push(Violation::RowSum { s, a, sum });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl MdpDocument {
    pub fn from_mdp(mdp: &LayeredMdp) -> Self {
        let n = mdp.num_states();
        let transitions = (0..n)
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| (0..n).map(|next| mdp.prob(s, a, next)).collect())
                    .collect()
            })
            .collect();
        Self {
            horizon: mdp.horizon(),
            layer_sizes: mdp.layer_sizes(),
            num_actions: mdp.num_actions(),
            transitions,
        }
    }

    pub fn into_mdp(self) -> Result<LayeredMdp> {
        validate_mdp(&self)
            .map_err(|v| Error::InvalidMdp(v.iter().map(ToString::to_string).collect()))?;
        let mut offsets = vec![0];
        for w in &self.layer_sizes {
            offsets.push(offsets.last().unwrap() + w);
        }
        let mut rows = Vec::new();
        let mut s = 0;
        for (layer, &w) in self.layer_sizes.iter().enumerate() {
            for _ in 0..w {
                for a in 0..self.num_actions {
                    if layer + 1 < self.horizon {
                        rows.push(self.transitions[s][a][offsets[layer + 1]..offsets[layer + 2]].to_vec());
                    } else {
                        rows.push(Vec::new());
                    }
                }
                s += 1;
            }
        }
        LayeredMdp::new(&self.layer_sizes, self.num_actions, rows)
    }

    /// Reads and validates an MDP file.
    pub fn load(path: impl AsRef<FsPath>) -> Result<LayeredMdp> {
        let text = std::fs::read_to_string(path)?;
        let doc: MdpDocument = serde_json::from_str(&text)?;
        doc.into_mdp()
    }
}
