//! Edge-list graphs and the per-node features used as histogram axes.

mod features;
mod table;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{
    degrees, hubness_authority, pagerank, triangles, Direction, HitsScores, PageRankScores,
};
pub use table::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    Homogeneous,
    Bipartite,
}

impl std::str::FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homogeneous" | "homo" => Ok(GraphMode::Homogeneous),
            "bipartite" | "bi" => Ok(GraphMode::Bipartite),
            other => Err(Error::Invalid(format!("unknown graph mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// A directed multigraph with contiguous node ids.
///
/// In bipartite mode ids `0..n_left` are the source side and
/// `n_left..n_left + n_right` the target side; every edge runs from the
/// source side to the target side.
#[derive(Debug, Clone)]
pub struct Graph {
    mode: GraphMode,
    n_left: usize,
    n_right: usize,
    edges: Vec<(u32, u32)>,
    weights: Option<Vec<f64>>,
    labels: Vec<String>,
}

impl Graph {
    /// Homogeneous graph over `n` nodes labelled by their index.
    pub fn homogeneous(n: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::from_parts(GraphMode::Homogeneous, n, 0, edges, None, labels)
    }

    /// Bipartite graph; edges are given in global ids (target ids offset
    /// by `n_left`).
    pub fn bipartite(n_left: usize, n_right: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        let labels = (0..n_left)
            .map(|i| i.to_string())
            .chain((0..n_right).map(|i| i.to_string()))
            .collect();
        Self::from_parts(GraphMode::Bipartite, n_left, n_right, edges, None, labels)
    }

    fn from_parts(
        mode: GraphMode,
        n_left: usize,
        n_right: usize,
        edges: Vec<(u32, u32)>,
        weights: Option<Vec<f64>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let n = n_left + n_right;
        for &(u, v) in &edges {
            let (u, v) = (u as usize, v as usize);
            if u >= n || v >= n {
                return Err(Error::Structure(format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if mode == GraphMode::Bipartite && !(u < n_left && v >= n_left) {
                return Err(Error::Structure(format!(
                    "edge ({u}, {v}) does not cross the bipartition"
                )));
            }
        }
        Ok(Self { mode, n_left, n_right, edges, weights, labels })
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn node_count(&self) -> usize {
        self.n_left + self.n_right
    }

    pub fn side_count(&self, side: Side) -> usize {
        match (self.mode, side) {
            (GraphMode::Homogeneous, _) => self.n_left,
            (GraphMode::Bipartite, Side::Left) => self.n_left,
            (GraphMode::Bipartite, Side::Right) => self.n_right,
        }
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Original label of every internal id (the remap table).
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Global ids belonging to `side` (all nodes for homogeneous graphs).
    pub fn side_range(&self, side: Side) -> std::ops::Range<usize> {
        match (self.mode, side) {
            (GraphMode::Homogeneous, _) => 0..self.n_left,
            (GraphMode::Bipartite, Side::Left) => 0..self.n_left,
            (GraphMode::Bipartite, Side::Right) => self.n_left..self.n_left + self.n_right,
        }
    }

    /// Keep only the edges whose endpoints both satisfy `keep`, then drop
    /// nodes left without edges. Used for node subsampling.
    pub fn induced(&self, keep: impl Fn(usize) -> bool) -> Self {
        let n = self.node_count();
        let mut alive = vec![false; n];
        let mut edges = Vec::new();
        let mut weights = self.weights.as_ref().map(|_| Vec::new());
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if keep(u as usize) && keep(v as usize) {
                alive[u as usize] = true;
                alive[v as usize] = true;
                edges.push((u, v));
                if let (Some(out), Some(w)) = (weights.as_mut(), self.weights.as_ref()) {
                    out.push(w[i]);
                }
            }
        }
        let mut remap = vec![u32::MAX; n];
        let mut labels = Vec::new();
        let mut n_left = 0;
        for id in 0..n {
            if alive[id] {
                remap[id] = labels.len() as u32;
                labels.push(self.labels[id].clone());
                if id < self.n_left {
                    n_left += 1;
                }
            }
        }
        let n_right = labels.len() - n_left;
        let edges = edges.into_iter().map(|(u, v)| (remap[u as usize], remap[v as usize])).collect();
        let (n_left, n_right) = match self.mode {
            GraphMode::Homogeneous => (labels.len(), 0),
            GraphMode::Bipartite => (n_left, n_right),
        };
        Self { mode: self.mode, n_left, n_right, edges, weights, labels }
    }

    /// Writes the id-remap table as `label<TAB>internal_id<TAB>side`.
    pub fn write_remap(&self, path: &Path) -> Result<()> {
        let mut out = String::from("label\tinternal_id\tside\n");
        for (id, label) in self.labels.iter().enumerate() {
            let side = if self.mode == GraphMode::Bipartite && id >= self.n_left {
                "right"
            } else {
                "left"
            };
            out.push_str(&format!("{label}\t{id}\t{side}\n"));
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a whitespace separated `src dst [weight]` edge list.
///
/// Ids are arbitrary tokens remapped to contiguous internal ids in order of
/// first appearance. Blank lines and lines starting with `#` or `%` are
/// skipped. In bipartite mode sources and targets are separate id spaces.
pub fn load_edge_list(path: &Path, mode: GraphMode) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, mode)
}

pub fn parse_edge_list(text: &str, mode: GraphMode) -> Result<Graph> {
    let mut left: HashMap<&str, u32> = HashMap::new();
    let mut right: HashMap<&str, u32> = HashMap::new();
    let mut left_labels: Vec<&str> = Vec::new();
    let mut right_labels: Vec<&str> = Vec::new();
    let mut raw_edges = Vec::new();
    let mut weights = Vec::new();
    let mut any_weight = false;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `src dst [weight]`, got {} fields", fields.len()),
            });
        }
        let weight = match fields.get(2) {
            Some(w) => {
                any_weight = true;
                let w: f64 = w.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad weight `{w}`"),
                })?;
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("weight must be finite and non-negative, got {w}"),
                    });
                }
                w
            }
            None => 1.0,
        };
        let (src, dst) = (fields[0], fields[1]);
        let u = intern(&mut left, &mut left_labels, src);
        let v = match mode {
            GraphMode::Homogeneous => intern(&mut left, &mut left_labels, dst),
            GraphMode::Bipartite => intern(&mut right, &mut right_labels, dst),
        };
        raw_edges.push((u, v));
        weights.push(weight);
    }

    let n_left = left_labels.len();
    let (n_right, edges) = match mode {
        GraphMode::Homogeneous => (0, raw_edges),
        GraphMode::Bipartite => (
            right_labels.len(),
            raw_edges.into_iter().map(|(u, v)| (u, v + n_left as u32)).collect(),
        ),
    };
    let labels = left_labels.iter().chain(&right_labels).map(|s| s.to_string()).collect();
    let weights = any_weight.then_some(weights);
    Graph::from_parts(mode, n_left, n_right, edges, weights, labels)
}

fn intern<'a>(map: &mut HashMap<&'a str, u32>, labels: &mut Vec<&'a str>, key: &'a str) -> u32 {
    *map.entry(key).or_insert_with(|| {
        labels.push(key);
        (labels.len() - 1) as u32
    })
}
