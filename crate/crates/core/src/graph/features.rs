use rayon::prelude::*;

use super::{Graph, GraphMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Total,
}

/// Degree of every node (multi-edges counted, weights ignored).
pub fn degrees(g: &Graph, direction: Direction) -> Vec<f64> {
    let mut deg = vec![0u64; g.node_count()];
    for &(u, v) in g.edges() {
        if matches!(direction, Direction::Out | Direction::Total) {
            deg[u as usize] += 1;
        }
        if matches!(direction, Direction::In | Direction::Total) {
            deg[v as usize] += 1;
        }
    }
    deg.into_iter().map(|d| d as f64).collect()
}

#[derive(Debug, Clone)]
pub struct PageRankScores {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power-iteration PageRank with uniform teleport; the mass of dangling
/// nodes is spread uniformly. Stops when the L1 change drops below `tol`.
pub fn pagerank(g: &Graph, damping: f64, tol: f64, max_iters: usize) -> Result<PageRankScores> {
    if g.mode() != GraphMode::Homogeneous {
        return Err(Error::Invalid("pagerank needs a homogeneous graph".into()));
    }
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::Invalid(format!("damping must lie in (0, 1), got {damping}")));
    }
    let n = g.node_count();
    if n == 0 {
        return Ok(PageRankScores { scores: Vec::new(), iterations: 0, converged: true });
    }
    let out = degrees(g, Direction::Out);
    let incoming = in_lists(g);
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&u| out[u] == 0.0).map(|u| rank[u]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let next: Vec<f64> = incoming
            .par_iter()
            .map(|srcs| base + damping * srcs.iter().map(|&u| rank[u as usize] / out[u as usize]).sum::<f64>())
            .collect();
        let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("pagerank did not converge within {max_iters} iterations");
    }
    Ok(PageRankScores { scores: rank, iterations, converged })
}

#[derive(Debug, Clone)]
pub struct HitsScores {
    /// First left singular vector of the adjacency matrix.
    pub hub: Vec<f64>,
    /// First right singular vector.
    pub authority: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The adjacency matrix has no edges; both vectors are zero.
    pub zero_matrix: bool,
}

/// Hubness and authority by alternating power iteration on A·Aᵀ and Aᵀ·A.
///
/// Both vectors have unit 2-norm and the entry of largest magnitude is
/// positive.
pub fn hubness_authority(g: &Graph, tol: f64, max_iters: usize) -> HitsScores {
    let n = g.node_count();
    if g.edges().is_empty() {
        return HitsScores {
            hub: vec![0.0; n],
            authority: vec![0.0; n],
            iterations: 0,
            converged: true,
            zero_matrix: true,
        };
    }
    let outgoing = out_lists(g);
    let incoming = in_lists(g);
    let mut hub = vec![1.0 / (n as f64).sqrt(); n];
    let mut auth = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        auth = incoming.par_iter().map(|srcs| srcs.iter().map(|&u| hub[u as usize]).sum()).collect();
        normalize(&mut auth);
        let next: Vec<f64> =
            outgoing.par_iter().map(|dsts| dsts.iter().map(|&v| auth[v as usize]).sum()).collect();
        let mut next = next;
        normalize(&mut next);
        let delta = next.iter().zip(&hub).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        hub = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("hubness/authority did not converge within {max_iters} iterations");
    }
    // auth consistent with the final hub vector
    auth = incoming.iter().map(|srcs| srcs.iter().map(|&u| hub[u as usize]).sum()).collect();
    normalize(&mut auth);
    fix_sign(&mut hub);
    fix_sign(&mut auth);
    HitsScores { hub, authority: auth, iterations, converged, zero_matrix: false }
}

/// Per-node count of triangles in the undirected simple graph underlying
/// `g` (self-loops and duplicate edges dropped).
pub fn triangles(g: &Graph) -> Result<Vec<f64>> {
    if g.mode() != GraphMode::Homogeneous {
        return Err(Error::Invalid("triangle counts need a homogeneous graph".into()));
    }
    let n = g.node_count();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, v) in g.edges() {
        if u != v {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut count = vec![0u64; n];
    for u in 0..n {
        let nu = &adj[u];
        for &v in nu.iter().filter(|&&v| v as usize > u) {
            let nv = &adj[v as usize];
            // common neighbours w > v, so each triangle u < v < w is seen once
            let (mut i, mut j) = (0, 0);
            while i < nu.len() && j < nv.len() {
                match nu[i].cmp(&nv[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let w = nu[i];
                        if w > v {
                            count[u] += 1;
                            count[v as usize] += 1;
                            count[w as usize] += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    Ok(count.into_iter().map(|c| c as f64).collect())
}

fn out_lists(g: &Graph) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); g.node_count()];
    for &(u, v) in g.edges() {
        lists[u as usize].push(v);
    }
    lists
}

fn in_lists(g: &Graph) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); g.node_count()];
    for &(u, v) in g.edges() {
        lists[v as usize].push(u);
    }
    lists
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

fn fix_sign(x: &mut [f64]) {
    let pivot = x.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if pivot < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}
