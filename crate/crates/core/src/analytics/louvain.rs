//! Louvain modularity maximization on a small dense weighted graph.
//!
//! Nodes are visited in index order, so the result is deterministic.

use serde::{Deserialize, Serialize};

/// Minimum modularity gain for a move or a pass to count.
pub const MIN_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community id per node, numbered by first appearance.
    pub communities: Vec<usize>,
    /// Modularity of the original graph after each pass.
    pub modularity_per_pass: Vec<f64>,
}

impl Partition {
    pub fn n_communities(&self) -> usize {
        self.communities.iter().max().map_or(0, |m| m + 1)
    }

    pub fn modularity(&self) -> f64 {
        self.modularity_per_pass.last().copied().unwrap_or(0.0)
    }
}

/// Modularity of `communities` on the symmetric weight matrix `w`.
pub fn modularity(w: &[Vec<f64>], communities: &[usize]) -> f64 {
    let n = w.len();
    let degree: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    if two_m <= 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if communities[i] == communities[j] {
                q += w[i][j] - degree[i] * degree[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Local-move phase on one level; returns the community of each node.
fn local_moves(w: &[Vec<f64>]) -> (Vec<usize>, bool) {
    let n = w.len();
    let degree: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut total: Vec<f64> = degree.clone();
    let mut moved_any = false;
    if two_m <= 0.0 {
        return (comm, false);
    }
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = comm[i];
            total[own] -= degree[i];
            // Weight from i to each community, excluding its self-loop.
            let mut links = vec![0.0; n];
            for j in 0..n {
                if j != i && w[i][j] != 0.0 {
                    links[comm[j]] += w[i][j];
                }
            }
            let gain = |c: usize| links[c] - total[c] * degree[i] / two_m;
            let mut best = own;
            let mut best_gain = gain(own);
            for c in 0..n {
                if c != own && links[c] > 0.0 {
                    let g = gain(c);
                    if g > best_gain + MIN_GAIN {
                        best = c;
                        best_gain = g;
                    }
                }
            }
            total[best] += degree[i];
            if best != own {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (renumber(&comm), moved_any)
}

fn renumber(comm: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    comm.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

fn aggregate(w: &[Vec<f64>], comm: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; k]; k];
    for (i, row) in w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[comm[i]][comm[j]] += v;
        }
    }
    out
}

/// Two-phase Louvain: local moves, then aggregation, repeated until a pass
/// gains no more than [`MIN_GAIN`].
pub fn louvain(w: &[Vec<f64>]) -> Partition {
    let n = w.len();
    let mut node_comm: Vec<usize> = (0..n).collect();
    let mut level = w.to_vec();
    let mut history = Vec::new();
    let mut current = modularity(w, &node_comm);
    loop {
        let (comm, moved) = local_moves(&level);
        if !moved {
            break;
        }
        let k = comm.iter().max().map_or(0, |m| m + 1);
        let candidate: Vec<usize> = node_comm.iter().map(|&c| comm[c]).collect();
        let q = modularity(w, &candidate);
        if q - current <= MIN_GAIN {
            break;
        }
        node_comm = candidate;
        current = q;
        history.push(q);
        level = aggregate(&level, &comm, k);
    }
    if history.is_empty() {
        history.push(current);
    }
    Partition { communities: renumber(&node_comm), modularity_per_pass: history }
}
