//! Coreference graph and coreference attention matrix over token positions.
//!
//! Both structures index mentions by their first token. The graph links each
//! mention to its predecessor in its cluster; the attention matrix spreads
//! each covered token's weight uniformly over its cluster.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::coref::CorefAnnotation;
use crate::dialogue::first_token_index;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorefGraph {
    n: usize,
    adjacency: Vec<bool>,
}

impl CorefGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    fn link(&mut self, i: usize, j: usize) {
        self.adjacency[i * self.n + j] = true;
        self.adjacency[j * self.n + i] = true;
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    /// Undirected edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }

    /// Row-normalized neighbourhood matrix `M` with `M[i][j] = 1/|N_i|` for
    /// each neighbour `j`. Isolated nodes use themselves as neighbourhood.
    pub fn mean_aggregation(&self) -> Tensor {
        let mut m = Tensor::zeros(self.n, self.n);
        for i in 0..self.n {
            let nbrs: Vec<usize> = self.neighbors(i).collect();
            if nbrs.is_empty() {
                m.set(i, i, 1.0);
            } else {
                let w = 1.0 / nbrs.len() as f64;
                for j in nbrs {
                    m.set(i, j, w);
                }
            }
        }
        m
    }
}

/// Ordered distinct first-token positions of one cluster.
fn cluster_heads(cluster: &[crate::dialogue::Span]) -> Vec<usize> {
    let set: BTreeSet<usize> = cluster.iter().map(|&s| first_token_index(s)).collect();
    set.into_iter().collect()
}

pub fn build_coref_graph(a: &CorefAnnotation, n: usize) -> Result<CorefGraph> {
    a.validate(n)?;
    let mut g = CorefGraph::empty(n);
    for cluster in &a.clusters {
        let mut heads: Vec<usize> = cluster.iter().map(|&s| first_token_index(s)).collect();
        heads.sort_unstable();
        if let Some(w) = heads.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DegenerateCluster(w[0]));
        }
        for w in heads.windows(2) {
            g.link(w[0], w[1]);
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorefAttentionMatrix {
    n: usize,
    weights: Tensor,
    #[serde(skip)]
    covered: Vec<bool>,
}

impl CorefAttentionMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            weights: Tensor::identity(n),
            covered: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// `true` for rows that belong to a cluster.
    pub fn covered(&self) -> &[bool] {
        &self.covered
    }
}

pub fn build_coref_attention(a: &CorefAnnotation, n: usize) -> Result<CorefAttentionMatrix> {
    a.validate(n)?;
    let mut out = CorefAttentionMatrix::identity(n);
    for cluster in &a.clusters {
        let heads = cluster_heads(cluster);
        if let Some(&clash) = heads.iter().find(|&&h| out.covered[h]) {
            return Err(Error::OverlappingClusters(clash));
        }
        for &h in &heads {
            out.covered[h] = true;
        }
    }
    for cluster in &a.clusters {
        let heads = cluster_heads(cluster);
        let w = 1.0 / heads.len() as f64;
        for &i in &heads {
            out.weights.row_mut(i).fill(0.0);
            for &j in &heads {
                out.weights.set(i, j, w);
            }
        }
    }
    Ok(out)
}
