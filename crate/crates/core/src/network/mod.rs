//! Undirected contact networks in compressed adjacency form.

mod bter;
mod io;

pub use bter::{generate_bter, generate_bter_with_report, BterReport, BterSpec};
pub use io::{load_edge_list, write_edge_list, write_network_files, NetworkMeta};

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable undirected graph without self-loops or parallel edges.
///
/// Neighbor lists are sorted ascending. Every node carries a worker label;
/// labels are contiguous blocks of node ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContactNetwork {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    edge_count: usize,
    workers: usize,
}

/// Realized statistics of a network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub mean_degree: f64,
    pub clustering: f64,
}

impl ContactNetwork {
    /// Builds a network from an edge list. Self-loops, duplicate edges and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(node_count: usize, edges: &[(u32, u32)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("network needs at least one node"));
        }
        if node_count > u32::MAX as usize {
            return Err(Error::invalid("node count exceeds u32 ids"));
        }
        let mut degree = vec![0usize; node_count];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
            if u as usize >= node_count || v as usize >= node_count {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..node_count].to_vec();
        let mut neighbors = vec![0u32; offsets[node_count]];
        for &(u, v) in edges {
            neighbors[fill[u as usize]] = v;
            fill[u as usize] += 1;
            neighbors[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for v in 0..node_count {
            let list = &mut neighbors[offsets[v]..offsets[v + 1]];
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate edge at node {v}")));
            }
        }
        Ok(ContactNetwork {
            offsets,
            neighbors,
            edge_count: edges.len(),
            workers: 1,
        })
    }

    /// The complete graph `K_n`.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("complete graph needs n >= 2"));
        }
        if n > u32::MAX as usize {
            return Err(Error::invalid("node count exceeds u32 ids"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(n * (n - 1));
        offsets.push(0);
        for v in 0..n as u32 {
            neighbors.extend((0..n as u32).filter(|&u| u != v));
            offsets.push(neighbors.len());
        }
        Ok(ContactNetwork {
            offsets,
            neighbors,
            edge_count: n * (n - 1) / 2,
            workers: 1,
        })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v as usize > u)
                .map(move |&v| (u as u32, v))
        })
    }

    /// `2E / V`.
    pub fn avg_degree(&self) -> f64 {
        2.0 * self.edge_count as f64 / self.node_count() as f64
    }

    /// Closed triplets centered on `v`, i.e. edges among its neighbors.
    pub fn triangles_at(&self, v: usize) -> usize {
        let nv = self.neighbors(v);
        let mut closed = 0;
        for &u in nv {
            closed += sorted_intersection_len(nv, self.neighbors(u as usize));
        }
        closed / 2
    }

    /// Local clustering of `v`; zero when `deg(v) < 2`.
    pub fn local_clustering(&self, v: usize) -> f64 {
        let d = self.degree(v);
        if d < 2 {
            return 0.0;
        }
        let pairs = (d * (d - 1) / 2) as f64;
        self.triangles_at(v) as f64 / pairs
    }

    /// Mean local clustering over all nodes, with nodes of degree below two
    /// counted as zero.
    pub fn global_clustering(&self) -> f64 {
        let n = self.node_count();
        if n >= 3 && self.edge_count == n * (n - 1) / 2 {
            // every pair adjacent
            return 1.0;
        }
        let local: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|v| self.local_clustering(v))
            .collect();
        local.iter().sum::<f64>() / n as f64
    }

    pub fn stats(&self) -> NetworkStats {
        NetworkStats {
            node_count: self.node_count(),
            edge_count: self.edge_count,
            mean_degree: self.avg_degree(),
            clustering: self.global_clustering(),
        }
    }

    /// Relabels nodes into `workers` contiguous, balanced blocks of ids.
    pub fn partition(mut self, workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("workers must be >= 1"));
        }
        self.workers = workers;
        Ok(self)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Node ids owned by worker `p`. The first `n % workers` blocks hold one
    /// extra node.
    pub fn partition_range(&self, p: usize) -> Range<usize> {
        let n = self.node_count();
        let w = self.workers;
        let base = n / w;
        let extra = n % w;
        let start = p * base + p.min(extra);
        let len = base + usize::from(p < extra);
        start..start + len
    }

    pub fn partition_of(&self, v: usize) -> usize {
        let n = self.node_count();
        let w = self.workers;
        let base = n / w;
        let extra = n % w;
        let big = extra * (base + 1);
        if v < big {
            v / (base + 1)
        } else {
            extra + (v - big) / base.max(1)
        }
    }

    pub fn partition_labels(&self) -> Vec<usize> {
        (0..self.node_count()).map(|v| self.partition_of(v)).collect()
    }
}

fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                k += 1;
                i += 1;
                j += 1;
            }
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> ContactNetwork {
        ContactNetwork::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn star(leaves: u32) -> ContactNetwork {
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        ContactNetwork::from_edges(leaves as usize + 1, &edges).unwrap()
    }

    #[test]
    fn average_degree_small_graphs() {
        assert_eq!(ContactNetwork::complete(4).unwrap().avg_degree(), 3.0);
        assert!((path3().avg_degree() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(ContactNetwork::complete(10).unwrap().avg_degree(), 9.0);
    }

    #[test]
    fn complete_graph_edge_counts() {
        assert_eq!(ContactNetwork::complete(3).unwrap().edge_count(), 3);
        let k = ContactNetwork::complete(4000).unwrap();
        assert_eq!(k.edge_count(), 7_998_000);
        assert_eq!(k.degree(17), 3999);
        assert!(ContactNetwork::complete(1).is_err());
    }

    #[test]
    fn clustering_small_graphs() {
        assert_eq!(ContactNetwork::complete(3).unwrap().global_clustering(), 1.0);
        assert_eq!(star(5).global_clustering(), 0.0);
        assert_eq!(path3().global_clustering(), 0.0);
        // triangle plus pendant: nodes 0,1 -> 1, node 2 -> 1/3, node 3 -> 0
        let g = ContactNetwork::from_edges(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        assert!((g.global_clustering() - (1.0 + 1.0 + 1.0 / 3.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(ContactNetwork::from_edges(3, &[(1, 1)]).is_err());
        assert!(ContactNetwork::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(ContactNetwork::from_edges(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn partition_blocks() {
        let g = ContactNetwork::complete(10).unwrap();
        let one = g.clone().partition(1).unwrap();
        assert!(one.partition_labels().iter().all(|&p| p == 0));
        let two = g.clone().partition(2).unwrap();
        assert_eq!(two.partition_range(0), 0..5);
        assert_eq!(two.partition_range(1), 5..10);
        let three = g.partition(3).unwrap();
        let labels = three.partition_labels();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        for p in 0..3 {
            for v in three.partition_range(p) {
                assert_eq!(three.partition_of(v), p);
            }
        }
        assert!(ContactNetwork::complete(4).unwrap().partition(0).is_err());
    }

    #[test]
    fn more_workers_than_nodes() {
        let g = ContactNetwork::complete(3).unwrap().partition(5).unwrap();
        let labels = g.partition_labels();
        assert_eq!(labels, vec![0, 1, 2]);
        assert_eq!(g.partition_range(4), 3..3);
    }
}
