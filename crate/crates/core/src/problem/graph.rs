use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Retry budget for the pairing construction.
pub const MAX_PAIRING_RETRIES: usize = 10_000;

/// Undirected connected graph stored as closed neighborhoods.
///
/// `neighborhood(i)` is sorted ascending and always contains `i`. That order
/// is the stacking order for every neighborhood vector in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighborhoods: Vec<Vec<usize>>,
    max_degree: usize,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Self-loops and duplicate
    /// edges are rejected, as is a disconnected result.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        let mut sets: Vec<BTreeSet<usize>> = (0..node_count).map(|i| BTreeSet::from([i])).collect();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Index(format!("edge ({a}, {b}) out of range for {node_count} nodes")));
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop at node {a}")));
            }
            if !sets[a].insert(b) || !sets[b].insert(a) {
                return Err(Error::Parameter(format!("duplicate edge ({a}, {b})")));
            }
        }
        let neighborhoods: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let graph = Self::from_sorted(neighborhoods);
        if !graph.is_connected() {
            return Err(Error::Parameter("graph is not connected".into()));
        }
        Ok(graph)
    }

    /// Builds a graph from closed neighborhoods, checking every invariant.
    pub fn from_neighborhoods(mut neighborhoods: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighborhoods.len();
        if n == 0 {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        for (i, nb) in neighborhoods.iter_mut().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            if nb.binary_search(&i).is_err() {
                return Err(Error::Parameter(format!("node {i} missing from its own neighborhood")));
            }
            if nb.last().is_some_and(|&j| j >= n) {
                return Err(Error::Index(format!("neighbor of node {i} out of range")));
            }
        }
        for i in 0..n {
            for &j in &neighborhoods[i] {
                if neighborhoods[j].binary_search(&i).is_err() {
                    return Err(Error::Parameter(format!("edge ({i}, {j}) is not symmetric")));
                }
            }
        }
        let graph = Self::from_sorted(neighborhoods);
        if !graph.is_connected() {
            return Err(Error::Parameter("graph is not connected".into()));
        }
        Ok(graph)
    }

    fn from_sorted(neighborhoods: Vec<Vec<usize>>) -> Self {
        let max_degree = neighborhoods.iter().map(Vec::len).max().unwrap_or(0);
        Self { neighborhoods, max_degree }
    }

    pub fn node_count(&self) -> usize {
        self.neighborhoods.len()
    }

    /// Closed neighborhood 𝒩(i), ascending.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// `D = max_i |𝒩(i)|` (self included).
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighborhoods[i].binary_search(&j).is_ok()
    }

    /// Position of `j` inside the stacked neighborhood of `i`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.neighborhoods[i].binary_search(&j).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighborhoods.iter().map(|nb| nb.len() - 1).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighborhoods[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

/// Random connected simple `d`-regular graph on `n` nodes.
///
/// Pairing model: `n·d` stubs are matched uniformly at random, drawing one pair
/// at a time and rejecting pairs that would form a self-loop or a repeated
/// edge. A matching that gets stuck, or a disconnected result, is discarded and
/// the construction restarts, up to [`MAX_PAIRING_RETRIES`] times.
pub fn generate_regular_graph(n: usize, d: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Parameter(format!("need N >= 2, got {n}")));
    }
    if d == 0 || d >= n {
        return Err(Error::Parameter(format!("need 0 < d < N, got d = {d}, N = {n}")));
    }
    if (n * d) % 2 == 1 {
        return Err(Error::Parameter(format!("N·d = {} is odd", n * d)));
    }
    let mut rng = rng::stream(seed, Purpose::Graph, n as u64, d as u64, 0);
    for _ in 0..MAX_PAIRING_RETRIES {
        if let Some(edges) = try_pairing(n, d, &mut rng) {
            if let Ok(graph) = Graph::from_edges(n, &edges) {
                return Ok(graph);
            }
        }
    }
    Err(Error::Generation(format!(
        "no connected simple {d}-regular graph on {n} nodes after {MAX_PAIRING_RETRIES} attempts"
    )))
}

fn try_pairing<R: Rng>(n: usize, d: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut edges = Vec::with_capacity(n * d / 2);
    let admissible = |a: usize, b: usize, adj: &[BTreeSet<usize>]| a != b && !adj[a].contains(&b);

    while !stubs.is_empty() {
        let len = stubs.len();
        let mut picked = None;
        for _ in 0..(8 * len) {
            let p = rng.random_range(0..len);
            let q = rng.random_range(0..len);
            if p != q && admissible(stubs[p], stubs[q], &adjacent) {
                picked = Some((p, q));
                break;
            }
        }
        if picked.is_none() {
            // dead end unless some admissible pair remains
            let exists = (0..len).any(|p| (p + 1..len).any(|q| admissible(stubs[p], stubs[q], &adjacent)));
            if !exists {
                return None;
            }
            continue;
        }
        let (p, q) = picked.unwrap();
        let (a, b) = (stubs[p], stubs[q]);
        adjacent[a].insert(b);
        adjacent[b].insert(a);
        edges.push((a.min(b), a.max(b)));
        let (hi, lo) = if p > q { (p, q) } else { (q, p) };
        stubs.swap_remove(hi);
        stubs.swap_remove(lo);
    }
    Some(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bfs_reachable(g: &Graph) -> usize {
        // independent oracle: repeated relaxation instead of a queue
        let n = g.node_count();
        let mut reach = vec![false; n];
        reach[0] = true;
        loop {
            let mut changed = false;
            for i in 0..n {
                if reach[i] {
                    for &j in g.neighborhood(i) {
                        if !reach[j] {
                            reach[j] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        reach.iter().filter(|&&r| r).count()
    }

    #[test]
    fn forty_node_eight_regular() {
        let g = generate_regular_graph(40, 8, 7).unwrap();
        assert_eq!(g.node_count(), 40);
        for i in 0..40 {
            assert_eq!(g.neighborhood(i).len(), 9);
        }
        assert_eq!(g.max_degree(), 9);
        assert_eq!(g.edge_count(), 160);
    }

    #[test]
    fn two_nodes_single_edge() {
        let g = generate_regular_graph(2, 1, 0).unwrap();
        assert_eq!(g.neighborhood(0), &[0, 1]);
        assert_eq!(g.neighborhood(1), &[0, 1]);
        assert!(g.is_connected());
    }

    #[test]
    fn six_cycle_is_connected() {
        let g = generate_regular_graph(6, 2, 3).unwrap();
        assert_eq!(bfs_reachable(&g), 6);
        for i in 0..6 {
            assert_eq!(g.neighborhood(i).len(), 3);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_regular_graph(20, 4, 11).unwrap();
        let b = generate_regular_graph(20, 4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_parameters() {
        assert!(matches!(generate_regular_graph(5, 3, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_regular_graph(4, 4, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_regular_graph(1, 0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn symmetric_and_self_inclusive() {
        let g = generate_regular_graph(30, 5, 2).unwrap();
        for i in 0..30 {
            assert!(g.contains(i, i));
            for &j in g.neighborhood(i) {
                assert!(g.contains(j, i));
            }
        }
    }

    #[test]
    fn edge_list_validation() {
        assert!(Graph::from_edges(3, &[(0, 1), (1, 2)]).is_ok());
        assert!(Graph::from_edges(3, &[(0, 1)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 1), (1, 0), (1, 2)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 0)]).is_err());
    }
}
