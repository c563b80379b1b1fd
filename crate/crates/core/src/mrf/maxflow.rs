//! Dinic max-flow on real capacities.

use std::collections::VecDeque;

/// Residual capacities at or below this are treated as saturated.
pub const FLOW_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: f64,
}

#[derive(Clone, Debug)]
pub struct FlowGraph {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl FlowGraph {
    pub fn new(n: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); n],
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Adds `u -> v` with capacity `cap` and `v -> u` with capacity `rev_cap`.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, rev_cap: f64) {
        let id = self.edges.len();
        self.edges.push(Edge { to: v, cap });
        self.edges.push(Edge {
            to: u,
            cap: rev_cap,
        });
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
    }

    fn levels(&self, s: usize) -> Vec<i64> {
        let mut level = vec![-1i64; self.adj.len()];
        let mut queue = VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let Edge { to, cap } = self.edges[e];
                if cap > FLOW_EPS && level[to] < 0 {
                    level[to] = level[u] + 1;
                    queue.push_back(to);
                }
            }
        }
        level
    }

    /// Pushes a maximum flow from `s` to `t` and returns its value.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let mut level = self.levels(s);
            if level[t] < 0 {
                return total;
            }
            let mut next = vec![0usize; self.adj.len()];
            // Iterative DFS over the level graph with current-arc pointers.
            let mut path: Vec<usize> = Vec::new();
            let mut v = s;
            loop {
                if v == t {
                    let push = path
                        .iter()
                        .map(|&e| self.edges[e].cap)
                        .fold(f64::INFINITY, f64::min);
                    for &e in &path {
                        self.edges[e].cap -= push;
                        self.edges[e ^ 1].cap += push;
                    }
                    total += push;
                    path.clear();
                    v = s;
                    continue;
                }
                let mut advanced = false;
                while next[v] < self.adj[v].len() {
                    let e = self.adj[v][next[v]];
                    let Edge { to, cap } = self.edges[e];
                    if cap > FLOW_EPS && level[to] == level[v] + 1 {
                        path.push(e);
                        v = to;
                        advanced = true;
                        break;
                    }
                    next[v] += 1;
                }
                if advanced {
                    continue;
                }
                // Dead end: retire v and retreat.
                level[v] = -1;
                match path.pop() {
                    Some(e) => {
                        v = self.edges[e ^ 1].to;
                        next[v] += 1;
                    }
                    None => break,
                }
            }
        }
    }

    /// Nodes reachable from `s` through unsaturated residual edges.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l >= 0).collect()
    }
}
