//! Exact binary minimizer of the rounded partition energy via s-t min cut.
//!
//! For a binary one-hot labelling, both label planes share the same gradient
//! magnitude, so the perimeter term is `lambda * g(x) * f(z, z_right, z_down)`
//! with `f = sqrt([z != r] + [z != d])`. Expanding `f` as a pseudo-boolean
//! polynomial gives
//! `sqrt2 z + r + d - sqrt2 z r - sqrt2 z d - (2 - sqrt2) r d`,
//! whose pairwise coefficients are all non-positive, hence graph
//! representable.

use std::collections::VecDeque;

const EPS: f64 = 1e-12;

struct Edge {
    to: usize,
    cap: f64,
}

pub struct Dinic {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i64>,
    next: Vec<usize>,
}

impl Dinic {
    pub fn new(nodes: usize) -> Self {
        Dinic { edges: Vec::new(), adj: vec![Vec::new(); nodes], level: vec![0; nodes], next: vec![0; nodes] }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        if cap <= 0.0 {
            return;
        }
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0 });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let to = self.edges[e].to;
                if self.edges[e].cap > EPS && self.level[to] < 0 {
                    self.level[to] = self.level[v] + 1;
                    queue.push_back(to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, pushed: f64) -> f64 {
        if v == t {
            return pushed;
        }
        while self.next[v] < self.adj[v].len() {
            let e = self.adj[v][self.next[v]];
            let to = self.edges[e].to;
            if self.edges[e].cap > EPS && self.level[to] == self.level[v] + 1 {
                let got = self.dfs(to, t, pushed.min(self.edges[e].cap));
                if got > 0.0 {
                    self.edges[e].cap -= got;
                    self.edges[e ^ 1].cap += got;
                    return got;
                }
            }
            self.next[v] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let to = self.edges[e].to;
                if self.edges[e].cap > EPS && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }
}

/// Binary instance: `h0`, `h1` label costs, `g` weights, all row-major.
pub struct BinaryInstance {
    pub width: usize,
    pub height: usize,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub g: Vec<f64>,
    pub lambda: f64,
}

impl BinaryInstance {
    /// Direct evaluation with the square-root perimeter.
    pub fn energy(&self, z: &[bool]) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut e = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                e += if z[i] { self.h1[i] } else { self.h0[i] };
                let a = if x + 1 < w && z[i] != z[i + 1] { 1.0 } else { 0.0 };
                let b = if y + 1 < h && z[i] != z[i + w] { 1.0 } else { 0.0 };
                e += self.lambda * self.g[i] * f64::sqrt(a + b);
            }
        }
        e
    }

    /// Globally optimal labelling (`true` = label 1) and its energy.
    pub fn minimize(&self) -> (Vec<bool>, f64) {
        let (w, h) = (self.width, self.height);
        let nodes = w * h;
        let (s, t) = (nodes, nodes + 1);
        let mut unary = vec![0.0; nodes];
        let mut constant = 0.0;
        let mut graph = Dinic::new(nodes + 2);
        // Pairwise b * z_i * z_j with b <= 0: unary b on z_i, cost -b when
        // z_i = 1 and z_j = 0 (edge j -> i with z = 1 on the sink side).
        let pair = |graph: &mut Dinic, unary: &mut Vec<f64>, i: usize, j: usize, b: f64| {
            assert!(b <= 0.0);
            unary[i] += b;
            graph.add_edge(j, i, -b);
        };
        let sqrt2 = std::f64::consts::SQRT_2;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                constant += self.h0[i];
                unary[i] += self.h1[i] - self.h0[i];
                let c = self.lambda * self.g[i];
                match (x + 1 < w, y + 1 < h) {
                    (true, true) => {
                        let (r, d) = (i + 1, i + w);
                        unary[i] += c * sqrt2;
                        unary[r] += c;
                        unary[d] += c;
                        pair(&mut graph, &mut unary, i, r, -c * sqrt2);
                        pair(&mut graph, &mut unary, i, d, -c * sqrt2);
                        pair(&mut graph, &mut unary, r, d, -c * (2.0 - sqrt2));
                    }
                    (true, false) | (false, true) => {
                        let j = if x + 1 < w { i + 1 } else { i + w };
                        unary[i] += c;
                        unary[j] += c;
                        pair(&mut graph, &mut unary, i, j, -2.0 * c);
                    }
                    (false, false) => {}
                }
            }
        }
        for (i, &a) in unary.iter().enumerate() {
            if a > 0.0 {
                graph.add_edge(s, i, a);
            } else if a < 0.0 {
                constant += a;
                graph.add_edge(i, t, -a);
            }
        }
        let flow = graph.max_flow(s, t);
        let source = graph.source_side(s);
        let z: Vec<bool> = (0..nodes).map(|i| !source[i]).collect();
        let optimum = constant + flow;
        let direct = self.energy(&z);
        assert!(
            (direct - optimum).abs() <= 1e-6 * optimum.abs().max(1.0),
            "cut value {optimum} disagrees with labelling energy {direct}"
        );
        (z, optimum)
    }
}
