//! Feature correlation graph, eigenvector centrality and spring-electrical
//! layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected weighted graph over named nodes, `a < b` on every edge.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub threshold: f64,
    /// Columns left out because they are constant.
    pub excluded: Vec<String>,
}

impl FeatureGraph {
    pub fn from_edges(nodes: Vec<String>, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let n = nodes.len();
        let mut out: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("edge weight {w} must be finite and non-negative")));
            }
            out.push(Edge {
                a: a.min(b),
                b: a.max(b),
                weight: w,
            });
        }
        out.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        if out.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::invalid("duplicate edge"));
        }
        Ok(FeatureGraph {
            nodes,
            edges: out,
            threshold: 0.0,
            excluded: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Per node: (neighbour, weight) lists.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        adj
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.len()]; self.len()];
        for e in &self.edges {
            m[e.a][e.b] = e.weight;
            m[e.b][e.a] = e.weight;
        }
        m
    }

    /// Component label per node, numbered by smallest member.
    pub fn components(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.len()];
        let mut next = 0;
        for start in 0..self.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(u) = stack.pop() {
                for &(v, _) in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// Sum of `(x - mean_x)(y - mean_y)` over the root of the product of the
/// centred sums of squares.
pub fn pearson_columns(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Absolute pairwise Pearson correlations between columns, keeping edges
/// with `|r| >= threshold`. Constant columns are excluded.
pub fn correlation_graph(m: &Matrix, names: &[String], threshold: f64) -> Result<FeatureGraph> {
    if names.len() != m.cols() {
        return Err(Error::invalid(format!("{} names for {} columns", names.len(), m.cols())));
    }
    if m.rows() < 3 {
        return Err(Error::invalid("correlation graph needs at least 3 rows"));
    }
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut columns = Vec::new();
    for c in 0..m.cols() {
        let col = m.column(c);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("column {} has non-finite values", names[c])));
        }
        if col.iter().all(|v| *v == col[0]) {
            excluded.push(names[c].clone());
        } else {
            kept.push(names[c].clone());
            columns.push(col);
        }
    }
    let mut edges = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            let w = pearson_columns(&columns[i], &columns[j]).abs();
            if w >= threshold {
                edges.push((i, j, w));
            }
        }
    }
    let mut g = FeatureGraph::from_edges(kept, edges)?;
    g.threshold = threshold;
    g.excluded = excluded;
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centrality {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Principal eigenvector of the weighted adjacency, per connected
/// component, by power iteration on `A + I` (the shift keeps bipartite
/// components from oscillating). Each component's vector has unit L2 norm;
/// isolated nodes score 0.
pub fn eigencentrality(g: &FeatureGraph, tolerance: f64, max_iterations: usize) -> Centrality {
    let adj = g.adjacency();
    let comp = g.components();
    let n_comp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut scores = vec![0.0; g.len()];
    let mut iterations = 0;
    let mut converged = true;
    for c in 0..n_comp {
        let members: Vec<usize> = (0..g.len()).filter(|&i| comp[i] == c).collect();
        if members.len() < 2 {
            continue;
        }
        let init = 1.0 / (members.len() as f64).sqrt();
        let mut x = vec![0.0; g.len()];
        for &i in &members {
            x[i] = init;
        }
        let mut done = false;
        let mut it = 0;
        while it < max_iterations {
            it += 1;
            let mut y = vec![0.0; g.len()];
            for &i in &members {
                y[i] = x[i] + adj[i].iter().map(|&(j, w)| w * x[j]).sum::<f64>();
            }
            let norm = members.iter().map(|&i| y[i] * y[i]).sum::<f64>().sqrt();
            let mut diff = 0.0;
            for &i in &members {
                y[i] /= norm;
                diff += (y[i] - x[i]).powi(2);
            }
            x = y;
            if diff.sqrt() < tolerance {
                done = true;
                break;
            }
        }
        iterations = iterations.max(it);
        converged &= done;
        for &i in &members {
            scores[i] = x[i].max(0.0);
        }
    }
    Centrality {
        scores,
        iterations,
        converged,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    /// Natural spring length.
    pub spring_length: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            spring_length: 1.0,
            iterations: 500,
            seed: 0,
        }
    }
}

/// Spring-electrical placement: attraction `w d^2 / K` along edges,
/// repulsion `K^2 / d` between every pair, step size cooling linearly.
/// The result is centred on the origin.
pub fn layout(g: &FeatureGraph, cfg: &LayoutConfig) -> Result<Vec<[f64; 2]>> {
    let n = g.len();
    if n == 0 {
        return Err(Error::invalid("layout needs at least one node"));
    }
    let k = cfg.spring_length;
    let mut r = rng(cfg.seed);
    let side = k * (n as f64).sqrt();
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [r.random::<f64>() * side, r.random::<f64>() * side])
        .collect();
    let start_step = side.max(k);
    for it in 0..cfg.iterations {
        let step = start_step * (1.0 - it as f64 / cfg.iterations as f64) + 1e-3 * k;
        let mut force = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in i + 1..n {
                let dx = pos[i][0] - pos[j][0];
                let dy = pos[i][1] - pos[j][1];
                let d = (dx * dx + dy * dy).sqrt().max(1e-9);
                let f = k * k / d;
                force[i][0] += f * dx / d;
                force[i][1] += f * dy / d;
                force[j][0] -= f * dx / d;
                force[j][1] -= f * dy / d;
            }
        }
        for e in &g.edges {
            let (i, j) = (e.a, e.b);
            let dx = pos[i][0] - pos[j][0];
            let dy = pos[i][1] - pos[j][1];
            let d = (dx * dx + dy * dy).sqrt().max(1e-9);
            let f = e.weight * d * d / k;
            force[i][0] -= f * dx / d;
            force[i][1] -= f * dy / d;
            force[j][0] += f * dx / d;
            force[j][1] += f * dy / d;
        }
        for i in 0..n {
            let len = (force[i][0].powi(2) + force[i][1].powi(2)).sqrt();
            if len > 0.0 {
                let s = step.min(len) / len;
                pos[i][0] += force[i][0] * s;
                pos[i][1] += force[i][1] * s;
            }
        }
    }
    let cx = pos.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let cy = pos.iter().map(|p| p[1]).sum::<f64>() / n as f64;
    for p in pos.iter_mut() {
        p[0] -= cx;
        p[1] -= cy;
    }
    Ok(pos)
}
