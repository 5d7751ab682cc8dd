//! Degree-corrected stochastic block model on a weighted graph, fit by
//! minimizing description length: greedy agglomeration, then single-node
//! Metropolis moves, best of several seeded chains.
//!
//! The description length is the negative log of
//! - the microcanonical degree-corrected edge placement given block edge
//!   counts and node degrees,
//! - uniform priors on the degree sequence per block, the block edge-count
//!   matrix and the partition,
//! - exponential edge weights per block pair with a unit Gamma prior on the
//!   rate, integrated out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::FeatureGraph;
use crate::error::{Error, Result};
use crate::par;
use crate::preprocess::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    /// Block per node, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub n_blocks: usize,
    pub description_length: f64,
    pub degree_corrected: bool,
}

impl BlockPartition {
    /// Relabels blocks by first appearance.
    pub fn canonical(assignment: &[usize]) -> Vec<usize> {
        let mut map: Vec<Option<usize>> = Vec::new();
        let mut next = 0;
        assignment
            .iter()
            .map(|&b| {
                if b >= map.len() {
                    map.resize(b + 1, None);
                }
                *map[b].get_or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    pub fn single_block(n: usize) -> Vec<usize> {
        vec![0; n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub max_blocks: usize,
    /// Sweeps per chain; one sweep proposes a move for every node.
    pub mcmc_sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            max_blocks: 10,
            mcmc_sweeps: 100_000,
            restarts: 4,
            seed: 0,
        }
    }
}

struct LogFact(Vec<f64>);

impl LogFact {
    fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        t.push(0.0);
        for k in 1..=n {
            t.push(t[k - 1] + (k as f64).ln());
        }
        LogFact(t)
    }

    fn get(&self, n: usize) -> f64 {
        self.0[n]
    }

    fn binom(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

struct Model<'a> {
    lf: LogFact,
    n: usize,
    edges: usize,
    adj: &'a [Vec<(usize, f64)>],
    degree: Vec<usize>,
    /// `-sum ln k_i! + ln N! + ln N`, fixed for the graph.
    fixed: f64,
}

impl<'a> Model<'a> {
    fn new(adj: &'a [Vec<(usize, f64)>], max_blocks: usize) -> Self {
        let n = adj.len();
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let edges = degree.iter().sum::<usize>() / 2;
        let cap = n.max(max_blocks);
        let lf = LogFact::new(2 * edges + cap * (cap + 1) / 2 + n + 2);
        let fixed = -degree.iter().map(|&k| lf.get(k)).sum::<f64>() + lf.get(n) + (n as f64).ln();
        Model {
            lf,
            n,
            edges,
            adj,
            degree,
            fixed,
        }
    }

    fn pair(&self, m: usize, w: f64, diag: bool) -> f64 {
        let placement = if diag {
            -(m as f64 * std::f64::consts::LN_2 + self.lf.get(m))
        } else {
            -self.lf.get(m)
        };
        let weights = (1.0 + m as f64) * (1.0 + w).ln() - self.lf.get(m);
        placement + weights
    }

    fn block(&self, size: usize, deg: usize) -> f64 {
        if size == 0 {
            return 0.0;
        }
        self.lf.get(deg) + self.lf.binom(size + deg - 1, deg) - self.lf.get(size)
    }

    fn global(&self, b: usize) -> f64 {
        let pairs = b * (b + 1) / 2;
        let edge_prior = if self.edges == 0 { 0.0 } else { self.lf.binom(pairs + self.edges - 1, self.edges) };
        edge_prior + self.lf.binom(self.n - 1, b - 1) + self.fixed
    }
}

/// Block-level sufficient statistics over `k` block slots.
#[derive(Clone)]
struct State {
    k: usize,
    b: Vec<usize>,
    size: Vec<usize>,
    deg: Vec<usize>,
    m: Vec<usize>,
    w: Vec<f64>,
    nonempty: usize,
}

impl State {
    fn new(model: &Model, k: usize, b: Vec<usize>) -> Self {
        let mut s = State {
            k,
            b,
            size: vec![0; k],
            deg: vec![0; k],
            m: vec![0; k * k],
            w: vec![0.0; k * k],
            nonempty: 0,
        };
        for i in 0..model.n {
            let r = s.b[i];
            s.size[r] += 1;
            s.deg[r] += model.degree[i];
            for &(j, w) in &model.adj[i] {
                if j > i {
                    s.add(r, s.b[j], 1, w);
                }
            }
        }
        s.nonempty = s.size.iter().filter(|&&c| c > 0).count();
        s
    }

    fn add(&mut self, r: usize, t: usize, dm: isize, dw: f64) {
        let k = self.k;
        let mut bump = |i: usize| {
            self.m[i] = (self.m[i] as isize + dm) as usize;
            self.w[i] = if self.m[i] == 0 { 0.0 } else { self.w[i] + dw };
        };
        bump(r * k + t);
        if r != t {
            bump(t * k + r);
        }
    }

    fn pair_term(&self, model: &Model, r: usize, t: usize) -> f64 {
        let i = r * self.k + t;
        model.pair(self.m[i], self.w[i], r == t)
    }

    fn total(&self, model: &Model) -> f64 {
        let mut dl = model.global(self.nonempty.max(1));
        for r in 0..self.k {
            dl += model.block(self.size[r], self.deg[r]);
            for t in r..self.k {
                dl += self.pair_term(model, r, t);
            }
        }
        dl
    }

    /// Terms that change when a node moves between `r` and `s`.
    fn local(&self, model: &Model, r: usize, s: usize) -> f64 {
        let mut dl = model.global(self.nonempty.max(1)) + model.block(self.size[r], self.deg[r]) + model.block(self.size[s], self.deg[s]);
        for t in 0..self.k {
            dl += self.pair_term(model, r, t);
            if t != r {
                dl += self.pair_term(model, s, t);
            }
        }
        dl
    }

    fn shift(&mut self, model: &Model, i: usize, s: usize) {
        let r = self.b[i];
        for &(j, w) in &model.adj[i] {
            let t = self.b[j];
            self.add(r, t, -1, -w);
            self.add(s, t, 1, w);
        }
        self.deg[r] -= model.degree[i];
        self.deg[s] += model.degree[i];
        if self.size[s] == 0 {
            self.nonempty += 1;
        }
        self.size[r] -= 1;
        self.size[s] += 1;
        if self.size[r] == 0 {
            self.nonempty -= 1;
        }
        self.b[i] = s;
    }

    /// Moves node `i` to `s` and returns the change in description length.
    fn move_delta(&mut self, model: &Model, i: usize, s: usize) -> f64 {
        let r = self.b[i];
        let before = self.local(model, r, s);
        self.shift(model, i, s);
        self.local(model, r, s) - before
    }
}

pub fn description_length(g: &FeatureGraph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != g.len() || g.is_empty() {
        return Err(Error::invalid("assignment must cover every node of a nonempty graph"));
    }
    let adj = g.adjacency();
    let canon = BlockPartition::canonical(assignment);
    let k = canon.iter().max().map_or(1, |b| b + 1);
    let model = Model::new(&adj, k);
    Ok(State::new(&model, k, canon).total(&model))
}

/// Greedy merges from singletons down to one block; returns the best
/// partition seen with at most `max_blocks` blocks.
fn agglomerate(model: &Model, max_blocks: usize) -> (Vec<usize>, f64) {
    let n = model.n;
    let mut st = State::new(model, n, (0..n).collect());
    let mut alive: Vec<usize> = (0..n).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut current = st.total(model);
    loop {
        if alive.len() <= max_blocks && best.as_ref().is_none_or(|(_, d)| current < *d) {
            best = Some((st.b.clone(), current));
        }
        if alive.len() == 1 {
            break;
        }
        let mut choice: Option<(usize, usize, f64)> = None;
        let b_now = alive.len();
        for (ai, &r) in alive.iter().enumerate() {
            for &s in &alive[ai + 1..] {
                let k = st.k;
                let mut before = model.global(b_now) + model.block(st.size[r], st.deg[r]) + model.block(st.size[s], st.deg[s]);
                let mut after = model.global(b_now - 1) + model.block(st.size[r] + st.size[s], st.deg[r] + st.deg[s]);
                for &t in &alive {
                    before += st.pair_term(model, r, t);
                    if t != r {
                        before += st.pair_term(model, s, t);
                    }
                    if t != r && t != s {
                        after += model.pair(st.m[r * k + t] + st.m[s * k + t], st.w[r * k + t] + st.w[s * k + t], false);
                    }
                }
                let inner = st.m[r * k + r] + st.m[s * k + s] + st.m[r * k + s];
                let inner_w = st.w[r * k + r] + st.w[s * k + s] + st.w[r * k + s];
                after += model.pair(inner, inner_w, true);
                let delta = after - before;
                if choice.is_none_or(|(_, _, d)| delta < d) {
                    choice = Some((r, s, delta));
                }
            }
        }
        let (r, s, delta) = choice.expect("at least two blocks");
        let members: Vec<usize> = (0..n).filter(|&i| st.b[i] == s).collect();
        for i in members {
            st.shift(model, i, r);
        }
        alive.retain(|&x| x != s);
        current += delta;
    }
    let (b, _) = best.expect("single block always qualifies");
    let canon = BlockPartition::canonical(&b);
    let k = canon.iter().max().map_or(1, |x| x + 1);
    let dl = State::new(model, k, canon.clone()).total(model);
    (canon, dl)
}

fn chain(model: &Model, cfg: &SbmConfig, init: Vec<usize>, seed: u64) -> (Vec<usize>, f64) {
    let k = cfg.max_blocks;
    let mut st = State::new(model, k, init);
    let mut r = rng(seed);
    let mut current = st.total(model);
    let mut best = (st.b.clone(), current);
    let total = cfg.mcmc_sweeps.max(1);
    for sweep in 0..cfg.mcmc_sweeps {
        // inverse temperature rises from 1 to 10 over the chain
        let beta = 1.0 + 9.0 * sweep as f64 / total as f64;
        for i in 0..model.n {
            let from = st.b[i];
            let target = {
                let empty = (0..k).find(|&t| st.size[t] == 0);
                let options: Vec<usize> = (0..k).filter(|&t| t != from && (st.size[t] > 0 || Some(t) == empty)).collect();
                if options.is_empty() {
                    continue;
                }
                options[r.random_range(0..options.len())]
            };
            let delta = st.move_delta(model, i, target);
            if delta <= 0.0 || r.random::<f64>() < (-beta * delta).exp() {
                current += delta;
                if current < best.1 - 1e-9 {
                    best = (st.b.clone(), current);
                }
            } else {
                st.shift(model, i, from);
            }
        }
    }
    let polished = polish(model, k, best.0);
    let canon = BlockPartition::canonical(&polished);
    let kk = canon.iter().max().map_or(1, |x| x + 1);
    let dl = State::new(model, kk, canon.clone()).total(model);
    (canon, dl)
}

/// Zero-temperature sweeps until no single move improves.
fn polish(model: &Model, k: usize, b: Vec<usize>) -> Vec<usize> {
    let mut st = State::new(model, k, b);
    loop {
        let mut improved = false;
        for i in 0..model.n {
            let from = st.b[i];
            let mut best: Option<(usize, f64)> = None;
            for t in 0..k {
                if t == from {
                    continue;
                }
                let d = st.move_delta(model, i, t);
                st.shift(model, i, from);
                if d < -1e-9 && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((t, d));
                }
            }
            if let Some((t, _)) = best {
                st.shift(model, i, t);
                improved = true;
            }
        }
        if !improved {
            return st.b;
        }
    }
}

/// Fits the block model. The single-block partition is always a candidate,
/// so the result never has a longer description.
pub fn sbm_fit(g: &FeatureGraph, cfg: &SbmConfig) -> Result<BlockPartition> {
    if g.is_empty() {
        return Err(Error::invalid("block model needs a nonempty graph"));
    }
    if cfg.max_blocks == 0 {
        return Err(Error::Config("max_blocks must be at least 1".into()));
    }
    let adj = g.adjacency();
    let model = Model::new(&adj, cfg.max_blocks);
    let n = g.len();
    let k = cfg.max_blocks.min(n);
    let cfg = SbmConfig { max_blocks: k, ..*cfg };

    let single = BlockPartition::single_block(n);
    let single_dl = State::new(&model, 1, single.clone()).total(&model);
    let mut candidates = vec![(single, single_dl)];
    if k > 1 {
        let (agg, agg_dl) = agglomerate(&model, k);
        candidates.push((agg.clone(), agg_dl));
        let restarts: Vec<usize> = (0..cfg.restarts).collect();
        let chains = par::map(&restarts, |&c| {
            let init = if c == 0 {
                agg.clone()
            } else {
                let mut r = rng(cfg.seed.wrapping_add(1000 + c as u64));
                let blocks = r.random_range(1..=k);
                (0..n).map(|_| r.random_range(0..blocks)).collect()
            };
            chain(&model, &cfg, init, cfg.seed.wrapping_add(c as u64))
        });
        candidates.extend(chains);
    }
    // strict improvement needed to leave an earlier candidate
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.1 < candidates[best].1 - 1e-9 {
            best = i;
        }
    }
    let (assignment, dl) = candidates.swap_remove(best);
    let n_blocks = assignment.iter().max().map_or(0, |b| b + 1);
    Ok(BlockPartition {
        assignment,
        n_blocks,
        description_length: dl,
        degree_corrected: true,
    })
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies
/// (natural log). When exactly one partition is a single block the value
/// is 0; when both are, they are identical and the value is 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("partitions cover different node sets"));
    }
    if a.is_empty() {
        return Err(Error::invalid("partitions are empty"));
    }
    let a = BlockPartition::canonical(a);
    let b = BlockPartition::canonical(b);
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let n = a.len() as f64;
    let mut table = vec![0usize; ka * kb];
    for (&x, &y) in a.iter().zip(&b) {
        table[x * kb + y] += 1;
    }
    let row = |x: usize| (0..kb).map(|y| table[x * kb + y]).sum::<usize>();
    let col = |y: usize| (0..ka).map(|x| table[x * kb + y]).sum::<usize>();
    let ha = entropy((0..ka).map(row), n);
    let hb = entropy((0..kb).map(col), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = table[x * kb + y];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy / (row(x) as f64 / n * col(y) as f64 / n)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (ha + hb))).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: Vec<(usize, usize, f64)>) -> FeatureGraph {
        FeatureGraph::from_edges((0..n).map(|i| format!("n{i}")).collect(), edges).unwrap()
    }

    fn two_cliques() -> FeatureGraph {
        let mut e = Vec::new();
        for base in [0, 6] {
            for i in 0..6 {
                for j in i + 1..6 {
                    e.push((base + i, base + j, 1.0));
                }
            }
        }
        e.push((5, 6, 1.0));
        graph(12, e)
    }

    fn uniform_graph(seed: u64) -> FeatureGraph {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut e = Vec::new();
        for i in 0..12 {
            for j in i + 1..12 {
                if r.random_bool(0.5) {
                    e.push((i, j, 1.0));
                }
            }
        }
        graph(12, e)
    }

    /// Minimum description length over every split of 12 nodes into two
    /// nonempty blocks (node 0 fixed in block 0).
    fn best_two_partition(g: &FeatureGraph) -> (Vec<usize>, f64) {
        let n = g.len();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for mask in 1u32..(1 << (n - 1)) {
            let a: Vec<usize> = (0..n).map(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { 1 } else { 0 }).collect();
            let dl = description_length(g, &a).unwrap();
            if best.as_ref().is_none_or(|(_, d)| dl < *d) {
                best = Some((a, dl));
            }
        }
        best.unwrap()
    }

    fn test_cfg(seed: u64) -> SbmConfig {
        SbmConfig {
            max_blocks: 6,
            mcmc_sweeps: 300,
            restarts: 3,
            seed,
        }
    }

    #[test]
    fn two_cliques_split_exactly() {
        let g = two_cliques();
        let (oracle, oracle_dl) = best_two_partition(&g);
        let cliques: Vec<usize> = (0..12).map(|i| i / 6).collect();
        assert_eq!(oracle, cliques);
        let fit = sbm_fit(&g, &test_cfg(1)).unwrap();
        assert_eq!(fit.assignment, cliques);
        assert!((fit.description_length - oracle_dl).abs() < 1e-9);
        assert!(fit.description_length < description_length(&g, &[0; 12]).unwrap());
    }

    #[test]
    fn uniform_density_prefers_one_block() {
        for seed in 0..3 {
            let g = uniform_graph(seed);
            let single = description_length(&g, &[0; 12]).unwrap();
            let (_, two) = best_two_partition(&g);
            assert!(single <= two, "seed {seed}: {single} vs {two}");
            let fit = sbm_fit(&g, &test_cfg(seed)).unwrap();
            assert_eq!(fit.n_blocks, 1);
        }
    }

    pub(crate) fn planted_three_blocks(seed: u64) -> (FeatureGraph, Vec<usize>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let mut e = Vec::new();
        for i in 0..30 {
            for j in i + 1..30 {
                let (p, w) = if truth[i] == truth[j] { (0.9, 0.9) } else { (0.1, 0.1) };
                if r.random_bool(p) {
                    e.push((i, j, (w + 0.1 * (r.random::<f64>() - 0.5)).clamp(1e-3, 1.0)));
                }
            }
        }
        (graph(30, e), truth)
    }

    #[test]
    fn planted_blocks_are_recovered() {
        let mut hits = 0;
        for seed in 0..10 {
            let (g, truth) = planted_three_blocks(seed);
            let fit = sbm_fit(&g, &test_cfg(seed)).unwrap();
            if nmi(&fit.assignment, &truth).unwrap() >= 0.9 {
                hits += 1;
            }
        }
        assert!(hits >= 8, "{hits}/10");
    }

    #[test]
    fn never_worse_than_one_block() {
        for seed in 0..5 {
            let (g, _) = planted_three_blocks(100 + seed);
            let fit = sbm_fit(&g, &SbmConfig { mcmc_sweeps: 5, ..test_cfg(seed) }).unwrap();
            assert!(fit.description_length <= description_length(&g, &[0; 30]).unwrap() + 1e-9);
            assert!(fit.description_length.is_finite());
        }
    }

    #[test]
    fn fit_is_seeded() {
        let (g, _) = planted_three_blocks(3);
        assert_eq!(sbm_fit(&g, &test_cfg(4)).unwrap(), sbm_fit(&g, &test_cfg(4)).unwrap());
    }

    proptest! {
        #[test]
        fn incremental_moves_match_recomputation(seed in 0u64..500) {
            let (g, _) = planted_three_blocks(seed);
            let adj = g.adjacency();
            let model = Model::new(&adj, 5);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let init: Vec<usize> = (0..30).map(|_| r.random_range(0..5)).collect();
            let mut st = State::new(&model, 5, init);
            let mut dl = st.total(&model);
            for _ in 0..50 {
                let i = r.random_range(0..30);
                let s = r.random_range(0..5);
                if s == st.b[i] { continue; }
                dl += st.move_delta(&model, i, s);
                let fresh = State::new(&model, 5, st.b.clone()).total(&model);
                prop_assert!((dl - fresh).abs() < 1e-8, "{} vs {}", dl, fresh);
            }
        }

        #[test]
        fn nmi_is_symmetric_and_relabel_invariant(a in proptest::collection::vec(0usize..4, 12), b in proptest::collection::vec(0usize..4, 12)) {
            let x = nmi(&a, &b).unwrap();
            prop_assert!((x - nmi(&b, &a).unwrap()).abs() < 1e-12);
            let relabeled: Vec<usize> = a.iter().map(|v| 7 - v).collect();
            prop_assert!((x - nmi(&relabeled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn nmi_examples() {
        let p = [0, 0, 1, 1, 2, 2];
        assert_eq!(nmi(&p, &[5, 5, 3, 3, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&p, &[0; 6]).unwrap(), 0.0);
        assert_eq!(nmi(&[0; 6], &[0; 6]).unwrap(), 1.0);
        // contingency table [[2,0],[1,1],[0,2]] against [0,0,0,1,1,1]
        let q = [0, 0, 0, 1, 1, 1];
        let h_p = 3f64.ln();
        let h_q = 2f64.ln();
        let term = |c: f64, px: f64, py: f64| c / 6.0 * ((c / 6.0) / (px * py)).ln();
        let mi = term(2.0, 2.0 / 6.0, 0.5) + term(1.0, 2.0 / 6.0, 0.5) + term(1.0, 2.0 / 6.0, 0.5) + term(2.0, 2.0 / 6.0, 0.5);
        let want = mi / ((h_p + h_q) / 2.0);
        assert!((nmi(&p, &q).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn canonical_labels() {
        assert_eq!(BlockPartition::canonical(&[4, 4, 1, 7, 1]), vec![0, 0, 1, 2, 1]);
    }
}
