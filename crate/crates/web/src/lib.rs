//! Browser demo: ROC/PR curves for pasted scores, block-model recovery on a
//! planted graph, and title-linkage similarities. Every export takes plain
//! values and returns a JSON string so the page needs no bindings glue
//! beyond what wasm-bindgen generates.

use rand::Rng;
use serde_json::{json, Value};
use transforecast::analysis::{layout, nmi, sbm_fit, FeatureGraph, LayoutConfig, SbmConfig};
use transforecast::corpus::PaperId;
use transforecast::eval::{average_precision, roc_auc};
use transforecast::linkage::{
    build_tfidf_index, edit_similarity, match_references, normalize_title, sparse_dot, MatchThresholds,
};
use transforecast::preprocess::rng;
use wasm_bindgen::prelude::*;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Parses `score,label` lines (label 0/1 or true/false); blank lines and
/// lines starting with `#` are skipped.
pub fn parse_scored(text: &str) -> Result<(Vec<f64>, Vec<bool>), String> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split([',', '\t', ' ']).filter(|p| !p.is_empty());
        let (Some(s), Some(l), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `score,label`", n + 1));
        };
        let s: f64 = s.parse().map_err(|_| format!("line {}: bad score `{s}`", n + 1))?;
        let l = match l {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(format!("line {}: bad label `{l}`", n + 1)),
        };
        scores.push(s);
        labels.push(l);
    }
    Ok((scores, labels))
}

/// AUROC, average precision and both curves for `score,label` lines.
#[wasm_bindgen]
pub fn roc_pr(text: &str) -> String {
    let (scores, labels) = match parse_scored(text) {
        Ok(v) => v,
        Err(e) => return error(e),
    };
    let roc = roc_auc(&scores, &labels);
    let pr = average_precision(&scores, &labels);
    match (roc, pr) {
        (Ok((auroc, roc)), Ok((ap, pr))) => json!({
            "n": scores.len(),
            "positives": labels.iter().filter(|l| **l).count(),
            "auroc": auroc,
            "ap": ap,
            "roc": roc.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
            "pr": pr.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        })
        .to_string(),
        (Err(e), _) | (_, Err(e)) => error(e),
    }
}

/// Random weighted graph with `blocks` planted groups of `size` nodes.
pub fn planted_graph(blocks: usize, size: usize, p_in: f64, p_out: f64, seed: u64) -> Result<(FeatureGraph, Vec<usize>), String> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err("edge probabilities must lie in [0, 1]".into());
    }
    let n = blocks * size;
    if n < 2 || n > 200 {
        return Err("graph needs between 2 and 200 nodes".into());
    }
    let mut r = rng(seed);
    let truth: Vec<usize> = (0..n).map(|i| i / size).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if truth[i] == truth[j] { p_in } else { p_out };
            if r.random_bool(p) {
                edges.push((i, j, p.max(1e-3)));
            }
        }
    }
    let nodes = (0..n).map(|i| format!("n{i}")).collect();
    let g = FeatureGraph::from_edges(nodes, edges).map_err(|e| e.to_string())?;
    Ok((g, truth))
}

/// Plants a block graph, fits the block model and lays the graph out.
#[wasm_bindgen]
pub fn sbm_demo(blocks: usize, size: usize, p_in: f64, p_out: f64, sweeps: usize, seed: u64) -> String {
    let (g, truth) = match planted_graph(blocks, size, p_in, p_out, seed) {
        Ok(v) => v,
        Err(e) => return error(e),
    };
    let cfg = SbmConfig {
        max_blocks: (blocks + 2).min(10),
        mcmc_sweeps: sweeps.clamp(1, 20_000),
        restarts: 2,
        seed,
    };
    let fit = match sbm_fit(&g, &cfg) {
        Ok(f) => f,
        Err(e) => return error(e),
    };
    let coords = match layout(&g, &LayoutConfig { seed, ..LayoutConfig::default() }) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    let score = nmi(&fit.assignment, &truth).unwrap_or(f64::NAN);
    json!({
        "nodes": g.len(),
        "edges": g.edges.iter().map(|e| [e.a, e.b]).collect::<Vec<_>>(),
        "truth": truth,
        "assignment": fit.assignment,
        "n_blocks": fit.n_blocks,
        "description_length": fit.description_length,
        "nmi": score,
        "coords": coords,
    })
    .to_string()
}

/// Scores one reference title against newline-separated candidate titles,
/// as the linkage stage would, and lists every candidate's similarities.
#[wasm_bindgen]
pub fn link_title(reference: &str, candidates: &str) -> String {
    let titles: Vec<(PaperId, &str)> = candidates
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, t)| (PaperId::new(format!("c{}", i + 1)), t))
        .collect();
    let idx = match build_tfidf_index(&titles) {
        Ok(i) => i,
        Err(e) => return error(e),
    };
    let thresholds = MatchThresholds::default();
    let decision = match match_references(&[reference], &idx, &thresholds) {
        Ok(mut d) => d.remove(0),
        Err(e) => return error(e),
    };
    let norm = normalize_title(reference);
    let q = idx.vectorize(reference);
    let rows: Vec<Value> = titles
        .iter()
        .enumerate()
        .map(|(i, (id, t))| {
            let cos = sparse_dot(&q, idx.vector(i)).clamp(0.0, 1.0);
            let edit = edit_similarity(&norm, &normalize_title(t));
            json!({
                "id": id.0,
                "title": t,
                "normalized": normalize_title(t),
                "cosine": cos,
                "edit": edit,
                "verdict": thresholds.classify(cos, edit).as_str(),
            })
        })
        .collect();
    json!({
        "normalized_reference": norm,
        "thresholds": thresholds,
        "decision": {
            "candidate": decision.candidate_paper_id.map(|p| p.0),
            "cosine": decision.cosine_similarity,
            "edit": decision.edit_similarity,
            "verdict": decision.verdict.as_str(),
            "reason": decision.reason,
        },
        "candidates": rows,
    })
    .to_string()
}
