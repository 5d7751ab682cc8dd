//! Tab-separated plot data: labelled point overlays and block partitions.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::sbm::BlockPartition;
use crate::error::{Error, Result};

pub const OVERLAY_HEADER: &str = "x\ty\tlabel";
pub const PARTITION_HEADER: &str = "node\tblock";

/// Lines starting with this are notes, skipped on read.
const NOTE: &str = "# ";

#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<bool>,
    pub notes: Vec<String>,
}

/// Writes `(x, y, label)` rows. A file where every label is equal carries a
/// note saying so.
pub fn inclusion_overlay(path: &Path, coords: &[[f64; 2]], labels: &[bool]) -> Result<Overlay> {
    if coords.len() != labels.len() {
        return Err(Error::invalid(format!("{} points for {} labels", coords.len(), labels.len())));
    }
    if coords.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::invalid("overlay coordinates must be finite"));
    }
    let mut notes = Vec::new();
    if let Some(&first) = labels.first() {
        if labels.iter().all(|&l| l == first) {
            notes.push(format!("single class: every label is {}", u8::from(first)));
        }
    }
    let mut out = Vec::new();
    for n in &notes {
        writeln!(out, "{NOTE}{n}").expect("write to vec");
    }
    writeln!(out, "{OVERLAY_HEADER}").expect("write to vec");
    for (p, &l) in coords.iter().zip(labels) {
        writeln!(out, "{}\t{}\t{}", p[0], p[1], u8::from(l)).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(Overlay {
        points: coords.to_vec(),
        labels: labels.to_vec(),
        notes,
    })
}

fn data_lines(text: &str, header: &str, path: &Path) -> Result<Vec<(usize, String)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with(NOTE));
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => return Err(Error::Schema { path: path.to_path_buf(), message: format!("expected header {header:?}") }),
    }
    Ok(lines.map(|(i, l)| (i + 1, l.to_string())).collect())
}

pub fn read_overlay(path: &Path) -> Result<Overlay> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let notes = text.lines().filter_map(|l| l.strip_prefix(NOTE)).map(str::to_string).collect();
    let (mut points, mut labels) = (Vec::new(), Vec::new());
    for (line_no, line) in data_lines(&text, OVERLAY_HEADER, path)? {
        let bad = || Error::Schema { path: path.to_path_buf(), message: format!("line {line_no}: malformed overlay row") };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let x: f64 = f[0].parse().map_err(|_| bad())?;
        let y: f64 = f[1].parse().map_err(|_| bad())?;
        let label = match f[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        points.push([x, y]);
        labels.push(label);
    }
    Ok(Overlay { points, labels, notes })
}

pub fn write_partition(path: &Path, nodes: &[String], partition: &BlockPartition) -> Result<()> {
    if nodes.len() != partition.assignment.len() {
        return Err(Error::invalid("partition does not cover the node list"));
    }
    let mut out = format!("{PARTITION_HEADER}\n");
    for (name, b) in nodes.iter().zip(&partition.assignment) {
        if name.contains(['\t', '\n']) {
            return Err(Error::invalid(format!("node name {name:?} contains a tab or newline")));
        }
        out.push_str(&format!("{name}\t{b}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_partition(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text, PARTITION_HEADER, path)?
        .into_iter()
        .map(|(line_no, line)| {
            let bad = || Error::Schema { path: path.to_path_buf(), message: format!("line {line_no}: malformed partition row") };
            let (name, block) = line.split_once('\t').ok_or_else(bad)?;
            Ok((name.to_string(), block.parse().map_err(|_| bad())?))
        })
        .collect()
}
