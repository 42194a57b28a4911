//! Intermediate results written between stages.
//!
//! * `clusters.txt`: `video_id K label...` per video, 0-based within-video labels
//! * `assignment.txt`: `strategy=` and `cost=` lines, then `video_id within global` triples
//! * `segments.txt`: one line of `T` global cluster ids per video, in manifest order

use std::fmt::Write as _;
use std::path::Path;

use tempseg_core::embednet::EmbeddedSequence;
use tempseg_core::globalassign::{CentroidTable, GlobalAssignment, Strategy};
use tempseg_core::videocluster::WithinVideoClusters;

use crate::error::{CliError, Result};
use crate::formats::{fmt_num, read_text};

pub const CLUSTERS_NAME: &str = "clusters.txt";
pub const ASSIGNMENT_NAME: &str = "assignment.txt";
pub const SEGMENTS_NAME: &str = "segments.txt";
pub const REPORT_NAME: &str = "report.txt";

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn clusters_to_text(clusters: &[WithinVideoClusters]) -> String {
    let mut out = String::new();
    for c in clusters {
        writeln!(out, "{} {} {}", c.video_id, c.k, join(&c.labels)).expect("writing to a String");
    }
    out
}

/// Reads within-video labels and rebuilds centroids and mean timestamps from the embeddings.
pub fn parse_clusters(text: &str, path: &Path, embeddings: &[EmbeddedSequence]) -> Result<Vec<WithinVideoClusters>> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != embeddings.len() {
        return Err(CliError::format(path, format!("{} videos, dataset has {}", lines.len(), embeddings.len())));
    }
    lines
        .iter()
        .zip(embeddings)
        .enumerate()
        .map(|(n, (line, emb))| {
            let bad = |m: String| CliError::format(path, format!("line {}: {m}", n + 1));
            let mut fields = line.split_whitespace();
            let id = fields.next().unwrap_or_default();
            if id != emb.video_id {
                return Err(bad(format!("video {id}, expected {}", emb.video_id)));
            }
            let k: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("missing cluster count".into()))?;
            let labels = fields
                .map(|s| s.parse::<usize>().ok().filter(|&l| l < k).ok_or_else(|| bad(format!("bad label {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if labels.len() != emb.frames() {
                return Err(bad(format!("{} labels for {} frames", labels.len(), emb.frames())));
            }
            WithinVideoClusters::from_labels(emb, labels, k).map_err(|e| bad(e.to_string()))
        })
        .collect()
}

pub fn assignment_to_text(assignment: &GlobalAssignment, video_ids: &[String]) -> String {
    let mut out = format!("strategy={}\ncost={}\n", assignment.strategy.name(), fmt_num(assignment.cost));
    for (id, row) in video_ids.iter().zip(&assignment.global_of) {
        for (within, global) in row.iter().enumerate() {
            writeln!(out, "{id} {within} {global}").expect("writing to a String");
        }
    }
    out
}

/// Parses an assignment dump; the cost is recomputed from `table`.
pub fn parse_assignment(text: &str, path: &Path, video_ids: &[String], table: &CentroidTable) -> Result<GlobalAssignment> {
    let mut strategy = None;
    let k = table.clusters();
    let mut global_of = vec![vec![usize::MAX; k]; video_ids.len()];
    for (n, line) in text.lines().enumerate() {
        let bad = |m: &str| CliError::format(path, format!("line {}: {m}", n + 1));
        let line = line.trim();
        if line.is_empty() || line.starts_with("cost=") {
            continue;
        }
        if let Some(s) = line.strip_prefix("strategy=") {
            strategy = Some(Strategy::parse(s).map_err(|e| bad(&e.to_string()))?);
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad("expected `video_id within global`"));
        }
        let video = video_ids.iter().position(|v| v == f[0]).ok_or_else(|| bad("unknown video"))?;
        let within: usize = f[1].parse().ok().filter(|&w| w < k).ok_or_else(|| bad("bad within-video cluster"))?;
        global_of[video][within] = f[2].parse().map_err(|_| bad("bad global cluster"))?;
    }
    let strategy = strategy.ok_or_else(|| CliError::format(path, "missing strategy= line"))?;
    if global_of.iter().flatten().any(|&g| g == usize::MAX) {
        return Err(CliError::format(path, "assignment does not cover every within-video cluster"));
    }
    GlobalAssignment::from_labels(strategy, table, global_of).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn segments_to_text(labels: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for row in labels {
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

/// Parses `segments.txt`, checking each line against the expected frame count.
pub fn parse_segments(text: &str, path: &Path, frames: &[usize]) -> Result<Vec<Vec<usize>>> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != frames.len() {
        return Err(CliError::format(path, format!("{} lines, dataset has {} videos", lines.len(), frames.len())));
    }
    lines
        .iter()
        .zip(frames)
        .enumerate()
        .map(|(n, (line, &t))| {
            let row = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| CliError::format(path, format!("line {}: non-integer cluster id", n + 1)))?;
            if row.len() != t {
                return Err(CliError::format(path, format!("line {}: {} ids for {t} frames", n + 1, row.len())));
            }
            Ok(row)
        })
        .collect()
}

pub fn read_clusters(path: &Path, embeddings: &[EmbeddedSequence]) -> Result<Vec<WithinVideoClusters>> {
    parse_clusters(&read_text(path)?, path, embeddings)
}

pub fn read_assignment(path: &Path, video_ids: &[String], table: &CentroidTable) -> Result<GlobalAssignment> {
    parse_assignment(&read_text(path)?, path, video_ids, table)
}

pub fn read_segments(path: &Path, frames: &[usize]) -> Result<Vec<Vec<usize>>> {
    parse_segments(&read_text(path)?, path, frames)
}
