//! Evaluation against ground truth.
//!
//! Predicted cluster ids are first matched to ground-truth classes by a
//! maximum-overlap Hungarian assignment, either pooled over the dataset or per
//! video. Scores are percentages. Frames whose ground truth equals the ignore
//! label are dropped before matching and scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::globalassign::hungarian;
use crate::matrix::Matrix;

/// Class assigned to clusters left over when there are more clusters than classes.
pub const NO_CLASS: i64 = i64::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchScope {
    /// One mapping pooled over all videos.
    Global,
    /// A separate mapping per video.
    Local,
}

impl MatchScope {
    pub fn name(self) -> &'static str {
        match self {
            MatchScope::Global => "global",
            MatchScope::Local => "local",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(MatchScope::Global),
            "local" => Ok(MatchScope::Local),
            other => Err(invalid!("unknown matching scope {other:?}")),
        }
    }
}

/// Cluster id to class id; clusters beyond the table map to `NO_CLASS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    pub classes: Vec<i64>,
}

impl LabelMapping {
    pub fn class_of(&self, cluster: usize) -> i64 {
        self.classes.get(cluster).copied().unwrap_or(NO_CLASS)
    }

    pub fn apply(&self, pred: &[usize]) -> Vec<i64> {
        pred.iter().map(|&c| self.class_of(c)).collect()
    }
}

fn check_inputs(pred: &[Vec<usize>], gt: &[Vec<i64>]) -> Result<()> {
    if pred.is_empty() {
        return Err(invalid!("no videos to evaluate"));
    }
    if pred.len() != gt.len() {
        return Err(invalid!("{} predicted videos but {} ground-truth videos", pred.len(), gt.len()));
    }
    for (n, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.len() != g.len() {
            return Err(invalid!("video {n}: {} predicted frames but {} labels", p.len(), g.len()));
        }
    }
    Ok(())
}

/// Maximum-overlap mapping for the frames of the given videos.
fn overlap_mapping<'a>(
    videos: impl Iterator<Item = (&'a [usize], &'a [i64])> + Clone,
    ignore_label: i64,
) -> Result<LabelMapping> {
    let clusters = videos.clone().flat_map(|(p, _)| p.iter().copied()).max().map_or(0, |m| m + 1);
    let mut class_index = BTreeMap::new();
    for (_, g) in videos.clone() {
        for &c in g.iter().filter(|&&c| c != ignore_label) {
            class_index.insert(c, 0);
        }
    }
    let classes: Vec<i64> = class_index.keys().copied().collect();
    for (i, v) in class_index.values_mut().enumerate() {
        *v = i;
    }
    let size = clusters.max(classes.len());
    if size == 0 {
        return Ok(LabelMapping { classes: Vec::new() });
    }
    // Rows are ranked by first appearance so that tie-breaking among equally
    // good matchings does not depend on the numeric cluster ids.
    let mut rank = vec![usize::MAX; clusters];
    let mut next = 0;
    for &c in videos.clone().flat_map(|(p, _)| p.iter()) {
        if rank[c] == usize::MAX {
            rank[c] = next;
            next += 1;
        }
    }
    for r in rank.iter_mut().filter(|r| **r == usize::MAX) {
        *r = next;
        next += 1;
    }
    let mut cost = Matrix::zeros(size, size);
    for (p, g) in videos {
        for (&cl, gl) in p.iter().zip(g) {
            if let Some(&j) = class_index.get(gl) {
                cost[(rank[cl], j)] -= 1.0;
            }
        }
    }
    let matching = hungarian(&cost)?;
    let classes = (0..clusters)
        .map(|i| classes.get(matching.perm[rank[i]]).copied().unwrap_or(NO_CLASS))
        .collect();
    Ok(LabelMapping { classes })
}

/// One mapping per video. Under global scope every entry is the same pooled mapping.
pub fn match_labels(
    pred: &[Vec<usize>],
    gt: &[Vec<i64>],
    scope: MatchScope,
    ignore_label: i64,
) -> Result<Vec<LabelMapping>> {
    check_inputs(pred, gt)?;
    match scope {
        MatchScope::Global => {
            let pooled = overlap_mapping(pred.iter().map(Vec::as_slice).zip(gt.iter().map(Vec::as_slice)), ignore_label)?;
            Ok(vec![pooled; pred.len()])
        }
        MatchScope::Local => pred
            .iter()
            .zip(gt)
            .map(|(p, g)| overlap_mapping(core::iter::once((p.as_slice(), g.as_slice())), ignore_label))
            .collect(),
    }
}

/// Applies per-video mappings.
pub fn apply_mappings(pred: &[Vec<usize>], mappings: &[LabelMapping]) -> Vec<Vec<i64>> {
    pred.iter().zip(mappings).map(|(p, m)| m.apply(p)).collect()
}

/// Frame accuracy pooled over all videos.
pub fn mof(pred: &[Vec<i64>], gt: &[Vec<i64>], ignore_label: i64) -> Result<f64> {
    let (mut correct, mut counted) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        for (a, b) in p.iter().zip(g) {
            if *b != ignore_label {
                counted += 1;
                correct += usize::from(a == b);
            }
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric("MoF: every frame carries the ignore label".into()));
    }
    Ok(100.0 * correct as f64 / counted as f64)
}

/// Mean over ground-truth classes of the pooled intersection over union.
pub fn ciou(pred: &[Vec<i64>], gt: &[Vec<i64>], ignore_label: i64) -> Result<f64> {
    // class -> (intersection, union)
    let mut counts: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for g in gt {
        for &c in g.iter().filter(|&&c| c != ignore_label) {
            counts.entry(c).or_default();
        }
    }
    if counts.is_empty() {
        return Err(Error::UndefinedMetric("cIoU: ground truth has no classes".into()));
    }
    for (p, g) in pred.iter().zip(gt) {
        for (&a, &b) in p.iter().zip(g) {
            if b == ignore_label {
                continue;
            }
            if a == b {
                let e = counts.get_mut(&b).expect("gt class registered");
                e.0 += 1;
                e.1 += 1;
            } else {
                counts.get_mut(&b).expect("gt class registered").1 += 1;
                if let Some(e) = counts.get_mut(&a) {
                    e.1 += 1;
                }
            }
        }
    }
    let sum: f64 = counts.values().map(|&(i, u)| i as f64 / u as f64).sum();
    Ok(100.0 * sum / counts.len() as f64)
}

/// Maximal constant runs as `(label, start, end)` with `end` exclusive.
pub fn segments<T: PartialEq + Copy>(labels: &[T]) -> Vec<(T, usize, usize)> {
    let mut out: Vec<(T, usize, usize)> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == l => last.2 = t + 1,
            _ => out.push((l, t, t + 1)),
        }
    }
    out
}

fn kept_frames(pred: &[i64], gt: &[i64], ignore_label: i64) -> (Vec<i64>, Vec<i64>) {
    pred.iter().zip(gt).filter(|(_, &g)| g != ignore_label).map(|(&p, &g)| (p, g)).unzip()
}

/// Segment-level F1 of one video, in `[0, 1]`.
///
/// A predicted segment is a true positive when more than half of its frames
/// carry its label in the ground truth and it wins the ground-truth segment of
/// that label it overlaps most. Claims are granted greedily by overlap.
pub fn video_f1(pred: &[i64], gt: &[i64]) -> f64 {
    let ps = segments(pred);
    let gs = segments(gt);
    if ps.is_empty() && gs.is_empty() {
        return 0.0;
    }
    // (overlap with the target gt segment, pred segment, gt segment)
    let mut claims = Vec::new();
    for (pi, &(label, start, end)) in ps.iter().enumerate() {
        let agreeing = (start..end).filter(|&t| gt[t] == label).count();
        if 2 * agreeing <= end - start {
            continue;
        }
        let target = gs
            .iter()
            .enumerate()
            .filter(|(_, g)| g.0 == label)
            .map(|(gi, g)| (end.min(g.2).saturating_sub(start.max(g.1)), gi))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .expect("an agreeing frame implies a gt segment of this label");
        claims.push((target.0, pi, target.1));
    }
    claims.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut claimed = vec![false; gs.len()];
    let mut tp = 0usize;
    for (_, _, gi) in claims {
        if !claimed[gi] {
            claimed[gi] = true;
            tp += 1;
        }
    }
    let precision = if ps.is_empty() { 0.0 } else { tp as f64 / ps.len() as f64 };
    let recall = if gs.is_empty() { 0.0 } else { tp as f64 / gs.len() as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Mean per-video segment F1; videos without counted frames are skipped.
pub fn f1_score(pred: &[Vec<i64>], gt: &[Vec<i64>], ignore_label: i64) -> Result<f64> {
    per_video_mean(pred, gt, ignore_label, "F1", video_f1)
}

/// Levenshtein distance between two symbol sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit score of one video, in `[0, 1]`.
pub fn video_edit(pred: &[i64], gt: &[i64]) -> f64 {
    let a: Vec<i64> = segments(pred).into_iter().map(|s| s.0).collect();
    let b: Vec<i64> = segments(gt).into_iter().map(|s| s.0).collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

/// Mean per-video edit score; videos without counted frames are skipped.
pub fn edit_score(pred: &[Vec<i64>], gt: &[Vec<i64>], ignore_label: i64) -> Result<f64> {
    per_video_mean(pred, gt, ignore_label, "edit", video_edit)
}

fn per_video_mean(
    pred: &[Vec<i64>],
    gt: &[Vec<i64>],
    ignore_label: i64,
    name: &str,
    score: fn(&[i64], &[i64]) -> f64,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        let (p, g) = kept_frames(p, g, ignore_label);
        if !g.is_empty() {
            sum += score(&p, &g);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(format!("{name}: no video has counted frames")));
    }
    Ok(100.0 * sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMetrics {
    pub video_id: String,
    /// `None` when every frame is ignored.
    pub mof: Option<f64>,
    pub f1: Option<f64>,
    pub edit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mof: f64,
    pub ciou: f64,
    pub f1: f64,
    pub edit: f64,
    pub scope: MatchScope,
    pub ignore_label: i64,
    /// Frames excluded because their ground truth is the ignore label.
    pub ignored_frames: usize,
    pub per_video: Vec<VideoMetrics>,
}

/// Matches, maps and scores a whole dataset.
pub fn evaluate(
    video_ids: &[String],
    pred: &[Vec<usize>],
    gt: &[Vec<i64>],
    scope: MatchScope,
    ignore_label: i64,
) -> Result<MetricsReport> {
    if video_ids.len() != pred.len() {
        return Err(invalid!("{} video ids for {} predictions", video_ids.len(), pred.len()));
    }
    let mappings = match_labels(pred, gt, scope, ignore_label)?;
    let mapped = apply_mappings(pred, &mappings);
    let per_video = video_ids
        .iter()
        .zip(mapped.iter().zip(gt))
        .map(|(id, (p, g))| {
            let one = |f: fn(&[i64], &[i64]) -> f64| {
                let (p, g) = kept_frames(p, g, ignore_label);
                (!g.is_empty()).then(|| 100.0 * f(&p, &g))
            };
            VideoMetrics {
                video_id: id.clone(),
                mof: mof(core::slice::from_ref(p), core::slice::from_ref(g), ignore_label).ok(),
                f1: one(video_f1),
                edit: one(video_edit),
            }
        })
        .collect();
    Ok(MetricsReport {
        mof: mof(&mapped, gt, ignore_label)?,
        ciou: ciou(&mapped, gt, ignore_label)?,
        f1: f1_score(&mapped, gt, ignore_label)?,
        edit: edit_score(&mapped, gt, ignore_label)?,
        scope,
        ignore_label,
        ignored_frames: gt.iter().flatten().filter(|&&c| c == ignore_label).count(),
        per_video,
    })
}

impl MetricsReport {
    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "mof={:.4}\nciou={:.4}\nf1={:.4}\nedit={:.4}\nscope={}\n",
            self.mof,
            self.ciou,
            self.f1,
            self.edit,
            self.scope.name()
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| String::from("n/a"), |v| format!("{v:.2}"))
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "matching: {} Hungarian", self.scope.name())?;
        writeln!(f, "ignore label: {} ({} frames excluded)", self.ignore_label, self.ignored_frames)?;
        writeln!(f, "MoF   {:6.2}", self.mof)?;
        writeln!(f, "cIoU  {:6.2}", self.ciou)?;
        writeln!(f, "F1    {:6.2}", self.f1)?;
        writeln!(f, "Edit  {:6.2}", self.edit)?;
        writeln!(f, "per video (MoF / F1 / Edit):")?;
        for v in &self.per_video {
            writeln!(f, "  {}  {} / {} / {}", v.video_id, opt(v.mof), opt(v.f1), opt(v.edit))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IGNORE_LABEL;

    #[test]
    fn worked_examples() {
        let gt = vec![vec![0, 0, 1, 1]];
        let pred = vec![vec![0, 1, 1, 1]];
        assert_eq!(mof(&pred, &gt, IGNORE_LABEL).unwrap(), 75.0);
        assert!((ciou(&pred, &gt, IGNORE_LABEL).unwrap() - 175.0 / 3.0).abs() < 1e-12);
        let e = video_edit(&[0, 1, 0], &[0, 1]);
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn overlap_table_mapping() {
        // overlaps: cluster 0 hits class 0 three times; cluster 1 hits class 0 once and class 1 twice.
        let pred = vec![vec![0, 0, 0, 1, 1, 1]];
        let gt = vec![vec![0, 0, 0, 0, 1, 1]];
        let m = match_labels(&pred, &gt, MatchScope::Global, IGNORE_LABEL).unwrap();
        assert_eq!(m[0].classes, vec![0, 1]);
    }

    #[test]
    fn surplus_clusters_map_to_no_class() {
        let pred = vec![vec![2, 0, 1]];
        let gt = vec![vec![7, 7, 7]];
        let m = match_labels(&pred, &gt, MatchScope::Local, IGNORE_LABEL).unwrap();
        assert_eq!(m[0].classes.iter().filter(|&&c| c == NO_CLASS).count(), 2);
    }

    #[test]
    fn all_ignored_is_undefined() {
        let gt = vec![vec![IGNORE_LABEL; 3]];
        assert!(matches!(mof(&[vec![0, 0, 0]], &gt, IGNORE_LABEL), Err(Error::UndefinedMetric(_))));
        assert!(match_labels(&[], &[], MatchScope::Global, IGNORE_LABEL).is_err());
    }

    #[test]
    fn f1_penalizes_oversegmentation() {
        let gt = vec![0i64; 20];
        let pred: Vec<i64> = (0..20).map(|t| (t / 2 % 2) as i64).collect();
        let f1 = video_f1(&pred, &gt);
        // one true positive, ten predicted segments, one gt segment
        assert!((f1 - 2.0 * 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn single_segment_recall_is_at_most_half() {
        let f1 = video_f1(&[0, 0, 0, 0, 0], &[0, 0, 0, 1, 1]);
        // precision 1, recall 1/2
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(video_f1(&[0, 0, 0, 0], &[0, 0, 1, 1]), 0.0);
    }

    #[test]
    fn levenshtein_cases() {
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein::<u8>(&[], b"ab"), 2);
        assert_eq!(video_edit(&[1, 1, 2], &[3, 4]), 0.0);
    }

    #[test]
    fn ignored_frames_are_dropped_before_segmenting() {
        let gt = vec![vec![0, IGNORE_LABEL, 0]];
        let pred = vec![vec![0, 1, 0]];
        assert_eq!(edit_score(&pred, &gt, IGNORE_LABEL).unwrap(), 100.0);
        assert_eq!(f1_score(&pred, &gt, IGNORE_LABEL).unwrap(), 100.0);
    }

    #[test]
    fn report_lines() {
        let ids = vec![String::from("a")];
        let r = evaluate(&ids, &[vec![1, 1, 0]], &[vec![5, 5, 6]], MatchScope::Global, IGNORE_LABEL).unwrap();
        assert_eq!(r.key_values(), "mof=100.0000\nciou=100.0000\nf1=100.0000\nedit=100.0000\nscope=global\n");
    }
}
