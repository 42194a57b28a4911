//! Plain-text dataset files.
//!
//! * feature file: one frame per line, `D` space-separated numbers
//! * label file: one integer per line
//! * manifest: `video_id feature_path [label_path]` per line, paths relative
//!   to the manifest's directory; blank lines and `#` comments are skipped
//!
//! Numbers are written with 9 significant digits, so a matrix that was read
//! from such a file saves and reloads bit for bit.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tempseg_core::data::{common_dim, FeatureSequence};
use tempseg_core::Matrix;

use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Formats a number with 9 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn matrix_to_text(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 16);
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let start = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::format(path, format!("line {}: {tok:?} is not a number", n + 1)))?;
            data.push(v);
        }
        let width = data.len() - start;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(CliError::format(path, format!("line {}: {width} values, expected {c}", n + 1)));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::format(path, "file contains no frames"))?;
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read_text(path)?, path)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &matrix_to_text(m))
}

pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::format(path, format!("line {}: {:?} is not an integer label", n + 1, l.trim())))
        })
        .collect()
}

pub fn labels_to_text(labels: &[i64]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        writeln!(out, "{l}").expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
}

/// Parses a manifest; paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in read_text(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(CliError::format(
                path,
                format!("line {}: expected `video_id feature_path [label_path]`", n + 1),
            ));
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(CliError::format(path, format!("line {}: duplicate video id {}", n + 1, fields[0])));
        }
        entries.push(ManifestEntry {
            video_id: fields[0].to_string(),
            features: base.join(fields[1]),
            labels: fields.get(2).map(|p| base.join(p)),
        });
    }
    if entries.is_empty() {
        return Err(CliError::format(path, "manifest lists no videos"));
    }
    Ok(entries)
}

/// Loads and validates every video listed in a manifest.
pub fn load_dataset(manifest: &Path) -> Result<Vec<FeatureSequence>> {
    let entries = read_manifest(manifest)?;
    let mut videos = Vec::with_capacity(entries.len());
    for e in entries {
        let features = read_matrix(&e.features)?;
        let labels = e.labels.as_deref().map(read_labels).transpose()?;
        if let (Some(l), Some(p)) = (&labels, &e.labels) {
            if l.len() != features.rows() {
                return Err(CliError::format(
                    p,
                    format!("video {}: {} labels for {} frames", e.video_id, l.len(), features.rows()),
                ));
            }
        }
        let seq = FeatureSequence::new(e.video_id, features, labels)
            .map_err(|err| CliError::format(&e.features, err.to_string()))?;
        videos.push(seq);
    }
    common_dim(&videos).map_err(|err| CliError::format(manifest, err.to_string()))?;
    Ok(videos)
}

fn check_video_id(id: &str) -> Result<()> {
    let bad = id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') || id.starts_with('.');
    if bad {
        return Err(CliError::Usage(format!("video id {id:?} cannot be used as a file name")));
    }
    Ok(())
}

/// Writes `features/<id>.txt`, `labels/<id>.txt` and the manifest under `dir`.
pub fn save_dataset(dir: &Path, videos: &[FeatureSequence]) -> Result<PathBuf> {
    let mut manifest = String::new();
    for v in videos {
        check_video_id(&v.video_id)?;
        let feat = format!("features/{}.txt", v.video_id);
        write_matrix(&dir.join(&feat), &v.features)?;
        match &v.gt_labels {
            Some(gt) => {
                let lab = format!("labels/{}.txt", v.video_id);
                write_text(&dir.join(&lab), &labels_to_text(gt))?;
                writeln!(manifest, "{} {feat} {lab}", v.video_id).expect("writing to a String");
            }
            None => writeln!(manifest, "{} {feat}", v.video_id).expect("writing to a String"),
        }
    }
    let path = dir.join(MANIFEST_NAME);
    write_text(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(1.0), "1.00000000e0");
        assert_eq!(fmt_num(-0.000123456789123), "-1.23456789e-4");
    }

    #[test]
    fn ragged_and_non_numeric_rows_are_rejected() {
        let p = Path::new("x.txt");
        let e = parse_matrix("1 2\n3\n", p).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = parse_matrix("1 2\n3 abc\n", p).unwrap_err().to_string();
        assert!(e.contains("abc"), "{e}");
        assert!(parse_matrix("\n", p).is_err());
    }
}
