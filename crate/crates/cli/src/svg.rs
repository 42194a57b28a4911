//! Static SVG figures: segmentation bands and similarity heatmaps.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use tempseg_core::data::IGNORE_LABEL;
use tempseg_core::metrics::{segments, NO_CLASS};
use tempseg_core::Matrix;

use crate::error::{CliError, Result};

/// Width of the band area in pixels.
pub const BAND_WIDTH: u64 = 800;
const LEFT: u64 = 130;
const ROW_HEIGHT: u64 = 24;
const ROW_GAP: u64 = 8;
const HEATMAP_SIZE: usize = 480;

/// Class colors. Labels cycle through the list.
#[derive(Debug, Clone)]
pub struct Palette {
    pub colors: Vec<String>,
}

impl Default for Palette {
    fn default() -> Self {
        let colors = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
            "#17becf",
        ];
        Palette { colors: colors.iter().map(|c| c.to_string()).collect() }
    }
}

impl Palette {
    pub fn color(&self, label: i64) -> &str {
        match label {
            IGNORE_LABEL => "#e0e0e0",
            NO_CLASS => "#000000",
            l => &self.colors[l.rem_euclid(self.colors.len() as i64) as usize],
        }
    }

    fn legend_name(label: i64) -> String {
        match label {
            IGNORE_LABEL => "ignored".into(),
            NO_CLASS => "unmatched".into(),
            l => format!("class {l}"),
        }
    }
}

/// Pixel offset of frame boundary `t` in a row of `frames` frames.
/// Offsets are rounded once per boundary, so adjacent bands share edges and a
/// row spans exactly `[0, BAND_WIDTH]`.
pub fn band_offset(t: usize, frames: usize) -> u64 {
    (2 * t as u64 * BAND_WIDTH + frames as u64) / (2 * frames as u64)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Ground truth as the first row, then one band row per named prediction.
pub fn render_segmentation_svg(gt: &[i64], predictions: &[(&str, &[i64])], palette: &Palette) -> Result<String> {
    let frames = gt.len();
    if frames == 0 {
        return Err(CliError::Usage("cannot plot an empty sequence".into()));
    }
    if let Some((name, _)) = predictions.iter().find(|(_, p)| p.len() != frames) {
        return Err(CliError::Usage(format!("row {name:?} length differs from the {frames}-frame ground truth")));
    }
    let rows: Vec<(&str, &[i64])> = std::iter::once(("ground truth", gt)).chain(predictions.iter().copied()).collect();
    let labels: BTreeSet<i64> = rows.iter().flat_map(|(_, r)| r.iter().copied()).collect();

    let legend_y = rows.len() as u64 * (ROW_HEIGHT + ROW_GAP) + ROW_GAP;
    let height = legend_y + 20 * labels.len() as u64 + ROW_GAP;
    let width = LEFT + BAND_WIDTH + 10;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    for (i, (name, row)) in rows.iter().enumerate() {
        let y = ROW_GAP + i as u64 * (ROW_HEIGHT + ROW_GAP);
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>",
            LEFT - 8,
            y + ROW_HEIGHT / 2 + 4,
            escape(name)
        )
        .expect("writing to a String");
        writeln!(svg, "<g class=\"row\" transform=\"translate({LEFT},{y})\">").expect("writing to a String");
        for (label, start, end) in segments(row) {
            let x0 = band_offset(start, frames);
            let x1 = band_offset(end, frames);
            writeln!(
                svg,
                "<rect x=\"{x0}\" y=\"0\" width=\"{}\" height=\"{ROW_HEIGHT}\" fill=\"{}\"/>",
                x1 - x0,
                palette.color(label)
            )
            .expect("writing to a String");
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("<g class=\"legend\">\n");
    for (i, &label) in labels.iter().enumerate() {
        let y = legend_y + 20 * i as u64;
        writeln!(
            svg,
            "<rect x=\"{LEFT}\" y=\"{y}\" width=\"14\" height=\"14\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            palette.color(label),
            LEFT + 20,
            y + 11,
            Palette::legend_name(label)
        )
        .expect("writing to a String");
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

/// Gray level of an affinity: 1 is black, 0 is white.
pub fn gray_level(v: f64) -> u8 {
    (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8
}

/// Grayscale heatmap of a square affinity matrix. Runs of equal gray within a
/// row are merged into one rectangle.
pub fn render_similarity_svg(g: &Matrix) -> Result<String> {
    let (n, m) = g.shape();
    if n != m || n == 0 {
        return Err(CliError::Usage(format!("similarity matrix must be square and nonempty, got {n}×{m}")));
    }
    let cell = (HEATMAP_SIZE / n).max(1);
    let size = cell * n;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\" shape-rendering=\"crispEdges\">\n"
    );
    for i in 0..n {
        let levels: Vec<u8> = g.row(i).iter().map(|&v| gray_level(v)).collect();
        let mut j = 0;
        while j < n {
            let mut end = j + 1;
            while end < n && levels[end] == levels[j] {
                end += 1;
            }
            let l = levels[j];
            writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{cell}\" fill=\"rgb({l},{l},{l})\"/>",
                j * cell,
                i * cell,
                (end - j) * cell
            )
            .expect("writing to a String");
            j = end;
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
