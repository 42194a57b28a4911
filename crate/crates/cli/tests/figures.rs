use std::collections::BTreeSet;

use tempseg::svg::{band_offset, gray_level, render_segmentation_svg, render_similarity_svg, Palette, BAND_WIDTH};
use tempseg_core::Matrix;

/// `(x, width, fill)` of every rect inside each band row.
fn band_rows(svg: &str) -> Vec<Vec<(u64, u64, String)>> {
    let mut rows = Vec::new();
    for chunk in svg.split("<g class=\"row\"").skip(1) {
        let body = chunk.split("</g>").next().unwrap();
        let rects = body
            .split("<rect ")
            .skip(1)
            .map(|r| {
                let attr = |name: &str| {
                    let start = r.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                    r[start..].split('"').next().unwrap().to_string()
                };
                (attr("x").parse().unwrap(), attr("width").parse().unwrap(), attr("fill"))
            })
            .collect();
        rows.push(rects);
    }
    rows
}

fn fills(svg: &str) -> Vec<String> {
    svg.split("fill=\"").skip(1).map(|s| s.split('"').next().unwrap().to_string()).collect()
}

#[test]
fn two_rows_partition_the_width() {
    let gt = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
    let pred = [0, 0, 1, 1, 1, 1, 1, 1, 2, 2];
    let svg = render_segmentation_svg(&gt, &[("prediction", &pred)], &Palette::default()).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let rows = band_rows(&svg);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let mut x = 0;
        for (start, width, _) in row {
            assert_eq!(*start, x);
            x += width;
        }
        assert_eq!(x, BAND_WIDTH);
    }
    let colors: BTreeSet<String> = rows.iter().flatten().map(|r| r.2.clone()).collect();
    assert!(colors.len() <= 3 + 1);
    // class colors are shared between rows
    assert_eq!(rows[0][0].2, rows[1][0].2);
    assert!(svg.contains("class 2"));
}

#[test]
fn ground_truth_only_figure() {
    let svg = render_segmentation_svg(&[3, 3, 4], &[], &Palette::default()).unwrap();
    assert_eq!(band_rows(&svg).len(), 1);
    assert!(render_segmentation_svg(&[1, 2], &[("p", &[1])], &Palette::default()).is_err());
}

#[test]
fn offsets_cover_long_sequences_exactly() {
    for frames in [1, 7, 799, 800, 801, 5000] {
        assert_eq!(band_offset(0, frames), 0);
        assert_eq!(band_offset(frames, frames), BAND_WIDTH);
        for t in 1..=frames {
            assert!(band_offset(t, frames) >= band_offset(t - 1, frames));
        }
    }
}

#[test]
fn identity_similarity_has_dark_diagonal() {
    let svg = render_similarity_svg(&Matrix::identity(4)).unwrap();
    assert!(fills(&svg).contains(&"rgb(0,0,0)".to_string()));
    assert!(fills(&svg).contains(&"rgb(255,255,255)".to_string()));
    assert_eq!(gray_level(1.0), 0);
    assert_eq!(gray_level(0.0), 255);
}

#[test]
fn all_ones_is_uniformly_dark() {
    let svg = render_similarity_svg(&Matrix::filled(6, 6, 1.0)).unwrap();
    let f = fills(&svg);
    assert_eq!(f.len(), 6);
    assert!(f.iter().all(|c| c == "rgb(0,0,0)"));
}

#[test]
fn block_diagonal_shows_blocks() {
    let mut g = Matrix::zeros(4, 4);
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
        g[(i, j)] = 1.0;
    }
    let svg = render_similarity_svg(&g).unwrap();
    let f = fills(&svg);
    assert_eq!(f, ["rgb(0,0,0)", "rgb(255,255,255)", "rgb(0,0,0)", "rgb(255,255,255)", "rgb(255,255,255)", "rgb(0,0,0)", "rgb(255,255,255)", "rgb(0,0,0)"]);
    assert!(render_similarity_svg(&Matrix::zeros(2, 3)).is_err());
}
