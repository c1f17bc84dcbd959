//! Rotated four-corner annotations to normalized horizontal boxes, label
//! files, and dataset statistics.
//!
//! The parser reads the canonical nine-field form
//! `x1 y1 x2 y2 x3 y3 x4 y4 class_id`. Raw files carrying extra columns
//! (orientation, flags) should be projected onto these fields before calling
//! [`parse_vedai`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::BBox;
use crate::pnm::Image;

pub const DEFAULT_IMAGE_SIZE: u32 = 1024;

/// Class names in their conventional id order.
pub const CLASS_NAMES: [&str; 9] = [
    "car", "truck", "pickup", "tractor", "camper", "ship", "van", "plane", "other",
];

const CLAMP_WARN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedBox {
    pub xs: [f64; 4],
    pub ys: [f64; 4],
    pub class_id: usize,
    /// Side of the square source image in pixels.
    pub image_size: u32,
}

fn min_max(v: &[f64; 4]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Axis-aligned hull of the rotated box, normalized by the image size.
pub fn convert_obb_to_hbb(r: &RotatedBox) -> Result<BBox> {
    if r.image_size == 0 {
        return Err(Error::InvalidValue("image size must be positive".into()));
    }
    if r.xs.iter().chain(&r.ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!("non-finite corner in {r:?}")));
    }
    let s = r.image_size as f64;
    let (min_x, max_x) = min_max(&r.xs);
    let (min_y, max_y) = min_max(&r.ys);
    if max_x == min_x || max_y == min_y {
        return Err(Error::DegenerateGeometry(format!(
            "box has zero width or height: x [{min_x}, {max_x}], y [{min_y}, {max_y}]"
        )));
    }

    let mut b = BBox {
        xc: (max_x + min_x) / (2.0 * s),
        yc: (max_y + min_y) / (2.0 * s),
        w: (max_x - min_x) / s,
        h: (max_y - min_y) / s,
    };
    let (x1, y1, x2, y2) = (min_x / s, min_y / s, max_x / s, max_y / s);
    let overshoot = [-x1, -y1, x2 - 1.0, y2 - 1.0]
        .into_iter()
        .fold(0.0f64, f64::max);
    if overshoot > 0.0 {
        if overshoot > CLAMP_WARN {
            log::warn!("box {r:?} extends {overshoot:.3e} beyond the image; clamping");
        }
        let (cx1, cy1) = (x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0));
        let (cx2, cy2) = (x2.clamp(0.0, 1.0), y2.clamp(0.0, 1.0));
        if cx2 <= cx1 || cy2 <= cy1 {
            return Err(Error::DegenerateGeometry(format!(
                "box {r:?} lies outside the image"
            )));
        }
        b = BBox {
            xc: (cx1 + cx2) / 2.0,
            yc: (cy1 + cy2) / 2.0,
            w: cx2 - cx1,
            h: cy2 - cy1,
        };
    }
    Ok(b)
}

/// Parses one annotation line. Blank and `#` lines yield `Ok(None)`.
pub fn parse_vedai(line: &str, line_no: usize, image_size: u32) -> Result<Option<RotatedBox>> {
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = content.split_whitespace().collect();
    if fields.len() != 9 {
        return Err(Error::Parse {
            line: line_no,
            message: format!(
                "expected 9 fields (x1 y1 x2 y2 x3 y3 x4 y4 class), got {}",
                fields.len()
            ),
        });
    }
    let mut coords = [0.0f64; 8];
    for (slot, f) in coords.iter_mut().zip(&fields) {
        *slot = f
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("invalid coordinate '{f}'"),
            })?;
    }
    let class_id = fields[8].parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("invalid class id '{}'", fields[8]),
    })?;
    Ok(Some(RotatedBox {
        xs: [coords[0], coords[2], coords[4], coords[6]],
        ys: [coords[1], coords[3], coords[5], coords[7]],
        class_id,
        image_size,
    }))
}

/// Parses a whole annotation file, numbering lines from 1.
pub fn parse_vedai_file(text: &str, image_size: u32) -> Result<Vec<RotatedBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(r) = parse_vedai(line, i + 1, image_size)? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Converts a whole annotation file into label-file text. Degenerate boxes
/// are reported with their line number.
pub fn convert_file(text: &str, image_size: u32) -> Result<String> {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let Some(r) = parse_vedai(line, i + 1, image_size)? else {
            continue;
        };
        let b = convert_obb_to_hbb(&r).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push_str(&write_label(&b, r.class_id));
        out.push('\n');
    }
    Ok(out)
}

/// `class xc yc w h` with six decimals.
pub fn write_label(b: &BBox, class_id: usize) -> String {
    format!("{class_id} {:.6} {:.6} {:.6} {:.6}", b.xc, b.yc, b.w, b.h)
}

pub fn parse_label(line: &str, line_no: usize) -> Result<Option<(usize, BBox)>> {
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let f: Vec<&str> = content.split_whitespace().collect();
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    if f.len() != 5 {
        return Err(err(format!(
            "expected 5 fields (class xc yc w h), got {}",
            f.len()
        )));
    }
    let class_id = f[0]
        .parse()
        .map_err(|_| err(format!("invalid class id '{}'", f[0])))?;
    let mut v = [0.0f64; 4];
    for (slot, s) in v.iter_mut().zip(&f[1..]) {
        *slot = s
            .parse()
            .map_err(|_| err(format!("invalid number '{s}'")))?;
    }
    let b = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?;
    Ok(Some((class_id, b)))
}

pub fn parse_labels(text: &str) -> Result<Vec<(usize, BBox)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(l) = parse_label(line, i + 1)? {
            out.push(l);
        }
    }
    Ok(out)
}

pub fn write_labels(labels: &[(usize, BBox)]) -> String {
    let mut out = String::new();
    for (c, b) in labels {
        out.push_str(&write_label(b, *c));
        out.push('\n');
    }
    out
}

/// Per-class counts plus center and size histograms on a `grid_n × grid_n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub grid_n: usize,
    pub class_counts: BTreeMap<usize, usize>,
    /// Row-major, row = y bin, column = x bin.
    pub position_hist: Vec<u64>,
    /// Row-major, row = h bin, column = w bin.
    pub size_hist: Vec<u64>,
}

fn bin(v: f64, n: usize) -> usize {
    ((v.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n - 1)
}

pub fn dataset_stats(labels: &[(usize, BBox)], grid_n: usize) -> Result<DatasetStats> {
    if grid_n == 0 {
        return Err(Error::Config("grid size must be at least 1".into()));
    }
    let mut stats = DatasetStats {
        grid_n,
        class_counts: BTreeMap::new(),
        position_hist: vec![0; grid_n * grid_n],
        size_hist: vec![0; grid_n * grid_n],
    };
    for (c, b) in labels {
        *stats.class_counts.entry(*c).or_default() += 1;
        stats.position_hist[bin(b.yc, grid_n) * grid_n + bin(b.xc, grid_n)] += 1;
        stats.size_hist[bin(b.h, grid_n) * grid_n + bin(b.w, grid_n)] += 1;
    }
    Ok(stats)
}

impl DatasetStats {
    pub fn total(&self) -> usize {
        self.class_counts.values().sum()
    }

    pub fn key_values(&self, class_names: &[&str]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "stats.total={}", self.total());
        for (c, n) in &self.class_counts {
            let name = class_names.get(*c).copied().unwrap_or("unknown");
            let _ = writeln!(out, "stats.class.{c}.name={name}");
            let _ = writeln!(out, "stats.class.{c}.count={n}");
        }
        let _ = writeln!(out, "stats.grid_n={}", self.grid_n);
        for (key, hist) in [("position", &self.position_hist), ("size", &self.size_hist)] {
            for row in 0..self.grid_n {
                let cells: Vec<String> = hist[row * self.grid_n..(row + 1) * self.grid_n]
                    .iter()
                    .map(u64::to_string)
                    .collect();
                let _ = writeln!(out, "stats.{key}.row{row}={}", cells.join(","));
            }
        }
        out
    }
}

/// Renders a square histogram as a grayscale heatmap, `cell` pixels per bin,
/// scaled so the fullest bin is white.
pub fn render_heatmap(hist: &[u64], grid_n: usize, cell: usize) -> Image {
    let side = grid_n * cell.max(1);
    let peak = hist.iter().copied().max().unwrap_or(0).max(1);
    let mut img = Image::new(side, side, 1);
    for y in 0..side {
        for x in 0..side {
            let v = hist[(y / cell.max(1)) * grid_n + x / cell.max(1)];
            img.pixel_mut(x, y)[0] = ((v as f64 / peak as f64) * 255.0).round() as u8;
        }
    }
    img
}
