//! Mosaic augmentation for aligned RGB/thermal pairs.
//!
//! Four tiles are composed around one random split point. Each tile is scaled
//! uniformly until it covers its quadrant, anchored at the split point, and
//! cropped by the canvas edge. The pixel lookup table of a tile is built once
//! and applied to both planes, so RGB and IR always receive the same geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::BBox;
use crate::pnm::Image;

/// Labels whose clipped area falls below this fraction of the canvas are dropped.
pub const MIN_LABEL_AREA: f64 = 1e-4;

/// An aligned RGB (3-channel) and IR (1-channel) image pair with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub rgb: Image,
    pub ir: Image,
    pub labels: Vec<(usize, BBox)>,
}

impl ImagePair {
    pub fn new(rgb: Image, ir: Image, labels: Vec<(usize, BBox)>) -> Result<Self> {
        let pair = Self { rgb, ir, labels };
        pair.check(0)?;
        Ok(pair)
    }

    fn check(&self, index: usize) -> Result<()> {
        if self.rgb.channels() != 3 || self.ir.channels() != 1 {
            return Err(Error::InvalidValue(format!(
                "tile {index}: rgb must have 3 channels and ir 1, got {} and {}",
                self.rgb.channels(),
                self.ir.channels()
            )));
        }
        if self.rgb.width() != self.ir.width() || self.rgb.height() != self.ir.height() {
            return Err(Error::Alignment {
                index,
                rgb_width: self.rgb.width(),
                rgb_height: self.rgb.height(),
                ir_width: self.ir.width(),
                ir_height: self.ir.height(),
            });
        }
        if self.rgb.width() == 0 || self.rgb.height() == 0 {
            return Err(Error::InvalidValue(format!("tile {index} is empty")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosaicConfig {
    /// Side of the square output canvas in pixels.
    pub out_size: usize,
    /// The split point is drawn uniformly from `[0.5 − j, 0.5 + j]` of the canvas.
    pub center_jitter: f64,
    pub seed: u64,
}

impl Default for MosaicConfig {
    fn default() -> Self {
        Self {
            out_size: 640,
            center_jitter: 0.25,
            seed: 0,
        }
    }
}

impl MosaicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_size == 0 {
            return Err(Error::Config("mosaic size must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.center_jitter) {
            return Err(Error::Config(format!(
                "center jitter {} outside [0, 0.5]",
                self.center_jitter
            )));
        }
        Ok(())
    }
}

/// Axis-aligned clipping rectangle in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl ClipRect {
    pub const UNIT: ClipRect = ClipRect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Maps `b` through `p ↦ offset + scale·p`, clips it to `canvas`, and returns
/// it relative to the canvas. `None` when the surviving area is below
/// [`MIN_LABEL_AREA`] of the canvas.
pub fn remap_box(
    b: &BBox,
    scale: (f64, f64),
    offset: (f64, f64),
    canvas: &ClipRect,
) -> Option<BBox> {
    let (x1, y1, x2, y2) = b.corners();
    let nx1 = (offset.0 + scale.0 * x1).clamp(canvas.x0, canvas.x1);
    let ny1 = (offset.1 + scale.1 * y1).clamp(canvas.y0, canvas.y1);
    let nx2 = (offset.0 + scale.0 * x2).clamp(canvas.x0, canvas.x1);
    let ny2 = (offset.1 + scale.1 * y2).clamp(canvas.y0, canvas.y1);
    let (w, h) = (nx2 - nx1, ny2 - ny1);
    if w <= 0.0 || h <= 0.0 || w * h < MIN_LABEL_AREA * canvas.area() {
        return None;
    }
    let (cw, ch) = (canvas.x1 - canvas.x0, canvas.y1 - canvas.y0);
    Some(BBox {
        xc: ((nx1 + nx2) / 2.0 - canvas.x0) / cw,
        yc: ((ny1 + ny2) / 2.0 - canvas.y0) / ch,
        w: w / cw,
        h: h / ch,
    })
}

/// Placement of one tile on the canvas, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Placement {
    /// Quadrant `[qx0, qx1) × [qy0, qy1)` the tile fills.
    qx0: usize,
    qy0: usize,
    qx1: usize,
    qy1: usize,
    /// Uniform tile scale.
    scale: f64,
    /// Canvas position of the tile's top-left corner (may be negative).
    ox: f64,
    oy: f64,
}

fn place(quadrant: usize, cx: usize, cy: usize, size: usize, tw: usize, th: usize) -> Placement {
    let (qx0, qx1) = if quadrant.is_multiple_of(2) {
        (0, cx)
    } else {
        (cx, size)
    };
    let (qy0, qy1) = if quadrant < 2 { (0, cy) } else { (cy, size) };
    let scale = ((qx1 - qx0) as f64 / tw as f64).max((qy1 - qy0) as f64 / th as f64);
    let (sw, sh) = (tw as f64 * scale, th as f64 * scale);
    let ox = if quadrant.is_multiple_of(2) {
        cx as f64 - sw
    } else {
        cx as f64
    };
    let oy = if quadrant < 2 {
        cy as f64 - sh
    } else {
        cy as f64
    };
    Placement {
        qx0,
        qy0,
        qx1,
        qy1,
        scale,
        ox,
        oy,
    }
}

/// Draws the split point. This is the only use of the RNG.
fn split_point(cfg: &MosaicConfig) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.out_size as f64;
    let ux: f64 = rng.gen_range(-1.0..=1.0);
    let uy: f64 = rng.gen_range(-1.0..=1.0);
    let pick = |u: f64| ((0.5 + cfg.center_jitter * u) * s).round().clamp(0.0, s) as usize;
    (pick(ux), pick(uy))
}

/// Composes four aligned pairs (top-left, top-right, bottom-left, bottom-right)
/// into one pair of side `cfg.out_size`.
pub fn mosaic_pair(tiles: &[ImagePair], cfg: &MosaicConfig) -> Result<ImagePair> {
    if tiles.len() != 4 {
        return Err(Error::Arity {
            expected: 4,
            actual: tiles.len(),
        });
    }
    cfg.validate()?;
    for (i, t) in tiles.iter().enumerate() {
        t.check(i)?;
    }

    let size = cfg.out_size;
    let (cx, cy) = split_point(cfg);
    let mut rgb = Image::new(size, size, 3);
    let mut ir = Image::new(size, size, 1);
    let mut labels = Vec::new();

    for (k, tile) in tiles.iter().enumerate() {
        let (tw, th) = (tile.rgb.width(), tile.rgb.height());
        let p = place(k, cx, cy, size, tw, th);
        if p.qx1 == p.qx0 || p.qy1 == p.qy0 {
            continue;
        }
        let src = |pos: usize, origin: f64, limit: usize| {
            (((pos as f64 + 0.5 - origin) / p.scale).floor().max(0.0) as usize).min(limit - 1)
        };
        let xs: Vec<usize> = (p.qx0..p.qx1).map(|x| src(x, p.ox, tw)).collect();
        for y in p.qy0..p.qy1 {
            let sy = src(y, p.oy, th);
            for (x, &sx) in (p.qx0..p.qx1).zip(&xs) {
                rgb.pixel_mut(x, y).copy_from_slice(tile.rgb.pixel(sx, sy));
                ir.pixel_mut(x, y).copy_from_slice(tile.ir.pixel(sx, sy));
            }
        }

        let s = size as f64;
        let scale = (tw as f64 * p.scale / s, th as f64 * p.scale / s);
        let offset = (p.ox / s, p.oy / s);
        labels.extend(
            tile.labels.iter().filter_map(|(c, b)| {
                remap_box(b, scale, offset, &ClipRect::UNIT).map(|nb| (*c, nb))
            }),
        );
    }
    Ok(ImagePair { rgb, ir, labels })
}

/// Per-sample seed for batch generation.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Builds one mosaic per group of four tiles; sample `i` uses
/// [`sample_seed`]`(cfg.seed, i)`. Output order matches input order.
pub fn mosaic_batch(
    groups: &[Vec<ImagePair>],
    cfg: &MosaicConfig,
    threads: usize,
) -> Result<Vec<ImagePair>> {
    let one = |(i, g): (usize, &Vec<ImagePair>)| {
        let c = MosaicConfig {
            seed: sample_seed(cfg.seed, i),
            ..*cfg
        };
        mosaic_pair(g, &c)
    };
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| groups.par_iter().enumerate().map(one).collect())
    } else {
        groups.iter().enumerate().map(one).collect()
    }
}
