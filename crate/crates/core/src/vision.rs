//! Transmitter-side vision stages: main-object segmentation, block detection,
//! center-distance block fusion, and the NLL segmentation loss.
//!
//! Segmentation and detection are deterministic stand-ins built on 4-connected
//! component labeling of non-background pixels. Fusion groups detections whose
//! centers are closer than `epsilon`, closed transitively with a union-find.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::image::ImageBuffer;

/// Probabilities are clamped from below before taking the log.
pub const NLL_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum VisionError {
    #[error("image has no foreground pixels")]
    NoForeground,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(&'static str),
}

/// Axis-aligned box in continuous pixel coordinates: it spans
/// `[cx - halfw, cx + halfw) × [cy - halfh, cy + halfh)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub halfw: f64,
    pub halfh: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, halfw: f64, halfh: f64) -> Self {
        assert!(halfw > 0.0 && halfh > 0.0, "box half-extents must be positive");
        Self {
            cx,
            cy,
            halfw,
            halfh,
        }
    }

    /// Tight box around the inclusive pixel range `x0..=x1`, `y0..=y1`.
    pub fn from_pixel_range(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        let (x0, y0, x1, y1) = (f64::from(x0), f64::from(y0), f64::from(x1) + 1.0, f64::from(y1) + 1.0);
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, (x1 - x0) / 2.0, (y1 - y0) / 2.0)
    }

    pub fn min_x(&self) -> f64 {
        self.cx - self.halfw
    }

    pub fn max_x(&self) -> f64 {
        self.cx + self.halfw
    }

    pub fn min_y(&self) -> f64 {
        self.cy - self.halfh
    }

    pub fn max_y(&self) -> f64 {
        self.cy + self.halfh
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BBox) -> BBox {
        let x0 = self.min_x().min(other.min_x());
        let y0 = self.min_y().min(other.min_y());
        let x1 = self.max_x().max(other.max_x());
        let y1 = self.max_y().max(other.max_y());
        BBox::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, (x1 - x0) / 2.0, (y1 - y0) / 2.0)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.min_x() && x <= self.max_x() && y >= self.min_y() && y <= self.max_y()
    }

    /// Integer pixel rectangle `(x0, y0, w, h)` covering the box, clipped to a
    /// `width × height` image.
    pub fn pixel_rect(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let clip = |v: f64, hi: u32| v.max(0.0).min(f64::from(hi)) as u32;
        let x0 = clip(self.min_x().floor(), width);
        let y0 = clip(self.min_y().floor(), height);
        let x1 = clip(self.max_x().ceil(), width);
        let y1 = clip(self.max_y().ceil(), height);
        (x0, y0, x1 - x0, y1 - y0)
    }

    fn order(&self, other: &BBox) -> Ordering {
        self.cy
            .total_cmp(&other.cy)
            .then(self.cx.total_cmp(&other.cx))
    }
}

/// A group of fused detections and its crop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub bbox: BBox,
    /// Indices into the detection list, ascending.
    pub members: Vec<usize>,
    #[serde(skip)]
    pub pixels: ImageBuffer,
}

/// The largest foreground component, cropped to its tight box.
#[derive(Clone, Debug, PartialEq)]
pub struct MainSlice {
    pub bbox: BBox,
    pub pixels: ImageBuffer,
    /// Row-major over the crop; `true` where the component lies.
    pub mask: Vec<bool>,
}

impl MainSlice {
    /// Builds a slice from received pixels placed at `(x0, y0)`. The mask is
    /// every non-background pixel of the crop and may be empty after noise.
    pub fn from_received(x0: u32, y0: u32, pixels: ImageBuffer) -> Option<Self> {
        if pixels.width() == 0 || pixels.height() == 0 {
            return None;
        }
        let bbox = BBox::from_pixel_range(x0, y0, x0 + pixels.width() - 1, y0 + pixels.height() - 1);
        let mask = (0..pixels.height())
            .flat_map(|y| (0..pixels.width()).map(move |x| (x, y)))
            .map(|(x, y)| !pixels.is_background(x, y))
            .collect();
        Some(Self { bbox, pixels, mask })
    }

    /// Top-left pixel of the slice in image coordinates.
    pub fn origin(&self) -> (u32, u32) {
        (self.bbox.min_x().round() as u32, self.bbox.min_y().round() as u32)
    }
}

struct Component {
    pixels: Vec<(u32, u32)>,
    bbox: BBox,
}

/// 4-connected components of non-background pixels, in raster order of their
/// first pixel.
fn components(img: &ImageBuffer) -> Vec<Component> {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w as usize * h as usize];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            let idx = (sy * w + sx) as usize;
            if seen[idx] || img.is_background(sx, sy) {
                continue;
            }
            seen[idx] = true;
            queue.push_back((sx, sy));
            let mut pixels = Vec::new();
            let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
            while let Some((x, y)) = queue.pop_front() {
                pixels.push((x, y));
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
                let mut visit = |nx: u32, ny: u32| {
                    let n = (ny * w + nx) as usize;
                    if !seen[n] && !img.is_background(nx, ny) {
                        seen[n] = true;
                        queue.push_back((nx, ny));
                    }
                };
                if x > 0 {
                    visit(x - 1, y);
                }
                if x + 1 < w {
                    visit(x + 1, y);
                }
                if y > 0 {
                    visit(x, y - 1);
                }
                if y + 1 < h {
                    visit(x, y + 1);
                }
            }
            out.push(Component {
                pixels,
                bbox: BBox::from_pixel_range(x0, y0, x1, y1),
            });
        }
    }
    out
}

/// One box per connected foreground component, ordered by `(cy, cx)`.
pub fn detect_blocks(image: &ImageBuffer) -> Vec<BBox> {
    let mut boxes: Vec<BBox> = components(image).into_iter().map(|c| c.bbox).collect();
    boxes.sort_by(BBox::order);
    boxes
}

/// Crops the largest-area component. Ties go to the component first in
/// `(cy, cx)` order.
pub fn segment_main(image: &ImageBuffer) -> Result<MainSlice, VisionError> {
    let mut comps = components(image);
    comps.sort_by(|a, b| a.bbox.order(&b.bbox));
    let best = comps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.pixels.len().cmp(&b.pixels.len()).then(ib.cmp(ia)))
        .map(|(_, c)| c)
        .ok_or(VisionError::NoForeground)?;
    let (x0, y0, cw, ch) = best.bbox.pixel_rect(image.width(), image.height());
    let pixels = image.crop(x0, y0, cw, ch);
    let mut mask = vec![false; cw as usize * ch as usize];
    for &(x, y) in &best.pixels {
        mask[((y - y0) * cw + (x - x0)) as usize] = true;
    }
    Ok(MainSlice {
        bbox: best.bbox,
        pixels,
        mask,
    })
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partitions detections into blocks: two boxes share a block iff they are
/// linked by a chain of pairs with center distance strictly below `epsilon`.
/// Blocks are ordered by `(cy, cx)` of their union box.
pub fn fuse_blocks(image: &ImageBuffer, boxes: &[BBox], epsilon: f64) -> Vec<Block> {
    let mut dsu = DisjointSet::new(boxes.len());
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if center_distance(&boxes[i], &boxes[j]) < epsilon {
                dsu.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; boxes.len()];
    for i in 0..boxes.len() {
        let r = dsu.find(i);
        match root_slot[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_slot[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    let mut blocks: Vec<Block> = groups
        .into_iter()
        .map(|members| {
            let bbox = members[1..]
                .iter()
                .fold(boxes[members[0]], |acc, &m| acc.union(&boxes[m]));
            let (x0, y0, w, h) = bbox.pixel_rect(image.width(), image.height());
            Block {
                bbox,
                members,
                pixels: image.crop(x0, y0, w, h),
            }
        })
        .collect();
    blocks.sort_by(|a, b| a.bbox.order(&b.bbox).then(a.members[0].cmp(&b.members[0])));
    blocks
}

/// Negative log-likelihood of `label` under `distribution`.
pub fn nll_loss(distribution: &[f64], label: usize) -> Result<f64, VisionError> {
    if label >= distribution.len() {
        return Err(VisionError::InvalidDistribution("label out of range"));
    }
    if distribution.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(VisionError::InvalidDistribution("entry outside [0, 1]"));
    }
    let total: f64 = distribution.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(VisionError::InvalidDistribution("entries do not sum to 1"));
    }
    Ok(-distribution[label].max(NLL_CLAMP).ln())
}
