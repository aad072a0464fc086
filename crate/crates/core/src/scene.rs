//! Synthetic scenes with known ground truth.
//!
//! A [`SceneSpec`] is a symbolic description (shapes, colors, positions) that
//! rasterizes to an [`ImageBuffer`] and produces reference captions from a
//! small closed grammar: `a <color> <shape> at <cell>`, where `<cell>` names a
//! position in a 3×3 grid over the image.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::image::{ImageBuffer, Rgb, WHITE};

pub const DEFAULT_WIDTH: u32 = 256;
pub const DEFAULT_HEIGHT: u32 = 256;
pub const MAX_OBJECTS: usize = 8;
pub const MIN_OBJECT_SIZE: u32 = 4;
/// Minimum number of empty pixels between two object bounding boxes.
pub const MIN_GAP: i64 = 2;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

const GEN_MIN_SIZE: u32 = 6;
const GEN_MAX_SIZE: u32 = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SceneError {
    #[error("object count {0} outside 1..={MAX_OBJECTS}")]
    ObjectCount(usize),
    #[error("could not place {placed} of {wanted} objects in {MAX_PLACEMENT_ATTEMPTS} attempts")]
    PlacementFailure { placed: usize, wanted: usize },
    #[error("object {0} is invalid: {1}")]
    InvalidObject(usize, &'static str),
    #[error("objects {0} and {1} are closer than {MIN_GAP} px")]
    Overlap(usize, usize),
    #[error("main object is not unique")]
    AmbiguousMainObject,
    #[error("invalid scene json: {0}")]
    Json(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Black,
}

impl Color {
    pub const ALL: [Color; 5] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Black,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Black => "black",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn rgb(self) -> Rgb {
        match self {
            Color::Red => [255, 0, 0],
            Color::Green => [0, 255, 0],
            Color::Blue => [0, 0, 255],
            Color::Yellow => [255, 255, 0],
            Color::Black => [0, 0, 0],
        }
    }

    /// Nearest palette color by squared RGB distance, `None` when white is
    /// nearer than every palette entry.
    pub fn nearest(px: Rgb) -> Option<Self> {
        let dist = |c: Rgb| -> u32 {
            c.iter()
                .zip(px.iter())
                .map(|(&a, &b)| (i32::from(a) - i32::from(b)).unsigned_abs().pow(2))
                .sum()
        };
        let white = dist(WHITE);
        let (best, d) = Self::ALL
            .into_iter()
            .map(|c| (c, dist(c.rgb())))
            .min_by_key(|&(_, d)| d)
            .expect("palette is non-empty");
        (d < white).then_some(best)
    }
}

/// One cell of the 3×3 position grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u8,
    pub col: u8,
}

const CELL_NAMES: [[&str; 3]; 3] = [
    ["top left", "top center", "top right"],
    ["center left", "center", "center right"],
    ["bottom left", "bottom center", "bottom right"],
];

impl Cell {
    pub fn new(row: u8, col: u8) -> Self {
        assert!(row < 3 && col < 3, "cell out of grid");
        Self { row, col }
    }

    pub fn all() -> impl Iterator<Item = Cell> {
        (0..3).flat_map(|row| (0..3).map(move |col| Cell { row, col }))
    }

    /// Grid cell containing the point `(x, y)` of a `width × height` image.
    pub fn of_point(x: u32, y: u32, width: u32, height: u32) -> Self {
        let col = (u64::from(x) * 3 / u64::from(width.max(1))).min(2) as u8;
        let row = (u64::from(y) * 3 / u64::from(height.max(1))).min(2) as u8;
        Self { row, col }
    }

    /// Pixel coordinates of the cell center.
    pub fn center(self, width: u32, height: u32) -> (u32, u32) {
        (
            (2 * u32::from(self.col) + 1) * width / 6,
            (2 * u32::from(self.row) + 1) * height / 6,
        )
    }

    pub fn name(self) -> &'static str {
        CELL_NAMES[self.row as usize][self.col as usize]
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::all().find(|c| c.name() == s)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub cx: u32,
    pub cy: u32,
    /// Half-extent in pixels.
    pub size: u32,
}

impl SceneObject {
    /// Pixel extent `[x0, x1) × [y0, y1)` in signed coordinates (may fall
    /// outside the image for unvalidated objects).
    pub fn extent(&self) -> (i64, i64, i64, i64) {
        let (cx, cy, s) = (i64::from(self.cx), i64::from(self.cy), i64::from(self.size));
        (cx - s, cy - s, cx + s, cy + s)
    }

    /// Whether pixel `(x, y)` belongs to the rendered shape. Coverage is
    /// tested at the pixel center.
    pub fn covers(&self, x: i64, y: i64) -> bool {
        let (x0, y0, x1, y1) = self.extent();
        if x < x0 || x >= x1 || y < y0 || y >= y1 {
            return false;
        }
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        let (cx, cy, s) = (f64::from(self.cx), f64::from(self.cy), f64::from(self.size));
        match self.shape {
            Shape::Square => true,
            Shape::Circle => (px - cx).powi(2) + (py - cy).powi(2) <= s * s,
            // Apex at the top center, base spanning the full bottom edge.
            Shape::Triangle => (px - cx).abs() <= (py - (cy - s)) / 2.0,
        }
    }

    /// Rendered pixel count.
    pub fn area(&self) -> usize {
        let (x0, y0, x1, y1) = self.extent();
        (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| (x, y)))
            .filter(|&(x, y)| self.covers(x, y))
            .count()
    }

    /// Largest count of empty pixels separating the two bounding boxes along
    /// either axis; negative when the boxes overlap.
    pub fn gap_to(&self, other: &SceneObject) -> i64 {
        let (ax0, ay0, ax1, ay1) = self.extent();
        let (bx0, by0, bx1, by1) = other.extent();
        let gx = (bx0 - ax1).max(ax0 - bx1);
        let gy = (by0 - ay1).max(ay0 - by1);
        gx.max(gy)
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        let (x0, y0, x1, y1) = self.extent();
        x0 >= 0 && y0 >= 0 && x1 <= i64::from(width) && y1 <= i64::from(height)
    }

    pub fn cell(&self, width: u32, height: u32) -> Cell {
        Cell::of_point(self.cx, self.cy, width, height)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return Err(SceneError::ObjectCount(self.objects.len()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.size < MIN_OBJECT_SIZE {
                return Err(SceneError::InvalidObject(i, "size below minimum"));
            }
            if !o.fits(self.width, self.height) {
                return Err(SceneError::InvalidObject(i, "outside image bounds"));
            }
        }
        for i in 0..self.objects.len() {
            for j in i + 1..self.objects.len() {
                if self.objects[i].gap_to(&self.objects[j]) < MIN_GAP {
                    return Err(SceneError::Overlap(i, j));
                }
            }
        }
        if main_index(&self.objects).is_none() {
            return Err(SceneError::AmbiguousMainObject);
        }
        Ok(())
    }

    /// Index of the object with strictly maximal rendered area.
    pub fn main_object_index(&self) -> Option<usize> {
        main_index(&self.objects)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serialization is infallible")
    }

    /// Parses and validates a scene document.
    pub fn from_json(s: &str) -> Result<Self, SceneError> {
        let spec: SceneSpec = serde_json::from_str(s).map_err(|e| SceneError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn main_index(objects: &[SceneObject]) -> Option<usize> {
    let areas: Vec<usize> = objects.iter().map(SceneObject::area).collect();
    let max = *areas.iter().max()?;
    let mut it = areas.iter().enumerate().filter(|(_, &a)| a == max);
    let (idx, _) = it.next()?;
    it.next().is_none().then_some(idx)
}

/// Generates a default-sized scene. See [`generate_scene_sized`].
pub fn generate_scene(seed: u64, num_objects: usize) -> Result<SceneSpec, SceneError> {
    generate_scene_sized(seed, num_objects, DEFAULT_WIDTH, DEFAULT_HEIGHT)
}

/// Places `num_objects` random, mutually separated objects. Each candidate
/// draw counts as one attempt; a full scene whose largest object is not
/// unique discards its last object and keeps drawing.
pub fn generate_scene_sized(
    seed: u64,
    num_objects: usize,
    width: u32,
    height: u32,
) -> Result<SceneSpec, SceneError> {
    if num_objects == 0 || num_objects > MAX_OBJECTS {
        return Err(SceneError::ObjectCount(num_objects));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(num_objects);
    let mut attempts = 0;
    while objects.len() < num_objects {
        if attempts == MAX_PLACEMENT_ATTEMPTS {
            return Err(SceneError::PlacementFailure {
                placed: objects.len(),
                wanted: num_objects,
            });
        }
        attempts += 1;
        let max_size = GEN_MAX_SIZE.min(width / 2).min(height / 2);
        if max_size < GEN_MIN_SIZE {
            continue;
        }
        let size = rng.random_range(GEN_MIN_SIZE..=max_size);
        let candidate = SceneObject {
            shape: Shape::ALL[rng.random_range(0..Shape::ALL.len())],
            color: Color::ALL[rng.random_range(0..Color::ALL.len())],
            cx: rng.random_range(size..=width - size),
            cy: rng.random_range(size..=height - size),
            size,
        };
        if objects.iter().any(|o| o.gap_to(&candidate) < MIN_GAP) {
            continue;
        }
        objects.push(candidate);
        if objects.len() == num_objects && main_index(&objects).is_none() {
            objects.pop();
        }
    }
    Ok(SceneSpec {
        width,
        height,
        seed,
        objects,
    })
}

/// Draws `obj` onto `img`, clipping at the borders.
pub fn draw_object(img: &mut ImageBuffer, obj: &SceneObject) {
    let (x0, y0, x1, y1) = obj.extent();
    let rgb = obj.color.rgb();
    for y in y0.max(0)..y1.min(i64::from(img.height())) {
        for x in x0.max(0)..x1.min(i64::from(img.width())) {
            if obj.covers(x, y) {
                img.put_pixel(x as u32, y as u32, rgb);
            }
        }
    }
}

/// Renders the scene on a white background, objects in spec order.
pub fn rasterize(spec: &SceneSpec) -> ImageBuffer {
    let mut img = ImageBuffer::white(spec.width, spec.height);
    for obj in &spec.objects {
        draw_object(&mut img, obj);
    }
    img
}

pub fn caption_for(obj: &SceneObject, width: u32, height: u32) -> String {
    format!(
        "a {} {} at {}",
        obj.color.name(),
        obj.shape.name(),
        obj.cell(width, height)
    )
}

/// One grammar caption per object, in spec order.
pub fn ground_truth_captions(spec: &SceneSpec) -> Vec<String> {
    spec.objects
        .iter()
        .map(|o| caption_for(o, spec.width, spec.height))
        .collect()
}
