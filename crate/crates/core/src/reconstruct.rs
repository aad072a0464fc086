//! Receiver-side reconstruction: parse corrected captions back into scene
//! objects and compose them with the received main slice.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::image::ImageBuffer;
use crate::scene::{self, Cell, Color, SceneObject, Shape};
use crate::semantics::{self, SEPARATOR};
use crate::vision::MainSlice;

/// Captions carry no size, so parsed objects are drawn with this half-extent.
pub const RENDER_SIZE: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParsedObject {
    pub shape: Shape,
    pub color: Color,
    pub cell: Cell,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseOutcome {
    pub objects: Vec<ParsedObject>,
    /// Fragments that did not match the grammar.
    pub dropped: usize,
}

/// JSON record written next to each reconstruction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parsed: usize,
    pub dropped: usize,
    pub slice_lost: bool,
}

fn parse_fragment(tokens: &[&str]) -> Option<ParsedObject> {
    match tokens {
        ["a", color, shape, "at", cell @ ..] if !cell.is_empty() && cell.len() <= 2 => Some(ParsedObject {
            color: Color::from_name(color)?,
            shape: Shape::from_name(shape)?,
            cell: Cell::from_name(&cell.join(" "))?,
        }),
        _ => None,
    }
}

/// Splits captions on the separator and matches each fragment against
/// `a <color> <shape> at <cell>`. Unmatched fragments are counted, not
/// returned. Empty captions contribute nothing.
pub fn parse_captions<S: AsRef<str>>(captions: &[S]) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for caption in captions {
        let tokens = semantics::tokenize(caption.as_ref());
        if tokens.is_empty() {
            continue;
        }
        for fragment in tokens.split(|t| *t == SEPARATOR) {
            match parse_fragment(fragment) {
                Some(obj) => out.objects.push(obj),
                None => out.dropped += 1,
            }
        }
    }
    out
}

/// Majority palette color over the slice's non-background pixels.
fn dominant_color(pixels: &ImageBuffer) -> Option<Color> {
    let mut counts: HashMap<Color, usize> = HashMap::new();
    for y in 0..pixels.height() {
        for x in 0..pixels.width() {
            if let Some(c) = Color::nearest(pixels.pixel(x, y)) {
                *counts.entry(c).or_default() += 1;
            }
        }
    }
    Color::ALL
        .into_iter()
        .filter_map(|c| counts.get(&c).map(|&n| (c, n)))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
}

/// Index of the parsed object the slice stands in for: the first one whose
/// cell and color agree with the slice.
fn superseded_by(parsed: &[ParsedObject], main: &MainSlice, width: u32, height: u32) -> Option<usize> {
    let color = dominant_color(&main.pixels)?;
    let cell = Cell::of_point(main.bbox.cx.floor() as u32, main.bbox.cy.floor() as u32, width, height);
    parsed.iter().position(|p| p.cell == cell && p.color == color)
}

/// Renders parsed objects at their cell centers on a white canvas, then
/// pastes the main slice at its original position. The slice is
/// authoritative for the main object, so the parsed object it stands in for
/// is not drawn.
pub fn compose_image(
    parsed: &[ParsedObject],
    main: Option<&MainSlice>,
    width: u32,
    height: u32,
) -> ImageBuffer {
    assert!(width > 0 && height > 0, "canvas must be non-empty");
    let mut img = ImageBuffer::white(width, height);
    let skip = main.and_then(|m| superseded_by(parsed, m, width, height));
    for (i, p) in parsed.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let (cx, cy) = p.cell.center(width, height);
        let obj = SceneObject {
            shape: p.shape,
            color: p.color,
            cx,
            cy,
            size: RENDER_SIZE,
        };
        scene::draw_object(&mut img, &obj);
    }
    if let Some(m) = main {
        let (x0, y0) = m.origin();
        img.paste(&m.pixels, x0, y0);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, ground_truth_captions, rasterize, SceneSpec};
    use crate::vision::segment_main;

    fn sorted(mut v: Vec<ParsedObject>) -> Vec<ParsedObject> {
        v.sort();
        v
    }

    #[test]
    fn parses_grammar_caption() {
        let out = parse_captions(&["a red square at center"]);
        assert_eq!(
            out.objects,
            vec![ParsedObject {
                shape: Shape::Square,
                color: Color::Red,
                cell: Cell::new(1, 1)
            }]
        );
        assert_eq!(out.dropped, 0);
    }

    #[test]
    fn drops_corrupted_fragments() {
        let out = parse_captions(&["a red squgre at center"]);
        assert!(out.objects.is_empty());
        assert_eq!(out.dropped, 1);

        let out = parse_captions(&["a red square at center; a ; blue", "", "a green circle at top left"]);
        assert_eq!(out.objects.len(), 2);
        assert_eq!(out.dropped, 2);
    }

    #[test]
    fn round_trips_ground_truth() {
        for seed in 0..30 {
            let spec = generate_scene(seed, 1 + (seed as usize % 8)).unwrap();
            let parsed = parse_captions(&ground_truth_captions(&spec));
            let truth: Vec<ParsedObject> = spec
                .objects
                .iter()
                .map(|o| ParsedObject {
                    shape: o.shape,
                    color: o.color,
                    cell: o.cell(spec.width, spec.height),
                })
                .collect();
            assert_eq!(sorted(parsed.objects), sorted(truth));
            assert_eq!(parsed.dropped, 0);
        }
    }

    #[test]
    fn slice_only_canvas() {
        let spec = generate_scene(5, 1).unwrap();
        let img = rasterize(&spec);
        let slice = segment_main(&img).unwrap();
        assert_eq!(compose_image(&[], Some(&slice), spec.width, spec.height), img);
    }

    #[test]
    fn single_object_reconstruction_is_exact() {
        for seed in 0..20 {
            let spec = generate_scene(seed, 1).unwrap();
            let img = rasterize(&spec);
            let slice = segment_main(&img).unwrap();
            let parsed = parse_captions(&ground_truth_captions(&spec)).objects;
            assert_eq!(compose_image(&parsed, Some(&slice), spec.width, spec.height), img, "seed {seed}");
        }
    }

    #[test]
    fn objects_without_slice() {
        let parsed = parse_captions(&["a blue circle at top left; a black triangle at bottom right"]).objects;
        let a = compose_image(&parsed, None, 96, 96);
        assert_eq!(a, compose_image(&parsed, None, 96, 96));
        assert_eq!(a.pixel(16, 16), Color::Blue.rgb());
        assert_eq!(a.pixel(80, 85), Color::Black.rgb());
        assert_eq!(a.pixel(48, 48), [255, 255, 255]);
    }

    #[test]
    fn slice_dominates_its_box() {
        let spec = SceneSpec {
            width: 128,
            height: 128,
            seed: 0,
            objects: vec![SceneObject {
                shape: Shape::Circle,
                color: Color::Yellow,
                cx: 60,
                cy: 64,
                size: 20,
            }],
        };
        let slice = segment_main(&rasterize(&spec)).unwrap();
        // A conflicting object drawn right on top of the slice area.
        let parsed = parse_captions(&["a black square at center"]).objects;
        let out = compose_image(&parsed, Some(&slice), 128, 128);
        let (x0, y0) = slice.origin();
        for y in 0..slice.pixels.height() {
            for x in 0..slice.pixels.width() {
                assert_eq!(out.pixel(x0 + x, y0 + y), slice.pixels.pixel(x, y));
            }
        }
    }
}
