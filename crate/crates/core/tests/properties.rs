use std::collections::BTreeSet;
use std::io::Cursor;

use multisc::channel::{self, Frame, PayloadType, ReadOutcome};
use multisc::corrector::{self, NoiseModel};
use multisc::genkernel::{self, AttnWeights, Feature, LatentQuery};
use multisc::image::ImageBuffer;
use multisc::linalg::Matrix;
use multisc::metrics;
use multisc::scene::{self, Cell, Color, SceneObject, Shape};
use multisc::semantics::{self, EmbeddingTable, TextEmbedding, Vocab, DEFAULT_DIM, DEFAULT_TABLE_SEED};
use multisc::vision::{self, BBox};
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..200.0f64, 0.0..200.0f64, 0.5..20.0f64, 0.5..20.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn partition(boxes: &[BBox], eps: f64) -> Vec<Vec<usize>> {
    let img = ImageBuffer::white(8, 8);
    vision::fuse_blocks(&img, boxes, eps).into_iter().map(|b| b.members).collect()
}

fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + usize::from(a[i - 1] != b[j - 1]));
        }
        prev = cur;
    }
    prev[b.len()]
}

fn grammar_caption() -> impl Strategy<Value = String> {
    (0..3usize, 0..5usize, 0..9usize).prop_map(|(s, c, k)| {
        let cell = Cell::all().nth(k).unwrap();
        let (cx, cy) = cell.center(256, 256);
        let obj = SceneObject { shape: Shape::ALL[s], color: Color::ALL[c], cx, cy, size: 8 };
        scene::caption_for(&obj, 256, 256)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fusion_is_a_partition(boxes in prop::collection::vec(bbox(), 0..8), eps in 0.0..100.0f64) {
        let groups = partition(&boxes, eps);
        let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..boxes.len()).collect::<Vec<_>>());
        prop_assert!(groups.iter().all(|g| !g.is_empty() && g.windows(2).all(|w| w[0] < w[1])));
    }

    #[test]
    fn fusion_coarsens_with_epsilon(boxes in prop::collection::vec(bbox(), 0..8), a in 0.0..80.0f64, b in 0.0..80.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let fine = partition(&boxes, lo);
        let coarse: Vec<BTreeSet<usize>> = partition(&boxes, hi).into_iter().map(|g| g.into_iter().collect()).collect();
        for g in fine {
            prop_assert!(coarse.iter().any(|c| g.iter().all(|m| c.contains(m))));
        }
        prop_assert!(partition(&boxes, hi).len() <= partition(&boxes, lo).len());
    }

    #[test]
    fn fused_box_contains_members(boxes in prop::collection::vec(bbox(), 1..8), eps in 0.0..100.0f64) {
        for block in vision::fuse_blocks(&ImageBuffer::white(8, 8), &boxes, eps) {
            for &m in &block.members {
                let b = &boxes[m];
                let tol = 1e-9;
                prop_assert!(block.bbox.min_x() <= b.min_x() + tol && block.bbox.max_x() + tol >= b.max_x());
                prop_assert!(block.bbox.min_y() <= b.min_y() + tol && block.bbox.max_y() + tol >= b.max_y());
            }
        }
    }

    #[test]
    fn corrector_matches_brute_force(word in "[a-z]{1,9}", p in 0.01..0.45f64) {
        let vocab = Vocab::grammar();
        let model = NoiseModel::uniform(p, &vocab).unwrap();
        let mut best: Option<(f64, &str)> = None;
        for c in vocab.tokens() {
            let d = edit_distance(&word, c);
            if d > 2 {
                continue;
            }
            let l = word.chars().count().max(c.chars().count());
            let s = p.powi(d as i32) * (1.0 - p).powi((l - d) as i32) / vocab.len() as f64;
            if best.is_none_or(|(bs, bt)| s > bs || (s == bs && c.as_str() < bt)) {
                best = Some((s, c));
            }
        }
        let want = best.map_or(semantics::UNK, |b| b.1);
        prop_assert_eq!(corrector::correct_spelling(&word, &vocab, &model), want);
    }

    #[test]
    fn clean_captions_survive_correction(c in grammar_caption(), p in 0.0..0.49f64) {
        let vocab = Vocab::grammar();
        let model = NoiseModel::uniform(p, &vocab).unwrap();
        prop_assert_eq!(corrector::correct_spelling(&c, &vocab, &model), c);
    }

    #[test]
    fn embedding_round_trip(c in grammar_caption()) {
        let vocab = Vocab::grammar();
        let table = EmbeddingTable::for_vocab(&vocab, DEFAULT_DIM, DEFAULT_TABLE_SEED);
        let e = semantics::embed_text(&c, &vocab, &table);
        prop_assert_eq!(semantics::decode_embedding(&e, &vocab, &table).unwrap(), c);
    }

    #[test]
    fn decoding_tolerates_small_perturbations(idx in 0..17usize, dir in prop::collection::vec(-1.0..1.0f64, DEFAULT_DIM), frac in 0.0..0.999f64) {
        let vocab = Vocab::grammar();
        let table = EmbeddingTable::for_vocab(&vocab, DEFAULT_DIM, DEFAULT_TABLE_SEED);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        let radius = frac * table.min_pairwise_distance() / 2.0;
        let row: Vec<f64> = table.row(idx).iter().zip(&dir).map(|(r, d)| r + d / norm * radius).collect();
        prop_assert_eq!(semantics::nearest_token(&row, &table), idx);
    }

    #[test]
    fn projection_is_linear(x in matrix(3, 4), y in matrix(3, 4), w in matrix(4, 4), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let to_emb = |m: &Matrix| TextEmbedding::from_matrix(m).unwrap();
        let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
        let lhs = semantics::project_features(&to_emb(&Matrix::from_vec(3, 4, mix).unwrap()), &w).unwrap();
        let px = semantics::project_features(&to_emb(&x), &w).unwrap();
        let py = semantics::project_features(&to_emb(&y), &w).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(px.data()).zip(py.data()) {
            prop_assert!((l - (a * p + b * q)).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_symmetry_and_scale(a in prop::collection::vec(-100.0..100.0f64, 2..64), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (v * 0.7 + (seed.wrapping_mul(i as u64 + 1) % 97) as f64).sin()).collect();
        let ab = metrics::cosine_similarity(&a, &b).unwrap();
        prop_assert!((ab - metrics::cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
        let b2: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        prop_assert!((ab - metrics::cosine_similarity(&a, &b2).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&ab));
        let offset: Vec<f64> = a.iter().map(|_| 7.5).collect();
        prop_assert_eq!(metrics::cosine_similarity(&offset, &a).unwrap(), 0.0);
    }

    #[test]
    fn bleu_bounds_and_reference_order(
        cand in prop::collection::vec("[a-d]", 0..10),
        refs in prop::collection::vec(prop::collection::vec("[a-d]", 1..10), 1..4),
    ) {
        let cand = cand.join(" ");
        let refs: Vec<String> = refs.iter().map(|r| r.join(" ")).collect();
        let s = metrics::bleu(&cand, &refs, 4);
        prop_assert!((0.0..=1.0).contains(&s));
        let mut rev = refs.clone();
        rev.reverse();
        prop_assert_eq!(s, metrics::bleu(&cand, &rev, 4));
        if !refs[0].is_empty() {
            prop_assert_eq!(metrics::bleu(&refs[0], &refs[..1], 4), 1.0);
        }
    }

    #[test]
    fn frame_codec_round_trip(frames in prop::collection::vec((0u8..3, any::<u16>(), prop::collection::vec(any::<u8>(), 0..300)), 0..6)) {
        let frames: Vec<Frame> = frames
            .into_iter()
            .map(|(t, s, p)| Frame::new(PayloadType::from_u8(t).unwrap(), s, p))
            .collect();
        let mut wire = Vec::new();
        for f in &frames {
            let bytes = f.encode();
            prop_assert_eq!(bytes.len(), f.encoded_len());
            prop_assert_eq!(&channel::decode_frame(&bytes).unwrap(), f);
            wire.extend(bytes);
        }
        let mut r = Cursor::new(wire);
        for f in &frames {
            match channel::read_frame(&mut r).unwrap().unwrap() {
                ReadOutcome::Frame(g) => prop_assert_eq!(&g, f),
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
        prop_assert!(matches!(channel::read_frame(&mut r).unwrap().unwrap(), ReadOutcome::End));
    }

    #[test]
    fn truncated_frames_are_rejected(payload in prop::collection::vec(any::<u8>(), 0..64), cut in 0usize..76) {
        let bytes = Frame::new(PayloadType::TextEmbedding, 3, payload).encode();
        prop_assume!(cut < bytes.len());
        prop_assert!(channel::decode_frame(&bytes[..cut]).is_err());
    }

    #[test]
    fn noiseless_modulation_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
        let data: Vec<u8> = (0..w * h * 3).map(|i| (seed.rotate_left(i % 64) as u8) ^ (i as u8)).collect();
        let img = ImageBuffer::from_raw(w, h, data).unwrap();
        let payload = channel::encode_image_payload(&img, Some((w, h)));
        let block = channel::modulate(&payload, PayloadType::ImageSlice).unwrap();
        prop_assert!((block.mean_power() - 1.0).abs() < 1e-9 || block.mean_power() == 0.0);
        prop_assert_eq!(channel::demodulate(&block), payload);
    }

    #[test]
    fn attention_rows_are_distributions(z in matrix(3, 4), c in matrix(5, 4), wq in matrix(4, 2), wk in matrix(4, 2)) {
        let w = AttnWeights::new(wq, wk, Matrix::identity(4)).unwrap();
        let a = genkernel::attention_weights(&LatentQuery(z), &Feature::text(c), &w).unwrap();
        for r in 0..a.rows() {
            prop_assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(a.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn attention_permutation_properties(z in matrix(3, 4), c in matrix(4, 4), wq in matrix(4, 3), wk in matrix(4, 3), wv in matrix(4, 2), shift in 1usize..4) {
        let w = AttnWeights::new(wq, wk, wv).unwrap();
        let base = genkernel::cross_attention(&LatentQuery(z.clone()), &Feature::text(c.clone()), &w).unwrap();
        // Reordering context tokens leaves the output unchanged.
        let rows = c.to_rows();
        let rotated: Vec<Vec<f64>> = (0..rows.len()).map(|i| rows[(i + shift) % rows.len()].clone()).collect();
        let out = genkernel::cross_attention(&LatentQuery(z.clone()), &Feature::text(Matrix::from_rows(&rotated).unwrap()), &w).unwrap();
        for (a, b) in base.data().iter().zip(out.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // Reordering queries reorders output rows.
        let zr = z.to_rows();
        let zrot: Vec<Vec<f64>> = (0..zr.len()).map(|i| zr[(i + shift) % zr.len()].clone()).collect();
        let out = genkernel::cross_attention(&LatentQuery(Matrix::from_rows(&zrot).unwrap()), &Feature::text(c), &w).unwrap();
        for i in 0..zr.len() {
            for (a, b) in out.row(i).iter().zip(base.row((i + shift) % zr.len())) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn combine_with_zero_lambda_is_identity(t in matrix(3, 5), i in matrix(3, 5)) {
        let out = genkernel::combine_outputs(&t, &i, 0.0).unwrap();
        prop_assert!(out.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn generated_scenes_round_trip_through_captions(seed in any::<u64>(), n in 1usize..=8) {
        let spec = scene::generate_scene(seed, n).unwrap();
        prop_assert!(spec.validate().is_ok());
        prop_assert_eq!(scene::SceneSpec::from_json(&spec.to_json()).unwrap(), spec.clone());
        let parsed = multisc::reconstruct::parse_captions(&scene::ground_truth_captions(&spec));
        prop_assert_eq!(parsed.dropped, 0);
        prop_assert_eq!(multisc::harness::recovered_count(&parsed.objects, &spec), n);
    }
}
