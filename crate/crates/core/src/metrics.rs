//! Evaluation metrics: BLEU over captions, mean-centered pixel cosine
//! similarity, and LPIPS delegated to an attached backend.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{BridgeClient, BridgeError};
use crate::channel::ChannelKind;
use crate::image::ImageBuffer;

pub const DEFAULT_MAX_N: usize = 4;
/// Count added to an n-gram order with no matches.
pub const BLEU_SMOOTHING: f64 = 1e-9;

pub const CSV_HEADER: [&str; 8] = ["snr_db", "channel", "cosine", "bleu", "lpips", "scene_seed", "recovered", "source"];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("perceptual backend unavailable: {0}")]
    BackendUnavailable(String),
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with clipped n-gram precision and brevity penalty.
///
/// Tokens are whitespace separated. The order is capped at the candidate
/// length. The reference length is that of the reference closest in length
/// to the candidate, shorter on ties. An empty candidate scores 0.
///
/// # Panics
///
/// If `max_n` is zero.
pub fn bleu<S: AsRef<str>>(candidate: &str, references: &[S], max_n: usize) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    let cand: Vec<&str> = candidate.split_whitespace().collect();
    if cand.is_empty() || references.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<&str>> = references.iter().map(|r| r.as_ref().split_whitespace().collect()).collect();
    let c = cand.len();
    let order = max_n.min(c);

    let mut log_sum = 0.0;
    for n in 1..=order {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
        for r in &refs {
            for (g, k) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let matched: usize = cand_counts
            .iter()
            .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c + 1 - n;
        let p = if matched == 0 {
            BLEU_SMOOTHING / total as f64
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }

    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    (bp * (log_sum / order as f64).exp()).clamp(0.0, 1.0)
}

/// Cosine of the mean-centered vectors. A vector that is constant (zero after
/// centering) scores 0 against anything.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

pub fn image_cosine(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    cosine_similarity(&a.to_f64(), &b.to_f64())
}

/// Perceptual distance computed by the backend; lower is better.
pub fn lpips(a: &ImageBuffer, b: &ImageBuffer, backend: Option<&BridgeClient>) -> Result<f64, MetricsError> {
    let client = backend.ok_or_else(|| MetricsError::BackendUnavailable("no backend attached".into()))?;
    client.lpips(a, b).map_err(|e: BridgeError| MetricsError::BackendUnavailable(e.to_string()))
}

/// One evaluated scene at one SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "crate::channel::snr_serde")]
    pub snr_db: f64,
    pub channel_kind: ChannelKind,
    pub cosine: f64,
    pub bleu: f64,
    pub lpips: Option<f64>,
    pub scene_seed: u64,
    pub recovered_objects: usize,
    pub source_objects: usize,
    /// The main slice was lost to a deep fade.
    pub slice_lost: bool,
}

impl MetricsReport {
    pub fn csv_record(&self) -> [String; 8] {
        [
            format_snr(self.snr_db),
            self.channel_kind.name().to_string(),
            self.cosine.to_string(),
            self.bleu.to_string(),
            self.lpips.map(|v| v.to_string()).unwrap_or_default(),
            self.scene_seed.to_string(),
            self.recovered_objects.to_string(),
            self.source_objects.to_string(),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn format_snr(snr_db: f64) -> String {
    if snr_db.is_infinite() {
        "inf".to_string()
    } else {
        snr_db.to_string()
    }
}

/// Per-SNR means of a group of reports. LPIPS is averaged only when every
/// report carries it.
pub fn summary_record(reports: &[MetricsReport]) -> Option<[String; 8]> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let lpips = reports
        .iter()
        .map(|r| r.lpips)
        .collect::<Option<Vec<f64>>>()
        .map(|v| (v.iter().sum::<f64>() / n).to_string())
        .unwrap_or_default();
    Some([
        format_snr(first.snr_db),
        first.channel_kind.name().to_string(),
        mean(&|r| r.cosine).to_string(),
        mean(&|r| r.bleu).to_string(),
        lpips,
        "mean".to_string(),
        mean(&|r| r.recovered_objects as f64).to_string(),
        mean(&|r| r.source_objects as f64).to_string(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = "a red square at center";
        assert_eq!(bleu(c, &[c], 4), 1.0);
        assert_eq!(bleu("a", &["a"], 4), 1.0);
        assert!(bleu("x y z w", &["a b c d"], 4) < 1e-8);
        assert_eq!(bleu("", &[c], 4), 0.0);
    }

    #[test]
    fn bleu_brevity_penalty_example() {
        let got = bleu("a red square", &["a red square at center"], 2);
        let want = (1.0f64 - 5.0 / 3.0).exp();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn bleu_clips_repeated_tokens() {
        // p1 = 2/7 after clipping "the" to its reference count.
        let got = bleu("the the the the the the the", &["the cat is on the mat"], 1);
        assert!((got - 2.0 / 7.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn bleu_closest_reference_length() {
        let refs = ["a b c d e f g h", "a b c"];
        assert_eq!(bleu("a b c", &refs, 1), 1.0);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        let x = [0.3, -1.0, 4.0, 2.5];
        assert_eq!(cosine_similarity(&x, &x).unwrap(), 1.0);
        // Centered vectors (-1, 1, 0) and (1, 1, -2) are orthogonal.
        assert_eq!(cosine_similarity(&[0.0, 2.0, 1.0], &[2.0, 2.0, -1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[5.0; 4], &x).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn lpips_without_backend() {
        let img = ImageBuffer::white(2, 2);
        assert!(matches!(lpips(&img, &img, None), Err(MetricsError::BackendUnavailable(_))));
    }

    #[test]
    fn csv_records() {
        let r = MetricsReport {
            snr_db: f64::INFINITY,
            channel_kind: ChannelKind::Awgn,
            cosine: 1.0,
            bleu: 0.5,
            lpips: None,
            scene_seed: 9,
            recovered_objects: 2,
            source_objects: 3,
            slice_lost: false,
        };
        assert_eq!(r.csv_record().join(","), "inf,awgn,1,0.5,,9,2,3");
        let mut r2 = r.clone();
        r2.cosine = 0.0;
        r2.recovered_objects = 3;
        let s = summary_record(&[r, r2]).unwrap();
        assert_eq!(s.join(","), "inf,awgn,0.5,0.5,,mean,2.5,3");
        let back: MetricsReport = serde_json::from_str(&s_json()).unwrap();
        assert!(back.snr_db.is_infinite());
    }

    fn s_json() -> String {
        r#"{"snr_db":"inf","channel_kind":"awgn","cosine":1.0,"bleu":1.0,"lpips":null,"scene_seed":1,"recovered_objects":1,"source_objects":1,"slice_lost":false}"#.to_string()
    }
}
