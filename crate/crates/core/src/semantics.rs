//! Text-side semantic codec: caption tokenization, embedding lookup,
//! feature projection, and nearest-neighbor decoding of noisy embeddings.
//!
//! Embeddings are analog payloads. Each token maps to a unit-norm row of a
//! seeded random table; the receiver decodes every received row to the token
//! whose table row has maximal cosine similarity.

use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scene::{self, Cell, Color, SceneSpec, Shape};
use crate::vision::Block;

pub const UNK: &str = "<unk>";
/// Token joining the captions of a fused block.
pub const SEPARATOR: &str = ";";
/// Caption separator as it appears in text.
pub const CAPTION_JOIN: &str = "; ";
pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_TABLE_SEED: u64 = 0x5345_4d54;

/// Fixed captioning prompt. `<image>` marks where projected visual tokens go.
pub const QUERY: &str = "<image>\nRelay a brief, clear account of the picture shown.";

const TABLE_MAGIC: &[u8; 4] = b"SEMT";
const TABLE_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("vocabulary must start with {UNK}")]
    MissingUnk,
    #[error("duplicate vocabulary token {0:?}")]
    DuplicateToken(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no scene object center falls inside the block")]
    UnmatchedBlock,
    #[error("malformed embedding table: {0}")]
    BadTable(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self, SemanticsError> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(SemanticsError::MissingUnk);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(SemanticsError::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Every word the scene grammar can emit, plus UNK and the separator.
    pub fn grammar() -> Self {
        let mut tokens: Vec<String> = vec![UNK.into(), "a".into(), "at".into(), SEPARATOR.into()];
        tokens.extend(Color::ALL.iter().map(|c| c.name().to_string()));
        tokens.extend(Shape::ALL.iter().map(|s| s.name().to_string()));
        for cell in Cell::all() {
            for w in cell.name().split(' ') {
                if !tokens.iter().any(|t| t == w) {
                    tokens.push(w.to_string());
                }
            }
        }
        Self::new(tokens).expect("grammar vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Sidecar format: one UTF-8 token per line.
    pub fn write_lines<W: Write>(&self, mut w: W) -> io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_lines<R: BufRead>(r: R) -> Result<Self, SemanticsError> {
        let tokens = r.lines().collect::<Result<Vec<_>, _>>()?;
        Self::new(tokens)
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::grammar()
    }
}

/// Splits on whitespace and detaches trailing separators, so
/// `"center; a"` yields `["center", ";", "a"]`.
pub fn tokenize(caption: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in caption.split_whitespace() {
        let core = word.trim_end_matches(SEPARATOR);
        if !core.is_empty() {
            out.push(core);
        }
        for _ in 0..(word.len() - core.len()) / SEPARATOR.len() {
            out.push(SEPARATOR);
        }
    }
    out
}

/// Inverse of [`tokenize`] for well-formed token sequences.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        if i > 0 && t != SEPARATOR {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Unit-norm token embeddings, one row per vocabulary entry. Entries are
/// exactly representable as `f32` so the table survives persistence and
/// framing unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    rows: Vec<f64>,
}

impl EmbeddingTable {
    pub fn generate(vocab_size: usize, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<f64> = Vec::with_capacity(vocab_size * dim);
        while rows.len() < vocab_size * dim {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            let row: Vec<f64> = raw.iter().map(|v| f64::from((v / norm) as f32)).collect();
            let duplicate = rows.chunks(dim).any(|r| r == row.as_slice());
            if !duplicate {
                rows.extend(row);
            }
        }
        Self { dim, seed, rows }
    }

    pub fn for_vocab(vocab: &Vocab, dim: usize, seed: u64) -> Self {
        Self::generate(vocab.len(), dim, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Binary layout: `SEMT`, version byte, dim (u32 LE), row count (u32 LE),
    /// then rows of f32 LE. The seed is not persisted.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&[TABLE_VERSION])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for &v in &self.rows {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SemanticsError> {
        let mut head = [0u8; 13];
        r.read_exact(&mut head)?;
        if &head[0..4] != TABLE_MAGIC {
            return Err(SemanticsError::BadTable("bad magic"));
        }
        if head[4] != TABLE_VERSION {
            return Err(SemanticsError::BadTable("unsupported version"));
        }
        let dim = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(head[9..13].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(SemanticsError::BadTable("zero dimension"));
        }
        let mut buf = vec![0u8; dim * n * 4];
        r.read_exact(&mut buf)?;
        let rows = buf
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        Ok(Self { dim, seed: 0, rows })
    }

    /// Smallest L2 distance between two distinct rows.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(d);
            }
        }
        best
    }
}

/// Sequence of `dim`-wide real rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEmbedding {
    dim: usize,
    data: Vec<f64>,
}

impl TextEmbedding {
    pub fn new(dim: usize, data: Vec<f64>) -> Option<Self> {
        (dim > 0 && data.len().is_multiple_of(dim)).then_some(Self { dim, data })
    }

    pub fn from_matrix(m: &Matrix) -> Option<Self> {
        Self::new(m.cols(), m.data().to_vec())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.num_rows(), self.dim, self.data.clone()).expect("shape is consistent")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frame payload: dim as u32 LE, then row-major f32 LE values.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.data.len() * 4);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Option<Self> {
        let dim = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
        let body = &bytes[4..];
        if !body.len().is_multiple_of(4) {
            return None;
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        Self::new(dim, data)
    }
}

/// Looks up one table row per token; unknown tokens use the UNK row.
pub fn embed_text(caption: &str, vocab: &Vocab, table: &EmbeddingTable) -> TextEmbedding {
    let mut data = Vec::new();
    for tok in tokenize(caption) {
        let idx = vocab.index_of(tok).unwrap_or(0);
        data.extend_from_slice(table.row(idx));
    }
    TextEmbedding {
        dim: table.dim(),
        data,
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Index of the table row most cosine-similar to `row`; ties go to the lowest
/// index.
pub fn nearest_token(row: &[f64], table: &EmbeddingTable) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..table.len() {
        let c = cosine(row, table.row(i));
        if c > best.1 {
            best = (i, c);
        }
    }
    best.0
}

pub fn decode_embedding(
    noisy: &TextEmbedding,
    vocab: &Vocab,
    table: &EmbeddingTable,
) -> Result<String, SemanticsError> {
    if noisy.dim() != table.dim() {
        return Err(SemanticsError::DimensionMismatch {
            expected: table.dim(),
            got: noisy.dim(),
        });
    }
    let tokens: Vec<&str> = (0..noisy.num_rows())
        .map(|i| vocab.token(nearest_token(noisy.row(i), table)))
        .collect();
    Ok(detokenize(&tokens))
}

/// `H = Z · W` with row vectors.
pub fn project_features(z: &TextEmbedding, w: &Matrix) -> Result<TextEmbedding, SemanticsError> {
    if w.rows() != z.dim() || w.cols() != z.dim() {
        return Err(SemanticsError::DimensionMismatch {
            expected: z.dim(),
            got: if w.rows() != z.dim() { w.rows() } else { w.cols() },
        });
    }
    let h = z.to_matrix().matmul(w).expect("checked conformable");
    Ok(TextEmbedding {
        dim: z.dim(),
        data: h.data().to_vec(),
    })
}

/// Deterministic captioner: the grammar captions of every scene object whose
/// center lies inside the block, in spec order, joined by `"; "`.
pub fn stub_caption(block: &Block, spec: &SceneSpec) -> Result<String, SemanticsError> {
    let parts: Vec<String> = spec
        .objects
        .iter()
        .filter(|o| block.bbox.contains_point(f64::from(o.cx), f64::from(o.cy)))
        .map(|o| scene::caption_for(o, spec.width, spec.height))
        .collect();
    if parts.is_empty() {
        return Err(SemanticsError::UnmatchedBlock);
    }
    Ok(parts.join(CAPTION_JOIN))
}
