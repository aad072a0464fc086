//! Physical-layer simulation: `y = h·z + n` over AWGN or block-fading
//! Rayleigh channels, plus payload modulation, power normalization,
//! perfect-CSI equalization and the on-wire frame codec.
//!
//! Payload values travel as analog reals paired into complex symbols. Payload
//! headers (dimensions, placement) are side information and are not corrupted.
//!
//! Noise is drawn from a counter-based generator: ChaCha8 keyed by the channel
//! seed, with one ChaCha stream per `(stream_id, purpose)`. Every complex
//! Gaussian sample consumes exactly four 32-bit words, so the sample for
//! symbol `i` sits at word position `4i` regardless of evaluation order.

use std::f64::consts::PI;
use std::io::{self, Read};

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageBuffer, CHANNELS};

/// `snr_db` value meaning "no noise at all".
pub const NOISELESS: f64 = f64::INFINITY;
/// Equalization refuses gains below this magnitude.
pub const DEEP_FADE_THRESHOLD: f64 = 1e-6;

pub const FRAME_MAGIC: &[u8; 4] = b"MSC1";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 12;

const IMAGE_HEADER_LEN: usize = 9;
const EMBEDDING_HEADER_LEN: usize = 4;

const PURPOSE_NOISE: u64 = 0;
const PURPOSE_FADING: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("signal power must be positive")]
    NonPositivePower,
    #[error("deep fade: |h| = {0:e}")]
    DeepFade(f64),
    #[error("malformed payload: {0}")]
    MalformedPayload(&'static str),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(Self::Awgn),
            "rayleigh" => Ok(Self::Rayleigh),
            other => Err(format!("unknown channel kind {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// Finite, or [`NOISELESS`].
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub seed: u64,
}

/// Serde adapter writing [`NOISELESS`] as the string `"inf"`, which JSON
/// numbers cannot hold.
pub mod snr_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("bad snr {t:?}"))),
        }
    }
}

/// Frame payload kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PayloadType {
    ImageSlice = 0,
    TextEmbedding = 1,
    /// Evaluation-only session header; never passed through the channel.
    Session = 2,
}

impl PayloadType {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::ImageSlice),
            1 => Some(Self::TextEmbedding),
            2 => Some(Self::Session),
            _ => None,
        }
    }
}

/// Complex symbols of one frame after unit-power normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock {
    pub symbols: Vec<Complex64>,
    /// Factor applied to the raw values; receivers divide by it.
    pub scale: f64,
    /// Set when the last symbol carries a zero pad in its imaginary part.
    pub pad: bool,
    pub payload_type: PayloadType,
    /// Payload bytes before the modulated values (sent out of band).
    pub prefix: Vec<u8>,
    /// Payload bytes after the modulated values (sent out of band).
    pub suffix: Vec<u8>,
}

impl SymbolBlock {
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.symbols)
    }
}

fn mean_power(symbols: &[Complex64]) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    symbols.iter().map(Complex64::norm_sqr).sum::<f64>() / symbols.len() as f64
}

/// Noise variance `σ²` for the requested SNR. Noise is circularly symmetric
/// with `σ²/2` per real component.
pub fn snr_to_noise_variance(snr_db: f64, signal_power: f64) -> Result<f64, ChannelError> {
    if !(signal_power > 0.0) {
        return Err(ChannelError::NonPositivePower);
    }
    Ok(signal_power / 10f64.powf(snr_db / 10.0))
}

/// Maps the values of `payload` to unit-power complex symbols.
///
/// Image samples `s` become `s/127.5 − 1`; embedding floats are used as is.
/// An all-zero payload is left unnormalized with `scale = 1`.
pub fn modulate(payload: &[u8], payload_type: PayloadType) -> Result<SymbolBlock, ChannelError> {
    let (prefix_len, values, suffix_start): (usize, Vec<f64>, usize) = match payload_type {
        PayloadType::ImageSlice => {
            let head = payload
                .get(..IMAGE_HEADER_LEN)
                .ok_or(ChannelError::MalformedPayload("short image header"))?;
            let w = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
            let h = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
            let end = IMAGE_HEADER_LEN + w * h * usize::from(head[8]);
            let samples = payload
                .get(IMAGE_HEADER_LEN..end)
                .ok_or(ChannelError::MalformedPayload("short image samples"))?;
            let values = samples.iter().map(|&s| f64::from(s) / 127.5 - 1.0).collect();
            (IMAGE_HEADER_LEN, values, end)
        }
        PayloadType::TextEmbedding => {
            if payload.len() < EMBEDDING_HEADER_LEN
                || !(payload.len() - EMBEDDING_HEADER_LEN).is_multiple_of(4)
            {
                return Err(ChannelError::MalformedPayload("embedding length"));
            }
            let values = payload[EMBEDDING_HEADER_LEN..]
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect();
            (EMBEDDING_HEADER_LEN, values, payload.len())
        }
        PayloadType::Session => {
            return Err(ChannelError::MalformedPayload("session frames are not modulated"))
        }
    };

    let pad = values.len() % 2 == 1;
    let mut symbols: Vec<Complex64> = values
        .chunks(2)
        .map(|c| Complex64::new(c[0], c.get(1).copied().unwrap_or(0.0)))
        .collect();
    let power = mean_power(&symbols);
    let scale = if power > 0.0 { 1.0 / power.sqrt() } else { 1.0 };
    if scale != 1.0 {
        for s in &mut symbols {
            *s *= scale;
        }
    }
    Ok(SymbolBlock {
        symbols,
        scale,
        pad,
        payload_type,
        prefix: payload[..prefix_len].to_vec(),
        suffix: payload[suffix_start..].to_vec(),
    })
}

/// Rebuilds payload bytes from (possibly corrupted) symbols. Image values are
/// rounded and clamped to 8 bits.
pub fn demodulate(block: &SymbolBlock) -> Vec<u8> {
    let mut values: Vec<f64> = block
        .symbols
        .iter()
        .flat_map(|s| [s.re / block.scale, s.im / block.scale])
        .collect();
    if block.pad {
        values.pop();
    }
    let mut out = block.prefix.clone();
    match block.payload_type {
        PayloadType::ImageSlice => out.extend(
            values
                .iter()
                .map(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8),
        ),
        _ => {
            for v in values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&block.suffix);
    out
}

/// Counter-based standard complex Gaussian source for one `(seed, stream)`.
pub struct KeyedGaussian {
    rng: ChaCha8Rng,
}

impl KeyedGaussian {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    fn noise(seed: u64, stream_id: u16) -> Self {
        Self::new(seed, (u64::from(stream_id) << 8) | PURPOSE_NOISE)
    }

    fn fading(seed: u64, stream_id: u16) -> Self {
        Self::new(seed, (u64::from(stream_id) << 8) | PURPOSE_FADING)
    }

    /// Positions the generator at sample `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(u128::from(index) * 4);
    }

    /// Next pair of independent N(0, 1) values (Box–Muller).
    pub fn next_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// Complex Gaussian with total variance `variance`.
    pub fn next_complex(&mut self, variance: f64) -> Complex64 {
        let (a, b) = self.next_pair();
        let sd = (variance / 2.0).sqrt();
        Complex64::new(a * sd, b * sd)
    }
}

/// Block-fading gain for a frame: `1` for AWGN, `CN(0, 1)` for Rayleigh.
pub fn channel_gain(config: &ChannelConfig, stream_id: u16) -> Complex64 {
    match config.kind {
        ChannelKind::Awgn => Complex64::new(1.0, 0.0),
        ChannelKind::Rayleigh => KeyedGaussian::fading(config.seed, stream_id).next_complex(1.0),
    }
}

/// Passes a normalized block through the channel. Noise variance is set for
/// unit signal power.
pub fn transmit(
    block: &SymbolBlock,
    config: &ChannelConfig,
    stream_id: u16,
) -> (SymbolBlock, Complex64) {
    let h = channel_gain(config, stream_id);
    let sigma2 = if config.snr_db == NOISELESS {
        0.0
    } else {
        snr_to_noise_variance(config.snr_db, 1.0).expect("unit power is positive")
    };
    let mut out = block.clone();
    if sigma2 > 0.0 {
        let mut gen = KeyedGaussian::noise(config.seed, stream_id);
        for s in &mut out.symbols {
            *s = h * *s + gen.next_complex(sigma2);
        }
    } else if h != Complex64::new(1.0, 0.0) {
        for s in &mut out.symbols {
            *s *= h;
        }
    }
    (out, h)
}

/// Perfect-CSI equalizer: divides every symbol by `h`.
pub fn equalize(received: &SymbolBlock, h: Complex64) -> Result<SymbolBlock, ChannelError> {
    let mag = h.norm();
    if mag < DEEP_FADE_THRESHOLD {
        return Err(ChannelError::DeepFade(mag));
    }
    let mut out = received.clone();
    if h != Complex64::new(1.0, 0.0) {
        for s in &mut out.symbols {
            *s /= h;
        }
    }
    Ok(out)
}

/// Image payload: width and height (u32 LE), channel count (u8), raw samples,
/// then an optional placement trailer of `x0, y0` (u32 LE each).
pub fn encode_image_payload(image: &ImageBuffer, origin: Option<(u32, u32)>) -> Vec<u8> {
    let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + image.data().len() + 8);
    out.extend_from_slice(&image.width().to_le_bytes());
    out.extend_from_slice(&image.height().to_le_bytes());
    out.push(CHANNELS as u8);
    out.extend_from_slice(image.data());
    if let Some((x, y)) = origin {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
    }
    out
}

pub fn decode_image_payload(
    bytes: &[u8],
) -> Result<(ImageBuffer, Option<(u32, u32)>), ChannelError> {
    let head = bytes
        .get(..IMAGE_HEADER_LEN)
        .ok_or(ChannelError::MalformedPayload("short image header"))?;
    let w = u32::from_le_bytes(head[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if usize::from(head[8]) != CHANNELS {
        return Err(ChannelError::MalformedPayload("unsupported channel count"));
    }
    let end = IMAGE_HEADER_LEN + w as usize * h as usize * CHANNELS;
    let samples = bytes
        .get(IMAGE_HEADER_LEN..end)
        .ok_or(ChannelError::MalformedPayload("short image samples"))?;
    let img = ImageBuffer::from_raw(w, h, samples.to_vec()).expect("length checked");
    let origin = match &bytes[end..] {
        [] => None,
        t if t.len() == 8 => Some((
            u32::from_le_bytes(t[0..4].try_into().unwrap()),
            u32::from_le_bytes(t[4..8].try_into().unwrap()),
        )),
        _ => return Err(ChannelError::MalformedPayload("bad placement trailer")),
    };
    Ok((img, origin))
}

/// On-wire unit: `MSC1`, version, payload type, stream id (u16 LE), payload
/// length (u32 LE), payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub payload_type: u8,
    pub stream_id: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(payload_type: PayloadType, stream_id: u16, payload: Vec<u8>) -> Self {
        Self {
            payload_type: payload_type as u8,
            stream_id,
            payload,
        }
    }

    pub fn kind(&self) -> Option<PayloadType> {
        PayloadType::from_u8(self.payload_type)
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len()
    }
}

pub fn encode_frame(payload_type: u8, stream_id: u16, payload: &[u8]) -> Vec<u8> {
    let len = u32::try_from(payload.len()).expect("payload length must fit in 32 bits");
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(payload_type);
    out.extend_from_slice(&stream_id.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    out
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        encode_frame(self.payload_type, self.stream_id, &self.payload)
    }
}

/// Header fields as read from the wire, before validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct RawHeader {
    magic_ok: bool,
    version: u8,
    payload_type: u8,
    stream_id: u16,
    payload_len: usize,
}

fn parse_header(h: &[u8; FRAME_HEADER_LEN]) -> RawHeader {
    RawHeader {
        magic_ok: &h[0..4] == FRAME_MAGIC,
        version: h[4],
        payload_type: h[5],
        stream_id: u16::from_le_bytes([h[6], h[7]]),
        payload_len: u32::from_le_bytes([h[8], h[9], h[10], h[11]]) as usize,
    }
}

/// Decodes the frame at the start of `bytes`. Bytes past the declared
/// payload are ignored.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let head: &[u8; FRAME_HEADER_LEN] = bytes
        .get(..FRAME_HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(FrameError::Truncated {
            needed: FRAME_HEADER_LEN,
            available: bytes.len(),
        })?;
    let h = parse_header(head);
    if !h.magic_ok {
        return Err(FrameError::BadMagic);
    }
    if h.version != FRAME_VERSION {
        return Err(FrameError::BadVersion(h.version));
    }
    let needed = FRAME_HEADER_LEN + h.payload_len;
    let payload = bytes.get(FRAME_HEADER_LEN..needed).ok_or(FrameError::Truncated {
        needed,
        available: bytes.len(),
    })?;
    Ok(Frame {
        payload_type: h.payload_type,
        stream_id: h.stream_id,
        payload: payload.to_vec(),
    })
}

/// Outcome of reading one frame from a byte stream.
#[derive(Debug)]
pub enum ReadOutcome {
    Frame(Frame),
    /// A complete but invalid frame was consumed and discarded.
    Skipped(FrameError),
    /// Clean end of stream at a frame boundary.
    End,
}

/// Reads one frame from a stream. Frames with a bad magic or version are
/// consumed using their declared length and reported as skipped; a stream
/// that ends mid-frame yields `Truncated`.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Result<ReadOutcome, FrameError>> {
    let mut head = [0u8; FRAME_HEADER_LEN];
    let mut filled = 0;
    while filled < FRAME_HEADER_LEN {
        match r.read(&mut head[filled..]) {
            Ok(0) if filled == 0 => return Ok(Ok(ReadOutcome::End)),
            Ok(0) => {
                return Ok(Err(FrameError::Truncated {
                    needed: FRAME_HEADER_LEN,
                    available: filled,
                }))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let h = parse_header(&head);
    let mut payload = Vec::new();
    let got = r.by_ref().take(h.payload_len as u64).read_to_end(&mut payload)?;
    if got < h.payload_len {
        return Ok(Err(FrameError::Truncated {
            needed: FRAME_HEADER_LEN + h.payload_len,
            available: FRAME_HEADER_LEN + got,
        }));
    }
    if !h.magic_ok {
        return Ok(Ok(ReadOutcome::Skipped(FrameError::BadMagic)));
    }
    if h.version != FRAME_VERSION {
        return Ok(Ok(ReadOutcome::Skipped(FrameError::BadVersion(h.version))));
    }
    Ok(Ok(ReadOutcome::Frame(Frame {
        payload_type: h.payload_type,
        stream_id: h.stream_id,
        payload,
    })))
}
