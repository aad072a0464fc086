//! End-to-end orchestration: one scene through transmitter, channel and
//! receiver; SNR sweeps; and the socket-split transmitter/receiver mode.
//!
//! The transmitter emits a session frame first, then the main slice on
//! stream 0 and one caption block per stream `1..=k`. Channel corruption is
//! applied before framing, so the socket itself is lossless.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{self, BridgeClient};
use crate::channel::{
    self, ChannelConfig, ChannelKind, Frame, FrameError, PayloadType, ReadOutcome, NOISELESS,
};
use crate::corrector::{self, NoiseModel};
use crate::derive_seed;
use crate::image::ImageBuffer;
use crate::metrics::{self, MetricsReport, CSV_HEADER};
use crate::reconstruct::{self, Diagnostics, ParsedObject};
use crate::scene::{self, SceneError, SceneSpec, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use crate::semantics::{
    self, EmbeddingTable, SemanticsError, TextEmbedding, Vocab, CAPTION_JOIN, DEFAULT_DIM, DEFAULT_TABLE_SEED,
};
use crate::vision::{self, Block, MainSlice, VisionError};

/// Tokens drawn when estimating the substitution probability.
pub const SUB_PROB_TRIALS: usize = 1000;
/// Estimates are capped here; at 0.5 the corrector stops preferring nearer
/// candidates.
pub const MAX_SUB_PROB: f64 = 0.45;
pub const BACKEND_ENV: &str = "MULTISC_BACKEND";

const SUB_PROB_KEY: u64 = 0x7375_6270;
const MAIN_STREAM: u16 = 0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("stream carried no session header")]
    MissingSession,
    #[error("bad session header: {0}")]
    BadSession(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Channel kind and SNR for single runs. The seed is replaced per scene
    /// by one derived from `master_seed` and the scene seed.
    pub channel: ChannelConfig,
    /// Fusion radius in pixels.
    pub epsilon: f64,
    pub num_scenes: usize,
    pub objects_per_scene: usize,
    pub snr_grid: Vec<f64>,
    pub backend: Option<String>,
    pub output_path: PathBuf,
    pub master_seed: u64,
    /// Fixed corrector substitution probability; estimated per SNR when absent.
    pub sub_prob: Option<f64>,
    pub width: u32,
    pub height: u32,
}

impl RunConfig {
    pub fn new(kind: ChannelKind, master_seed: u64) -> Self {
        Self {
            channel: ChannelConfig { kind, snr_db: NOISELESS, seed: master_seed },
            epsilon: default_epsilon(DEFAULT_WIDTH, DEFAULT_HEIGHT),
            num_scenes: 100,
            objects_per_scene: 3,
            snr_grid: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            backend: None,
            output_path: PathBuf::from("results.csv"),
            master_seed,
            sub_prob: None,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
        }
    }

    pub fn with_snr(&self, snr_db: f64) -> Self {
        let mut c = self.clone();
        c.channel.snr_db = snr_db;
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.snr_grid.is_empty() {
            return bad("snr grid is empty");
        }
        if self.snr_grid.iter().any(|s| s.is_nan()) || self.snr_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("snr grid must be strictly ascending");
        }
        if self.num_scenes == 0 {
            return bad("at least one scene is required");
        }
        if self.objects_per_scene == 0 || self.objects_per_scene > scene::MAX_OBJECTS {
            return bad("objects per scene out of range");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        if self.width == 0 || self.height == 0 {
            return bad("canvas must be non-empty");
        }
        if let Some(p) = self.sub_prob {
            if !(0.0..1.0).contains(&p) {
                return bad("substitution probability outside [0, 1)");
            }
        }
        Ok(())
    }

    /// Seed of scene `index`; independent of the SNR grid.
    pub fn scene_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }

    pub fn scene(&self, index: usize) -> Result<SceneSpec, SceneError> {
        scene::generate_scene_sized(self.scene_seed(index), self.objects_per_scene, self.width, self.height)
    }
}

pub fn default_epsilon(width: u32, height: u32) -> f64 {
    0.2 * f64::from(width.min(height))
}

/// Parses `start:stop:step` (inclusive of `stop` when reached), a comma list,
/// or a single value. `inf` denotes the noiseless channel.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| -> Result<f64, String> {
        match t.trim() {
            "inf" | "noiseless" => Ok(NOISELESS),
            t => t.parse::<f64>().map_err(|e| format!("bad snr {t:?}: {e}")),
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, d) = (num(start)?, num(stop)?, num(step)?);
            if !(d > 0.0) || !a.is_finite() || !b.is_finite() || b < a {
                return Err(format!("bad snr range {s:?}"));
            }
            let n = ((b - a) / d + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * d).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(format!("bad snr grid {s:?}")),
    }
}

/// `MULTISC_BACKEND` wins over the flag value.
pub fn effective_backend(flag: Option<String>) -> Option<String> {
    std::env::var(BACKEND_ENV).ok().filter(|s| !s.is_empty()).or(flag)
}

/// Evaluation-only header sent ahead of the payload frames so the receiver
/// can score its reconstruction against the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub spec: SceneSpec,
    #[serde(with = "channel::snr_serde")]
    pub snr_db: f64,
    pub channel_kind: ChannelKind,
    pub epsilon: f64,
    pub master_seed: u64,
    pub sub_prob: Option<f64>,
    /// Caption streams the transmitter produced, including any dropped.
    pub text_streams: u16,
}

impl SessionHeader {
    fn frame(&self) -> Frame {
        let body = serde_json::to_vec(self).expect("session serializes");
        Frame::new(PayloadType::Session, MAIN_STREAM, body)
    }
}

/// Everything the transmitter needs beyond the config.
pub struct Codebook {
    pub vocab: Vocab,
    pub table: EmbeddingTable,
}

impl Codebook {
    pub fn standard() -> Self {
        let vocab = Vocab::grammar();
        let table = EmbeddingTable::for_vocab(&vocab, DEFAULT_DIM, DEFAULT_TABLE_SEED);
        Self { vocab, table }
    }
}

impl Default for Codebook {
    fn default() -> Self {
        Self::standard()
    }
}

/// Per-scene channel: the configured kind and SNR with a seed keyed by the
/// master seed and the scene.
pub fn scene_channel(spec: &SceneSpec, config: &RunConfig) -> ChannelConfig {
    ChannelConfig {
        seed: derive_seed(config.master_seed, spec.seed),
        ..config.channel
    }
}

/// Transmitter-side content of a scene before the channel.
pub struct Transmission {
    pub image: ImageBuffer,
    pub main: MainSlice,
    pub blocks: Vec<Block>,
    pub captions: Vec<String>,
}

pub fn analyze_scene(spec: &SceneSpec, epsilon: f64) -> Result<Transmission, HarnessError> {
    let image = scene::rasterize(spec);
    let main = vision::segment_main(&image)?;
    let boxes = vision::detect_blocks(&image);
    let blocks = vision::fuse_blocks(&image, &boxes, epsilon);
    let captions = blocks
        .iter()
        .map(|b| semantics::stub_caption(b, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Transmission { image, main, blocks, captions })
}

/// Captions the transmitter sends for `spec`, joined in stream order; the
/// BLEU reference.
pub fn reference_text(spec: &SceneSpec, epsilon: f64) -> Result<String, HarnessError> {
    Ok(analyze_scene(spec, epsilon)?.captions.join(CAPTION_JOIN))
}

fn through_channel(
    payload: &[u8],
    kind: PayloadType,
    channel: &ChannelConfig,
    stream_id: u16,
) -> Option<Vec<u8>> {
    let block = channel::modulate(payload, kind).expect("payload built by this module");
    let (rx, h) = channel::transmit(&block, channel, stream_id);
    channel::equalize(&rx, h).ok().map(|eq| channel::demodulate(&eq))
}

/// Runs the transmitter: segmentation, fusion, captioning and embedding, then
/// per-stream channel corruption. Streams lost to a deep fade are omitted.
pub fn transmit_side(spec: &SceneSpec, config: &RunConfig, book: &Codebook) -> Result<Vec<Frame>, HarnessError> {
    let tx = analyze_scene(spec, config.epsilon)?;
    let channel = scene_channel(spec, config);
    let text_streams = u16::try_from(tx.captions.len())
        .map_err(|_| HarnessError::InvalidConfig("too many caption streams".into()))?;
    let header = SessionHeader {
        spec: spec.clone(),
        snr_db: config.channel.snr_db,
        channel_kind: config.channel.kind,
        epsilon: config.epsilon,
        master_seed: config.master_seed,
        sub_prob: config.sub_prob,
        text_streams,
    };
    let mut frames = vec![header.frame()];

    let slice_payload = channel::encode_image_payload(&tx.main.pixels, Some(tx.main.origin()));
    if let Some(p) = through_channel(&slice_payload, PayloadType::ImageSlice, &channel, MAIN_STREAM) {
        frames.push(Frame::new(PayloadType::ImageSlice, MAIN_STREAM, p));
    }
    for (i, caption) in tx.captions.iter().enumerate() {
        let stream = i as u16 + 1;
        let payload = semantics::embed_text(caption, &book.vocab, &book.table).to_payload();
        if let Some(p) = through_channel(&payload, PayloadType::TextEmbedding, &channel, stream) {
            frames.push(Frame::new(PayloadType::TextEmbedding, stream, p));
        }
    }
    Ok(frames)
}

/// Receiver resources shared across runs.
pub struct Receiver {
    pub book: Codebook,
    pub backend: Option<Arc<BridgeClient>>,
    sub_prob_cache: std::sync::Mutex<HashMap<(u64, u64), f64>>,
}

impl Receiver {
    pub fn new(backend: Option<Arc<BridgeClient>>) -> Self {
        Self {
            book: Codebook::standard(),
            backend,
            sub_prob_cache: Default::default(),
        }
    }

    /// Connects to `endpoint` if given; an unreachable backend leaves LPIPS
    /// absent rather than failing.
    pub fn with_endpoint(endpoint: Option<&str>) -> Self {
        let backend = endpoint.and_then(|e| BridgeClient::connect_healthy(e).ok()).map(Arc::new);
        Self::new(backend)
    }

    /// Substitution probability for the corrector at `snr_db`: the session
    /// override, or a channel Monte Carlo estimate capped at [`MAX_SUB_PROB`].
    pub fn sub_prob(&self, snr_db: f64, master_seed: u64, fixed: Option<f64>) -> f64 {
        if let Some(p) = fixed {
            return p;
        }
        let key = (snr_db.to_bits(), master_seed);
        if let Some(&p) = self.sub_prob_cache.lock().unwrap().get(&key) {
            return p;
        }
        let p = corrector::estimate_sub_prob(
            snr_db,
            &self.book.vocab,
            &self.book.table,
            SUB_PROB_TRIALS,
            derive_seed(master_seed, SUB_PROB_KEY),
        )
        .min(MAX_SUB_PROB);
        self.sub_prob_cache.lock().unwrap().insert(key, p);
        p
    }

    /// Steps R1 to R3: decode and correct captions, parse, compose and score.
    pub fn receive(&self, frames: &[Frame]) -> Result<ReceivedRun, HarnessError> {
        let mut session: Option<SessionHeader> = None;
        let mut slice: Option<MainSlice> = None;
        let mut embeddings: Vec<(u16, TextEmbedding)> = Vec::new();
        let mut skipped = 0usize;
        for f in frames {
            match f.kind() {
                Some(PayloadType::Session) => {
                    let h: SessionHeader = serde_json::from_slice(&f.payload)
                        .map_err(|e| HarnessError::BadSession(e.to_string()))?;
                    h.spec.validate().map_err(|e| HarnessError::BadSession(e.to_string()))?;
                    session = Some(h);
                }
                Some(PayloadType::ImageSlice) => match channel::decode_image_payload(&f.payload) {
                    Ok((pixels, Some((x0, y0)))) => slice = MainSlice::from_received(x0, y0, pixels),
                    _ => skipped += 1,
                },
                Some(PayloadType::TextEmbedding) => match TextEmbedding::from_payload(&f.payload) {
                    Some(e) if e.dim() == self.book.table.dim() => embeddings.push((f.stream_id, e)),
                    _ => skipped += 1,
                },
                None => skipped += 1,
            }
        }
        let session = session.ok_or(HarnessError::MissingSession)?;
        embeddings.sort_by_key(|(s, _)| *s);

        let p = self.sub_prob(session.snr_db, session.master_seed, session.sub_prob);
        let model = NoiseModel::uniform(p, &self.book.vocab).expect("probability capped below 1");
        let captions = embeddings
            .iter()
            .map(|(_, e)| {
                let noisy = semantics::decode_embedding(e, &self.book.vocab, &self.book.table)?;
                Ok(corrector::correct_spelling(&noisy, &self.book.vocab, &model))
            })
            .collect::<Result<Vec<String>, SemanticsError>>()?;

        let spec = &session.spec;
        let parsed = reconstruct::parse_captions(&captions);
        let recon = reconstruct::compose_image(&parsed.objects, slice.as_ref(), spec.width, spec.height);
        let source = scene::rasterize(spec);
        let candidate = captions.join(CAPTION_JOIN);
        let reference = reference_text(spec, session.epsilon)?;
        let lpips = self
            .backend
            .as_deref()
            .and_then(|b| metrics::lpips(&source, &recon, Some(b)).ok());
        let report = MetricsReport {
            snr_db: session.snr_db,
            channel_kind: session.channel_kind,
            cosine: metrics::image_cosine(&source, &recon).expect("same canvas"),
            bleu: metrics::bleu(&candidate, &[reference], metrics::DEFAULT_MAX_N),
            lpips,
            scene_seed: spec.seed,
            recovered_objects: recovered_count(&parsed.objects, spec),
            source_objects: spec.objects.len(),
            slice_lost: slice.is_none(),
        };
        let diagnostics = Diagnostics {
            parsed: parsed.objects.len(),
            dropped: parsed.dropped,
            slice_lost: slice.is_none(),
        };
        Ok(ReceivedRun {
            report,
            reconstruction: recon,
            captions,
            diagnostics,
            skipped_frames: skipped,
        })
    }
}

/// Size of the multiset intersection between parsed and source
/// `(shape, color, cell)` triples.
pub fn recovered_count(parsed: &[ParsedObject], spec: &SceneSpec) -> usize {
    let mut pool: HashMap<ParsedObject, usize> = HashMap::new();
    for o in &spec.objects {
        let key = ParsedObject { shape: o.shape, color: o.color, cell: o.cell(spec.width, spec.height) };
        *pool.entry(key).or_default() += 1;
    }
    parsed
        .iter()
        .filter(|p| match pool.get_mut(p) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

#[derive(Clone, Debug)]
pub struct ReceivedRun {
    pub report: MetricsReport,
    pub reconstruction: ImageBuffer,
    /// Corrected captions in stream order.
    pub captions: Vec<String>,
    pub diagnostics: Diagnostics,
    /// Frames discarded as malformed, including invalid ones on the wire.
    pub skipped_frames: usize,
}

/// Runs one scene through transmitter, channel and receiver in process.
pub fn run_pipeline(spec: &SceneSpec, config: &RunConfig) -> Result<MetricsReport, HarnessError> {
    let rx = Receiver::with_endpoint(config.backend.as_deref());
    Ok(run_with(spec, config, &rx)?.report)
}

pub fn run_with(spec: &SceneSpec, config: &RunConfig, rx: &Receiver) -> Result<ReceivedRun, HarnessError> {
    let frames = transmit_side(spec, config, &rx.book)?;
    rx.receive(&frames)
}

/// Evaluates every scene at every grid SNR and writes the CSV: detail rows
/// ordered by SNR then scene, followed by one `mean` row per SNR.
pub fn snr_sweep(config: &RunConfig) -> Result<Vec<MetricsReport>, HarnessError> {
    config.validate()?;
    let rx = Receiver::with_endpoint(config.backend.as_deref());
    let specs = (0..config.num_scenes)
        .map(|i| config.scene(i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::with_capacity(specs.len() * config.snr_grid.len());
    for &snr in &config.snr_grid {
        let c = config.with_snr(snr);
        let rows = specs
            .par_iter()
            .map(|s| run_with(s, &c, &rx).map(|r| r.report))
            .collect::<Result<Vec<_>, _>>()?;
        reports.extend(rows);
    }
    write_csv(&config.output_path, &reports, config.snr_grid.len())?;
    Ok(reports)
}

/// Writes detail rows, then per-group summary rows over consecutive groups of
/// equal size.
pub fn write_csv(path: &Path, reports: &[MetricsReport], groups: usize) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    if groups > 0 && !reports.is_empty() {
        for chunk in reports.chunks(reports.len().div_ceil(groups)) {
            if let Some(rec) = metrics::summary_record(chunk) {
                w.write_record(rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Companion gnuplot script plotting mean cosine against SNR.
pub fn write_gnuplot_script(csv_path: &Path, script_path: &Path) -> io::Result<()> {
    let name = csv_path.display();
    let mut f = BufWriter::new(File::create(script_path)?);
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set xlabel 'SNR (dB)'")?;
    writeln!(f, "set ylabel 'mean cosine similarity'")?;
    writeln!(f, "set key off")?;
    writeln!(f, "set grid")?;
    writeln!(
        f,
        "plot '< grep \",mean,\" {name}' using 1:3 with linespoints"
    )?;
    f.flush()
}

fn frames_to_bytes(frames: &[Frame]) -> Vec<u8> {
    frames.iter().flat_map(Frame::encode).collect()
}

/// Reads frames until end of stream; invalid frames are skipped and counted.
pub fn read_frames<R: Read>(r: &mut R) -> Result<(Vec<Frame>, usize), HarnessError> {
    let mut frames = Vec::new();
    let mut skipped = 0;
    loop {
        match channel::read_frame(r) {
            Ok(Ok(ReadOutcome::Frame(f))) => frames.push(f),
            Ok(Ok(ReadOutcome::Skipped(_))) => skipped += 1,
            Ok(Ok(ReadOutcome::End)) => return Ok((frames, skipped)),
            Ok(Err(e @ FrameError::Truncated { .. })) => return Err(HarnessError::ConnectionLost(e.to_string())),
            Ok(Err(_)) => skipped += 1,
            Err(e) => return Err(HarnessError::ConnectionLost(e.to_string())),
        }
    }
}

/// Receives one session from a byte stream.
pub fn receive_stream<R: Read>(r: &mut R, rx: &Receiver) -> Result<ReceivedRun, HarnessError> {
    let (frames, skipped) = read_frames(r)?;
    let mut run = rx.receive(&frames)?;
    run.skipped_frames += skipped;
    Ok(run)
}

/// Handles one connection: reads frames until the peer half-closes, runs the
/// receiver, and replies with the report as one length-prefixed JSON message.
pub fn serve_connection(stream: TcpStream, rx: &Receiver) -> Result<ReceivedRun, HarnessError> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let run = receive_stream(&mut reader, rx)?;
    let mut w = stream;
    bridge::write_message(&mut w, run.report.to_json().as_bytes())
        .map_err(|e| HarnessError::ConnectionLost(e.to_string()))?;
    Ok(run)
}

/// Writes a receiver's artifacts: reconstruction PPM, diagnostics and report
/// JSON, named after the scene seed and SNR.
pub fn write_run_outputs(dir: &Path, run: &ReceivedRun) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let stem = format!(
        "scene-{}-{}-{}",
        run.report.scene_seed,
        run.report.channel_kind.name(),
        metrics::format_snr(run.report.snr_db)
    );
    let ppm = dir.join(format!("{stem}.ppm"));
    run.reconstruction.write_ppm(BufWriter::new(File::create(&ppm)?))?;
    std::fs::write(
        dir.join(format!("{stem}.diag.json")),
        serde_json::to_vec_pretty(&run.diagnostics).expect("diagnostics serialize"),
    )?;
    std::fs::write(dir.join(format!("{stem}.report.json")), run.report.to_json())?;
    Ok(ppm)
}

/// Accepts connections one at a time, writing each run's outputs into
/// `out_dir`. Stops after `limit` sessions when given. Failed sessions are
/// reported through `on_error` and do not stop the server.
pub fn serve_receiver(
    listener: &TcpListener,
    rx: &Receiver,
    out_dir: &Path,
    limit: Option<usize>,
    mut on_error: impl FnMut(&HarnessError),
) -> Result<usize, HarnessError> {
    let mut served = 0;
    for stream in listener.incoming() {
        if limit.is_some_and(|n| served >= n) {
            break;
        }
        let result = stream
            .map_err(HarnessError::from)
            .and_then(|s| serve_connection(s, rx))
            .and_then(|run| write_run_outputs(out_dir, &run).map(|_| ()));
        if let Err(e) = result {
            on_error(&e);
        }
        served += 1;
        if limit.is_some_and(|n| served >= n) {
            break;
        }
    }
    Ok(served)
}

/// Runs the transmitter for `spec`, streams its frames to the receiver at
/// `endpoint`, and returns the report the receiver sends back.
pub fn send_transmitter<A: ToSocketAddrs>(
    endpoint: A,
    spec: &SceneSpec,
    config: &RunConfig,
) -> Result<MetricsReport, HarnessError> {
    let frames = transmit_side(spec, config, &Codebook::standard())?;
    send_frames(endpoint, &frames_to_bytes(&frames))
}

/// Sends raw frame bytes and waits for the receiver's report.
pub fn send_frames<A: ToSocketAddrs>(endpoint: A, bytes: &[u8]) -> Result<MetricsReport, HarnessError> {
    let lost = |e: io::Error| HarnessError::ConnectionLost(e.to_string());
    let mut stream = TcpStream::connect(endpoint).map_err(lost)?;
    stream.write_all(bytes).map_err(lost)?;
    stream.shutdown(Shutdown::Write).map_err(lost)?;
    let body = bridge::read_message(&mut stream)
        .map_err(lost)?
        .ok_or_else(|| HarnessError::ConnectionLost("receiver closed without a report".into()))?;
    serde_json::from_slice(&body).map_err(|e| HarnessError::ConnectionLost(format!("bad report: {e}")))
}

/// Frame bytes for `spec` as the transmitter would put them on the wire.
pub fn transmit_bytes(spec: &SceneSpec, config: &RunConfig) -> Result<Vec<u8>, HarnessError> {
    Ok(frames_to_bytes(&transmit_side(spec, config, &Codebook::standard())?))
}
