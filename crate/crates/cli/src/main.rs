use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use multisc::harness::{self, Receiver, RunConfig};
use multisc::scene::{self, SceneSpec};
use multisc::ChannelKind;

#[derive(Parser)]
#[command(name = "multisc", version, about = "Multi-stream semantic communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate random scenes over an SNR grid and write a CSV.
    Sweep(SweepArgs),
    /// Run a receiver that accepts transmitter connections.
    Serve(ServeArgs),
    /// Transmit one scene to a running receiver.
    Send(SendArgs),
    /// Run one scene in process and write its reconstruction.
    Demo(DemoArgs),
    /// Generate a random scene description.
    Scene(SceneArgs),
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// awgn or rayleigh.
    #[arg(long, default_value = "awgn")]
    channel: ChannelKind,
    /// Fusion radius in pixels [default: 0.2 of the shorter canvas side].
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fixed corrector substitution probability.
    #[arg(long)]
    sub_prob: Option<f64>,
    /// host:port of a model backend; MULTISC_BACKEND takes precedence.
    #[arg(long)]
    backend: Option<String>,
}

impl ChannelArgs {
    fn config(&self, width: u32, height: u32) -> RunConfig {
        let mut c = RunConfig::new(self.channel, self.seed);
        c.epsilon = self.epsilon.unwrap_or_else(|| harness::default_epsilon(width, height));
        c.sub_prob = self.sub_prob;
        c.backend = harness::effective_backend(self.backend.clone());
        c.width = width;
        c.height = height;
        c
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ChannelArgs,
    /// start:stop:step, a comma list, or a single value (inf = noiseless).
    #[arg(long, default_value = "0:19:3", allow_hyphen_values = true)]
    snr: String,
    #[arg(long, default_value_t = 100)]
    scenes: usize,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Directory for reconstructions, diagnostics and reports.
    #[arg(long, default_value = "received")]
    out_dir: PathBuf,
    /// Exit after this many sessions.
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Args)]
struct SceneSource {
    /// Scene JSON file.
    #[arg(long, conflicts_with = "scene_seed")]
    scene: Option<PathBuf>,
    /// Generate the scene from this seed instead.
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    objects: usize,
}

impl SceneSource {
    fn load(&self) -> Result<SceneSpec> {
        match (&self.scene, self.scene_seed) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(SceneSpec::from_json(&text)?)
            }
            (None, Some(seed)) => Ok(scene::generate_scene(seed, self.objects)?),
            (None, None) => bail!("either --scene or --scene-seed is required"),
        }
    }
}

#[derive(Args)]
struct SendArgs {
    /// Receiver endpoint, host:port.
    #[arg(long)]
    to: String,
    #[command(flatten)]
    source: SceneSource,
    #[command(flatten)]
    common: ChannelArgs,
    #[arg(long, default_value = "inf", value_parser = parse_snr, allow_hyphen_values = true)]
    snr: f64,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    source: SceneSource,
    #[command(flatten)]
    common: ChannelArgs,
    #[arg(long, default_value = "inf", value_parser = parse_snr, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value = "recon.ppm")]
    out: PathBuf,
    /// Write the source, main slice and fused block crops here.
    #[arg(long)]
    dump_blocks: Option<PathBuf>,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long, default_value = "scene.json")]
    out: PathBuf,
    /// Also rasterize to this PPM.
    #[arg(long)]
    ppm: Option<PathBuf>,
}

fn parse_snr(s: &str) -> Result<f64, String> {
    match harness::parse_snr_grid(s)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(format!("expected a single SNR, got {s:?}")),
    }
}

fn write_ppm(path: &Path, img: &multisc::ImageBuffer) -> Result<()> {
    img.write_ppm(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut config = args.common.config(scene::DEFAULT_WIDTH, scene::DEFAULT_HEIGHT);
    config.snr_grid = harness::parse_snr_grid(&args.snr).map_err(anyhow::Error::msg)?;
    config.num_scenes = args.scenes;
    config.objects_per_scene = args.objects;
    config.output_path = args.out.clone();
    let reports = harness::snr_sweep(&config)?;
    if args.gnuplot {
        let script = args.out.with_extension("gp");
        harness::write_gnuplot_script(&args.out, &script)?;
        eprintln!("wrote {}", script.display());
    }
    eprintln!("wrote {} rows to {}", reports.len(), args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let listener = TcpListener::bind((args.bind.as_str(), args.port))
        .with_context(|| format!("binding {}:{}", args.bind, args.port))?;
    let backend = harness::effective_backend(args.backend);
    let rx = Receiver::with_endpoint(backend.as_deref());
    eprintln!("listening on {}", listener.local_addr()?);
    let served = harness::serve_receiver(&listener, &rx, &args.out_dir, args.sessions, |e| {
        eprintln!("session failed: {e}")
    })?;
    eprintln!("served {served} sessions");
    Ok(())
}

fn send(args: SendArgs) -> Result<()> {
    let spec = args.source.load()?;
    let config = args.common.config(spec.width, spec.height).with_snr(args.snr);
    let report = harness::send_transmitter(args.to.as_str(), &spec, &config)?;
    println!("{}", report.to_json());
    Ok(())
}

fn demo(args: DemoArgs) -> Result<()> {
    let spec = args.source.load()?;
    let config = args.common.config(spec.width, spec.height).with_snr(args.snr);
    if let Some(dir) = &args.dump_blocks {
        fs::create_dir_all(dir)?;
        let tx = harness::analyze_scene(&spec, config.epsilon)?;
        write_ppm(&dir.join("source.ppm"), &tx.image)?;
        write_ppm(&dir.join("main.ppm"), &tx.main.pixels)?;
        for (i, (block, caption)) in tx.blocks.iter().zip(&tx.captions).enumerate() {
            write_ppm(&dir.join(format!("block-{i}.ppm")), &block.pixels)?;
            println!("block {i}: {caption}");
        }
    }
    let rx = Receiver::with_endpoint(config.backend.as_deref());
    let run = harness::run_with(&spec, &config, &rx)?;
    write_ppm(&args.out, &run.reconstruction)?;
    fs::write(args.out.with_extension("json"), serde_json::to_vec_pretty(&run.diagnostics)?)?;
    for c in &run.captions {
        println!("received: {c}");
    }
    println!("{}", run.report.to_json());
    Ok(())
}

fn make_scene(args: SceneArgs) -> Result<()> {
    let spec = scene::generate_scene(args.seed, args.objects)?;
    fs::write(&args.out, spec.to_json())?;
    if let Some(p) = &args.ppm {
        write_ppm(p, &scene::rasterize(&spec))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
        Command::Send(a) => send(a),
        Command::Demo(a) => demo(a),
        Command::Scene(a) => make_scene(a),
    }
}
