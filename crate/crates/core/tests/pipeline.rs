use std::io::Cursor;
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use multisc::bridge::{self, BridgeClient};
use multisc::channel::{ChannelKind, FRAME_MAGIC, NOISELESS};
use multisc::harness::{self, HarnessError, Receiver, RunConfig};
use multisc::scene;

fn config(kind: ChannelKind, snr: f64, seed: u64) -> RunConfig {
    RunConfig::new(kind, seed).with_snr(snr)
}

/// Serves `n` sessions on a loopback port in a background thread.
fn spawn_receiver(n: usize) -> (String, thread::JoinHandle<usize>, tempfile::TempDir) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    let handle = thread::spawn(move || {
        let rx = Receiver::new(None);
        harness::serve_receiver(&listener, &rx, &out, Some(n), |e| panic!("session failed: {e}")).unwrap()
    });
    (addr, handle, dir)
}

#[test]
fn loopback_matches_in_process() {
    let cases = [
        (ChannelKind::Awgn, NOISELESS, 1, 3),
        (ChannelKind::Awgn, 4.0, 2, 5),
        (ChannelKind::Rayleigh, 10.0, 3, 2),
        (ChannelKind::Rayleigh, -3.0, 4, 8),
    ];
    let (addr, handle, dir) = spawn_receiver(cases.len());
    for (kind, snr, scene_seed, n) in cases {
        let spec = scene::generate_scene(scene_seed, n).unwrap();
        let c = config(kind, snr, 9);
        let remote = harness::send_transmitter(addr.as_str(), &spec, &c).unwrap();
        let local = harness::run_pipeline(&spec, &c).unwrap();
        assert_eq!(remote.to_json(), local.to_json());
    }
    assert_eq!(handle.join().unwrap(), cases.len());
    let written = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(written, 3 * cases.len());
}

#[test]
fn corrupted_magic_is_skipped_and_counted() {
    let spec = scene::generate_scene(12, 3).unwrap();
    let c = config(ChannelKind::Awgn, NOISELESS, 1);
    let rx = Receiver::new(None);
    let frames = harness::transmit_side(&spec, &c, &rx.book).unwrap();
    assert!(frames.len() >= 3);
    let mut wire = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let mut bytes = f.encode();
        if i == frames.len() - 1 {
            bytes[0] ^= 0xff;
            assert_ne!(&bytes[..4], FRAME_MAGIC);
        }
        wire.extend(bytes);
    }
    let run = harness::receive_stream(&mut Cursor::new(wire), &rx).unwrap();
    assert_eq!(run.skipped_frames, 1);
    assert_eq!(run.captions.len(), frames.len() - 3);
    assert!(run.report.bleu < 1.0);
}

#[test]
fn truncated_stream_is_connection_lost() {
    let spec = scene::generate_scene(12, 2).unwrap();
    let bytes = harness::transmit_bytes(&spec, &config(ChannelKind::Awgn, NOISELESS, 1)).unwrap();
    let rx = Receiver::new(None);
    let cut = bytes.len() - 5;
    let err = harness::receive_stream(&mut Cursor::new(&bytes[..cut]), &rx).unwrap_err();
    assert!(matches!(err, HarnessError::ConnectionLost(_)));
}

#[test]
fn absent_receiver_is_connection_lost() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let spec = scene::generate_scene(1, 2).unwrap();
    let err = harness::send_transmitter(("127.0.0.1", port), &spec, &config(ChannelKind::Awgn, 0.0, 1)).unwrap_err();
    assert!(matches!(err, HarnessError::ConnectionLost(_)));
}

#[test]
fn sweep_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(ChannelKind::Awgn, 42);
    c.snr_grid = vec![0.0, 19.0];
    c.num_scenes = 2;
    c.output_path = dir.path().join("a.csv");
    harness::snr_sweep(&c).unwrap();
    let first = std::fs::read(&c.output_path).unwrap();
    c.output_path = dir.path().join("b.csv");
    harness::snr_sweep(&c).unwrap();
    assert_eq!(first, std::fs::read(&c.output_path).unwrap());

    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "snr_db,channel,cosine,bleu,lpips,scene_seed,recovered,source");
    assert_eq!(lines.len(), 1 + 4 + 2);
    assert!(lines[5].starts_with("0,awgn,") && lines[5].contains(",mean,"));
    assert!(lines[6].starts_with("19,awgn,") && lines[6].contains(",mean,"));
    // Both SNR points see the same scenes.
    let seeds = |rows: &[&str]| -> Vec<String> { rows.iter().map(|l| l.split(',').nth(5).unwrap().to_string()).collect() };
    assert_eq!(seeds(&lines[1..3]), seeds(&lines[3..5]));
}

#[test]
fn sweep_against_stub_backend_fills_lpips() {
    let endpoint = bridge::stub::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(ChannelKind::Rayleigh, 5);
    c.snr_grid = vec![NOISELESS];
    c.num_scenes = 3;
    c.backend = Some(endpoint);
    c.output_path = dir.path().join("lp.csv");
    let reports = harness::snr_sweep(&c).unwrap();
    assert!(reports.iter().all(|r| r.lpips.is_some_and(|v| (0.0..=1.0).contains(&v))));
    let text = std::fs::read_to_string(&c.output_path).unwrap();
    assert!(text.lines().skip(1).all(|l| !l.split(',').nth(4).unwrap().is_empty()));
}

#[test]
fn unreachable_backend_leaves_lpips_empty() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(ChannelKind::Awgn, NOISELESS, 3);
    c.backend = Some(format!("127.0.0.1:{port}"));
    let spec = scene::generate_scene(0, 2).unwrap();
    assert_eq!(harness::run_pipeline(&spec, &c).unwrap().lpips, None);
}

#[test]
fn identical_images_score_zero_lpips_through_receiver() {
    let endpoint = bridge::stub::spawn().unwrap();
    let client = Arc::new(BridgeClient::connect_healthy(&endpoint).unwrap());
    let rx = Receiver::new(Some(client));
    let spec = scene::generate_scene(77, 1).unwrap();
    let run = harness::run_with(&spec, &config(ChannelKind::Awgn, NOISELESS, 1), &rx).unwrap();
    assert_eq!(run.report.lpips, Some(0.0));
}

#[test]
fn backend_env_overrides_flag() {
    std::env::set_var(harness::BACKEND_ENV, "10.0.0.1:9");
    assert_eq!(harness::effective_backend(Some("h:1".into())).as_deref(), Some("10.0.0.1:9"));
    std::env::set_var(harness::BACKEND_ENV, "");
    assert_eq!(harness::effective_backend(Some("h:1".into())).as_deref(), Some("h:1"));
    std::env::remove_var(harness::BACKEND_ENV);
    assert_eq!(harness::effective_backend(None), None);
}

#[test]
fn deep_noise_never_crashes() {
    for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
        for snr in [-30.0, -10.0, 0.0] {
            for s in 0..5 {
                let spec = scene::generate_scene(s, 1 + s as usize).unwrap();
                let r = harness::run_pipeline(&spec, &config(kind, snr, s)).unwrap();
                assert!(r.recovered_objects <= r.source_objects);
                assert!((-1.0..=1.0).contains(&r.cosine) && (0.0..=1.0).contains(&r.bleu));
            }
        }
    }
}

#[test]
fn diagnostics_and_outputs_are_written() {
    let spec = scene::generate_scene(8, 3).unwrap();
    let rx = Receiver::new(None);
    let run = harness::run_with(&spec, &config(ChannelKind::Awgn, NOISELESS, 2), &rx).unwrap();
    assert_eq!(run.diagnostics.parsed, 3);
    assert_eq!(run.diagnostics.dropped, 0);
    assert!(!run.diagnostics.slice_lost);
    let dir = tempfile::tempdir().unwrap();
    let ppm = harness::write_run_outputs(dir.path(), &run).unwrap();
    let back = multisc::ImageBuffer::read_ppm(std::io::BufReader::new(std::fs::File::open(ppm).unwrap())).unwrap();
    assert_eq!(back, run.reconstruction);
}
