//! Multi-stream semantic communication simulator.
//!
//! A transmitter splits a synthetic scene into a main image slice and a set of
//! fused caption blocks, sends each over its own noisy channel, and a receiver
//! corrects, parses and recomposes the scene for scoring.

pub mod bridge;
pub mod channel;
pub mod corrector;
pub mod genkernel;
pub mod harness;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod reconstruct;
pub mod scene;
pub mod semantics;
pub mod vision;

pub use channel::{ChannelConfig, ChannelKind, NOISELESS};
pub use harness::{run_pipeline, snr_sweep, RunConfig};
pub use image::ImageBuffer;
pub use metrics::MetricsReport;
pub use scene::SceneSpec;

/// Mixes a parent seed with a key into an independent child seed
/// (splitmix64 finalizer over the pair).
pub fn derive_seed(parent: u64, key: u64) -> u64 {
    let mut z = parent ^ key.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
