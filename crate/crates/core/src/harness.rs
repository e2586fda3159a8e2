//! Reproducible parallel replica execution.
//!
//! Replica `i` of a run always draws from the same ChaCha8 stream: the
//! master seed is passed through a 64-bit mixer to key the generator and
//! `i` selects the stream, so streams never overlap and results do not
//! depend on scheduling. Outputs are merged in replica-index order.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Replicas merged per batch; bounds the memory held by pending results.
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("replica {index} failed (master seed {master_seed}): {message}")]
    ReplicaFailed { index: u64, master_seed: u64, message: String },
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error("manifest was written by version {manifest}, this is {binary}")]
    VersionMismatch { manifest: String, binary: String },
    #[error("config digest {found} does not match manifest digest {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("run has no stage named {0:?}")]
    UnknownStage(String),
    #[error("replica {index} is out of range for a stage of {count}")]
    OutOfRange { index: u64, count: u64 },
    #[error("replayed replica {index} has digest {found:016x}, manifest recorded {expected:016x}")]
    DigestMismatch { index: u64, expected: u64, found: u64 },
}

/// 64-bit finalizer from SplitMix64.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Generator for replica `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.master_seed));
        rng.set_stream(index);
        rng
    }

    /// An independent seed family for a named sub-experiment.
    pub fn derive(&self, tag: u64) -> Self {
        Self { master_seed: mix64(self.master_seed ^ mix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))) }
    }
}

/// Stable 64-bit digest of a serializable value.
pub fn digest_value<T: Serialize + ?Sized>(value: &T) -> u64 {
    let bytes = serde_json::to_vec(value).expect("replica output serializes");
    let hash = Sha256::digest(&bytes);
    u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Digest over per-replica digests in index order.
pub fn combine_digests(digests: &[u64]) -> String {
    let mut h = Sha256::new();
    for d in digests {
        h.update(d.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

/// Merged outputs of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<T> {
    pub results: Vec<T>,
    pub digests: Vec<u64>,
    pub wall_seconds: f64,
}

impl<T> RunOutput<T> {
    pub fn sample_digest(&self) -> String {
        combine_digests(&self.digests)
    }
}

/// Worker count and progress reporting for [`run_replicas`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, progress: false }
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Runs `count` replicas of `task` on `options.workers` threads.
///
/// The task gets the replica index and its private stream. A replica that
/// returns an error or panics aborts the run; the lowest failing index is
/// reported.
pub fn run_replicas<T, E, F>(count: u64, seeds: &SeedSpec, options: RunOptions, task: F) -> Result<RunOutput<T>, HarnessError>
where
    T: Send + Serialize,
    E: std::fmt::Display,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T, E> + Sync,
{
    let start = Instant::now();
    let done = AtomicU64::new(0);
    let step = (count / 20).max(1);
    let one = |i: u64| -> Result<(T, u64), HarnessError> {
        let mut rng = seeds.stream(i);
        let out = catch_unwind(AssertUnwindSafe(|| task(i, &mut rng)))
            .map_err(|p| HarnessError::ReplicaFailed { index: i, master_seed: seeds.master_seed, message: panic_message(p) })?
            .map_err(|e| HarnessError::ReplicaFailed { index: i, master_seed: seeds.master_seed, message: e.to_string() })?;
        if options.progress {
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(step) || n == count {
                eprintln!("  {n}/{count} replicas ({:.1}s)", start.elapsed().as_secs_f64());
            }
        }
        let d = digest_value(&out);
        Ok((out, d))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.workers).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut results = Vec::with_capacity(count as usize);
    let mut digests = Vec::with_capacity(count as usize);
    let mut lo = 0;
    while lo < count {
        let hi = (lo + CHUNK).min(count);
        let outcomes: Vec<Result<(T, u64), HarnessError>> = pool.install(|| (lo..hi).into_par_iter().map(&one).collect());
        for o in outcomes {
            let (r, d) = o?;
            results.push(r);
            digests.push(d);
        }
        lo = hi;
    }
    Ok(RunOutput { results, digests, wall_seconds: start.elapsed().as_secs_f64() })
}

/// One `run_replicas` call inside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub master_seed: u64,
    pub replicas: u64,
    /// Position of this stage's first digest in the run's digest list.
    pub offset: u64,
    pub sample_digest: String,
    pub wall_seconds: f64,
}

/// Everything needed to reproduce a run from its config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    /// SHA-256 of the resolved config text.
    pub config_digest: String,
    pub master_seed: u64,
    pub replicas: u64,
    pub workers: usize,
    pub caps: BTreeMap<String, f64>,
    pub wall_seconds: f64,
    pub events: u64,
    /// SHA-256 over per-replica digests of all stages in order.
    pub sample_digest: String,
    pub stages: Vec<StageRecord>,
    /// Per-replica 64-bit digests, used by replay. Stored next to the
    /// manifest as a binary sidecar (see [`write_digests`]).
    #[serde(skip, default)]
    pub replica_digests: Vec<u64>,
    pub warnings: Vec<String>,
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(experiment: &str, config_text: &str, seeds: &SeedSpec, workers: usize) -> Self {
        Self {
            experiment: experiment.to_string(),
            version: VERSION.to_string(),
            config_digest: sha256_hex(config_text.as_bytes()),
            master_seed: seeds.master_seed,
            replicas: 0,
            workers,
            caps: BTreeMap::new(),
            wall_seconds: 0.0,
            events: 0,
            sample_digest: combine_digests(&[]),
            stages: Vec::new(),
            replica_digests: Vec::new(),
            warnings: Vec::new(),
            results: serde_json::Value::Null,
        }
    }

    /// Appends the replica outputs of one stage, run with `seeds`.
    pub fn record<T>(&mut self, stage: &str, seeds: &SeedSpec, out: &RunOutput<T>) {
        self.stages.push(StageRecord {
            name: stage.to_string(),
            master_seed: seeds.master_seed,
            replicas: out.digests.len() as u64,
            offset: self.replica_digests.len() as u64,
            sample_digest: out.sample_digest(),
            wall_seconds: out.wall_seconds,
        });
        self.replica_digests.extend_from_slice(&out.digests);
        self.replicas = self.replica_digests.len() as u64;
        self.sample_digest = combine_digests(&self.replica_digests);
        self.wall_seconds += out.wall_seconds;
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Refuses replay under a different binary version or config.
    pub fn check_replayable(&self, config_text: &str) -> Result<(), HarnessError> {
        if self.version != VERSION {
            return Err(HarnessError::VersionMismatch { manifest: self.version.clone(), binary: VERSION.to_string() });
        }
        let found = sha256_hex(config_text.as_bytes());
        if found != self.config_digest {
            return Err(HarnessError::ConfigMismatch { expected: self.config_digest.clone(), found });
        }
        Ok(())
    }
}

/// Writes digests as consecutive little-endian `u64`s.
pub fn write_digests(path: &std::path::Path, digests: &[u64]) -> std::io::Result<()> {
    let bytes: Vec<u8> = digests.iter().flat_map(|d| d.to_le_bytes()).collect();
    std::fs::write(path, bytes)
}

pub fn read_digests(path: &std::path::Path) -> std::io::Result<Vec<u64>> {
    let bytes = std::fs::read(path)?;
    Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Reruns replica `index` of `stage` with `seeds` and checks its digest
/// against the manifest.
pub fn replay<T, E, F>(
    manifest: &RunManifest,
    config_text: &str,
    stage: &str,
    seeds: &SeedSpec,
    index: u64,
    task: F,
) -> Result<T, HarnessError>
where
    T: Send + Serialize,
    E: std::fmt::Display,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T, E> + Sync,
{
    manifest.check_replayable(config_text)?;
    let record = manifest.stage(stage).ok_or_else(|| HarnessError::UnknownStage(stage.to_string()))?;
    if index >= record.replicas {
        return Err(HarnessError::OutOfRange { index, count: record.replicas });
    }
    let mut rng = seeds.stream(index);
    let out =
        task(index, &mut rng).map_err(|e| HarnessError::ReplicaFailed { index, master_seed: seeds.master_seed, message: e.to_string() })?;
    let found = digest_value(&out);
    if let Some(&expected) = manifest.replica_digests.get((record.offset + index) as usize) {
        if expected != found {
            return Err(HarnessError::DigestMismatch { index, expected, found });
        }
    }
    Ok(out)
}
