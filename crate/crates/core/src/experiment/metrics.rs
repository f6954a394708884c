//! Metrics CSV files and the run manifest.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::fed::RoundResult;
use crate::sac::RewardParts;

/// One row of the per-round metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub run: u64,
    pub round: u64,
    pub strategy: String,
    pub accuracy: f64,
    pub shadow_accuracy: f64,
    pub test_accuracy: f64,
    pub rewards: RewardParts,
    pub weights: Vec<f64>,
    pub defects: Vec<bool>,
    pub wall_ms: u64,
}

impl RoundRecord {
    pub fn new(
        run: u64,
        strategy: &str,
        result: &RoundResult,
        rewards: RewardParts,
        wall_ms: u64,
    ) -> Self {
        Self {
            run,
            round: result.round,
            strategy: strategy.to_string(),
            accuracy: result.global_accuracy,
            shadow_accuracy: result.fedavg_shadow_accuracy,
            test_accuracy: result.test_accuracy,
            rewards,
            weights: result.weights.weights().to_vec(),
            defects: result.defect_flags.clone(),
            wall_ms,
        }
    }
}

/// Writes per-round rows. The header is fixed by the first row's K.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    k: usize,
    extra: Vec<(String, String)>,
}

impl MetricsWriter {
    /// `extra` columns are prepended to every row with constant values.
    pub fn create(path: &Path, k: usize, extra: &[(&str, String)]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut header = String::new();
        for (name, _) in extra {
            write!(header, "{name},").unwrap();
        }
        header
            .push_str("run,round,strategy,accuracy,shadow_accuracy,test_accuracy,r1,r2,r3,reward");
        for i in 0..k {
            write!(header, ",w_{i}").unwrap();
        }
        for i in 0..k {
            write!(header, ",defect_{i}").unwrap();
        }
        header.push_str(",wall_ms\n");
        out.write_all(header.as_bytes())?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            k,
            extra: extra
                .iter()
                .map(|(a, b)| (a.to_string(), b.clone()))
                .collect(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, r: &RoundRecord) -> Result<()> {
        assert_eq!(r.weights.len(), self.k, "row width differs from header");
        let mut line = String::new();
        for (_, v) in &self.extra {
            write!(line, "{v},").unwrap();
        }
        write!(
            line,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.run,
            r.round,
            r.strategy,
            r.accuracy,
            r.shadow_accuracy,
            r.test_accuracy,
            r.rewards.r1,
            r.rewards.r2,
            r.rewards.r3,
            r.rewards.total
        )
        .unwrap();
        for w in &r.weights {
            write!(line, ",{w:.6}").unwrap();
        }
        for d in &r.defects {
            write!(line, ",{}", u8::from(*d)).unwrap();
        }
        writeln!(line, ",{}", r.wall_ms).unwrap();
        self.out.write_all(line.as_bytes())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

/// One row of the reward-curve file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub ret: f64,
    pub final_accuracy: f64,
    pub final_test_accuracy: f64,
    pub mean_reward: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub critic_loss: f64,
    pub updates: usize,
}

pub fn write_reward_curve(
    path: &Path,
    extra: &[(&str, String)],
    rows: &[EpisodeRecord],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = String::new();
    for (name, _) in extra {
        write!(header, "{name},").unwrap();
    }
    header.push_str(
        "episode,return,final_accuracy,final_test_accuracy,mean_reward,alpha,entropy,critic_loss,updates\n",
    );
    out.write_all(header.as_bytes())?;
    for r in rows {
        let mut line = String::new();
        for (_, v) in extra {
            write!(line, "{v},").unwrap();
        }
        writeln!(
            line,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.episode,
            r.ret,
            r.final_accuracy,
            r.final_test_accuracy,
            r.mean_reward,
            r.alpha,
            r.entropy,
            r.critic_loss,
            r.updates
        )
        .unwrap();
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// SHA-256 over `"blob <len>\0" ++ content`, as git computes object ids
/// (with SHA-256 in place of SHA-1).
pub fn git_blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub blob_sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub version: &'static str,
    pub config: String,
    pub outputs: Vec<ManifestEntry>,
}

/// Writes `manifest.json` into `dir`, hashing every file in `outputs`.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config_toml: &str,
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(outputs.len());
    for p in outputs {
        let bytes = std::fs::read(p)?;
        entries.push(ManifestEntry {
            path: p
                .strip_prefix(dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned(),
            blob_sha256: git_blob_sha256(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = RunManifest {
        command: command.to_string(),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        config: config_toml.to_string(),
        outputs: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}
