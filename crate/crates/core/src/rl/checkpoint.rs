//! Checkpoint files: an 8-byte magic, a little-endian u64 header length, a JSON
//! header, then every parameter as a little-endian f64 (policy network,
//! policy log-std, value network).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HeadKind, Mlp, Policy, PpoConfig};

const MAGIC: &[u8; 8] = b"CDASIMCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Serializable ChaCha8 position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, CheckpointError> {
        use rand::SeedableRng;
        if self.seed.len() != 64 {
            return Err(CheckpointError::Malformed("rng seed must be 32 bytes of hex".into()));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|e| CheckpointError::Malformed(format!("rng seed: {e}")))?;
        }
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| CheckpointError::Malformed(format!("rng word_pos: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: Policy,
    pub value: Mlp,
    pub ppo: PpoConfig,
    pub rng: Option<RngState>,
    /// Free-form labels such as agent class and name.
    pub meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    policy_sizes: Vec<usize>,
    head: HeadKind,
    log_std_len: usize,
    value_sizes: Vec<usize>,
    ppo: PpoConfig,
    rng: Option<RngState>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let header = Header {
        version: VERSION,
        policy_sizes: ckpt.policy.net.sizes().to_vec(),
        head: ckpt.policy.head,
        log_std_len: ckpt.policy.log_std.len(),
        value_sizes: ckpt.value.sizes().to_vec(),
        ppo: ckpt.ppo,
        rng: ckpt.rng.clone(),
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in ckpt
        .policy
        .net
        .params()
        .iter()
        .chain(&ckpt.policy.log_std)
        .chain(ckpt.value.params())
    {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Malformed("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.version != VERSION {
        return Err(CheckpointError::Malformed(format!("unsupported version {}", header.version)));
    }
    let mut read_block = |n: usize| -> Result<Vec<f64>, CheckpointError> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let net = read_block(Mlp::param_count_for(&header.policy_sizes))?;
    let log_std = read_block(header.log_std_len)?;
    let value = read_block(Mlp::param_count_for(&header.value_sizes))?;
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(CheckpointError::Malformed("trailing bytes after parameters".into()));
    }
    let bad = |e: super::RlError| CheckpointError::Malformed(e.to_string());
    Ok(Checkpoint {
        policy: Policy {
            net: Mlp::from_params(&header.policy_sizes, net).map_err(bad)?,
            head: header.head,
            log_std,
        },
        value: Mlp::from_params(&header.value_sizes, value).map_err(bad)?,
        ppo: header.ppo,
        rng: header.rng,
        meta: header.meta,
    })
}
