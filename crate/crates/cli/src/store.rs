//! On-disk chains: a JSON manifest, append-only binary sample records, and a
//! resumable checkpoint.
//!
//! Each record in `samples.bin` is a `u32` payload length followed by the
//! fields listed in the manifest's `record_fields`, little-endian. Latents and
//! global parameters vary in shape between models and are stored as a
//! length-prefixed JSON document whose floats round-trip exactly.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use netglm_core::gibbs::{Checkpoint, GammaPrior};
use netglm_core::{Basis, Chain, ChainSample, NetworkState, ObsKind, PriorSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const STORE_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const SAMPLES: &str = "samples.bin";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const PROGRESS: &str = "progress.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordField {
    pub name: String,
    /// Element type: `u64`, `f64`, `u8`, `u32`, or `json`.
    pub kind: String,
    /// Element count in terms of `N` and `K`.
    pub count: String,
}

fn record_fields() -> Vec<RecordField> {
    let f = |name: &str, kind: &str, count: &str| RecordField { name: name.into(), kind: kind.into(), count: count.into() };
    vec![
        f("iteration", "u64", "1"),
        f("log_prob", "f64", "1"),
        f("adjacency", "u8", "N*N"),
        f("weights", "f64", "N*N*K"),
        f("bias", "f64", "N"),
        f("nu", "f64", "N"),
        f("latents_len", "u32", "1"),
        f("latents", "json", "latents_len bytes"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Flat configuration the chain was fitted with.
    pub config: String,
    pub seed: u64,
    pub model: String,
    pub obs_kind: ObsKind,
    pub nu_prior: GammaPrior,
    pub basis: Basis,
    pub neurons: usize,
    pub k: usize,
    pub bins: usize,
    /// SHA-256 of the fitted spike counts (binary encoding).
    pub data_sha256: String,
    /// Original dataset indices of the fitted neurons.
    pub neuron_ids: Vec<usize>,
    /// Sweeps completed as of the last checkpoint.
    pub iterations_completed: u64,
    pub record_fields: Vec<RecordField>,
}

impl Manifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: String,
        seed: u64,
        model: String,
        obs_kind: ObsKind,
        nu_prior: GammaPrior,
        basis: Basis,
        neurons: usize,
        bins: usize,
        data_sha256: String,
        neuron_ids: Vec<usize>,
    ) -> Self {
        let k = basis.k();
        Self {
            format_version: STORE_VERSION,
            config,
            seed,
            model,
            obs_kind,
            nu_prior,
            basis,
            neurons,
            k,
            bins,
            data_sha256,
            neuron_ids,
            iterations_completed: 0,
            record_fields: record_fields(),
        }
    }
}

pub fn encode_record(s: &ChainSample) -> CliResult<Vec<u8>> {
    let latents = serde_json::to_vec(&s.spec).map_err(|e| CliError::Data(format!("encoding latents: {e}")))?;
    let mut p = Vec::new();
    p.extend_from_slice(&s.iteration.to_le_bytes());
    p.extend_from_slice(&s.log_prob.to_le_bytes());
    p.extend(s.net.adjacency().iter().map(|&a| u8::from(a)));
    for v in s.net.weights().iter().chain(&s.net.bias).chain(&s.nu) {
        p.extend_from_slice(&v.to_le_bytes());
    }
    p.extend_from_slice(&(latents.len() as u32).to_le_bytes());
    p.extend_from_slice(&latents);
    let mut out = Vec::with_capacity(4 + p.len());
    out.extend_from_slice(&(p.len() as u32).to_le_bytes());
    out.extend_from_slice(&p);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("record is truncated")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        Ok(self.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Decode every complete record in `bytes`. A trailing partial record (an
/// interrupted append) is ignored; the returned length is the byte offset
/// where the complete records end.
pub fn decode_records(bytes: &[u8], neurons: usize, k: usize) -> Result<(Vec<ChainSample>, usize), String> {
    let mut out = Vec::new();
    let mut r = Reader { buf: bytes, pos: 0 };
    loop {
        let start = r.pos;
        if bytes.len() - start < 4 {
            return Ok((out, start));
        }
        let len = r.u32()? as usize;
        if bytes.len() - r.pos < len {
            return Ok((out, start));
        }
        let mut p = Reader { buf: r.take(len)?, pos: 0 };
        let iteration = p.u64()?;
        let log_prob = f64::from_le_bytes(p.take(8)?.try_into().unwrap());
        let adjacency: Vec<bool> = p.take(neurons * neurons)?.iter().map(|&b| b != 0).collect();
        let weights = p.f64s(neurons * neurons * k)?;
        let bias = p.f64s(neurons)?;
        let nu = p.f64s(neurons)?;
        let jl = p.u32()? as usize;
        let spec: PriorSpec =
            serde_json::from_slice(p.take(jl)?).map_err(|e| format!("record at byte {start}: latents: {e}"))?;
        if p.pos != len {
            return Err(format!("record at byte {start} has {} unread bytes", len - p.pos));
        }
        let net = NetworkState::from_parts(neurons, k, adjacency, weights, bias).map_err(|e| e.to_string())?;
        out.push(ChainSample { iteration, net, spec, nu, log_prob });
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

/// A chain directory.
#[derive(Debug)]
pub struct ChainStore {
    dir: PathBuf,
    manifest: Manifest,
}

impl ChainStore {
    /// Start a new chain in `dir`, replacing any previous samples there.
    pub fn create(dir: &Path, manifest: Manifest) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let store = Self { dir: dir.to_path_buf(), manifest };
        store.write_manifest()?;
        let samples = store.path(SAMPLES);
        std::fs::write(&samples, []).map_err(|e| CliError::io(&samples, e))?;
        let progress = store.path(PROGRESS);
        std::fs::write(&progress, []).map_err(|e| CliError::io(&progress, e))?;
        let cp = store.path(CHECKPOINT);
        if cp.exists() {
            std::fs::remove_file(&cp).map_err(|e| CliError::io(&cp, e))?;
        }
        Ok(store)
    }

    pub fn open(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if manifest.format_version != STORE_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported chain format {}",
                path.display(),
                manifest.format_version
            )));
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_manifest(&self) -> CliResult<()> {
        write_atomic(&self.path(MANIFEST), &to_json(&self.manifest))
    }

    pub fn append(&mut self, sample: &ChainSample) -> CliResult<()> {
        let path = self.path(SAMPLES);
        let mut f = OpenOptions::new().append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
        f.write_all(&encode_record(sample)?).map_err(|e| CliError::io(&path, e))
    }

    pub fn samples(&self) -> CliResult<Vec<ChainSample>> {
        let path = self.path(SAMPLES);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let (samples, _) = decode_records(&bytes, self.manifest.neurons, self.manifest.k)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(samples)
    }

    pub fn load_chain(&self) -> CliResult<Chain> {
        let m = &self.manifest;
        let mut chain = Chain::new(m.obs_kind, m.nu_prior, m.basis.clone());
        chain.samples = self.samples()?;
        Ok(chain)
    }

    pub fn write_checkpoint(&mut self, cp: &Checkpoint) -> CliResult<()> {
        write_atomic(&self.path(CHECKPOINT), &to_json(cp))?;
        self.manifest.iterations_completed = cp.iteration;
        self.write_manifest()
    }

    pub fn read_checkpoint(&self) -> CliResult<Checkpoint> {
        let path = self.path(CHECKPOINT);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Drop records after `iteration` (written after the last checkpoint) and
    /// any partial trailing record.
    pub fn truncate_after(&self, iteration: u64) -> CliResult<()> {
        let path = self.path(SAMPLES);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let (samples, _) = decode_records(&bytes, self.manifest.neurons, self.manifest.k)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut keep = Vec::new();
        for s in samples.iter().filter(|s| s.iteration <= iteration) {
            keep.extend(encode_record(s)?);
        }
        write_atomic(&path, &keep)
    }

    /// Rewrite the progress log so it holds only lines up to `iteration`.
    pub fn truncate_progress(&self, iteration: u64) -> CliResult<()> {
        let path = self.path(PROGRESS);
        let Ok(text) = std::fs::read_to_string(&path) else {
            return Ok(());
        };
        let kept: String = text
            .lines()
            .filter(|l| {
                l.strip_prefix("iter=")
                    .and_then(|r| r.split_whitespace().next())
                    .and_then(|v| v.parse::<u64>().ok())
                    .is_some_and(|i| i <= iteration)
            })
            .map(|l| format!("{l}\n"))
            .collect();
        write_atomic(&path, kept.as_bytes())
    }

    pub fn append_progress(&self, line: &str) -> CliResult<()> {
        let path = self.path(PROGRESS);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| CliError::io(&path, e))
    }
}
