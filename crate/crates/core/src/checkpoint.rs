//! Checkpoint files.
//!
//! Layout, little-endian:
//!
//! | size | field                                     |
//! |------|-------------------------------------------|
//! | 8    | magic `TAFECKPT`                          |
//! | 4    | version (`u32`, currently 1)              |
//! | 8    | manifest length in bytes (`u64`)          |
//! | ...  | JSON manifest                             |
//! | ...  | `f32` blocks in manifest order            |
//!
//! The manifest holds the model config, the name and shape of every block,
//! and the optimizer's scalar state when one is saved. Blocks are the model
//! parameters followed by the optimizer's moment tensors.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TafeNet};
use crate::optim::{Hyper, OptimizerKind, OptimizerState, ParamSpec, Schedule};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TAFECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerManifest {
    pub kind: OptimizerKind,
    pub hyper: Hyper,
    pub schedule: Schedule,
    pub base_lrs: Vec<f64>,
    pub groups: Vec<usize>,
    pub step: u64,
    pub crossed: usize,
    pub last_time: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelConfig,
    /// Last completed epoch, if the checkpoint comes from training.
    pub epoch: Option<u64>,
    pub seed: u64,
    pub blocks: Vec<BlockInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerManifest>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: TafeNet,
    pub optimizer: Option<OptimizerState>,
    pub manifest: Manifest,
}

fn moment_names(specs: &[ParamSpec], count: usize) -> Vec<String> {
    let mut names: Vec<String> = specs.iter().map(|s| format!("optim.first.{}", s.name)).collect();
    if count == 2 {
        names.extend(specs.iter().map(|s| format!("optim.second.{}", s.name)));
    }
    names
}

pub fn checkpoint_bytes(net: &TafeNet, optimizer: Option<&OptimizerState>, epoch: Option<u64>, seed: u64) -> Vec<u8> {
    let mut blocks: Vec<(String, &Tensor)> = net.params().into_iter().map(|(n, _, t)| (n, t)).collect();
    let opt_manifest = optimizer.map(|o| {
        let tensors: Vec<&Tensor> = o.first.iter().chain(&o.second).collect();
        let count = if o.second.is_empty() { 1 } else { 2 };
        blocks.extend(moment_names(&o.specs, count).into_iter().zip(tensors));
        OptimizerManifest {
            kind: o.kind,
            hyper: o.hyper,
            schedule: o.schedule.clone(),
            base_lrs: o.base_lrs.clone(),
            groups: o.specs.iter().map(|s| s.group).collect(),
            step: o.step,
            crossed: o.crossed,
            last_time: o.last_time,
        }
    });
    let manifest = Manifest {
        model: net.config().clone(),
        epoch,
        seed,
        blocks: blocks
            .iter()
            .map(|(n, t)| BlockInfo {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        optimizer: opt_manifest,
    };
    let json = serde_json::to_vec(&manifest).expect("serializable");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).unwrap();
    out.write_u64::<LittleEndian>(json.len() as u64).unwrap();
    out.extend_from_slice(&json);
    for (_, t) in &blocks {
        for &v in t.data() {
            out.write_f32::<LittleEndian>(v as f32).unwrap();
        }
    }
    out
}

/// Writes atomically: the file appears complete or not at all.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    net: &TafeNet,
    optimizer: Option<&OptimizerState>,
    epoch: Option<u64>,
    seed: u64,
) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("partial");
    fs::write(&tmp, checkpoint_bytes(net, optimizer, epoch, seed))
        .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

fn format_err(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Reads only the manifest.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_header(path, &bytes).map(|(m, _)| m)
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(Manifest, u64)> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format_err(path, 0, "not a checkpoint (bad magic or truncated header)"));
    }
    let mut cur = Cursor::new(bytes);
    cur.set_position(8);
    let version = cur.read_u32::<LittleEndian>().unwrap();
    if version != CHECKPOINT_VERSION {
        return Err(format_err(path, 8, format!("unsupported version {version}")));
    }
    let len = cur.read_u64::<LittleEndian>().unwrap();
    let start = cur.position();
    let end = start
        .checked_add(len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| {
            format_err(
                path,
                12,
                format!("manifest of {len} bytes runs past the end of the file"),
            )
        })?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[start as usize..end as usize]).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: format!("checkpoint manifest: {e}"),
        })?;
    Ok((manifest, end))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (manifest, body) = parse_header(path, &bytes)?;
    let values: usize = manifest.blocks.iter().map(|b| b.shape.iter().product::<usize>()).sum();
    let expected = body + 4 * values as u64;
    if bytes.len() as u64 != expected {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!(
                "length mismatch: manifest implies {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    let mut cur = Cursor::new(&bytes[..]);
    cur.set_position(body);
    let mut tensors = Vec::with_capacity(manifest.blocks.len());
    for b in &manifest.blocks {
        let n: usize = b.shape.iter().product();
        let mut data = vec![0f32; n];
        cur.read_f32_into::<LittleEndian>(&mut data).unwrap();
        let t = Tensor::new(&b.shape, data.into_iter().map(f64::from).collect())
            .map_err(|e| format_err(path, cur.position(), format!("block {}: {e}", b.name)))?;
        if !t.is_finite() {
            return Err(format_err(
                path,
                cur.position(),
                format!("block {} holds non-finite values", b.name),
            ));
        }
        tensors.push(t);
    }
    let mut rest = Vec::new();
    cur.read_to_end(&mut rest).unwrap();

    let mut net = TafeNet::zeros(manifest.model.clone())?;
    let names: Vec<(String, Vec<usize>)> = net
        .params()
        .into_iter()
        .map(|(n, _, t)| (n, t.shape().to_vec()))
        .collect();
    if manifest.blocks.len() < names.len() {
        return Err(format_err(path, 20, "fewer blocks than model parameters"));
    }
    for ((name, shape), b) in names.iter().zip(&manifest.blocks) {
        if *name != b.name || *shape != b.shape {
            return Err(format_err(
                path,
                20,
                format!("block {} {:?} where {name} {shape:?} was expected", b.name, b.shape),
            ));
        }
    }
    let mut tensors = tensors.into_iter();
    for p in net.params_mut() {
        *p = tensors.next().expect("counted above");
    }
    let specs: Vec<ParamSpec> = names
        .iter()
        .enumerate()
        .map(|(i, (name, shape))| ParamSpec {
            name: name.clone(),
            group: manifest
                .optimizer
                .as_ref()
                .map_or(0, |o| o.groups.get(i).copied().unwrap_or(0)),
            shape: shape.clone(),
        })
        .collect();
    let optimizer = match &manifest.optimizer {
        None => {
            if tensors.next().is_some() {
                return Err(format_err(path, 20, "extra blocks without optimizer state"));
            }
            None
        }
        Some(o) => {
            let rest: Vec<Tensor> = tensors.collect();
            let count = match o.kind {
                OptimizerKind::Adam => 2,
                OptimizerKind::SgdMomentum => 1,
            };
            if rest.len() != count * specs.len() || o.groups.len() != specs.len() {
                return Err(format_err(path, 20, "optimizer blocks do not match the model"));
            }
            let mut state =
                OptimizerState::new(o.kind, o.hyper, o.schedule.clone(), o.base_lrs.clone(), specs.clone())?;
            let (first, second) = rest.split_at(specs.len());
            state.first = first.to_vec();
            state.second = second.to_vec();
            state.step = o.step;
            state.crossed = o.crossed;
            state.last_time = o.last_time;
            Some(state)
        }
    };
    Ok(Checkpoint {
        net,
        optimizer,
        manifest,
    })
}
