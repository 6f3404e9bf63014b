//! Checkpoint serialization: a parameter store plus the spec that produced it,
//! the seed, and run provenance, in one self-verifying binary file.
//!
//! Layout (all integers little endian):
//!   magic `RLCKPT1\n`
//!   u32 meta length, then meta JSON (spec, fingerprint, seed, provenance)
//!   u32 parameter count, then per parameter in store (key) order:
//!     u16 name length + name bytes, u8 trainable, u8 rank,
//!     u32 dims[rank], f32 data
//!   32-byte SHA-256 over everything above.
//!
//! The same bytes in produce the same bytes out; file equality is the
//! reproducibility check.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Network};
use crate::error::{Error, Result};
use crate::nn::ParameterStore;
use crate::util;

const MAGIC: &[u8; 8] = b"RLCKPT1\n";

/// Where a checkpoint came from: framework, architecture, cluster count,
/// dataset name, epoch, and the hash of the pipeline config that ran it.
/// All fields optional so partial artifacts (e.g. a bare pretrain) stay honest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub framework: Option<String>,
    pub architecture: Option<String>,
    pub k: Option<u32>,
    pub dataset: Option<String>,
    pub epoch: Option<u32>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub seed: u64,
    pub provenance: Provenance,
    pub store: ParameterStore<f32>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    spec: ModelSpec,
    spec_fingerprint: String,
    seed: u64,
    provenance: Provenance,
}

/// SHA-256 of the spec's canonical JSON form. Two checkpoints with equal
/// fingerprints were produced by byte-identical specs.
pub fn spec_fingerprint(spec: &ModelSpec) -> String {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    util::sha256_hex(&json)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    let meta = Meta {
        spec: ckpt.spec.clone(),
        spec_fingerprint: spec_fingerprint(&ckpt.spec),
        seed: ckpt.seed,
        provenance: ckpt.provenance.clone(),
    };
    let meta_json = serde_json::to_vec(&meta).map_err(|e| Error::Serde(e.to_string()))?;
    buf.write_u32::<LE>(meta_json.len() as u32).unwrap();
    buf.extend_from_slice(&meta_json);

    buf.write_u32::<LE>(ckpt.store.len() as u32).unwrap();
    for (name, p) in ckpt.store.iter() {
        buf.write_u16::<LE>(name.len() as u16).unwrap();
        buf.extend_from_slice(name.as_bytes());
        buf.push(p.trainable as u8);
        buf.push(p.data.ndim() as u8);
        for d in p.data.shape() {
            buf.write_u32::<LE>(*d as u32).unwrap();
        }
        for v in p.data.iter() {
            buf.write_f32::<LE>(*v).unwrap();
        }
    }
    let digest = util::sha256(&buf);
    buf.extend_from_slice(&digest);

    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |detail: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if bytes.len() < MAGIC.len() + 32 {
        return Err(fail("file too short"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if util::sha256(body) != *trailer {
        return Err(fail("checksum mismatch, file corrupt"));
    }
    if &body[..MAGIC.len()] != MAGIC {
        return Err(fail("bad magic"));
    }

    let mut cur = Cursor::new(&body[MAGIC.len()..]);
    let meta_len = cur.read_u32::<LE>().map_err(|_| fail("truncated meta"))? as usize;
    let mut meta_json = vec![0u8; meta_len];
    cur.read_exact(&mut meta_json)
        .map_err(|_| fail("truncated meta"))?;
    let meta: Meta =
        serde_json::from_slice(&meta_json).map_err(|e| fail(&format!("bad meta: {e}")))?;
    if meta.spec_fingerprint != spec_fingerprint(&meta.spec) {
        return Err(fail("spec fingerprint does not match spec"));
    }

    let count = cur.read_u32::<LE>().map_err(|_| fail("truncated count"))? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = cur.read_u16::<LE>().map_err(|_| fail("truncated name"))? as usize;
        let mut name = vec![0u8; name_len];
        cur.read_exact(&mut name).map_err(|_| fail("truncated name"))?;
        let name = String::from_utf8(name).map_err(|_| fail("name not utf-8"))?;
        let trainable = cur.read_u8().map_err(|_| fail("truncated flags"))? != 0;
        let rank = cur.read_u8().map_err(|_| fail("truncated rank"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.read_u32::<LE>().map_err(|_| fail("truncated shape"))? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0f32; n];
        for v in data.iter_mut() {
            *v = cur.read_f32::<LE>().map_err(|_| fail("truncated data"))?;
        }
        let arr = ArrayD::from_shape_vec(shape, data).map_err(|_| fail("bad tensor shape"))?;
        store.insert(name, arr, trainable);
    }

    Ok(Checkpoint {
        spec: meta.spec,
        seed: meta.seed,
        provenance: meta.provenance,
        store,
    })
}

impl Checkpoint {
    /// Rebuild a runnable network. The graph comes from the spec; the loaded
    /// tensors must cover exactly the keys the graph expects.
    pub fn into_network(self) -> Result<Network<f32>> {
        let net = Network::build(self.spec.clone(), self.seed)?;
        let expect: Vec<&String> = net.store.keys().collect();
        let have: Vec<&String> = self.store.keys().collect();
        if expect != have {
            let missing = expect.iter().find(|k| !self.store.contains(k));
            let extra = have.iter().find(|k| !net.store.contains(k));
            return Err(Error::Model(format!(
                "checkpoint does not match spec: missing {:?}, unexpected {:?}",
                missing, extra
            )));
        }
        let mut net = net;
        net.store = self.store;
        Ok(net)
    }
}
