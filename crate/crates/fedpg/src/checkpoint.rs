//! Versioned binary checkpoints: little-endian fixed layout, bit-exact
//! round-trips.

use crate::error::{Error, Result};
use crate::federated::{PartitionState, Trainer};
use crate::policy::{flatten, unflatten, PolicyParams, PolicySpec};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FPGC";
const VERSION: u32 = 1;
/// Sanity bound on any stored count; rejects corrupt headers before
/// allocation.
const MAX_COUNT: u64 = 1 << 32;

/// Everything needed to resume or evaluate a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub epoch: u64,
    pub traces_consumed: u64,
    pub spec: PolicySpec,
    pub global: Vec<f64>,
    pub nodes: Vec<(PartitionState, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer) -> Self {
        Self {
            seed: trainer.seed,
            epoch: trainer.master.epoch as u64,
            traces_consumed: trainer.master.traces_consumed,
            spec: trainer.policy.clone(),
            global: flatten(&trainer.master.global),
            nodes: trainer
                .nodes
                .iter()
                .map(|n| (n.partition, flatten(&n.local_params)))
                .collect(),
        }
    }

    pub fn global_params(&self) -> Result<PolicyParams> {
        unflatten(&self.global, &self.spec)
    }

    pub fn node_params(&self, node: usize) -> Result<PolicyParams> {
        let (_, flat) = self
            .nodes
            .get(node)
            .ok_or_else(|| Error::Checkpoint(format!("node index {node} out of range")))?;
        unflatten(flat, &self.spec)
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn count(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_COUNT {
            return Err(Error::Checkpoint(format!("implausible count {n}")));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn encode(cp: &Checkpoint) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.buf.extend_from_slice(&VERSION.to_le_bytes());
    w.u64(cp.seed);
    w.u64(cp.epoch);
    w.u64(cp.traces_consumed);
    w.u64(cp.spec.state_dim as u64);
    w.u64(cp.spec.ris_elements as u64);
    w.u64(cp.spec.phase_levels as u64);
    w.f64(cp.spec.a_scale);
    w.u64(cp.spec.hidden.len() as u64);
    for &h in &cp.spec.hidden {
        w.u64(h as u64);
    }
    w.f64s(&cp.global);
    w.u64(cp.nodes.len() as u64);
    for (partition, params) in &cp.nodes {
        w.u64(partition.e0 as u64);
        w.i64(partition.delta_e as i64);
        w.f64s(params);
    }
    w.buf
}

pub fn decode(data: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, this build reads {VERSION}"
        )));
    }
    let seed = r.u64()?;
    let epoch = r.u64()?;
    let traces_consumed = r.u64()?;
    let state_dim = r.count()?;
    let ris_elements = r.count()?;
    let phase_levels = r.count()?;
    let a_scale = r.f64()?;
    let hidden_len = r.count()?;
    let hidden = (0..hidden_len)
        .map(|_| r.count())
        .collect::<Result<Vec<_>>>()?;
    let spec = PolicySpec {
        state_dim,
        hidden,
        ris_elements,
        phase_levels,
        a_scale,
    };
    let global = r.f64s()?;
    if global.len() != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "global parameter count {} does not match architecture ({})",
            global.len(),
            spec.param_count()
        )));
    }
    let node_count = r.count()?;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let e0 = r.count()?;
        let delta_e = r.i64()?;
        if !(-1..=1).contains(&delta_e) {
            return Err(Error::Checkpoint(format!("delta_e {delta_e} out of range")));
        }
        let params = r.f64s()?;
        if params.len() != spec.param_count() {
            return Err(Error::Checkpoint("node parameter count mismatch".into()));
        }
        nodes.push((
            PartitionState {
                e0,
                delta_e: delta_e as i32,
            },
            params,
        ));
    }
    if r.pos != data.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        seed,
        epoch,
        traces_consumed,
        spec,
        global,
        nodes,
    })
}

pub fn save(path: &Path, cp: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(cp))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let data = std::fs::read(path)?;
    decode(&data)
}
