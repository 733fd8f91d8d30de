//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic `HDITCKPT`, `u32` version, `u32` length +
//! UTF-8 `key = value` header, `u32` tensor count, then per tensor `u32`
//! name length + name, `u32` rank, `u64` dims, `f64` values.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::dit::{DitModel, DitParams};
use super::tensors::{TensorMut, Tensors};
use super::train::{Adam, TrainConfig, TrainPhase, Trainer};
use crate::error::{Error, Result};
use crate::kv::KeyValues;

const MAGIC: &[u8; 8] = b"HDITCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(bad("truncated file"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("header is not UTF-8"))
    }
}

fn encode(header: &str, tensors: &[(String, Vec<usize>, &[f64])]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, header.len() as u32);
    out.extend_from_slice(header.as_bytes());
    put_u32(&mut out, tensors.len() as u32);
    for (name, shape, data) in tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, shape.len() as u32);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<(String, HashMap<String, (Vec<usize>, Vec<f64>)>)> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header = r.string()?;
    let count = r.u32()? as usize;
    let mut tensors = HashMap::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r
            .take(len.checked_mul(8).ok_or_else(|| bad("tensor too large"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if tensors.insert(name.clone(), (shape, data)).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
    }
    if !r.buf.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok((header, tensors))
}

fn fill(targets: Vec<TensorMut<'_>>, prefix: &str, stored: &mut HashMap<String, (Vec<usize>, Vec<f64>)>) -> Result<()> {
    for t in targets {
        let key = format!("{prefix}{}", t.name);
        let (shape, data) = stored.remove(&key).ok_or_else(|| bad(format!("missing tensor {key}")))?;
        if shape != t.shape {
            return Err(bad(format!("{key} has shape {shape:?}, config implies {:?}", t.shape)));
        }
        t.data.copy_from_slice(&data);
    }
    Ok(())
}

fn collect<'a>(params: &'a DitParams, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
    for t in params.tensors() {
        out.push((format!("{prefix}{}", t.name), t.shape, t.data));
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path)?.write_all(bytes)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

pub fn model_to_bytes(model: &DitModel) -> Vec<u8> {
    let mut tensors = Vec::new();
    collect(&model.params, "", &mut tensors);
    encode(&model.config.to_kv_text(), &tensors)
}

fn train_header(t: &Trainer) -> String {
    let mut s = t.model.config.to_kv_text();
    let _ = writeln!(s, "phase = {}", t.phase);
    let _ = writeln!(s, "train_step = {}", t.step);
    let _ = writeln!(s, "lr = {:?}", t.config.lr);
    let _ = writeln!(s, "batch_size = {}", t.config.batch_size);
    let _ = writeln!(s, "grad_accum = {}", t.config.grad_accum);
    let _ = writeln!(s, "train_seed = {}", t.config.seed);
    let _ = writeln!(s, "adam_t = {}", t.adam.t);
    s
}

pub fn trainer_to_bytes(t: &Trainer) -> Vec<u8> {
    let mut tensors = Vec::new();
    collect(&t.model.params, "", &mut tensors);
    collect(&t.adam.m, "adam.m.", &mut tensors);
    collect(&t.adam.v, "adam.v.", &mut tensors);
    encode(&train_header(t), &tensors)
}

fn need<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| bad(format!("missing header key {key}")))
}

struct Parsed {
    config: ModelConfig,
    train: Option<(TrainPhase, u64, TrainConfig, u64)>,
    tensors: HashMap<String, (Vec<usize>, Vec<f64>)>,
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    let (header, tensors) = decode(bytes)?;
    let mut kv = KeyValues::parse(&header)?;
    let mut config = ModelConfig::default();
    config.apply_kv(&mut kv)?;
    config.validate()?;
    let train = match kv.take::<TrainPhase>("phase")? {
        None => None,
        Some(phase) => {
            let step = need(kv.take("train_step")?, "train_step")?;
            let cfg = TrainConfig {
                lr: need(kv.take("lr")?, "lr")?,
                batch_size: need(kv.take("batch_size")?, "batch_size")?,
                grad_accum: need(kv.take("grad_accum")?, "grad_accum")?,
                seed: need(kv.take("train_seed")?, "train_seed")?,
            };
            let adam_t = need(kv.take("adam_t")?, "adam_t")?;
            Some((phase, step, cfg, adam_t))
        }
    };
    kv.finish()?;
    Ok(Parsed { config, train, tensors })
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<DitModel> {
    let mut p = parse(bytes)?;
    let mut params = DitParams::zeros(&p.config);
    fill(params.tensors_mut(), "", &mut p.tensors)?;
    Ok(DitModel { config: p.config, params })
}

pub fn trainer_from_bytes(bytes: &[u8]) -> Result<Trainer> {
    let mut p = parse(bytes)?;
    let (phase, step, cfg, adam_t) = p.train.ok_or_else(|| bad("checkpoint has no optimiser state"))?;
    let mut params = DitParams::zeros(&p.config);
    fill(params.tensors_mut(), "", &mut p.tensors)?;
    let model = DitModel { config: p.config, params };
    let mut adam = Adam::new(&model, cfg.lr);
    adam.t = adam_t;
    fill(adam.m.tensors_mut(), "adam.m.", &mut p.tensors)?;
    fill(adam.v.tensors_mut(), "adam.v.", &mut p.tensors)?;
    let mut t = Trainer::new(model, phase, cfg)?;
    t.adam = adam;
    t.step = step;
    Ok(t)
}

pub fn save_model(path: impl AsRef<Path>, model: &DitModel) -> Result<()> {
    write_file(path.as_ref(), &model_to_bytes(model))
}

/// Loads the model from a model or trainer checkpoint.
pub fn load_model(path: impl AsRef<Path>) -> Result<DitModel> {
    model_from_bytes(&read_file(path.as_ref())?)
}

pub fn save_trainer(path: impl AsRef<Path>, trainer: &Trainer) -> Result<()> {
    write_file(path.as_ref(), &trainer_to_bytes(trainer))
}

pub fn load_trainer(path: impl AsRef<Path>) -> Result<Trainer> {
    trainer_from_bytes(&read_file(path.as_ref())?)
}
