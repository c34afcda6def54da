//! Binary checkpoint format.
//!
//! ```text
//! "DPNC" | u32 version | section* 3 | u32 crc32(all preceding bytes)
//! section = u32 count, tensor*
//! tensor  = u32 name_len, name (utf-8), u32 rank, u64 dims[rank], u8 dtype, data (LE)
//! ```
//!
//! Section 1 holds a zero-element `@spec <model spec>` tensor followed by
//! every parameter and buffer. Section 2 holds optimizer memory
//! (`sgd.velocity/<p>`, or `adam.m/<p>`, `adam.v/<p>` and `adam.step`).
//! Section 3 holds `rng.chacha` and `meta.epoch`. All integers are
//! little-endian.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{OptimizerState, TrainState};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec};
use crate::tensor::{DType, Scalar, Tensor};

const MAGIC: &[u8; 4] = b"DPNC";
pub const CHECKPOINT_VERSION: u32 = 1;
const SPEC_PREFIX: &str = "@spec ";

struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn header(&mut self, name: &str, dtype: DType, shape: &[usize]) {
        self.u32(name.len() as u32);
        self.0.extend_from_slice(name.as_bytes());
        self.u32(shape.len() as u32);
        for &d in shape {
            self.0.extend_from_slice(&(d as u64).to_le_bytes());
        }
        self.0.push(dtype as u8);
    }

    fn tensor<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) {
        self.header(name, T::DTYPE, t.shape());
        for v in t.data() {
            match T::DTYPE {
                DType::F32 => self.0.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                DType::F64 => self.0.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
    }

    fn f64s(&mut self, name: &str, values: &[f64]) {
        self.header(name, DType::F64, &[values.len()]);
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn entry(&mut self) -> Result<Entry> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?
            .to_string();
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("{name}: rank {rank} is implausible")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint(format!("{name}: dimension overflow")))?);
        }
        let code = self.take(1)?[0];
        let dtype = DType::from_code(code).ok_or_else(|| Error::Checkpoint(format!("{name}: unknown dtype {code}")))?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = n.and_then(|n| n.checked_mul(dtype.size()));
        let bytes = bytes.ok_or_else(|| Error::Checkpoint(format!("{name}: size overflow")))?;
        let raw = self.take(bytes)?;
        let values = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4")))).collect(),
            DType::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect(),
        };
        Ok(Entry { name, shape, values })
    }

    fn section(&mut self) -> Result<Vec<Entry>> {
        let count = self.u32()? as usize;
        (0..count).map(|_| self.entry()).collect()
    }
}

impl Entry {
    /// Values as `T`; exact whenever the stored dtype matches `T`.
    fn tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::new(self.shape.clone(), self.values.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }
}

fn u128_limbs(v: u128, limbs: usize) -> impl Iterator<Item = f64> {
    (0..limbs).map(move |i| ((v >> (16 * i)) & 0xffff) as f64)
}

fn from_limbs(values: &[f64]) -> Result<u128> {
    let mut v = 0u128;
    for (i, &l) in values.iter().enumerate() {
        if !(0.0..65536.0).contains(&l) || l.fract() != 0.0 {
            return Err(Error::Checkpoint("rng.chacha holds an invalid limb".into()));
        }
        v |= (l as u128) << (16 * i);
    }
    Ok(v)
}

fn encode_rng(rng: &ChaCha8Rng) -> Vec<f64> {
    let mut out: Vec<f64> = rng.get_seed().iter().map(|&b| f64::from(b)).collect();
    out.extend(u128_limbs(u128::from(rng.get_stream()), 4));
    out.extend(u128_limbs(rng.get_word_pos(), 8));
    out
}

fn decode_rng(values: &[f64]) -> Result<ChaCha8Rng> {
    if values.len() != 44 {
        return Err(Error::Checkpoint(format!("rng.chacha has {} values, expected 44", values.len())));
    }
    let mut seed = [0u8; 32];
    for (s, &v) in seed.iter_mut().zip(&values[..32]) {
        if !(0.0..256.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::Checkpoint("rng.chacha seed byte out of range".into()));
        }
        *s = v as u8;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(from_limbs(&values[32..36])? as u64);
    rng.set_word_pos(from_limbs(&values[36..44])?);
    Ok(rng)
}

/// Serializes a model and, optionally, its training state.
pub fn encode_checkpoint<T: Scalar>(model: &Model<T>, state: Option<&TrainState<T>>) -> Vec<u8> {
    let params = model.params();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(CHECKPOINT_VERSION);

    let entries = params.params().count() + params.buffers().count();
    w.u32(entries as u32 + 1);
    w.header(&format!("{SPEC_PREFIX}{}", model.spec()), DType::F64, &[0]);
    for (name, t) in params.params().chain(params.buffers()) {
        w.tensor(name, t);
    }

    let names: Vec<&str> = params.params().map(|(n, _)| n).collect();
    match state.map(|s| &s.optimizer) {
        None => w.u32(0),
        Some(OptimizerState::Sgd { velocity }) => {
            w.u32(velocity.len() as u32);
            for (n, v) in names.iter().zip(velocity) {
                w.tensor(&format!("sgd.velocity/{n}"), v);
            }
        }
        Some(OptimizerState::Adam { m, v, step }) => {
            w.u32(2 * m.len() as u32 + 1);
            for (n, t) in names.iter().zip(m) {
                w.tensor(&format!("adam.m/{n}"), t);
            }
            for (n, t) in names.iter().zip(v) {
                w.tensor(&format!("adam.v/{n}"), t);
            }
            w.f64s("adam.step", &[*step as f64]);
        }
    }

    match state {
        None => w.u32(0),
        Some(s) => {
            w.u32(2);
            w.f64s("rng.chacha", &encode_rng(&s.rng));
            w.f64s("meta.epoch", &[s.epoch as f64]);
        }
    }

    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

fn named<'a>(section: &'a [Entry], what: &str) -> Result<HashMap<&'a str, &'a Entry>> {
    let mut map = HashMap::new();
    for e in section {
        if map.insert(e.name.as_str(), e).is_some() {
            return Err(Error::Checkpoint(format!("duplicate {what} tensor {}", e.name)));
        }
    }
    Ok(map)
}

fn scalar_count(e: &Entry) -> Result<u64> {
    match e.values.as_slice() {
        [v] if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as u64),
        _ => Err(Error::Checkpoint(format!("{} must hold one non-negative integer", e.name))),
    }
}

/// Parses and validates checkpoint bytes.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Model<T>, Option<TrainState<T>>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a DPNC checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("CRC mismatch; the file is corrupt or truncated".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let model_section = r.section()?;
    let optim_section = r.section()?;
    let meta_section = r.section()?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let (spec_entry, tensors) =
        model_section.split_first().ok_or_else(|| Error::Checkpoint("empty model section".into()))?;
    let spec_text = spec_entry
        .name
        .strip_prefix(SPEC_PREFIX)
        .ok_or_else(|| Error::Checkpoint("model section does not start with a spec".into()))?;
    let spec: ModelSpec = spec_text.parse().map_err(|e: Error| Error::Checkpoint(format!("model spec: {e}")))?;
    let mut model = Model::<T>::build(&spec, 0)?;
    let expected = model.params().params().count() + model.params().buffers().count();
    let tensors_by_name = named(tensors, "model")?;
    if tensors_by_name.len() != expected {
        return Err(Error::Checkpoint(format!("{} model tensors, the spec needs {expected}", tensors.len())));
    }
    for e in tensors {
        model.params_mut().set_named(&e.name, e.tensor()?)?;
    }

    if meta_section.is_empty() {
        if !optim_section.is_empty() {
            return Err(Error::Checkpoint("optimizer state without rng and epoch".into()));
        }
        return Ok((model, None));
    }
    let meta = named(&meta_section, "meta")?;
    let rng = decode_rng(&meta.get("rng.chacha").ok_or_else(|| Error::Checkpoint("missing rng.chacha".into()))?.values)?;
    let epoch = scalar_count(meta.get("meta.epoch").ok_or_else(|| Error::Checkpoint("missing meta.epoch".into()))?)?;

    let optim = named(&optim_section, "optimizer")?;
    let names: Vec<String> = model.params().params().map(|(n, _)| n.to_string()).collect();
    let shapes: Vec<Vec<usize>> = model.params().params().map(|(_, t)| t.shape().to_vec()).collect();
    let fetch = |prefix: &str| -> Result<Vec<Tensor<T>>> {
        names
            .iter()
            .zip(&shapes)
            .map(|(n, shape)| {
                let key = format!("{prefix}/{n}");
                let e = optim.get(key.as_str()).ok_or_else(|| Error::Checkpoint(format!("missing {key}")))?;
                if &e.shape != shape {
                    return Err(Error::Checkpoint(format!("{key} has shape {:?}, expected {shape:?}", e.shape)));
                }
                e.tensor()
            })
            .collect()
    };
    let optimizer = if optim.contains_key("adam.step") {
        if optim.len() != 2 * names.len() + 1 {
            return Err(Error::Checkpoint("unexpected tensors in the adam section".into()));
        }
        OptimizerState::Adam { m: fetch("adam.m")?, v: fetch("adam.v")?, step: scalar_count(optim["adam.step"])? }
    } else {
        if optim.len() != names.len() {
            return Err(Error::Checkpoint("optimizer section matches neither sgd nor adam".into()));
        }
        OptimizerState::Sgd { velocity: fetch("sgd.velocity")? }
    };
    Ok((model, Some(TrainState { optimizer, rng, epoch: epoch as usize })))
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &Model<T>, state: Option<&TrainState<T>>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model, state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(Model<T>, Option<TrainState<T>>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
