//! Binary archives for parameter sets and transition batches.
//!
//! Tensor archive layout (little endian):
//!
//! ```text
//! "SRLT" u32:version u8:width u32:count
//!   count x { u32:name_len name u32:rows u32:cols rows*cols values }
//! ```
//!
//! Transition archives use magic `"SRLB"` and store the five batch columns
//! (`states`, `actions`, `rewards`, `next_states`, `dones`) in the same framing.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, SrlError};
use crate::nets::ParameterSet;
use crate::scalar::Scalar;
use crate::transition::{Batch, Transition};

const TENSOR_MAGIC: &[u8; 4] = b"SRLT";
const BATCH_MAGIC: &[u8; 4] = b"SRLB";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| SrlError::Format("archive truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn encode<T: Scalar>(magic: &[u8; 4], items: &[(&str, &Array2<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    put_u32(&mut out, VERSION);
    out.push(T::WIDTH as u8);
    put_u32(&mut out, items.len() as u32);
    for (name, t) in items {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.nrows() as u32);
        put_u32(&mut out, t.ncols() as u32);
        for &v in t.iter() {
            v.write_le(&mut out);
        }
    }
    out
}

fn decode<T: Scalar>(magic: &[u8; 4], bytes: &[u8]) -> Result<Vec<(String, Array2<T>)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != magic {
        return Err(SrlError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SrlError::Format(format!("unsupported version {version}")));
    }
    let width = r.take(1)?[0] as usize;
    if width != T::WIDTH {
        return Err(SrlError::Format(format!(
            "archive holds {width}-byte values, expected {} ({})",
            T::WIDTH,
            T::DTYPE
        )));
    }
    let count = r.u32()? as usize;
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| SrlError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let raw = r.take(rows * cols * width)?;
        let data: Vec<T> = raw.chunks_exact(width).map(T::read_le).collect();
        items.push((name, Array2::from_shape_vec((rows, cols), data).unwrap()));
    }
    if r.pos != bytes.len() {
        return Err(SrlError::Format("trailing bytes after archive".into()));
    }
    Ok(items)
}

pub fn encode_parameters<T: Scalar>(params: &ParameterSet<T>) -> Vec<u8> {
    let items: Vec<(&str, &Array2<T>)> = params.iter().collect();
    encode(TENSOR_MAGIC, &items)
}

pub fn decode_parameters<T: Scalar>(bytes: &[u8]) -> Result<ParameterSet<T>> {
    let mut params = ParameterSet::new();
    for (name, t) in decode(TENSOR_MAGIC, bytes)? {
        params.push(name, t);
    }
    Ok(params)
}

pub fn save_parameters<T: Scalar>(params: &ParameterSet<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_parameters(params))?;
    Ok(())
}

pub fn load_parameters<T: Scalar>(path: &Path) -> Result<ParameterSet<T>> {
    decode_parameters(&fs::read(path)?)
}

/// Loads `path` and checks it against the layout of `like`.
pub fn load_parameters_like<T: Scalar>(path: &Path, like: &ParameterSet<T>) -> Result<ParameterSet<T>> {
    let loaded = load_parameters(path)?;
    like.check_compatible(&loaded)?;
    Ok(loaded)
}

const BATCH_FIELDS: [&str; 5] = ["states", "actions", "rewards", "next_states", "dones"];

pub fn encode_batch<T: Scalar>(batch: &Batch<T>) -> Vec<u8> {
    let cols = [
        &batch.states,
        &batch.actions,
        &batch.rewards,
        &batch.next_states,
        &batch.dones,
    ];
    let items: Vec<(&str, &Array2<T>)> = BATCH_FIELDS.iter().copied().zip(cols).collect();
    encode(BATCH_MAGIC, &items)
}

pub fn decode_batch<T: Scalar>(bytes: &[u8]) -> Result<Batch<T>> {
    let items = decode(BATCH_MAGIC, bytes)?;
    let names: Vec<&str> = items.iter().map(|(n, _)| n.as_str()).collect();
    if names != BATCH_FIELDS {
        return Err(SrlError::Format(format!("unexpected batch columns {names:?}")));
    }
    let mut it = items.into_iter().map(|(_, t)| t);
    let batch = Batch {
        states: it.next().unwrap(),
        actions: it.next().unwrap(),
        rewards: it.next().unwrap(),
        next_states: it.next().unwrap(),
        dones: it.next().unwrap(),
    };
    let n = batch.states.nrows();
    if [&batch.actions, &batch.rewards, &batch.next_states, &batch.dones]
        .iter()
        .any(|t| t.nrows() != n)
    {
        return Err(SrlError::Format("batch columns disagree on length".into()));
    }
    Ok(batch)
}

pub fn save_transitions<T: Scalar>(transitions: &[Transition<T>], path: &Path) -> Result<()> {
    fs::write(path, encode_batch(&Batch::from_transitions(transitions)))?;
    Ok(())
}

pub fn load_transitions<T: Scalar>(path: &Path) -> Result<Vec<Transition<T>>> {
    Ok(decode_batch(&fs::read(path)?)?.to_transitions())
}
