//! Little-endian binary checkpoint.
//!
//! Layout: magic `SHNCKPT1`, version `u32`, variant `u8`, then `r`, `N_h`,
//! `d_k`, `d_v` as `u32`. A `u32` record count follows, each record being
//! name length `u32`, UTF-8 name, rank `u32`, dims `u32 x rank` and the
//! scalars as `f32`. The file ends with the freeze table: a `u32` count and
//! `(name length, name, u8 flag)` entries.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::numcore::{Prng, Scalar, Tensor};

use super::network::{AttentionVariant, Hyperparams, NetworkModel};

pub const MAGIC: &[u8; 8] = b"SHNCKPT1";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Size(format!("{v} does not fit a u32 field")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_name(buf: &mut Vec<u8>, name: &str) -> Result<()> {
    put_u32(buf, name.len())?;
    buf.extend_from_slice(name.as_bytes());
    Ok(())
}

/// Serializes the model to bytes.
pub fn encode_checkpoint<T: Scalar>(model: &NetworkModel<T>) -> Result<Vec<u8>> {
    let hp = model.hyperparams();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(model.variant().code());
    for v in [hp.se_ratio, hp.heads, hp.key_depth, hp.value_depth] {
        put_u32(&mut buf, v)?;
    }
    let params = model.parameters();
    put_u32(&mut buf, params.len())?;
    for (name, t) in &params {
        put_name(&mut buf, name)?;
        put_u32(&mut buf, t.rank())?;
        for &d in t.shape() {
            put_u32(&mut buf, d)?;
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    put_u32(&mut buf, params.len())?;
    for ((name, _), &frozen) in params.iter().zip(model.frozen_flags()) {
        put_name(&mut buf, name)?;
        buf.push(u8::from(frozen));
    }
    Ok(buf)
}

pub fn save_checkpoint<T: Scalar>(model: &NetworkModel<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u32("name length")?;
        let raw = self.take(len, "name")?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format("checkpoint name is not UTF-8".into()))
    }
}

/// Parses a checkpoint; nothing is returned unless the whole file validates.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<NetworkModel<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let code = r.u8("variant")?;
    let variant = AttentionVariant::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown variant tag {code}")))?;
    let hyper = Hyperparams {
        se_ratio: r.u32("r")?,
        heads: r.u32("N_h")?,
        key_depth: r.u32("d_k")?,
        value_depth: r.u32("d_v")?,
    };
    let mut model = NetworkModel::<T>::build(variant, hyper, &mut Prng::new(0))
        .map_err(|e| Error::Integrity(format!("checkpoint hyperparameters invalid: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .parameters()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();

    let count = r.u32("record count")?;
    if count != expected.len() {
        return Err(Error::Integrity(format!(
            "checkpoint has {count} tensors, the {variant} network has {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in &expected {
        let name = r.name()?;
        let rank = r.u32("rank")?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dimension")?);
        }
        if &name != want_name || &shape != want_shape {
            return Err(Error::Integrity(format!(
                "record {name} {shape:?} does not match expected {want_name} {want_shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        let raw = r.take(len * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        tensors.push(Tensor::new(&shape, data)?);
    }

    let flags_count = r.u32("freeze table count")?;
    if flags_count != expected.len() {
        return Err(Error::Integrity(format!(
            "freeze table has {flags_count} entries for {} parameters",
            expected.len()
        )));
    }
    let mut flags = Vec::with_capacity(flags_count);
    for (want_name, _) in &expected {
        let name = r.name()?;
        if &name != want_name {
            return Err(Error::Integrity(format!("freeze entry {name} where {want_name} expected")));
        }
        flags.push(match r.u8("freeze flag")? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("freeze flag {other} for {name}"))),
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }

    for (dst, src) in model.parameters_mut().into_iter().zip(tensors) {
        *dst = src;
    }
    model.set_frozen_flags(flags)?;
    Ok(model)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<NetworkModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
