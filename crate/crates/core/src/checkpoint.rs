//! Checkpoint file: network parameters and optimizer state.
//!
//! Layout (little-endian): magic `b"HLCK"`, version `u16`, width count `u32`,
//! widths `u32 x n`, dropout `f64`, seed `u64`, lr / momentum / weight decay
//! `f64`, then per layer the weight matrix (row-major) and bias as `f64`,
//! then the velocities in the same order, then a CRC32 of everything before
//! it.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::io;
use crate::net::{LayerSpec, OptimizerState, RankingNet};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HLCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(net: &RankingNet, state: &OptimizerState) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 16 * net.param_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let spec = net.spec();
    out.extend_from_slice(&(spec.widths().len() as u32).to_le_bytes());
    for &w in spec.widths() {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&spec.dropout().to_le_bytes());
    out.extend_from_slice(&net.seed().to_le_bytes());
    for v in [state.lr, state.momentum, state.weight_decay] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut put = |ws: &[Array2<f64>], bs: &[Array1<f64>]| {
        for (w, b) in ws.iter().zip(bs) {
            for v in w.iter().chain(b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    put(net.weights(), net.biases());
    put(state.velocity_w(), state.velocity_b());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptPayload("checkpoint truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn layers(&mut self, widths: &[usize]) -> Result<(Vec<Array2<f64>>, Vec<Array1<f64>>)> {
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for pair in widths.windows(2) {
            let (rows, cols) = (pair[1], pair[0]);
            let w: Vec<f64> = (0..rows * cols).map(|_| self.f64()).collect::<Result<_>>()?;
            let b: Vec<f64> = (0..rows).map(|_| self.f64()).collect::<Result<_>>()?;
            ws.push(Array2::from_shape_vec((rows, cols), w).expect("shape"));
            bs.push(Array1::from(b));
        }
        Ok((ws, bs))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(RankingNet, OptimizerState)> {
    if bytes.len() < 6 {
        return Err(Error::CorruptPayload("checkpoint truncated".into()));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: bytes[..4].try_into().unwrap(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    if bytes.len() < 10 {
        return Err(Error::CorruptPayload("checkpoint truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut cur = Cursor { bytes: body, pos: 6 };
    let n_widths = cur.u32()? as usize;
    if n_widths > 64 {
        return Err(Error::CorruptPayload(format!("{n_widths} layer widths")));
    }
    let widths: Vec<usize> = (0..n_widths).map(|_| cur.u32().map(|w| w as usize)).collect::<Result<_>>()?;
    let dropout = cur.f64()?;
    let spec = LayerSpec::new(widths, dropout)?;
    let seed = cur.u64()?;
    let (lr, momentum, weight_decay) = (cur.f64()?, cur.f64()?, cur.f64()?);
    let (ws, bs) = cur.layers(spec.widths())?;
    let (vw, vb) = cur.layers(spec.widths())?;
    if cur.pos != body.len() {
        return Err(Error::CorruptPayload("trailing bytes in checkpoint".into()));
    }
    let net = RankingNet::from_parts(spec, ws, bs, seed)?;
    let state = OptimizerState::from_parts(lr, momentum, weight_decay, vw, vb)?;
    Ok((net, state))
}

pub fn save_checkpoint(net: &RankingNet, state: &OptimizerState, path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_checkpoint(net, state))
}

pub fn load_checkpoint(path: &Path) -> Result<(RankingNet, OptimizerState)> {
    decode_checkpoint(&io::read(path)?)
}
