//! Raw tensor file format.
//!
//! ```text
//! magic   b"TNSR"
//! version u32 (currently 1)
//! dtype   u8: 0 = f64, 1 = u8
//! rank    u32
//! dims    u64 * rank
//! payload row-major little-endian values
//! crc32   u32 over every preceding byte
//! ```

use std::path::Path;

use crate::data::image_batch::ImageBatch;
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::util::crc32;

const MAGIC: &[u8; 4] = b"TNSR";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;
const DTYPE_U8: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum RawTensor {
    F64(Tensor),
    U8 { shape: Vec<usize>, data: Vec<u8> },
}

pub fn raw_bytes(t: &RawTensor) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    match t {
        RawTensor::F64(t) => {
            out.push(DTYPE_F64);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        RawTensor::U8 { shape, data } => {
            out.push(DTYPE_U8);
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(data);
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn write_raw(path: &Path, t: &RawTensor) -> Result<()> {
    std::fs::write(path, raw_bytes(t))?;
    Ok(())
}

pub fn parse_raw(bytes: &[u8]) -> Result<RawTensor> {
    let need = |pos: usize, n: usize, what: &str| -> Result<()> {
        if pos + n > bytes.len() {
            Err(Error::format(
                pos as u64,
                format!("truncated while reading {what}: expected {n} bytes, {} available", bytes.len() - pos),
            ))
        } else {
            Ok(())
        }
    };
    need(0, 4 + 4 + 1 + 4 + 4, "header")?;
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}, expected {MAGIC:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dtype = bytes[8];
    if dtype != DTYPE_F64 && dtype != DTYPE_U8 {
        return Err(Error::format(8, format!("unknown dtype code {dtype}")));
    }
    let rank = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let mut pos = 13;
    need(pos, rank * 8, "dims")?;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize);
        pos += 8;
    }
    let numel: usize = shape.iter().product();
    // Truncation is reported with expected vs actual byte counts before the
    // checksum is consulted.
    let payload_bytes = numel * if dtype == DTYPE_F64 { 8 } else { 1 };
    let expected_total = pos + payload_bytes + 4;
    if bytes.len() != expected_total {
        return Err(Error::format(
            bytes.len() as u64,
            format!("expected {expected_total} bytes total, got {}", bytes.len()),
        ));
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let actual = crc32(&bytes[..body_len]);
    if stored != actual {
        return Err(Error::format(
            body_len as u64,
            format!("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"),
        ));
    }
    match dtype {
        DTYPE_F64 => {
            let data: Vec<f64> = bytes[pos..body_len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(RawTensor::F64(Tensor::from_vec(&shape, data).map_err(|e| {
                Error::format(pos as u64, format!("{e}"))
            })?))
        }
        DTYPE_U8 => Ok(RawTensor::U8 { shape, data: bytes[pos..body_len].to_vec() }),
        other => Err(Error::format(8, format!("unknown dtype code {other}"))),
    }
}

pub fn read_raw(path: &Path) -> Result<RawTensor> {
    parse_raw(&std::fs::read(path)?)
}

pub fn write_points(path: &Path, points: &Tensor) -> Result<()> {
    write_raw(path, &RawTensor::F64(points.clone()))
}

pub fn read_points(path: &Path) -> Result<Tensor> {
    match read_raw(path)? {
        RawTensor::F64(t) if t.rank() == 2 => Ok(t),
        RawTensor::F64(t) => Err(Error::data(format!(
            "expected rank-2 point tensor, got rank {}",
            t.rank()
        ))),
        RawTensor::U8 { .. } => Err(Error::data("expected f64 point tensor, found u8 data")),
    }
}

pub fn write_images(path: &Path, images: &ImageBatch) -> Result<()> {
    write_raw(
        path,
        &RawTensor::U8 {
            shape: vec![images.n, images.c, images.h, images.w],
            data: images.pixels.clone(),
        },
    )
}

pub fn read_images(path: &Path) -> Result<ImageBatch> {
    match read_raw(path)? {
        RawTensor::U8 { shape, data } if shape.len() == 4 => {
            ImageBatch::from_pixels(shape[0], shape[1], shape[2], shape[3], data)
        }
        RawTensor::U8 { shape, .. } => {
            Err(Error::data(format!("expected rank-4 image tensor, got shape {shape:?}")))
        }
        RawTensor::F64(_) => Err(Error::data("expected u8 image tensor, found f64 data")),
    }
}
