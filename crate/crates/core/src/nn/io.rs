//! Binary model format.
//!
//! ```text
//! magic   "LREPRUNE"
//! u32     version (1)
//! u32     layer count
//! layer*  u8 tag, u32 shape header fields, f32 payload
//!           0 dense   : out, in                        | weight[out*in] bias[out]
//!           1 conv2d  : out, in, kh, kw, stride, pad   | weight[out*in*kh*kw] bias[out]
//!           2 relu
//!           3 maxpool : window, stride
//!           4 flatten
//! u32     input rank, u32 extents[rank]
//! u32     class count
//! ```
//! All integers and scalars are little-endian.

use std::fs;
use std::path::Path;

use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LREPRUNE";
pub const VERSION: u32 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;

pub fn to_bytes(net: &Network<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, net.layers().len() as u32);
    for layer in net.layers() {
        match layer {
            Layer::Dense { weight, bias } => {
                out.push(TAG_DENSE);
                put_u32(&mut out, weight.shape()[0] as u32);
                put_u32(&mut out, weight.shape()[1] as u32);
                put_f32s(&mut out, weight.data());
                put_f32s(&mut out, bias);
            }
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                out.push(TAG_CONV);
                for &d in weight.shape() {
                    put_u32(&mut out, d as u32);
                }
                put_u32(&mut out, *stride as u32);
                put_u32(&mut out, *padding as u32);
                put_f32s(&mut out, weight.data());
                put_f32s(&mut out, bias);
            }
            Layer::Relu => out.push(TAG_RELU),
            Layer::MaxPool { window, stride } => {
                out.push(TAG_MAXPOOL);
                put_u32(&mut out, *window as u32);
                put_u32(&mut out, *stride as u32);
            }
            Layer::Flatten => out.push(TAG_FLATTEN),
        }
    }
    put_u32(&mut out, net.input_shape().len() as u32);
    for &d in net.input_shape() {
        put_u32(&mut out, d as u32);
    }
    put_u32(&mut out, net.class_count() as u32);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Parse("bad magic; not an LREPRUNE model file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            supported: VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let tag = r.take(1, "layer tag")?[0];
        let layer = match tag {
            TAG_DENSE => {
                let out = r.u32("dense out")? as usize;
                let inp = r.u32("dense in")? as usize;
                let weight = r.f32s(out.checked_mul(inp).ok_or_else(overflow)?, "dense weight")?;
                let bias = r.f32s(out, "dense bias")?;
                Layer::Dense {
                    weight: Tensor::new(vec![out, inp], weight)
                        .map_err(|e| Error::Parse(format!("layer {i}: {e}")))?,
                    bias,
                }
            }
            TAG_CONV => {
                let mut dims = [0usize; 4];
                for d in &mut dims {
                    *d = r.u32("conv shape")? as usize;
                }
                let stride = r.u32("conv stride")? as usize;
                let padding = r.u32("conv padding")? as usize;
                let len = dims
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .ok_or_else(overflow)?;
                let weight = r.f32s(len, "conv weight")?;
                let bias = r.f32s(dims[0], "conv bias")?;
                Layer::Conv2d {
                    weight: Tensor::new(dims.to_vec(), weight)
                        .map_err(|e| Error::Parse(format!("layer {i}: {e}")))?,
                    bias,
                    stride,
                    padding,
                }
            }
            TAG_RELU => Layer::Relu,
            TAG_MAXPOOL => Layer::MaxPool {
                window: r.u32("pool window")? as usize,
                stride: r.u32("pool stride")? as usize,
            },
            TAG_FLATTEN => Layer::Flatten,
            other => return Err(Error::Parse(format!("layer {i}: unknown tag {other}"))),
        };
        layers.push(layer);
    }
    let rank = r.u32("input rank")? as usize;
    let mut input_shape = Vec::with_capacity(rank.min(8));
    for _ in 0..rank {
        input_shape.push(r.u32("input extent")? as usize);
    }
    let class_count = r.u32("class count")? as usize;
    if r.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after model",
            bytes.len() - r.pos
        )));
    }
    Network::new(layers, input_shape, class_count)
        .map_err(|e| Error::Parse(format!("inconsistent model: {e}")))
}

/// Writes the model atomically (temporary sibling file, then rename).
pub fn save(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, to_bytes(net)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

fn overflow() -> Error {
    Error::Parse("layer extent overflow".into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Parse(format!(
                "truncated at byte {} while reading {what}",
                self.pos
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(n.checked_mul(4).ok_or_else(overflow)?, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkBuilder;

    fn alexnet_like() -> Network<f32> {
        NetworkBuilder::new(&[3, 16, 16])
            .conv2d(16, 3, 1, 1)
            .relu()
            .maxpool(2, 2)
            .conv2d(32, 3, 1, 1)
            .relu()
            .maxpool(2, 2)
            .flatten()
            .dense(64)
            .relu()
            .dense(10)
            .build(42)
            .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = alexnet_like();
        let bytes = to_bytes(&net);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = to_bytes(&alexnet_like());
        for cut in [0, 7, 12, 40, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Parse(_))), "cut {cut}");
        }
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = to_bytes(&alexnet_like());
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::Version { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn header_layout() {
        let net = NetworkBuilder::new(&[2]).dense(1).build(0).unwrap();
        let bytes = to_bytes(&net);
        assert_eq!(&bytes[..8], b"LREPRUNE");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(bytes[16], TAG_DENSE);
        // tag + 2 u32 + 2 weights + 1 bias, then rank, extent, classes
        assert_eq!(bytes.len(), 16 + 1 + 8 + 12 + 4 + 4 + 4);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lrp");
        let net = alexnet_like();
        save(&net, &path).unwrap();
        assert_eq!(load(&path).unwrap(), net);
    }
}
