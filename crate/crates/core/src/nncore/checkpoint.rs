//! Binary model checkpoints.
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`:
//!
//! ```text
//! magic            8 bytes  "MTRAPNN\0"
//! version          u32      1
//! input side       u32
//! channels         u32
//! layer count      u32
//! per layer        u8 tag, then
//!                    1 = conv:  out_maps, in_maps, kh, kw   (u32 each)
//!                    2 = pool:  nothing (2×2, stride 2)
//!                    3 = fc:    outputs, inputs (u32), activation u8 (0 relu, 1 softmax)
//! parameters       f64 × N, per parameterized layer: weights (row-major) then biases
//! standardizer     u8 tag (0 identity, 1 per-dimension, 2 per-patch), u32 count,
//!                  then count means followed by count standard deviations
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

use super::layers::{Activation, ConvLayer, FcLayer};
use super::{Layer, Network, Standardizer};

pub const MAGIC: &[u8; 8] = b"MTRAPNN\0";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_FC: u8 = 3;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_reals<W: Write, T: Scalar>(w: &mut W, vals: &[T]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write, T: Scalar>(net: &Network<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION as usize)?;
    put_u32(&mut w, net.input_side())?;
    put_u32(&mut w, net.channels())?;
    put_u32(&mut w, net.layers().len())?;
    for layer in net.layers() {
        match layer {
            Layer::Conv(c) => {
                w.write_all(&[TAG_CONV])?;
                for v in [c.out_maps, c.in_maps, c.kh, c.kw] {
                    put_u32(&mut w, v)?;
                }
            }
            Layer::MaxPool => w.write_all(&[TAG_POOL])?,
            Layer::Fc(f) => {
                w.write_all(&[TAG_FC])?;
                put_u32(&mut w, f.outputs)?;
                put_u32(&mut w, f.inputs)?;
                w.write_all(&[match f.activation {
                    Activation::Relu => 0,
                    Activation::Softmax => 1,
                }])?;
            }
        }
    }
    for layer in net.layers() {
        match layer {
            Layer::Conv(c) => {
                put_reals(&mut w, &c.weights)?;
                put_reals(&mut w, &c.biases)?;
            }
            Layer::Fc(f) => {
                put_reals(&mut w, &f.weights)?;
                put_reals(&mut w, &f.biases)?;
            }
            Layer::MaxPool => {}
        }
    }
    match net.standardizer() {
        Standardizer::Identity => {
            w.write_all(&[0])?;
            put_u32(&mut w, 0)?;
        }
        Standardizer::PerDimension { mean, std } => {
            w.write_all(&[1])?;
            put_u32(&mut w, mean.len())?;
            put_reals(&mut w, mean)?;
            put_reals(&mut w, std)?;
        }
        Standardizer::PerPatch => {
            w.write_all(&[2])?;
            put_u32(&mut w, 0)?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn reals<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        (0..n)
            .map(|_| {
                let v = f64::from_le_bytes(self.bytes()?);
                if v.is_finite() {
                    Ok(lit(v))
                } else {
                    Err(Error::Checkpoint("non-finite parameter".into()))
                }
            })
            .collect()
    }
}

enum Descriptor {
    Conv(usize, usize, usize, usize),
    Pool,
    Fc(usize, usize, Activation),
}

pub fn read_checkpoint<R: Read, T: Scalar>(r: R) -> Result<Network<T>> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let side = r.u32()?;
    let channels = r.u32()?;
    let count = r.u32()?;
    let mut descs = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        descs.push(match r.u8()? {
            TAG_CONV => Descriptor::Conv(r.u32()?, r.u32()?, r.u32()?, r.u32()?),
            TAG_POOL => Descriptor::Pool,
            TAG_FC => {
                let (o, i) = (r.u32()?, r.u32()?);
                let act = match r.u8()? {
                    0 => Activation::Relu,
                    1 => Activation::Softmax,
                    a => return Err(Error::Checkpoint(format!("unknown activation {a}"))),
                };
                Descriptor::Fc(o, i, act)
            }
            t => return Err(Error::Checkpoint(format!("unknown layer tag {t}"))),
        });
    }
    let mut layers = Vec::with_capacity(descs.len());
    for d in descs {
        layers.push(match d {
            Descriptor::Conv(o, i, kh, kw) => {
                let w = r.reals(o * i * kh * kw)?;
                let b = r.reals(o)?;
                Layer::Conv(ConvLayer::new(o, i, kh, kw, w, b)?)
            }
            Descriptor::Pool => Layer::MaxPool,
            Descriptor::Fc(o, i, act) => {
                let w = r.reals(o * i)?;
                let b = r.reals(o)?;
                Layer::Fc(FcLayer::new(o, i, w, b, act)?)
            }
        });
    }
    let tag = r.u8()?;
    let n = r.u32()?;
    let standardizer = match tag {
        0 => Standardizer::Identity,
        1 => {
            let mean = r.reals(n)?;
            let std = r.reals(n)?;
            Standardizer::PerDimension { mean, std }
        }
        2 => Standardizer::PerPatch,
        t => return Err(Error::Checkpoint(format!("unknown standardizer tag {t}"))),
    };
    Network::from_layers(side, channels, layers, standardizer)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Network<T>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
