//! Binary network checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "BNTB"            magic, 4 bytes
//! version           u16
//! layer count       u16
//! per layer:
//!   in_units        u32
//!   out_units       u32
//!   activation      u8   (0 identity, 1 relu, 2 sigmoid)
//!   weights         out_units * in_units f64, row-major
//!   bias            out_units f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Layer, Network};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"BNTB";
pub const VERSION: u16 = 1;

pub fn write_network(net: &Network, mut w: impl Write) -> Result<()> {
    let count = u16::try_from(net.layers().len())
        .map_err(|_| Error::Checkpoint("too many layers".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for layer in net.layers() {
        let dense = &layer.dense;
        let in_units = u32::try_from(dense.in_units())
            .map_err(|_| Error::Checkpoint("layer too wide".into()))?;
        let out_units = u32::try_from(dense.out_units())
            .map_err(|_| Error::Checkpoint("layer too wide".into()))?;
        w.write_all(&in_units.to_le_bytes())?;
        w.write_all(&out_units.to_le_bytes())?;
        w.write_all(&[layer.activation.tag()])?;
        for v in dense.weights().as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in dense.bias().as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_network(mut r: impl Read) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let count = read_u16(&mut r)? as usize;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let in_units = read_u32(&mut r)? as usize;
        let out_units = read_u32(&mut r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let activation = Activation::from_tag(tag[0]).ok_or_else(|| {
            Error::Checkpoint(format!("layer {i}: unknown activation tag {}", tag[0]))
        })?;
        let weights = Matrix::from_vec(out_units, in_units, read_f64s(&mut r, out_units * in_units)?)?;
        let bias = Matrix::from_vec(1, out_units, read_f64s(&mut r, out_units)?)?;
        layers.push(Layer::new(DenseLayer::new(weights, bias, None)?, activation));
    }
    Network::new(layers)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_network(net, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    read_network(BufReader::new(File::open(path)?))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_net() -> Network {
        Network::new(vec![
            Layer::new(DenseLayer::binomial_full(3, 10).unwrap(), Activation::Relu),
            Layer::new(DenseLayer::xavier(7, 2, 1).unwrap(), Activation::Sigmoid),
        ])
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_parameters() {
        let net = sample_net();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(buf.as_slice()).unwrap();
        assert_eq!(back.layers().len(), 2);
        for (a, b) in net.layers().iter().zip(back.layers()) {
            assert_eq!(a.activation, b.activation);
            assert_eq!(a.dense.weights(), b.dense.weights());
            assert_eq!(a.dense.bias(), b.dense.bias());
        }
    }

    #[test]
    fn header_layout_is_exact() {
        let net = Network::new(vec![Layer::new(
            DenseLayer::new(
                Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap(),
                Matrix::from_rows(&[vec![0.5]]).unwrap(),
                None,
            )
            .unwrap(),
            Activation::Relu,
        )])
        .unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"BNTB");
        expect.extend_from_slice(&1u16.to_le_bytes());
        expect.extend_from_slice(&1u16.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.push(1);
        for v in [1.0f64, -2.0, 0.5] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(buf, expect);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut buf = Vec::new();
        write_network(&sample_net(), &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_network(bad.as_slice()), Err(Error::Checkpoint(_))));

        let mut future = buf.clone();
        future[4..6].copy_from_slice(&2u16.to_le_bytes());
        let err = read_network(future.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        let mut tag = buf.clone();
        tag[16] = 9;
        assert!(read_network(tag.as_slice()).is_err());

        assert!(read_network(&buf[..buf.len() - 3]).is_err());
    }
}
