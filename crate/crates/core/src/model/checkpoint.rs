//! Bit-exact binary checkpoints for [`TwoLayerNet`].
//!
//! Layout (little endian): magic `DIPNET01`, `k`, `d`, `n` as `u64`, a layer
//! flag byte, an activation byte, then `u`, `W` (row-major) and `V` (row-major)
//! as `f64`.

use std::io::{Read, Write};
use std::path::Path;

use super::activation::ActivationKind;
use super::net::{Layers, TwoLayerNet};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

const MAGIC: &[u8; 8] = b"DIPNET01";

pub fn write_network(net: &TwoLayerNet, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    for dim in [net.k(), net.d(), net.n()] {
        out.write_all(&(dim as u64).to_le_bytes())?;
    }
    out.write_all(&[u8::from(net.layers().trains_v()), net.activation().code()])?;
    let values = net
        .u()
        .iter()
        .chain(net.w().as_slice())
        .chain(net.v().as_slice());
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_network(mut input: impl Read) -> Result<TwoLayerNet> {
    let mut magic = [0u8; 8];
    read_exact(&mut input, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let k = read_u64(&mut input)? as usize;
    let d = read_u64(&mut input)? as usize;
    let n = read_u64(&mut input)? as usize;
    let mut flags = [0u8; 2];
    read_exact(&mut input, &mut flags)?;
    let layers = match flags[0] {
        0 => Layers::FixedV,
        1 => Layers::Both,
        f => return Err(Error::Format(format!("bad layer flag {f}"))),
    };
    let activation = ActivationKind::from_code(flags[1])?;
    let total = d
        .checked_add(k.checked_mul(d).ok_or_else(overflow)?)
        .and_then(|t| t.checked_add(n.checked_mul(k)?))
        .ok_or_else(overflow)?;
    let mut values = Vec::with_capacity(total.min(1 << 24));
    for _ in 0..total {
        values.push(read_f64(&mut input)?);
    }
    let v = values.split_off(d + k * d);
    let w = values.split_off(d);
    TwoLayerNet::new(
        DenseMatrix::new(k, d, w)?,
        DenseMatrix::new(n, k, v)?,
        values,
        layers,
        activation,
    )
}

pub fn save_network(net: &TwoLayerNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_network(net, &mut buf)
        .and_then(|_| buf.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<TwoLayerNet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(std::io::BufReader::new(file))
}

fn overflow() -> Error {
    Error::Format("checkpoint dimensions overflow".into())
}

pub(crate) fn read_exact(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated data: {e}")))
}

pub(crate) fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SeededRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(21, 4);
        let net = TwoLayerNet::init(7, 3, 5, Layers::Both, ActivationKind::Softplus, &mut rng).unwrap();
        let mut bytes = Vec::new();
        write_network(&net, &mut bytes).unwrap();
        let back = read_network(bytes.as_slice()).unwrap();
        assert_eq!(net, back);
        let a: Vec<u64> = net.forward().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = back.forward().iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_and_foreign_data_rejected() {
        let mut rng = SeededRng::new(1, 0);
        let net = TwoLayerNet::init(2, 2, 2, Layers::FixedV, ActivationKind::Tanh, &mut rng).unwrap();
        let mut bytes = Vec::new();
        write_network(&net, &mut bytes).unwrap();
        assert!(read_network(&bytes[..bytes.len() - 3]).is_err());
        assert!(read_network(&b"NOTANET0"[..]).is_err());
    }
}
