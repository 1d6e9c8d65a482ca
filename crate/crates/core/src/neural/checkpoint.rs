use std::io::{Read, Write};

use super::{Activation, DenseNet, NeuralError};
use crate::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SBNN";

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], NeuralError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NeuralError::Corrupt("truncated".into()),
        _ => NeuralError::Io(e),
    })?;
    Ok(buf)
}

/// Writes the header (magic, version, layer sizes, activations, dropout rate)
/// followed by every parameter as a little-endian `f64`.
pub fn write_net<S: Scalar, W: Write>(net: &DenseNet<S>, mut w: W) -> Result<(), NeuralError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, CHECKPOINT_VERSION)?;
    put_u32(&mut w, net.dims().len() as u32)?;
    for &d in net.dims() {
        put_u32(&mut w, d as u32)?;
    }
    for a in net.activations() {
        w.write_all(&[match a {
            Activation::Relu => 0,
            Activation::Linear => 1,
        }])?;
    }
    w.write_all(&net.dropout().to_le_bytes())?;
    w.write_all(&(net.param_count() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_net<S: Scalar, R: Read>(mut r: R) -> Result<DenseNet<S>, NeuralError> {
    if &get::<4, _>(&mut r)? != MAGIC {
        return Err(NeuralError::Corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(get(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let n = u32::from_le_bytes(get(&mut r)?) as usize;
    if !(2..=64).contains(&n) {
        return Err(NeuralError::Corrupt(format!("implausible layer count {n}")));
    }
    let mut dims = Vec::with_capacity(n);
    for _ in 0..n {
        let d = u32::from_le_bytes(get(&mut r)?) as usize;
        if d == 0 || d > 1 << 20 {
            return Err(NeuralError::Corrupt(format!("implausible layer size {d}")));
        }
        dims.push(d);
    }
    let mut activations = Vec::with_capacity(n - 1);
    for _ in 1..n {
        activations.push(match get::<1, _>(&mut r)?[0] {
            0 => Activation::Relu,
            1 => Activation::Linear,
            other => return Err(NeuralError::Corrupt(format!("unknown activation tag {other}"))),
        });
    }
    let dropout = f64::from_le_bytes(get(&mut r)?);
    let mut net = DenseNet::<S>::zeros(&dims, dropout).map_err(|e| NeuralError::Corrupt(e.to_string()))?;
    let count = u64::from_le_bytes(get(&mut r)?) as usize;
    if count != net.param_count() {
        return Err(NeuralError::Corrupt(format!("{count} parameters for layout {dims:?}")));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(S::of(f64::from_le_bytes(get(&mut r)?)));
    }
    net.set_parts(activations, params);
    Ok(net)
}
