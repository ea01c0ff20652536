//! Flat binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//! `magic "FPGNET\0\0"`, `u32 version`, `u32 network count`, then per
//! network: `u32 layer count`, that many `u32` sizes, `u8 output kind`
//! (0 linear, 1 scaled tanh), `f64 output scale`, `u64 parameter count`,
//! the parameters as `f64` in layer order.

use std::io::{Read, Write};
use std::path::Path;

use super::nn::{Mlp, OutputActivation};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FPGNET\0\0";
pub const VERSION: u32 = 1;

pub fn write_networks<W: Write>(mut w: W, nets: &[&Mlp]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(nets.len() as u32).to_le_bytes())?;
    for net in nets {
        w.write_all(&(net.sizes().len() as u32).to_le_bytes())?;
        for &s in net.sizes() {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        let (kind, scale) = match net.output_activation() {
            OutputActivation::Linear => (0u8, 1.0),
            OutputActivation::ScaledTanh(s) => (1u8, s),
        };
        w.write_all(&[kind])?;
        w.write_all(&scale.to_le_bytes())?;
        w.write_all(&(net.num_params() as u64).to_le_bytes())?;
        for p in net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub fn read_networks<R: Read>(mut r: R) -> Result<Vec<Mlp>> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a parameter checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("checkpoint version {version} is not supported (expected {VERSION})")));
    }
    let count = read_u32(&mut r)?;
    let mut nets = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let layers = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&layers) {
            return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
        }
        let sizes = (0..layers).map(|_| read_u32(&mut r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        let [kind] = read_array::<1, _>(&mut r)?;
        let scale = f64::from_le_bytes(read_array(&mut r)?);
        let output = match kind {
            0 => OutputActivation::Linear,
            1 => OutputActivation::ScaledTanh(scale),
            k => return Err(Error::Checkpoint(format!("unknown output activation {k}"))),
        };
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        if n != super::nn::param_count(&sizes) {
            return Err(Error::Checkpoint(format!("parameter count {n} does not match layout {sizes:?}")));
        }
        let params = (0..n)
            .map(|_| read_array(&mut r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        nets.push(Mlp::from_params(&sizes, output, params)?);
    }
    Ok(nets)
}

pub fn save(path: &Path, nets: &[&Mlp]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_networks(&mut w, nets)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<Mlp>> {
    let file = std::fs::File::open(path)?;
    read_networks(std::io::BufReader::new(file))
}
