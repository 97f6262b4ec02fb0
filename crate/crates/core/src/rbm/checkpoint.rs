//! Binary RBM checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  b"RBMOTOC\0"
//! version  u32
//! n        u64      visible units
//! m        u64      hidden units
//! seed     u64
//! params   (n + m + n*m) x (re: f64, im: f64), flat parameter order
//! ```
//!
//! Floats are stored as raw bits, so save followed by load is bit-exact.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use super::RbmState;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RBMOTOC\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A saved state together with the seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: RbmState,
    pub seed: u64,
}

pub fn write_checkpoint<W: Write>(mut out: W, state: &RbmState, seed: u64) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(state.n_visible() as u64).to_le_bytes())?;
    out.write_all(&(state.n_hidden() as u64).to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    for p in state.params() {
        out.write_all(&p.re.to_bits().to_le_bytes())?;
        out.write_all(&p.im.to_bits().to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(inp: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    inp.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_checkpoint<R: Read>(mut inp: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an RBM checkpoint".into()));
    }
    let mut v = [0u8; 4];
    inp.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let n = read_u64(&mut inp)? as usize;
    let m = read_u64(&mut inp)? as usize;
    let seed = read_u64(&mut inp)?;
    let count = n
        .checked_mul(m)
        .and_then(|nm| nm.checked_add(n + m))
        .ok_or_else(|| Error::Format("checkpoint dimensions overflow".into()))?;
    let mut params = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let re = f64::from_bits(read_u64(&mut inp)?);
        let im = f64::from_bits(read_u64(&mut inp)?);
        params.push(C64::new(re, im));
    }
    let mut trailing = [0u8; 1];
    if inp.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { state: RbmState::from_flat(n, m, params)?, seed })
}
