//! Binary parameter snapshots: magic `RPNT`, u32 version, u64 count, then
//! per tensor u64 name length, name bytes, u64 rank, u64 extents and the
//! little-endian f64 payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Parameter, Tensor};

const MAGIC: &[u8; 4] = b"RPNT";
const VERSION: u32 = 1;

pub fn write_checkpoint_to<W: Write>(w: &mut W, params: &[Parameter]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.name.len() as u64).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for &e in shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &x in p.value.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

// Guards against absurd lengths in corrupt files before allocating.
const MAX_LEN: u64 = 1 << 32;

pub fn read_checkpoint_from<R: Read>(r: &mut R) -> Result<Vec<Parameter>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u64(r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u64(r)?;
        if len > MAX_LEN {
            return Err(Error::Format(format!("parameter name length {len}")));
        }
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = read_u64(r)?;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("parameter {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        let n: usize = shape.iter().product();
        if n as u64 > MAX_LEN {
            return Err(Error::Format(format!("parameter {name} has {n} elements")));
        }
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push(Parameter::new(name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, params: &[Parameter]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint_to(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<Parameter>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint_from(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let params = vec![
            Parameter::new("a.weight", Tensor::new([2, 3], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 0.1]).unwrap()),
            Parameter::new("a.bias", Tensor::new([3], vec![0.0, 2.0, 3.0]).unwrap()),
        ];
        let mut buf = Vec::new();
        write_checkpoint_to(&mut buf, &params).unwrap();
        let back = read_checkpoint_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (p, q) in params.iter().zip(&back) {
            assert_eq!(p.name, q.name);
            assert_eq!(p.value.shape(), q.value.shape());
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p.value), bits(&q.value));
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let err = read_checkpoint_from(&mut &b"XXXX\x01\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }
}
