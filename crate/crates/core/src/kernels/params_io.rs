//! Flat binary serialisation of block parameters.
//!
//! Layout (all little-endian): magic `CSTM`, `u32` format version, `u32`
//! channels, `u32` state size, `u32` heads, `u32` array count, then for each
//! array a `u32` rank, `rank` × `u32` dims and the `f64` values.

use std::io::{Read, Write};

use super::block::StBlockParams;
use super::params::Parameters;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSTM";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_params<W: Write>(mut w: W, p: &StBlockParams) -> Result<()> {
    p.validate()?;
    w.write_all(MAGIC)?;
    for v in [FORMAT_VERSION, p.channels() as u32, p.state() as u32, p.heads() as u32, p.num_arrays() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut res = Ok(());
    p.visit(&mut |m| {
        if res.is_err() {
            return;
        }
        res = (|| -> Result<()> {
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        })();
    });
    res
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_params<R: Read>(mut r: R) -> Result<StBlockParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Malformed("parameter file does not start with CSTM".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Malformed(format!("unsupported parameter format version {version}")));
    }
    let (channels, state, heads) = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
    if channels == 0 || state == 0 || heads == 0 || channels % heads != 0 {
        return Err(Error::Malformed(format!("bad header: channels {channels}, state {state}, heads {heads}")));
    }
    let mut p = StBlockParams::zeros(channels, state, heads);
    let count = read_u32(&mut r)? as usize;
    if count != p.num_arrays() {
        return Err(Error::Malformed(format!("expected {} arrays, found {count}", p.num_arrays())));
    }
    let mut res = Ok(());
    p.visit_mut(&mut |m| {
        if res.is_err() {
            return;
        }
        res = (|| -> Result<()> {
            let rank = read_u32(&mut r)?;
            let dims = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims != [m.rows(), m.cols()] {
                return Err(Error::Malformed(format!("array shape {dims:?}, expected {:?}", m.shape())));
            }
            let mut b = [0u8; 8];
            for v in m.data_mut() {
                r.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
            }
            Ok(())
        })();
    });
    res?;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = StBlockParams::init(4, 3, 2, &mut rng);
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"CSTM");
        assert_eq!(read_params(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let p = StBlockParams::zeros(2, 1, 1);
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(bad.as_slice()), Err(Error::Malformed(_))));
        assert!(read_params(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_params(bad.as_slice()), Err(Error::Malformed(_))));
    }
}
