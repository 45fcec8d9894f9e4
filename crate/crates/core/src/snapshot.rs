//! Binary snapshots of fields and trajectories.
//!
//! Field record (`PFLD`), all little-endian:
//! magic, `u32` version, `u32` n, `u32` points per axis (n times), `u32` l,
//! `f64` box length, `f64` time, then `N^n * l` `f64` values ordered point-major
//! (all components of point 0, then point 1, ...), points row-major.
//!
//! Trajectory file (`PTRJ`): magic, `u32` version, `u32` record count, then
//! that many field records back to back.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Trajectory};

pub const FIELD_MAGIC: &[u8; 4] = b"PFLD";
pub const TRAJECTORY_MAGIC: &[u8; 4] = b"PTRJ";
pub const VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_field(w: &mut impl Write, f: &Field) -> Result<()> {
    let spec = f.spec();
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(spec.dim() as u32).to_le_bytes())?;
    for _ in 0..spec.dim() {
        w.write_all(&(spec.points() as u32).to_le_bytes())?;
    }
    w.write_all(&(f.components() as u32).to_le_bytes())?;
    w.write_all(&spec.length().to_le_bytes())?;
    w.write_all(&f.time().to_le_bytes())?;
    let total = spec.total();
    let l = f.components();
    let data = f.data();
    let mut buf = Vec::with_capacity(total * l * 8);
    for p in 0..total {
        for c in 0..l {
            buf.extend_from_slice(&data[c * total + p].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<Field> {
    expect_magic(r, FIELD_MAGIC)?;
    let dim = read_u32(r)? as usize;
    if dim == 0 || dim > crate::grid::MAX_DIM {
        return Err(Error::Format(format!("dimension {dim} out of range")));
    }
    let mut points = Vec::with_capacity(dim);
    for _ in 0..dim {
        points.push(read_u32(r)? as usize);
    }
    if points.iter().any(|&p| p != points[0]) {
        return Err(Error::Format(format!(
            "anisotropic grids are not supported: {points:?}"
        )));
    }
    let l = read_u32(r)? as usize;
    if l == 0 {
        return Err(Error::Format("zero components".into()));
    }
    let length = read_f64(r)?;
    let time = read_f64(r)?;
    let spec = GridSpec::new(dim, length, points[0])?;
    let total = spec.total();
    let mut raw = vec![0u8; total * l * 8];
    r.read_exact(&mut raw)?;
    let mut data = vec![0.0; total * l];
    for (i, chunk) in raw.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        let (p, c) = (i / l, i % l);
        data[c * total + p] = v;
    }
    Field::new(spec, l, data, time)
}

pub fn write_trajectory(w: &mut impl Write, t: &Trajectory) -> Result<()> {
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.len() as u32).to_le_bytes())?;
    for f in t.fields() {
        write_field(w, f)?;
    }
    Ok(())
}

pub fn read_trajectory(r: &mut impl Read) -> Result<Trajectory> {
    expect_magic(r, TRAJECTORY_MAGIC)?;
    let count = read_u32(r)? as usize;
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        fields.push(read_field(r)?);
    }
    let times = fields.iter().map(Field::time).collect();
    Trajectory::new(times, fields)
}

/// Reads either a field or a trajectory; a field becomes a one-sample trajectory.
pub fn read_any(bytes: &[u8]) -> Result<Trajectory> {
    let mut cursor = bytes;
    if bytes.starts_with(TRAJECTORY_MAGIC) {
        read_trajectory(&mut cursor)
    } else {
        let f = read_field(&mut cursor)?;
        Trajectory::new(vec![f.time()], vec![f])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let spec = GridSpec::new(2, 7.5, 8).unwrap();
        let f = Field::from_fn(spec, 3, 0.125, |x, o| {
            o[0] = x[0].sin() / 3.0;
            o[1] = x[1].exp();
            o[2] = 1e-300 * x[0];
        })
        .unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"PFLD");
        let g = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(f.spec(), g.spec());
        assert_eq!(f.time().to_bits(), g.time().to_bits());
        assert!(f.data().iter().zip(g.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn point_major_layout() {
        let spec = GridSpec::new(1, 1.0, 8).unwrap();
        let f = Field::from_fn(spec, 2, 0.0, |x, o| {
            o[0] = x[0];
            o[1] = -1.0;
        })
        .unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let header = 4 + 4 + 4 + 4 + 4 + 8 + 8;
        let v = |i: usize| f64::from_le_bytes(buf[header + 8 * i..header + 8 * i + 8].try_into().unwrap());
        assert_eq!(v(0), 0.0);
        assert_eq!(v(1), -1.0);
        assert_eq!(v(2), 0.125);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_field(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
        assert!(read_field(&mut &b"PFLD\x02\0\0\0"[..]).is_err());
        assert!(read_field(&mut &b"PFLD\x01\0\0\0\x01\0\0\0"[..]).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let spec = GridSpec::new(1, 3.0, 8).unwrap();
        let a = Field::constant(spec, &[1.0, 2.0], 0.0);
        let b = Field::constant(spec, &[3.0, 4.0], 0.0);
        let t = Trajectory::new(vec![0.0, 0.5], vec![a, b]).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t).unwrap();
        assert_eq!(read_any(&buf).unwrap(), t);
    }
}
