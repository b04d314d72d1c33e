//! Model file layout (all integers and floats little-endian):
//!
//! ```text
//! "ZEVF"            4 bytes magic
//! version           u16 (= 1)
//! kind              u8  (0 linear, 1 coupling)
//! d                 u32
//! delta             f64
//! -- coupling only --
//! K                 u32 blocks
//! h                 u32 hidden width
//! s_max             f64 scale clamp
//! perms             K * d u32, block by block
//! -- all kinds --
//! parameters        f64, in the transform's flat parameter order
//! ```
//!
//! Linear parameters are `A` row-major then `b`. Coupling parameters are,
//! per block, `W1 (h x ceil(d/2)), c1 (h), Ws (floor(d/2) x h), cs, Wt, ct`.

use std::path::Path;

use super::{FlowModel, FlowRegistry};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZEVF";
pub const VERSION: u16 = 1;

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated model file at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length N"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn write_model(model: &FlowModel) -> Vec<u8> {
    let t = model.transform();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(t.kind().code());
    out.extend_from_slice(&(t.dim() as u32).to_le_bytes());
    out.extend_from_slice(&model.delta().to_le_bytes());
    t.encode_layout(&mut out);
    for p in t.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn read_model(bytes: &[u8]) -> Result<FlowModel> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take::<4>()?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"ZEVF\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let code = r.u8()?;
    let dim = r.u32()? as usize;
    if !(2..=1 << 16).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let delta = r.f64()?;
    let registry = FlowRegistry::default();
    let mut transform = (registry.by_code(code)?.decode)(dim, &mut r)?;
    let n = transform.params().len();
    if r.remaining() != n * 8 {
        return Err(Error::Format(format!(
            "expected {} parameter bytes, found {}",
            n * 8,
            r.remaining()
        )));
    }
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    transform.set_params(&params)?;
    FlowModel::new(transform, delta).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_model(model: &FlowModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FlowModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{CouplingFlow, FlowOptions, LinearFlow};

    fn models() -> Vec<FlowModel> {
        let lin = LinearFlow::from_parts(3, &[1.0, 0.2, 0.0, -0.1, 2.0, 0.3, 0.0, 0.5, 1.5], &[0.1, -0.2, 0.3]).unwrap();
        let cpl = CouplingFlow::random(5, &FlowOptions { blocks: 3, hidden: 4, ..FlowOptions::default() }, 4, 0.3);
        vec![
            FlowModel::new(Box::new(lin), 10.0).unwrap(),
            FlowModel::new(Box::new(cpl), 2.5).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        for m in models() {
            let back = read_model(&write_model(&m)).unwrap();
            assert_eq!(back.kind(), m.kind());
            assert_eq!(back.delta().to_bits(), m.delta().to_bits());
            assert_eq!(back.transform().params(), m.transform().params());
            let x: Vec<f64> = (0..m.dim()).map(|i| i as f64 * 0.7 - 1.0).collect();
            assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
        }
    }

    #[test]
    fn truncated_file_rejected() {
        for m in models() {
            let bytes = write_model(&m);
            for cut in [0, 3, 10, bytes.len() - 1] {
                assert!(matches!(read_model(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
            }
        }
    }

    #[test]
    fn wrong_magic_names_expected() {
        let mut bytes = write_model(&models()[0]);
        bytes[0] = b'X';
        let e = read_model(&bytes).unwrap_err().to_string();
        assert!(e.contains("\"ZEVF\""), "{e}");
    }

    #[test]
    fn bad_version_and_trailing_bytes() {
        let mut bytes = write_model(&models()[0]);
        bytes[4] = 9;
        assert!(read_model(&bytes).is_err());
        let mut bytes = write_model(&models()[0]);
        bytes.push(0);
        assert!(read_model(&bytes).is_err());
    }
}
