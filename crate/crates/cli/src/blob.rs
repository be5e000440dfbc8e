//! Little-endian `f32` tensor blobs used for golden fixtures.
//!
//! Layout: the 4-byte magic `DVF1`, a `u32` rank, `rank` `u32` dimensions,
//! then the values in row-major order.

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 4] = b"DVF1";

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Blob {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> io::Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "shape does not match data length"));
        }
        Ok(Self { shape, data })
    }

    pub fn write(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(input: &mut impl Read) -> io::Result<Self> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if &word != MAGIC {
            return Err(bad("bad magic"));
        }
        input.read_exact(&mut word)?;
        let rank = u32::from_le_bytes(word) as usize;
        if rank > 8 {
            return Err(bad("rank too large"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            input.read_exact(&mut word)?;
            shape.push(u32::from_le_bytes(word) as usize);
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        let expected = shape.iter().product::<usize>() * 4;
        if rest.len() != expected {
            return Err(bad("payload length does not match shape"));
        }
        let data = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let blob = Blob::new(vec![2, 3], vec![0.5, -1.0, 2.25, 3.0, f32::MIN_POSITIVE, 7.0]).unwrap();
        let mut buf = Vec::new();
        blob.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        assert_eq!(buf.len(), 4 + 4 + 8 + 24);
        assert_eq!(Blob::read(&mut buf.as_slice()).unwrap(), blob);
    }

    #[test]
    fn rejects_corruption() {
        let blob = Blob::new(vec![2], vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        blob.write(&mut buf).unwrap();
        assert!(Blob::read(&mut &buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(Blob::read(&mut buf.as_slice()).is_err());
        assert!(Blob::new(vec![3], vec![1.0]).is_err());
    }
}
