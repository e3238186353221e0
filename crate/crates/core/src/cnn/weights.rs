//! Binary weight files.
//!
//! Layout, all integers `u32` and all values `f32`, little-endian:
//!
//! ```text
//! "VXCNNW01"                      8-byte file magic
//! n                               number of convolution records
//! per record:
//!   "CONV"                        4-byte record magic
//!   out, in, kz, ky, kx
//!   out·in·kz·ky·kx weights       [out][in][kz][ky][kx], kx fastest
//!   out biases
//! ```

use std::io::{Read, Write};
use std::path::Path;

use num_traits::Float;

use super::{ConvParams, Network, NetworkSpec};
use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 8] = b"VXCNNW01";
const RECORD_MAGIC: &[u8; 4] = b"CONV";

fn fmt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_weights<T: Float + Send + Sync>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHT_MAGIC);
    buf.extend_from_slice(&(net.params.len() as u32).to_le_bytes());
    for p in &net.params {
        buf.extend_from_slice(RECORD_MAGIC);
        let [kx, ky, kz] = p.kernel;
        for v in [p.out_channels, p.in_channels, kz, ky, kx] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for w in p.weights.iter().chain(&p.bias) {
            buf.extend_from_slice(&w.to_f32().unwrap().to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(fmt_err(self.path, "file is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32s<T: Float>(&mut self, n: usize) -> Result<Vec<T>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| T::from(f32::from_le_bytes(c.try_into().unwrap())).unwrap())
            .collect())
    }
}

/// Load weights for `spec`; every record must match the corresponding
/// convolution of the spec.
pub fn read_weights<T: Float + Send + Sync>(spec: NetworkSpec, path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, pos: 0, path };
    if c.take(8)? != WEIGHT_MAGIC {
        return Err(fmt_err(path, "not a weight file (bad magic)"));
    }
    let n = c.u32()?;
    let mut params = Vec::with_capacity(n);
    for k in 0..n {
        if c.take(4)? != RECORD_MAGIC {
            return Err(fmt_err(path, format!("record {k}: bad record magic")));
        }
        let (out, inp, kz, ky, kx) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
        let count = out
            .checked_mul(inp)
            .and_then(|v| v.checked_mul(kz * ky * kx))
            .ok_or_else(|| fmt_err(path, format!("record {k}: dimensions overflow")))?;
        let weights = c.f32s(count)?;
        let bias = c.f32s(out)?;
        params.push(ConvParams {
            in_channels: inp,
            out_channels: out,
            kernel: [kx, ky, kz],
            weights,
            bias,
        });
    }
    if c.pos != bytes.len() {
        return Err(fmt_err(path, "trailing bytes after the last record"));
    }
    let net = Network { spec, params };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let net = Network::<f32>::random(NetworkSpec::tiny(), 3).unwrap();
        write_weights(&net, &path).unwrap();
        let back: Network<f32> = read_weights(NetworkSpec::tiny(), &path).unwrap();
        assert_eq!(back, net);
        let size = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(size, 12 + 5 * 24 + 4 * NetworkSpec::tiny().parameter_count().unwrap());
    }

    #[test]
    fn rejects_mismatch_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let net = Network::<f32>::random(NetworkSpec::tiny(), 3).unwrap();
        write_weights(&net, &path).unwrap();
        assert!(read_weights::<f32>(NetworkSpec::scaled(), &path).is_err());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_weights::<f32>(NetworkSpec::tiny(), &path).is_err());
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(read_weights::<f32>(NetworkSpec::tiny(), &path).is_err());
    }
}
