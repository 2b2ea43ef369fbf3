//! Minimal binary container: little-endian primitives behind a
//! magic + version header. Floats are stored as raw bits, so parameter
//! round-trips are exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn string(&mut self, s: &str) {
        let bytes = s.as_bytes();
        self.u64(bytes.len() as u64);
        self.buf.extend_from_slice(bytes);
    }

    pub fn string_slice(&mut self, ss: &[String]) {
        self.u64(ss.len() as u64);
        for s in ss {
            self.string(s);
        }
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_file(self, path: &Path) -> Result<()> {
        fs::write(path, self.finish()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    path: std::path::PathBuf,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version; `supported` is the only accepted version.
    pub fn new(path: &Path, buf: &'a [u8], magic: &[u8; 4], supported: u32) -> Result<Self> {
        let mut r = Reader {
            path: path.to_path_buf(),
            buf,
            pos: 0,
        };
        let found_magic = r.take(4)?;
        if found_magic != magic {
            return Err(Error::CorruptFile {
                path: path.into(),
                message: "bad magic".into(),
            });
        }
        let version = r.u32()?;
        if version != supported {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported,
            });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptFile {
                path: self.path.clone(),
                message: format!("truncated at byte {}", self.pos),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n.min(self.buf.len() / 8 + 1));
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::CorruptFile {
            path: self.path.clone(),
            message: "invalid utf-8".into(),
        })
    }

    pub fn string_vec(&mut self) -> Result<Vec<String>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n.min(self.buf.len() + 1));
        for _ in 0..n {
            out.push(self.string()?);
        }
        Ok(out)
    }

    pub fn bool(&mut self) -> Result<bool> {
        Ok(self.u8()? != 0)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptFile {
                path: self.path.clone(),
                message: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

/// 64-bit FNV-1a running hash for content fingerprints.
#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf29ce484222325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn update_u64(&mut self, v: u64) {
        self.update(&v.to_le_bytes());
    }

    pub fn update_f64(&mut self, v: f64) {
        self.update_u64(v.to_bits());
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut w = Writer::new(b"TEST", 1);
        w.u8(7);
        w.u64(u64::MAX);
        w.f64(-0.0);
        w.f64(f64::MIN_POSITIVE);
        w.string("héllo");
        w.string_slice(&["a".into(), "".into()]);
        w.bool(true);
        let bytes = w.finish();

        let path = Path::new("mem");
        let mut r = Reader::new(path, &bytes, b"TEST", 1).unwrap();
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u64().unwrap(), u64::MAX);
        assert_eq!(r.f64().unwrap().to_bits(), (-0.0f64).to_bits());
        assert_eq!(r.f64().unwrap(), f64::MIN_POSITIVE);
        assert_eq!(r.string().unwrap(), "héllo");
        assert_eq!(r.string_vec().unwrap(), vec!["a".to_string(), String::new()]);
        assert!(r.bool().unwrap());
        r.expect_end().unwrap();
    }

    #[test]
    fn version_mismatch_names_versions() {
        let w = Writer::new(b"TEST", 9);
        let bytes = w.finish();
        let err = Reader::new(Path::new("mem"), &bytes, b"TEST", 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('9') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn truncation_detected() {
        let mut w = Writer::new(b"TEST", 1);
        w.u64(42);
        let mut bytes = w.finish();
        bytes.truncate(bytes.len() - 3);
        let mut r = Reader::new(Path::new("mem"), &bytes, b"TEST", 1).unwrap();
        assert!(r.u64().is_err());
    }

    #[test]
    fn fnv_distinguishes_inputs() {
        let mut a = Fnv64::new();
        a.update(b"abc");
        let mut b = Fnv64::new();
        b.update(b"abd");
        assert_ne!(a.finish(), b.finish());
    }
}
