//! Little-endian binary container shared by classifier (`LIDF`) and embedder
//! (`LIDE`) model files.
//!
//! Layout: 4-byte magic, `u32` format version, then a model-specific body.
//! Strings are NUL-terminated UTF-8; matrices are `f32` row-major.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::features::{FeatureConfig, Vocab};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file is truncated")]
    TruncatedFile,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W) -> Self {
        Writer { inner }
    }

    pub fn header(&mut self, magic: [u8; 4]) -> io::Result<()> {
        self.inner.write_all(&magic)?;
        self.u32(FORMAT_VERSION)
    }

    pub fn u8(&mut self, v: u8) -> io::Result<()> {
        self.inner.write_all(&[v])
    }

    pub fn u32(&mut self, v: u32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn str(&mut self, s: &str) -> io::Result<()> {
        debug_assert!(!s.contains('\0'));
        self.inner.write_all(s.as_bytes())?;
        self.inner.write_all(&[0])
    }

    pub fn f32s(&mut self, xs: &[f32]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(xs.len().min(1 << 16) * 4);
        for chunk in xs.chunks(1 << 16) {
            buf.clear();
            for x in chunk {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            self.inner.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn feature_config(&mut self, c: &FeatureConfig) -> io::Result<()> {
        self.u32(c.minn)?;
        self.u32(c.maxn)?;
        self.u32(c.word_ngrams)?;
        self.u32(c.bucket)?;
        self.u32(c.min_count)
    }

    pub fn vocab(&mut self, v: &Vocab) -> io::Result<()> {
        self.u32(v.len() as u32)?;
        for w in v.words() {
            self.str(w)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub(crate) struct Reader<R: Read> {
    inner: R,
}

fn eof_as_truncated(e: io::Error) -> FormatError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FormatError::TruncatedFile
    } else {
        FormatError::Io(e)
    }
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R) -> Self {
        Reader { inner }
    }

    fn exact<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(eof_as_truncated)?;
        Ok(buf)
    }

    pub fn header(&mut self, magic: [u8; 4]) -> Result<(), FormatError> {
        let found = self.exact::<4>()?;
        if found != magic {
            return Err(FormatError::BadMagic { found, expected: magic });
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.exact::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.exact()?))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.exact()?))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let mut bytes = Vec::new();
        loop {
            let [b] = self.exact::<1>()?;
            if b == 0 {
                break;
            }
            bytes.push(b);
        }
        String::from_utf8(bytes).map_err(|e| FormatError::Corrupt(e.to_string()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 4 * n.min(1 << 16)];
        let mut left = n;
        while left > 0 {
            let take = left.min(1 << 16);
            let bytes = &mut buf[..4 * take];
            self.inner.read_exact(bytes).map_err(eof_as_truncated)?;
            out.extend(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            left -= take;
        }
        Ok(out)
    }

    pub fn feature_config(&mut self) -> Result<FeatureConfig, FormatError> {
        let cfg = FeatureConfig {
            minn: self.u32()?,
            maxn: self.u32()?,
            word_ngrams: self.u32()?,
            bucket: self.u32()?,
            min_count: self.u32()?,
        };
        cfg.validate()
            .map_err(|e| FormatError::Corrupt(e.to_string()))?;
        Ok(cfg)
    }

    pub fn vocab(&mut self, bucket: u32) -> Result<Vocab, FormatError> {
        let n = self.u32()? as usize;
        let words = (0..n).map(|_| self.str()).collect::<Result<Vec<_>, _>>()?;
        Ok(Vocab::from_words(words, bucket))
    }

    /// Succeeds only if the stream has no bytes left.
    pub fn expect_end(&mut self) -> Result<(), FormatError> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(FormatError::Corrupt("trailing bytes".into())),
        }
    }
}
