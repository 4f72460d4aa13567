//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "PHGNCKPT"
//! version      u32
//! vocab hash   64 bytes ASCII hex (SHA-256 of the vocabulary file text)
//! config len   u32, then that many bytes of ModelConfig as JSON
//! n arrays     u32
//! per array    name len u16, UTF-8 name, rows u32, cols u32,
//!              rows*cols f64 in row-major order
//! checksum     32 bytes SHA-256 of every preceding byte
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{io_err, DataError};
use crate::chem::Vocabulary;
use crate::generator::{ModelConfig, ModelParams};
use crate::nn::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PHGNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(params: &ModelParams, vocab: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(vocab.hash().as_bytes());
    let cfg = serde_json::to_vec(params.config()).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(params.names().len() as u32).to_le_bytes());
    for (name, t) in params.names().iter().zip(params.tensors()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.buf.len() - self.pos < n {
            return Err(DataError::CorruptFile("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn params_from_bytes(bytes: &[u8], vocab: &Vocabulary) -> Result<ModelParams, DataError> {
    let corrupt = |m: &str| DataError::CorruptFile(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(DataError::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    if bytes.len() < 12 + 32 {
        return Err(corrupt("file too short"));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let found = String::from_utf8(r.take(64)?.to_vec()).map_err(|_| corrupt("vocabulary hash is not text"))?;
    let expected = vocab.hash();
    if found != expected {
        return Err(DataError::VocabularyMismatch { expected, found });
    }
    let n = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| DataError::CorruptFile(format!("config: {e}")))?;
    let count = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| corrupt("array name is not UTF-8"))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("array too large"))?;
        if n.saturating_mul(8) > body.len() {
            return Err(corrupt("array larger than file"));
        }
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        arrays.push((name, Tensor::matrix(rows, cols, data)));
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes before checksum"));
    }
    ModelParams::from_named(&config, arrays).map_err(DataError::CorruptFile)
}

pub fn save_checkpoint(params: &ModelParams, vocab: &Vocabulary, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, checkpoint_bytes(params, vocab)).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<ModelParams, DataError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    params_from_bytes(&bytes, vocab)
}
