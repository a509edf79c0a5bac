//! Binary checkpoint holding both towers.
//!
//! Layout (little-endian): magic `KERMITCK`, `u32` version, `u32` d,
//! `u32` |V|, `u32` max_len, `u8` pooling, `u8` mode, `u8` position kind,
//! `u32` attention layers; then for the query tower and the entity tower in
//! turn: token table, position table, segment table and, per layer, W_q,
//! W_k, W_v, W_o. Tables are row-major `f32`.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{EncoderConfig, EncoderModel, Pooling, PositionKind, SEGMENTS};
use super::sequence::SequenceMode;
use super::{AttentionLayer, EncoderError};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 8] = b"KERMITCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: SequenceMode,
    pub query: EncoderModel,
    pub entity: EncoderModel,
}

fn put_table(out: &mut Vec<u8>, m: &Matrix) {
    for &x in m.as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncoderError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EncoderError::Checkpoint("file is truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, EncoderError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn table(&mut self, rows: usize, cols: usize) -> Result<Matrix, EncoderError> {
        let raw = self.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

impl Checkpoint {
    pub fn new(mode: SequenceMode, query: EncoderModel, entity: EncoderModel) -> Result<Self, EncoderError> {
        if query.config() != entity.config() {
            return Err(EncoderError::Checkpoint("towers have different shapes".into()));
        }
        Ok(Self { mode, query, entity })
    }

    pub fn config(&self) -> &EncoderConfig {
        self.query.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [VERSION, c.dim as u32, c.vocab_size as u32, c.max_len as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&[c.pooling.code(), self.mode.code(), c.positions.code()]);
        out.extend_from_slice(&(c.layers as u32).to_le_bytes());
        for tower in [&self.query, &self.entity] {
            put_table(&mut out, &tower.token);
            put_table(&mut out, &tower.position);
            put_table(&mut out, &tower.segment);
            for l in &tower.layers {
                for m in [&l.wq, &l.wk, &l.wv, &l.wo] {
                    put_table(&mut out, m);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(EncoderError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(EncoderError::Checkpoint(format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        let vocab_size = r.u32()? as usize;
        let max_len = r.u32()? as usize;
        let bad = |what: &str| EncoderError::Checkpoint(format!("bad {what} code"));
        let pooling = Pooling::from_code(r.u8()?).ok_or_else(|| bad("pooling"))?;
        let mode = SequenceMode::from_code(r.u8()?).ok_or_else(|| bad("mode"))?;
        let positions = PositionKind::from_code(r.u8()?).ok_or_else(|| bad("position"))?;
        let layers = r.u32()? as usize;
        let config = EncoderConfig {
            vocab_size,
            dim,
            max_len,
            pooling,
            positions,
            layers,
        };
        let mut tower = || -> Result<EncoderModel, EncoderError> {
            let token = r.table(vocab_size, dim)?;
            let position = r.table(max_len, dim)?;
            let segment = r.table(SEGMENTS, dim)?;
            let mut ls = Vec::with_capacity(layers);
            for _ in 0..layers {
                ls.push(AttentionLayer {
                    wq: r.table(dim, dim)?,
                    wk: r.table(dim, dim)?,
                    wv: r.table(dim, dim)?,
                    wo: r.table(dim, dim)?,
                });
            }
            EncoderModel::from_parts(config, token, position, segment, ls)
        };
        let query = tower()?;
        let entity = tower()?;
        if r.at != bytes.len() {
            return Err(EncoderError::Checkpoint("trailing bytes after tables".into()));
        }
        Ok(Self { mode, query, entity })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| EncoderError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let bytes = std::fs::read(path).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn id(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
