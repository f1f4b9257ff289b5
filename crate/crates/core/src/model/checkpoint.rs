// SPDX-License-Identifier: MIT OR Apache-2.0

//! `SSV1` checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "SSV1"
//! version      u32      1
//! n_layers     u32
//! d_model      u32
//! n_heads      u32
//! vocab_size   u32
//! max_seq_len  u32
//! seed         u64
//! frozen       u8
//! n_vocab      u32      0, or vocab_size when a vocabulary is embedded
//! vocab        n_vocab x (u32 byte length, UTF-8 bytes)
//! tensors      float32, row-major, in `Params` order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSV1";
const VERSION: u32 = 1;

/// A model plus the vocabulary it was trained with, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Option<Vec<String>>,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model, vocab: Option<&[String]>) -> Result<()> {
    let cfg = model.config();
    if let Some(v) = vocab {
        if v.len() != cfg.vocab_size {
            return Err(Error::Dimension {
                expected: cfg.vocab_size,
                got: v.len(),
            });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for dim in [cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.vocab_size, cfg.max_seq_len] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    w.write_all(&cfg.seed.to_le_bytes())?;
    w.write_all(&[model.is_frozen() as u8])?;
    let vocab = vocab.unwrap_or(&[]);
    w.write_all(&(vocab.len() as u32).to_le_bytes())?;
    for token in vocab {
        w.write_all(&(token.len() as u32).to_le_bytes())?;
        w.write_all(token.as_bytes())?;
    }
    for tensor in model.params().tensors() {
        for v in tensor {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(&mut r)? as usize;
    }
    let mut seed = [0u8; 8];
    read_exact(&mut r, &mut seed)?;
    let config = ModelConfig {
        n_layers: dims[0],
        d_model: dims[1],
        n_heads: dims[2],
        vocab_size: dims[3],
        max_seq_len: dims[4],
        seed: u64::from_le_bytes(seed),
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut frozen = [0u8; 1];
    read_exact(&mut r, &mut frozen)?;

    let n_vocab = read_u32(&mut r)? as usize;
    if n_vocab != 0 && n_vocab != config.vocab_size {
        return Err(Error::Format(format!(
            "embedded vocabulary has {n_vocab} entries, expected {}",
            config.vocab_size
        )));
    }
    let mut vocab = Vec::with_capacity(n_vocab);
    for _ in 0..n_vocab {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        read_exact(&mut r, &mut buf)?;
        vocab.push(String::from_utf8(buf).map_err(|_| Error::Format("vocabulary entry is not UTF-8".into()))?);
    }

    let mut params = Params::zeros(&config);
    let mut word = [0u8; 4];
    for tensor in params.tensors_mut() {
        for v in tensor.iter_mut() {
            read_exact(&mut r, &mut word)?;
            *v = f32::from_le_bytes(word);
        }
    }
    if r.read(&mut word)? != 0 {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    Ok(Checkpoint {
        model: Model::from_parts(config, params, frozen[0] != 0)?,
        vocab: (n_vocab > 0).then_some(vocab),
    })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("checkpoint is truncated".into()),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::init(ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            vocab_size: 6,
            max_seq_len: 5,
            seed: 21,
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ssv");
        let mut m = model();
        m.freeze();
        let vocab: Vec<String> = ["<pad>", "<bos>", "<eos>", "<unk>", "héllo", "."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        save_checkpoint(&path, &m, Some(&vocab)).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.model, m);
        assert_eq!(loaded.model.checksum(), m.checksum());
        assert_eq!(loaded.vocab.as_deref(), Some(vocab.as_slice()));

        let again = dir.path().join("m2.ssv");
        save_checkpoint(&again, &loaded.model, loaded.vocab.as_deref()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ssv");
        save_checkpoint(&path, &model(), None).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));

        assert!(matches!(
            load_checkpoint(dir.path().join("absent.ssv")),
            Err(Error::MissingFile(_))
        ));
    }
}
