//! Flat binary parameter dumps.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "FLSCKPT\0"
//! version  u32      1
//! config   6 × u64  context, vocab, d_emb, heads, layers, d_ff
//! act      u8       0 = gelu, 1 = identity
//! seed     u64
//! vocab    u8 flags (bit0 present, bit1 unknown id), u32 length, bytes
//! count    u64      number of scalars that follow
//! params   count × f64, tensors in canonical order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig, ParameterSet};
use crate::train::CharVocab;

const MAGIC: &[u8; 8] = b"FLSCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub seed: u64,
    pub vocab: Option<CharVocab>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let cfg = &self.params.cfg;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [
            cfg.context,
            cfg.vocab,
            cfg.d_emb,
            cfg.heads,
            cfg.layers,
            cfg.d_ff,
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let act: u8 = match cfg.activation {
            Activation::Gelu => 0,
            Activation::Identity => 1,
        };
        w.write_all(&[act])?;
        w.write_all(&self.seed.to_le_bytes())?;
        match &self.vocab {
            Some(v) => {
                w.write_all(&[1 | (u8::from(v.has_unknown()) << 1)])?;
                w.write_all(&(v.symbols().len() as u32).to_le_bytes())?;
                w.write_all(v.symbols())?;
            }
            None => {
                w.write_all(&[0])?;
                w.write_all(&0u32.to_le_bytes())?;
            }
        }
        let tensors = self.params.tensors();
        let count: usize = tensors.iter().map(|(_, m)| m.len()).sum();
        w.write_all(&(count as u64).to_le_bytes())?;
        for (_, m) in tensors {
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = usize::try_from(read_u64(&mut r)?)
                .map_err(|_| Error::Checkpoint("dimension overflow".into()))?;
        }
        let activation = match read_u8(&mut r)? {
            0 => Activation::Gelu,
            1 => Activation::Identity,
            other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        };
        let cfg = ModelConfig {
            context: dims[0],
            vocab: dims[1],
            d_emb: dims[2],
            heads: dims[3],
            layers: dims[4],
            d_ff: dims[5],
            activation,
        };
        cfg.validate()?;
        let seed = read_u64(&mut r)?;
        let flags = read_u8(&mut r)?;
        let len = read_u32(&mut r)? as usize;
        let mut symbols = vec![0u8; len];
        r.read_exact(&mut symbols).map_err(truncated)?;
        let vocab = if flags & 1 == 1 {
            let v = CharVocab::from_parts(symbols, flags & 2 == 2)?;
            if v.len() != cfg.vocab {
                return Err(Error::Checkpoint(format!(
                    "vocabulary has {} entries but model expects {}",
                    v.len(),
                    cfg.vocab
                )));
            }
            Some(v)
        } else {
            None
        };

        let count = read_u64(&mut r)? as usize;
        if count != cfg.parameter_count() {
            return Err(Error::Checkpoint(format!(
                "{count} scalars stored, config needs {}",
                cfg.parameter_count()
            )));
        }
        let mut params = ParameterSet::init(&cfg, 0);
        let mut buf = [0u8; 8];
        for (_, m) in params.tensors_mut() {
            for v in m.data_mut() {
                r.read_exact(&mut buf).map_err(truncated)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(Self {
            params,
            seed,
            vocab,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Checkpoint::read_from(&b"nonsense"[..]).is_err());
        let cfg = ModelConfig::new(4, 3, 4, 2, 1).unwrap();
        let ck = Checkpoint {
            params: ParameterSet::init(&cfg, 1),
            seed: 1,
            vocab: Some(CharVocab::from_text(b"abc", 8).unwrap()),
        };
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            Checkpoint::read_from(&bytes[..]),
            Err(Error::Checkpoint(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip(seed in any::<u64>(), heads in 1usize..3, layers in 0usize..3, with_vocab in any::<bool>()) {
            let cfg = ModelConfig::new(6, 5, 2 * heads, heads, layers).unwrap();
            let vocab = with_vocab.then(|| CharVocab::from_text(b"abcde", 5).unwrap());
            let ck = Checkpoint { params: ParameterSet::init(&cfg, seed), seed, vocab };
            let mut bytes = Vec::new();
            ck.write_to(&mut bytes).unwrap();
            prop_assert_eq!(Checkpoint::read_from(&bytes[..]).unwrap(), ck);
        }
    }
}
