//! Binary checkpoints.
//!
//! Layout, all integers `u32` little-endian and all scalars `f64`
//! little-endian, matrices row-major:
//!
//! ```text
//! "GCEL1" variant_tag m n
//! for block in i, f, o, c: present W (n×m), U (n×n), b (n)
//! vocab dim                 (0 0 when there is no embedding)
//! embedding (vocab×dim)
//! K head.W (K×n) head.b (K)
//! ```
//!
//! A file that ends after the cell section is a bare-cell checkpoint.

use std::path::Path;

use crate::cells::{GateVariant, LstmParams};
use crate::error::{Error, Result};
use crate::harness::Model;
use crate::layers::{DenseHead, EmbeddingTable};
use crate::optim::ParamSet;

pub const MAGIC: &[u8; 5] = b"GCEL1";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v =
        u32::try_from(v).map_err(|_| Error::Checkpoint(format!("dimension {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated at byte {} while reading {what}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, dst: &mut [f64], what: &str) -> Result<()> {
        let len = dst
            .len()
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint(format!("{what} too large")))?;
        let b = self.take(len, what)?;
        for (d, c) in dst.iter_mut().zip(b.chunks_exact(8)) {
            *d = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            if !d.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite value in {what}")));
            }
        }
        Ok(())
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn write_cell(out: &mut Vec<u8>, p: &LstmParams) -> Result<()> {
    out.extend_from_slice(MAGIC);
    put_u32(out, p.variant().tag() as usize)?;
    put_u32(out, p.input_dim())?;
    put_u32(out, p.hidden())?;
    for (_, t) in p.tensors() {
        put_f64s(out, t);
    }
    Ok(())
}

fn read_cell(r: &mut Reader<'_>) -> Result<LstmParams> {
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let tag = r.u32("variant tag")?;
    let variant = GateVariant::from_tag(tag as u32)
        .ok_or_else(|| Error::Checkpoint(format!("unknown variant tag {tag}")))?;
    let m = r.u32("m")?;
    let n = r.u32("n")?;
    if m == 0 || n == 0 {
        return Err(Error::Checkpoint(format!("zero dimension m={m} n={n}")));
    }
    let remaining = r.bytes.len() - r.pos;
    let need = crate::cells::param_count(variant, m, n)?;
    if need.saturating_mul(8) > remaining {
        return Err(Error::Checkpoint(format!(
            "cell needs {need} scalars but only {remaining} bytes remain"
        )));
    }
    let mut p = LstmParams::zeros(variant, m, n);
    for (name, t) in p.tensors_mut() {
        r.f64s(t, name)?;
    }
    Ok(p)
}

pub fn cell_to_bytes(p: &LstmParams) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_cell(&mut out, p)?;
    Ok(out)
}

pub fn cell_from_bytes(bytes: &[u8]) -> Result<LstmParams> {
    let mut r = Reader { bytes, pos: 0 };
    let p = read_cell(&mut r)?;
    if !r.at_end() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(p)
}

pub fn model_to_bytes(model: &Model) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = Vec::new();
    write_cell(&mut out, &model.lstm)?;
    match &model.embedding {
        Some(e) => {
            put_u32(&mut out, e.vocab())?;
            put_u32(&mut out, e.dim())?;
            put_f64s(&mut out, e.table.as_slice());
        }
        None => {
            put_u32(&mut out, 0)?;
            put_u32(&mut out, 0)?;
        }
    }
    put_u32(&mut out, model.head.classes())?;
    put_f64s(&mut out, model.head.w.as_slice());
    put_f64s(&mut out, model.head.b.as_slice());
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    let lstm = read_cell(&mut r)?;
    let vocab = r.u32("embedding vocab")?;
    let dim = r.u32("embedding dim")?;
    let embedding = match (vocab, dim) {
        (0, 0) => None,
        (v, d) if v > 0 && d > 0 => {
            let mut e = EmbeddingTable::zeros(v, d);
            r.f64s(e.table.as_mut_slice(), "embedding")?;
            Some(e)
        }
        (v, d) => return Err(Error::Checkpoint(format!("bad embedding shape {v}×{d}"))),
    };
    let k = r.u32("head classes")?;
    if k == 0 {
        return Err(Error::Checkpoint("head with zero classes".into()));
    }
    let mut head = DenseHead::zeros(k, lstm.hidden());
    r.f64s(head.w.as_mut_slice(), "head.W")?;
    r.f64s(head.b.as_mut_slice(), "head.b")?;
    if !r.at_end() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let model = Model {
        embedding,
        lstm,
        head,
    };
    model
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::init_params;
    use crate::harness::ModelInput;
    use crate::linalg::Rng;

    #[test]
    fn header_layout() {
        let p = LstmParams::zeros(GateVariant::NoInputNoBias, 3, 2);
        let bytes = cell_to_bytes(&p).unwrap();
        assert_eq!(&bytes[..5], b"GCEL1");
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &3u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &2u32.to_le_bytes());
        let scalars = crate::cells::param_count(GateVariant::NoInputNoBias, 3, 2).unwrap();
        assert_eq!(bytes.len(), 17 + 8 * scalars);
    }

    #[test]
    fn cell_round_trip_every_variant() {
        for v in GateVariant::ALL {
            let (p, _) = init_params(v, 4, 3, &mut Rng::new(5), 1.0).unwrap();
            assert_eq!(cell_from_bytes(&cell_to_bytes(&p).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn model_round_trip() {
        for input in [
            ModelInput::Dense { dim: 3 },
            ModelInput::Tokens { vocab: 7, dim: 2 },
        ] {
            let (m, _) = Model::new(GateVariant::NoInput, input, 4, 3, 0.0, &Rng::new(8)).unwrap();
            let bytes = model_to_bytes(&m).unwrap();
            assert_eq!(model_from_bytes(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let (m, _) = Model::new(
            GateVariant::Vanilla,
            ModelInput::Dense { dim: 2 },
            3,
            2,
            0.0,
            &Rng::new(1),
        )
        .unwrap();
        let bytes = model_to_bytes(&m).unwrap();
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(model_from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(model_from_bytes(&bad).is_err());
        let mut tag = bytes;
        tag[5] = 9;
        assert!(model_from_bytes(&tag)
            .unwrap_err()
            .to_string()
            .contains("variant tag"));
    }
}
