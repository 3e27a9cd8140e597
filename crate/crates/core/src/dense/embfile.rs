//! `EMB1` binary embedding files and their JSON-lines alternative.
//!
//! Binary layout: magic `EMB1`, u32 LE dimension, then until end of file
//! records of (u16 LE id length, UTF-8 id, dimension × f32 LE).

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::*;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f32>,
}

pub fn write_embeddings<'a>(mut w: impl Write, dim: usize, records: impl IntoIterator<Item = &'a EmbeddingRecord>) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(&mut w, count_u32(dim, "dimensions")?)?;
    for rec in records {
        if rec.vector.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: rec.vector.len() });
        }
        write_str(&mut w, &rec.id)?;
        for &x in &rec.vector {
            write_f32(&mut w, x)?;
        }
    }
    Ok(())
}

/// Returns the file's dimension and records in file order.
pub fn read_embeddings(mut r: impl Read) -> Result<(usize, Vec<EmbeddingRecord>)> {
    expect_magic(&mut r, MAGIC)?;
    let dim = read_u32(&mut r)? as usize;
    let mut records = Vec::new();
    while let Some(lo) = try_read_u8(&mut r)? {
        let hi = read_u8(&mut r)?;
        let len = u16::from_le_bytes([lo, hi]) as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id).map_err(|_| Error::Format(format!("truncated id in record {}", records.len())))?;
        let id = String::from_utf8(id).map_err(|e| Error::Format(format!("invalid UTF-8 id: {e}")))?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(read_f32(&mut r).map_err(|_| Error::Format(format!("truncated vector for `{id}`")))?);
        }
        records.push(EmbeddingRecord { id, vector });
    }
    Ok((dim, records))
}

pub fn write_embeddings_jsonl<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a EmbeddingRecord>) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Every line must carry a vector of the same length.
pub fn read_embeddings_jsonl(r: impl BufRead) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let mut records: Vec<EmbeddingRecord> = Vec::new();
    let mut dim = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::parse(format!("line {}", i + 1), e))?;
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(Error::DimensionMismatch { expected: d, actual: rec.vector.len() });
            }
            _ => {}
        }
        records.push(rec);
    }
    Ok((dim.unwrap_or(0), records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs() -> Vec<EmbeddingRecord> {
        vec![
            EmbeddingRecord { id: "d1#0".into(), vector: vec![1.0, -2.5, 0.125] },
            EmbeddingRecord { id: "dé#1".into(), vector: vec![f32::MIN_POSITIVE, 0.0, 3.0] },
        ]
    }

    #[test]
    fn binary_layout() {
        let mut bytes = Vec::new();
        write_embeddings(&mut bytes, 3, &recs()).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u16::from_le_bytes(bytes[8..10].try_into().unwrap()), 4);
        assert_eq!(&bytes[10..14], b"d1#0");
        assert_eq!(f32::from_le_bytes(bytes[14..18].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 8 + (2 + 4 + 12) + (2 + "dé#1".len() + 12));
        let (dim, back) = read_embeddings(bytes.as_slice()).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(back, recs());
    }

    #[test]
    fn truncated_and_mismatched() {
        let mut bytes = Vec::new();
        write_embeddings(&mut bytes, 3, &recs()).unwrap();
        assert!(read_embeddings(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_embeddings(&bytes[..9]).is_err());
        let bad = [EmbeddingRecord { id: "x".into(), vector: vec![1.0] }];
        assert!(write_embeddings(Vec::new(), 3, &bad).is_err());
        let (dim, empty) = read_embeddings(&bytes[..8]).unwrap();
        assert_eq!((dim, empty.len()), (3, 0));
    }

    #[test]
    fn jsonl_alternative() {
        let mut out = Vec::new();
        write_embeddings_jsonl(&mut out, &recs()).unwrap();
        let (dim, back) = read_embeddings_jsonl(out.as_slice()).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(back, recs());
        let bad = "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1]}\n";
        assert!(read_embeddings_jsonl(bad.as_bytes()).is_err());
    }
}
