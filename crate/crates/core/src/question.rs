//! Question embedding ingestion and the deterministic toy embedder.
//!
//! Real runs consume precomputed sentence vectors (one per question, the
//! "GHRQ" binary format). Tests and synthetic experiments use
//! [`toy_embed`], a bag-of-hashed-tokens embedder that is pure, platform
//! stable, and needs no external model.

use crate::params::fnv1a;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const GHRQ_MAGIC: &[u8; 4] = b"GHRQ";
const GHRQ_VERSION: u8 = 1;

/// Mixed into every token hash so toy vectors are stable by construction,
/// not by accident of the default hasher.
const TOY_HASH_SEED: u64 = 0x9e3779b97f4a7c15;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vector for {id:?} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("duplicate qa_id {0:?}")]
    DuplicateId(String),
    #[error("malformed embedding file: {0}")]
    MalformedFile(String),
    #[error("cannot embed an empty question")]
    EmptyQuestion,
    #[error("toy embedder needs dimension >= 8, got {0}")]
    DimensionTooSmall(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// Where a question vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Precomputed,
    ToyHash,
}

/// One question's embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionEmbedding {
    pub qa_id: String,
    pub vector: Vec<f32>,
    pub source: EmbeddingSource,
}

/// Deterministic test embedder: lowercase whitespace tokens, each hashed to
/// a pseudo-random unit direction, averaged, then L2-normalized. Identical
/// strings produce bit-identical vectors on every platform.
pub fn toy_embed(question: &str, d_q: usize) -> Result<Vec<f32>> {
    if d_q < 8 {
        return Err(EmbeddingError::DimensionTooSmall(d_q));
    }
    let lower = question.to_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(EmbeddingError::EmptyQuestion);
    }
    let mut acc = vec![0.0f32; d_q];
    for tok in tokens {
        let h = fnv1a(tok.as_bytes()) ^ TOY_HASH_SEED;
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let mut v = vec![0.0f32; d_q];
        let mut norm = 0.0f32;
        for x in v.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
            norm += *x * *x;
        }
        let norm = norm.sqrt().max(1e-12);
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x / norm;
        }
    }
    let mut norm = 0.0f32;
    for &x in &acc {
        norm += x * x;
    }
    let norm = norm.sqrt().max(1e-12);
    for x in acc.iter_mut() {
        *x /= norm;
    }
    Ok(acc)
}

/// Serializes qa_id → vector pairs into the "GHRQ" format.
pub fn encode_embeddings(entries: &[(String, Vec<f32>)], dim: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(GHRQ_MAGIC);
    out.push(GHRQ_VERSION);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (id, v) in entries {
        if v.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                id: id.clone(),
                got: v.len(),
                expected: dim,
            });
        }
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for &x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, entries: &[(String, Vec<f32>)], dim: usize) -> Result<()> {
    let bytes = encode_embeddings(entries, dim)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Loads a "GHRQ" file, validating the expected dimension and rejecting
/// duplicate ids. Row order in the file does not matter.
pub fn load_embeddings(
    path: &Path,
    expected_dim: usize,
) -> Result<HashMap<String, QuestionEmbedding>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_embeddings(&buf, expected_dim)
}

pub fn decode_embeddings(
    buf: &[u8],
    expected_dim: usize,
) -> Result<HashMap<String, QuestionEmbedding>> {
    let need = |pos: usize, n: usize| -> Result<()> {
        if pos + n > buf.len() {
            Err(EmbeddingError::MalformedFile(format!(
                "need {n} bytes at offset {pos}, file has {}",
                buf.len()
            )))
        } else {
            Ok(())
        }
    };
    need(0, 13)?;
    if &buf[..4] != GHRQ_MAGIC {
        return Err(EmbeddingError::MalformedFile("bad magic".into()));
    }
    if buf[4] != GHRQ_VERSION {
        return Err(EmbeddingError::MalformedFile(format!(
            "unsupported version {}",
            buf[4]
        )));
    }
    let count = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
    if dim != expected_dim {
        return Err(EmbeddingError::DimensionMismatch {
            id: "<file header>".into(),
            got: dim,
            expected: expected_dim,
        });
    }
    let mut pos = 13usize;
    let mut map = HashMap::with_capacity(count);
    for _ in 0..count {
        need(pos, 2)?;
        let id_len = u16::from_le_bytes(buf[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        need(pos, id_len)?;
        let id = String::from_utf8(buf[pos..pos + id_len].to_vec())
            .map_err(|e| EmbeddingError::MalformedFile(format!("bad id: {e}")))?;
        pos += id_len;
        need(pos, dim * 4)?;
        let mut v = Vec::with_capacity(dim);
        for i in 0..dim {
            v.push(f32::from_le_bytes(
                buf[pos + i * 4..pos + i * 4 + 4].try_into().unwrap(),
            ));
        }
        pos += dim * 4;
        if map
            .insert(
                id.clone(),
                QuestionEmbedding {
                    qa_id: id.clone(),
                    vector: v,
                    source: EmbeddingSource::Precomputed,
                },
            )
            .is_some()
        {
            return Err(EmbeddingError::DuplicateId(id));
        }
    }
    if pos != buf.len() {
        return Err(EmbeddingError::MalformedFile(format!(
            "{} trailing bytes",
            buf.len() - pos
        )));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_embed_is_deterministic() {
        let a = toy_embed("what did the person hold", 64).unwrap();
        let b = toy_embed("what did the person hold", 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn toy_embed_is_unit_norm() {
        for q in ["one", "what did the person hold", "a b c d e f g"] {
            let v = toy_embed(q, 32).unwrap();
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm {norm} for {q:?}");
        }
    }

    #[test]
    fn distinct_questions_separate() {
        let a = toy_embed("what did the person hold", 64).unwrap();
        let b = toy_embed("what did the person open", 64).unwrap();
        let cos: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(cos < 0.9999, "cosine {cos} too close to 1");
    }

    #[test]
    fn tokenization_is_case_and_spacing_insensitive() {
        let a = toy_embed("What  DID the\tperson hold", 64).unwrap();
        let b = toy_embed("what did the person hold", 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_question_rejected() {
        assert!(matches!(
            toy_embed("   ", 64),
            Err(EmbeddingError::EmptyQuestion)
        ));
        assert!(matches!(
            toy_embed("ok", 4),
            Err(EmbeddingError::DimensionTooSmall(4))
        ));
    }

    #[test]
    fn ghrq_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.ghrq");
        let entries = vec![
            ("qa-1".to_string(), toy_embed("question one", 16).unwrap()),
            ("qa-2".to_string(), toy_embed("question two", 16).unwrap()),
        ];
        write_embeddings(&path, &entries, 16).unwrap();
        let map = load_embeddings(&path, 16).unwrap();
        assert_eq!(map.len(), 2);
        for (id, v) in &entries {
            assert_eq!(&map[id].vector, v);
        }
    }

    #[test]
    fn shuffled_rows_load_identically() {
        let entries = vec![
            ("a".to_string(), vec![1.0f32; 8]),
            ("b".to_string(), vec![2.0f32; 8]),
            ("c".to_string(), vec![3.0f32; 8]),
        ];
        let mut shuffled = entries.clone();
        shuffled.swap(0, 2);
        let m1 = decode_embeddings(&encode_embeddings(&entries, 8).unwrap(), 8).unwrap();
        let m2 = decode_embeddings(&encode_embeddings(&shuffled, 8).unwrap(), 8).unwrap();
        assert_eq!(m1.len(), m2.len());
        for (k, v) in &m1 {
            assert_eq!(v.vector, m2[k].vector);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let entries = vec![("a".to_string(), vec![0.0f32; 512])];
        let bytes = encode_embeddings(&entries, 512).unwrap();
        assert!(matches!(
            decode_embeddings(&bytes, 768),
            Err(EmbeddingError::DimensionMismatch { got: 512, expected: 768, .. })
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let entries = vec![
            ("a".to_string(), vec![0.0f32; 8]),
            ("a".to_string(), vec![1.0f32; 8]),
        ];
        let bytes = encode_embeddings(&entries, 8).unwrap();
        assert!(matches!(
            decode_embeddings(&bytes, 8),
            Err(EmbeddingError::DuplicateId(_))
        ));
    }

    #[test]
    fn malformed_file_rejected() {
        assert!(matches!(
            decode_embeddings(b"GHRX\x01\x00\x00\x00\x00\x08\x00\x00\x00", 8),
            Err(EmbeddingError::MalformedFile(_))
        ));
        let good = encode_embeddings(&[("a".to_string(), vec![0.0f32; 8])], 8).unwrap();
        assert!(matches!(
            decode_embeddings(&good[..good.len() - 2], 8),
            Err(EmbeddingError::MalformedFile(_))
        ));
    }
}
