//! Embedding sidecar file codecs.
//!
//! Two interchangeable containers hold the per-image visual embeddings:
//!
//! * `text`: one record per line, the image id followed by 768 decimal
//!   floats, whitespace-separated.
//! * `binary`: a little-endian container with magic `PCEB`, a u32 record count,
//!   a u32 dimension, then per record a u32 id length, the UTF-8 id bytes,
//!   and `dim` f64 values.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, ImageRecord};

/// Expected length of the visual embedding vectors.
pub const CLIP_DIM: usize = 768;
/// Length of the compressed embedding used inside prompts.
pub const PCA_DIM: usize = 8;

const BINARY_MAGIC: &[u8; 4] = b"PCEB";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    #[default]
    Text,
    Binary,
}

impl FromStr for EmbeddingFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(EmbeddingFormat::Text),
            "binary" | "bin" => Ok(EmbeddingFormat::Binary),
            other => Err(format!("unknown embedding format '{other}'")),
        }
    }
}

/// Reads an embedding table into an id-keyed map.
pub fn read_embeddings<R: Read>(
    mut input: R,
    format: EmbeddingFormat,
) -> Result<BTreeMap<String, ImageRecord>, DataError> {
    match format {
        EmbeddingFormat::Text => {
            let mut text = String::new();
            input.read_to_string(&mut text)?;
            read_text(&text)
        }
        EmbeddingFormat::Binary => read_binary(&mut input),
    }
}

fn read_text(text: &str) -> Result<BTreeMap<String, ImageRecord>, DataError> {
    let mut map = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let image_id = parts
            .next()
            .ok_or_else(|| DataError::Ingestion(format!("line {}: empty record", line_no + 1)))?
            .to_string();
        let values: Result<Vec<f64>, _> = parts.map(|p| p.parse::<f64>()).collect();
        let values = values.map_err(|e| {
            DataError::Ingestion(format!("line {}: bad float: {e}", line_no + 1))
        })?;
        if values.len() != CLIP_DIM {
            return Err(DataError::Ingestion(format!(
                "line {}: expected {CLIP_DIM} floats for '{image_id}', got {}",
                line_no + 1,
                values.len()
            )));
        }
        if map.contains_key(&image_id) {
            return Err(DataError::Ingestion(format!(
                "line {}: duplicate image id '{image_id}'",
                line_no + 1
            )));
        }
        map.insert(image_id.clone(), ImageRecord::new(image_id, values)?);
    }
    Ok(map)
}

fn read_binary<R: Read>(input: &mut R) -> Result<BTreeMap<String, ImageRecord>, DataError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(DataError::Ingestion(
            "bad magic bytes in binary embedding container".to_string(),
        ));
    }
    let count = read_u32(input)? as usize;
    let dim = read_u32(input)? as usize;
    if dim != CLIP_DIM {
        return Err(DataError::Ingestion(format!(
            "binary container declares dimension {dim}, expected {CLIP_DIM}"
        )));
    }
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let id_len = read_u32(input)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        input.read_exact(&mut id_bytes)?;
        let image_id = String::from_utf8(id_bytes)
            .map_err(|e| DataError::Ingestion(format!("invalid UTF-8 image id: {e}")))?;
        let mut values = Vec::with_capacity(dim);
        let mut buf = [0u8; 8];
        for _ in 0..dim {
            input.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        if map.contains_key(&image_id) {
            return Err(DataError::Ingestion(format!(
                "duplicate image id '{image_id}' in binary container"
            )));
        }
        map.insert(image_id.clone(), ImageRecord::new(image_id, values)?);
    }
    Ok(map)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Writes an embedding table in the requested container format.
pub fn write_embeddings<W: Write>(
    mut output: W,
    records: &BTreeMap<String, ImageRecord>,
    format: EmbeddingFormat,
) -> Result<(), DataError> {
    match format {
        EmbeddingFormat::Text => {
            for record in records.values() {
                let mut line = record.image_id.clone();
                for value in &record.clip_embedding {
                    // 17 significant digits round-trips every f64 exactly.
                    line.push(' ');
                    line.push_str(&format!("{value:.17e}"));
                }
                line.push('\n');
                output.write_all(line.as_bytes())?;
            }
        }
        EmbeddingFormat::Binary => {
            output.write_all(BINARY_MAGIC)?;
            output.write_all(&(records.len() as u32).to_le_bytes())?;
            output.write_all(&(CLIP_DIM as u32).to_le_bytes())?;
            for record in records.values() {
                let id_bytes = record.image_id.as_bytes();
                output.write_all(&(id_bytes.len() as u32).to_le_bytes())?;
                output.write_all(id_bytes)?;
                for value in &record.clip_embedding {
                    output.write_all(&value.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> BTreeMap<String, ImageRecord> {
        let mut map = BTreeMap::new();
        for id in ["img_a", "img_b"] {
            let values: Vec<f64> = (0..CLIP_DIM)
                .map(|i| (i as f64 * 0.01).sin() + if id == "img_a" { 0.0 } else { 1.0 })
                .collect();
            map.insert(id.to_string(), ImageRecord::new(id, values).unwrap());
        }
        map
    }

    #[test]
    fn text_round_trip_is_exact() {
        let records = sample_records();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &records, EmbeddingFormat::Text).unwrap();
        let back = read_embeddings(buf.as_slice(), EmbeddingFormat::Text).unwrap();
        assert_eq!(back.len(), records.len());
        for (id, record) in &records {
            assert_eq!(back[id].clip_embedding, record.clip_embedding);
        }
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let records = sample_records();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &records, EmbeddingFormat::Binary).unwrap();
        let back = read_embeddings(buf.as_slice(), EmbeddingFormat::Binary).unwrap();
        assert_eq!(back.len(), records.len());
        for (id, record) in &records {
            assert_eq!(back[id].clip_embedding, record.clip_embedding);
        }
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let err = read_embeddings("img_a 1.0 2.0 3.0\n".as_bytes(), EmbeddingFormat::Text)
            .unwrap_err();
        assert!(err.to_string().contains("768"));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = read_embeddings(&b"NOPE"[..], EmbeddingFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
