//! Dataset files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "FPDS"
//! hlen     u32      length of the JSON manifest in bytes
//! manifest hlen bytes of UTF-8 JSON (schema version, system config,
//!          environment hash, seed, record count, per-record label and
//!          position table)
//! blob     record_count * n_subcarriers * n_rx * n_tx complex values,
//!          each an interleaved (re, im) pair of f32, row-major
//!          [packet][subcarrier][rx][tx]
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::{BatchManifest, ChannelError, CsiBatch, CsiSample, EnvironmentTag, Label, SystemConfig};

pub const DATASET_MAGIC: &[u8; 4] = b"FPDS";
pub const DATASET_SCHEMA_VERSION: u32 = 2;

#[derive(Serialize, Deserialize)]
struct FileManifest {
    schema_version: u32,
    system: SystemConfig,
    env_hash: String,
    seed: u64,
    n_zones: usize,
    record_count: usize,
    records: Vec<RecordMeta>,
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    label: Label,
    tag: EnvironmentTag,
    snr_db: f64,
    position: [f64; 2],
}

pub fn encode_dataset(batch: &CsiBatch) -> Result<Vec<u8>, ChannelError> {
    batch.validate()?;
    let manifest = FileManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        system: batch.sys.clone(),
        env_hash: batch.manifest.env_hash.clone(),
        seed: batch.manifest.seed,
        n_zones: batch.manifest.n_zones,
        record_count: batch.len(),
        records: batch
            .samples
            .iter()
            .map(|s| RecordMeta { label: s.label, tag: s.tag, snr_db: s.snr_db, position: s.position })
            .collect(),
    };
    let header = serde_json::to_vec(&manifest)?;
    let per = batch.sys.n_valid_subcarriers * batch.sys.n_rx * batch.sys.n_tx;
    let mut out = Vec::with_capacity(8 + header.len() + batch.len() * per * 8);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for s in &batch.samples {
        for c in &s.h {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<CsiBatch, ChannelError> {
    if bytes.len() < 8 || &bytes[..4] != DATASET_MAGIC {
        return Err(ChannelError::Format("missing FPDS magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if hlen > body.len() {
        return Err(ChannelError::Truncated { section: "manifest", expected: hlen, found: body.len() });
    }
    let manifest: FileManifest = serde_json::from_slice(&body[..hlen])?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(ChannelError::VersionMismatch {
            found: manifest.schema_version,
            expected: DATASET_SCHEMA_VERSION,
        });
    }
    if manifest.records.len() != manifest.record_count {
        return Err(ChannelError::Format(format!(
            "record_count {} disagrees with {} label entries",
            manifest.record_count,
            manifest.records.len()
        )));
    }
    manifest.system.validate()?;
    let sys = manifest.system;
    let per = sys.n_valid_subcarriers * sys.n_rx * sys.n_tx;
    let blob = &body[hlen..];
    let expected = manifest.record_count * per * 8;
    if blob.len() < expected {
        return Err(ChannelError::Truncated { section: "blob", expected, found: blob.len() });
    }
    if blob.len() > expected {
        return Err(ChannelError::Format(format!(
            "blob holds {} bytes but the manifest describes {expected}",
            blob.len()
        )));
    }

    let samples = manifest
        .records
        .iter()
        .zip(blob.chunks_exact(per * 8))
        .map(|(meta, chunk)| {
            let h = chunk
                .chunks_exact(8)
                .map(|c| {
                    Complex32::new(
                        f32::from_le_bytes(c[..4].try_into().unwrap()),
                        f32::from_le_bytes(c[4..].try_into().unwrap()),
                    )
                })
                .collect();
            CsiSample {
                h,
                n_rx: sys.n_rx,
                n_tx: sys.n_tx,
                label: meta.label,
                tag: meta.tag,
                snr_db: meta.snr_db,
                position: meta.position,
            }
        })
        .collect();
    let batch = CsiBatch {
        sys,
        manifest: BatchManifest { env_hash: manifest.env_hash, seed: manifest.seed, n_zones: manifest.n_zones },
        samples,
    };
    batch.validate()?;
    Ok(batch)
}

pub fn write_dataset(batch: &CsiBatch, path: impl AsRef<Path>) -> Result<(), ChannelError> {
    fs::write(path, encode_dataset(batch)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<CsiBatch, ChannelError> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_environment, sample_all_zones};

    fn batch() -> CsiBatch {
        let sys = SystemConfig::default();
        let env = generate_environment(&sys, 4, 6, 3).unwrap();
        sample_all_zones(&sys, &env, 3, 2, 25.0, 4).unwrap()
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fpds");
        let b = batch();
        write_dataset(&b, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), b);
    }

    #[test]
    fn empty_batch_round_trips() {
        let mut b = batch();
        b.samples.clear();
        let back = decode_dataset(&encode_dataset(&b).unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.sys, b.sys);
    }

    #[test]
    fn corrupted_length_field_is_reported() {
        let mut bytes = encode_dataset(&batch()).unwrap();
        bytes[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_dataset(&bytes), Err(ChannelError::Truncated { section: "manifest", .. })));
    }

    #[test]
    fn truncated_blob_is_reported() {
        let bytes = encode_dataset(&batch()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_dataset(cut), Err(ChannelError::Truncated { section: "blob", .. })));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let bytes = encode_dataset(&batch()).unwrap();
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + hlen]).unwrap();
        let header = header.replace("\"schema_version\":2", "\"schema_version\":9");
        let mut patched = bytes[..8].to_vec();
        patched.extend_from_slice(header.as_bytes());
        patched.extend_from_slice(&bytes[8 + hlen..]);
        assert!(matches!(decode_dataset(&patched), Err(ChannelError::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_dataset(b"nope").is_err());
        assert!(decode_dataset(b"FPDS\x02\0\0\0{}").is_err());
    }
}
