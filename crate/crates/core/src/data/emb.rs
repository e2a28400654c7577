//! The EMB1 binary embedding format.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | ASCII `EMB1`                            |
//! | 4      | 4    | u32 version (1)                         |
//! | 8      | 4    | u32 dim                                 |
//! | 12     | 8    | u64 record count                        |
//! | 20     | ...  | records: u32 label, then `dim` x f32 LE |
//!
//! Label `0xFFFFFFFF` marks an out-of-scope record. Intent names live in a
//! JSON sidecar `<file>.labels.json` mapping index to name.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Label, LabelMap};
use crate::error::{Error, Result};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_VERSION: u32 = 1;
pub const OOS_SENTINEL: u32 = u32::MAX;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbRecord {
    pub label: Label,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbFile {
    pub dim: usize,
    pub records: Vec<EmbRecord>,
    pub labels: LabelMap,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels.json");
    PathBuf::from(s)
}

/// Serializes the records (not the sidecar).
pub fn encode_emb(dim: usize, records: &[EmbRecord]) -> Result<Vec<u8>> {
    let dim32 = u32::try_from(dim).map_err(|_| Error::InvalidData(format!("dim {dim} too large")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * (4 + 4 * dim));
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (i, r) in records.iter().enumerate() {
        if r.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.values.len(),
                context: "EMB1 record",
            });
        }
        if r.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("EMB1 record {i}")));
        }
        let label = match r.label {
            Label::Oos => OOS_SENTINEL,
            Label::InScope(l) => u32::try_from(l)
                .ok()
                .filter(|&l| l != OOS_SENTINEL)
                .ok_or_else(|| Error::InvalidData(format!("label {l} not encodable")))?,
        };
        out.extend_from_slice(&label.to_le_bytes());
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

/// Parses an EMB1 byte stream into `(dim, records)`.
pub fn decode_emb(bytes: &[u8]) -> Result<(usize, Vec<EmbRecord>)> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("EMB1 header".into()));
    }
    if &bytes[..4] != EMB_MAGIC {
        if &bytes[..3] == b"EMB" {
            return Err(Error::UnsupportedVersion {
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
                expected: "EMB1".into(),
            });
        }
        return Err(Error::BadMagic("EMB1 stream".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated("EMB1 header".into()));
    }
    let version = le_u32(&bytes[4..8]);
    if version != EMB_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version.to_string(),
            expected: EMB_VERSION.to_string(),
        });
    }
    let dim = le_u32(&bytes[8..12]) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let record_len = 4 + 4 * dim;
    let body = &bytes[HEADER_LEN..];
    let expected = (count as u128) * (record_len as u128);
    if (body.len() as u128) < expected {
        return Err(Error::Truncated(format!(
            "EMB1 declares {count} records of {record_len} bytes but has {} body bytes",
            body.len()
        )));
    }
    if (body.len() as u128) > expected {
        return Err(Error::InvalidData("trailing bytes after EMB1 records".into()));
    }
    let records = body
        .chunks_exact(record_len)
        .enumerate()
        .map(|(i, chunk)| {
            let raw = le_u32(&chunk[..4]);
            let label = if raw == OOS_SENTINEL {
                Label::Oos
            } else {
                Label::InScope(raw as usize)
            };
            let values: Vec<f32> = chunk[4..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("EMB1 record {i}")));
            }
            Ok(EmbRecord { label, values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dim, records))
}

/// Writes the binary file and its label sidecar.
pub fn write_emb(path: &Path, file: &EmbFile) -> Result<()> {
    for r in &file.records {
        if let Label::InScope(l) = r.label {
            if l >= file.labels.len() {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    classes: file.labels.len(),
                });
            }
        }
    }
    let bytes = encode_emb(file.dim, &file.records)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    // Keys in index order; a BTreeMap<String, _> would put "10" before "2".
    let mut json = String::from("{");
    for (i, name) in file.labels.names().iter().enumerate() {
        if i > 0 {
            json.push(',');
        }
        json.push_str(&serde_json::to_string(&i.to_string())?);
        json.push(':');
        json.push_str(&serde_json::to_string(name)?);
    }
    json.push_str("}\n");
    let side = sidecar_path(path);
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn read_emb(path: &Path) -> Result<EmbFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dim, records) = decode_emb(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let raw: BTreeMap<String, String> = serde_json::from_str(&text)?;
    let mut names = vec![None; raw.len()];
    for (k, v) in raw {
        let idx: usize = k
            .parse()
            .map_err(|_| Error::InvalidData(format!("sidecar key '{k}' is not an index")))?;
        let slot = names
            .get_mut(idx)
            .ok_or_else(|| Error::InvalidData(format!("sidecar indices are not dense (saw {idx})")))?;
        *slot = Some(v);
    }
    let names = names.into_iter().collect::<Option<Vec<_>>>().expect("dense by construction");
    let labels = LabelMap::new(names)?;
    for (i, r) in records.iter().enumerate() {
        if let Label::InScope(l) = r.label {
            if l >= labels.len() {
                return Err(Error::InvalidData(format!(
                    "record {i} has label {l} but the sidecar lists {} labels",
                    labels.len()
                )));
            }
        }
    }
    Ok(EmbFile { dim, records, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<EmbRecord> {
        vec![
            EmbRecord {
                label: Label::InScope(1),
                values: vec![0.5, -1.25, f32::MIN_POSITIVE],
            },
            EmbRecord {
                label: Label::Oos,
                values: vec![3.0, 0.0, -0.0],
            },
            EmbRecord {
                label: Label::InScope(0),
                values: vec![1e-30, 7.0, f32::MAX],
            },
        ]
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode_emb(3, &sample()[..1]).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &[1, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &0.5_f32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 4 + 12);
        let oos = encode_emb(3, &sample()[1..2]).unwrap();
        assert_eq!(&oos[20..24], &[0xFF; 4]);
    }

    #[test]
    fn file_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let file = EmbFile {
            dim: 3,
            records: sample(),
            labels: LabelMap::new(vec!["alpha".into(), "beta".into()]).unwrap(),
        };
        write_emb(&path, &file).unwrap();
        let back = read_emb(&path).unwrap();
        assert_eq!(back.labels, file.labels);
        assert_eq!(back.records.len(), 3);
        for (a, b) in back.records.iter().zip(&file.records) {
            assert_eq!(a.label, b.label);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.values), bits(&b.values));
        }
        assert!(std::fs::read_to_string(sidecar_path(&path)).unwrap().starts_with("{\"0\":\"alpha\""));
    }

    #[test]
    fn rejects_other_versions_and_magic() {
        let mut bytes = encode_emb(3, &sample()).unwrap();
        bytes[3] = b'2';
        assert!(matches!(decode_emb(&bytes), Err(Error::UnsupportedVersion { .. })));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_emb(&bytes), Err(Error::BadMagic(_))));
        let mut bytes = encode_emb(3, &sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_emb(&bytes), Err(Error::UnsupportedVersion { .. })));
    }

    #[test]
    fn rejects_truncation_and_non_finite() {
        let bytes = encode_emb(3, &sample()).unwrap();
        assert!(matches!(decode_emb(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
        assert!(matches!(decode_emb(&bytes[..10]), Err(Error::Truncated(_))));
        let mut bad = bytes.clone();
        // second record's first float
        let off = 20 + 16 + 4;
        bad[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = decode_emb(&bad).unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
        let mut recs = sample();
        recs[2].values[0] = f32::INFINITY;
        assert!(encode_emb(3, &recs).unwrap_err().to_string().contains("record 2"));
    }
}
