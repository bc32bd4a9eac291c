//! FEAT1 descriptor archive: ASCII `FEAT1`, little-endian `u32` count N,
//! `u32` dimension D, then N·D little-endian `f32` values row-major.
//!
//! A [`FeatureArchive`] maps image names to the descriptors of that image,
//! indexed by feature id. On disk each image is `<dir>/<image>.feat1`.

use std::collections::BTreeMap;

use tagalign_core::FloatDescriptor;

use super::IngestError;

const MAGIC: &[u8; 5] = b"FEAT1";
const HEADER_LEN: usize = MAGIC.len() + 8;

pub type FeatureArchive = BTreeMap<String, Vec<FloatDescriptor>>;

/// File extension of per-image archives.
pub const FEAT1_EXTENSION: &str = "feat1";

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses one image's descriptors.
pub fn parse_feature_archive(bytes: &[u8]) -> Result<Vec<FloatDescriptor>, IngestError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(IngestError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IngestError::TruncatedPayload {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let n = read_u32(bytes, 5) as usize;
    let d = read_u32(bytes, 9) as usize;
    if d == 0 {
        return Err(IngestError::ZeroDimension);
    }
    let needed = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() < needed {
        return Err(IngestError::TruncatedPayload {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(IngestError::TrailingBytes(bytes.len() - needed));
    }
    bytes[HEADER_LEN..]
        .chunks_exact(4 * d)
        .enumerate()
        .map(|(i, row)| {
            let values = row
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            FloatDescriptor::new(values).map_err(|_| IngestError::NonFinite(format!("descriptor {i}")))
        })
        .collect()
}

/// Serializes descriptors as FEAT1, rounding values to `f32`. An empty list is
/// written with dimension `empty_dim`.
pub fn write_feature_archive(descriptors: &[FloatDescriptor], empty_dim: usize) -> Result<Vec<u8>, IngestError> {
    let d = descriptors.first().map_or(empty_dim, FloatDescriptor::dim);
    if d == 0 {
        return Err(IngestError::ZeroDimension);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + descriptors.len() * d * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(descriptors.len() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for desc in descriptors {
        if desc.dim() != d {
            return Err(IngestError::MixedDimension {
                expected: d,
                found: desc.dim(),
            });
        }
        for &v in desc.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Checks that every descriptor in the archive has the same dimension.
pub fn check_archive_dimension(archive: &FeatureArchive) -> Result<Option<usize>, IngestError> {
    let mut dim = None;
    for d in archive.values().flatten() {
        match dim {
            None => dim = Some(d.dim()),
            Some(expected) if expected != d.dim() => {
                return Err(IngestError::MixedDimension {
                    expected,
                    found: d.dim(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(dim)
}
