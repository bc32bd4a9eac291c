//! Readers and writers for the upstream reconstruction outputs.
//!
//! | format | producer | module |
//! |--------|----------|--------|
//! | MAPTXT | SLAM map export: `point_id x y z d0 .. d31` per line | [`maptxt`] |
//! | reconstruction JSON | SfM 3D points keyed by track id | [`reconstruction`] |
//! | tracks | SfM `image \t track_id \t feature_id ...` table | [`tracks`] |
//! | FEAT1 | per-image float descriptor archive | [`feat1`] |
//! | PLY | dense cloud, ascii or binary little-endian | [`ply`] |
//!
//! [`join`] attaches the per-image descriptors to the SfM points.

pub mod feat1;
pub mod join;
pub mod maptxt;
pub mod ply;
pub mod reconstruction;
pub mod tracks;

use tagalign_core::geometry::BINARY_DESCRIPTOR_BYTES;
use tagalign_core::BinaryDescriptor;

pub use feat1::{parse_feature_archive, write_feature_archive, FeatureArchive, FEAT1_EXTENSION};
pub use join::{join_descriptors_to_points, JoinReport, JoinedCloud};
pub use maptxt::{
    parse_slam_export, parse_trajectory, write_slam_export, SlamMapExport, SlamPoint, TrajectoryPose,
};
pub use ply::{parse_ply, write_ply};
pub use reconstruction::{parse_reconstruction, write_reconstruction, SfmPoint, SfmReconstruction};
pub use tracks::{parse_tracks, write_tracks, TrackRow, TrackTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected {expected} descriptor values, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("descriptor value {0} outside [-128, 255]")]
    OutOfRange(i64),
    #[error("line {line}: duplicate point id {id}")]
    DuplicatePointId { id: i64, line: usize },
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PLY content: {0}")]
    UnsupportedFormat(String),
    #[error("PLY body ends early: {0}")]
    TruncatedBody(String),
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("point `{track_id}`: missing field `{field}`")]
    MissingField { track_id: String, field: &'static str },
    #[error("point `{track_id}`: `{field}` has {found} entries, expected 3")]
    BadArity {
        track_id: String,
        field: &'static str,
        found: usize,
    },
    #[error("line {line}: negative feature id {value}")]
    NegativeFeatureId { line: usize, value: i64 },
    #[error("bad magic, expected FEAT1")]
    BadMagic,
    #[error("payload truncated: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("descriptor dimension is zero")]
    ZeroDimension,
    #[error("{0} unexpected bytes after payload")]
    TrailingBytes(usize),
    #[error("descriptor dimension {found} differs from {expected} used elsewhere in the archive")]
    MixedDimension { expected: usize, found: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

/// Reinterprets 32 saved integers as descriptor octets.
///
/// Values in `[-128, -1]` are signed bytes and map to `v + 256` (two's
/// complement); values in `[0, 255]` are taken as is.
pub fn decode_orb_descriptor(values: &[i64]) -> Result<BinaryDescriptor, IngestError> {
    if values.len() != BINARY_DESCRIPTOR_BYTES {
        return Err(IngestError::BadLength {
            expected: BINARY_DESCRIPTOR_BYTES,
            found: values.len(),
        });
    }
    let mut bytes = [0u8; BINARY_DESCRIPTOR_BYTES];
    for (b, &v) in bytes.iter_mut().zip(values) {
        if !(-128..=255).contains(&v) {
            return Err(IngestError::OutOfRange(v));
        }
        *b = if v < 0 { (v as i8) as u8 } else { v as u8 };
    }
    Ok(BinaryDescriptor::from_bytes(bytes))
}

/// Inverse of [`decode_orb_descriptor`] producing signed bytes, the form the
/// SLAM exporter saves.
pub fn encode_orb_descriptor(d: &BinaryDescriptor) -> [i8; BINARY_DESCRIPTOR_BYTES] {
    d.as_bytes().map(|b| b as i8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_examples() {
        assert_eq!(decode_orb_descriptor(&[0; 32]).unwrap(), BinaryDescriptor::ZERO);
        let mut v = [0i64; 32];
        v[0] = -1;
        let d = decode_orb_descriptor(&v).unwrap();
        assert_eq!(d.as_bytes()[0], 0xFF);
        assert!(d.as_bytes()[1..].iter().all(|&b| b == 0));
        v[0] = -128;
        assert_eq!(decode_orb_descriptor(&v).unwrap().as_bytes()[0], 0x80);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode_orb_descriptor(&[0; 31]),
            Err(IngestError::BadLength { expected: 32, found: 31 })
        );
        let mut v = [0i64; 32];
        v[5] = 256;
        assert_eq!(decode_orb_descriptor(&v), Err(IngestError::OutOfRange(256)));
        v[5] = -129;
        assert_eq!(decode_orb_descriptor(&v), Err(IngestError::OutOfRange(-129)));
    }

    #[test]
    fn encode_inverts_decode() {
        let d = BinaryDescriptor::from_bytes(core::array::from_fn(|i| (i * 37) as u8));
        let signed = encode_orb_descriptor(&d).map(i64::from);
        assert_eq!(decode_orb_descriptor(&signed).unwrap(), d);
    }
}
