//! MAPTXT: one map point per line, `point_id x y z d0 .. d31`, whitespace
//! separated. Lines whose first non-blank character is `#` and blank lines
//! are skipped.
//!
//! The trajectory is a separate text file with one pose per line,
//! `frame tx ty tz qx qy qz qw` (the TUM layout ORB-SLAM2 writes).

use std::collections::BTreeSet;

use nalgebra::{Matrix4, Quaternion, Translation3, UnitQuaternion};
use tagalign_core::geometry::BINARY_DESCRIPTOR_BYTES;
use tagalign_core::{BinaryDescriptor, CloudError, CloudLabel, DescribedCloud, Descriptors, Point3};

use super::{decode_orb_descriptor, encode_orb_descriptor, IngestError};

const TOKENS_PER_LINE: usize = 4 + BINARY_DESCRIPTOR_BYTES;

#[derive(Debug, Clone, PartialEq)]
pub struct SlamPoint {
    pub point_id: i64,
    pub coord: Point3,
    pub descriptor: BinaryDescriptor,
}

/// Camera pose of one keyframe; `pose` maps camera to world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPose {
    pub frame_id: String,
    pub pose: Matrix4<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlamMapExport {
    pub points: Vec<SlamPoint>,
    pub trajectory: Vec<TrajectoryPose>,
}

impl SlamMapExport {
    /// The map as a binary-described cloud, one descriptor per point, in file order.
    pub fn to_described_cloud(&self) -> Result<DescribedCloud, CloudError> {
        DescribedCloud::with_single_descriptors(
            CloudLabel::Slam,
            self.points.iter().map(|p| p.coord).collect(),
            Descriptors::Binary(self.points.iter().map(|p| p.descriptor).collect()),
        )
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_error(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, token: &str, what: &str) -> Result<f64, IngestError> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_error(line, format!("{what} `{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("{what} `{token}` is not finite")));
    }
    Ok(v)
}

/// Parses a MAPTXT map export. The trajectory is left empty.
pub fn parse_slam_export(text: &str) -> Result<SlamMapExport, IngestError> {
    let mut seen = BTreeSet::new();
    let mut points = Vec::new();
    for (line, content) in content_lines(text) {
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != TOKENS_PER_LINE {
            return Err(parse_error(
                line,
                format!("expected {TOKENS_PER_LINE} tokens, found {}", tokens.len()),
            ));
        }
        let point_id: i64 = tokens[0]
            .parse()
            .map_err(|_| parse_error(line, format!("point id `{}` is not an integer", tokens[0])))?;
        if !seen.insert(point_id) {
            return Err(IngestError::DuplicatePointId { id: point_id, line });
        }
        let coord = Point3::new(
            parse_f64(line, tokens[1], "x")?,
            parse_f64(line, tokens[2], "y")?,
            parse_f64(line, tokens[3], "z")?,
        );
        let values = tokens[4..]
            .iter()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| parse_error(line, format!("descriptor value `{t}` is not an integer")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let descriptor =
            decode_orb_descriptor(&values).map_err(|e| parse_error(line, e.to_string()))?;
        points.push(SlamPoint {
            point_id,
            coord,
            descriptor,
        });
    }
    Ok(SlamMapExport {
        points,
        trajectory: Vec::new(),
    })
}

/// Writes MAPTXT with descriptors as signed bytes.
pub fn write_slam_export(points: &[SlamPoint]) -> String {
    let mut out = String::new();
    for p in points {
        out.push_str(&format!("{} {} {} {}", p.point_id, p.coord.x, p.coord.y, p.coord.z));
        for b in encode_orb_descriptor(&p.descriptor) {
            out.push_str(&format!(" {b}"));
        }
        out.push('\n');
    }
    out
}

/// Parses a trajectory file, `frame tx ty tz qx qy qz qw` per line.
pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPose>, IngestError> {
    let mut poses = Vec::new();
    for (line, content) in content_lines(text) {
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 8 {
            return Err(parse_error(line, format!("expected 8 tokens, found {}", tokens.len())));
        }
        let v = tokens[1..]
            .iter()
            .map(|t| parse_f64(line, t, "pose value"))
            .collect::<Result<Vec<_>, _>>()?;
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if q.norm() == 0.0 {
            return Err(parse_error(line, "zero quaternion"));
        }
        let pose = Translation3::new(v[0], v[1], v[2]).to_homogeneous()
            * UnitQuaternion::from_quaternion(q).to_homogeneous();
        poses.push(TrajectoryPose {
            frame_id: tokens[0].to_string(),
            pose,
        });
    }
    Ok(poses)
}
