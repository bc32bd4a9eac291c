//! Point clouds whose points carry feature descriptors, and the per-tag query
//! descriptor sets matched against them.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{BinaryDescriptor, FloatDescriptor, Point3};

/// Which reconstruction a cloud came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CloudLabel {
    Slam,
    Sfm,
}

impl CloudLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CloudLabel::Slam => "slam",
            CloudLabel::Sfm => "sfm",
        }
    }
}

impl fmt::Display for CloudLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Binary,
    Float,
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Binary => "binary",
            DescriptorKind::Float => "float",
        })
    }
}

/// A homogeneous list of descriptors.
#[derive(Debug, Clone, PartialEq)]
pub enum Descriptors {
    Binary(Vec<BinaryDescriptor>),
    Float(Vec<FloatDescriptor>),
}

impl Descriptors {
    pub fn kind(&self) -> DescriptorKind {
        match self {
            Descriptors::Binary(_) => DescriptorKind::Binary,
            Descriptors::Float(_) => DescriptorKind::Float,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Descriptors::Binary(d) => d.len(),
            Descriptors::Float(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CloudError {
    #[error("descriptor {descriptor} refers to point {owner}, but the cloud has {points} points")]
    OwnerOutOfRange {
        descriptor: usize,
        owner: usize,
        points: usize,
    },
    #[error("{descriptors} descriptors but {owners} owner indices")]
    OwnerCountMismatch { descriptors: usize, owners: usize },
    #[error("point {0} carries no descriptor")]
    UndescribedPoint(usize),
    #[error("float descriptors of differing dimension ({0} vs {1})")]
    MixedDimension(usize, usize),
    #[error("tag `{0}` has no descriptors")]
    EmptyTag(String),
}

/// Points each carrying one or more descriptors of a single kind.
///
/// Stored flattened: descriptor `i` belongs to point `owners[i]`, which is the
/// target layout the matcher scans.
#[derive(Debug, Clone, PartialEq)]
pub struct DescribedCloud {
    label: CloudLabel,
    points: Vec<Point3>,
    descriptors: Descriptors,
    owners: Vec<usize>,
}

impl DescribedCloud {
    pub fn new(
        label: CloudLabel,
        points: Vec<Point3>,
        descriptors: Descriptors,
        owners: Vec<usize>,
    ) -> Result<Self, CloudError> {
        if descriptors.len() != owners.len() {
            return Err(CloudError::OwnerCountMismatch {
                descriptors: descriptors.len(),
                owners: owners.len(),
            });
        }
        let mut described = alloc::vec![false; points.len()];
        for (i, &owner) in owners.iter().enumerate() {
            let slot = described.get_mut(owner).ok_or(CloudError::OwnerOutOfRange {
                descriptor: i,
                owner,
                points: points.len(),
            })?;
            *slot = true;
        }
        if let Some(p) = described.iter().position(|d| !d) {
            return Err(CloudError::UndescribedPoint(p));
        }
        check_uniform_dimension(&descriptors)?;
        Ok(Self {
            label,
            points,
            descriptors,
            owners,
        })
    }

    /// One descriptor per point, in point order.
    pub fn with_single_descriptors(
        label: CloudLabel,
        points: Vec<Point3>,
        descriptors: Descriptors,
    ) -> Result<Self, CloudError> {
        let owners = (0..descriptors.len()).collect();
        Self::new(label, points, descriptors, owners)
    }

    pub fn label(&self) -> CloudLabel {
        self.label
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn descriptors(&self) -> &Descriptors {
        &self.descriptors
    }

    /// Point index owning each descriptor.
    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn kind(&self) -> DescriptorKind {
        self.descriptors.kind()
    }

    /// Descriptor indices attached to point `index`.
    pub fn descriptors_of(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.owners
            .iter()
            .enumerate()
            .filter(move |(_, &o)| o == index)
            .map(|(i, _)| i)
    }
}

/// The query descriptors extracted from imagery of a single tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TagFeatureSet {
    tag_id: String,
    descriptors: Descriptors,
}

impl TagFeatureSet {
    pub fn new(tag_id: impl Into<String>, descriptors: Descriptors) -> Result<Self, CloudError> {
        let tag_id = tag_id.into();
        if descriptors.is_empty() {
            return Err(CloudError::EmptyTag(tag_id));
        }
        check_uniform_dimension(&descriptors)?;
        Ok(Self {
            tag_id,
            descriptors,
        })
    }

    pub fn tag_id(&self) -> &str {
        &self.tag_id
    }

    pub fn descriptors(&self) -> &Descriptors {
        &self.descriptors
    }

    pub fn kind(&self) -> DescriptorKind {
        self.descriptors.kind()
    }
}

fn check_uniform_dimension(descriptors: &Descriptors) -> Result<(), CloudError> {
    if let Descriptors::Float(d) = descriptors {
        if let Some(first) = d.first() {
            if let Some(other) = d.iter().find(|x| x.dim() != first.dim()) {
                return Err(CloudError::MixedDimension(first.dim(), other.dim()));
            }
        }
    }
    Ok(())
}
