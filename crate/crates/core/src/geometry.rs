//! Points, descriptors, transforms and the distance metrics shared by the
//! matching and alignment stages.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Number of bits in a binary (ORB-style) descriptor.
pub const BINARY_DESCRIPTOR_BITS: usize = 256;
/// Number of octets backing a binary descriptor.
pub const BINARY_DESCRIPTOR_BYTES: usize = BINARY_DESCRIPTOR_BITS / 8;
/// Default dimension of real-valued descriptors.
pub const DEFAULT_FLOAT_DIMENSION: usize = 128;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("descriptor dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("last row of a homogeneous transform must be [0, 0, 0, 1]")]
    BadLastRow,
    #[error("linear block of the transform is singular")]
    SingularLinearPart,
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("{points} points but {colors} colors")]
    ColorCountMismatch { points: usize, colors: usize },
}

/// A point in 3D scene units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Like [`Point3::new`] but rejects NaN and infinities.
    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let p = Self::new(x, y, z);
        if p.is_finite() {
            Ok(p)
        } else {
            Err(GeometryError::NonFinite("point"))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        libm::sqrt(self.distance_squared(other))
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Component-wise arithmetic mean of a nonempty point set.
pub fn centroid(points: &[Point3]) -> Result<Point3, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let n = points.len() as f64;
    let (sx, sy, sz) = points
        .iter()
        .fold((0.0, 0.0, 0.0), |(sx, sy, sz), p| (sx + p.x, sy + p.y, sz + p.z));
    Ok(Point3::new(sx / n, sy / n, sz / n))
}

/// Axis-aligned bounds `(min, max)` of a point set, `None` when empty.
pub fn bounding_box(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = *points.first()?;
    Some(points.iter().skip(1).fold((first, first), |(lo, hi), p| {
        (
            Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    }))
}

/// Length of the bounding-box diagonal; zero for empty input.
pub fn bounding_box_diagonal(points: &[Point3]) -> f64 {
    bounding_box(points).map_or(0.0, |(lo, hi)| lo.distance(&hi))
}

/// A 256-bit binary descriptor compared by Hamming distance.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor([u8; BINARY_DESCRIPTOR_BYTES]);

impl BinaryDescriptor {
    pub const ZERO: BinaryDescriptor = BinaryDescriptor([0; BINARY_DESCRIPTOR_BYTES]);
    pub const ONES: BinaryDescriptor = BinaryDescriptor([0xFF; BINARY_DESCRIPTOR_BYTES]);

    pub const fn from_bytes(bytes: [u8; BINARY_DESCRIPTOR_BYTES]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; BINARY_DESCRIPTOR_BYTES] {
        &self.0
    }

    /// Bit `index` counting from the least significant bit of octet 0.
    pub fn bit(&self, index: usize) -> bool {
        self.0[index / 8] >> (index % 8) & 1 == 1
    }

    /// Copy of `self` with bit `index` inverted.
    pub fn with_bit_flipped(mut self, index: usize) -> Self {
        self.0[index / 8] ^= 1 << (index % 8);
        self
    }
}

impl fmt::Debug for BinaryDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BinaryDescriptor(")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        f.write_str(")")
    }
}

/// Number of differing bits, in `[0, 256]`.
pub fn hamming_distance(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Hamming distance as a fraction of the descriptor length.
pub fn normalized_hamming(a: &BinaryDescriptor, b: &BinaryDescriptor) -> f64 {
    f64::from(hamming_distance(a, b)) / BINARY_DESCRIPTOR_BITS as f64
}

/// A real-valued descriptor compared by Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatDescriptor(Vec<f64>);

impl FloatDescriptor {
    pub fn new(values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(GeometryError::NonFinite("descriptor"))
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn l2_distance(a: &FloatDescriptor, b: &FloatDescriptor) -> Result<f64, GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let sum: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(sum))
}

/// A 4×4 affine transform whose last row is exactly `[0, 0, 0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousTransform(Matrix4<f64>);

impl HomogeneousTransform {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn new(m: Matrix4<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("transform"));
        }
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(GeometryError::BadLastRow);
        }
        let det = m.fixed_view::<3, 3>(0, 0).determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(GeometryError::SingularLinearPart);
        }
        Ok(Self(m))
    }

    /// Builds from the top three rows; the last row is fixed.
    pub fn from_affine_rows(rows: [[f64; 4]; 3]) -> Result<Self, GeometryError> {
        let mut m = Matrix4::identity();
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        Self::new(m)
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self, GeometryError> {
        Self::new(Matrix4::from_row_slice(values))
    }

    pub fn translation(t: [f64; 3]) -> Self {
        let mut m = Matrix4::identity();
        m[(0, 3)] = t[0];
        m[(1, 3)] = t[1];
        m[(2, 3)] = t[2];
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn linear_part(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation_part(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let v = self.0 * Vector4::new(p.x, p.y, p.z, 1.0);
        Point3::new(v.x, v.y, v.z)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &HomogeneousTransform) -> HomogeneousTransform {
        let mut m = self.0 * other.0;
        m.fixed_view_mut::<1, 4>(3, 0)
            .copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
        HomogeneousTransform(m)
    }

    pub fn inverse(&self) -> Option<HomogeneousTransform> {
        let linear_inv = self.linear_part().try_inverse()?;
        let t = -(linear_inv * self.translation_part());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear_inv);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        HomogeneousTransform::new(m).ok()
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &HomogeneousTransform) -> f64 {
        (self.0 - other.0).amax()
    }
}

pub fn apply_transform(h: &HomogeneousTransform, p: &Point3) -> Point3 {
    h.apply(p)
}

/// Scale, rotation and translation: `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Orthonormality and determinant tolerance for rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

impl SimilarityTransform {
    pub fn new(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        if !scale.is_finite()
            || rotation.iter().any(|v| !v.is_finite())
            || translation.iter().any(|v| !v.is_finite())
        {
            return Err(GeometryError::NonFinite("similarity"));
        }
        if scale <= 0.0 {
            return Err(GeometryError::NonPositiveScale(scale));
        }
        if !is_rotation(&rotation, ROTATION_TOLERANCE) {
            return Err(GeometryError::NotARotation);
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * p.to_vector() * self.scale + self.translation))
    }

    pub fn to_homogeneous(&self) -> HomogeneousTransform {
        similarity_to_homogeneous(self)
    }
}

pub fn similarity_to_homogeneous(st: &SimilarityTransform) -> HomogeneousTransform {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(st.rotation * st.scale));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&st.translation);
    HomogeneousTransform(m)
}

/// `RᵀR = I` and `det R = +1` within `tol` (max-entry norm).
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Rotation angle of `R` in radians, in `[0, π]`.
///
/// Uses `atan2(sin, cos)` with `sin` taken from the skew part so that small
/// angles keep full precision.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let sx = r[(2, 1)] - r[(1, 2)];
    let sy = r[(0, 2)] - r[(2, 0)];
    let sz = r[(1, 0)] - r[(0, 1)];
    let sin = 0.5 * libm::sqrt(sx * sx + sy * sy + sz * sz);
    let cos = 0.5 * (r.trace() - 1.0);
    libm::atan2(sin, cos)
}

/// Rotation about the unit `axis` by `angle` radians (Rodrigues).
pub fn axis_angle_rotation(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let a = Vector3::from(axis);
    let n = a.norm();
    if n == 0.0 {
        return Matrix3::identity();
    }
    let k = a / n;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * libm::sin(angle) + kx * kx * (1.0 - libm::cos(angle))
}

/// A set of 3D points with optional per-point RGB colors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, colors: Option<Vec<[u8; 3]>>) -> Result<Self, GeometryError> {
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(GeometryError::ColorCountMismatch {
                    points: points.len(),
                    colors: c.len(),
                });
            }
        }
        Ok(Self { points, colors })
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            colors: None,
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<[u8; 3]>>) {
        (self.points, self.colors)
    }
}
