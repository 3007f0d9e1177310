//! Point cloud container.

use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{ensure_len, Error, Result};
use crate::scalar::Real;

/// Clouds up to this size use the exact O(N²) diameter.
pub const EXACT_DIAMETER_LIMIT: usize = 4096;

/// Positions with optional unit normals and per-point segment labels.
///
/// Every coordinate is finite, `N >= 1`, and normals (when present) are unit
/// length; the constructors enforce all three.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Real> {
    positions: Vec<Point3<T>>,
    normals: Option<Vec<Vector3<T>>>,
    labels: Option<Vec<u32>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(positions: Vec<Point3<T>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::ZeroPoints);
        }
        if let Some(i) = positions
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite_value()))
        {
            return Err(Error::NonFinite(format!("position {i}")));
        }
        Ok(Self {
            positions,
            normals: None,
            labels: None,
        })
    }

    pub fn from_slices(coords: &[[T; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    /// Attaches normals, renormalizing each to unit length.
    pub fn with_normals(mut self, normals: Vec<Vector3<T>>) -> Result<Self> {
        ensure_len(self.len(), normals.len())?;
        let mut out = Vec::with_capacity(normals.len());
        for (i, n) in normals.into_iter().enumerate() {
            if !n.iter().all(|c| c.is_finite_value()) {
                return Err(Error::NonFinite(format!("normal {i}")));
            }
            let norm = n.norm();
            if norm <= T::machine_eps() {
                return Err(Error::invalid(format!("zero-length normal at point {i}")));
            }
            out.push(n / norm);
        }
        self.normals = Some(out);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        ensure_len(self.len(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false; a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<T>] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &Point3<T> {
        &self.positions[i]
    }

    pub fn normals(&self) -> Option<&[Vector3<T>]> {
        self.normals.as_deref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn centroid(&self) -> Point3<T> {
        let mut sum = Vector3::zeros();
        for p in &self.positions {
            sum += p.coords;
        }
        Point3::from(sum / T::from_count(self.len()))
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bounding_box(&self) -> (Point3<T>, Point3<T>) {
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Maximum pairwise distance: exact for `N <= 4096`, otherwise twice the
    /// largest distance to the centroid.
    pub fn diameter(&self) -> T {
        if self.len() <= EXACT_DIAMETER_LIMIT {
            let mut best = T::zero();
            for (i, p) in self.positions.iter().enumerate() {
                for q in &self.positions[i + 1..] {
                    best = best.max((p - q).norm_squared());
                }
            }
            best.sqrt()
        } else {
            let c = self.centroid();
            let r = self
                .positions
                .iter()
                .map(|p| (p - c).norm())
                .fold(T::zero(), |a, b| a.max(b));
            r * T::lit(2.0)
        }
    }

    /// Translates the mean to the origin and scales the diameter to 1.
    pub fn normalize(&self) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::Degenerate(
                "normalization needs at least two points".into(),
            ));
        }
        let c = self.centroid();
        let centered: Vec<Point3<T>> = self.positions.iter().map(|p| Point3::from(p - c)).collect();
        let tmp = Self {
            positions: centered,
            normals: None,
            labels: None,
        };
        let diameter = tmp.diameter();
        if diameter <= T::machine_eps() {
            return Err(Error::Degenerate("all points coincide".into()));
        }
        let scale = T::one() / diameter;
        Ok(Self {
            positions: tmp.positions.into_iter().map(|p| p * scale).collect(),
            normals: self.normals.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Applies a rigid motion to positions and normals.
    pub fn transformed(&self, iso: &Isometry3<T>) -> Self {
        Self {
            positions: self.positions.iter().map(|p| iso * p).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| iso.rotation * n).collect()),
            labels: self.labels.clone(),
        }
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p * factor).collect(),
            normals: self.normals.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Sub-cloud keeping `ids` in the given order (attributes follow).
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::ZeroPoints);
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("point id {bad} out of range")));
        }
        Ok(Self {
            positions: ids.iter().map(|&i| self.positions[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ids.iter().map(|&i| ns[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|ls| ids.iter().map(|&i| ls[i]).collect()),
        })
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        let conv = |x: T| U::lit(x.as_f64());
        PointCloud {
            positions: self
                .positions
                .iter()
                .map(|p| Point3::new(conv(p.x), conv(p.y), conv(p.z)))
                .collect(),
            normals: self.normals.as_ref().map(|ns| {
                ns.iter()
                    .map(|n| {
                        let v = Vector3::new(conv(n.x), conv(n.y), conv(n.z));
                        v / v.norm()
                    })
                    .collect()
            }),
            labels: self.labels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_normalization() {
        let c = PointCloud::<f64>::from_slices(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let n = c.normalize().unwrap();
        assert_eq!(n.point(0), &Point3::new(-0.5, 0.0, 0.0));
        assert_eq!(n.point(1), &Point3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn normalization_is_idempotent() {
        let c = PointCloud::<f64>::from_slices(&[
            [0.1, 0.3, -2.0],
            [1.0, 0.5, 0.0],
            [0.4, -1.2, 0.7],
            [3.0, 0.0, 0.2],
        ])
        .unwrap();
        let once = c.normalize().unwrap();
        let twice = once.normalize().unwrap();
        for (a, b) in once.positions().iter().zip(twice.positions()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(once.centroid().coords.norm() < 1e-9);
        assert!((once.diameter() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_clouds_are_rejected() {
        let single = PointCloud::<f64>::from_slices(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(single.normalize().is_err());
        let same = PointCloud::<f64>::from_slices(&[[1.0, 2.0, 3.0]; 5]).unwrap();
        assert!(matches!(same.normalize(), Err(Error::Degenerate(_))));
        assert!(matches!(PointCloud::<f64>::new(vec![]), Err(Error::ZeroPoints)));
        assert!(PointCloud::<f64>::from_slices(&[[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn normals_are_renormalized() {
        let c = PointCloud::<f64>::from_slices(&[[0.0; 3]])
            .unwrap()
            .with_normals(vec![Vector3::new(0.0, 0.0, 2.0)])
            .unwrap();
        assert_eq!(c.normals().unwrap()[0], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn approximate_diameter_for_large_clouds() {
        let pts: Vec<[f64; 3]> = (0..5000).map(|i| [i as f64, 0.0, 0.0]).collect();
        let c = PointCloud::from_slices(&pts).unwrap();
        // centroid at 2499.5, farthest point 2499.5 away
        assert!((c.diameter() - 4999.0).abs() < 1e-9);
        let n = c.normalize().unwrap();
        assert!((n.diameter() - 1.0).abs() < 1e-9);
    }
}
