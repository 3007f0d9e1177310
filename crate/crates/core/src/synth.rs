//! Synthetic surface samplers and labelled test scenes.
//!
//! Every sampler draws exact surface points with their analytic normals;
//! noise is added separately so clean and noisy copies share a layout.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::PointCloud;
use crate::primitives::{PrimitiveParams, TypeLabel};
use crate::scalar::Real;

#[derive(Debug, Clone, Default)]
pub struct Samples<T: Real> {
    pub points: Vec<Point3<T>>,
    pub normals: Vec<Vector3<T>>,
}

impl<T: Real> Samples<T> {
    pub fn into_cloud(self) -> PointCloud<T> {
        PointCloud::new(self.points)
            .and_then(|c| c.with_normals(self.normals))
            .expect("samplers produce finite points and unit normals")
    }

    pub fn extend(&mut self, other: Samples<T>) {
        self.points.extend(other.points);
        self.normals.extend(other.normals);
    }

    /// Isotropic Gaussian jitter of the positions; normals are left exact.
    pub fn jitter(&mut self, sigma: T, rng: &mut impl Rng) {
        for p in &mut self.points {
            p.coords += gaussian_vector(rng) * sigma;
        }
    }
}

/// Region of a primitive's surface to sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extent<T: Real> {
    /// Square of half-width `half` centred at the projection of `center`.
    Square { center: Point3<T>, half: T },
    /// Whole closed surface (spheres).
    Full,
    /// Axial range: height along the axis from the cylinder's canonical
    /// center, or slant distance from the cone apex.
    Axial { lo: T, hi: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch<T: Real> {
    pub prim: PrimitiveParams<T>,
    pub extent: Extent<T>,
}

impl<T: Real> Patch<T> {
    pub fn new(prim: PrimitiveParams<T>, extent: Extent<T>) -> Self {
        Self { prim, extent }
    }

    /// Default region used by `sample_primitive`.
    pub fn default_for(prim: PrimitiveParams<T>) -> Self {
        let extent = match prim {
            PrimitiveParams::Plane { .. } => Extent::Square {
                center: Point3::origin(),
                half: T::lit(0.5),
            },
            PrimitiveParams::Sphere { .. } => Extent::Full,
            PrimitiveParams::Cylinder { .. } => Extent::Axial {
                lo: T::lit(-0.5),
                hi: T::lit(0.5),
            },
            PrimitiveParams::Cone { .. } => Extent::Axial {
                lo: T::lit(0.2),
                hi: T::lit(1.0),
            },
        };
        Self { prim, extent }
    }
}

pub(crate) fn gaussian_vector<T: Real>(rng: &mut impl Rng) -> Vector3<T> {
    let mut g = || T::lit(StandardNormal.sample(rng));
    Vector3::new(g(), g(), g())
}

fn uniform<T: Real>(rng: &mut impl Rng, lo: T, hi: T) -> T {
    lo + (hi - lo) * T::lit(rng.random::<f64>())
}

/// Any orthonormal pair completing `a` to a right-handed frame.
pub fn perpendicular_frame<T: Real>(a: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let helper = if a.x.abs() < T::lit(0.9) {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = a.cross(&helper).normalize();
    let w = a.cross(&u);
    (u, w)
}

/// Area-uniform samples of a patch.
pub fn sample_patch<T: Real>(patch: &Patch<T>, n: usize, rng: &mut impl Rng) -> Samples<T> {
    let mut out = Samples {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
    };
    let two_pi = T::two_pi();
    for _ in 0..n {
        let (p, nrm) = match (patch.prim, patch.extent) {
            (PrimitiveParams::Plane { normal, d }, ext) => {
                let (center, half) = match ext {
                    Extent::Square { center, half } => (center, half),
                    _ => (Point3::origin(), T::lit(0.5)),
                };
                let foot = center.coords - normal * (normal.dot(&center.coords) - d);
                let (u, w) = perpendicular_frame(&normal);
                let s = uniform(rng, -half, half);
                let t = uniform(rng, -half, half);
                (Point3::from(foot + u * s + w * t), normal)
            }
            (PrimitiveParams::Sphere { center, radius }, _) => {
                let dir = loop {
                    let g: Vector3<T> = gaussian_vector(rng);
                    let l = g.norm();
                    if l > T::lit(1e-12) {
                        break g / l;
                    }
                };
                (center + dir * radius, dir)
            }
            (
                PrimitiveParams::Cylinder {
                    axis,
                    center,
                    radius,
                },
                ext,
            ) => {
                let (lo, hi) = axial(ext, T::lit(-0.5), T::lit(0.5));
                let (u, w) = perpendicular_frame(&axis);
                let phi = uniform(rng, T::zero(), two_pi);
                let h = uniform(rng, lo, hi);
                let radial = u * phi.cos() + w * phi.sin();
                (center + axis * h + radial * radius, radial)
            }
            (
                PrimitiveParams::Cone {
                    apex,
                    axis,
                    half_angle,
                },
                ext,
            ) => {
                let (lo, hi) = axial(ext, T::lit(0.2), T::one());
                let (u, w) = perpendicular_frame(&axis);
                let phi = uniform(rng, T::zero(), two_pi);
                // lateral area density grows linearly with slant distance
                let q = uniform(rng, lo * lo, hi * hi);
                let t = q.sqrt();
                let radial = u * phi.cos() + w * phi.sin();
                let (s, c) = half_angle.sin_cos();
                let dir = axis * c + radial * s;
                let nrm = radial * c - axis * s;
                (apex + dir * t, nrm)
            }
        };
        out.points.push(p);
        out.normals.push(nrm);
    }
    out
}

fn axial<T: Real>(ext: Extent<T>, lo: T, hi: T) -> (T, T) {
    match ext {
        Extent::Axial { lo, hi } => (lo, hi),
        _ => (lo, hi),
    }
}

pub fn sample_primitive<T: Real>(
    prim: &PrimitiveParams<T>,
    n: usize,
    rng: &mut impl Rng,
) -> Samples<T> {
    sample_patch(&Patch::default_for(*prim), n, rng)
}

/// Uniform random rotation and a translation with components in [-1, 1].
pub fn random_isometry<T: Real>(rng: &mut impl Rng) -> nalgebra::Isometry3<T> {
    let axis: Vector3<T> = gaussian_vector(rng);
    let angle = uniform(rng, T::zero(), T::pi());
    let t = Vector3::new(
        uniform(rng, -T::one(), T::one()),
        uniform(rng, -T::one(), T::one()),
        uniform(rng, -T::one(), T::one()),
    );
    nalgebra::Isometry3::new(t, axis.normalize() * angle)
}

/// Labelled ground-truth scene.
#[derive(Debug, Clone)]
pub struct Scene<T: Real> {
    /// Positions, exact normals, and ground-truth segment labels.
    pub cloud: PointCloud<T>,
    pub primitives: Vec<PrimitiveParams<T>>,
}

impl<T: Real> Scene<T> {
    pub fn labels(&self) -> &[u32] {
        self.cloud.labels().expect("scenes are labelled")
    }

    pub fn types(&self) -> Vec<TypeLabel> {
        self.primitives.iter().map(|p| p.type_label()).collect()
    }

    /// Generating primitive of every point.
    pub fn per_point_primitives(&self) -> Vec<PrimitiveParams<T>> {
        self.labels()
            .iter()
            .map(|&l| self.primitives[l as usize])
            .collect()
    }

    pub fn from_patches(patches: &[(Patch<T>, usize)], noise: T, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = Samples::default();
        let mut labels = Vec::new();
        for (k, (patch, n)) in patches.iter().enumerate() {
            let mut s = sample_patch(patch, *n, &mut rng);
            if noise > T::zero() {
                s.jitter(noise, &mut rng);
            }
            labels.extend(std::iter::repeat_n(k as u32, *n));
            all.extend(s);
        }
        let cloud = all
            .into_cloud()
            .with_labels(labels)
            .expect("one label per point");
        Self {
            cloud,
            primitives: patches.iter().map(|(p, _)| p.prim).collect(),
        }
    }
}

/// Two parallel unit squares `gap` apart along z, `n_per` points each.
pub fn two_planes<T: Real>(n_per: usize, gap: T, seed: u64) -> Scene<T> {
    let half = T::lit(0.5);
    let lower = PrimitiveParams::plane(Vector3::z(), T::zero()).expect("valid");
    let upper = PrimitiveParams::plane(Vector3::z(), gap).expect("valid");
    Scene::from_patches(
        &[
            (
                Patch::new(
                    lower,
                    Extent::Square {
                        center: Point3::origin(),
                        half,
                    },
                ),
                n_per,
            ),
            (
                Patch::new(
                    upper,
                    Extent::Square {
                        center: Point3::new(T::zero(), T::zero(), gap),
                        half,
                    },
                ),
                n_per,
            ),
        ],
        T::zero(),
        seed,
    )
}

/// Disjoint plane, sphere and cylinder within roughly a unit-diameter box.
/// `n_total` points are split in proportion to surface area.
pub fn three_primitives<T: Real>(n_total: usize, noise: T, seed: u64) -> Scene<T> {
    let l = T::lit;
    let plane = PrimitiveParams::plane(Vector3::z(), T::zero()).expect("valid");
    let sphere = PrimitiveParams::sphere(Point3::new(l(0.25), l(0.0), l(0.3)), l(0.12)).expect("valid");
    let cylinder =
        PrimitiveParams::cylinder(Vector3::z(), Point3::new(l(-0.25), l(0.0), l(0.0)), l(0.1))
            .expect("valid");
    let plane_patch = Patch::new(
        plane,
        Extent::Square {
            center: Point3::new(l(0.0), l(0.0), l(0.0)),
            half: l(0.45),
        },
    );
    let cyl_patch = Patch::new(cylinder, Extent::Axial { lo: l(0.1), hi: l(0.5) });
    let sphere_patch = Patch::new(sphere, Extent::Full);
    // areas: 0.81, 4π·0.0144 ≈ 0.181, 2π·0.1·0.4 ≈ 0.251
    let areas = [0.81, 4.0 * std::f64::consts::PI * 0.0144, 2.0 * std::f64::consts::PI * 0.04];
    let total: f64 = areas.iter().sum();
    let mut counts: Vec<usize> = areas
        .iter()
        .map(|a| ((a / total) * n_total as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    counts[0] += n_total - assigned;
    Scene::from_patches(
        &[
            (plane_patch, counts[0]),
            (sphere_patch, counts[1]),
            (cyl_patch, counts[2]),
        ],
        noise,
        seed,
    )
}

/// Surface samples of an axis-aligned cube of edge `edge` centred at the origin.
pub fn cube_surface<T: Real>(n: usize, edge: T, rng: &mut impl Rng) -> Samples<T> {
    let h = edge / T::lit(2.0);
    let mut out = Samples::default();
    for _ in 0..n {
        let face = rng.random_range(0..6usize);
        let axis = face / 2;
        let sign = if face % 2 == 0 { T::one() } else { -T::one() };
        let mut c = [uniform(rng, -h, h), uniform(rng, -h, h), uniform(rng, -h, h)];
        c[axis] = sign * h;
        let mut nrm = Vector3::zeros();
        nrm[axis] = sign;
        out.points.push(Point3::new(c[0], c[1], c[2]));
        out.normals.push(nrm);
    }
    out
}

/// `n` points uniform inside a ball.
pub fn ball<T: Real>(center: Point3<T>, radius: T, n: usize, rng: &mut impl Rng) -> Vec<Point3<T>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = Vector3::new(
            uniform(rng, -T::one(), T::one()),
            uniform(rng, -T::one(), T::one()),
            uniform(rng, -T::one(), T::one()),
        );
        if v.norm_squared() <= T::one() {
            out.push(center + v * radius);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_surfaces_with_unit_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prims: [PrimitiveParams<f64>; 4] = [
            PrimitiveParams::plane(Vector3::new(1.0, -1.0, 0.5), 0.2).unwrap(),
            PrimitiveParams::sphere(Point3::new(0.3, 0.1, 0.0), 0.7).unwrap(),
            PrimitiveParams::cylinder(Vector3::new(0.0, 1.0, 1.0), Point3::new(1.0, 0.0, 0.0), 0.3).unwrap(),
            PrimitiveParams::cone(Point3::new(0.0, 0.0, 1.0), Vector3::new(0.2, 0.0, -1.0), 0.6).unwrap(),
        ];
        for prim in prims {
            let s = sample_primitive(&prim, 500, &mut rng);
            for (p, n) in s.points.iter().zip(&s.normals) {
                assert!(prim.distance(p) < 1e-9, "{prim:?}");
                assert!((n.norm() - 1.0).abs() < 1e-12);
                // moving along the normal changes the distance at unit rate
                assert!((prim.distance(&(p + n * 1e-3)) - 1e-3).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn scenes_are_labelled_and_deterministic() {
        let a = three_primitives::<f64>(3000, 0.005, 7);
        let b = three_primitives::<f64>(3000, 0.005, 7);
        assert_eq!(a.cloud.len(), 3000);
        assert_eq!(a.cloud.positions(), b.cloud.positions());
        let labels = a.labels();
        assert!((0..3).all(|k| labels.iter().filter(|&&l| l == k).count() > 300));
        let s = two_planes::<f64>(100, 0.5, 1);
        assert_eq!(s.per_point_primitives()[150], s.primitives[1]);
    }
}
