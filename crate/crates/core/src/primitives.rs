//! Parametric surface primitives: point distances, least-squares fitting,
//! RANSAC hypotheses and residual evaluation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::index::NeighborIndex;
use crate::linalg::symmetric_eigen3_asc;
use crate::scalar::{cmp_real, Real};

/// Width of the packed parameter vector.
pub const PACKED_LEN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeLabel {
    Plane,
    Sphere,
    Cylinder,
    Cone,
    /// Accepted on input (e.g. spline patches) but never produced by fitting.
    Other,
}

impl TypeLabel {
    pub const FITTABLE: [TypeLabel; 4] = [
        TypeLabel::Plane,
        TypeLabel::Sphere,
        TypeLabel::Cylinder,
        TypeLabel::Cone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TypeLabel::Plane => "plane",
            TypeLabel::Sphere => "sphere",
            TypeLabel::Cylinder => "cylinder",
            TypeLabel::Cone => "cone",
            TypeLabel::Other => "other",
        }
    }

    /// Points required by `fit_primitive`.
    pub fn min_fit_points(self) -> usize {
        match self {
            TypeLabel::Plane => 3,
            TypeLabel::Sphere => 4,
            TypeLabel::Cylinder | TypeLabel::Cone => 6,
            TypeLabel::Other => usize::MAX,
        }
    }

    /// Points in a RANSAC minimal sample (cylinders and cones use oriented points).
    pub fn minimal_sample(self) -> usize {
        match self {
            TypeLabel::Plane => 3,
            TypeLabel::Sphere => 4,
            TypeLabel::Cylinder => 2,
            TypeLabel::Cone => 3,
            TypeLabel::Other => usize::MAX,
        }
    }

    fn complexity(self) -> usize {
        match self {
            TypeLabel::Plane => 0,
            TypeLabel::Sphere => 1,
            TypeLabel::Cylinder => 2,
            TypeLabel::Cone => 3,
            TypeLabel::Other => 4,
        }
    }
}

impl fmt::Display for TypeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TypeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plane" => Ok(TypeLabel::Plane),
            "sphere" => Ok(TypeLabel::Sphere),
            "cylinder" => Ok(TypeLabel::Cylinder),
            "cone" => Ok(TypeLabel::Cone),
            "other" => Ok(TypeLabel::Other),
            other => Err(Error::invalid(format!("unknown primitive type '{other}'"))),
        }
    }
}

/// Primitive parameters in canonical form.
///
/// Planes keep `d >= 0`; cylinder `center` is the axis point closest to the
/// origin; cylinder axes have their largest-magnitude component positive;
/// cone axes point from the apex into the cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveParams<T: Real> {
    Plane {
        normal: Vector3<T>,
        d: T,
    },
    Sphere {
        center: Point3<T>,
        radius: T,
    },
    Cylinder {
        axis: Vector3<T>,
        center: Point3<T>,
        radius: T,
    },
    Cone {
        apex: Point3<T>,
        axis: Vector3<T>,
        half_angle: T,
    },
}

fn unit<T: Real>(v: Vector3<T>, what: &str) -> Result<Vector3<T>> {
    let n = v.norm();
    if !n.is_finite_value() || n <= T::machine_eps() {
        return Err(Error::invalid(format!("{what} must be a non-zero finite vector")));
    }
    Ok(v / n)
}

fn canonical_direction<T: Real>(v: Vector3<T>) -> Vector3<T> {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < T::zero() {
        -v
    } else {
        v
    }
}

fn finite_point<T: Real>(p: &Point3<T>, what: &str) -> Result<()> {
    if p.coords.iter().all(|c| c.is_finite_value()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl<T: Real> PrimitiveParams<T> {
    pub fn plane(normal: Vector3<T>, d: T) -> Result<Self> {
        let mut n = unit(normal, "plane normal")?;
        let mut d = d;
        if !d.is_finite_value() {
            return Err(Error::NonFinite("plane offset".into()));
        }
        if d < T::zero() {
            n = -n;
            d = -d;
        } else if d == T::zero() {
            n = canonical_direction(n);
        }
        Ok(Self::Plane { normal: n, d })
    }

    /// Plane through `point` with the given normal.
    pub fn plane_through(point: &Point3<T>, normal: Vector3<T>) -> Result<Self> {
        let n = unit(normal, "plane normal")?;
        Self::plane(n, n.dot(&point.coords))
    }

    pub fn sphere(center: Point3<T>, radius: T) -> Result<Self> {
        finite_point(&center, "sphere center")?;
        if !(radius > T::zero()) || !radius.is_finite_value() {
            return Err(Error::invalid("sphere radius must be positive"));
        }
        Ok(Self::Sphere { center, radius })
    }

    pub fn cylinder(axis: Vector3<T>, point_on_axis: Point3<T>, radius: T) -> Result<Self> {
        let a = canonical_direction(unit(axis, "cylinder axis")?);
        finite_point(&point_on_axis, "cylinder center")?;
        if !(radius > T::zero()) || !radius.is_finite_value() {
            return Err(Error::invalid("cylinder radius must be positive"));
        }
        let c = point_on_axis.coords;
        let center = Point3::from(c - a * a.dot(&c));
        Ok(Self::Cylinder {
            axis: a,
            center,
            radius,
        })
    }

    pub fn cone(apex: Point3<T>, axis: Vector3<T>, half_angle: T) -> Result<Self> {
        let a = unit(axis, "cone axis")?;
        finite_point(&apex, "cone apex")?;
        if !(half_angle > T::zero() && half_angle < T::frac_pi_2()) {
            return Err(Error::invalid("cone half-angle must lie in (0, pi/2)"));
        }
        Ok(Self::Cone {
            apex,
            axis: a,
            half_angle,
        })
    }

    pub fn type_label(&self) -> TypeLabel {
        match self {
            Self::Plane { .. } => TypeLabel::Plane,
            Self::Sphere { .. } => TypeLabel::Sphere,
            Self::Cylinder { .. } => TypeLabel::Cylinder,
            Self::Cone { .. } => TypeLabel::Cone,
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Point3<T>) -> T {
        match *self {
            Self::Plane { normal, d } => (p.coords.dot(&normal) - d).abs(),
            Self::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Self::Cylinder {
                axis,
                center,
                radius,
            } => {
                let v = p - center;
                let radial = v - axis * axis.dot(&v);
                (radial.norm() - radius).abs()
            }
            Self::Cone {
                apex,
                axis,
                half_angle,
            } => {
                let v = p - apex;
                let len = v.norm();
                if len == T::zero() {
                    return T::zero();
                }
                // angle to the axis; atan2 form of the clamped arccos
                let along = axis.dot(&v);
                let across = axis.cross(&v).norm();
                let phi = across.atan2(along);
                let delta = phi - half_angle;
                if delta >= T::frac_pi_2() {
                    len
                } else {
                    len * delta.sin().abs()
                }
            }
        }
    }

    /// Applies a rigid motion to the surface.
    pub fn transformed(&self, iso: &Isometry3<T>) -> Self {
        let rot = iso.rotation;
        let t = iso.translation.vector;
        let out = match *self {
            Self::Plane { normal, d } => {
                let n = rot * normal;
                Self::plane(n, d + n.dot(&t))
            }
            Self::Sphere { center, radius } => Self::sphere(iso * center, radius),
            Self::Cylinder {
                axis,
                center,
                radius,
            } => Self::cylinder(rot * axis, iso * center, radius),
            Self::Cone {
                apex,
                axis,
                half_angle,
            } => Self::cone(iso * apex, rot * axis, half_angle),
        };
        out.expect("rigid motion preserves validity")
    }

    /// Fixed 22-slot encoding; slots of other types are zero.
    pub fn to_packed(&self) -> [T; PACKED_LEN] {
        let mut v = [T::zero(); PACKED_LEN];
        match *self {
            Self::Plane { normal, d } => {
                v[0..3].copy_from_slice(normal.as_slice());
                v[3] = d;
            }
            Self::Sphere { center, radius } => {
                v[4..7].copy_from_slice(center.coords.as_slice());
                v[7] = radius;
            }
            Self::Cylinder {
                axis,
                center,
                radius,
            } => {
                v[8..11].copy_from_slice(axis.as_slice());
                v[11..14].copy_from_slice(center.coords.as_slice());
                v[14] = radius;
            }
            Self::Cone {
                apex,
                axis,
                half_angle,
            } => {
                v[15..18].copy_from_slice(apex.coords.as_slice());
                v[18..21].copy_from_slice(axis.as_slice());
                v[21] = half_angle;
            }
        }
        v
    }

    pub fn from_packed(label: TypeLabel, v: &[T]) -> Result<Self> {
        if v.len() != PACKED_LEN {
            return Err(Error::LengthMismatch {
                expected: PACKED_LEN,
                actual: v.len(),
            });
        }
        let v3 = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
        match label {
            TypeLabel::Plane => Self::plane(v3(0), v[3]),
            TypeLabel::Sphere => Self::sphere(Point3::from(v3(4)), v[7]),
            TypeLabel::Cylinder => Self::cylinder(v3(8), Point3::from(v3(11)), v[14]),
            TypeLabel::Cone => Self::cone(Point3::from(v3(15)), v3(18), v[21]),
            TypeLabel::Other => Err(Error::invalid("type 'other' has no parameters")),
        }
    }

    pub fn to_record(&self) -> PrimitiveRecord {
        let a = |v: &Vector3<T>| [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()];
        match self {
            Self::Plane { normal, d } => PrimitiveRecord::Plane {
                normal: a(normal),
                d: d.as_f64(),
            },
            Self::Sphere { center, radius } => PrimitiveRecord::Sphere {
                center: a(&center.coords),
                radius: radius.as_f64(),
            },
            Self::Cylinder {
                axis,
                center,
                radius,
            } => PrimitiveRecord::Cylinder {
                axis: a(axis),
                center: a(&center.coords),
                radius: radius.as_f64(),
            },
            Self::Cone {
                apex,
                axis,
                half_angle,
            } => PrimitiveRecord::Cone {
                apex: a(&apex.coords),
                axis: a(axis),
                half_angle: half_angle.as_f64(),
            },
        }
    }

    pub fn from_record(r: &PrimitiveRecord) -> Result<Self> {
        let v = |a: &[f64; 3]| Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
        match r {
            PrimitiveRecord::Plane { normal, d } => Self::plane(v(normal), T::lit(*d)),
            PrimitiveRecord::Sphere { center, radius } => {
                Self::sphere(Point3::from(v(center)), T::lit(*radius))
            }
            PrimitiveRecord::Cylinder {
                axis,
                center,
                radius,
            } => Self::cylinder(v(axis), Point3::from(v(center)), T::lit(*radius)),
            PrimitiveRecord::Cone {
                apex,
                axis,
                half_angle,
            } => Self::cone(Point3::from(v(apex)), v(axis), T::lit(*half_angle)),
        }
    }

    /// Largest absolute difference between packed vectors; the usual way to
    /// compare canonical parameters.
    pub fn max_param_diff(&self, other: &Self) -> T {
        if self.type_label() != other.type_label() {
            return T::infinity();
        }
        self.to_packed()
            .iter()
            .zip(other.to_packed().iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |x, y| x.max(y))
    }
}

/// JSON form of a primitive: `{"type": "...", ...params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PrimitiveRecord {
    Plane { normal: [f64; 3], d: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    Cylinder { axis: [f64; 3], center: [f64; 3], radius: f64 },
    Cone { apex: [f64; 3], axis: [f64; 3], half_angle: f64 },
}

/// Mean distance from `samples` to the surface.
pub fn residual_error<T: Real>(prim: &PrimitiveParams<T>, samples: &[Point3<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::ZeroPoints);
    }
    let sum = samples
        .iter()
        .fold(T::zero(), |acc, p| acc + prim.distance(p));
    Ok(sum / T::from_count(samples.len()))
}

// ---------------------------------------------------------------------------
// least-squares fitting

#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T: Real> {
    pub params: PrimitiveParams<T>,
    /// False when the iterative refinement hit its iteration cap.
    pub converged: bool,
    pub iterations: usize,
    /// Root-mean-square point distance.
    pub rms: T,
}

pub const LM_MAX_ITERS: usize = 100;
pub const LM_TOL: f64 = 1e-10;

fn rms_of<T: Real>(prim: &PrimitiveParams<T>, pts: &[Point3<T>]) -> T {
    let s = pts.iter().fold(T::zero(), |acc, p| {
        let d = prim.distance(p);
        acc + d * d
    });
    (s / T::from_count(pts.len())).sqrt()
}

fn covariance_about<T: Real>(pts: &[Point3<T>], c: &Point3<T>) -> Matrix3<T> {
    let mut m = Matrix3::zeros();
    for p in pts {
        let v = p - c;
        m += v * v.transpose();
    }
    m / T::from_count(pts.len())
}

fn mean_point<T: Real>(pts: &[Point3<T>]) -> Point3<T> {
    let mut s = Vector3::zeros();
    for p in pts {
        s += p.coords;
    }
    Point3::from(s / T::from_count(pts.len()))
}

fn fit_plane<T: Real>(pts: &[Point3<T>]) -> Result<Fit<T>> {
    let c = mean_point(pts);
    let cov = covariance_about(pts, &c);
    let (vals, vecs) = symmetric_eigen3_asc(&cov);
    if vals[1] <= vals[2] * T::lit(1e-12) {
        return Err(Error::Degenerate("plane fit on collinear points".into()));
    }
    let params = PrimitiveParams::plane_through(&c, vecs.column(0).into_owned())?;
    Ok(Fit {
        rms: rms_of(&params, pts),
        params,
        converged: true,
        iterations: 0,
    })
}

fn solve_least_squares<T: Real>(a: DMatrix<T>, b: DVector<T>) -> Option<DVector<T>> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |x, &y| x.max(y));
    let smin = svd
        .singular_values
        .iter()
        .fold(T::infinity(), |x, &y| x.min(y));
    if smax <= T::zero() || smin <= smax * T::lit(1e-12) {
        return None;
    }
    svd.solve(&b, T::zero()).ok()
}

fn fit_sphere<T: Real>(pts: &[Point3<T>]) -> Result<Fit<T>> {
    let c = mean_point(pts);
    let cov = covariance_about(pts, &c);
    let (vals, _) = symmetric_eigen3_asc(&cov);
    if vals[0] <= vals[2] * T::lit(1e-12) {
        return Err(Error::Degenerate("sphere fit on coplanar points".into()));
    }
    // |q|^2 = 2 q·o + e with q = p - c centered for conditioning
    let n = pts.len();
    let two = T::lit(2.0);
    let a = DMatrix::from_fn(n, 4, |i, j| {
        if j < 3 {
            two * (pts[i][j] - c[j])
        } else {
            T::one()
        }
    });
    let b = DVector::from_fn(n, |i, _| (pts[i] - c).norm_squared());
    let sol = solve_least_squares(a, b)
        .ok_or_else(|| Error::Degenerate("singular sphere system".into()))?;
    let o = Vector3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + o.norm_squared();
    if !(r2 > T::zero()) {
        return Err(Error::Degenerate("sphere fit produced non-positive radius".into()));
    }
    let mut center = Point3::from(c.coords + o);
    let mut radius = r2.sqrt();
    // Gauss–Newton on geometric residuals |p - o| - r
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..LM_MAX_ITERS {
        iterations += 1;
        let mut jtj = nalgebra::Matrix4::<T>::zeros();
        let mut jtr = nalgebra::Vector4::<T>::zeros();
        for p in pts {
            let v = p - center;
            let len = v.norm();
            if len == T::zero() {
                continue;
            }
            let res = len - radius;
            let g = -v / len;
            let row = nalgebra::Vector4::new(g.x, g.y, g.z, -T::one());
            jtj += row * row.transpose();
            jtr += row * res;
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        center += Vector3::new(step[0], step[1], step[2]);
        radius += step[3];
        let scale = T::one() + center.coords.norm() + radius;
        if step.norm() <= T::lit(LM_TOL) * scale {
            converged = true;
            break;
        }
    }
    let params = PrimitiveParams::sphere(center, radius.abs())?;
    Ok(Fit {
        rms: rms_of(&params, pts),
        params,
        converged,
        iterations,
    })
}

/// Minimal Levenberg–Marquardt on a dense residual function with central
/// difference Jacobians.
pub(crate) fn levenberg_marquardt<T: Real, F>(
    start: DVector<T>,
    residuals: F,
    max_iters: usize,
    tol: T,
) -> (DVector<T>, bool, usize)
where
    F: Fn(&DVector<T>) -> DVector<T>,
{
    let mut x = start;
    let mut r = residuals(&x);
    let mut cost = r.norm_squared();
    let mut mu = T::lit(1e-3);
    let step_base = T::machine_eps().powf(T::lit(1.0 / 3.0));
    let p = x.len();
    for it in 1..=max_iters {
        let mut jac = DMatrix::zeros(r.len(), p);
        for j in 0..p {
            let h = step_base * (T::one() + x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let col = (residuals(&xp) - residuals(&xm)) / (h + h);
            jac.set_column(j, &col);
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() <= tol * tol {
            return (x, true, it);
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for i in 0..p {
                damped[(i, i)] += mu * (T::one() + jtj[(i, i)]);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                mu *= T::lit(10.0);
                continue;
            };
            let xn = &x + &step;
            let rn = residuals(&xn);
            let cn = rn.norm_squared();
            if cn.is_finite_value() && cn <= cost {
                let small = step.norm() <= tol * (T::one() + x.norm());
                let flat = cost - cn <= tol * tol * (T::one() + cost);
                x = xn;
                r = rn;
                cost = cn;
                mu = (mu * T::lit(0.3)).max(T::lit(1e-15));
                accepted = true;
                if small || flat || cost <= T::machine_eps() * T::machine_eps() {
                    return (x, true, it);
                }
                break;
            }
            mu *= T::lit(4.0);
        }
        if !accepted {
            // no descent direction left: local minimum to working precision
            return (x, true, it);
        }
    }
    (x, false, max_iters)
}

/// Unoriented PCA normals of a point subset (k nearest within the subset).
pub(crate) fn subset_normals<T: Real>(pts: &[Point3<T>]) -> Vec<Vector3<T>> {
    let index = NeighborIndex::from_points(pts.to_vec());
    let k = pts.len().min(16);
    pts.iter()
        .map(|p| {
            let nn = index.knn(p, k).expect("clamped k");
            let nb: Vec<Point3<T>> = nn.iter().map(|n| pts[n.index]).collect();
            let c = mean_point(&nb);
            let (_, vecs) = symmetric_eigen3_asc(&covariance_about(&nb, &c));
            vecs.column(0).into_owned()
        })
        .collect()
}

fn orthonormal_frame<T: Real>(a: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let helper = if a.x.abs() < T::lit(0.9) {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = a.cross(&helper).normalize();
    let v = a.cross(&u);
    (u, v)
}

fn fit_circle_2d<T: Real>(xy: &[(T, T)]) -> Option<(T, T, T)> {
    let n = xy.len();
    let (mx, my) = xy.iter().fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (mx / T::from_count(n), my / T::from_count(n));
    let two = T::lit(2.0);
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => two * (xy[i].0 - mx),
        1 => two * (xy[i].1 - my),
        _ => T::one(),
    });
    let b = DVector::from_fn(n, |i, _| {
        let (x, y) = (xy[i].0 - mx, xy[i].1 - my);
        x * x + y * y
    });
    let s = solve_least_squares(a, b)?;
    let r2 = s[2] + s[0] * s[0] + s[1] * s[1];
    if !(r2 > T::zero()) {
        return None;
    }
    Some((s[0] + mx, s[1] + my, r2.sqrt()))
}

fn normal_axis_candidates<T: Real>(normals: &[Vector3<T>]) -> Vec<Vector3<T>> {
    let mut m = Matrix3::zeros();
    for n in normals {
        m += n * n.transpose();
    }
    let (_, vecs) = symmetric_eigen3_asc(&m);
    (0..3).map(|i| vecs.column(i).into_owned()).collect()
}

fn cylinder_residuals<T: Real>(pts: &[Point3<T>]) -> impl Fn(&DVector<T>) -> DVector<T> + '_ {
    move |x: &DVector<T>| {
        let a = Vector3::new(x[0], x[1], x[2]);
        let norm = a.norm();
        let a = if norm > T::zero() { a / norm } else { Vector3::z() };
        let o = Point3::new(x[3], x[4], x[5]);
        DVector::from_iterator(
            pts.len(),
            pts.iter().map(|p| {
                let v = p - o;
                (v - a * a.dot(&v)).norm() - x[6]
            }),
        )
    }
}

fn fit_cylinder<T: Real>(pts: &[Point3<T>], normals: &[Vector3<T>]) -> Result<Fit<T>> {
    let mut best: Option<Fit<T>> = None;
    for axis in normal_axis_candidates(normals) {
        let (u, v) = orthonormal_frame(&axis);
        let xy: Vec<(T, T)> = pts
            .iter()
            .map(|p| (p.coords.dot(&u), p.coords.dot(&v)))
            .collect();
        let Some((cx, cy, r)) = fit_circle_2d(&xy) else {
            continue;
        };
        let o = u * cx + v * cy;
        let start = DVector::from_vec(vec![axis.x, axis.y, axis.z, o.x, o.y, o.z, r]);
        let (x, converged, iterations) =
            levenberg_marquardt(start, cylinder_residuals(pts), LM_MAX_ITERS, T::lit(LM_TOL));
        let Ok(params) = PrimitiveParams::cylinder(
            Vector3::new(x[0], x[1], x[2]),
            Point3::new(x[3], x[4], x[5]),
            x[6].abs(),
        ) else {
            continue;
        };
        let fit = Fit {
            rms: rms_of(&params, pts),
            params,
            converged,
            iterations,
        };
        if best.as_ref().is_none_or(|b| fit.rms < b.rms) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Degenerate("no cylinder initialization succeeded".into()))
}

fn cone_residuals<T: Real>(pts: &[Point3<T>]) -> impl Fn(&DVector<T>) -> DVector<T> + '_ {
    move |x: &DVector<T>| {
        let apex = Point3::new(x[0], x[1], x[2]);
        let a = Vector3::new(x[3], x[4], x[5]);
        let norm = a.norm();
        let a = if norm > T::zero() { a / norm } else { Vector3::z() };
        let theta = x[6];
        DVector::from_iterator(
            pts.len(),
            pts.iter().map(|p| {
                let v = p - apex;
                let len = v.norm();
                if len == T::zero() {
                    return T::zero();
                }
                let phi = a.cross(&v).norm().atan2(a.dot(&v));
                let delta = phi - theta;
                if delta >= T::frac_pi_2() {
                    len
                } else {
                    len * delta.sin()
                }
            }),
        )
    }
}

fn cone_from_apex_axis<T: Real>(pts: &[Point3<T>], apex: Point3<T>, axis: Vector3<T>) -> Option<DVector<T>> {
    let mut a = axis;
    let mean_along = pts
        .iter()
        .fold(T::zero(), |s, p| s + a.dot(&(p - apex)));
    if mean_along < T::zero() {
        a = -a;
    }
    let mut sum = T::zero();
    let mut count = 0usize;
    for p in pts {
        let v = p - apex;
        if v.norm() > T::zero() {
            sum += a.cross(&v).norm().atan2(a.dot(&v));
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    let lo = T::lit(1e-3);
    let hi = T::frac_pi_2() - lo;
    let theta = (sum / T::from_count(count)).max(lo).min(hi);
    Some(DVector::from_vec(vec![
        apex.x, apex.y, apex.z, a.x, a.y, a.z, theta,
    ]))
}

fn fit_cone<T: Real>(pts: &[Point3<T>], normals: &[Vector3<T>]) -> Result<Fit<T>> {
    // apex: least-squares intersection of the tangent planes
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (p, n) in pts.iter().zip(normals) {
        let nn = n * n.transpose();
        m += nn;
        rhs += nn * p.coords;
    }
    let apex = m
        .lu()
        .solve(&rhs)
        .map(Point3::from)
        .ok_or_else(|| Error::Degenerate("tangent planes do not meet in a point".into()))?;
    let mut candidates = Vec::new();
    // unit directions from the apex lie on a circle around the axis
    let dirs: Vec<Point3<T>> = pts
        .iter()
        .filter_map(|p| {
            let v = p - apex;
            let l = v.norm();
            (l > T::zero()).then(|| Point3::from(v / l))
        })
        .collect();
    if dirs.len() >= 3 {
        let c = mean_point(&dirs);
        let (_, vecs) = symmetric_eigen3_asc(&covariance_about(&dirs, &c));
        candidates.push(vecs.column(0).into_owned());
    }
    candidates.extend(normal_axis_candidates(normals));
    let mut best: Option<Fit<T>> = None;
    for axis in candidates {
        let Some(start) = cone_from_apex_axis(pts, apex, axis) else {
            continue;
        };
        let (x, converged, iterations) =
            levenberg_marquardt(start, cone_residuals(pts), LM_MAX_ITERS, T::lit(LM_TOL));
        let mut a = Vector3::new(x[3], x[4], x[5]);
        let mut theta = x[6];
        // an obtuse half-angle is the same cone with the axis reversed
        if theta > T::frac_pi_2() {
            theta = T::pi() - theta;
            a = -a;
        }
        let Ok(params) = PrimitiveParams::cone(Point3::new(x[0], x[1], x[2]), a, theta.abs()) else {
            continue;
        };
        let fit = Fit {
            rms: rms_of(&params, pts),
            params,
            converged,
            iterations,
        };
        if best.as_ref().is_none_or(|b| fit.rms < b.rms) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Degenerate("no cone initialization succeeded".into()))
}

/// Least-squares fit of one primitive type to a point subset.
///
/// Cylinders and cones use the cloud's normals for initialization, or PCA
/// normals of the subset when the cloud carries none.
pub fn fit_primitive<T: Real>(
    cloud: &PointCloud<T>,
    point_ids: &[usize],
    label: TypeLabel,
) -> Result<Fit<T>> {
    if label == TypeLabel::Other {
        return Err(Error::invalid("cannot fit type 'other'"));
    }
    if point_ids.len() < label.min_fit_points() {
        return Err(Error::Degenerate(format!(
            "{label} fit needs at least {} points, got {}",
            label.min_fit_points(),
            point_ids.len()
        )));
    }
    if let Some(&bad) = point_ids.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::invalid(format!("point id {bad} out of range")));
    }
    let pts: Vec<Point3<T>> = point_ids.iter().map(|&i| *cloud.point(i)).collect();
    match label {
        TypeLabel::Plane => fit_plane(&pts),
        TypeLabel::Sphere => fit_sphere(&pts),
        TypeLabel::Cylinder | TypeLabel::Cone => {
            let normals = match cloud.normals() {
                Some(ns) => point_ids.iter().map(|&i| ns[i]).collect(),
                None => subset_normals(&pts),
            };
            if label == TypeLabel::Cylinder {
                fit_cylinder(&pts, &normals)
            } else {
                fit_cone(&pts, &normals)
            }
        }
        TypeLabel::Other => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// RANSAC

#[derive(Debug, Clone)]
pub struct RansacConfig<T: Real> {
    pub inlier_tol: T,
    pub iters: usize,
    pub seed: u64,
    /// Minimum consensus size; `None` means three minimal samples.
    pub min_inliers: Option<usize>,
    /// Relative inlier surplus a more complex type needs to displace a
    /// simpler one. Zero compares raw counts.
    pub complexity_margin: f64,
}

impl<T: Real> RansacConfig<T> {
    pub fn new(inlier_tol: T, iters: usize, seed: u64) -> Self {
        Self {
            inlier_tol,
            iters,
            seed,
            min_inliers: None,
            complexity_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit<T: Real> {
    pub params: PrimitiveParams<T>,
    /// Members of the input subset within `inlier_tol` of the final surface.
    pub inliers: Vec<usize>,
    /// Consensus size of the winning hypothesis before refitting.
    pub hypothesis_inliers: usize,
    pub refit_converged: bool,
}

/// Hypothesis from a minimal sample of oriented points.
pub(crate) fn minimal_hypothesis<T: Real>(
    label: TypeLabel,
    pts: &[Point3<T>],
    normals: &[Vector3<T>],
) -> Option<PrimitiveParams<T>> {
    match label {
        TypeLabel::Plane => {
            let n = (pts[1] - pts[0]).cross(&(pts[2] - pts[0]));
            let len = n.norm();
            let scale = (pts[1] - pts[0]).norm() * (pts[2] - pts[0]).norm();
            if len <= scale * T::lit(1e-9) {
                return None;
            }
            PrimitiveParams::plane_through(&pts[0], n / len).ok()
        }
        TypeLabel::Sphere => {
            let c = pts[0];
            let rows: Vec<Vector3<T>> = pts[1..4].iter().map(|p| p - c).collect();
            let m = Matrix3::from_rows(&[
                rows[0].transpose() * T::lit(2.0),
                rows[1].transpose() * T::lit(2.0),
                rows[2].transpose() * T::lit(2.0),
            ]);
            let rhs = Vector3::new(
                rows[0].norm_squared(),
                rows[1].norm_squared(),
                rows[2].norm_squared(),
            );
            let det = m.determinant();
            let scale = rows.iter().fold(T::one(), |s, r| s * r.norm() * T::lit(2.0));
            if det.abs() <= scale * T::lit(1e-9) {
                return None;
            }
            let o = m.lu().solve(&rhs)?;
            PrimitiveParams::sphere(Point3::from(c.coords + o), o.norm()).ok()
        }
        TypeLabel::Cylinder => {
            let axis = normals[0].cross(&normals[1]);
            let len = axis.norm();
            if len <= T::lit(1e-6) {
                return None;
            }
            let a = axis / len;
            let (u, v) = orthonormal_frame(&a);
            // intersect the two normal lines in the plane orthogonal to the axis
            let p = |q: &Point3<T>| (q.coords.dot(&u), q.coords.dot(&v));
            let d = |n: &Vector3<T>| (n.dot(&u), n.dot(&v));
            let (p0, p1) = (p(&pts[0]), p(&pts[1]));
            let (d0, d1) = (d(&normals[0]), d(&normals[1]));
            let det = d0.0 * (-d1.1) - d0.1 * (-d1.0);
            if det.abs() <= T::lit(1e-9) {
                return None;
            }
            let bx = p1.0 - p0.0;
            let by = p1.1 - p0.1;
            let t = (bx * (-d1.1) - by * (-d1.0)) / det;
            let cx = p0.0 + t * d0.0;
            let cy = p0.1 + t * d0.1;
            let r = ((p0.0 - cx) * (p0.0 - cx) + (p0.1 - cy) * (p0.1 - cy)).sqrt();
            let center = Point3::from(u * cx + v * cy);
            PrimitiveParams::cylinder(a, center, r).ok()
        }
        TypeLabel::Cone => {
            let m = Matrix3::from_rows(&[
                normals[0].transpose(),
                normals[1].transpose(),
                normals[2].transpose(),
            ]);
            if m.determinant().abs() <= T::lit(1e-6) {
                return None;
            }
            let rhs = Vector3::new(
                normals[0].dot(&pts[0].coords),
                normals[1].dot(&pts[1].coords),
                normals[2].dot(&pts[2].coords),
            );
            let apex = Point3::from(m.lu().solve(&rhs)?);
            let dirs: Vec<Vector3<T>> = pts.iter().map(|p| (p - apex).normalize()).collect();
            let axis = (dirs[1] - dirs[0]).cross(&(dirs[2] - dirs[0]));
            if axis.norm() <= T::lit(1e-9) {
                return None;
            }
            let mut a = axis.normalize();
            if a.dot(&dirs[0]) < T::zero() {
                a = -a;
            }
            let theta = dirs
                .iter()
                .fold(T::zero(), |s, d| s + a.cross(d).norm().atan2(a.dot(d)))
                / T::lit(3.0);
            PrimitiveParams::cone(apex, a, theta).ok()
        }
        TypeLabel::Other => None,
    }
}

fn better<T: Real>(
    cand: (TypeLabel, usize, T),
    best: (TypeLabel, usize, T),
    margin: f64,
) -> bool {
    let (ct, cc, cr) = cand;
    let (bt, bc, br) = best;
    if margin > 0.0 && ct.complexity() != bt.complexity() {
        let steps = (ct.complexity() as f64 - bt.complexity() as f64).abs();
        let factor = 1.0 + margin * steps;
        if ct.complexity() > bt.complexity() {
            return cc as f64 > bc as f64 * factor;
        }
        return cc as f64 * factor >= bc as f64;
    }
    cc > bc || (cc == bc && cmp_real(cr, br) == std::cmp::Ordering::Less)
}

/// Seeded RANSAC over the candidate `types`, refit on the winning consensus.
pub fn ransac_fit<T: Real>(
    cloud: &PointCloud<T>,
    point_ids: &[usize],
    types: &[TypeLabel],
    config: &RansacConfig<T>,
) -> Result<RansacFit<T>> {
    if config.iters == 0 {
        return Err(Error::invalid("RANSAC needs at least one iteration"));
    }
    if !(config.inlier_tol > T::zero()) {
        return Err(Error::invalid("inlier tolerance must be positive"));
    }
    let types: Vec<TypeLabel> = types
        .iter()
        .copied()
        .filter(|t| *t != TypeLabel::Other)
        .collect();
    if types.is_empty() {
        return Err(Error::invalid("no fittable primitive types requested"));
    }
    if let Some(&bad) = point_ids.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::invalid(format!("point id {bad} out of range")));
    }
    let pts: Vec<Point3<T>> = point_ids.iter().map(|&i| *cloud.point(i)).collect();
    let needs_normals = types
        .iter()
        .any(|t| matches!(t, TypeLabel::Cylinder | TypeLabel::Cone));
    let normals: Vec<Vector3<T>> = match (cloud.normals(), needs_normals) {
        (Some(ns), _) => point_ids.iter().map(|&i| ns[i]).collect(),
        (None, true) if pts.len() >= 3 => subset_normals(&pts),
        _ => vec![Vector3::z(); pts.len()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(PrimitiveParams<T>, usize, T)> = None;
    let mut sample = Vec::new();
    for _ in 0..config.iters {
        for &label in &types {
            let k = label.minimal_sample();
            if pts.len() < k {
                continue;
            }
            sample.clear();
            while sample.len() < k {
                let i = rng.random_range(0..pts.len());
                if !sample.contains(&i) {
                    sample.push(i);
                }
            }
            let sp: Vec<Point3<T>> = sample.iter().map(|&i| pts[i]).collect();
            let sn: Vec<Vector3<T>> = sample.iter().map(|&i| normals[i]).collect();
            let Some(h) = minimal_hypothesis(label, &sp, &sn) else {
                continue;
            };
            let mut count = 0;
            let mut resid = T::zero();
            for p in &pts {
                let d = h.distance(p);
                if d <= config.inlier_tol {
                    count += 1;
                    resid += d;
                }
            }
            let replace = match &best {
                None => true,
                Some((bp, bc, br)) => better(
                    (label, count, resid),
                    (bp.type_label(), *bc, *br),
                    config.complexity_margin,
                ),
            };
            if replace {
                best = Some((h, count, resid));
            }
        }
    }
    let (hyp, count, _) = best.ok_or_else(|| Error::NoConsensus("no valid hypothesis".into()))?;
    let min_inliers = config
        .min_inliers
        .unwrap_or(3 * hyp.type_label().minimal_sample());
    if count < min_inliers {
        return Err(Error::NoConsensus(format!(
            "best hypothesis has {count} inliers, need {min_inliers}"
        )));
    }
    let consensus: Vec<usize> = point_ids
        .iter()
        .zip(&pts)
        .filter(|(_, p)| hyp.distance(p) <= config.inlier_tol)
        .map(|(&i, _)| i)
        .collect();
    let (params, refit_converged) = match fit_primitive(cloud, &consensus, hyp.type_label()) {
        Ok(fit) => (fit.params, fit.converged),
        Err(_) => (hyp, false),
    };
    let inliers = point_ids
        .iter()
        .zip(&pts)
        .filter(|(_, p)| params.distance(p) <= config.inlier_tol)
        .map(|(&i, _)| i)
        .collect();
    Ok(RansacFit {
        params,
        inliers,
        hypothesis_inliers: count,
        refit_converged,
    })
}

/// Draws a uniform index sample without replacement (deterministic per rng).
pub(crate) fn sample_indices(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k.min(n)).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    #[test]
    fn axis_aligned_distances() {
        let plane = PrimitiveParams::plane(Vector3::z(), 0.0).unwrap();
        assert_eq!(plane.distance(&p(0.0, 0.0, 1.0)), 1.0);
        let sphere = PrimitiveParams::sphere(Point3::origin(), 1.0).unwrap();
        assert_eq!(sphere.distance(&p(2.0, 0.0, 0.0)), 1.0);
        let cyl = PrimitiveParams::cylinder(Vector3::z(), Point3::origin(), 1.0).unwrap();
        assert!((cyl.distance(&p(1.0, 1.0, 0.0)) - 0.41421356).abs() < 1e-8);
    }

    #[test]
    fn cone_surface_and_apex() {
        let cone = PrimitiveParams::cone(p(0.1, -0.2, 0.3), Vector3::new(1.0, 1.0, 0.0), 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in synth::sample_primitive(&cone, 200, &mut rng).points {
            assert!(cone.distance(&s) < 1e-9);
        }
        assert_eq!(cone.distance(&p(0.1, -0.2, 0.3)), 0.0);
        // behind the apex the nearest surface point is the apex itself
        let behind = p(0.1, -0.2, 0.3) - Vector3::new(1.0, 1.0, 0.0).normalize() * 2.0;
        assert!((cone.distance(&behind) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cone_distance_off_surface() {
        // apex at origin, axis +z, 45 degrees: point on the axis at height h
        // lies h * sin(45°) from the surface
        let cone = PrimitiveParams::cone(Point3::origin(), Vector3::z(), PI / 4.0).unwrap();
        assert!((cone.distance(&p(0.0, 0.0, 2.0)) - 2.0 * (PI / 4.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn plane_canonical_sign() {
        let plane = PrimitiveParams::plane(Vector3::new(0.0, 0.0, -2.0), 3.0).unwrap();
        let PrimitiveParams::Plane { normal, d } = plane else {
            unreachable!()
        };
        assert_eq!(d, 3.0);
        assert_eq!(normal, Vector3::new(0.0, 0.0, -1.0));
        let flipped = PrimitiveParams::plane(Vector3::z(), -2.0).unwrap();
        assert_eq!(flipped, PrimitiveParams::Plane { normal: -Vector3::z(), d: 2.0 });
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(PrimitiveParams::sphere(Point3::origin(), 0.0).is_err());
        assert!(PrimitiveParams::cylinder(Vector3::zeros(), Point3::origin(), 1.0).is_err());
        assert!(PrimitiveParams::cone(Point3::origin(), Vector3::z(), PI / 2.0).is_err());
        assert!(PrimitiveParams::<f64>::from_packed(TypeLabel::Other, &[0.0; 22]).is_err());
    }

    #[test]
    fn packed_and_record_forms() {
        let prims = [
            PrimitiveParams::plane(Vector3::new(1.0, 2.0, 2.0), 0.5).unwrap(),
            PrimitiveParams::sphere(p(1.0, 2.0, 3.0), 0.25).unwrap(),
            PrimitiveParams::cylinder(Vector3::y(), p(1.0, 5.0, 0.0), 0.5).unwrap(),
            PrimitiveParams::cone(p(0.0, 0.0, 1.0), -Vector3::z(), 0.3).unwrap(),
        ];
        for prim in prims {
            let packed = prim.to_packed();
            let back = PrimitiveParams::from_packed(prim.type_label(), &packed).unwrap();
            assert_eq!(back, prim);
            let json = serde_json::to_string(&prim.to_record()).unwrap();
            let rec: PrimitiveRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(PrimitiveParams::<f64>::from_record(&rec).unwrap(), prim);
        }
        let cyl = PrimitiveParams::cylinder(Vector3::y(), p(1.0, 5.0, 0.0), 0.5).unwrap();
        assert_eq!(cyl.to_packed()[11..14], [1.0, 0.0, 0.0]);
        let json = serde_json::to_value(cyl.to_record()).unwrap();
        assert_eq!(json["type"], "cylinder");
    }

    #[test]
    fn residual_error_cases() {
        let sphere = PrimitiveParams::sphere(Point3::origin(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let on = synth::sample_primitive(&sphere, 300, &mut rng).points;
        assert!(residual_error(&sphere, &on).unwrap() < 1e-9);
        let bigger: Vec<Point3<f64>> = on.iter().map(|q| q * 1.1).collect();
        assert!((residual_error(&sphere, &bigger).unwrap() - 0.1).abs() < 1e-9);
        let mixed = vec![p(0.0, 0.0, 0.0), p(3.0, 0.0, 0.0), p(0.0, 0.5, 0.0)];
        let brute = (1.0 + 2.0 + 0.5) / 3.0;
        assert!((residual_error(&sphere, &mixed).unwrap() - brute).abs() < 1e-15);
        assert!(residual_error(&sphere, &[]).is_err());
    }

    #[test]
    fn exact_plane_fit() {
        let pts: Vec<[f64; 3]> = (0..100)
            .map(|i| [(i % 10) as f64 * 0.1, (i / 10) as f64 * 0.13, 2.0])
            .collect();
        let cloud = PointCloud::from_slices(&pts).unwrap();
        let ids: Vec<usize> = (0..100).collect();
        let fit = fit_primitive(&cloud, &ids, TypeLabel::Plane).unwrap();
        let PrimitiveParams::Plane { normal, d } = fit.params else {
            panic!()
        };
        assert!((normal.z.abs() - 1.0).abs() < 1e-12);
        assert!((d - 2.0).abs() < 1e-12);
        let worst = pts
            .iter()
            .map(|c| fit.params.distance(&p(c[0], c[1], c[2])))
            .fold(0.0, f64::max);
        assert!(worst < 1e-9);
    }

    #[test]
    fn degenerate_fits() {
        let line: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let cloud = PointCloud::from_slices(&line).unwrap();
        let ids: Vec<usize> = (0..10).collect();
        assert!(matches!(
            fit_primitive(&cloud, &ids, TypeLabel::Plane),
            Err(Error::Degenerate(_))
        ));
        let flat: Vec<[f64; 3]> = (0..20).map(|i| [(i % 5) as f64, (i / 5) as f64, 0.0]).collect();
        let cloud = PointCloud::from_slices(&flat).unwrap();
        let ids: Vec<usize> = (0..20).collect();
        assert!(fit_primitive(&cloud, &ids, TypeLabel::Sphere).is_err());
        assert!(fit_primitive(&cloud, &ids[..5], TypeLabel::Cone).is_err());
    }

    #[test]
    fn exact_sphere_fit() {
        let sphere = PrimitiveParams::sphere(Point3::origin(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = synth::sample_primitive(&sphere, 400, &mut rng);
        let cloud = s.into_cloud();
        let ids: Vec<usize> = (0..cloud.len()).collect();
        let fit = fit_primitive(&cloud, &ids, TypeLabel::Sphere).unwrap();
        assert!(fit.params.max_param_diff(&sphere) < 1e-6);
    }

    #[test]
    fn ransac_single_exact_primitive_is_seed_independent() {
        let plane = PrimitiveParams::plane(Vector3::new(0.2, 0.1, 1.0), 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = synth::sample_primitive(&plane, 200, &mut rng).into_cloud();
        let ids: Vec<usize> = (0..cloud.len()).collect();
        let mut outputs = Vec::new();
        for seed in 0..5 {
            let cfg = RansacConfig::new(0.01, 50, seed);
            let fit = ransac_fit(&cloud, &ids, &[TypeLabel::Plane], &cfg).unwrap();
            assert_eq!(fit.inliers.len(), cloud.len());
            let worst = cloud
                .positions()
                .iter()
                .map(|q| fit.params.distance(q))
                .fold(0.0, f64::max);
            assert!(worst < 1e-9);
            outputs.push(fit.params);
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn ransac_pure_noise_has_no_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..60)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let cloud = PointCloud::from_slices(&pts).unwrap();
        let ids: Vec<usize> = (0..60).collect();
        let cfg = RansacConfig::new(0.002, 200, 4);
        let err = ransac_fit(&cloud, &ids, &[TypeLabel::Plane], &cfg).unwrap_err();
        assert!(matches!(err, Error::NoConsensus(_)), "{err}");
    }

    #[test]
    fn ransac_rejects_bad_config() {
        let cloud = PointCloud::from_slices(&[[0.0; 3]; 4]).unwrap();
        let ids = [0, 1, 2, 3];
        assert!(ransac_fit(&cloud, &ids, &[TypeLabel::Plane], &RansacConfig::new(0.0, 5, 1)).is_err());
        assert!(ransac_fit(&cloud, &ids, &[TypeLabel::Plane], &RansacConfig::new(0.1, 0, 1)).is_err());
    }
}
