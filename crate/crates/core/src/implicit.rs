//! Unsigned-distance labels for query points, scene cropping, and the
//! reconstruction losses (L1 field losses, BCE, Chamfer, exact EMD).

use nalgebra::{DMatrix, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{assignment_cost, min_cost_assignment};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::fmat::Fmat;
use crate::index::NeighborIndex;
use crate::scalar::{cmp_real, Real};

/// Bounding-box inflation for uniform queries.
pub const BOX_INFLATION: f64 = 0.05;
/// Occupancy proxy threshold as a fraction of the cloud diameter.
pub const DEFAULT_OCCUPANCY_FRACTION: f64 = 0.01;
pub const BCE_CLAMP: f64 = 1e-7;
pub const MAX_EMD_POINTS: usize = 4096;
/// Fewest points a crop may leave.
pub const MIN_CROP_REMAINING: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSamples<T: Real> {
    pub queries: Vec<Point3<T>>,
    pub udf: Vec<T>,
    pub occupancy: Option<Vec<bool>>,
    pub sdf: Option<Vec<T>>,
    /// Threshold used when `occupancy` is the `udf < τ` proxy.
    pub occupancy_tau: Option<T>,
}

/// Exact nearest-point distance of every query.
pub fn sample_udf<T: Real>(index: &NeighborIndex<T>, queries: &[Point3<T>]) -> Result<ImplicitSamples<T>> {
    if index.is_empty() {
        return Err(Error::ZeroPoints);
    }
    let udf = queries.par_iter().map(|q| index.nearest(q).distance()).collect();
    Ok(ImplicitSamples {
        queries: queries.to_vec(),
        udf,
        occupancy: None,
        sdf: None,
        occupancy_tau: None,
    })
}

impl<T: Real> ImplicitSamples<T> {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Occupancy stand-in: a query is "occupied" when udf < τ. Point clouds
    /// carry no inside/outside, so this is flagged through `occupancy_tau`.
    pub fn with_occupancy_proxy(mut self, tau: T) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite_value() {
            return Err(Error::invalid("occupancy threshold must be positive"));
        }
        self.occupancy = Some(self.udf.iter().map(|&u| u < tau).collect());
        self.occupancy_tau = Some(tau);
        Ok(self)
    }

    pub fn queries_fmat(&self) -> Fmat {
        let rows: Vec<[T; 3]> = self.queries.iter().map(|q| [q.x, q.y, q.z]).collect();
        Fmat::from_rows(&rows)
    }

    pub fn udf_fmat(&self) -> Fmat {
        Fmat::column(&self.udf)
    }

    /// `x,y,z,udf[,occupancy]` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,udf");
        if self.occupancy.is_some() {
            out.push_str(",occupancy");
        }
        out.push('\n');
        for (i, q) in self.queries.iter().enumerate() {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?}",
                q.x.as_f64(),
                q.y.as_f64(),
                q.z.as_f64(),
                self.udf[i].as_f64()
            ));
            if let Some(occ) = &self.occupancy {
                out.push_str(if occ[i] { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// τ = fraction × diameter of the cloud.
pub fn occupancy_threshold<T: Real>(cloud: &PointCloud<T>, fraction: f64) -> T {
    cloud.diameter() * T::lit(fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMix {
    pub uniform: f64,
    pub near_surface: f64,
    /// Standard deviation of the Gaussian offset of near-surface queries.
    pub sigma: f64,
}

impl Default for QueryMix {
    fn default() -> Self {
        Self {
            uniform: 0.5,
            near_surface: 0.5,
            sigma: 0.01,
        }
    }
}

impl QueryMix {
    pub fn uniform_only() -> Self {
        Self {
            uniform: 1.0,
            near_surface: 0.0,
            sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.uniform >= 0.0
            && self.near_surface >= 0.0
            && (self.uniform + self.near_surface - 1.0).abs() < 1e-9
            && self.sigma >= 0.0
            && self.sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "query mix must be two nonnegative fractions summing to 1 and sigma ≥ 0, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet<T: Real> {
    /// Uniform-box queries first, then near-surface ones.
    pub points: Vec<Point3<T>>,
    pub uniform: usize,
    pub near_surface: usize,
}

/// Corners of the bounding box grown by `BOX_INFLATION` of its extent on
/// every side (a flat axis grows by the same share of the largest extent).
pub fn inflated_box<T: Real>(cloud: &PointCloud<T>) -> (Point3<T>, Point3<T>) {
    let (lo, hi) = cloud.bounding_box();
    let ext = hi - lo;
    let largest = ext.max();
    let mut a = lo;
    let mut b = hi;
    for k in 0..3 {
        let e = if ext[k] > T::zero() { ext[k] } else { largest };
        let pad = e * T::lit(BOX_INFLATION);
        a[k] -= pad;
        b[k] += pad;
    }
    (a, b)
}

pub fn make_query_set<T: Real>(cloud: &PointCloud<T>, count: usize, mix: &QueryMix, seed: u64) -> Result<QuerySet<T>> {
    if count == 0 {
        return Err(Error::invalid("query count must be positive"));
    }
    mix.validate()?;
    let uniform = ((count as f64) * mix.uniform).round() as usize;
    let uniform = uniform.min(count);
    let near = count - uniform;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = inflated_box(cloud);
    let mut points = Vec::with_capacity(count);
    for _ in 0..uniform {
        let mut q = lo;
        for k in 0..3 {
            let t: f64 = rng.random();
            q[k] = lo[k] + (hi[k] - lo[k]) * T::lit(t);
        }
        points.push(q);
    }
    let sigma = T::lit(mix.sigma);
    for _ in 0..near {
        let p = cloud.point(rng.random_range(0..cloud.len()));
        let mut q = *p;
        for k in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            q[k] += sigma * T::lit(z);
        }
        points.push(q);
    }
    Ok(QuerySet {
        points,
        uniform,
        near_surface: near,
    })
}

/// Removes `ratio` of the points around a seeded random cloud point by
/// growing an axis-aligned box (shaped like the bounding box) around it.
/// The box is the smallest one whose removed share lies within ±1% of
/// `ratio`; surviving points are copied unchanged.
pub fn crop_scene<T: Real>(cloud: &PointCloud<T>, ratio: f64, seed: u64) -> Result<PointCloud<T>> {
    if !(0.0..=0.5).contains(&ratio) {
        return Err(Error::invalid(format!("crop ratio {ratio} outside [0, 0.5]")));
    }
    let n = cloud.len();
    if ratio == 0.0 {
        return Ok(cloud.clone());
    }
    let target = (ratio * n as f64).round() as usize;
    if n - target < MIN_CROP_REMAINING {
        return Err(Error::invalid(format!(
            "cropping {ratio} of {n} points would leave fewer than {MIN_CROP_REMAINING}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = *cloud.point(rng.random_range(0..n));
    let (lo, hi) = cloud.bounding_box();
    let ext = hi - lo;
    let largest = ext.max();
    let scale: Vec<T> = (0..3)
        .map(|k| {
            let e = if ext[k] > T::zero() { ext[k] } else { largest };
            if e > T::zero() { e } else { T::one() }
        })
        .collect();
    // normalised Chebyshev distance: the point leaves once the box reaches it
    let reach: Vec<T> = cloud
        .positions()
        .iter()
        .map(|p| (0..3).map(|k| (p[k] - center[k]).abs() / scale[k]).fold(T::zero(), |a, b| a.max(b)))
        .collect();
    let mut sorted = reach.clone();
    sorted.sort_by(|a, b| cmp_real(*a, *b));
    let tol = (0.01 * n as f64).floor() as usize;
    let (lo_n, hi_n) = (target.saturating_sub(tol), target + tol);
    // smallest box removing at least lo_n points; ties may push it further
    let mut chosen = None;
    let mut k = lo_n.max(1);
    while k <= hi_n.min(n) {
        let h = sorted[k - 1];
        let removed = sorted.partition_point(|&d| d <= h);
        if removed >= lo_n && removed <= hi_n {
            chosen = Some(h);
            break;
        }
        k = removed + 1;
    }
    let Some(h) = chosen else {
        return Err(Error::Degenerate(format!(
            "no box around the crop centre removes {ratio} ± 1% of the points (coincident points)"
        )));
    };
    let keep: Vec<usize> = (0..n).filter(|&i| reach[i] > h).collect();
    if keep.len() < MIN_CROP_REMAINING {
        return Err(Error::invalid("crop would leave fewer than 16 points"));
    }
    cloud.subset(&keep)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { expected: b, actual: a });
    }
    if a == 0 {
        return Err(Error::invalid("empty loss input"));
    }
    Ok(())
}

/// mean ‖pred| − gt|.
pub fn loss_udf<T: Real>(pred: &[T], gt: &[T]) -> Result<T> {
    check_lengths(pred.len(), gt.len())?;
    let s = pred.iter().zip(gt).fold(T::zero(), |a, (p, g)| a + (p.abs() - *g).abs());
    Ok(s / T::from_count(pred.len()))
}

/// mean |pred − gt|.
pub fn loss_sdf<T: Real>(pred: &[T], gt: &[T]) -> Result<T> {
    check_lengths(pred.len(), gt.len())?;
    let s = pred.iter().zip(gt).fold(T::zero(), |a, (p, g)| a + (*p - *g).abs());
    Ok(s / T::from_count(pred.len()))
}

/// Mean binary cross-entropy of sigmoid(logit) against the labels, with
/// probabilities clamped to [1e-7, 1 − 1e-7].
pub fn loss_occ<T: Real>(logits: &[T], gt: &[bool]) -> Result<T> {
    check_lengths(logits.len(), gt.len())?;
    let eps = T::lit(BCE_CLAMP);
    let one = T::one();
    let s = logits.iter().zip(gt).fold(T::zero(), |a, (z, &y)| {
        let p = (one / (one + (-*z).exp())).max(eps).min(one - eps);
        a - if y { p.ln() } else { (one - p).ln() }
    });
    Ok(s / T::from_count(logits.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Σ over both directions of the nearest distance.
    #[default]
    Sum,
    /// Each direction averaged over its own set, then added.
    Mean,
}

fn nearest_sum<T: Real>(from: &[Point3<T>], to: &[Point3<T>]) -> T {
    let index = NeighborIndex::from_points(to.to_vec());
    from.par_iter()
        .map(|p| index.nearest(p).distance())
        .collect::<Vec<T>>()
        .into_iter()
        .fold(T::zero(), |a, b| a + b)
}

pub fn chamfer<T: Real>(a: &[Point3<T>], b: &[Point3<T>], reduction: Reduction) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty set"));
    }
    let ab = nearest_sum(a, b);
    let ba = nearest_sum(b, a);
    Ok(match reduction {
        Reduction::Sum => ab + ba,
        Reduction::Mean => ab / T::from_count(a.len()) + ba / T::from_count(b.len()),
    })
}

/// Minimum total Euclidean cost over bijections (exact assignment).
pub fn emd<T: Real>(a: &[Point3<T>], b: &[Point3<T>]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() > MAX_EMD_POINTS {
        return Err(Error::invalid(format!(
            "exact EMD is limited to {MAX_EMD_POINTS} points, got {}",
            a.len()
        )));
    }
    if a.is_empty() {
        return Ok(T::zero());
    }
    let cost = DMatrix::from_fn(a.len(), b.len(), |i, j| (a[i] - b[j]).norm());
    let assignment = min_cost_assignment(&cost)?;
    Ok(assignment_cost(&cost, &assignment))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub uniform: usize,
    pub near_surface: usize,
    pub total: usize,
}

/// Sidecar of a persisted sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitManifest {
    pub source: String,
    pub seed: u64,
    pub mix: QueryMix,
    pub counts: QueryCounts,
    /// Present when occupancy is the `udf < τ` proxy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupancy_proxy_tau: Option<f64>,
}

impl ImplicitManifest {
    pub fn new<T: Real>(source: impl Into<String>, seed: u64, mix: QueryMix, set: &QuerySet<T>) -> Self {
        Self {
            source: source.into(),
            seed,
            mix,
            counts: QueryCounts {
                uniform: set.uniform,
                near_surface: set.near_surface,
                total: set.points.len(),
            },
            occupancy_proxy_tau: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| Point3::new(rng.random(), rng.random(), rng.random())).collect()).unwrap()
    }

    #[test]
    fn udf_small_cases() {
        let cloud = PointCloud::from_slices(&[[0.0, 0.0, 0.0]]).unwrap();
        let index = NeighborIndex::new(&cloud);
        let s = sample_udf(&index, &[Point3::new(0.0, 0.0, 2.0), Point3::origin()]).unwrap();
        assert_eq!(s.udf, vec![2.0, 0.0]);
        let s = s.with_occupancy_proxy(0.5).unwrap();
        assert_eq!(s.occupancy, Some(vec![false, true]));
        assert!(s.to_csv().starts_with("x,y,z,udf,occupancy\n"));
    }

    #[test]
    fn query_mix_contract() {
        let cloud = random_cloud(500, 1);
        let all_uniform = make_query_set(&cloud, 400, &QueryMix::uniform_only(), 3).unwrap();
        let (lo, hi) = inflated_box(&cloud);
        assert!(all_uniform
            .points
            .iter()
            .all(|q| (0..3).all(|k| q[k] >= lo[k] && q[k] <= hi[k])));
        let mix = QueryMix::default();
        let a = make_query_set(&cloud, 1000, &mix, 7).unwrap();
        assert_eq!(a, make_query_set(&cloud, 1000, &mix, 7).unwrap());
        assert_eq!((a.uniform, a.near_surface), (500, 500));
        let s = sample_udf(&NeighborIndex::new(&cloud), &a.points).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&s.udf[500..]) < mean(&s.udf[..500]));
        assert!(make_query_set(&cloud, 0, &mix, 7).is_err());
        let bad = QueryMix {
            uniform: 0.7,
            ..mix
        };
        assert!(make_query_set(&cloud, 10, &bad, 7).is_err());
    }

    #[test]
    fn crop_contract() {
        let cloud = random_cloud(10_000, 2);
        assert_eq!(crop_scene(&cloud, 0.0, 1).unwrap(), cloud);
        let c = crop_scene(&cloud, 0.5, 4).unwrap();
        assert!((c.len() as i64 - 5000).abs() <= 100, "{}", c.len());
        assert_eq!(c, crop_scene(&cloud, 0.5, 4).unwrap());
        // survivors are original points, bit for bit
        let mut orig: Vec<[u64; 3]> = cloud
            .positions()
            .iter()
            .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
            .collect();
        orig.sort_unstable();
        for p in c.positions() {
            assert!(orig.binary_search(&[p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).is_ok());
        }
        assert!(crop_scene(&cloud, 0.6, 4).is_err());
        assert!(crop_scene(&random_cloud(30, 1), 0.5, 4).is_err());
    }

    #[test]
    fn losses() {
        let gt = [0.5f64, 1.0, 0.0];
        assert_eq!(loss_udf(&gt, &gt).unwrap(), 0.0);
        assert_eq!(loss_udf(&[-0.5, -1.0, 0.0], &gt).unwrap(), 0.0);
        assert_eq!(loss_sdf(&gt, &gt).unwrap(), 0.0);
        assert!((loss_sdf(&[1.5, 1.0, 0.0], &gt).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let bce = loss_occ(&[0.0, 0.0], &[true, false]).unwrap();
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-15);
        // clamping keeps confident mistakes finite
        let worst = loss_occ(&[1e4], &[false]).unwrap();
        assert!((worst + (1e-7f64).ln()).abs() < 1e-6);
        assert!(loss_udf(&[1.0], &gt).is_err());
    }

    #[test]
    fn chamfer_and_emd_small() {
        let a = [Point3::new(0.0, 0.0, 0.0)];
        let b = [Point3::new(1.0, 0.0, 0.0)];
        assert_eq!(chamfer(&a, &b, Reduction::Sum).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &a, Reduction::Mean).unwrap(), 0.0);
        assert!(chamfer::<f64>(&a, &[], Reduction::Sum).is_err());
        let p = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let q = [Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0)];
        assert_eq!(emd(&p, &q).unwrap(), 0.0);
        assert!(emd(&p, &a).is_err());
    }
}
