//! Local-PCA features: neighbourhood covariance, oriented normals and
//! surface variation.

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::index::NeighborIndex;
use crate::linalg::symmetric_eigen3_asc;
use crate::scalar::Real;

/// How the neighbourhood of a point is gathered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighborhood<T: Real> {
    /// All points within `r` (inclusive).
    Radius(T),
    /// The `k` nearest points, the query point included.
    Knn(usize),
    /// Points within the mean distance of the `k` nearest; falls back to the
    /// `k` nearest themselves when that ball holds fewer than three points.
    KnnMeanRadius(usize),
}

impl<T: Real> Default for Neighborhood<T> {
    fn default() -> Self {
        Neighborhood::KnnMeanRadius(128)
    }
}

impl<T: Real> Neighborhood<T> {
    pub fn gather(&self, index: &NeighborIndex<T>, q: &Point3<T>) -> Result<(Vec<usize>, T)> {
        match *self {
            Neighborhood::Radius(r) => {
                if !(r > T::zero()) {
                    return Err(Error::invalid("neighbourhood radius must be positive"));
                }
                let ids = index.radius(q, r).into_iter().map(|n| n.index).collect();
                Ok((ids, r))
            }
            Neighborhood::Knn(k) => {
                let nn = index.knn(q, k)?;
                let r = nn.last().map_or(T::zero(), |n| n.distance());
                Ok((nn.into_iter().map(|n| n.index).collect(), r))
            }
            Neighborhood::KnnMeanRadius(k) => {
                let nn = index.knn(q, k)?;
                if nn.is_empty() {
                    return Ok((Vec::new(), T::zero()));
                }
                let sum = nn.iter().fold(T::zero(), |s, n| s + n.distance());
                let r = sum / T::from_count(nn.len());
                let inside: Vec<usize> = nn
                    .iter()
                    .take_while(|n| n.distance() <= r)
                    .map(|n| n.index)
                    .collect();
                if inside.len() >= 3 {
                    Ok((inside, r))
                } else {
                    let r = nn.last().map_or(T::zero(), |n| n.distance());
                    Ok((nn.into_iter().map(|n| n.index).collect(), r))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCovariance<T: Real> {
    pub center: Point3<T>,
    /// Radius of the neighbourhood actually used.
    pub radius: T,
    pub count: usize,
    pub matrix: Matrix3<T>,
    /// Ascending.
    pub eigenvalues: Vector3<T>,
    /// Columns pair with `eigenvalues`.
    pub eigenvectors: Matrix3<T>,
}

impl<T: Real> LocalCovariance<T> {
    /// Mean of `(p - x)(p - x)ᵀ` over the neighbours `x` of `center`.
    pub fn from_neighbors(center: Point3<T>, neighbors: &[Point3<T>], radius: T) -> Result<Self> {
        let mut m = Matrix3::zeros();
        for x in neighbors {
            let v = center - x;
            m += v * v.transpose();
        }
        m /= T::from_count(neighbors.len().max(1));
        // exact symmetry regardless of accumulation order
        let m = (m + m.transpose()) * T::lit(0.5);
        let (eigenvalues, eigenvectors) = symmetric_eigen3_asc(&m);
        Ok(Self {
            center,
            radius,
            count: neighbors.len(),
            matrix: m,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Unit eigenvector of the smallest eigenvalue (unoriented).
    pub fn normal(&self) -> Vector3<T> {
        self.eigenvectors.column(0).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceVariation<T: Real> {
    pub value: T,
    /// Set when all eigenvalues vanish (the value is then 0).
    pub degenerate: bool,
}

/// `λ1 / (λ1 + λ2 + λ3)` clamped to `[0, 1/3]`.
pub fn surface_variation<T: Real>(cov: &LocalCovariance<T>) -> SurfaceVariation<T> {
    surface_variation_of(&cov.eigenvalues)
}

pub fn surface_variation_of<T: Real>(eigenvalues: &Vector3<T>) -> SurfaceVariation<T> {
    let l: Vec<T> = eigenvalues.iter().map(|&v| v.max(T::zero())).collect();
    let sum = l[0] + l[1] + l[2];
    if !(sum > T::zero()) {
        return SurfaceVariation {
            value: T::zero(),
            degenerate: true,
        };
    }
    let third = T::one() / T::lit(3.0);
    let smallest = l[0].min(l[1]).min(l[2]);
    SurfaceVariation {
        value: (smallest / sum).max(T::zero()).min(third),
        degenerate: false,
    }
}

pub fn local_covariance<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    point_id: usize,
    neighborhood: &Neighborhood<T>,
) -> Result<LocalCovariance<T>> {
    if point_id >= cloud.len() {
        return Err(Error::invalid(format!("point id {point_id} out of range")));
    }
    let p = *cloud.point(point_id);
    let (ids, r) = neighborhood.gather(index, &p)?;
    if ids.len() < 3 {
        return Err(Error::InsufficientNeighborhood {
            point: point_id,
            found: ids.len(),
            needed: 3,
        });
    }
    let nb: Vec<Point3<T>> = ids.iter().map(|&i| *cloud.point(i)).collect();
    LocalCovariance::from_neighbors(p, &nb, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField<T: Real> {
    /// Unit normals, consistently oriented within each tree component.
    pub normals: Vec<Vector3<T>>,
    pub variations: Vec<T>,
    pub degenerate: Vec<bool>,
    /// Parent/child pairs of the orientation tree, in propagation order.
    pub orientation_edges: Vec<(usize, usize)>,
}

impl<T: Real> FeatureField<T> {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Number of orientation-tree edges whose endpoints disagree in sign.
    pub fn orientation_flips(&self) -> usize {
        self.orientation_edges
            .iter()
            .filter(|&&(a, b)| self.normals[a].dot(&self.normals[b]) < T::zero())
            .count()
    }
}

/// Options for `estimate_normals` / `feature_field`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig<T: Real> {
    pub neighborhood: Neighborhood<T>,
    /// k of the k-NN graph whose Euclidean MST carries the orientation.
    pub orientation_k: usize,
}

impl<T: Real> Default for FeatureConfig<T> {
    fn default() -> Self {
        Self {
            neighborhood: Neighborhood::default(),
            orientation_k: 16,
        }
    }
}

impl<T: Real> FeatureConfig<T> {
    pub fn with_neighborhood(neighborhood: Neighborhood<T>) -> Self {
        Self {
            neighborhood,
            ..Self::default()
        }
    }
}

/// PCA normals and surface variation for every point, oriented by MST
/// propagation.
pub fn feature_field<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    config: &FeatureConfig<T>,
) -> Result<FeatureField<T>> {
    let covs: Vec<Result<(Vector3<T>, SurfaceVariation<T>)>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let c = local_covariance(cloud, index, i, &config.neighborhood)?;
            Ok((c.normal(), surface_variation(&c)))
        })
        .collect();
    let mut normals = Vec::with_capacity(cloud.len());
    let mut variations = Vec::with_capacity(cloud.len());
    let mut degenerate = Vec::with_capacity(cloud.len());
    for c in covs {
        let (n, v) = c?;
        normals.push(n);
        variations.push(v.value);
        degenerate.push(v.degenerate);
    }
    let orientation_edges = orient_normals(cloud, index, &mut normals, config.orientation_k)?;
    Ok(FeatureField {
        normals,
        variations,
        degenerate,
        orientation_edges,
    })
}

/// Normals only; same contract as `feature_field`.
pub fn estimate_normals<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    neighborhood: &Neighborhood<T>,
) -> Result<FeatureField<T>> {
    feature_field(cloud, index, &FeatureConfig::with_neighborhood(*neighborhood))
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn orient_root<T: Real>(n: &mut Vector3<T>) {
    let eps = T::lit(1e-12);
    for axis in [2, 1, 0] {
        if n[axis].abs() > eps {
            if n[axis] < T::zero() {
                *n = -*n;
            }
            return;
        }
    }
}

/// Euclidean minimum spanning forest over the symmetrised k-NN graph, then
/// breadth-first sign propagation from the lowest index of each component.
/// Returns the tree edges as (parent, child).
pub fn orient_normals<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    normals: &mut [Vector3<T>],
    k: usize,
) -> Result<Vec<(usize, usize)>> {
    let n = cloud.len();
    if normals.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: normals.len(),
        });
    }
    let k = k.max(1) + 1;
    let mut edges: Vec<(T, usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let nn = index.knn(cloud.point(i), k).expect("clamped k");
            nn.into_iter()
                .filter(move |nb| nb.index != i)
                .map(move |nb| {
                    let (a, b) = if i < nb.index { (i, nb.index) } else { (nb.index, i) };
                    (nb.dist_sq, a, b)
                })
        })
        .collect();
    edges.sort_by(|x, y| {
        crate::scalar::cmp_real(x.0, y.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    edges.dedup_by(|x, y| x.1 == y.1 && x.2 == y.2);
    let mut dsu = DisjointSet::new(n);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(_, a, b) in &edges {
        if dsu.union(a, b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let mut visited = vec![false; n];
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    let mut queue = std::collections::VecDeque::new();
    for root in 0..n {
        if visited[root] {
            continue;
        }
        orient_root(&mut normals[root]);
        visited[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    if normals[v].dot(&normals[u]) < T::zero() {
                        normals[v] = -normals[v];
                    }
                    tree.push((u, v));
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[[f64; 3]]) -> PointCloud<f64> {
        PointCloud::from_slices(points).unwrap()
    }

    #[test]
    fn coincident_neighbors_give_zero_covariance() {
        let c = cloud(&[[1.0, 2.0, 3.0]; 5]);
        let idx = NeighborIndex::new(&c);
        let cov = local_covariance(&c, &idx, 0, &Neighborhood::Knn(5)).unwrap();
        assert_eq!(cov.matrix, Matrix3::zeros());
        assert_eq!(cov.eigenvalues, Vector3::zeros());
        let v = surface_variation(&cov);
        assert!(v.degenerate);
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn collinear_neighbors_are_rank_one() {
        let e = 1e-3;
        let c = cloud(&[[0.0, 0.0, 0.0], [e, 0.0, 0.0], [-e, 0.0, 0.0]]);
        let idx = NeighborIndex::new(&c);
        let cov = local_covariance(&c, &idx, 0, &Neighborhood::Knn(3)).unwrap();
        assert!(cov.eigenvalues[2] > 0.0);
        assert!(cov.eigenvalues[0].abs() < 1e-20 && cov.eigenvalues[1].abs() < 1e-20);
        assert!((cov.eigenvalues[2] - 2.0 * e * e / 3.0).abs() < 1e-18);
    }

    #[test]
    fn ball_neighborhood_is_isotropic() {
        // the extreme eigenvalues of a 1000-sample covariance fluctuate by
        // several percent, so the 10% band is a typical-case statement
        let mut within = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = vec![Point3::<f64>::origin()];
            pts.extend(synth::ball(Point3::origin(), 1.0, 1000, &mut rng));
            let c = PointCloud::new(pts).unwrap();
            let idx = NeighborIndex::new(&c);
            let cov = local_covariance(&c, &idx, 0, &Neighborhood::Radius(1.0)).unwrap();
            let l = cov.eigenvalues;
            let mean = l.sum() / 3.0;
            assert!(l.iter().all(|v| (v - mean).abs() < 0.2 * mean), "{l:?}");
            if l.iter().all(|v| (v - mean).abs() < 0.1 * mean) {
                within += 1;
            }
            // E[x xᵀ] over the unit ball is I/5
            assert!((mean - 0.2).abs() < 0.02);
        }
        assert!(within >= 8, "{within}");
    }

    #[test]
    fn variation_arithmetic() {
        let v = surface_variation_of(&Vector3::<f64>::new(1.0, 2.0, 5.0));
        assert_eq!(v.value, 0.125);
        let iso = surface_variation_of(&Vector3::<f64>::new(2.0, 2.0, 2.0));
        assert!((iso.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(surface_variation_of(&Vector3::new(0.0, 1.0, 3.0)).value, 0.0);
    }

    #[test]
    fn insufficient_neighborhood_is_reported() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let idx = NeighborIndex::new(&c);
        let err = local_covariance(&c, &idx, 2, &Neighborhood::Radius(0.5)).unwrap_err();
        assert!(matches!(err, Error::InsufficientNeighborhood { found: 1, .. }));
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = PointCloud::new(synth::ball(Point3::new(0.2, 0.0, 0.0), 0.5, 300, &mut rng)).unwrap();
        let idx = NeighborIndex::new(&c);
        for i in [0, 17, 150] {
            let cov = local_covariance(&c, &idx, i, &Neighborhood::Knn(40)).unwrap();
            for j in 0..3 {
                let v = cov.eigenvectors.column(j);
                let res = cov.matrix * v - v * cov.eigenvalues[j];
                assert!(res.amax() < 1e-9);
            }
            assert!((cov.eigenvectors.transpose() * cov.eigenvectors - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn plane_normals_point_up() {
        let pts: Vec<[f64; 3]> = (0..400)
            .map(|i| [(i % 20) as f64 * 0.05, (i / 20) as f64 * 0.05 + 0.001 * (i % 3) as f64, 0.0])
            .collect();
        let c = cloud(&pts);
        let idx = NeighborIndex::new(&c);
        let f = estimate_normals(&c, &idx, &Neighborhood::Knn(12)).unwrap();
        for n in &f.normals {
            assert!((n - Vector3::z()).norm() < 1e-6, "{n:?}");
        }
        assert!(f.variations.iter().all(|&v| v < 1e-9));
        assert_eq!(f.orientation_edges.len(), 399);
    }

    #[test]
    fn separate_components_orient_independently() {
        let s = synth::two_planes::<f64>(300, 5.0, 3);
        let c = s.cloud.without_normals();
        let idx = NeighborIndex::new(&c);
        let f = estimate_normals(&c, &idx, &Neighborhood::Knn(16)).unwrap();
        assert_eq!(f.orientation_flips(), 0);
        // two roots, so two fewer tree edges than points... minus one per extra component
        assert_eq!(f.orientation_edges.len(), c.len() - 2);
    }
}
