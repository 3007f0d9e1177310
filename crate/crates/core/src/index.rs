//! Exact k-d tree over 3D positions.
//!
//! Results are ordered by `(squared distance, point index)`, so ties are
//! broken by ascending index and every query matches a brute-force scan
//! bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::scalar::{cmp_real, Real};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist_sq: T,
}

impl<T: Real> Neighbor<T> {
    pub fn distance(&self) -> T {
        self.dist_sq.sqrt()
    }
}

/// Behaviour of `knn` when `k` exceeds the number of indexed points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KOverflow {
    #[default]
    Clamp,
    Error,
}

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct NeighborIndex<T: Real> {
    points: Vec<Point3<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    overflow: KOverflow,
}

#[derive(PartialEq)]
struct HeapItem<T>(T, usize);

impl<T: Real> Eq for HeapItem<T> {}

impl<T: Real> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for HeapItem<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_real(self.0, other.0).then(self.1.cmp(&other.1))
    }
}

#[inline]
fn dist_sq<T: Real>(a: &Point3<T>, b: &Point3<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl<T: Real> NeighborIndex<T> {
    pub fn new(cloud: &PointCloud<T>) -> Self {
        Self::from_points(cloud.positions().to_vec())
    }

    pub fn from_points(points: Vec<Point3<T>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build(&points, &mut order, 0, n, &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
            overflow: KOverflow::Clamp,
        }
    }

    pub fn with_overflow(mut self, overflow: KOverflow) -> Self {
        self.overflow = overflow;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    /// The `k` nearest points, nearest first.
    pub fn knn(&self, query: &Point3<T>, k: usize) -> Result<Vec<Neighbor<T>>> {
        if k > self.len() && self.overflow == KOverflow::Error {
            return Err(Error::invalid(format!(
                "k = {k} exceeds the {} indexed points",
                self.len()
            )));
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out: Vec<Neighbor<T>> = heap
            .into_iter()
            .map(|HeapItem(d, i)| Neighbor {
                index: i,
                dist_sq: d,
            })
            .collect();
        out.sort_by(|a, b| cmp_real(a.dist_sq, b.dist_sq).then(a.index.cmp(&b.index)));
        Ok(out)
    }

    /// Nearest point (lowest index on ties). Panics on an empty index.
    pub fn nearest(&self, query: &Point3<T>) -> Neighbor<T> {
        let mut heap = BinaryHeap::with_capacity(2);
        self.knn_rec(0, query, 1, &mut heap);
        let HeapItem(d, i) = heap.pop().expect("non-empty index");
        Neighbor {
            index: i,
            dist_sq: d,
        }
    }

    /// All points with distance `<= radius`, nearest first.
    pub fn radius(&self, query: &Point3<T>, radius: T) -> Vec<Neighbor<T>> {
        let mut out = Vec::new();
        if self.is_empty() || radius < T::zero() {
            return out;
        }
        let r2 = radius * radius;
        self.radius_rec(0, query, r2, &mut out);
        out.sort_by(|a, b| cmp_real(a.dist_sq, b.dist_sq).then(a.index.cmp(&b.index)));
        out
    }

    fn knn_rec(&self, node: usize, q: &Point3<T>, k: usize, heap: &mut BinaryHeap<HeapItem<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist_sq(q, &self.points[i]);
                    let item = HeapItem(d, i);
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().expect("full heap") {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, heap);
                let bound = diff * diff;
                // `<=`: an equal-distance point in the far side may carry a lower index
                if heap.len() < k || bound <= heap.peek().expect("full heap").0 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    fn radius_rec(&self, node: usize, q: &Point3<T>, r2: T, out: &mut Vec<Neighbor<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist_sq(q, &self.points[i]);
                    if d <= r2 {
                        out.push(Neighbor {
                            index: i,
                            dist_sq: d,
                        });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }
}

fn build<T: Real>(
    points: &[Point3<T>],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    // split on the axis of largest spread
    let slice = &order[start..end];
    let mut lo = points[slice[0]];
    let mut hi = lo;
    for &i in slice {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| cmp_real(hi[a] - lo[a], hi[b] - lo[b]))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= T::zero() {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = (end - start) / 2;
    let sub = &mut order[start..end];
    sub.select_nth_unstable_by(mid, |&a, &b| cmp_real(points[a][axis], points[b][axis]));
    let value = points[sub[mid]][axis];
    // left holds coordinates <= value, right >= value
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let split = start + mid;
    let left = build(points, order, start, split, nodes);
    let right = build(points, order, split, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Brute-force k nearest neighbours with the same ordering contract.
pub fn brute_force_knn<T: Real>(points: &[Point3<T>], query: &Point3<T>, k: usize) -> Vec<Neighbor<T>> {
    let mut all: Vec<Neighbor<T>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Neighbor {
            index: i,
            dist_sq: dist_sq(query, p),
        })
        .collect();
    all.sort_by(|a, b| cmp_real(a.dist_sq, b.dist_sq).then(a.index.cmp(&b.index)));
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for x in -2..=2 {
            for y in -2..=2 {
                for z in -2..=2 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        pts
    }

    #[test]
    fn knn_of_member_is_itself() {
        let pts = grid();
        let index = NeighborIndex::from_points(pts.clone());
        for (i, p) in pts.iter().enumerate() {
            let nn = index.knn(p, 1).unwrap();
            assert_eq!(nn[0].index, i);
            assert_eq!(nn[0].dist_sq, 0.0);
        }
    }

    #[test]
    fn radius_on_unit_grid() {
        let pts = grid();
        let index = NeighborIndex::from_points(pts.clone());
        let got: Vec<usize> = {
            let mut v: Vec<usize> = index
                .radius(&Point3::origin(), 1.5)
                .into_iter()
                .map(|n| n.index)
                .collect();
            v.sort();
            v
        };
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| pts[i].coords.norm() <= 1.5)
            .collect();
        // origin, 6 face neighbours and 12 edge neighbours (norm sqrt 2)
        assert_eq!(want.len(), 19);
        assert_eq!(got, want);
    }

    #[test]
    fn k_larger_than_n() {
        let pts = grid();
        let index = NeighborIndex::from_points(pts.clone());
        assert_eq!(index.knn(&Point3::origin(), 1000).unwrap().len(), pts.len());
        let strict = index.clone().with_overflow(KOverflow::Error);
        assert!(strict.knn(&Point3::origin(), 1000).is_err());
    }

    #[test]
    fn ties_broken_by_index() {
        let pts = grid();
        let index = NeighborIndex::from_points(pts.clone());
        let got = index.knn(&Point3::origin(), 7).unwrap();
        let brute = brute_force_knn(&pts, &Point3::origin(), 7);
        assert_eq!(got, brute);
    }

    #[test]
    fn duplicate_points() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let index = NeighborIndex::from_points(pts);
        let got: Vec<usize> = index
            .knn(&Point3::origin(), 5)
            .unwrap()
            .iter()
            .map(|n| n.index)
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            coords in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..500),
            q in (-1.2f64..1.2, -1.2f64..1.2, -1.2f64..1.2),
            k in 1usize..40,
            r in 0.0f64..0.8,
        ) {
            // coarse quantization produces many exact ties
            let pts: Vec<Point3<f64>> = coords
                .iter()
                .map(|&(x, y, z)| Point3::new((x * 8.0).round() / 8.0, (y * 8.0).round() / 8.0, (z * 8.0).round() / 8.0))
                .collect();
            let q = Point3::new(q.0, q.1, q.2);
            let index = NeighborIndex::from_points(pts.clone());
            prop_assert_eq!(index.knn(&q, k).unwrap(), brute_force_knn(&pts, &q, k));
            let full = index.knn(&q, pts.len()).unwrap();
            let mut ids: Vec<usize> = full.iter().map(|n| n.index).collect();
            ids.sort();
            prop_assert_eq!(ids, (0..pts.len()).collect::<Vec<_>>());
            let got = index.radius(&q, r);
            let mut want = brute_force_knn(&pts, &q, pts.len());
            want.retain(|n| n.dist_sq <= r * r);
            prop_assert_eq!(got, want);
        }
    }
}
