//! Consistency and smoothness affinities, λ-scaled eigen-descriptors, and
//! the Davis–Kahan perturbation check.

pub mod factored;
pub mod lanczos;
pub mod sparse;

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::fmat::Fmat;
use crate::index::NeighborIndex;
use crate::linalg::{canonical_sign, procrustes_distance, symmetric_eigen_desc};
use crate::primitives::{PrimitiveParams, TypeLabel};
use crate::scalar::{cmp_real, Real};

pub use lanczos::{lanczos_top, LanczosConfig, SymOp};
pub use factored::FactoredMatrix;
pub use sparse::CsrMatrix;

/// Largest N stored densely.
pub const DENSE_STORAGE_LIMIT: usize = 4096;
/// Largest N handed to the dense eigensolver (see the crate README).
pub const DENSE_EIGEN_LIMIT: usize = 1024;
/// Largest N·G (points × distinct hypotheses) kept as an exact weight table.
pub const FACTORED_LIMIT: usize = 64 << 20;
/// Entries kept per row of a truncated sparse consistency matrix.
pub const SPARSE_ROW_KEEP: usize = 256;
/// Candidate count for the eigengap rule.
pub const EIGENGAP_WINDOW: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Storage<T: Real> {
    Dense(DMatrix<T>),
    Factored(FactoredMatrix<T>),
    Sparse(CsrMatrix<T>),
}

/// Symmetric affinity matrix with entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix<T: Real> {
    pub storage: Storage<T>,
    /// Set when rows were truncated to their largest entries.
    pub truncated: bool,
}

impl<T: Real> AdjacencyMatrix<T> {
    pub fn dense(m: DMatrix<T>) -> Self {
        Self {
            storage: Storage::Dense(m),
            truncated: false,
        }
    }

    pub fn n(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.nrows(),
            Storage::Factored(f) => f.n(),
            Storage::Sparse(s) => s.n(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Factored(f) => f.get(i, j),
            Storage::Sparse(s) => s.get(i, j),
        }
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.iter().filter(|v| **v != T::zero()).count(),
            Storage::Factored(f) => f.n() * f.n(),
            Storage::Sparse(s) => s.nnz(),
        }
    }

    /// Dense copy; only sensible for small matrices.
    pub fn to_dense(&self) -> DMatrix<T> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Factored(f) => DMatrix::from_fn(f.n(), f.n(), |i, j| f.get(i, j)),
            Storage::Sparse(s) => {
                let mut m = DMatrix::zeros(s.n(), s.n());
                for i in 0..s.n() {
                    let (cols, vals) = s.row(i);
                    for (c, v) in cols.iter().zip(vals) {
                        m[(i, *c as usize)] = *v;
                    }
                }
                m
            }
        }
    }

    /// Largest `|A(i,j) − A(j,i)|`.
    pub fn symmetry_defect(&self) -> T {
        match &self.storage {
            Storage::Dense(m) => (m - m.transpose()).amax(),
            Storage::Factored(_) => T::zero(),
            Storage::Sparse(s) => {
                let mut worst = T::zero();
                for i in 0..s.n() {
                    let (cols, vals) = s.row(i);
                    for (c, v) in cols.iter().zip(vals) {
                        worst = worst.max((*v - s.get(*c as usize, i)).abs());
                    }
                }
                worst
            }
        }
    }

    fn for_each_nonzero(&self, mut f: impl FnMut(usize, usize, T)) {
        match &self.storage {
            Storage::Dense(m) => {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if m[(i, j)] != T::zero() {
                            f(i, j, m[(i, j)]);
                        }
                    }
                }
            }
            Storage::Factored(m) => {
                for i in 0..m.n() {
                    for j in 0..m.n() {
                        let v = m.get(i, j);
                        if v != T::zero() {
                            f(i, j, v);
                        }
                    }
                }
            }
            Storage::Sparse(s) => {
                for i in 0..s.n() {
                    let (cols, vals) = s.row(i);
                    for (c, v) in cols.iter().zip(vals) {
                        f(i, *c as usize, *v);
                    }
                }
            }
        }
    }

    /// Coordinate-list text, one `i j value` line per nonzero.
    pub fn write_coo(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut err = Ok(());
        self.for_each_nonzero(|i, j, v| {
            if err.is_ok() {
                err = writeln!(w, "{i} {j} {:?}", v.as_f64());
            }
        });
        err
    }

    pub fn entries_in_unit_interval(&self) -> bool {
        let mut ok = true;
        self.for_each_nonzero(|_, _, v| ok &= v >= T::zero() && v <= T::one());
        ok
    }
}

impl<T: Real> SymOp<T> for AdjacencyMatrix<T> {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        match &self.storage {
            Storage::Dense(m) => m.apply(x, y),
            Storage::Factored(f) => f.apply(x, y),
            Storage::Sparse(s) => s.apply(x, y),
        }
    }
}

/// Per-type kernel bandwidths σ_t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeSigmas<T: Real> {
    pub plane: T,
    pub sphere: T,
    pub cylinder: T,
    pub cone: T,
}

impl<T: Real> TypeSigmas<T> {
    pub fn uniform(sigma: T) -> Self {
        Self {
            plane: sigma,
            sphere: sigma,
            cylinder: sigma,
            cone: sigma,
        }
    }

    pub fn get(&self, t: TypeLabel) -> T {
        match t {
            TypeLabel::Plane => self.plane,
            TypeLabel::Sphere => self.sphere,
            TypeLabel::Cylinder => self.cylinder,
            TypeLabel::Cone | TypeLabel::Other => self.cone,
        }
    }

    fn set(&mut self, t: TypeLabel, v: T) {
        match t {
            TypeLabel::Plane => self.plane = v,
            TypeLabel::Sphere => self.sphere = v,
            TypeLabel::Cylinder => self.cylinder = v,
            TypeLabel::Cone | TypeLabel::Other => self.cone = v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in TypeLabel::FITTABLE {
            let s = self.get(t);
            if !(s > T::zero()) || !s.is_finite_value() {
                return Err(Error::invalid(format!("sigma for {t} must be positive")));
            }
        }
        Ok(())
    }
}

/// Fraction of point pairs sampled for the default bandwidths.
pub const SIGMA_PAIR_FRACTION: f64 = 0.01;
/// Hard cap on sampled pairs, whatever the fraction gives.
pub const SIGMA_MAX_PAIRS: usize = 1_000_000;
pub const SIGMA_FLOOR: f64 = 1e-4;

/// σ_t = 0.5 × median of d(p_i, s_j) over a random pair sample, restricted
/// to hypotheses of type t, floored at 1e-4. Types absent from the sample
/// take the pooled value.
pub fn default_sigmas<T: Real>(
    cloud: &PointCloud<T>,
    hyps: &[PrimitiveParams<T>],
    seed: u64,
) -> Result<TypeSigmas<T>> {
    let n = cloud.len();
    if hyps.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: hyps.len(),
        });
    }
    let pairs = ((n as f64 * n as f64 * SIGMA_PAIR_FRACTION).ceil() as usize)
        .clamp(1.min(n * n), SIGMA_MAX_PAIRS)
        .max(n.min(1000));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_type: HashMap<TypeLabel, Vec<T>> = HashMap::new();
    let mut pooled = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let d = hyps[j].distance(cloud.point(i));
        per_type.entry(hyps[j].type_label()).or_default().push(d);
        pooled.push(d);
    }
    let floor = T::lit(SIGMA_FLOOR);
    let half_median = |v: &mut Vec<T>| (crate::scalar::median(v) * T::lit(0.5)).max(floor);
    let pooled_sigma = half_median(&mut pooled);
    let mut out = TypeSigmas::uniform(pooled_sigma);
    for (t, mut v) in per_type {
        out.set(t, half_median(&mut v));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct ConsistencyOptions {
    /// Dense storage up to this many points.
    pub dense_limit: usize,
    /// Beyond the dense limit, keep the exact weight table while
    /// N·G stays below this; otherwise fall back to truncated rows.
    pub factored_limit: usize,
    /// Entries kept per row on the sparse path (before symmetrisation).
    pub row_keep: usize,
    /// Value resolution when ranking entries; equal-rank ties are broken by
    /// a symmetric pair hash so that no row becomes a hub.
    pub quantum: f64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self {
            dense_limit: DENSE_STORAGE_LIMIT,
            factored_limit: FACTORED_LIMIT,
            row_keep: SPARSE_ROW_KEEP,
            quantum: 1e-2,
        }
    }
}

fn packed_key<T: Real>(p: &PrimitiveParams<T>) -> Vec<u64> {
    let mut key: Vec<u64> = p.to_packed().iter().map(|v| v.as_f64().to_bits()).collect();
    key.push(p.type_label() as u64);
    key
}

fn pair_hash(i: usize, j: usize) -> u64 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let mut z = ((a as u64) << 32 | b as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Distinct hypotheses and the group of each point.
struct Hypotheses<T: Real> {
    unique: Vec<PrimitiveParams<T>>,
    group: Vec<u32>,
    inv_two_sigma_sq: Vec<T>,
}

impl<T: Real> Hypotheses<T> {
    fn new(hyps: &[PrimitiveParams<T>], sigmas: &TypeSigmas<T>) -> Self {
        let mut map: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut unique = Vec::new();
        let group = hyps
            .iter()
            .map(|h| {
                *map.entry(packed_key(h)).or_insert_with(|| {
                    unique.push(*h);
                    (unique.len() - 1) as u32
                })
            })
            .collect();
        let inv_two_sigma_sq = unique
            .iter()
            .map(|h: &PrimitiveParams<T>| {
                let s = sigmas.get(h.type_label());
                T::one() / (T::lit(2.0) * s * s)
            })
            .collect();
        Self {
            unique,
            group,
            inv_two_sigma_sq,
        }
    }

    #[inline]
    fn weight(&self, p: &nalgebra::Point3<T>, h: usize) -> T {
        let d = self.unique[h].distance(p);
        (-(d * d) * self.inv_two_sigma_sq[h]).exp()
    }
}

/// w(p, s) = exp(−d(p, s)² / 2σ_t²).
pub fn signed_weight<T: Real>(p: &nalgebra::Point3<T>, s: &PrimitiveParams<T>, sigmas: &TypeSigmas<T>) -> T {
    let sigma = sigmas.get(s.type_label());
    let d = s.distance(p);
    (-(d * d) / (T::lit(2.0) * sigma * sigma)).exp()
}

/// A_c(i, j) = (w(p_i, s_j) + w(p_j, s_i)) / 2 with unit diagonal.
pub fn consistency_matrix<T: Real>(
    cloud: &PointCloud<T>,
    hyps: &[PrimitiveParams<T>],
    sigmas: &TypeSigmas<T>,
) -> Result<AdjacencyMatrix<T>> {
    consistency_matrix_with(cloud, hyps, sigmas, &ConsistencyOptions::default())
}

pub fn consistency_matrix_with<T: Real>(
    cloud: &PointCloud<T>,
    hyps: &[PrimitiveParams<T>],
    sigmas: &TypeSigmas<T>,
    opts: &ConsistencyOptions,
) -> Result<AdjacencyMatrix<T>> {
    let n = cloud.len();
    if hyps.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: hyps.len(),
        });
    }
    sigmas.validate()?;
    let h = Hypotheses::new(hyps, sigmas);
    let groups = h.unique.len();
    let pts = cloud.positions();
    if n <= opts.dense_limit {
        // table[i * G + g] = w(p_i, hypothesis g)
        let table: Vec<T> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let h = &h;
                (0..groups).map(move |g| h.weight(&pts[i], g))
            })
            .collect();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                T::one()
            } else {
                let a = table[i * groups + h.group[j] as usize];
                let b = table[j * groups + h.group[i] as usize];
                (a + b) * T::lit(0.5)
            }
        });
        return Ok(AdjacencyMatrix::dense(m));
    }
    if n > u32::MAX as usize {
        return Err(Error::invalid("too many points for sparse storage"));
    }
    if n.saturating_mul(groups) <= opts.factored_limit {
        log::info!("consistency matrix: exact factored form, {n} points, {groups} distinct hypotheses");
        let cols: Vec<Vec<T>> = (0..groups)
            .into_par_iter()
            .map(|g| pts.iter().map(|p| h.weight(p, g)).collect())
            .collect();
        let table = DMatrix::from_fn(n, groups, |i, g| cols[g][i]);
        return Ok(AdjacencyMatrix {
            storage: Storage::Factored(FactoredMatrix::new(table, h.group)),
            truncated: false,
        });
    }
    log::info!(
        "consistency matrix: sparse path, {n} points, {groups} distinct hypotheses, {} kept per row",
        opts.row_keep
    );
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (i, g) in h.group.iter().enumerate() {
        members[*g as usize].push(i);
    }
    let levels = (1.0 / opts.quantum).round() as usize;
    let scale = T::lit(levels as f64);
    let keep = opts.row_keep.min(n - 1);
    let mut triplets: Vec<(u32, u32, T)> = Vec::with_capacity(n * (2 * keep + 1));
    for (g, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        // column[j] = w(p_j, hypothesis g), shared by every row of group g
        let column: Vec<T> = pts.par_iter().map(|p| h.weight(p, g)).collect();
        let chunk: Vec<Vec<(u32, u32, T)>> = rows
            .par_iter()
            .map_init(
                || (vec![0u16; n], vec![0usize; levels + 1], Vec::new()),
                |(level, hist, ties), &i| {
                    let own: Vec<T> = (0..groups).map(|gg| h.weight(&pts[i], gg)).collect();
                    hist.iter_mut().for_each(|c| *c = 0);
                    for j in 0..n {
                        let v = (own[h.group[j] as usize] + column[j]) * T::lit(0.5);
                        let q = (v * scale).round().as_f64() as usize;
                        let q = q.min(levels);
                        level[j] = if j == i || v == T::zero() { u16::MAX } else { q as u16 };
                        if level[j] != u16::MAX {
                            hist[q] += 1;
                        }
                    }
                    let mut cutoff = 0usize;
                    let mut above = 0usize;
                    for lv in (0..=levels).rev() {
                        if above + hist[lv] >= keep {
                            cutoff = lv;
                            break;
                        }
                        above += hist[lv];
                        cutoff = lv;
                    }
                    ties.clear();
                    let mut out = Vec::with_capacity(keep + 1);
                    out.push((i as u32, i as u32, T::one()));
                    for j in 0..n {
                        let lv = level[j];
                        if lv == u16::MAX || (lv as usize) < cutoff {
                            continue;
                        }
                        if lv as usize > cutoff {
                            out.push((i as u32, j as u32, T::zero()));
                        } else {
                            ties.push((pair_hash(i, j), j as u32));
                        }
                    }
                    let room = keep.saturating_sub(out.len() - 1);
                    if ties.len() > room {
                        if room > 0 {
                            ties.select_nth_unstable(room - 1);
                        }
                        ties.truncate(room);
                    }
                    out.extend(ties.iter().map(|&(_, j)| (i as u32, j, T::zero())));
                    for t in out.iter_mut().skip(1) {
                        let j = t.1 as usize;
                        t.2 = (own[h.group[j] as usize] + column[j]) * T::lit(0.5);
                    }
                    out
                },
            )
            .collect();
        for rows in chunk {
            for t in rows {
                if t.0 != t.1 {
                    triplets.push((t.1, t.0, t.2));
                }
                triplets.push(t);
            }
        }
    }
    Ok(AdjacencyMatrix {
        storage: Storage::Sparse(CsrMatrix::from_triplets(n, triplets)),
        truncated: true,
    })
}

/// Default σ_edge of the smoothness kernel.
pub const DEFAULT_SIGMA_EDGE: f64 = 0.5;
/// Neighbour count of the smoothness graph.
pub const SMOOTHNESS_K: usize = 50;

/// Symmetrised k-NN graph weighted by exp(−‖n_i − n_j‖² / 2σ_edge²);
/// self-loops carry weight 1.
pub fn smoothness_matrix<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    normals: &[Vector3<T>],
    k: usize,
    sigma_edge: T,
) -> Result<AdjacencyMatrix<T>> {
    let n = cloud.len();
    if normals.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: normals.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("smoothness graph needs k >= 1"));
    }
    if !(sigma_edge > T::zero()) {
        return Err(Error::invalid("sigma_edge must be positive"));
    }
    let inv = T::one() / (T::lit(2.0) * sigma_edge * sigma_edge);
    let edges: Vec<(u32, u32, T)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let nn = index.knn(cloud.point(i), k + 1).expect("clamped k");
            let mut out = Vec::with_capacity(2 * nn.len());
            let mut own = 0;
            for nb in nn {
                let j = nb.index;
                if j == i {
                    continue;
                }
                if own == k {
                    break;
                }
                own += 1;
                let w = (-(normals[i] - normals[j]).norm_squared() * inv).exp();
                out.push((i as u32, j as u32, w));
                out.push((j as u32, i as u32, w));
            }
            out.push((i as u32, i as u32, T::one()));
            out.into_iter()
        })
        .collect();
    let csr = CsrMatrix::from_triplets(n, edges);
    if n <= DENSE_STORAGE_LIMIT {
        let m = AdjacencyMatrix {
            storage: Storage::Sparse(csr),
            truncated: false,
        };
        return Ok(AdjacencyMatrix::dense(m.to_dense()));
    }
    Ok(AdjacencyMatrix {
        storage: Storage::Sparse(csr),
        truncated: false,
    })
}

/// λ-scaled leading eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDescriptor<T: Real> {
    /// λ_1 ≥ … ≥ λ_d > 0.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors, sign-canonical.
    pub basis: DMatrix<T>,
    /// Column i is √(λ_1/λ_i)·u_i.
    pub descriptors: DMatrix<T>,
}

impl<T: Real> SpectralDescriptor<T> {
    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn row_distance(&self, i: usize, j: usize) -> T {
        (self.descriptors.row(i) - self.descriptors.row(j)).norm()
    }

    pub fn to_fmat(&self) -> Fmat {
        Fmat::from_matrix(&self.descriptors)
    }

    /// Largest `‖A u_i − λ_i u_i‖∞`.
    pub fn max_residual<A: SymOp<T> + ?Sized>(&self, a: &A) -> T {
        let mut y = DVector::zeros(a.dim());
        let mut worst = T::zero();
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            let u = self.basis.column(i).into_owned();
            a.apply(&u, &mut y);
            worst = worst.max((&y - u * l).amax());
        }
        worst
    }

    pub fn from_pairs(values: Vec<T>, vectors: DMatrix<T>) -> Result<Self> {
        let d = values.len();
        if d == 0 {
            return Err(Error::invalid("descriptor needs d >= 1"));
        }
        let tiny = T::lit(1e-12);
        if !(values[d - 1] > tiny) {
            return Err(Error::Degenerate(format!(
                "eigenvalue {d} is {} (rank below requested d = {d})",
                values[d - 1]
            )));
        }
        let mut basis = vectors;
        for c in 0..d {
            let mut col = basis.column(c).into_owned();
            canonical_sign(&mut col);
            basis.set_column(c, &col);
        }
        let l1 = values[0];
        let mut descriptors = basis.clone();
        for (c, &l) in values.iter().enumerate() {
            let s = (l1 / l).sqrt();
            descriptors.column_mut(c).scale_mut(s);
        }
        Ok(Self {
            eigenvalues: values,
            basis,
            descriptors,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenConfig {
    pub dense_limit: usize,
    pub lanczos: LanczosConfig,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            dense_limit: DENSE_EIGEN_LIMIT,
            lanczos: LanczosConfig::default(),
        }
    }
}

/// Top-`d` eigenpairs by algebraic value, without the rank check.
pub fn top_eigenpairs<T: Real>(
    a: &AdjacencyMatrix<T>,
    d: usize,
    cfg: &EigenConfig,
) -> Result<(Vec<T>, DMatrix<T>)> {
    let n = a.n();
    if d == 0 || d > n {
        return Err(Error::invalid(format!("requested {d} eigenpairs of a {n}x{n} matrix")));
    }
    if n <= cfg.dense_limit {
        let dense = a.to_dense();
        let sym = (&dense + dense.transpose()) * T::lit(0.5);
        let (vals, vecs) = symmetric_eigen_desc(sym);
        return Ok((vals[..d].to_vec(), vecs.columns(0, d).into_owned()));
    }
    let res = lanczos_top(a, d, &cfg.lanczos)?;
    log::debug!("lanczos: {} matvecs, {} restarts", res.matvecs, res.restarts);
    Ok((res.values, res.vectors))
}

pub fn leading_eigs<T: Real>(a: &AdjacencyMatrix<T>, d: usize) -> Result<SpectralDescriptor<T>> {
    leading_eigs_with(a, d, &EigenConfig::default())
}

pub fn leading_eigs_with<T: Real>(
    a: &AdjacencyMatrix<T>,
    d: usize,
    cfg: &EigenConfig,
) -> Result<SpectralDescriptor<T>> {
    let (vals, vecs) = top_eigenpairs(a, d, cfg)?;
    SpectralDescriptor::from_pairs(vals, vecs)
}

/// Index (1-based count) maximising the relative gap (λ_i − λ_{i+1})/λ_i
/// over the leading eigenvalues that exceed 1e-12. A gap is only measured
/// where the following eigenvalue was computed.
pub fn eigengap_dimension<T: Real>(values: &[T]) -> usize {
    let tiny = T::lit(1e-12);
    let usable = values
        .iter()
        .take(EIGENGAP_WINDOW)
        .take_while(|&&v| v > tiny)
        .count();
    if usable <= 1 {
        return usable.max(1);
    }
    let mut best = 1;
    let mut best_gap = T::zero() - T::one();
    for i in 0..usable {
        // the last candidate only counts once its successor is known
        let Some(&next) = values.get(i + 1) else { break };
        let next = next.max(T::zero());
        let gap = (values[i] - next) / values[i];
        if gap > best_gap {
            best_gap = gap;
            best = i + 1;
        }
    }
    best
}

/// Descriptor whose dimension is chosen by the eigengap rule, or fixed when
/// `d` is given.
pub fn descriptor_auto<T: Real>(
    a: &AdjacencyMatrix<T>,
    d: Option<usize>,
    cfg: &EigenConfig,
) -> Result<SpectralDescriptor<T>> {
    if let Some(d) = d {
        return leading_eigs_with(a, d, cfg);
    }
    let window = EIGENGAP_WINDOW.min(a.n());
    let (vals, vecs) = top_eigenpairs(a, window, cfg)?;
    let d = eigengap_dimension(&vals);
    SpectralDescriptor::from_pairs(vals[..d].to_vec(), vecs.columns(0, d).into_owned())
}

/// (min inter-segment row distance, max intra-segment row distance).
pub fn separation<T: Real>(descriptors: &DMatrix<T>, labels: &[u32]) -> (T, T) {
    let n = descriptors.nrows();
    let rows: Vec<_> = (0..n).map(|i| descriptors.row(i).into_owned()).collect();
    let mut inter = T::infinity();
    let mut intra = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let d = (&rows[i] - &rows[j]).norm();
            if labels[i] == labels[j] {
                intra = intra.max(d);
            } else {
                inter = inter.min(d);
            }
        }
    }
    (inter, intra)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DavisKahanReport<T: Real> {
    /// min over O(K) of ‖U R − U_good‖_F.
    pub lhs: T,
    /// √λ_1(A_good)·‖E‖_F / (λ_K − λ_{K+1}).
    pub rhs: T,
    pub gap: T,
    /// lhs / ‖U_good‖_F.
    pub relative_error: T,
    pub holds: bool,
}

/// Compares the descriptors of `a_good` and `a_good + e` against the
/// perturbation bound.
pub fn davis_kahan_check<T: Real>(
    a_good: &DMatrix<T>,
    e: &DMatrix<T>,
    k: usize,
) -> Result<DavisKahanReport<T>> {
    let n = a_good.nrows();
    if a_good.ncols() != n || e.nrows() != n || e.ncols() != n {
        return Err(Error::invalid("matrices must be square and of equal size"));
    }
    if k == 0 || k >= n {
        return Err(Error::invalid("K must satisfy 1 <= K < n"));
    }
    let (good_vals, good_vecs) = symmetric_eigen_desc(a_good.clone());
    let gap = good_vals[k - 1] - good_vals[k];
    if !(gap > T::lit(1e-12) * good_vals[0].abs().max(T::one())) {
        return Err(Error::Degenerate("zero spectral gap at K".into()));
    }
    let good = SpectralDescriptor::from_pairs(good_vals[..k].to_vec(), good_vecs.columns(0, k).into_owned())?;
    let (vals, vecs) = symmetric_eigen_desc(a_good + e);
    let pert = SpectralDescriptor::from_pairs(vals[..k].to_vec(), vecs.columns(0, k).into_owned())?;
    let lhs = procrustes_distance(&pert.descriptors, &good.descriptors);
    let rhs = good_vals[0].sqrt() * e.norm() / gap;
    Ok(DavisKahanReport {
        lhs,
        rhs,
        gap,
        relative_error: lhs / good.descriptors.norm(),
        holds: lhs <= rhs,
    })
}

/// Right-hand side of the embedding-error rate, constant taken as 1:
/// 2K√ρ / ((1 − ρ) + √(1 − ρ)) · n^{-1/4}.
pub fn embedding_error_rate(k: usize, rho: f64, n: usize) -> f64 {
    2.0 * k as f64 * rho.sqrt() / ((1.0 - rho) + (1.0 - rho).sqrt()) * (n as f64).powf(-0.25)
}

/// Binary-weight consistency model: `n` points in `k` equal primitives;
/// a fraction `rho` of the points carry hypotheses that agree with a random
/// other primitive instead of their own. Returns (A_good, E).
pub fn binary_weight_model(n: usize, k: usize, rho: f64, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let outliers = (rho * n as f64).round() as usize;
    let chosen = rand::seq::index::sample(&mut rng, n, outliers).into_vec();
    // primitive each hypothesis is consistent with
    let mut target = block.clone();
    for &i in &chosen {
        let shift = rng.random_range(1..k.max(2));
        target[i] = (block[i] + shift) % k;
    }
    let w = |i: usize, j: usize| if block[i] == target[j] { 1.0 } else { 0.0 };
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (w(i, j) + w(j, i)) / 2.0
        }
    });
    let good = DMatrix::from_fn(n, n, |i, j| if block[i] == block[j] { a[(i, j)] } else { 0.0 });
    let e = &a - &good;
    (good, e)
}

/// Symmetric random perturbation with roughly `density·n²` nonzeros of
/// magnitude up to `scale`.
pub fn random_sparse_perturbation(n: usize, density: f64, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if rng.random::<f64>() < density {
                let v = scale * (2.0 * rng.random::<f64>() - 1.0);
                e[(i, j)] = v;
                e[(j, i)] = v;
            }
        }
    }
    e
}

/// Orders eigenvalue lists for display; helper for reports.
pub fn sorted_desc<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| cmp_real(*b, *a));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use nalgebra::Point3;

    #[test]
    fn weight_arithmetic() {
        let cloud = PointCloud::from_slices(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.2]]).unwrap();
        let plane_lo = PrimitiveParams::plane(Vector3::z(), 0.0).unwrap();
        let plane_hi = PrimitiveParams::plane(Vector3::z(), 0.2).unwrap();
        let a = consistency_matrix(&cloud, &[plane_lo, plane_hi], &TypeSigmas::uniform(0.2)).unwrap();
        assert!((a.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(a.get(0, 0), 1.0);
        let same = consistency_matrix(&cloud, &[plane_lo, plane_lo], &TypeSigmas::uniform(0.2)).unwrap();
        // p_1 is off s_0, p_0 is on s_1 = s_0
        assert!((same.get(0, 1) - (1.0 + (-0.5f64).exp()) / 2.0).abs() < 1e-15);
        let on = PointCloud::from_slices(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let b = consistency_matrix(&on, &[plane_lo, plane_lo], &TypeSigmas::uniform(0.01)).unwrap();
        assert_eq!(b.get(1, 0), 1.0);
    }

    #[test]
    fn two_planes_block_structure() {
        let s = synth::two_planes::<f64>(60, 0.5, 3);
        let a = consistency_matrix(&s.cloud, &s.per_point_primitives(), &TypeSigmas::uniform(0.5 / 6.0)).unwrap();
        let labels = s.labels();
        for i in 0..a.n() {
            for j in 0..a.n() {
                if labels[i] != labels[j] {
                    assert!(a.get(i, j) < 1e-4);
                } else {
                    assert_eq!(a.get(i, j), 1.0);
                }
            }
        }
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn invalid_sigmas_rejected() {
        let cloud = PointCloud::from_slices(&[[0.0; 3]]).unwrap();
        let p = PrimitiveParams::plane(Vector3::z(), 0.0).unwrap();
        assert!(consistency_matrix(&cloud, &[p], &TypeSigmas::uniform(0.0)).is_err());
        assert!(consistency_matrix(&cloud, &[p, p], &TypeSigmas::uniform(1.0)).is_err());
    }

    #[test]
    fn sparse_path_matches_dense_entries() {
        let s = synth::three_primitives::<f64>(900, 0.0, 5);
        let hyps = s.per_point_primitives();
        let sig = TypeSigmas::uniform(0.02);
        let dense = consistency_matrix(&s.cloud, &hyps, &sig).unwrap();
        let opts = ConsistencyOptions {
            dense_limit: 10,
            factored_limit: 0,
            row_keep: 40,
            ..Default::default()
        };
        let sparse = consistency_matrix_with(&s.cloud, &hyps, &sig, &opts).unwrap();
        assert!(sparse.truncated && !sparse.is_dense());
        assert_eq!(sparse.symmetry_defect(), 0.0);
        let Storage::Sparse(csr) = &sparse.storage else { unreachable!() };
        for i in 0..sparse.n() {
            let (cols, vals) = csr.row(i);
            assert!(cols.len() >= 41);
            for (c, v) in cols.iter().zip(vals) {
                assert_eq!(*v, dense.get(i, *c as usize));
            }
        }
        // ties are spread: no row is selected by far more rows than the rest
        assert!(csr.max_row_nnz() < 3 * 41);
    }

    #[test]
    fn factored_path_is_exact() {
        let s = synth::three_primitives::<f64>(600, 0.01, 2);
        let mut hyps = s.per_point_primitives();
        // a few extra distinct hypotheses
        for i in (0..600).step_by(97) {
            hyps[i] = PrimitiveParams::plane(Vector3::new(0.3, 0.1, 1.0).normalize(), i as f64 * 1e-3).unwrap();
        }
        let sig = TypeSigmas::uniform(0.05);
        let dense = consistency_matrix(&s.cloud, &hyps, &sig).unwrap();
        let opts = ConsistencyOptions {
            dense_limit: 10,
            ..Default::default()
        };
        let f = consistency_matrix_with(&s.cloud, &hyps, &sig, &opts).unwrap();
        assert!(matches!(f.storage, Storage::Factored(_)) && !f.truncated);
        let d = dense.to_dense();
        assert!((f.to_dense() - &d).amax() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DVector::from_fn(600, |_, _| rng.random::<f64>() - 0.5);
        let mut y = DVector::zeros(600);
        f.apply(&x, &mut y);
        assert!((y - &d * &x).amax() < 1e-12);
    }

    #[test]
    fn smoothness_weights() {
        let cloud = PointCloud::from_slices(&[[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]]).unwrap();
        let idx = NeighborIndex::new(&cloud);
        let normals = vec![Vector3::z(), Vector3::z(), Vector3::x()];
        let a = smoothness_matrix(&cloud, &idx, &normals, 2, 1.0).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert!((a.get(0, 2) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(a.entries_in_unit_interval());
        let b = smoothness_matrix(&cloud, &idx, &normals, 1, 1.0).unwrap();
        // 0's nearest is 1 (tie with 2 broken by index); 2's nearest is 0
        assert_eq!(b.get(1, 2), 0.0);
        assert!(b.get(0, 2) > 0.0);
    }

    #[test]
    fn all_ones_blocks() {
        let m = DMatrix::<f64>::from_fn(5, 5, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.0 });
        let desc = leading_eigs(&AdjacencyMatrix::dense(m.clone()), 2).unwrap();
        assert!((desc.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((desc.eigenvalues[1] - 2.0).abs() < 1e-12);
        let c = desc.descriptors.column(0);
        for i in 0..3 {
            assert!((c[i] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
        assert!(c[3].abs() < 1e-12 && c[4].abs() < 1e-12);
        assert!((desc.descriptors.column(1).norm() - (1.5f64).sqrt()).abs() < 1e-12);
        assert!(leading_eigs(&AdjacencyMatrix::dense(m), 3).is_err());
    }

    #[test]
    fn identity_residual_contract() {
        let a = AdjacencyMatrix::dense(DMatrix::<f64>::identity(6, 6));
        let d = leading_eigs(&a, 2).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 1.0]);
        assert!(d.max_residual(&a) < 1e-8);
    }

    #[test]
    fn eigengap_rule() {
        assert_eq!(eigengap_dimension(&[3.0, 2.0, 0.0, 0.0]), 2);
        assert_eq!(eigengap_dimension(&[10.0, 9.5, 9.0, 1.0, 0.9]), 3);
        assert_eq!(eigengap_dimension(&[1.0]), 1);
    }

    #[test]
    fn davis_kahan_zero_perturbation() {
        let (good, _) = binary_weight_model(60, 2, 0.0, 1);
        let r = davis_kahan_check(&good, &DMatrix::zeros(60, 60), 2).unwrap();
        assert!(r.lhs < 1e-10 && r.holds);
    }

    #[test]
    fn descriptor_rows_follow_point_permutation() {
        let s = synth::two_planes::<f64>(40, 0.5, 9);
        let hyps = s.per_point_primitives();
        let sig = TypeSigmas::uniform(0.05);
        let a = consistency_matrix(&s.cloud, &hyps, &sig).unwrap();
        let d = leading_eigs(&a, 2).unwrap();
        let perm: Vec<usize> = (0..80).rev().collect();
        let pts: Vec<Point3<f64>> = perm.iter().map(|&i| *s.cloud.point(i)).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let hp: Vec<_> = perm.iter().map(|&i| hyps[i]).collect();
        let d2 = leading_eigs(&consistency_matrix(&cloud, &hp, &sig).unwrap(), 2).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for other in [0usize, 7, 55] {
                let a = d.row_distance(old, perm[other]);
                let b = d2.row_distance(new, other);
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
