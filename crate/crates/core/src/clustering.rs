//! Entropy-weighted feature combination, mean-shift clustering and
//! segmentation assembly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::primitives::{fit_primitive, sample_indices, PrimitiveParams, PrimitiveRecord, TypeLabel};
use crate::scalar::{median, Real};
use crate::spectral::SpectralDescriptor;

/// Rows used for bandwidth and entropy estimates on large inputs.
pub const ESTIMATE_SAMPLE: usize = 2000;
/// Entropies at or below this trigger the shift before inversion.
pub const ENTROPY_SHIFT_THRESHOLD: f64 = 0.1;
const DENSITY_FLOOR: f64 = 1e-300;
const SIGMA_FLOOR: f64 = 1e-9;

fn density_floor<T: Real>() -> T {
    let f = T::lit(DENSITY_FLOOR);
    // 1e-300 underflows in single precision
    if f > T::zero() {
        f
    } else {
        T::lit(f32::MIN_POSITIVE as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature<T: Real> {
    pub name: String,
    /// N×m.
    pub values: DMatrix<T>,
    pub sigma: T,
}

/// How spectral descriptors enter a feature set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMode {
    /// Every descriptor column is its own feature.
    PerColumn,
    /// The whole descriptor block is one feature.
    Block,
}

impl std::str::FromStr for SpectralMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-column" | "percolumn" | "column" => Ok(Self::PerColumn),
            "block" => Ok(Self::Block),
            _ => Err(Error::invalid(format!("unknown spectral mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet<T: Real> {
    pub features: Vec<Feature<T>>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new() -> Self {
        Self { features: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n(&self) -> Option<usize> {
        self.features.first().map(|f| f.values.nrows())
    }

    /// Adds a feature; `sigma = None` picks the median pairwise row distance.
    pub fn push(&mut self, name: impl Into<String>, values: DMatrix<T>, sigma: Option<T>, seed: u64) -> Result<()> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::invalid("feature must have at least one row and column"));
        }
        if let Some(n) = self.n() {
            if values.nrows() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: values.nrows(),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("feature values".into()));
        }
        let sigma = match sigma {
            Some(s) if s > T::zero() && s.is_finite_value() => s,
            Some(_) => return Err(Error::invalid("feature sigma must be positive")),
            None => median_pairwise_distance(&values, ESTIMATE_SAMPLE, seed).max(T::lit(SIGMA_FLOOR)),
        };
        self.features.push(Feature {
            name: name.into(),
            values,
            sigma,
        });
        Ok(())
    }

    pub fn push_spectral(&mut self, prefix: &str, desc: &SpectralDescriptor<T>, mode: SpectralMode, seed: u64) -> Result<()> {
        match mode {
            SpectralMode::Block => self.push(prefix, desc.descriptors.clone(), None, seed),
            SpectralMode::PerColumn => {
                for c in 0..desc.d() {
                    let col = desc.descriptors.columns(c, 1).into_owned();
                    self.push(format!("{prefix}[{c}]"), col, None, seed)?;
                }
                Ok(())
            }
        }
    }

    pub fn total_dim(&self) -> usize {
        self.features.iter().map(|f| f.values.ncols()).sum()
    }

    /// Entropy of every feature, on a shared row subsample for large N.
    pub fn entropies(&self, seed: u64) -> Result<Vec<T>> {
        let n = self.n().ok_or_else(|| Error::invalid("empty feature set"))?;
        let rows = sample_rows(n, ESTIMATE_SAMPLE, seed);
        self.features
            .iter()
            .map(|f| {
                let h = match &rows {
                    None => feature_entropy(&f.values, f.sigma)?,
                    Some(r) => feature_entropy(&f.values.select_rows(r.iter()), f.sigma)?,
                };
                if !h.is_finite_value() {
                    return Err(Error::NonFinite(format!("entropy of feature {}", f.name)));
                }
                Ok(h)
            })
            .collect()
    }

    /// Concatenation of `w_l · F_l`.
    pub fn combined(&self, weights: &[T]) -> DMatrix<T> {
        let n = self.n().unwrap_or(0);
        let mut out = DMatrix::zeros(n, self.total_dim());
        let mut c0 = 0;
        for (f, &w) in self.features.iter().zip(weights) {
            let m = f.values.ncols();
            out.columns_mut(c0, m).copy_from(&(&f.values * w));
            c0 += m;
        }
        out
    }
}

fn sample_rows(n: usize, limit: usize, seed: u64) -> Option<Vec<usize>> {
    if n <= limit {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = sample_indices(&mut rng, n, limit);
    rows.sort_unstable();
    Some(rows)
}

/// Median of all pairwise row distances over at most `limit` sampled rows.
pub fn median_pairwise_distance<T: Real>(x: &DMatrix<T>, limit: usize, seed: u64) -> T {
    let rows: Vec<usize> = sample_rows(x.nrows(), limit, seed).unwrap_or_else(|| (0..x.nrows()).collect());
    if rows.len() < 2 {
        return T::zero();
    }
    let r: Vec<DVector<T>> = rows.iter().map(|&i| x.row(i).transpose()).collect();
    let mut d: Vec<T> = (0..r.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let r = &r;
            (i + 1..r.len()).map(move |j| (&r[i] - &r[j]).norm())
        })
        .collect();
    median(&mut d)
}

/// H = −Σ_i P(F_i) log P(F_i) with P the Gaussian kernel density estimate.
pub fn feature_entropy<T: Real>(f: &DMatrix<T>, sigma: T) -> Result<T> {
    let n = f.nrows();
    if n < 2 {
        return Err(Error::invalid("entropy needs at least two rows"));
    }
    if !(sigma > T::zero()) {
        return Err(Error::invalid("entropy bandwidth must be positive"));
    }
    let m = f.ncols();
    let two_pi = T::two_pi();
    let norm = two_pi.powf(T::from_count(m) * T::lit(-0.5)) * sigma.powi(-(m as i32)) / T::from_count(n);
    let inv = T::one() / (T::lit(2.0) * sigma * sigma);
    let rows: Vec<DVector<T>> = (0..n).map(|i| f.row(i).transpose()).collect();
    let floor = density_floor::<T>();
    let terms: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = T::zero();
            for r in &rows {
                s += (-(&rows[i] - r).norm_squared() * inv).exp();
            }
            let p = norm * s;
            -p * p.max(floor).ln()
        })
        .collect();
    Ok(terms.into_iter().fold(T::zero(), |a, b| a + b))
}

/// w_l ∝ 1/H_l with Σ w_l² = 1. When any entropy is at most 0.1 the
/// entropies are first mapped affinely onto [1, 2] (min → 1, max → 2), which
/// keeps their order while bounding the weight ratio by 2.
pub fn adaptive_weights<T: Real>(entropies: &[T]) -> Result<Vec<T>> {
    if entropies.is_empty() {
        return Err(Error::invalid("no features to weight"));
    }
    if entropies.iter().any(|h| !h.is_finite_value()) {
        return Err(Error::NonFinite("entropy".into()));
    }
    let min = entropies.iter().copied().fold(T::infinity(), |a, b| a.min(b));
    let max = entropies.iter().copied().fold(-T::infinity(), |a, b| a.max(b));
    let adjusted: Vec<T> = if min <= T::lit(ENTROPY_SHIFT_THRESHOLD) {
        let span = max - min;
        entropies
            .iter()
            .map(|&h| if span > T::zero() { T::one() + (h - min) / span } else { T::one() })
            .collect()
    } else {
        entropies.to_vec()
    };
    let raw: Vec<T> = adjusted.iter().map(|&h| T::one() / h).collect();
    let norm = raw.iter().map(|w| *w * *w).fold(T::zero(), |a, b| a + b).sqrt();
    if !(norm > T::zero()) || !norm.is_finite_value() {
        return Err(Error::Numerical("feature weights could not be normalised".into()));
    }
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct MeanShiftConfig<T: Real> {
    pub bandwidth: T,
    pub max_iter: usize,
    pub tol: T,
    /// Above this many rows trajectories run on a seeded subsample and the
    /// remaining rows take the label of their nearest sampled row.
    pub sample_limit: usize,
    pub seed: u64,
}

impl<T: Real> MeanShiftConfig<T> {
    pub fn new(bandwidth: T) -> Self {
        Self {
            bandwidth,
            max_iter: 300,
            tol: T::lit(1e-6),
            sample_limit: 2048,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftResult<T: Real> {
    pub modes: Vec<DVector<T>>,
    pub labels: Vec<u32>,
    /// Trajectories that hit `max_iter`.
    pub unconverged: usize,
}

impl<T: Real> MeanShiftResult<T> {
    pub fn k(&self) -> usize {
        self.modes.len()
    }
}

pub fn mean_shift<T: Real>(points: &DMatrix<T>, bandwidth: T, max_iter: usize, tol: T) -> Result<MeanShiftResult<T>> {
    let cfg = MeanShiftConfig {
        max_iter,
        tol,
        ..MeanShiftConfig::new(bandwidth)
    };
    mean_shift_with(points, &cfg)
}

/// Kernel-weighted mean of `support` around `x`.
fn shift_step<T: Real>(x: &DVector<T>, support: &[DVector<T>], inv: T) -> DVector<T> {
    let mut num = DVector::zeros(x.len());
    let mut den = T::zero();
    let mut nearest = (T::infinity(), 0usize);
    for (j, p) in support.iter().enumerate() {
        let d2 = (x - p).norm_squared();
        if d2 < nearest.0 {
            nearest = (d2, j);
        }
        let w = (-d2 * inv).exp();
        if w > T::zero() {
            num.axpy(w, p, T::one());
            den += w;
        }
    }
    if den > T::zero() {
        num / den
    } else {
        // isolated beyond kernel underflow: snap to the closest support point
        support[nearest.1].clone()
    }
}

pub fn mean_shift_with<T: Real>(points: &DMatrix<T>, cfg: &MeanShiftConfig<T>) -> Result<MeanShiftResult<T>> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::ZeroPoints);
    }
    if !(cfg.bandwidth > T::zero()) || !cfg.bandwidth.is_finite_value() {
        return Err(Error::invalid("mean-shift bandwidth must be positive"));
    }
    let rows: Vec<DVector<T>> = (0..n).map(|i| points.row(i).transpose()).collect();
    let sample = sample_rows(n, cfg.sample_limit.max(1), cfg.seed);
    let support: Vec<DVector<T>> = match &sample {
        None => rows.clone(),
        Some(s) => s.iter().map(|&i| rows[i].clone()).collect(),
    };
    let inv = T::one() / (T::lit(2.0) * cfg.bandwidth * cfg.bandwidth);
    let tol_sq = cfg.tol * cfg.tol;
    let converged: Vec<(DVector<T>, bool)> = support
        .par_iter()
        .map(|start| {
            let mut x = start.clone();
            for _ in 0..cfg.max_iter {
                let next = shift_step(&x, &support, inv);
                let moved = (&next - &x).norm_squared();
                x = next;
                if moved < tol_sq {
                    return (x, true);
                }
            }
            (x, false)
        })
        .collect();
    let unconverged = converged.iter().filter(|c| !c.1).count();
    let merge = cfg.bandwidth * T::lit(0.5);
    let mut modes: Vec<DVector<T>> = Vec::new();
    let mut support_labels = Vec::with_capacity(support.len());
    for (x, _) in &converged {
        let hit = modes.iter().position(|m| (m - x).norm() <= merge);
        let l = hit.unwrap_or_else(|| {
            modes.push(x.clone());
            modes.len() - 1
        });
        support_labels.push(l as u32);
    }
    let labels = match &sample {
        None => support_labels,
        Some(s) => {
            let mut is_sample = vec![u32::MAX; n];
            for (k, &i) in s.iter().enumerate() {
                is_sample[i] = k as u32;
            }
            (0..n)
                .into_par_iter()
                .map(|i| {
                    if is_sample[i] != u32::MAX {
                        return support_labels[is_sample[i] as usize];
                    }
                    let mut best = (T::infinity(), 0usize);
                    for (k, p) in support.iter().enumerate() {
                        let d = (&rows[i] - p).norm_squared();
                        if d < best.0 {
                            best = (d, k);
                        }
                    }
                    support_labels[best.1]
                })
                .collect()
        }
    };
    if unconverged > 0 {
        log::warn!("mean-shift: {unconverged} trajectories reached max_iter");
    }
    Ok(MeanShiftResult {
        modes,
        labels,
        unconverged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment<T: Real> {
    #[serde(rename = "type")]
    pub type_label: TypeLabel,
    #[serde(skip)]
    pub params: Option<PrimitiveParams<T>>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation<T: Real> {
    pub labels: Vec<u32>,
    pub segments: Vec<Segment<T>>,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    #[serde(rename = "type")]
    type_label: TypeLabel,
    params: Option<PrimitiveRecord>,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct SegmentationRecord {
    segments: Vec<SegmentRecord>,
}

impl<T: Real> Segmentation<T> {
    pub fn k(&self) -> usize {
        self.segments.len()
    }

    /// Labels without primitive information; types default to `Other`.
    pub fn from_labels(labels: Vec<u32>) -> Self {
        let (labels, k) = compact_labels(&labels);
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        Self {
            labels,
            segments: counts
                .into_iter()
                .map(|count| Segment {
                    type_label: TypeLabel::Other,
                    params: None,
                    count,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.segments.len();
        let mut counts = vec![0usize; k];
        for &l in &self.labels {
            if l as usize >= k {
                return Err(Error::invalid(format!("label {l} out of range for {k} segments")));
            }
            counts[l as usize] += 1;
        }
        for (i, (s, c)) in self.segments.iter().zip(counts).enumerate() {
            if c == 0 || s.count != c {
                return Err(Error::invalid(format!("segment {i} count {} does not match {c}", s.count)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rec = SegmentationRecord {
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    type_label: s.type_label,
                    params: s.params.map(|p| p.to_record()),
                    count: s.count,
                })
                .collect(),
        };
        serde_json::to_value(rec).expect("serialisable")
    }

    /// Rebuilds from labels and the JSON sidecar.
    pub fn from_parts(labels: Vec<u32>, sidecar: &serde_json::Value) -> Result<Self> {
        let rec: SegmentationRecord =
            serde_json::from_value(sidecar.clone()).map_err(|e| Error::parse("segments json", e.to_string()))?;
        let segments = rec
            .segments
            .into_iter()
            .map(|s| {
                Ok(Segment {
                    type_label: s.type_label,
                    params: s.params.as_ref().map(PrimitiveParams::from_record).transpose()?,
                    count: s.count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let seg = Self { labels, segments };
        seg.validate()?;
        Ok(seg)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.segments.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn primitives(&self) -> Vec<PrimitiveParams<T>> {
        self.segments.iter().filter_map(|s| s.params).collect()
    }
}

/// Relabels to 0..K in order of first appearance.
pub fn compact_labels(labels: &[u32]) -> (Vec<u32>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len() as u32;
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

#[derive(Debug, Clone, Copy)]
pub struct SegmentConfig<T: Real> {
    /// Fixed bandwidth; `None` uses `bandwidth_factor` × median pairwise distance.
    pub bandwidth: Option<T>,
    pub bandwidth_factor: T,
    pub min_size: usize,
    pub max_iter: usize,
    pub tol: T,
    pub sample_limit: usize,
    pub seed: u64,
    /// Skip primitive fitting (labels and types only).
    pub fit: bool,
}

impl<T: Real> Default for SegmentConfig<T> {
    fn default() -> Self {
        Self {
            bandwidth: None,
            bandwidth_factor: T::lit(0.3),
            min_size: 20,
            max_iter: 300,
            tol: T::lit(1e-6),
            sample_limit: 2048,
            seed: 0,
            fit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport<T: Real> {
    pub segmentation: Segmentation<T>,
    pub weights: Vec<T>,
    pub entropies: Vec<T>,
    pub bandwidth: T,
    pub raw_clusters: usize,
}

/// Mean-shift bandwidth: factor × the median pairwise distance of `x` unless it
/// collapses (a dominant tight cluster), in which case the median over
/// pairs separated by more than 1e-6 of the largest distance.
pub fn default_bandwidth<T: Real>(x: &DMatrix<T>, factor: T, seed: u64) -> T {
    let rows: Vec<usize> = sample_rows(x.nrows(), ESTIMATE_SAMPLE, seed).unwrap_or_else(|| (0..x.nrows()).collect());
    let r: Vec<DVector<T>> = rows.iter().map(|&i| x.row(i).transpose()).collect();
    let mut d: Vec<T> = (0..r.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let r = &r;
            (i + 1..r.len()).map(move |j| (&r[i] - &r[j]).norm())
        })
        .collect();
    if d.is_empty() {
        return T::one();
    }
    let max = d.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if !(max > T::zero()) {
        return T::one();
    }
    let med = median(&mut d);
    if med > T::lit(1e-6) * max {
        return factor * med;
    }
    let mut spread: Vec<T> = d.into_iter().filter(|&v| v > T::lit(1e-6) * max).collect();
    factor * median(&mut spread)
}

/// Clusters the weighted feature concatenation and fits one primitive per
/// cluster.
pub fn segment<T: Real>(
    cloud: &PointCloud<T>,
    features: &FeatureSet<T>,
    per_point_types: &[TypeLabel],
    cfg: &SegmentConfig<T>,
) -> Result<SegmentReport<T>> {
    let n = features.n().ok_or_else(|| Error::invalid("empty feature set"))?;
    if n != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: n,
        });
    }
    if per_point_types.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: per_point_types.len(),
        });
    }
    let entropies = features.entropies(cfg.seed)?;
    let weights = adaptive_weights(&entropies)?;
    let x = features.combined(&weights);
    let bandwidth = match cfg.bandwidth {
        Some(b) => b,
        None => default_bandwidth(&x, cfg.bandwidth_factor, cfg.seed),
    };
    log::info!("segment: {} features, dim {}, bandwidth {bandwidth:e}", features.len(), x.ncols());
    let ms = mean_shift_with(
        &x,
        &MeanShiftConfig {
            bandwidth,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
            sample_limit: cfg.sample_limit,
            seed: cfg.seed,
        },
    )?;
    let raw_clusters = ms.k();
    let labels = merge_small(&ms.labels, &ms.modes, cfg.min_size);
    let (labels, k) = compact_labels(&labels);
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    let segments = members
        .par_iter()
        .map(|ids| {
            let t = majority_type(ids.iter().map(|&i| per_point_types[i]));
            let params = if cfg.fit && t != TypeLabel::Other {
                match fit_primitive(cloud, ids, t) {
                    Ok(f) => Some(f.params),
                    Err(e) => {
                        log::warn!("segment of {} points: {t} fit failed ({e})", ids.len());
                        None
                    }
                }
            } else {
                None
            };
            Segment {
                type_label: t,
                params,
                count: ids.len(),
            }
        })
        .collect();
    Ok(SegmentReport {
        segmentation: Segmentation { labels, segments },
        weights,
        entropies,
        bandwidth,
        raw_clusters,
    })
}

fn majority_type(types: impl Iterator<Item = TypeLabel>) -> TypeLabel {
    let mut counts: BTreeMap<TypeLabel, usize> = BTreeMap::new();
    for t in types {
        *counts.entry(t).or_default() += 1;
    }
    // BTreeMap iterates in declaration order, so ties go to the simpler type
    counts
        .into_iter()
        .fold((TypeLabel::Other, 0), |best, (t, c)| if c > best.1 { (t, c) } else { best })
        .0
}

/// Clusters below `min_size` join the nearest large cluster by mode distance.
fn merge_small<T: Real>(labels: &[u32], modes: &[DVector<T>], min_size: usize) -> Vec<u32> {
    let k = modes.len();
    let mut size = vec![0usize; k];
    for &l in labels {
        size[l as usize] += 1;
    }
    let mut large: Vec<usize> = (0..k).filter(|&c| size[c] >= min_size).collect();
    if large.is_empty() {
        // nothing reaches the threshold: keep the largest cluster only
        let biggest = (0..k).max_by_key(|&c| (size[c], std::cmp::Reverse(c))).expect("k >= 1");
        large.push(biggest);
    }
    let target: Vec<u32> = (0..k)
        .map(|c| {
            if large.contains(&c) {
                return c as u32;
            }
            let mut best = (T::infinity(), large[0]);
            for &l in &large {
                let d = (&modes[c] - &modes[l]).norm();
                if d < best.0 {
                    best = (d, l);
                }
            }
            best.1 as u32
        })
        .collect();
    labels.iter().map(|&l| target[l as usize]).collect()
}

/// (L_pull, L_push) of descriptors against ground-truth labels.
pub fn pullpush_quality<T: Real>(descriptors: &DMatrix<T>, gt: &[u32], delta1: T, delta2: T) -> Result<(T, T)> {
    let n = descriptors.nrows();
    if gt.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: gt.len(),
        });
    }
    if n == 0 {
        return Err(Error::ZeroPoints);
    }
    let (labels, k) = compact_labels(gt);
    let m = descriptors.ncols();
    let mut means = vec![DVector::<T>::zeros(m); k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        means[l as usize] += descriptors.row(i).transpose();
        counts[l as usize] += 1;
    }
    for (mu, &c) in means.iter_mut().zip(&counts) {
        *mu /= T::from_count(c);
    }
    let mut per_segment = vec![T::zero(); k];
    for (i, &l) in labels.iter().enumerate() {
        let d = (descriptors.row(i).transpose() - &means[l as usize]).norm();
        per_segment[l as usize] += (d - delta1).max(T::zero());
    }
    let pull = per_segment
        .iter()
        .zip(&counts)
        .map(|(s, &c)| *s / T::from_count(c))
        .fold(T::zero(), |a, b| a + b)
        / T::from_count(k);
    if k < 2 {
        return Ok((pull, T::zero()));
    }
    let mut push = T::zero();
    for a in 0..k {
        for b in a + 1..k {
            push += (delta2 - (&means[a] - &means[b]).norm()).max(T::zero());
        }
    }
    Ok((pull, push / T::from_count(k * (k - 1))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn entropy_of_identical_rows() {
        let f = DMatrix::from_element(10, 2, 0.3);
        let sigma = 0.7f64;
        let c = (2.0 * std::f64::consts::PI).powf(-1.0) * sigma.powi(-2);
        let h = feature_entropy(&f, sigma).unwrap();
        assert!((h - (-10.0 * c * c.ln())).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_two_distant_points() {
        let f = DMatrix::from_row_slice(2, 1, &[0.0, 100.0]);
        let sigma = 0.01f64;
        let p = (2.0 * std::f64::consts::PI).powf(-0.5) / sigma / 2.0;
        let h = feature_entropy(&f, sigma).unwrap();
        assert!((h - (-2.0 * p * p.ln())).abs() < 1e-9);
    }

    #[test]
    fn clustered_rows_have_lower_entropy() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let clustered = DMatrix::from_fn(200, 2, |i, _| if i < 100 { 0.0 } else { 1.0 } + noise.sample(&mut rng));
            let uniform = DMatrix::from_fn(200, 2, |_, _| rng.random::<f64>());
            let a = feature_entropy(&clustered, 0.1).unwrap();
            let b = feature_entropy(&uniform, 0.1).unwrap();
            assert!(a < b, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(adaptive_weights(&[3.0f64]).unwrap(), vec![1.0]);
        let w = adaptive_weights(&[2.0f64, 2.0]).unwrap();
        assert!((w[0] - 0.5f64.sqrt()).abs() < 1e-15 && (w[1] - w[0]).abs() < 1e-15);
        let w = adaptive_weights(&[1.0f64, 2.0]).unwrap();
        assert!((w[0] - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((w[1] - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        // rescaled: (−1, 0.5) -> (1, 2)
        let w = adaptive_weights(&[-1.0f64, 0.5]).unwrap();
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        let w = adaptive_weights(&[-3e5f64, -1e5, -2e5]).unwrap();
        assert!(w[0] > w[2] && w[2] > w[1]);
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        assert!(adaptive_weights(&[f64::NAN]).is_err());
    }

    #[test]
    fn mean_shift_trivial_inputs() {
        let one = DMatrix::from_row_slice(1, 2, &[1.0f64, 2.0]);
        let r = mean_shift(&one, 1.0, 300, 1e-6).unwrap();
        assert_eq!(r.k(), 1);
        let same = DMatrix::from_element(30, 3, 0.25f64);
        let r = mean_shift(&same, 0.5, 300, 1e-6).unwrap();
        assert_eq!(r.k(), 1);
        assert!(r.modes[0].iter().all(|v| *v == 0.25));
        assert!(mean_shift(&same, 0.0, 300, 1e-6).is_err());
    }

    #[test]
    fn mean_shift_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(120, 2, |i, _| (i % 3) as f64 * 4.0 + rng.random::<f64>() * 0.3);
        let a = mean_shift(&x, 0.8, 300, 1e-8).unwrap();
        let shifted = x.map(|v| v + 17.0);
        let b = mean_shift(&shifted, 0.8, 300, 1e-8).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.k(), 3);
    }

    #[test]
    fn sampled_mean_shift_finds_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let x = DMatrix::from_fn(5000, 2, |i, c| if c == 0 && i % 2 == 1 { 10.0 } else { 0.0 } + noise.sample(&mut rng));
        let cfg = MeanShiftConfig {
            sample_limit: 500,
            ..MeanShiftConfig::new(1.0)
        };
        let r = mean_shift_with(&x, &cfg).unwrap();
        assert_eq!(r.k(), 2);
        for i in 0..5000 {
            assert_eq!(r.labels[i], r.labels[i % 2]);
        }
    }

    #[test]
    fn small_clusters_merge_into_nearest() {
        let modes = vec![
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![10.0]),
            DVector::from_vec(vec![9.0]),
        ];
        let mut labels = vec![0u32; 30];
        labels.extend(vec![1u32; 25]);
        labels.extend(vec![2u32; 3]);
        let merged = merge_small(&labels, &modes, 20);
        assert!(merged[55..].iter().all(|&l| l == 1));
    }

    #[test]
    fn pullpush_examples() {
        let d = DMatrix::from_row_slice(4, 1, &[0.0f64, 0.0, 0.5, 0.5]);
        let (pull, push) = pullpush_quality(&d, &[0, 0, 1, 1], 0.5, 1.5).unwrap();
        assert_eq!(pull, 0.0);
        // one pair with hinge 1.0, normalised by K(K−1) = 2
        assert_eq!(push, 0.5);
        let far = DMatrix::from_row_slice(2, 1, &[0.0f64, 3.0]);
        assert_eq!(pullpush_quality(&far, &[0, 1], 0.5, 1.5).unwrap(), (0.0, 0.0));
        assert_eq!(pullpush_quality(&far, &[0, 0], 0.5, 1.5).unwrap().1, 0.0);
    }

    #[test]
    fn pullpush_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DMatrix::from_fn(40, 3, |_, _| rng.random::<f64>());
        let gt: Vec<u32> = (0..40).map(|i| (i * 7 % 4) as u32).collect();
        let (pull, push) = pullpush_quality(&d, &gt, 0.2, 1.5).unwrap();
        let mut means = vec![[0.0f64; 3]; 4];
        let mut cnt = [0.0f64; 4];
        for i in 0..40 {
            for c in 0..3 {
                means[gt[i] as usize][c] += d[(i, c)];
            }
            cnt[gt[i] as usize] += 1.0;
        }
        for k in 0..4 {
            for c in 0..3 {
                means[k][c] /= cnt[k];
            }
        }
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let mut ref_pull = 0.0;
        for k in 0..4 {
            let mut s = 0.0;
            for i in 0..40 {
                if gt[i] as usize == k {
                    let row: Vec<f64> = (0..3).map(|c| d[(i, c)]).collect();
                    s += (dist(&row, &means[k]) - 0.2).max(0.0);
                }
            }
            ref_pull += s / cnt[k];
        }
        ref_pull /= 4.0;
        let mut ref_push = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                ref_push += (1.5 - dist(&means[a], &means[b])).max(0.0);
            }
        }
        ref_push /= 12.0;
        assert!((pull - ref_pull).abs() < 1e-10 && (push - ref_push).abs() < 1e-10);
    }

    #[test]
    fn segmentation_json_round_trip() {
        let seg: Segmentation<f64> = Segmentation {
            labels: vec![0, 0, 1],
            segments: vec![
                Segment {
                    type_label: TypeLabel::Plane,
                    params: Some(PrimitiveParams::plane(nalgebra::Vector3::z(), 1.0).unwrap()),
                    count: 2,
                },
                Segment {
                    type_label: TypeLabel::Other,
                    params: None,
                    count: 1,
                },
            ],
        };
        let back = Segmentation::from_parts(seg.labels.clone(), &seg.to_json()).unwrap();
        assert_eq!(back, seg);
        assert!(Segmentation::<f64>::from_parts(vec![0, 0, 0], &seg.to_json()).is_err());
    }
}
