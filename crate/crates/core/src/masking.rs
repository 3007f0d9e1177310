//! Farthest-point patches and random patch masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::index::NeighborIndex;
use crate::primitives::sample_indices;
use crate::scalar::Real;

pub const DEFAULT_PATCHES: usize = 128;
pub const DEFAULT_PATCH_SIZE: usize = 32;
pub const DEFAULT_MASK_RATIO: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpsStart {
    /// Uniformly random first index drawn from this seed.
    Seeded(u64),
    Fixed(usize),
}

/// Greedy farthest-point sampling; indices in selection order. Distance ties
/// go to the lower index.
pub fn farthest_point_sample<T: Real>(cloud: &PointCloud<T>, k: usize, start: FpsStart) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot select {k} of {n} points")));
    }
    let first = match start {
        FpsStart::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..n),
        FpsStart::Fixed(i) if i < n => i,
        FpsStart::Fixed(i) => return Err(Error::invalid(format!("start index {i} out of range"))),
    };
    let pts = cloud.positions();
    let mut nearest = vec![T::infinity(); n];
    let mut out = Vec::with_capacity(k);
    let mut current = first;
    for _ in 0..k {
        out.push(current);
        let c = pts[current];
        let (best, _) = nearest
            .par_iter_mut()
            .zip(pts.par_iter())
            .enumerate()
            .with_min_len(4096)
            .map(|(i, (d, p))| {
                let dd = (p - c).norm_squared();
                if dd < *d {
                    *d = dd;
                }
                (i, *d)
            })
            .reduce(
                || (usize::MAX, T::zero() - T::one()),
                |a, b| {
                    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                        b
                    } else {
                        a
                    }
                },
            );
        current = best;
    }
    Ok(out)
}

/// Number of masked patches: min(⌈m_r·K⌉, K − 1). Products within 1e-9 of
/// an integer are not rounded up (0.7·10 is 7, not 8).
pub fn mask_count(k: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("mask ratio {ratio} must lie in (0, 1)")));
    }
    if k < 2 {
        return Err(Error::invalid("masking needs at least two patches"));
    }
    let x = ratio * k as f64;
    let up = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    let m = (up as usize).min(k - 1);
    if m == 0 {
        return Err(Error::invalid("mask would remove no patch"));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub centers: Vec<usize>,
    /// `k` members per patch, nearest first (the centre itself first).
    pub members: Vec<Vec<usize>>,
    pub k: usize,
    /// Set when the cloud has fewer than `k` points and members repeat.
    pub padded: bool,
}

impl Patches {
    /// Fraction of the cloud's points covered by at least one patch.
    pub fn coverage(&self, n: usize) -> f64 {
        let mut hit = vec![false; n];
        for m in &self.members {
            for &i in m {
                hit[i] = true;
            }
        }
        hit.iter().filter(|h| **h).count() as f64 / n.max(1) as f64
    }
}

pub fn build_patches<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    centers: &[usize],
    k: usize,
) -> Result<Patches> {
    if k == 0 {
        return Err(Error::invalid("patch size must be at least 1"));
    }
    if let Some(&bad) = centers.iter().find(|&&c| c >= cloud.len()) {
        return Err(Error::invalid(format!("centre {bad} out of range")));
    }
    let padded = cloud.len() < k;
    if padded {
        log::warn!("patch size {k} exceeds {} points; members repeat", cloud.len());
    }
    let members = centers
        .par_iter()
        .map(|&c| {
            let nn: Vec<usize> = index
                .knn(cloud.point(c), k)
                .expect("clamped")
                .into_iter()
                .map(|n| n.index)
                .collect();
            let have = nn.len();
            (0..k).map(|j| nn[j % have]).collect()
        })
        .collect();
    Ok(Patches {
        centers: centers.to_vec(),
        members,
        k,
        padded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchMask {
    pub patches: Patches,
    pub masked: Vec<bool>,
    pub m: usize,
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub centers: Vec<usize>,
    pub masked_ids: Vec<usize>,
    pub k: usize,
    #[serde(rename = "K")]
    pub patch_count: usize,
    pub m_r: f64,
    pub seed: u64,
}

/// Masks a uniformly random M-subset of the patches.
pub fn select_mask(patches: Patches, ratio: f64, seed: u64) -> Result<PatchMask> {
    let k = patches.centers.len();
    let m = mask_count(k, ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = vec![false; k];
    for i in sample_indices(&mut rng, k, m) {
        masked[i] = true;
    }
    Ok(PatchMask {
        patches,
        masked,
        m,
        ratio,
        seed,
    })
}

impl PatchMask {
    pub fn patch_count(&self) -> usize {
        self.masked.len()
    }

    pub fn masked_ids(&self) -> Vec<usize> {
        (0..self.masked.len()).filter(|&i| self.masked[i]).collect()
    }

    pub fn unmasked_ids(&self) -> Vec<usize> {
        (0..self.masked.len()).filter(|&i| !self.masked[i]).collect()
    }

    /// Points removed from the input: members of a masked patch that no
    /// unmasked patch contains.
    pub fn removed_points(&self, n: usize) -> Vec<usize> {
        let mut state = vec![0u8; n]; // 1 masked, 2 kept by a visible patch
        for (p, members) in self.patches.members.iter().enumerate() {
            for &i in members {
                if self.masked[p] {
                    state[i] |= 1;
                } else {
                    state[i] |= 2;
                }
            }
        }
        (0..n).filter(|&i| state[i] == 1).collect()
    }

    pub fn kept_points(&self, n: usize) -> Vec<usize> {
        let removed = self.removed_points(n);
        let mut drop = vec![false; n];
        for i in removed {
            drop[i] = true;
        }
        (0..n).filter(|&i| !drop[i]).collect()
    }

    pub fn to_record(&self) -> MaskRecord {
        MaskRecord {
            centers: self.patches.centers.clone(),
            masked_ids: self.masked_ids(),
            k: self.patches.k,
            patch_count: self.patch_count(),
            m_r: self.ratio,
            seed: self.seed,
        }
    }
}
