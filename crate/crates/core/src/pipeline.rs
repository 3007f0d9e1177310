//! End-to-end segmentation: normals → per-point primitive hypotheses →
//! consistency / smoothness descriptors → weighted mean-shift.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::clustering::{segment, FeatureSet, SegmentConfig, SegmentReport, SpectralMode};
use crate::error::{Error, ErrorKind, Result};
use crate::index::NeighborIndex;
use crate::localfeat::{estimate_normals, Neighborhood};
use crate::masking::{farthest_point_sample, FpsStart};
use crate::primitives::{fit_primitive, ransac_fit, PrimitiveParams, RansacConfig, TypeLabel};
use crate::scalar::Real;
use crate::spectral::{
    consistency_matrix, default_sigmas, descriptor_auto, smoothness_matrix, EigenConfig, SpectralDescriptor,
    TypeSigmas, DEFAULT_SIGMA_EDGE, SMOOTHNESS_K,
};

#[derive(Debug, Clone)]
pub struct PipelineConfig<T: Real> {
    pub normal_k: usize,
    /// Points that receive their own RANSAC hypothesis (FPS seeds).
    pub hypothesis_seeds: usize,
    /// Neighbourhood size of each seed's RANSAC; 0 picks max(64, N/50).
    pub hypothesis_k: usize,
    pub ransac_tol: T,
    pub ransac_iters: usize,
    /// Extra inlier share a more complex type needs per complexity step.
    pub complexity_margin: f64,
    pub types: Vec<TypeLabel>,
    pub sigmas: Option<TypeSigmas<T>>,
    /// Multiplier on the default σ_t (ignored when `sigmas` is given).
    pub sigma_scale: T,
    pub smoothness: bool,
    pub smoothness_k: usize,
    pub sigma_edge: T,
    pub d_c: Option<usize>,
    pub d_s: Option<usize>,
    pub spectral_mode: SpectralMode,
    pub segment: SegmentConfig<T>,
    pub eigen: EigenConfig,
    pub seed: u64,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            normal_k: 32,
            hypothesis_seeds: 512,
            hypothesis_k: 0,
            ransac_tol: T::lit(0.01),
            ransac_iters: 64,
            complexity_margin: 0.05,
            types: TypeLabel::FITTABLE.to_vec(),
            sigmas: None,
            sigma_scale: T::one(),
            smoothness: false,
            smoothness_k: SMOOTHNESS_K,
            sigma_edge: T::lit(DEFAULT_SIGMA_EDGE),
            d_c: None,
            d_s: None,
            spectral_mode: SpectralMode::PerColumn,
            segment: SegmentConfig::default(),
            eigen: EigenConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T: Real> {
    pub report: SegmentReport<T>,
    pub hypotheses: Vec<PrimitiveParams<T>>,
    pub sigmas: TypeSigmas<T>,
    pub consistency: SpectralDescriptor<T>,
    pub smoothness: Option<SpectralDescriptor<T>>,
    /// The consistency matrix used the truncated sparse path.
    pub truncated: bool,
}

/// One hypothesis per point: RANSAC on the neighbourhood of each FPS seed,
/// inherited by every point from its nearest seed.
pub fn point_hypotheses<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    cfg: &PipelineConfig<T>,
) -> Result<Vec<PrimitiveParams<T>>> {
    let n = cloud.len();
    let seeds = farthest_point_sample(cloud, cfg.hypothesis_seeds.clamp(1, n), FpsStart::Seeded(cfg.seed))?;
    let k = if cfg.hypothesis_k == 0 {
        (n / 50).max(64)
    } else {
        cfg.hypothesis_k
    }
    .min(n);
    let fits: Vec<PrimitiveParams<T>> = seeds
        .par_iter()
        .enumerate()
        .map(|(s, &c)| {
            let ids: Vec<usize> = index.knn(cloud.point(c), k)?.into_iter().map(|nb| nb.index).collect();
            let rc = RansacConfig {
                complexity_margin: cfg.complexity_margin,
                ..RansacConfig::new(cfg.ransac_tol, cfg.ransac_iters, cfg.seed.wrapping_add(s as u64))
            };
            match ransac_fit(cloud, &ids, &cfg.types, &rc) {
                Ok(f) => Ok(f.params),
                Err(e) if e.kind() != ErrorKind::Input => {
                    // no consensus in this neighbourhood: local tangent plane
                    log::debug!("seed {c}: {e}; using the least-squares plane");
                    fit_primitive(cloud, &ids, TypeLabel::Plane).map(|f| f.params)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let seed_index = NeighborIndex::from_points(seeds.iter().map(|&i| *cloud.point(i)).collect());
    Ok(cloud
        .positions()
        .par_iter()
        .map(|p| fits[seed_index.nearest(p).index])
        .collect())
}

pub fn run_segment<T: Real>(
    cloud: &PointCloud<T>,
    external: Option<&DMatrix<T>>,
    cfg: &PipelineConfig<T>,
) -> Result<PipelineOutput<T>> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid("segmentation needs at least two points"));
    }
    let index = NeighborIndex::new(cloud);
    let with_normals;
    let cloud = match cloud.normals() {
        Some(_) => cloud,
        None => {
            let field = estimate_normals(cloud, &index, &Neighborhood::Knn(cfg.normal_k.min(n)))?;
            with_normals = cloud.clone().with_normals(field.normals)?;
            &with_normals
        }
    };
    let hypotheses = point_hypotheses(cloud, &index, cfg)?;
    log::info!("hypotheses ready");
    let sigmas = match cfg.sigmas {
        Some(s) => s,
        None => {
            let d = default_sigmas(cloud, &hypotheses, cfg.seed)?;
            let k = cfg.sigma_scale;
            TypeSigmas {
                plane: d.plane * k,
                sphere: d.sphere * k,
                cylinder: d.cylinder * k,
                cone: d.cone * k,
            }
        }
    };
    log::info!(
        "sigmas: plane {:e} sphere {:e} cylinder {:e} cone {:e}",
        sigmas.plane,
        sigmas.sphere,
        sigmas.cylinder,
        sigmas.cone
    );
    let a_c = consistency_matrix(cloud, &hypotheses, &sigmas)?;
    let truncated = a_c.truncated;
    log::info!("consistency matrix: {} stored entries", a_c.nnz());
    let consistency = descriptor_auto(&a_c, cfg.d_c, &cfg.eigen)?;
    drop(a_c);
    log::info!("consistency descriptor: d = {}", consistency.d());
    let mut features = FeatureSet::new();
    if let Some(ext) = external {
        features.push("semantic", ext.clone(), None, cfg.seed)?;
    }
    features.push_spectral("consistency", &consistency, cfg.spectral_mode, cfg.seed)?;
    let smoothness = if cfg.smoothness {
        let normals = cloud.normals().expect("normals attached above");
        let a_s = smoothness_matrix(cloud, &index, normals, cfg.smoothness_k, cfg.sigma_edge)?;
        let desc = descriptor_auto(&a_s, cfg.d_s, &cfg.eigen)?;
        log::info!("smoothness descriptor: d = {}", desc.d());
        features.push_spectral("smoothness", &desc, cfg.spectral_mode, cfg.seed)?;
        Some(desc)
    } else {
        None
    };
    let types: Vec<TypeLabel> = hypotheses.iter().map(|h| h.type_label()).collect();
    let seg_cfg = SegmentConfig {
        seed: cfg.seed,
        ..cfg.segment
    };
    log::info!("descriptors ready");
    let report = segment(cloud, &features, &types, &seg_cfg)?;
    Ok(PipelineOutput {
        report,
        hypotheses,
        sigmas,
        consistency,
        smoothness,
        truncated,
    })
}
