use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hybridseg::clustering::{SegmentConfig, Segmentation, SpectralMode};
use hybridseg::cloud::PointCloud;
use hybridseg::fmat::Fmat;
use hybridseg::implicit::{crop_scene, make_query_set, occupancy_threshold, sample_udf, ImplicitManifest, QueryMix};
use hybridseg::index::NeighborIndex;
use hybridseg::io::{encode_ply, format_labels, format_xyz, load_cloud, load_labels, ExtraProperty, Format, PlyEncoding};
use hybridseg::linae::{make_problem, run_recovery, verify_derivative, RecoveryConfig, DerivativeConfig};
use hybridseg::localfeat::{feature_field, FeatureConfig, Neighborhood};
use hybridseg::masking::{build_patches, farthest_point_sample, select_mask, FpsStart};
use hybridseg::metrics::evaluate;
use hybridseg::pipeline::{run_segment, PipelineConfig};
use hybridseg::primitives::{fit_primitive, ransac_fit, residual_error, RansacConfig, TypeLabel};
use hybridseg::spectral::TypeSigmas;
use hybridseg::{Error, Result};
use nalgebra::Point3;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{Manifest, Recorder};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: Manifest,
    /// False when a verification command ran but its checks failed.
    pub pass: bool,
}

impl Outcome {
    fn ok(manifest: Manifest) -> Self {
        Self { manifest, pass: true }
    }

    pub fn summary(&self) -> &serde_json::Value {
        &self.manifest.summary
    }
}

fn input_format(path: &Path) -> Result<Format> {
    Format::from_path(path)
        .ok_or_else(|| Error::InvalidInput(format!("{}: cannot tell the format from the extension", path.display())))
}

fn read_cloud(rec: &mut Recorder, path: &Path) -> Result<PointCloud<f64>> {
    rec.input(path)?;
    let cloud = load_cloud(path, input_format(path)?)?;
    log::info!("{}: {} points", path.display(), cloud.len());
    Ok(cloud)
}

fn read_labels(rec: &mut Recorder, path: &Path, n: usize) -> Result<Vec<u32>> {
    rec.input(path)?;
    let labels = load_labels(path)?;
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    Ok(labels)
}

/// Writes a cloud in the configured format, with scalar columns in PLY.
fn write_cloud(
    rec: &mut Recorder,
    cfg: &RunConfig,
    stem: &str,
    cloud: &PointCloud<f64>,
    extras: &[ExtraProperty<'_>],
) -> Result<PathBuf> {
    let format: Format = cfg.get("format")?;
    match format {
        Format::Xyz => rec.write(&format!("{stem}.xyz"), format_xyz(cloud)),
        Format::Ply => rec.write(&format!("{stem}.ply"), encode_ply(cloud, PlyEncoding::Ascii, extras)?),
    }
}

fn opt_path(cfg: &RunConfig, key: &str) -> Option<PathBuf> {
    let raw = cfg.raw(key);
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn feature_config(cfg: &RunConfig) -> Result<FeatureConfig<f64>> {
    let neighborhood = match cfg.get_opt::<f64>("feature_radius")? {
        Some(r) => Neighborhood::Radius(r),
        None => Neighborhood::KnnMeanRadius(cfg.get("feature_k")?),
    };
    Ok(FeatureConfig {
        neighborhood,
        orientation_k: cfg.get("orientation_k")?,
    })
}

/// PCA normals (MST-oriented) and surface variation per point.
pub fn cmd_features(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new("features", out)?;
    let cloud = read_cloud(&mut rec, input)?;
    let index = NeighborIndex::new(&cloud);
    let field = feature_field(&cloud, &index, &feature_config(cfg)?)?;
    let rows: Vec<[f64; 4]> = field
        .normals
        .iter()
        .zip(&field.variations)
        .map(|(n, &v)| [n.x, n.y, n.z, v])
        .collect();
    rec.write("features.fmat", Fmat::from_rows(&rows).encode())?;
    let degenerate: Vec<f64> = field.degenerate.iter().map(|&d| f64::from(u8::from(d))).collect();
    let flips = field.orientation_flips();
    let n_degenerate = field.degenerate.iter().filter(|&&d| d).count();
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in &field.variations {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    let oriented = cloud.clone().with_normals(field.normals)?;
    write_cloud(
        &mut rec,
        cfg,
        "oriented",
        &oriented,
        &[
            ExtraProperty {
                name: "variation",
                values: &field.variations,
            },
            ExtraProperty {
                name: "degenerate",
                values: &degenerate,
            },
        ],
    )?;
    let summary = json!({
        "points": cloud.len(),
        "degenerate": n_degenerate,
        "orientation_flips": flips,
        "variation_min": lo,
        "variation_max": hi,
        "variation_mean": sum / cloud.len() as f64,
    });
    Ok(Outcome::ok(rec.finish(cfg, summary)?))
}

/// Fits one primitive per labelled segment. `fit_type = auto` lets RANSAC
/// choose among the four types.
pub fn cmd_fit(input: &Path, labels: &Path, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new("fit", out)?;
    let cloud = read_cloud(&mut rec, input)?;
    let labels = read_labels(&mut rec, labels, cloud.len())?;
    let fit_type = cfg.raw("fit_type");
    let forced = if fit_type == "auto" {
        None
    } else {
        Some(fit_type.parse::<TypeLabel>()?)
    };
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let seed: u64 = cfg.get("seed")?;
    let rc = RansacConfig {
        complexity_margin: cfg.get("complexity_margin")?,
        ..RansacConfig::new(cfg.get("ransac_tol")?, cfg.get("ransac_iters")?, seed)
    };
    let mut records = Vec::new();
    let mut fitted = 0usize;
    let mut residual_sum = 0.0;
    for (&label, ids) in &groups {
        let fit = match forced {
            Some(t) => fit_primitive(&cloud, ids, t).map(|f| (f.params, f.converged)),
            None => ransac_fit(&cloud, ids, &TypeLabel::FITTABLE, &rc).map(|f| (f.params, f.refit_converged)),
        };
        match fit {
            Ok((params, converged)) => {
                let pts: Vec<Point3<f64>> = ids.iter().map(|&i| *cloud.point(i)).collect();
                let residual = residual_error(&params, &pts)?;
                fitted += 1;
                residual_sum += residual;
                records.push(json!({
                    "label": label,
                    "count": ids.len(),
                    "type": params.type_label(),
                    "params": params.to_record(),
                    "residual": residual,
                    "converged": converged,
                }));
            }
            Err(e) if e.kind() != hybridseg::ErrorKind::Input => {
                log::warn!("segment {label}: {e}");
                records.push(json!({ "label": label, "count": ids.len(), "error": e.to_string() }));
            }
            Err(e) => return Err(e),
        }
    }
    if fitted == 0 {
        return Err(Error::NoConsensus("no segment could be fitted".into()));
    }
    rec.write_json("fit.json", &json!({ "segments": records }))?;
    let summary = json!({
        "segments": groups.len(),
        "fitted": fitted,
        "mean_residual": residual_sum / fitted as f64,
    });
    Ok(Outcome::ok(rec.finish(cfg, summary)?))
}

pub fn pipeline_config(cfg: &RunConfig) -> Result<PipelineConfig<f64>> {
    let sig = [
        cfg.get_opt::<f64>("sigma_plane")?,
        cfg.get_opt::<f64>("sigma_sphere")?,
        cfg.get_opt::<f64>("sigma_cylinder")?,
        cfg.get_opt::<f64>("sigma_cone")?,
    ];
    let sigmas = match sig {
        [Some(plane), Some(sphere), Some(cylinder), Some(cone)] => {
            let s = TypeSigmas {
                plane,
                sphere,
                cylinder,
                cone,
            };
            s.validate()?;
            Some(s)
        }
        [None, None, None, None] => None,
        _ => return Err(Error::InvalidInput("set all four sigma_* keys or none".into())),
    };
    let seed = cfg.get("seed")?;
    let spectral_mode: SpectralMode = cfg.get("spectral_mode")?;
    Ok(PipelineConfig {
        normal_k: cfg.get("normal_k")?,
        hypothesis_seeds: cfg.get("hypothesis_seeds")?,
        hypothesis_k: cfg.get("hypothesis_k")?,
        ransac_tol: cfg.get("ransac_tol")?,
        ransac_iters: cfg.get("ransac_iters")?,
        complexity_margin: cfg.get("complexity_margin")?,
        sigmas,
        sigma_scale: cfg.get("sigma_scale")?,
        smoothness: cfg.get("smoothness")?,
        smoothness_k: cfg.get("smoothness_k")?,
        sigma_edge: cfg.get("sigma_edge")?,
        d_c: cfg.get_opt("d_c")?,
        d_s: cfg.get_opt("d_s")?,
        spectral_mode,
        segment: SegmentConfig {
            bandwidth: cfg.get_opt("bandwidth")?,
            bandwidth_factor: cfg.get("bandwidth_factor")?,
            min_size: cfg.get("min_size")?,
            max_iter: cfg.get("mean_shift_iters")?,
            tol: cfg.get("mean_shift_tol")?,
            sample_limit: cfg.get("mean_shift_sample")?,
            seed,
            ..SegmentConfig::default()
        },
        seed,
        ..PipelineConfig::default()
    })
}

/// Full segmentation; scores against `labels` when that key is set.
pub fn cmd_segment(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new("segment", out)?;
    let cloud = read_cloud(&mut rec, input)?;
    let pcfg = pipeline_config(cfg)?;
    let gt = match opt_path(cfg, "labels") {
        Some(p) => Some(read_labels(&mut rec, &p, cloud.len())?),
        None => None,
    };
    let external = match opt_path(cfg, "semantic") {
        Some(p) => {
            rec.input(&p)?;
            let m = Fmat::load(&p)?.to_matrix::<f64>();
            if m.nrows() != cloud.len() {
                return Err(Error::LengthMismatch {
                    expected: cloud.len(),
                    actual: m.nrows(),
                });
            }
            Some(m)
        }
        None => None,
    };
    let result = run_segment(&cloud, external.as_ref(), &pcfg)?;
    let seg = &result.report.segmentation;
    rec.write("labels.txt", format_labels(&seg.labels))?;
    rec.write_json("segments.json", &seg.to_json())?;
    rec.write("consistency.fmat", result.consistency.to_fmat().encode())?;
    let label_values: Vec<f64> = seg.labels.iter().map(|&l| f64::from(l)).collect();
    write_cloud(
        &mut rec,
        cfg,
        "segmented",
        &cloud,
        &[ExtraProperty {
            name: "segment",
            values: &label_values,
        }],
    )?;
    let metrics = match gt {
        Some(gt) => {
            let eps: f64 = cfg.get("coverage_eps")?;
            let report = evaluate(cloud.positions(), seg, &Segmentation::from_labels(gt), eps)?;
            rec.write_json("metrics.json", &report)?;
            Some(report)
        }
        None => None,
    };
    let summary = json!({
        "points": cloud.len(),
        "K": seg.k(),
        "types": seg.segments.iter().map(|s| s.type_label).collect::<Vec<_>>(),
        "d_c": result.consistency.d(),
        "d_s": result.smoothness.as_ref().map(|d| d.d()),
        "bandwidth": result.report.bandwidth,
        "weights": result.report.weights,
        "entropies": result.report.entropies,
        "raw_clusters": result.report.raw_clusters,
        "truncated_adjacency": result.truncated,
        "seg_iou": metrics.as_ref().map(|m| m.seg_iou),
        "metrics": metrics,
    });
    Ok(Outcome::ok(rec.finish(cfg, summary)?))
}

/// Optional crop, mixed query sampling and exact UDF labels.
pub fn cmd_implicit(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new("implicit", out)?;
    let cloud = read_cloud(&mut rec, input)?;
    let seed: u64 = cfg.get("seed")?;
    let uniform: f64 = cfg.get("query_uniform")?;
    let mix = QueryMix {
        uniform,
        near_surface: 1.0 - uniform,
        sigma: cfg.get("query_sigma")?,
    };
    mix.validate()?;
    let crop_ratio: f64 = cfg.get("crop_ratio")?;
    let scene = if crop_ratio > 0.0 {
        let c = crop_scene(&cloud, crop_ratio, seed)?;
        write_cloud(&mut rec, cfg, "cropped", &c, &[])?;
        c
    } else {
        cloud
    };
    // the crop and the queries draw from distinct streams
    let qseed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let set = make_query_set(&scene, cfg.get("query_count")?, &mix, qseed)?;
    let index = NeighborIndex::new(&scene);
    let mut samples = sample_udf(&index, &set.points)?;
    if let Some(fraction) = cfg.get_opt::<f64>("occupancy_fraction")? {
        samples = samples.with_occupancy_proxy(occupancy_threshold(&scene, fraction))?;
    }
    rec.write("queries.fmat", samples.queries_fmat().encode())?;
    rec.write("udf.fmat", samples.udf_fmat().encode())?;
    if let Some(occ) = &samples.occupancy {
        let col: Vec<f64> = occ.iter().map(|&o| f64::from(u8::from(o))).collect();
        rec.write("occupancy.fmat", Fmat::column(&col).encode())?;
    }
    if cfg.get::<bool>("csv")? {
        rec.write("samples.csv", samples.to_csv())?;
    }
    let mut manifest = ImplicitManifest::new(input.display().to_string(), qseed, mix, &set);
    manifest.occupancy_proxy_tau = samples.occupancy_tau;
    rec.write_json("implicit.json", &manifest)?;
    let max_udf = samples.udf.iter().copied().fold(0.0f64, f64::max);
    let summary = json!({
        "scene_points": scene.len(),
        "queries": samples.len(),
        "uniform": set.uniform,
        "near_surface": set.near_surface,
        "max_udf": max_udf,
        "occupancy_tau": samples.occupancy_tau,
    });
    Ok(Outcome::ok(rec.finish(cfg, summary)?))
}

/// FPS patch centres, k-NN patches and a random M-of-K mask.
pub fn cmd_mask(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new("mask", out)?;
    let cloud = read_cloud(&mut rec, input)?;
    let seed: u64 = cfg.get("seed")?;
    let patches: usize = cfg.get("patches")?;
    let centers = farthest_point_sample(&cloud, patches, FpsStart::Seeded(seed))?;
    let index = NeighborIndex::new(&cloud);
    let built = build_patches(&cloud, &index, &centers, cfg.get("patch_size")?)?;
    let padded = built.padded;
    let mask = select_mask(built, cfg.get("mask_ratio")?, seed)?;
    rec.write_json("mask.json", &mask.to_record())?;
    let kept = cloud.subset(&mask.kept_points(cloud.len()))?;
    write_cloud(&mut rec, cfg, "visible", &kept, &[])?;
    let summary = json!({
        "K": mask.patch_count(),
        "M": mask.m,
        "visible_points": kept.len(),
        "removed_points": cloud.len() - kept.len(),
        "padded": padded,
    });
    Ok(Outcome::ok(rec.finish(cfg, summary)?))
}

/// Segmentation metrics of `pred` against `gt`. With `input`, the optional
/// segment sidecars (`segments.json` as written by `segment`) add type and
/// geometry metrics.
pub fn cmd_eval(
    pred: &Path,
    gt: &Path,
    input: Option<&Path>,
    sidecars: (Option<&Path>, Option<&Path>),
    cfg: &RunConfig,
    out: &Path,
) -> Result<Outcome> {
    let mut rec = Recorder::new("eval", out)?;
    rec.input(pred)?;
    rec.input(gt)?;
    let pred_labels = load_labels(pred)?;
    let gt_labels = load_labels(gt)?;
    if pred_labels.len() != gt_labels.len() {
        return Err(Error::LengthMismatch {
            expected: gt_labels.len(),
            actual: pred_labels.len(),
        });
    }
    let points: Vec<Point3<f64>> = match input {
        Some(p) => {
            let cloud = read_cloud(&mut rec, p)?;
            if cloud.len() != gt_labels.len() {
                return Err(Error::LengthMismatch {
                    expected: gt_labels.len(),
                    actual: cloud.len(),
                });
            }
            cloud.positions().to_vec()
        }
        None => {
            if sidecars.0.is_some() || sidecars.1.is_some() {
                return Err(Error::InvalidInput("segment sidecars need --input for the geometry".into()));
            }
            vec![Point3::origin(); gt_labels.len()]
        }
    };
    let mut load = |labels: Vec<u32>, sidecar: Option<&Path>| -> Result<Segmentation<f64>> {
        match sidecar {
            Some(p) => {
                rec.input(p)?;
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                    location: p.display().to_string(),
                    message: e.to_string(),
                })?;
                Segmentation::from_parts(labels, &v)
            }
            None => Ok(Segmentation::from_labels(labels)),
        }
    };
    let pred_seg = load(pred_labels, sidecars.0)?;
    let gt_seg = load(gt_labels, sidecars.1)?;
    let report = evaluate(&points, &pred_seg, &gt_seg, cfg.get("coverage_eps")?)?;
    rec.write_json("metrics.json", &report)?;
    let summary = serde_json::to_value(&report).expect("serialisable");
    Ok(Outcome::ok(rec.finish(cfg, summary)?))
}

/// Linear-autoencoder checks: implicit-model subspace recovery over seeded
/// trials, and the analytic derivative against finite differences.
pub fn cmd_ae_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new("ae-verify", out)?;
    let seed: u64 = cfg.get("seed")?;
    let rc = RecoveryConfig {
        n: cfg.get("ae_n")?,
        m: cfg.get("ae_m")?,
        samples: cfg.get("ae_samples")?,
        noise: cfg.get("ae_noise")?,
        trials: cfg.get("ae_trials")?,
        seed,
        ..RecoveryConfig::default()
    };
    let recovery = run_recovery(&rc)?;
    let problem = make_problem::<f64>(rc.n, rc.m, rc.samples, rc.noise, seed)?;
    let dc = DerivativeConfig {
        probes: cfg.get("ae_probes")?,
        seed,
        ..DerivativeConfig::default()
    };
    let derivative = verify_derivative(&problem, &dc)?;
    let pass = recovery.pass && derivative.pass;
    rec.write_json(
        "ae_report.json",
        &json!({ "recovery_config": rc, "recovery": recovery, "derivative_config": dc, "derivative": derivative, "pass": pass }),
    )?;
    let summary = json!({
        "pass": pass,
        "recovery_pass": recovery.pass,
        "recovery_max_deviation": recovery.max_deviation,
        "control_separated": recovery.control_separated,
        "control_pass": recovery.control_pass,
        "derivative_pass": derivative.pass,
        "derivative_max_fd_error": derivative.max_fd_error,
        "derivative_order": derivative.order,
    });
    Ok(Outcome {
        manifest: rec.finish(cfg, summary)?,
        pass,
    })
}
