//! Segmentation metrics: Seg-IoU, Type-IoU, P-coverage and Res-Error.

use nalgebra::{DMatrix, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::max_score_assignment;
use crate::clustering::{compact_labels, Segmentation};
use crate::error::{Error, Result};
use crate::primitives::{residual_error, PrimitiveParams};
use crate::scalar::Real;

pub const DEFAULT_COVERAGE_EPS: f64 = 0.01;

/// IoU between every predicted (row) and ground-truth (column) segment.
pub fn iou_matrix(pred: &[u32], gt: &[u32]) -> Result<DMatrix<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    let (p, kp) = compact_labels(pred);
    let (g, kg) = compact_labels(gt);
    let mut inter = DMatrix::<f64>::zeros(kp, kg);
    let mut sp = vec![0.0; kp];
    let mut sg = vec![0.0; kg];
    for (&a, &b) in p.iter().zip(&g) {
        inter[(a as usize, b as usize)] += 1.0;
        sp[a as usize] += 1.0;
        sg[b as usize] += 1.0;
    }
    Ok(DMatrix::from_fn(kp, kg, |i, j| {
        let x = inter[(i, j)];
        x / (sp[i] + sg[j] - x)
    }))
}

/// One-to-one matching between predicted and ground-truth segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// (predicted id, ground-truth id, IoU), ids in first-appearance order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub k_pred: usize,
    pub k_gt: usize,
}

impl Matching {
    pub fn seg_iou(&self) -> f64 {
        if self.k_gt == 0 || self.k_pred == 0 {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.2).sum::<f64>() / self.k_gt as f64
    }
}

/// Hungarian matching maximising the summed IoU.
pub fn match_segments(pred: &[u32], gt: &[u32]) -> Result<Matching> {
    let iou = iou_matrix(pred, gt)?;
    let (k_pred, k_gt) = iou.shape();
    let assignment = max_score_assignment(&iou)?;
    let pairs = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j, iou[(i, j)])))
        .collect();
    Ok(Matching { pairs, k_pred, k_gt })
}

/// Mean matched IoU over ground-truth segments; unmatched ones count 0.
pub fn seg_iou(pred: &[u32], gt: &[u32]) -> Result<f64> {
    Ok(match_segments(pred, gt)?.seg_iou())
}

/// Fraction of matched segments whose types agree. Types are indexed by
/// the first-appearance ids of the matching.
pub fn type_iou<L: PartialEq>(matching: &Matching, pred_types: &[L], gt_types: &[L]) -> f64 {
    if matching.pairs.is_empty() {
        return 0.0;
    }
    let agree = matching
        .pairs
        .iter()
        .filter(|(p, g, _)| pred_types[*p] == gt_types[*g])
        .count();
    agree as f64 / matching.pairs.len() as f64
}

/// Fraction of points within `eps` of some primitive; 0 without primitives.
pub fn p_coverage<T: Real>(points: &[Point3<T>], prims: &[PrimitiveParams<T>], eps: T) -> f64 {
    if prims.is_empty() || points.is_empty() {
        return 0.0;
    }
    let covered = points
        .par_iter()
        .filter(|p| prims.iter().any(|s| s.distance(p) < eps))
        .count();
    covered as f64 / points.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResError {
    /// Σ over matched segments of the mean sample distance.
    pub sum: f64,
    /// `sum` divided by the number of terms.
    pub mean: f64,
    pub terms: usize,
}

/// Res-Error over matched (primitive, ground-truth samples) pairs.
pub fn res_error<T: Real>(pairs: &[(PrimitiveParams<T>, Vec<Point3<T>>)]) -> Result<ResError> {
    let mut sum = 0.0;
    for (prim, samples) in pairs {
        sum += residual_error(prim, samples)?.as_f64();
    }
    let terms = pairs.len();
    Ok(ResError {
        sum,
        mean: if terms == 0 { 0.0 } else { sum / terms as f64 },
        terms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seg_iou: f64,
    pub type_iou: Option<f64>,
    pub res_error: Option<ResError>,
    pub p_coverage: Option<f64>,
    #[serde(rename = "K_pred")]
    pub k_pred: usize,
    #[serde(rename = "K_gt")]
    pub k_gt: usize,
}

/// All metrics of a predicted segmentation against ground truth. Type and
/// geometry metrics are computed when the inputs carry that information.
pub fn evaluate<T: Real>(
    points: &[Point3<T>],
    pred: &Segmentation<T>,
    gt: &Segmentation<T>,
    eps: T,
) -> Result<MetricReport> {
    if pred.labels.len() != gt.labels.len() || points.len() != gt.labels.len() {
        return Err(Error::LengthMismatch {
            expected: gt.labels.len(),
            actual: pred.labels.len(),
        });
    }
    let matching = match_segments(&pred.labels, &gt.labels)?;
    // matching ids follow first appearance; map them back to segment records
    let first = |labels: &[u32], k: usize| {
        let mut order = Vec::with_capacity(k);
        let mut seen = vec![false; k];
        for &l in labels {
            if !seen[l as usize] {
                seen[l as usize] = true;
                order.push(l as usize);
            }
        }
        order
    };
    let pred_order = first(&pred.labels, pred.k());
    let gt_order = first(&gt.labels, gt.k());
    let typed = |s: &Segmentation<T>| s.segments.iter().any(|x| x.type_label != crate::primitives::TypeLabel::Other);
    let type_iou = (typed(pred) && typed(gt)).then(|| {
        let pt: Vec<_> = pred_order.iter().map(|&i| pred.segments[i].type_label).collect();
        let gtt: Vec<_> = gt_order.iter().map(|&i| gt.segments[i].type_label).collect();
        type_iou(&matching, &pt, &gtt)
    });
    let prims = pred.primitives();
    let p_cov = (!prims.is_empty()).then(|| p_coverage(points, &prims, eps));
    let members = gt.members();
    let pairs: Vec<_> = matching
        .pairs
        .iter()
        .filter_map(|&(p, g, _)| {
            let prim = pred.segments[pred_order[p]].params?;
            let samples = members[gt_order[g]].iter().map(|&i| points[i]).collect();
            Some((prim, samples))
        })
        .collect();
    let res = if prims.is_empty() { None } else { Some(res_error(&pairs)?) };
    Ok(MetricReport {
        seg_iou: if pred.k() == 0 { 0.0 } else { matching.seg_iou() },
        type_iou,
        res_error: res,
        p_coverage: p_cov,
        k_pred: matching.k_pred,
        k_gt: matching.k_gt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn seg_iou_examples() {
        let gt = [0, 0, 1, 1];
        assert_eq!(seg_iou(&gt, &gt).unwrap(), 1.0);
        assert_eq!(seg_iou(&[5, 5, 9, 9], &gt).unwrap(), 1.0);
        assert_eq!(seg_iou(&[0, 0, 0, 0], &gt).unwrap(), 0.25);
        assert!(seg_iou(&[0, 0], &gt).is_err());
        assert_eq!(seg_iou(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn type_agreement_fraction() {
        let m = match_segments(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
        assert_eq!(type_iou(&m, &[1, 2, 3, 4], &[1, 2, 0, 0]), 0.5);
        assert_eq!(type_iou(&m, &[1, 2, 3, 4], &[1, 2, 3, 4]), 1.0);
        assert_eq!(type_iou(&m, &[1, 2, 3, 4], &[0, 0, 0, 0]), 0.0);
    }

    #[test]
    fn coverage_counts_inliers() {
        let plane = PrimitiveParams::plane(Vector3::z(), 0.0).unwrap();
        let pts: Vec<Point3<f64>> = (0..10).map(|i| Point3::new(i as f64, 0.0, if i < 3 { 0.02 } else { 0.0 })).collect();
        assert_eq!(p_coverage(&pts, &[plane], 0.01), 0.7);
        assert_eq!(p_coverage(&pts, &[], 0.01), 0.0);
    }

    #[test]
    fn res_error_sum_and_mean() {
        let s = PrimitiveParams::sphere(Point3::origin(), 1.0).unwrap();
        let on = vec![Point3::new(1.1, 0.0, 0.0), Point3::new(0.0, -1.1, 0.0)];
        let off = vec![Point3::new(1.3, 0.0, 0.0)];
        let r = res_error(&[(s, on), (s, off)]).unwrap();
        assert!((r.sum - 0.4).abs() < 1e-12 && (r.mean - 0.2).abs() < 1e-12);
    }
}
