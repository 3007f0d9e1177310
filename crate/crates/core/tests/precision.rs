use hybridseg::localfeat::{feature_field, FeatureConfig, Neighborhood};
use hybridseg::metrics::seg_iou;
use hybridseg::pipeline::run_segment;
use hybridseg::primitives::fit_primitive;
use hybridseg::synth::two_planes;
use hybridseg::{NeighborIndex32, PipelineConfig32, PointCloud32, Primitive32};

#[test]
fn single_precision_end_to_end() {
    let scene = two_planes::<f32>(200, 0.5, 3);
    let cloud: PointCloud32 = scene.cloud.clone().without_normals();
    let index = NeighborIndex32::new(&cloud);
    let field = feature_field(&cloud, &index, &FeatureConfig::with_neighborhood(Neighborhood::Knn(16))).unwrap();
    assert!(field.variations.iter().all(|&v| (0.0..=1.0 / 3.0).contains(&v)));
    assert!(field.normals.iter().all(|n| n.z.abs() > 0.999));

    let ids: Vec<usize> = (0..200).collect();
    let fit = fit_primitive(&cloud, &ids, hybridseg::primitives::TypeLabel::Plane).unwrap();
    let truth: Primitive32 = scene.primitives[0];
    assert!(fit.params.max_param_diff(&truth) < 1e-4);

    let out = run_segment(&cloud, None, &PipelineConfig32::default()).unwrap();
    let seg = out.report.segmentation;
    assert_eq!(seg.k(), 2);
    assert_eq!(seg_iou(&seg.labels, scene.labels()).unwrap(), 1.0);
}
