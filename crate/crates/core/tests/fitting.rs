use hybridseg::primitives::{fit_primitive, ransac_fit, PrimitiveParams, RansacConfig, TypeLabel};
use hybridseg::synth::{random_isometry, sample_primitive};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn generators() -> Vec<PrimitiveParams<f64>> {
    vec![
        PrimitiveParams::plane(Vector3::new(0.3, -0.2, 1.0), 0.4).unwrap(),
        PrimitiveParams::sphere(Point3::new(0.2, -0.1, 0.3), 0.8).unwrap(),
        PrimitiveParams::cylinder(Vector3::new(0.2, 1.0, 0.1), Point3::new(0.1, 0.0, 0.2), 0.4).unwrap(),
        PrimitiveParams::cone(Point3::new(0.1, 0.2, -0.3), Vector3::new(0.1, -0.3, 1.0), 0.5).unwrap(),
    ]
}

fn fit_all(prim: &PrimitiveParams<f64>, n: usize, noise: f64, seed: u64) -> PrimitiveParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = sample_primitive(prim, n, &mut rng);
    if noise > 0.0 {
        s.jitter(noise, &mut rng);
    }
    let cloud = s.into_cloud();
    let ids: Vec<usize> = (0..cloud.len()).collect();
    fit_primitive(&cloud, &ids, prim.type_label()).unwrap().params
}

#[test]
fn exact_fits_recover_generators() {
    for prim in generators() {
        let fit = fit_all(&prim, 1000, 0.0, 17);
        let err = fit.max_param_diff(&prim);
        assert!(err < 1e-6, "{prim:?} -> {fit:?} ({err:e})");
    }
}

#[test]
fn exact_fits_without_normals() {
    for prim in generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = sample_primitive(&prim, 1000, &mut rng).into_cloud().without_normals();
        let ids: Vec<usize> = (0..cloud.len()).collect();
        let fit = fit_primitive(&cloud, &ids, prim.type_label()).unwrap().params;
        assert!(fit.max_param_diff(&prim) < 1e-6, "{prim:?} -> {fit:?}");
    }
}

#[test]
fn noisy_fits_stay_close() {
    for prim in generators() {
        let mut worst = 0.0f64;
        for seed in 0..10 {
            let fit = fit_all(&prim, 1000, 0.01, 100 + seed);
            worst = worst.max(fit.max_param_diff(&prim));
        }
        assert!(worst < 0.05, "{prim:?}: {worst}");
    }
}

#[test]
fn fits_follow_rigid_motions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for prim in generators() {
        let iso = random_isometry(&mut rng);
        let moved = prim.transformed(&iso);
        let fit = fit_all(&moved, 800, 0.0, 4);
        assert!(fit.max_param_diff(&moved) < 1e-6, "{moved:?} -> {fit:?}");
    }
}

#[test]
fn ransac_plane_with_outliers() {
    let plane = PrimitiveParams::plane(Vector3::new(0.0, 0.1, 1.0), 0.1).unwrap();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inliers = sample_primitive(&plane, 700, &mut rng);
        let mut pts: Vec<[f64; 3]> = inliers.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        for _ in 0..300 {
            pts.push([
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.6),
            ]);
        }
        let cloud = hybridseg::cloud::PointCloud::from_slices(&pts).unwrap();
        let ids: Vec<usize> = (0..cloud.len()).collect();
        let fit = ransac_fit(&cloud, &ids, &[TypeLabel::Plane], &RansacConfig::new(0.01, 100, seed)).unwrap();
        let recovered = fit.inliers.iter().filter(|&&i| i < 700).count();
        assert!(recovered as f64 >= 0.95 * 700.0, "seed {seed}: {recovered}");
        assert!(fit.params.max_param_diff(&plane) < 1e-3);
    }
}

#[test]
fn ransac_is_reproducible() {
    let cyl = PrimitiveParams::cylinder(Vector3::x(), Point3::origin(), 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = sample_primitive(&cyl, 400, &mut rng);
    s.jitter(0.002, &mut rng);
    let cloud = s.into_cloud();
    let ids: Vec<usize> = (0..cloud.len()).collect();
    let cfg = RansacConfig::new(0.01, 40, 99);
    let a = ransac_fit(&cloud, &ids, &TypeLabel::FITTABLE, &cfg).unwrap();
    let b = ransac_fit(&cloud, &ids, &TypeLabel::FITTABLE, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.params.type_label(), TypeLabel::Cylinder);
}
