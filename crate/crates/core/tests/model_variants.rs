//! End-to-end behaviour of the model variants on small meshes.

use geofuse_core::fem::{HyperParams, MaternParams};
use geofuse_core::inference::{condition_params, integrate_hyperparameters, node_moments, summarize, GridSpec};
use geofuse_core::mesh::{assign_regions, fibonacci_lattice, triangulate_plane, triangulate_sphere, PlanarMeshOptions};
use geofuse_core::model::{build_model, HierModel, ModelOptions, ObservationSet, PriorSpec, PseudoSpec, RegionPrior, Variant};
use geofuse_core::synthetic::random_sphere_point;
use geofuse_core::{DomainKind, Point3, Polygon, RegionId, RegionPartition, TriangleMesh};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn partition() -> RegionPartition {
    RegionPartition { regions: vec![(RegionId(0), Polygon::rectangle(-40.0, -30.0, 40.0, 30.0))], default_region: RegionId(1) }
}

fn sphere_mesh(n: usize) -> TriangleMesh {
    assign_regions(&triangulate_sphere(&fibonacci_lattice(n).unwrap()).unwrap(), &partition())
}

fn observations(n: usize, seed: u64) -> ObservationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs: Vec<Point3> = (0..n).map(|_| random_sphere_point(&mut rng)).collect();
    let values = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ObservationSet::new(locs, values, vec![0.3; n]).unwrap()
}

fn vertex_rows(model: &HierModel) -> Vec<Option<Vec<(usize, f64)>>> {
    (0..model.num_vertices()).map(|j| Some(vec![(j, 1.0)])).collect()
}

fn prior() -> PriorSpec {
    PriorSpec::new(RegionPrior::new(1.0, 0.5, 1.0))
}

#[test]
fn every_variant_fits_and_summarizes() {
    let mesh = sphere_mesh(400);
    let obs = observations(60, 3);
    let variants = [
        Variant::Stationary,
        Variant::Subset { keep: vec![RegionId(1)] },
        Variant::ProcessPartition,
        Variant::ParameterPartition,
        Variant::Constrained { zero_region: RegionId(0) },
    ];
    for variant in variants {
        let opts = ModelOptions {
            pseudo: matches!(variant, Variant::Constrained { .. }).then(|| PseudoSpec::interior(20, 0.1)),
            drop_outside: matches!(variant, Variant::Subset { .. }),
            ..ModelOptions::default()
        };
        let model = build_model(variant.clone(), &mesh, &partition(), &obs, None, &prior(), &opts).unwrap();
        let hyper = integrate_hyperparameters(&model, &GridSpec::default()).unwrap();
        let total: f64 = hyper.nodes.iter().map(|n| n.weight).sum();
        assert!((total - 1.0).abs() < 1e-12, "{}: weights sum to {total}", variant.name());
        let field = summarize(&model, &hyper, &vertex_rows(&model), false).unwrap();
        assert!(field.mean.iter().chain(&field.sd).all(|v| v.is_finite()), "{}", variant.name());
        assert!(field.sd.iter().all(|&s| s > 0.0), "{}", variant.name());
    }
}

#[test]
fn subset_model_drops_observations_outside_kept_regions() {
    let mesh = sphere_mesh(400);
    let obs = observations(80, 5);
    let opts = ModelOptions { drop_outside: true, ..ModelOptions::default() };
    let model = build_model(Variant::Subset { keep: vec![RegionId(1)] }, &mesh, &partition(), &obs, None, &prior(), &opts).unwrap();
    let part = partition();
    let outside = obs.locations.iter().filter(|p| part.region_of(DomainKind::Sphere, p) == RegionId(0)).count();
    assert!(outside > 0);
    assert_eq!(model.dropped.len() + model.num_observations(), obs.len());
    assert!(model.dropped.len() >= outside / 2, "dropped {} of {outside} outside points", model.dropped.len());
}

#[test]
fn pseudo_observations_shrink_zero_region_uncertainty() {
    let mesh = sphere_mesh(600);
    let obs = observations(80, 8);
    let params = HyperParams::uniform(&mesh.regions(), MaternParams::new(1.0, 0.5));
    let plain = build_model(Variant::Constrained { zero_region: RegionId(0) }, &mesh, &partition(), &obs, None, &prior(), &ModelOptions::default()).unwrap();
    let opts = ModelOptions { pseudo: Some(PseudoSpec::interior(30, 0.05)), ..ModelOptions::default() };
    let constrained = build_model(Variant::Constrained { zero_region: RegionId(0) }, &mesh, &partition(), &obs, None, &prior(), &opts).unwrap();
    assert_eq!(constrained.num_observations(), plain.num_observations() + 30);
    let theta = |m: &HierModel| -> Vec<f64> { m.layout.names.iter().map(|n| if n.starts_with("log_sigma") { 0.0 } else { 0.5f64.ln() }).collect() };
    let (_, var_plain) = node_moments(&plain, &theta(&plain), &vertex_rows(&plain)).unwrap();
    let (_, var_con) = node_moments(&constrained, &theta(&constrained), &vertex_rows(&constrained)).unwrap();
    let inside: Vec<usize> = (0..mesh.num_vertices()).filter(|&j| partition().region_of(DomainKind::Sphere, &mesh.vertices[j]) == RegionId(0)).collect();
    let mean = |v: &[f64]| inside.iter().map(|&j| v[j]).sum::<f64>() / inside.len() as f64;
    assert!(mean(&var_con) < 0.5 * mean(&var_plain), "{} vs {}", mean(&var_con), mean(&var_plain));
    let _ = condition_params(&constrained, &params).unwrap();
}

#[test]
fn planar_domain_pipeline() {
    let boundary = [[0.0, 0.0], [10.0, 0.0], [10.0, 6.0], [0.0, 6.0]];
    let mesh = triangulate_plane(&boundary, &[], &PlanarMeshOptions::with_max_edge(0.6)).unwrap();
    assert!((mesh.total_area() - 60.0).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let locs: Vec<Point3> = (0..50).map(|_| Point3::new(rng.random_range(0.5..9.5), rng.random_range(0.5..5.5), 0.0)).collect();
    let values = locs.iter().map(|p| (p.x / 3.0).sin()).collect();
    let obs = ObservationSet::new(locs, values, vec![0.1; 50]).unwrap();
    let part = RegionPartition::single(mesh.triangle_region[0]);
    let prior = PriorSpec::new(RegionPrior::new(1.0, 3.0, 1.0));
    let model = build_model(Variant::Stationary, &mesh, &part, &obs, None, &prior, &ModelOptions { zero_rho: 10.0, ..ModelOptions::default() }).unwrap();
    let hyper = integrate_hyperparameters(&model, &GridSpec::default()).unwrap();
    let rows: Vec<_> = obs.locations.iter().map(|p| model.point_row(p)).collect();
    let field = summarize(&model, &hyper, &rows, false).unwrap();
    let rmse = (field.mean.iter().zip(&obs.values).map(|(m, y)| (m - y).powi(2)).sum::<f64>() / 50.0).sqrt();
    assert!(rmse < 0.2, "fit rmse {rmse}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn conditioning_never_increases_variance(seed in 0u64..1000, sigma in 0.3f64..3.0, rho in 0.1f64..1.5) {
        let mesh = sphere_mesh(150);
        let obs = observations(30, seed);
        let model = build_model(Variant::Stationary, &mesh, &partition(), &obs, None, &prior(), &ModelOptions::default()).unwrap();
        let theta = vec![sigma.ln(), rho.ln()];
        let rows = vertex_rows(&model);
        let (_, post) = node_moments(&model, &theta, &rows).unwrap();
        let empty = ObservationSet::new(vec![obs.locations[0]], vec![0.0], vec![1e12]).unwrap();
        let prior_model = build_model(Variant::Stationary, &mesh, &partition(), &empty, None, &prior(), &ModelOptions::default()).unwrap();
        let (_, pri) = node_moments(&prior_model, &theta, &rows).unwrap();
        for (p, q) in post.iter().zip(&pri) {
            prop_assert!(*p <= q * (1.0 + 1e-9));
        }
    }
}
