use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfrep_core::cnc::{cnc_defect, image_area};
use selfrep_core::mesh::{load_mesh, RegionKind};
use selfrep_core::optimizer::{gamma_sweep, minimize, Objective, Termination};
use selfrep_core::params::Verdict;
use selfrep_core::scenario::{self, pinch_box};
use selfrep_core::*;

/// Triangles of the structured square with a vertex on the boundary, found
/// from coordinates alone.
fn touching_boundary(m: &Mesh) -> Vec<usize> {
    let on = |p: Vec2| p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0;
    (0..m.num_triangles())
        .filter(|&t| m.triangles()[t].iter().any(|&v| on(m.vertices()[v])))
        .collect()
}

fn centroid_distance(m: &Mesh, t: usize) -> f64 {
    let [a, b, c] = m.triangles()[t].map(|i| m.vertices()[i]);
    let g = (a + b + c) / 3.0;
    g.x.min(1.0 - g.x).min(g.y).min(1.0 - g.y)
}

#[test]
fn thin_layer_is_exactly_the_boundary_ring() {
    let m = build_structured_square(8).unwrap();
    let layer = delta_layer(&m, 0.01);
    assert_eq!(layer.kind(), RegionKind::DeltaLayer);
    assert_eq!(layer.element_ids(), touching_boundary(&m).as_slice());
}

#[test]
fn thick_layer_matches_brute_force() {
    let m = build_structured_square(8).unwrap();
    let layer = delta_layer(&m, 0.2);
    let ring = touching_boundary(&m);
    let expected: Vec<usize> = (0..m.num_triangles())
        .filter(|&t| ring.contains(&t) || centroid_distance(&m, t) < 0.2)
        .collect();
    assert_eq!(layer.element_ids(), expected.as_slice());
    assert!(delta_layer(&m, 0.01).is_subset_of(&layer));
    assert_eq!(delta_layer(&m, 10.0).len(), m.num_triangles());
}

#[test]
fn thousand_random_points_locate_exactly() {
    let m = build_structured_square(9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p = Vec2::new(rng.gen(), rng.gen());
        let loc = point_locate(&m, p).unwrap();
        let [a, b, c] = m.triangles()[loc.triangle].map(|i| m.vertices()[i]);
        let back = a * loc.bary[0] + b * loc.bary[1] + c * loc.bary[2];
        assert!((back - p).norm() < 1e-12);
        assert!(loc.bary.iter().all(|&w| w >= -1e-12));
    }
    let err = point_locate(&m, Vec2::new(2.0, 2.0)).unwrap_err();
    match err {
        MeshError::OutsideDomain { distance, .. } => {
            assert!((distance - 2f64.sqrt()).abs() < 1e-12)
        }
        other => panic!("{other}"),
    }
}

#[test]
fn mesh_files_load_and_report_errors() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let ok = write(
        "square.json",
        r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "triangles": [[0,1,2],[0,2,3]]}"#,
    );
    let m = load_mesh(&ok).unwrap();
    assert_eq!(m.num_triangles(), 2);
    assert!((m.boundary_length() - 4.0).abs() < 1e-12);

    let cw = write(
        "cw.json",
        r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "triangles": [[0,1,2],[0,3,2]]}"#,
    );
    assert!(matches!(
        load_mesh(&cw),
        Err(MeshError::Orientation { triangle: 1, .. })
    ));

    let dangling = write(
        "dangling.json",
        r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "triangles": [[0,1,99],[0,2,3]]}"#,
    );
    assert!(matches!(
        load_mesh(&dangling),
        Err(MeshError::DanglingIndex {
            index: 99,
            vertex_count: 4,
            ..
        })
    ));

    let broken = write(
        "broken.json",
        "{\"vertices\": [[0,0],\n [1,0]],\n \"triangles\": [[0,1,]]}",
    );
    match load_mesh(&broken) {
        Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn derived_exponent_examples() {
    let d = derive_exponents(&ModelParams::new(4.0, 3.0, 2.0, 0.0, Variant::Bulk));
    assert!((d.sigma - 16.0 / 7.0).abs() < 1e-15);
    assert!((d.rho - 5.0 / 3.0).abs() < 1e-15);
    assert!((d.kappa - 6.0 / 5.0).abs() < 1e-15);
    let d = derive_exponents(&ModelParams::new(8.0, 20.0, 2.0, 0.0, Variant::Bulk));
    assert!((d.sigma - 6.0).abs() < 1e-15);
}

#[test]
fn validation_examples() {
    let bulk = validate(&ModelParams::new(4.0, 3.0, 2.0, 0.0, Variant::Bulk));
    assert!(bulk.core_ok && bulk.variant_ok && bulk.is_valid());

    let low_p = validate(&ModelParams::new(2.0, 5.0, 2.0, 0.0, Variant::Bulk));
    assert!(!low_p.core_ok);
    let v = low_p
        .violations
        .iter()
        .find(|v| v.name == "p>d(d−1)")
        .unwrap();
    assert_eq!((v.lhs, v.rhs), (2.0, 2.0));

    let surface = validate(&ModelParams::new(8.0, 20.0, 4.0, 0.5, Variant::Surface));
    assert!(surface.is_valid());
    let six = surface
        .checks
        .iter()
        .find(|c| c.name == "q((1−s)σ−d)>d²−σ")
        .unwrap();
    assert_eq!((six.lhs, six.rhs), (4.0, -2.0));
    let seven = surface
        .checks
        .iter()
        .find(|c| c.name == "sq≥(d−1)(p+d)/(p−d)")
        .unwrap();
    assert!((seven.lhs - 2.0).abs() < 1e-15 && (seven.rhs - 10.0 / 6.0).abs() < 1e-15);

    let edge = validate(&ModelParams::new(20.0, 100.0, 2.0, 1.0, Variant::Surface));
    assert_eq!(edge.verdict(), Verdict::Ambiguous);
}

#[test]
fn fold_has_two_sheets() {
    let s = scenario::builtin("fold", 16).unwrap();
    assert!((det_integral(&s.mesh, &s.field) - 2.0).abs() < 1e-12);
    let rep = cnc_defect(&s.mesh, &s.field, 512).unwrap();
    assert!((rep.image_area - 1.0).abs() <= 0.02);
    assert_eq!(rep.max_multiplicity, 2);
    assert!((rep.defect - 1.0).abs() <= 0.02);
    assert!(!rep.boundary_injective && rep.boundary_witness.is_some());
    assert!(!rep.overlap_pairs.is_empty());
}

#[test]
fn dilation_and_identity_meter() {
    let s = scenario::builtin("identity", 8).unwrap();
    let r = image_area(&s.mesh, &s.field, 512).unwrap();
    assert!((r.area() - 1.0).abs() <= 0.01);
    let m = build_structured_square(8).unwrap();
    assert!((det_integral(&m, &DeformationField::from_map(&m, |x| 2.0 * x)) - 4.0).abs() < 1e-12);
}

/// Cell-center raster of the exact annulus `1 < |z| < 2`.
fn annulus_raster_oracle(res: usize) -> f64 {
    let cell = 4.0 / res as f64;
    let mut covered = 0usize;
    for j in 0..res {
        for i in 0..res {
            let z = Vec2::new(
                -2.0 + (i as f64 + 0.5) * cell,
                -2.0 + (j as f64 + 0.5) * cell,
            );
            let r = z.norm();
            if r > 1.0 && r < 2.0 {
                covered += 1;
            }
        }
    }
    covered as f64 * cell * cell
}

#[test]
fn angle_doubling_is_a_self_contact_not_an_overlap() {
    // The map wraps the half annulus once around the full annulus: the two
    // straight boundary pieces land on the same ray and nothing else meets.
    let s = scenario::builtin("angle-doubling", 32).unwrap();
    assert!(s.field.is_admissible());
    let rep = cnc_defect(&s.mesh, &s.field, 1024).unwrap();
    // Polygonal images of the circles lose O(h²) area.
    assert!(
        (rep.det_integral - 3.0 * PI).abs() / (3.0 * PI) < 5e-3,
        "{}",
        rep.det_integral
    );
    let oracle = annulus_raster_oracle(2048);
    assert!((oracle - 3.0 * PI).abs() < 5e-3);
    assert!(
        (rep.image_area - oracle).abs() / oracle < 5e-3,
        "{} vs {oracle}",
        rep.image_area
    );
    assert!(rep.defect.abs() <= rep.raster_tolerance, "{rep:?}");
    assert_eq!(rep.max_multiplicity, 1);
    // Both ends of the half annulus land on the positive axis, up to rounding.
    for (x, y) in s.mesh.vertices().iter().zip(s.field.positions()) {
        if x.y == 0.0 && x.x < 0.0 {
            assert!((y - Vec2::new(-x.x, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn pinched_square_repels_without_overlap() {
    let s = scenario::builtin("pinched-square", 16).unwrap();
    let rep = cnc_defect(&s.mesh, &s.field, 512).unwrap();
    assert!(rep.defect_negligible());
    assert!(rep.boundary_injective && rep.overlap_pairs.is_empty());
    let quad = QuadratureSpec::default();
    let pinched = surface_repulsion(&s.mesh, &s.field, 4.0, 0.5, &quad)
        .unwrap()
        .value;
    let id = surface_repulsion(
        &s.mesh,
        &DeformationField::identity(&s.mesh),
        4.0,
        0.5,
        &quad,
    )
    .unwrap()
    .value;
    assert!(pinched > 10.0 * id, "{pinched} vs {id}");
}

#[test]
fn stress_free_identity_stops_immediately() {
    // |F|^p + det^{-r} is stationary at F = I iff r = p·2^{p/2-1}.
    let m = build_structured_square(8).unwrap();
    let params = ModelParams::new(4.0, 8.0, 2.0, 0.0, Variant::Bulk).with_epsilon(0.0);
    let obj = Objective::new(&m, params, QuadratureSpec::default()).unwrap();
    let (_, trace) = minimize(
        &obj,
        DeformationField::identity(&m),
        &OptimizerSettings::default(),
    )
    .unwrap();
    assert!(trace.iterations() <= 1);
    assert_eq!(trace.termination, Termination::Converged);
}

#[test]
fn smooth_perturbation_relaxes_to_identity_energy() {
    let m = build_structured_square(6).unwrap();
    let params = ModelParams::new(4.0, 8.0, 2.0, 0.0, Variant::Bulk).with_epsilon(0.0);
    let obj = Objective::new(&m, params, QuadratureSpec::default()).unwrap();
    let y0 = DeformationField::from_map(&m, |x| {
        x + Vec2::new((PI * x.y).sin(), (2.0 * PI * x.x).cos()) * 0.01
    });
    let start = obj.evaluate(&y0, false).unwrap().total;
    let settings = OptimizerSettings {
        max_iters: 2000,
        ..Default::default()
    };
    let (_, trace) = minimize(&obj, y0, &settings).unwrap();
    assert!(trace.last().total <= start);
    assert!(trace.last().total <= 5.0 + 1e-6, "{}", trace.last().total);
}

#[test]
fn pinch_trace_is_monotone_and_feasible() {
    let s = scenario::builtin("pinch", 8).unwrap();
    let params = ModelParams::new(8.0, 20.0, 4.0, 0.5, Variant::Surface)
        .with_box(pinch_box())
        .with_epsilon(1e-2);
    let obj = Objective::new(&s.mesh, params, QuadratureSpec::default()).unwrap();
    let settings = OptimizerSettings {
        max_iters: 300,
        ..Default::default()
    };
    let (field, trace) = minimize(&obj, s.field.clone(), &settings).unwrap();
    assert!(field.is_admissible());
    assert!(trace.records.iter().all(|r| r.min_det > 0.0));
    for w in trace.records.windows(2) {
        assert!(w[1].total <= w[0].total);
    }
    // The box squeezes the arms: the box term drops from its initial value.
    assert!(trace.last().total < trace.records[0].total);
}

#[test]
fn unloaded_identity_sweep_is_trivial() {
    let s = scenario::builtin("identity", 6).unwrap();
    let params = ModelParams::new(4.0, 8.0, 4.0, 0.5, Variant::Surface);
    let obj = Objective::new(&s.mesh, params, QuadratureSpec::default()).unwrap();
    let sweep = gamma_sweep(
        &obj,
        s.field.clone(),
        &[0.0, 0.0, 0.0],
        &OptimizerSettings::default(),
        256,
    )
    .unwrap();
    let reference = cnc_defect(&s.mesh, &s.field, 256).unwrap();
    for r in &sweep.records {
        assert_eq!(r.field, s.field);
        assert_eq!(r.energy.total, 5.0);
        assert_eq!(r.cnc, reference);
    }
}
