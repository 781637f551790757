use unbiased_surface::envelope::{check_closed, extract_envelope, zero_iso_baseline, ExtractionConfig};
use unbiased_surface::field::{ComposedScene, Primitive, SceneComponent};
use unbiased_surface::projection::{extract_unbiased_surface, ExecutionMode, ProjectionConfig};
use unbiased_surface::{Aabb, Vec3};

fn opaque_sphere() -> ComposedScene {
    ComposedScene::new(
        vec![SceneComponent::opaque(Primitive::sphere(Vec3::zeros(), 0.25).unwrap())],
        Aabb::cube(0.3),
    )
    .unwrap()
}

fn short_run(mode: ExecutionMode) -> ProjectionConfig {
    ProjectionConfig {
        epochs1: 40,
        epochs2: 20,
        mode,
        ..Default::default()
    }
}

#[test]
fn opaque_sphere_collapses_onto_surface() {
    // cell 0.0054 resolves the 0.01 thick band around the surface
    let ecfg = ExtractionConfig::new(0.005, 112, Aabb::cube(0.3)).unwrap();
    let surface = extract_unbiased_surface(&opaque_sphere(), &ecfg, &ProjectionConfig::default()).unwrap();
    assert!(check_closed(&surface.envelope).closed);
    assert_eq!(surface.envelope.component_count(), 2);
    let worst = surface
        .mesh
        .vertices
        .iter()
        .map(|v| (v.norm() - 0.25).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1.5e-3, "worst radius deviation {worst}");
    assert!(surface.stage1.final_loss.total < surface.stage1.initial_loss().total);
    assert_eq!(surface.stage1.history.len(), 300);
    assert_eq!(surface.stage2.report.history.len(), 100);
}

#[test]
fn serial_and_parallel_runs_agree() {
    let ecfg = ExtractionConfig::new(0.005, 48, Aabb::cube(0.3)).unwrap();
    let a = extract_unbiased_surface(&opaque_sphere(), &ecfg, &short_run(ExecutionMode::Serial)).unwrap();
    let b = extract_unbiased_surface(&opaque_sphere(), &ecfg, &short_run(ExecutionMode::Parallel)).unwrap();
    assert_eq!(a.envelope, b.envelope);
    assert_eq!(a.mesh, b.mesh);
    let rel = (a.stage1.final_loss.total - b.stage1.final_loss.total).abs() / a.stage1.final_loss.total;
    assert!(rel < 1e-12);
}

#[test]
fn envelope_is_deterministic() {
    let ecfg = ExtractionConfig::new(0.005, 40, Aabb::cube(0.3)).unwrap();
    let a = extract_envelope(&opaque_sphere(), &ecfg).unwrap();
    let b = extract_envelope(&opaque_sphere(), &ecfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_iso_misses_transparent_components() {
    let scene = ComposedScene::new(
        vec![SceneComponent::transparent(Primitive::sphere(Vec3::zeros(), 0.5).unwrap(), 0.01).unwrap()],
        Aabb::cube(1.0),
    )
    .unwrap();
    let ecfg = ExtractionConfig::new(0.005, 64, Aabb::cube(1.0)).unwrap();
    assert!(zero_iso_baseline(&scene, &ecfg).unwrap().is_empty());
    // m above the iso-value: no envelope either
    let surface = extract_unbiased_surface(&scene, &ecfg, &ProjectionConfig::default()).unwrap();
    assert!(surface.mesh.is_empty());
}
