//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 1 2 10`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unbiased_surface::envelope::{check_closed, zero_iso_baseline, ExtractionConfig};
use unbiased_surface::field::{
    absolute_field, bake_grid, ComposedScene, Primitive, SceneComponent, ScalarField,
};
use unbiased_surface::io::{self, ValueType};
use unbiased_surface::metrics::{
    chamfer, completeness_curve, distances_to_mesh, nearest_distances, sample_scene_surface, sample_surface,
    NearestMethod,
};
use unbiased_surface::projection::{
    extract_unbiased_surface, ExecutionMode, ProjectionConfig, ProjectionTarget, Stage1Objective, UnbiasedSurface,
};
use unbiased_surface::render::{
    closed_form_branches, closed_form_opacity, run_sweep, watershed_alpha, SweepSpec, TheoremReport,
};
use unbiased_surface::{Aabb, Error, TriangleMesh, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sweep() -> Vec<TheoremReport> {
    let spec = SweepSpec::default();
    run_sweep(&spec)
        .expect("sweep grid is valid")
        .into_iter()
        .map(|r| r.expect("every sweep case renders"))
        .collect()
}

fn opacity_agreement() -> Outcome {
    let reports = sweep();
    let worst = max(reports.iter().map(TheoremReport::alpha_error));
    let ok = reports.len() == 84 && reports.iter().all(|r| r.alpha_error() <= 1e-3);
    outcome(ok, format!("{} cases, max |alpha_quad - alpha_closed| = {worst:.3e} (tol 1e-3)", reports.len()))
}

fn argmax_alignment() -> Outcome {
    let reports = sweep();
    let worst = max(reports.iter().map(|r| r.t_error() / r.step));
    let ok = reports.len() == 84 && reports.iter().all(|r| r.t_error() <= 2.0 * r.step);
    outcome(ok, format!("{} cases, max |t* - t0| = {worst:.2} steps (tol 2)", reports.len()))
}

fn watershed() -> Outcome {
    let spec = SweepSpec::default();
    let mut exact = true;
    let mut jump: f64 = 0.0;
    for &s in &spec.sharpness {
        for &d0 in &spec.d0 {
            let expected = (1.0 - (-s * d0).exp()) / 2.0;
            let [pos, neg] = closed_form_branches(s, d0, 0.0);
            exact &= pos == expected && neg == expected;
            exact &= closed_form_opacity(s, d0, 0.0) == expected && watershed_alpha(s, d0) == expected;
            let eps = 1e-12;
            jump = jump
                .max((pos - neg).abs())
                .max((closed_form_opacity(s, d0, eps) - closed_form_opacity(s, d0, -eps)).abs());
        }
    }
    let half = (closed_form_opacity(100.0, 1.0, 0.0) - 0.5).abs();
    outcome(
        exact && half <= 1e-10 && jump <= 1e-7,
        format!(
            "both branches equal (1 - e^(-s d0)) / 2 at m = 0 exactly: {exact}; |alpha(100, 1, 0) - 0.5| = {half:.2e}; \
             max branch gap at m = 0 (and at m = +-1e-12): {jump:.2e}"
        ),
    )
}

fn monotonicity() -> Outcome {
    let spec = SweepSpec::default();
    let mut grid_ok = true;
    for &s in &spec.sharpness {
        for &d0 in &spec.d0 {
            let alphas: Vec<f64> = spec.local_min.iter().map(|&m| closed_form_opacity(s, d0, m)).collect();
            grid_ok &= alphas.windows(2).all(|w| w[0] > w[1]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut strict, mut saturated, mut violations) = (0, 0, 0);
    for _ in 0..1000 {
        let s = rng.random_range(20.0..=200.0);
        let d0 = rng.random_range(0.5..=2.0);
        let (a, b): (f64, f64) = (rng.random_range(-0.2..=0.2), rng.random_range(-0.2..=0.2));
        let (lo, hi) = (a.min(b), a.max(b));
        if lo == hi {
            continue;
        }
        let (alo, ahi) = (closed_form_opacity(s, d0, lo), closed_form_opacity(s, d0, hi));
        if alo > ahi {
            strict += 1;
        } else if alo == 1.0 && ahi == 1.0 {
            // 1 - alpha below half an ulp of 1.0; not a violation of the math
            saturated += 1;
        } else {
            violations += 1;
        }
    }
    outcome(
        grid_ok && violations == 0,
        format!(
            "sweep grid strictly decreasing: {grid_ok}; random triples: {strict} strict, {saturated} rounded to alpha = 1.0, {violations} violations"
        ),
    )
}

fn transparent_sphere(half: f64) -> ComposedScene {
    ComposedScene::new(
        vec![SceneComponent::transparent(Primitive::sphere(Vec3::zeros(), 0.5).unwrap(), 0.003).unwrap()],
        Aabb::cube(half),
    )
    .unwrap()
}

/// Faces of the final mesh split by the side of the sphere their envelope
/// face started on.
fn sphere_layers(s: &UnbiasedSurface, radius: f64) -> (TriangleMesh, TriangleMesh) {
    let split = |outer: bool| {
        let faces = s
            .envelope
            .faces
            .iter()
            .copied()
            .filter(|f| {
                let c = f.iter().map(|&i| s.envelope.vertices[i]).sum::<Vec3>() / 3.0;
                (c.norm() >= radius) == outer
            })
            .collect();
        TriangleMesh {
            vertices: s.mesh.vertices.clone(),
            faces,
        }
    };
    (split(true), split(false))
}

fn layer_vertices(layer: &TriangleMesh) -> Vec<Vec3> {
    let mut used = vec![false; layer.vertices.len()];
    for f in &layer.faces {
        for &i in f {
            used[i] = true;
        }
    }
    layer
        .vertices
        .iter()
        .zip(used)
        .filter_map(|(v, u)| u.then_some(*v))
        .collect()
}

fn sphere_pipeline(half: f64, res: usize) -> Outcome {
    let scene = transparent_sphere(half);
    let ecfg = ExtractionConfig::new(0.005, res, Aabb::cube(half)).unwrap();
    let s = match extract_unbiased_surface(&scene, &ecfg, &ProjectionConfig::default()) {
        Ok(s) if !s.mesh.is_empty() => s,
        Ok(_) => return outcome(false, "empty envelope".into()),
        Err(e) => return outcome(false, format!("pipeline error: {e}")),
    };
    let radius_dev = max(s.mesh.vertices.iter().map(|v| (v.norm() - 0.5).abs()));
    let closed = check_closed(&s.envelope).closed;
    let (outer, inner) = sphere_layers(&s, 0.5);
    let gt = sample_scene_surface(&scene, 20_000, 1).unwrap();
    let cover = |layer: &TriangleMesh| {
        if layer.is_empty() {
            return f64::INFINITY;
        }
        max(distances_to_mesh(&gt, layer).unwrap())
    };
    let (gap_outer, gap_inner) = (cover(&outer), cover(&inner));
    let inter = if outer.is_empty() || inner.is_empty() {
        f64::INFINITY
    } else {
        max(distances_to_mesh(&layer_vertices(&outer), &inner)
            .unwrap()
            .into_iter()
            .chain(distances_to_mesh(&layer_vertices(&inner), &outer).unwrap()))
    };
    let (l0, l1) = (s.stage1.initial_loss().total, s.stage1.final_loss.total);
    let two_layer = closed && gap_outer <= 0.01 && gap_inner <= 0.01;
    let pass = two_layer && radius_dev <= 5e-3 && inter <= 2e-3 && l1 < l0;
    outcome(
        pass,
        format!(
            "box [-{half},{half}]^3 res {res}: {} faces, {} components, closed {closed}; \
             sphere-to-layer max distance outer {gap_outer:.2e} inner {gap_inner:.2e} (two-layer cover needs <= 1e-2); \
             max radius error {radius_dev:.2e} (<= 5e-3); inter-layer max {inter:.2e} (<= 2e-3); stage-1 loss {l0:.4e} -> {l1:.4e}",
            s.mesh.faces.len(),
            s.envelope.component_count(),
        ),
    )
}

fn criterion5() -> Outcome {
    sphere_pipeline(1.0, 128)
}

fn criterion5_resolved() -> Outcome {
    // cell 0.00217 is below the 0.004 band thickness over sqrt(3)
    sphere_pipeline(0.52, 480)
}

const MIXED_HALF: f64 = 0.3;
const MIXED_RES: usize = 288;

fn mixed_box() -> Primitive {
    Primitive::cuboid(Vec3::new(0.0, -0.1, 0.0), Vec3::new(0.25, 0.1, 0.25)).unwrap()
}

/// Opaque slab with a transparent sphere centred on its top face, so only
/// the upper hemisphere is visible.
fn mixed_scene() -> ComposedScene {
    ComposedScene::new(
        vec![
            SceneComponent::opaque(mixed_box()),
            SceneComponent::transparent(Primitive::sphere(Vec3::zeros(), 0.15).unwrap(), 0.003).unwrap(),
        ],
        Aabb::cube(MIXED_HALF),
    )
    .unwrap()
}

fn mixed_config() -> ExtractionConfig {
    ExtractionConfig::new(0.005, MIXED_RES, Aabb::cube(MIXED_HALF)).unwrap()
}

fn mixed_run(target: ProjectionTarget) -> UnbiasedSurface {
    let cfg = ProjectionConfig {
        target,
        ..Default::default()
    };
    extract_unbiased_surface(&mixed_scene(), &mixed_config(), &cfg).expect("mixed scene extracts")
}

const GT_SAMPLES: usize = 100_000;
const REC_SAMPLES: usize = 1_000_000;

fn mixed_completeness() -> Outcome {
    let scene = mixed_scene();
    let gt = sample_scene_surface(&scene, GT_SAMPLES, 11).unwrap();
    let baseline = zero_iso_baseline(&scene, &mixed_config()).unwrap();
    let base_pts = sample_surface(&baseline, REC_SAMPLES, 12).unwrap();
    let base_cd = chamfer(&gt, &base_pts).unwrap();
    let base_c = completeness_curve(&gt, &base_pts, &[0.01]).unwrap()[0].1;

    let full = mixed_run(ProjectionTarget::Absolute);
    let full_pts = sample_surface(&full.mesh, REC_SAMPLES, 13).unwrap();
    let full_cd = chamfer(&gt, &full_pts).unwrap();
    let full_c = completeness_curve(&gt, &full_pts, &[0.01]).unwrap()[0].1;
    outcome(
        base_c < 1.0 && full_c == 1.0 && full_cd.g2d < base_cd.g2d,
        format!(
            "completeness @ 0.01: zero-iso {base_c:.4}, full pipeline {full_c:.4}; g2d x1e-3: zero-iso {:.3}, full {:.3}",
            base_cd.milli().0,
            full_cd.milli().0
        ),
    )
}

/// Signed distance to the slab of every final vertex whose envelope vertex
/// belonged to the slab.
fn wall_drift(s: &UnbiasedSurface) -> Vec<f64> {
    let scene = mixed_scene();
    let slab = mixed_box();
    s.envelope
        .vertices
        .iter()
        .zip(&s.mesh.vertices)
        .filter(|(e, _)| scene.active_component(e) == 0)
        .map(|(_, p)| slab.signed_distance(p))
        .collect()
}

fn shrink() -> Outcome {
    let raw = wall_drift(&mixed_run(ProjectionTarget::Raw));
    let abs = wall_drift(&mixed_run(ProjectionTarget::Absolute));
    let inward = -mean(&raw);
    let drift = mean(&abs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    outcome(
        inward > 0.01 && drift <= 2e-3,
        format!(
            "raw f: mean inward move {inward:.3e} over {} wall vertices (> 1e-2); |f|: mean |drift| {drift:.3e} over {} (<= 2e-3)",
            raw.len(),
            abs.len()
        ),
    )
}

fn gradient_case<F: ScalarField>(field: F, envelope: &TriangleMesh, rng: &mut ChaCha8Rng) -> f64 {
    let cfg = ProjectionConfig {
        mode: ExecutionMode::Serial,
        ..Default::default()
    };
    let obj = Stage1Objective::new(envelope, &cfg).unwrap();
    let x = envelope.vertices.clone();
    let grad = obj.gradient(&field, &x);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = rng.random_range(0..x.len());
        let mut fd = Vec3::zeros();
        for axis in 0..3 {
            let mut plus = x.clone();
            plus[v][axis] += h;
            let mut minus = x.clone();
            minus[v][axis] -= h;
            fd[axis] = (obj.loss(&field, &plus).total - obj.loss(&field, &minus).total) / (2.0 * h);
        }
        worst = worst.max((grad[v] - fd).norm() / fd.norm().max(1e-12));
    }
    worst
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let transparent = transparent_sphere(1.0);
    let env_t = unbiased_surface::envelope::extract_envelope(&transparent, &ExtractionConfig::default()).unwrap();
    let opaque = Primitive::sphere(Vec3::new(0.01, -0.02, 0.0), 0.5).unwrap();
    let env_o = unbiased_surface::envelope::extract_envelope(
        &opaque,
        &ExtractionConfig::new(0.005, 96, Aabb::cube(0.6)).unwrap(),
    )
    .unwrap();
    let t = gradient_case(absolute_field(&transparent), &env_t, &mut rng);
    let o = gradient_case(absolute_field(&opaque), &env_o, &mut rng);
    outcome(
        t <= 1e-4 && o <= 1e-4,
        format!("max relative error over 100 vertices: transparent sphere {t:.2e}, opaque sphere {o:.2e} (tol 1e-4)"),
    )
}

fn metrics_sanity() -> Outcome {
    let sphere = |r: f64| {
        ComposedScene::new(
            vec![SceneComponent::opaque(Primitive::sphere(Vec3::zeros(), r).unwrap())],
            Aabb::cube(1.1),
        )
        .unwrap()
    };
    let a = sample_scene_surface(&sphere(1.0), 1_000_000, 21).unwrap();
    let b = sample_scene_surface(&sphere(1.01), 1_000_000, 22).unwrap();
    let cd = chamfer(&a, &b).unwrap().cd;

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut cloud = |n: usize| -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    };
    let mut exact = true;
    for _ in 0..5 {
        let (p, q) = (cloud(1000), cloud(1000));
        exact &= nearest_distances(&p, &q, NearestMethod::KdTree).unwrap()
            == nearest_distances(&p, &q, NearestMethod::BruteForce).unwrap();
    }
    outcome(
        (cd - 0.01).abs() <= 0.002 && exact,
        format!(
            "unit vs 1.01 sphere cd = {cd:.5} (0.01 +- 0.002); index == brute force on 10^3-point sets: {exact}; \
             absolute Chamfer values of trained-field reconstructions are out of scope"
        ),
    )
}

fn icosphere(levels: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a] + v[b]) / 2.0).normalize());
                v.len() - 1
            })
        };
        f = f
            .iter()
            .flat_map(|&[a, b, c]| {
                let (ab, bc, ca) = (midpoint(a, b, &mut v), midpoint(b, c, &mut v), midpoint(c, a, &mut v));
                [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
            })
            .collect();
    }
    TriangleMesh::new(v, f).unwrap()
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let grid = bake_grid(
        &transparent_sphere(1.0),
        Aabb::new(Vec3::new(-1.0, -0.9, -0.8), Vec3::new(1.0, 0.7, 0.9)).unwrap(),
        [17, 13, 11],
    )
    .unwrap();
    let path = dir.path().join("g.anfd");
    io::write_grid(&path, &grid, ValueType::F64).unwrap();
    let (back, vt) = io::read_grid(&path).unwrap();
    let bit_exact = vt == ValueType::F64
        && back.dims() == grid.dims()
        && back.bbox() == grid.bbox()
        && back
            .values()
            .iter()
            .zip(grid.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let bytes = std::fs::read(&path).unwrap();
    let truncated = matches!(io::parse_grid(&bytes[..bytes.len() - 5]), Err(Error::Format { offset, .. }) if offset == bytes.len() as u64 - 5);
    let mut bad = bytes.clone();
    bad[1] = b'?';
    let magic = matches!(io::parse_grid(&bad), Err(Error::Format { offset: 0, .. }));

    let ico = icosphere(3);
    let obj = dir.path().join("ico.obj");
    io::write_obj(&obj, &ico).unwrap();
    let ico_back = io::read_obj(&obj).unwrap();
    let dev = max(ico.vertices.iter().zip(&ico_back.vertices).map(|(a, b)| (a - b).amax()));
    let faces_same = ico.faces == ico_back.faces;
    let zero_index = matches!(
        io::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 0\n".as_bytes()),
        Err(Error::Parse { line: 4, .. })
    );
    outcome(
        bit_exact && truncated && magic && dev <= 1e-8 && faces_same && zero_index,
        format!(
            "grid bit-exact {bit_exact}; truncation and bad magic rejected at offsets {}; \
             icosphere ({} vertices) OBJ max deviation {dev:.1e}, faces identical {faces_same}; index 0 rejected at line 4 {zero_index}",
            truncated && magic,
            ico.vertices.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 11] = [
        ("1", "closed-form opacity agreement", opacity_agreement),
        ("2", "weight-argmax alignment", argmax_alignment),
        ("3", "watershed opacity", watershed),
        ("4", "opacity monotone in m", monotonicity),
        ("5", "transparent sphere pipeline (res 128)", criterion5),
        ("5+", "transparent sphere, band-resolving grid (supplementary)", criterion5_resolved),
        ("6", "mixed-scene completeness", mixed_completeness),
        ("7", "raw-field shrink reproduction", shrink),
        ("8", "stage-1 gradient check", gradient_check),
        ("9", "metrics sanity", metrics_sanity),
        ("10", "format round trips", format_round_trips),
    ];
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let start = Instant::now();
        let Outcome { pass, detail } = run();
        println!(
            "criterion {id:<2} {}  {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
