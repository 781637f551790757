use proptest::prelude::*;

use unbiased_surface::field::{bake_grid, m_from_alpha, Primitive, ScalarField};
use unbiased_surface::io::{parse_obj, obj_string};
use unbiased_surface::metrics::{chamfer, chamfer_with, nearest_distances, NearestMethod};
use unbiased_surface::render::{closed_form_opacity, watershed_alpha};
use unbiased_surface::{Aabb, TriangleMesh, Vec3};

fn point() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(point(), 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn opacity_decreases_in_m(s in 20.0..200.0f64, d0 in 0.5..2.0f64, a in -0.2..0.2f64, b in -0.2..0.2f64) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (alo, ahi) = (closed_form_opacity(s, d0, lo), closed_form_opacity(s, d0, hi));
        // on the negative branch alpha can round to exactly 1.0
        if alo < 1.0 {
            prop_assert!(alo > ahi, "alpha({lo}) = {alo} <= alpha({hi}) = {ahi}");
        } else {
            prop_assert!(alo >= ahi);
        }
    }

    #[test]
    fn m_from_alpha_inverts_closed_form(s in 1.0..200.0f64, d0 in 0.1..3.0f64, m in 0.0..0.5f64) {
        prop_assume!(s * m <= 30.0);
        let alpha = closed_form_opacity(s, d0, m);
        prop_assert!(alpha > 0.0 && alpha <= watershed_alpha(s, d0));
        let back = m_from_alpha(alpha, s, d0).unwrap();
        prop_assert!((back - m).abs() <= 1e-9, "m {m} -> alpha {alpha} -> {back}");
    }

    #[test]
    fn alpha_outside_interval_is_rejected(s in 1.0..200.0f64, d0 in 0.1..3.0f64, over in 1e-9..1.0f64) {
        let ws = watershed_alpha(s, d0);
        prop_assert!(m_from_alpha(ws + over, s, d0).is_err());
        prop_assert!(m_from_alpha(0.0, s, d0).is_err());
        prop_assert!(m_from_alpha(-over, s, d0).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_matches_samples_at_vertices(nx in 2usize..9, ny in 2usize..9, nz in 2usize..9, r in 0.1..0.9f64) {
        let field = Primitive::sphere(Vec3::new(0.1, -0.2, 0.05), r).unwrap();
        let grid = bake_grid(&field, Aabb::cube(1.0), [nx, ny, nz]).unwrap();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = grid.vertex_position(i, j, k);
                    prop_assert_eq!(grid.eval(&p), grid.value_at(i, j, k));
                    prop_assert_eq!(grid.value_at(i, j, k), field.eval(&p));
                }
            }
        }
    }

    #[test]
    fn chamfer_is_symmetric(a in cloud(200), b in cloud(200)) {
        let ab = chamfer(&a, &b).unwrap();
        let ba = chamfer(&b, &a).unwrap();
        prop_assert_eq!(ab.g2d, ba.d2g);
        prop_assert_eq!(ab.d2g, ba.g2d);
        prop_assert_eq!(ab.cd, ba.cd);
        prop_assert!(ab.g2d >= 0.0 && ab.d2g >= 0.0);
    }

    #[test]
    fn index_matches_brute_force(a in cloud(400), b in cloud(400)) {
        let fast = nearest_distances(&a, &b, NearestMethod::KdTree).unwrap();
        let slow = nearest_distances(&a, &b, NearestMethod::BruteForce).unwrap();
        prop_assert_eq!(fast, slow);
        prop_assert_eq!(
            chamfer_with(&a, &b, NearestMethod::KdTree).unwrap(),
            chamfer_with(&a, &b, NearestMethod::BruteForce).unwrap()
        );
    }

    #[test]
    fn obj_round_trip(pts in prop::collection::vec(point(), 3..50)) {
        let faces: Vec<[usize; 3]> = (0..pts.len() - 2).map(|i| [i, i + 1, i + 2]).collect();
        let mesh = TriangleMesh::new(pts, faces).unwrap();
        let back = parse_obj(obj_string(&mesh).as_bytes()).unwrap();
        prop_assert_eq!(&back.faces, &mesh.faces);
        for (p, q) in mesh.vertices.iter().zip(&back.vertices) {
            prop_assert!((p - q).amax() <= 1e-8);
        }
    }
}

#[test]
fn duplicate_points_have_zero_distance() {
    let a = vec![Vec3::new(0.3, 0.3, 0.3); 10];
    let d = nearest_distances(&a, &a, NearestMethod::KdTree).unwrap();
    assert!(d.iter().all(|&x| x == 0.0));
}
