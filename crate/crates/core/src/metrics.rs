//! Point-to-point Chamfer distances and completeness curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ComposedScene, Primitive, ScalarField};
use crate::geom::Vec3;
use crate::kdtree::KdTree;
use crate::mesh::TriangleMesh;

pub const DEFAULT_SAMPLES: usize = 100_000;

/// Area-weighted uniform samples on the surface of `mesh`.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if mesh.is_empty() {
        return Err(Error::EmptyInput("cannot sample an empty mesh"));
    }
    if n == 0 {
        return Err(Error::EmptyInput("sample count must be >= 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::EmptyInput("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let [a, b, c] = mesh.face_points(f);
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect();
    Ok(points)
}

/// Uniform samples on the part of each primitive's surface where that
/// component attains the scene minimum, inside the scene box. This is the
/// analytic ground truth of the unbiased surface.
pub fn sample_scene_surface(scene: &ComposedScene, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::EmptyInput("sample count must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bbox = scene.bbox();
    let areas: Vec<f64> = scene
        .components()
        .iter()
        .map(|c| primitive_area(&c.primitive, &bbox, &mut rng))
        .collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyInput("scene has no surface inside its box"));
    }
    let mut out = Vec::with_capacity(n);
    // visibility rejection can discard most samples in heavily overlapping
    // scenes; give up after a generous number of rounds
    for _round in 0..64 {
        for (k, comp) in scene.components().iter().enumerate() {
            let quota = ((n as f64) * areas[k] / total).ceil() as usize;
            for _ in 0..quota {
                let Some(p) = sample_primitive(&comp.primitive, &bbox, &mut rng) else {
                    continue;
                };
                if bbox.contains(&p) && comp.eval(&p) <= scene.eval(&p) + 1e-12 {
                    out.push(p);
                }
            }
        }
        if out.len() >= n {
            out.truncate(n);
            return Ok(out);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no visible surface samples"));
    }
    Ok(out)
}

fn primitive_area(p: &Primitive, bbox: &crate::geom::Aabb, rng: &mut ChaCha8Rng) -> f64 {
    use std::f64::consts::PI;
    match p {
        Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        Primitive::Box { half_extents: h, .. } => 8.0 * (h.x * h.y + h.y * h.z + h.z * h.x),
        Primitive::Cylinder {
            radius, half_height, ..
        } => 2.0 * PI * radius * (2.0 * half_height) + 2.0 * PI * radius * radius,
        Primitive::Plane { .. } => {
            let (half, _, _) = plane_frame(p, bbox);
            let trials = 4096;
            let hits = (0..trials)
                .filter(|_| sample_primitive(p, bbox, rng).is_some_and(|q| bbox.contains(&q)))
                .count();
            (2.0 * half).powi(2) * hits as f64 / trials as f64
        }
    }
}

fn orthonormal_pair(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

fn plane_frame(p: &Primitive, bbox: &crate::geom::Aabb) -> (f64, Vec3, (Vec3, Vec3)) {
    let Primitive::Plane { point, normal } = p else {
        unreachable!("plane_frame on a non-plane");
    };
    let c = bbox.center();
    let origin = c - normal * (c - point).dot(normal);
    (0.5 * bbox.extent().norm(), origin, orthonormal_pair(normal))
}

fn sample_primitive(p: &Primitive, bbox: &crate::geom::Aabb, rng: &mut ChaCha8Rng) -> Option<Vec3> {
    use std::f64::consts::PI;
    let unit_dir = |rng: &mut ChaCha8Rng| {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    };
    match p {
        Primitive::Sphere { center, radius } => Some(center + unit_dir(rng) * *radius),
        Primitive::Box { center, half_extents: h } => {
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total: f64 = areas.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut axis = 2;
            for (a, area) in areas.iter().enumerate() {
                if u < *area {
                    axis = a;
                    break;
                }
                u -= area;
            }
            let mut q = Vec3::zeros();
            for a in 0..3 {
                q[a] = if a == axis {
                    if rng.random::<bool>() {
                        h[a]
                    } else {
                        -h[a]
                    }
                } else {
                    rng.random_range(-h[a]..=h[a])
                };
            }
            Some(center + q)
        }
        Primitive::Cylinder {
            point,
            axis,
            radius,
            half_height,
        } => {
            let (u, v) = orthonormal_pair(axis);
            let side = 2.0 * radius * half_height;
            let cap = radius * radius / 2.0;
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let pick = rng.random::<f64>() * (side + 2.0 * cap);
            if pick < side {
                let h: f64 = rng.random_range(-half_height..=*half_height);
                Some(point + (u * phi.cos() + v * phi.sin()) * *radius + axis * h)
            } else {
                let r = radius * rng.random::<f64>().sqrt();
                let sign = if pick < side + cap { 1.0 } else { -1.0 };
                Some(point + (u * phi.cos() + v * phi.sin()) * r + axis * (sign * half_height))
            }
        }
        Primitive::Plane { .. } => {
            let (half, origin, (u, v)) = plane_frame(p, bbox);
            let a: f64 = rng.random_range(-half..=half);
            let b: f64 = rng.random_range(-half..=half);
            let q = origin + u * a + v * b;
            bbox.contains(&q).then_some(q)
        }
    }
}

/// Nearest-neighbor backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NearestMethod {
    #[default]
    KdTree,
    /// Exhaustive scan, for verification.
    BruteForce,
}

/// Distance from every query to its nearest target.
pub fn nearest_distances(queries: &[Vec3], targets: &[Vec3], method: NearestMethod) -> Result<Vec<f64>> {
    if queries.is_empty() || targets.is_empty() {
        return Err(Error::EmptyInput("nearest-neighbor query needs non-empty point sets"));
    }
    let out = match method {
        NearestMethod::KdTree => {
            let tree = KdTree::new(targets);
            queries
                .par_iter()
                .map(|q| tree.nearest_squared(q).unwrap_or(f64::INFINITY).sqrt())
                .collect()
        }
        NearestMethod::BruteForce => queries
            .par_iter()
            .map(|q| {
                targets
                    .iter()
                    .map(|t| (t - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect(),
    };
    Ok(out)
}

/// Closest point to `p` on triangle `(a, b, c)`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Triangles binned into a uniform grid of cubic cells.
struct TriangleGrid<'a> {
    mesh: &'a TriangleMesh,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> TriangleGrid<'a> {
    fn new(mesh: &'a TriangleMesh) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut edge_sum = 0.0;
        for f in &mesh.faces {
            let [a, b, c] = f.map(|i| mesh.vertices[i]);
            for p in [a, b, c] {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
            edge_sum += (b - a).norm() + (c - b).norm() + (a - c).norm();
        }
        let extent = (hi - lo).max().max(1e-12);
        let mean_edge = edge_sum / (3.0 * mesh.faces.len() as f64);
        // about two edge lengths per cell, at most 256 cells per axis
        let cell = (2.0 * mean_edge).max(extent / 256.0).max(1e-12);
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1));
        let cell_range = |f: &[usize; 3]| {
            let [a, b, c] = f.map(|i| mesh.vertices[i]);
            let (tlo, thi) = (a.inf(&b).inf(&c), a.sup(&b).sup(&c));
            let idx = |v: f64, axis: usize| (((v - lo[axis]) / cell).floor().max(0.0) as usize).min(dims[axis] - 1);
            ([0, 1, 2].map(|ax| idx(tlo[ax], ax)), [0, 1, 2].map(|ax| idx(thi[ax], ax)))
        };
        let linear = |i: usize, j: usize, k: usize| (k * dims[1] + j) * dims[0] + i;
        let mut counts = vec![0usize; dims[0] * dims[1] * dims[2] + 1];
        let ranges: Vec<_> = mesh.faces.iter().map(cell_range).collect();
        for (a, b) in &ranges {
            for k in a[2]..=b[2] {
                for j in a[1]..=b[1] {
                    for i in a[0]..=b[0] {
                        counts[linear(i, j, k) + 1] += 1;
                    }
                }
            }
        }
        for n in 1..counts.len() {
            counts[n] += counts[n - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; *counts.last().unwrap()];
        for (t, (a, b)) in ranges.iter().enumerate() {
            for k in a[2]..=b[2] {
                for j in a[1]..=b[1] {
                    for i in a[0]..=b[0] {
                        let c = linear(i, j, k);
                        items[fill[c]] = t;
                        fill[c] += 1;
                    }
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            dims,
            starts: counts,
            items,
        }
    }

    fn triangle_distance_squared(&self, q: &Vec3, t: usize) -> f64 {
        let [a, b, c] = self.mesh.face_points(t);
        (closest_point_on_triangle(q, &a, &b, &c) - q).norm_squared()
    }

    fn cell_of(&self, v: f64, axis: usize) -> usize {
        (((v - self.origin[axis]) / self.cell).floor().max(0.0) as usize).min(self.dims[axis] - 1)
    }

    /// `seed` is any triangle; its distance bounds the search region.
    fn distance(&self, q: &Vec3, seed: usize) -> f64 {
        let mut best = self.triangle_distance_squared(q, seed);
        let reach = best.sqrt();
        let lo = [0, 1, 2].map(|a| self.cell_of(q[a] - reach, a));
        let hi = [0, 1, 2].map(|a| self.cell_of(q[a] + reach, a));
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = (k * self.dims[1] + j) * self.dims[0] + i;
                    for &t in &self.items[self.starts[c]..self.starts[c + 1]] {
                        best = best.min(self.triangle_distance_squared(q, t));
                    }
                }
            }
        }
        best.sqrt()
    }
}

/// Exact distance from every point to the surface of `mesh`.
pub fn distances_to_mesh(points: &[Vec3], mesh: &TriangleMesh) -> Result<Vec<f64>> {
    if mesh.is_empty() || points.is_empty() {
        return Err(Error::EmptyInput("point-to-mesh distance needs points and faces"));
    }
    let grid = TriangleGrid::new(mesh);
    let centroids: Vec<Vec3> = (0..mesh.faces.len())
        .map(|f| mesh.face_points(f).iter().sum::<Vec3>() / 3.0)
        .collect();
    let seeds = KdTree::new(&centroids);
    Ok(points
        .par_iter()
        .map(|q| {
            let (seed, _) = seeds.nearest(q).expect("mesh has faces");
            grid.distance(q, seed)
        })
        .collect())
}

/// One-way mean nearest-neighbor distances in scene units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamferReport {
    /// Ground truth to reconstruction.
    pub g2d: f64,
    /// Reconstruction to ground truth.
    pub d2g: f64,
    /// `(g2d + d2g) / 2`.
    pub cd: f64,
    pub gt_samples: usize,
    pub rec_samples: usize,
}

impl ChamferReport {
    /// Values multiplied by 1000, the usual reporting convention.
    pub fn milli(&self) -> (f64, f64, f64) {
        (self.g2d * 1e3, self.d2g * 1e3, self.cd * 1e3)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn chamfer(gt: &[Vec3], rec: &[Vec3]) -> Result<ChamferReport> {
    chamfer_with(gt, rec, NearestMethod::KdTree)
}

pub fn chamfer_with(gt: &[Vec3], rec: &[Vec3], method: NearestMethod) -> Result<ChamferReport> {
    let g2d = mean(&nearest_distances(gt, rec, method)?);
    let d2g = mean(&nearest_distances(rec, gt, method)?);
    Ok(ChamferReport {
        g2d,
        d2g,
        cd: (g2d + d2g) / 2.0,
        gt_samples: gt.len(),
        rec_samples: rec.len(),
    })
}

/// Fraction of ground-truth points within each threshold of the
/// reconstruction. Thresholds must be ascending.
pub fn completeness_curve(gt: &[Vec3], rec: &[Vec3], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("thresholds must be sorted ascending".into()));
    }
    let mut dist = nearest_distances(gt, rec, NearestMethod::KdTree)?;
    dist.sort_unstable_by(f64::total_cmp);
    let n = dist.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, dist.partition_point(|&d| d <= t) as f64 / n))
        .collect())
}
