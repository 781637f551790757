//! Iso-surface extraction with classic 256-case marching cubes.
//!
//! The envelope of a mixed field is the `r`-level set of its absolute value:
//! a closed surface wrapping every unbiased surface from both sides. The
//! zero level set of the raw field is the baseline it is compared against.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{absolute_field, lattice_point, ScalarField};
use crate::geom::{Aabb, Vec3};
use crate::mc_tables::{CORNERS, EDGE_CORNERS, TRI_TABLE};
pub use crate::mesh::{check_closed, ClosedReport, TriangleMesh};

pub const DEFAULT_ISO: f64 = 0.005;
pub const DEFAULT_RESOLUTION: usize = 128;
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    /// Iso-value; `> 0` for envelopes, `0` for the baseline.
    pub iso: f64,
    /// Cells per axis.
    pub resolution: usize,
    pub bbox: Aabb,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            iso: DEFAULT_ISO,
            resolution: DEFAULT_RESOLUTION,
            bbox: Aabb::cube(1.0),
        }
    }
}

impl ExtractionConfig {
    pub fn new(iso: f64, resolution: usize, bbox: Aabb) -> Result<Self> {
        let cfg = Self {
            iso,
            resolution,
            bbox,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iso.is_finite() && self.iso >= 0.0) {
            return Err(Error::Domain(format!("iso-value must be >= 0, got {}", self.iso)));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::Domain(format!(
                "resolution must be >= {MIN_RESOLUTION}, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn cell_size(&self) -> Vec3 {
        self.bbox.extent() / self.resolution as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size().norm()
    }
}

/// Counters gathered during extraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractionStats {
    /// Cells crossed by the iso-surface.
    pub active_cells: usize,
    /// Active cells with at least one ambiguous face (diagonal corners on the
    /// same side, adjacent corners on opposite sides). The table resolves
    /// them without disambiguation.
    pub ambiguous_cells: usize,
}

// corner cycles of the six cell faces
const FACE_CYCLES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 3, 7, 4],
    [1, 2, 6, 5],
];

fn is_ambiguous(case: usize) -> bool {
    FACE_CYCLES.iter().any(|cyc| {
        let b = cyc.map(|c| (case >> c) & 1);
        b[0] == b[2] && b[1] == b[3] && b[0] != b[1]
    })
}

struct Layer {
    triangles: Vec<[u64; 3]>,
    points: Vec<(u64, Vec3)>,
    stats: ExtractionStats,
}

/// Marching cubes over `cfg.bbox` at `cfg.resolution` cells per axis.
///
/// Vertices are welded by lattice edge, so the mesh is closed wherever the
/// surface does not leave the box. Triangles are wound so that normals point
/// toward increasing field values. A corner lying exactly on the iso-value
/// collapses its incident edge vertices into one; faces degenerated by this
/// are dropped.
pub fn marching_cubes<F: ScalarField + ?Sized>(field: &F, cfg: &ExtractionConfig) -> Result<TriangleMesh> {
    marching_cubes_with_stats(field, cfg).map(|(mesh, _)| mesh)
}

pub fn marching_cubes_with_stats<F: ScalarField + ?Sized>(
    field: &F,
    cfg: &ExtractionConfig,
) -> Result<(TriangleMesh, ExtractionStats)> {
    cfg.validate()?;
    let n = cfg.resolution + 1;
    let dims = [n, n, n];
    let plane_len = n * n;
    let total = plane_len as u64 * n as u64;
    let iso = cfg.iso;
    let bbox = cfg.bbox;

    let sample_plane = |k: usize| -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(plane_len);
        for j in 0..n {
            for i in 0..n {
                let p = lattice_point(&bbox, dims, [i, j, k]);
                let v = field.eval(&p);
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite field value {v} at ({}, {}, {})",
                        p.x, p.y, p.z
                    )));
                }
                values.push(v);
            }
        }
        Ok(values)
    };

    let layers: Vec<Layer> = (0..cfg.resolution)
        .into_par_iter()
        .map(|k| -> Result<Layer> {
            let planes = [sample_plane(k)?, sample_plane(k + 1)?];
            let mut layer = Layer {
                triangles: Vec::new(),
                points: Vec::new(),
                stats: ExtractionStats::default(),
            };
            let mut local: HashMap<u64, ()> = HashMap::new();
            for j in 0..cfg.resolution {
                for i in 0..cfg.resolution {
                    let value = |c: usize| {
                        let [dx, dy, dz] = CORNERS[c];
                        planes[dz][(i + dx) + n * (j + dy)]
                    };
                    let values: [f64; 8] = std::array::from_fn(value);
                    let mut case = 0usize;
                    for (c, v) in values.iter().enumerate() {
                        if *v < iso {
                            case |= 1 << c;
                        }
                    }
                    if case == 0 || case == 255 {
                        continue;
                    }
                    layer.stats.active_cells += 1;
                    if is_ambiguous(case) {
                        layer.stats.ambiguous_cells += 1;
                    }
                    let corner_index = |c: usize| {
                        let [dx, dy, dz] = CORNERS[c];
                        [i + dx, j + dy, k + dz]
                    };
                    let linear = |ijk: [usize; 3]| (ijk[0] + n * (ijk[1] + n * ijk[2])) as u64;
                    let mut edge_key = |e: usize| -> u64 {
                        let [c0, c1] = EDGE_CORNERS[e];
                        let (a, b) = (corner_index(c0), corner_index(c1));
                        // orient every edge from its lower lattice endpoint
                        let (lo, hi, vlo, vhi) = if a <= b {
                            (a, b, values[c0], values[c1])
                        } else {
                            (b, a, values[c1], values[c0])
                        };
                        let axis = (0..3).find(|&ax| lo[ax] != hi[ax]).unwrap_or(0);
                        let t = (iso - vlo) / (vhi - vlo);
                        let (key, pos) = if t <= 0.0 {
                            (3 * total + linear(lo), lattice_point(&bbox, dims, lo))
                        } else if t >= 1.0 {
                            (3 * total + linear(hi), lattice_point(&bbox, dims, hi))
                        } else {
                            let p0 = lattice_point(&bbox, dims, lo);
                            let p1 = lattice_point(&bbox, dims, hi);
                            (3 * linear(lo) + axis as u64, p0 + (p1 - p0) * t)
                        };
                        if local.insert(key, ()).is_none() {
                            layer.points.push((key, pos));
                        }
                        key
                    };
                    let row = &TRI_TABLE[case];
                    for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                        let a = edge_key(tri[0] as usize);
                        let b = edge_key(tri[1] as usize);
                        let c = edge_key(tri[2] as usize);
                        if a != b && b != c && a != c {
                            // table winding faces the low side; flip to face
                            // increasing values
                            layer.triangles.push([a, c, b]);
                        }
                    }
                }
            }
            Ok(layer)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = ExtractionStats::default();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut positions: HashMap<u64, Vec3> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for layer in layers {
        stats.active_cells += layer.stats.active_cells;
        stats.ambiguous_cells += layer.stats.ambiguous_cells;
        positions.extend(layer.points);
        for tri in layer.triangles {
            let face = tri.map(|key| {
                *index.entry(key).or_insert_with(|| {
                    vertices.push(positions[&key]);
                    vertices.len() - 1
                })
            });
            faces.push(face);
        }
        positions.clear();
    }
    Ok((TriangleMesh::new(vertices, faces)?, stats))
}

/// Envelope of the unbiased surfaces: the `cfg.iso` level set of `|f|`.
pub fn extract_envelope<F: ScalarField>(field: F, cfg: &ExtractionConfig) -> Result<TriangleMesh> {
    if !(cfg.iso > 0.0) {
        return Err(Error::Domain(format!(
            "envelope extraction needs iso > 0, got {}",
            cfg.iso
        )));
    }
    marching_cubes(&absolute_field(field), cfg)
}

/// Zero level set of the raw mixed field. Transparent parts with `m > 0`
/// never reach zero and are missing from the result.
pub fn zero_iso_baseline<F: ScalarField + ?Sized>(field: &F, cfg: &ExtractionConfig) -> Result<TriangleMesh> {
    let cfg = ExtractionConfig { iso: 0.0, ..*cfg };
    marching_cubes(field, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstantField, Primitive, SceneComponent};

    fn sphere() -> SceneComponent {
        SceneComponent::opaque(Primitive::sphere(Vec3::zeros(), 0.5).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(ExtractionConfig::new(-0.1, 32, Aabb::cube(1.0)).is_err());
        assert!(ExtractionConfig::new(0.005, 4, Aabb::cube(1.0)).is_err());
        assert!(ExtractionConfig::new(0.0, 8, Aabb::cube(1.0)).is_ok());
    }

    #[test]
    fn constant_field_gives_empty_mesh() {
        let cfg = ExtractionConfig::new(0.005, 16, Aabb::cube(1.0)).unwrap();
        let mesh = marching_cubes(&ConstantField(1.0), &cfg).unwrap();
        assert!(mesh.is_empty());
        assert!(check_closed(&mesh).closed);
    }

    #[test]
    fn sphere_zero_iso_is_closed_and_outward() {
        let cfg = ExtractionConfig::new(0.0, 32, Aabb::cube(1.0)).unwrap();
        let (mesh, stats) = marching_cubes_with_stats(&sphere(), &cfg).unwrap();
        assert!(stats.active_cells > 0);
        assert!(check_closed(&mesh).closed);
        assert_eq!(mesh.component_count(), 1);
        let vol = mesh.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((vol - exact).abs() / exact < 0.02, "{vol} vs {exact}");
        let h = cfg.cell_diagonal();
        assert!(mesh.vertices.iter().all(|v| (v.norm() - 0.5).abs() <= h));
    }

    #[test]
    fn corner_exactly_on_iso_is_welded() {
        // lattice vertices on the axes lie exactly on the sphere at res 16
        let cfg = ExtractionConfig::new(0.0, 16, Aabb::cube(1.0)).unwrap();
        let mesh = marching_cubes(&sphere(), &cfg).unwrap();
        assert!(check_closed(&mesh).closed);
        let on_axis = mesh
            .vertices
            .iter()
            .filter(|v| (*v - Vec3::new(0.5, 0.0, 0.0)).norm() == 0.0)
            .count();
        assert_eq!(on_axis, 1);
    }

    #[test]
    fn non_finite_sample_is_a_data_error() {
        let cfg = ExtractionConfig::new(0.0, 8, Aabb::cube(1.0)).unwrap();
        let err = marching_cubes(&ConstantField(f64::NAN), &cfg).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn envelope_requires_positive_iso() {
        let cfg = ExtractionConfig::new(0.0, 16, Aabb::cube(1.0)).unwrap();
        assert!(extract_envelope(sphere(), &cfg).is_err());
    }

    #[test]
    fn ambiguity_detection() {
        assert!(!is_ambiguous(0b0000_0001));
        // corners 0 and 2 below: diagonal on the bottom face
        assert!(is_ambiguous(0b0000_0101));
    }
}
