//! Distance fields: analytic primitives, mixed opaque/transparent scenes,
//! grid-sampled fields and the absolute-value wrapper.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::render::watershed_alpha;

/// A scalar distance field that can be evaluated anywhere in space.
///
/// Implementations are immutable and may be evaluated concurrently.
pub trait ScalarField: Send + Sync {
    fn eval(&self, p: &Vec3) -> f64;

    /// Gradient at `p`. Analytic where the implementation knows it; the
    /// default is a central difference with step `h` per axis. At kinks the
    /// result is a subgradient and no error is raised.
    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        central_difference(self, p, h)
    }
}

pub fn central_difference<F: ScalarField + ?Sized>(field: &F, p: &Vec3, h: f64) -> Vec3 {
    let mut g = Vec3::zeros();
    for axis in 0..3 {
        let mut fwd = *p;
        let mut bwd = *p;
        fwd[axis] += h;
        bwd[axis] -= h;
        g[axis] = (field.eval(&fwd) - field.eval(&bwd)) / (2.0 * h);
    }
    g
}

impl<F: ScalarField + ?Sized> ScalarField for &F {
    fn eval(&self, p: &Vec3) -> f64 {
        (**self).eval(p)
    }
    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        (**self).gradient(p, h)
    }
}

impl<F: ScalarField + ?Sized> ScalarField for Box<F> {
    fn eval(&self, p: &Vec3) -> f64 {
        (**self).eval(p)
    }
    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        (**self).gradient(p, h)
    }
}

impl<F: ScalarField + ?Sized> ScalarField for Arc<F> {
    fn eval(&self, p: &Vec3) -> f64 {
        (**self).eval(p)
    }
    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        (**self).gradient(p, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub f64);

impl ScalarField for ConstantField {
    fn eval(&self, _p: &Vec3) -> f64 {
        self.0
    }
    fn gradient(&self, _p: &Vec3, _h: f64) -> Vec3 {
        Vec3::zeros()
    }
}

/// Analytic shapes with exact signed distances.
///
/// All four distances are exact on both sides of the surface: the box and
/// capped cylinder use the closed forms whose interior branch is the distance
/// to the nearest face (`min(max(q), 0)` term), which is exact for convex
/// shapes. Gradients are analytic except on the medial set, where a zero
/// vector (sphere center) or a one-sided face normal is returned.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
    },
    Plane {
        point: Vec3,
        normal: Vec3,
    },
    Cylinder {
        point: Vec3,
        axis: Vec3,
        radius: f64,
        half_height: f64,
    },
}

const UNIT_TOL: f64 = 1e-9;

fn check_finite(v: &Vec3, what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite")))
    }
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    check_finite(v, what)?;
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::Domain(format!(
            "{what} must be unit length, got norm {}",
            v.norm()
        )));
    }
    Ok(())
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be > 0, got {x}")))
    }
}

impl Primitive {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        check_finite(&center, "sphere center")?;
        check_positive(radius, "sphere radius")?;
        Ok(Primitive::Sphere { center, radius })
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Result<Self> {
        check_finite(&center, "box center")?;
        for i in 0..3 {
            check_positive(half_extents[i], "box half-extent")?;
        }
        Ok(Primitive::Box {
            center,
            half_extents,
        })
    }

    pub fn plane(point: Vec3, normal: Vec3) -> Result<Self> {
        check_finite(&point, "plane point")?;
        check_unit(&normal, "plane normal")?;
        Ok(Primitive::Plane { point, normal })
    }

    pub fn cylinder(point: Vec3, axis: Vec3, radius: f64, half_height: f64) -> Result<Self> {
        check_finite(&point, "cylinder axis point")?;
        check_unit(&axis, "cylinder axis")?;
        check_positive(radius, "cylinder radius")?;
        check_positive(half_height, "cylinder half-height")?;
        Ok(Primitive::Cylinder {
            point,
            axis,
            radius,
            half_height,
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - center).norm() - radius,
            Primitive::Box {
                center,
                half_extents,
            } => {
                let q = (p - center).abs() - half_extents;
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            Primitive::Plane { point, normal } => (p - point).dot(normal),
            Primitive::Cylinder {
                point,
                axis,
                radius,
                half_height,
            } => {
                let d = p - point;
                let h = d.dot(axis);
                let radial = (d - axis * h).norm();
                let qx = radial - radius;
                let qy = h.abs() - half_height;
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                outside + qx.max(qy).min(0.0)
            }
        }
    }

    /// Analytic gradient of the signed distance.
    pub fn sdf_gradient(&self, p: &Vec3) -> Vec3 {
        match self {
            Primitive::Sphere { center, .. } => {
                let d = p - center;
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Vec3::zeros()
                }
            }
            Primitive::Box {
                center,
                half_extents,
            } => {
                let d = p - center;
                let q = d.abs() - half_extents;
                let sign = d.map(|c| if c < 0.0 { -1.0 } else { 1.0 });
                let pos = q.map(|c| c.max(0.0));
                let n = pos.norm();
                if n > 0.0 {
                    (pos / n).component_mul(&sign)
                } else {
                    let axis = q.imax();
                    let mut g = Vec3::zeros();
                    g[axis] = sign[axis];
                    g
                }
            }
            Primitive::Plane { normal, .. } => *normal,
            Primitive::Cylinder {
                point,
                axis,
                radius,
                half_height,
            } => {
                let d = p - point;
                let h = d.dot(axis);
                let radial_vec = d - axis * h;
                let radial = radial_vec.norm();
                let radial_dir = if radial > 0.0 {
                    radial_vec / radial
                } else {
                    Vec3::zeros()
                };
                let axial_dir = if h < 0.0 { -axis } else { *axis };
                let qx = radial - radius;
                let qy = h.abs() - half_height;
                if qx > 0.0 || qy > 0.0 {
                    let (a, b) = (qx.max(0.0), qy.max(0.0));
                    let n = (a * a + b * b).sqrt();
                    (radial_dir * a + axial_dir * b) / n
                } else if qx >= qy {
                    radial_dir
                } else {
                    axial_dir
                }
            }
        }
    }
}

impl ScalarField for Primitive {
    fn eval(&self, p: &Vec3) -> f64 {
        self.signed_distance(p)
    }
    fn gradient(&self, p: &Vec3, _h: f64) -> Vec3 {
        self.sdf_gradient(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    /// Signed distance, zero on the surface.
    Opaque,
    /// `|sdf| + m`: positive on both sides with minimum `m` on the surface.
    Transparent { m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneComponent {
    pub primitive: Primitive,
    pub material: Material,
}

impl SceneComponent {
    pub fn opaque(primitive: Primitive) -> Self {
        Self {
            primitive,
            material: Material::Opaque,
        }
    }

    pub fn transparent(primitive: Primitive, m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::Domain(format!(
                "transparent offset m must be finite and >= 0, got {m}"
            )));
        }
        Ok(Self {
            primitive,
            material: Material::Transparent { m },
        })
    }
}

impl ScalarField for SceneComponent {
    fn eval(&self, p: &Vec3) -> f64 {
        let d = self.primitive.signed_distance(p);
        match self.material {
            Material::Opaque => d,
            Material::Transparent { m } => d.abs() + m,
        }
    }

    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        match self.material {
            Material::Opaque => self.primitive.sdf_gradient(p),
            Material::Transparent { .. } => {
                let d = self.primitive.signed_distance(p);
                if d > 0.0 {
                    self.primitive.sdf_gradient(p)
                } else if d < 0.0 {
                    -self.primitive.sdf_gradient(p)
                } else {
                    central_difference(self, p, h)
                }
            }
        }
    }
}

/// Pointwise-min union of opaque and transparent components: the mixed
/// signed/unsigned field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedScene {
    components: Vec<SceneComponent>,
    bbox: Aabb,
}

impl ComposedScene {
    pub fn new(components: Vec<SceneComponent>, bbox: Aabb) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("scene has no components"));
        }
        Ok(Self { components, bbox })
    }

    pub fn components(&self) -> &[SceneComponent] {
        &self.components
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    /// Index of the component attaining the minimum at `p` (first on ties).
    pub fn active_component(&self, p: &Vec3) -> usize {
        let mut best = 0;
        let mut best_value = f64::INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let v = c.eval(p);
            if v < best_value {
                best = i;
                best_value = v;
            }
        }
        best
    }
}

impl ScalarField for ComposedScene {
    fn eval(&self, p: &Vec3) -> f64 {
        self.components
            .iter()
            .map(|c| c.eval(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        let mut best = (f64::INFINITY, 0usize);
        let mut tie = false;
        for (i, c) in self.components.iter().enumerate() {
            let v = c.eval(p);
            if v < best.0 {
                best = (v, i);
                tie = false;
            } else if v == best.0 {
                tie = true;
            }
        }
        if tie {
            central_difference(self, p, h)
        } else {
            self.components[best.1].gradient(p, h)
        }
    }
}

/// `|f|`, whose local minima contain both the zero set and the non-negative
/// local minima of `f`.
#[derive(Debug, Clone)]
pub struct AbsoluteField<F>(pub F);

pub fn absolute_field<F: ScalarField>(field: F) -> AbsoluteField<F> {
    AbsoluteField(field)
}

impl<F: ScalarField> ScalarField for AbsoluteField<F> {
    fn eval(&self, p: &Vec3) -> f64 {
        self.0.eval(p).abs()
    }

    /// `sign(f) * grad f` with `sign(0) = +1`.
    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        let g = self.0.gradient(p, h);
        if self.0.eval(p) < 0.0 {
            -g
        } else {
            g
        }
    }
}

/// Scalar values on a regular lattice, trilinearly interpolated.
///
/// Values are stored x-fastest, then y, then z. Queries outside the box are
/// clamped to the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dims: [usize; 3],
    bbox: Aabb,
    values: Vec<f64>,
}

// Lattice coordinates this close to an integer snap onto the vertex, so
// evaluating at a vertex position returns the stored value exactly.
const SNAP: f64 = 1e-9;

impl GridField {
    pub fn new(dims: [usize; 3], bbox: Aabb, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::Domain(format!(
                "grid needs at least 2 vertices per axis, got {dims:?}"
            )));
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::Resource(format!("grid dims {dims:?} overflow")))?;
        if values.len() != expected {
            return Err(Error::Data(format!(
                "grid of dims {dims:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("grid value {i} is not finite")));
        }
        Ok(Self { dims, bbox, values })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn vertex_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        lattice_point(&self.bbox, self.dims, [i, j, k])
    }

    pub fn cell_size(&self) -> Vec3 {
        let e = self.bbox.extent();
        Vec3::new(
            e.x / (self.dims[0] - 1) as f64,
            e.y / (self.dims[1] - 1) as f64,
            e.z / (self.dims[2] - 1) as f64,
        )
    }

    fn locate(&self, p: &Vec3, axis: usize) -> (usize, f64) {
        let n = self.dims[axis];
        let span = self.bbox.max[axis] - self.bbox.min[axis];
        let mut u = (p[axis] - self.bbox.min[axis]) / span * (n - 1) as f64;
        u = u.clamp(0.0, (n - 1) as f64);
        let r = u.round();
        if (u - r).abs() <= SNAP {
            u = r;
        }
        let i0 = (u.floor() as usize).min(n - 2);
        (i0, u - i0 as f64)
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        a + t * (b - a)
    }
}

pub(crate) fn lattice_point(bbox: &Aabb, dims: [usize; 3], ijk: [usize; 3]) -> Vec3 {
    let mut p = Vec3::zeros();
    for a in 0..3 {
        let t = ijk[a] as f64 / (dims[a] - 1) as f64;
        p[a] = if ijk[a] + 1 == dims[a] {
            bbox.max[a]
        } else {
            bbox.min[a] + (bbox.max[a] - bbox.min[a]) * t
        };
    }
    p
}

impl ScalarField for GridField {
    fn eval(&self, p: &Vec3) -> f64 {
        let (i, tx) = self.locate(p, 0);
        let (j, ty) = self.locate(p, 1);
        let (k, tz) = self.locate(p, 2);
        let v = |di, dj, dk| self.value_at(i + di, j + dj, k + dk);
        let c00 = lerp(v(0, 0, 0), v(1, 0, 0), tx);
        let c10 = lerp(v(0, 1, 0), v(1, 1, 0), tx);
        let c01 = lerp(v(0, 0, 1), v(1, 0, 1), tx);
        let c11 = lerp(v(0, 1, 1), v(1, 1, 1), tx);
        let c0 = lerp(c00, c10, ty);
        let c1 = lerp(c01, c11, ty);
        lerp(c0, c1, tz)
    }

    /// Central differences at half a cell per axis; `h` is ignored.
    fn gradient(&self, p: &Vec3, _h: f64) -> Vec3 {
        let half = self.cell_size() / 2.0;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = half[a];
            g[a] = (self.eval(&(p + e)) - self.eval(&(p - e))) / (2.0 * half[a]);
        }
        g
    }
}

/// Samples `field` at every lattice vertex of `bbox` with `dims` vertices per
/// axis.
pub fn bake_grid<F: ScalarField + ?Sized>(field: &F, bbox: Aabb, dims: [usize; 3]) -> Result<GridField> {
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::Domain(format!(
            "grid needs at least 2 vertices per axis, got {dims:?}"
        )));
    }
    let plane = dims[0]
        .checked_mul(dims[1])
        .ok_or_else(|| Error::Resource(format!("grid dims {dims:?} overflow")))?;
    let total = plane
        .checked_mul(dims[2])
        .ok_or_else(|| Error::Resource(format!("grid dims {dims:?} overflow")))?;
    let mut values: Vec<f64> = Vec::new();
    values
        .try_reserve_exact(total)
        .map_err(|e| Error::Resource(format!("cannot allocate {total} grid values: {e}")))?;
    values.resize(total, 0.0);
    values
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(k, slab)| {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = lattice_point(&bbox, dims, [i, j, k]);
                    slab[i + dims[0] * j] = field.eval(&p);
                }
            }
        });
    GridField::new(dims, bbox, values)
}

/// Offset `m` for which a plane at distance `d0` renders with opacity
/// `alpha` under sharpness `s`. Inverse of the `m >= 0` opacity branch.
pub fn m_from_alpha(alpha: f64, s: f64, d0: f64) -> Result<f64> {
    if !(s.is_finite() && s > 0.0 && d0.is_finite() && d0 > 0.0) {
        return Err(Error::Domain(format!(
            "need s > 0 and d0 > 0, got s={s}, d0={d0}"
        )));
    }
    let ws = watershed_alpha(s, d0);
    if !(alpha > 0.0 && alpha <= ws) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, {ws}] for s={s}, d0={d0}; got {alpha}"
        )));
    }
    let numerator = 1.0 - (-s * d0).exp();
    Ok((numerator / alpha - 1.0).ln() / s)
}
