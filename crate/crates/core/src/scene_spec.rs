//! Declarative TOML scene files.
//!
//! ```toml
//! bbox = { min = [-1, -1, -1], max = [1, 1, 1] }   # optional, default [-1,1]^3
//! reference = { s = 100.0, d0 = 1.0 }              # needed by `alpha` entries
//!
//! [[component]]
//! material = "opaque"
//! shape = { kind = "box", center = [0, -0.25, 0], half_extents = [0.5, 0.25, 0.5] }
//!
//! [[component]]
//! material = "transparent"
//! alpha = 0.3            # or m = 0.003
//! shape = { kind = "sphere", center = [0, 0, 0], radius = 0.3 }
//! ```
//!
//! Shapes: `sphere` (center, radius), `box` (center, half_extents),
//! `plane` (point, normal), `cylinder` (point, axis, radius, half_height).
//! A transparent component takes either `m`, the local minimum of its
//! field, or `alpha`, a target opacity converted to `m` through the
//! `reference` sharpness and ray distance.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{m_from_alpha, ComposedScene, Primitive, SceneComponent};
use crate::geom::{Aabb, Vec3};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub bbox: Option<BoxSpec>,
    pub reference: Option<OpacityReference>,
    #[serde(rename = "component")]
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Sharpness and ray distance used to turn `alpha` into `m`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpacityReference {
    pub s: f64,
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialKind {
    Opaque,
    Transparent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub material: MaterialKind,
    pub m: Option<f64>,
    pub alpha: Option<f64>,
    pub shape: ShapeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    Cylinder {
        point: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        half_height: f64,
    },
}

fn v(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

impl ShapeSpec {
    pub fn to_primitive(&self) -> Result<Primitive> {
        match *self {
            ShapeSpec::Sphere { center, radius } => Primitive::sphere(v(center), radius),
            ShapeSpec::Box { center, half_extents } => Primitive::cuboid(v(center), v(half_extents)),
            ShapeSpec::Plane { point, normal } => Primitive::plane(v(point), v(normal)),
            ShapeSpec::Cylinder {
                point,
                axis,
                radius,
                half_height,
            } => Primitive::cylinder(v(point), v(axis), radius, half_height),
        }
    }
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_scene(&self) -> Result<ComposedScene> {
        let bbox = match self.bbox {
            Some(b) => Aabb::new(v(b.min), v(b.max))?,
            None => Aabb::cube(1.0),
        };
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.component(c)
                    .map_err(|e| Error::Domain(format!("component {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        ComposedScene::new(components, bbox)
    }

    fn component(&self, c: &ComponentSpec) -> Result<SceneComponent> {
        let primitive = c.shape.to_primitive()?;
        match (c.material, c.m, c.alpha) {
            (MaterialKind::Opaque, None, None) => Ok(SceneComponent::opaque(primitive)),
            (MaterialKind::Opaque, _, _) => Err(Error::Domain("opaque components take neither m nor alpha".into())),
            (MaterialKind::Transparent, Some(m), None) => SceneComponent::transparent(primitive, m),
            (MaterialKind::Transparent, None, Some(alpha)) => {
                let r = self
                    .reference
                    .ok_or_else(|| Error::Domain("alpha needs a [reference] with s and d0".into()))?;
                let m = m_from_alpha(alpha, r.s, r.d0)?;
                SceneComponent::transparent(primitive, m)
            }
            (MaterialKind::Transparent, _, _) => {
                Err(Error::Domain("transparent components take exactly one of m or alpha".into()))
            }
        }
    }
}
