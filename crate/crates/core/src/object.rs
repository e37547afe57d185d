use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ccw, is_convex, polygon_mass_properties, polygon_mean_radius, Hull, PlanarPose, Vec2};

/// Object outline in its body frame, centred on the centre of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Polygon { vertices: Vec<[f64; 2]> },
    Disc { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub mass: f64,
    pub ground_friction: f64,
    pub surface_friction: f64,
    #[serde(default)]
    pub label: String,
}

/// Derived inertial and friction quantities of an object.
#[derive(Debug, Clone, Copy)]
pub struct MassProperties {
    pub mass: f64,
    pub inertia: f64,
    /// Mean distance of the footprint from the centre (torsional friction arm).
    pub friction_radius: f64,
    /// Smallest extent, used for the divergence check.
    pub min_dimension: f64,
}

pub fn load_object_spec(document: &str) -> Result<ObjectSpec> {
    let spec: ObjectSpec = serde_json::from_str(document)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_object_specs(document: &str) -> Result<Vec<ObjectSpec>> {
    let specs: Vec<ObjectSpec> = serde_json::from_str(document)?;
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

impl ObjectSpec {
    pub fn rectangle(width: f64, height: f64, mass: f64, label: &str) -> Self {
        let (hw, hh) = (0.5 * width, 0.5 * height);
        Self {
            shape: Shape::Polygon {
                vertices: vec![[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]],
            },
            mass,
            ground_friction: 0.3,
            surface_friction: 0.6,
            label: label.into(),
        }
    }

    pub fn disc(radius: f64, mass: f64, label: &str) -> Self {
        Self {
            shape: Shape::Disc { radius },
            mass,
            ground_friction: 0.3,
            surface_friction: 0.6,
            label: label.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::validation("mass", "must be > 0"));
        }
        if !(self.ground_friction >= 0.0) {
            return Err(Error::validation("ground_friction", "must be ≥ 0"));
        }
        if !(self.surface_friction >= 0.0) {
            return Err(Error::validation("surface_friction", "must be ≥ 0"));
        }
        match &self.shape {
            Shape::Polygon { vertices } => {
                if !is_convex(vertices) {
                    return Err(Error::validation("shape.vertices", "polygon must be convex"));
                }
                let (_, c, _) = polygon_mass_properties(vertices);
                if c.norm() > 1e-9 {
                    return Err(Error::validation("shape.vertices", "polygon must be centred on its centroid"));
                }
            }
            Shape::Disc { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::validation("shape.radius", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn mass_properties(&self) -> MassProperties {
        match &self.shape {
            Shape::Polygon { vertices } => {
                let (_, c, j) = polygon_mass_properties(vertices);
                let min_dimension = self.width().min(self.height());
                MassProperties {
                    mass: self.mass,
                    inertia: self.mass * j,
                    friction_radius: polygon_mean_radius(vertices, c),
                    min_dimension,
                }
            }
            Shape::Disc { radius } => MassProperties {
                mass: self.mass,
                inertia: 0.5 * self.mass * radius * radius,
                friction_radius: 2.0 * radius / 3.0,
                min_dimension: 2.0 * radius,
            },
        }
    }

    /// Extent along the body x axis.
    pub fn width(&self) -> f64 {
        match &self.shape {
            Shape::Polygon { vertices } => {
                let (lo, hi) = vertices
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[0]), hi.max(v[0])));
                hi - lo
            }
            Shape::Disc { radius } => 2.0 * radius,
        }
    }

    /// Extent along the body y axis.
    pub fn height(&self) -> f64 {
        match &self.shape {
            Shape::Polygon { vertices } => {
                let (lo, hi) = vertices
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[1]), hi.max(v[1])));
                hi - lo
            }
            Shape::Disc { radius } => 2.0 * radius,
        }
    }

    pub fn hull(&self, pose: &PlanarPose) -> Hull {
        match &self.shape {
            Shape::Polygon { vertices } => {
                let v: Vec<Vec2> = ccw(vertices).into_iter().map(|p| pose.transform(p)).collect();
                Hull::polygon(v, 0.0)
            }
            Shape::Disc { radius } => Hull::disc(pose.position(), *radius),
        }
    }
}
