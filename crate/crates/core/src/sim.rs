//! Fixed-step planar dynamics.
//!
//! The hand is a set of joint-space degrees of freedom with constant
//! diagonal inertia; objects are free rigid bodies on a Coulomb + viscous
//! support plane. Contacts are solved as sparse velocity rows over the
//! generalized velocity vector (joints first, then `vx, vy, ω` per object)
//! with sequential impulses, followed by a linearized positional correction.

use serde::{Deserialize, Serialize};

use crate::airmass::AirMassVector;
use crate::error::{Error, Result};
use crate::geometry::{collide, cross, perp, wrap_angle, Hull, PlanarPose, Vec2};
use crate::hand::{rest_configuration, HandSpec};
use crate::object::{MassProperties, ObjectSpec};
use crate::world::{BodyId, ContactPoint, SimStatus, Velocity, WorldState};

pub const DEFAULT_DT: f64 = 1.0e-3;

/// Maximum penetration accepted by [`Simulator::place_object`].
pub const PLACEMENT_TOLERANCE: f64 = 1.0e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Out-of-plane gravity pressing objects onto the support plane.
    pub gravity: f64,
    /// Viscous ground drag on objects (1/s).
    pub ground_viscosity: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    pub baumgarte: f64,
    pub linear_slop: f64,
    pub max_correction: f64,
    pub speculative_distance: f64,
    pub restitution: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            gravity: 9.81,
            ground_viscosity: 0.5,
            velocity_iterations: 16,
            position_iterations: 3,
            baumgarte: 0.2,
            linear_slop: 1.0e-4,
            max_correction: 2.0e-3,
            speculative_distance: 2.0e-3,
            restitution: 0.0,
        }
    }
}

impl SimConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }
}

const MAX_ROW_DOFS: usize = 8;

/// Sparse Jacobian row: at most one digit chain plus one object.
#[derive(Debug, Clone, Copy)]
struct SparseRow {
    len: usize,
    dofs: [usize; MAX_ROW_DOFS],
    coeffs: [f64; MAX_ROW_DOFS],
}

impl SparseRow {
    fn new() -> Self {
        Self {
            len: 0,
            dofs: [0; MAX_ROW_DOFS],
            coeffs: [0.0; MAX_ROW_DOFS],
        }
    }

    fn push(&mut self, dof: usize, c: f64) {
        self.dofs[self.len] = dof;
        self.coeffs[self.len] = c;
        self.len += 1;
    }

    fn dot(&self, v: &[f64]) -> f64 {
        (0..self.len).map(|i| self.coeffs[i] * v[self.dofs[i]]).sum()
    }

    fn apply(&self, v: &mut [f64], inv_mass: &[f64], impulse: f64) {
        for i in 0..self.len {
            let d = self.dofs[i];
            v[d] += inv_mass[d] * self.coeffs[i] * impulse;
        }
    }

    fn effective_inverse_mass(&self, inv_mass: &[f64]) -> f64 {
        (0..self.len)
            .map(|i| self.coeffs[i] * self.coeffs[i] * inv_mass[self.dofs[i]])
            .sum()
    }
}

#[derive(Debug, Clone)]
struct ContactRow {
    bodies: (BodyId, BodyId),
    point: Vec2,
    normal: Vec2,
    separation: f64,
    friction: f64,
    min_dimension: f64,
    normal_row: SparseRow,
    tangent_row: SparseRow,
    normal_mass: f64,
    tangent_mass: f64,
    normal_impulse: f64,
    tangent_impulse: f64,
}

/// Contact found by the narrow phase, before solving.
#[derive(Debug, Clone)]
pub struct DetectedContact {
    pub bodies: (BodyId, BodyId),
    pub point: Vec2,
    pub normal: Vec2,
    pub separation: f64,
}

/// Precomputed, immutable simulation context for one hand and object set.
#[derive(Debug, Clone)]
pub struct Simulator {
    hand: HandSpec,
    objects: Vec<ObjectSpec>,
    config: SimConfig,
    joint_inertia: Vec<f64>,
    joint_offsets: Vec<usize>,
    mass: Vec<MassProperties>,
    palm: Hull,
}

impl Simulator {
    pub fn new(hand: HandSpec, objects: Vec<ObjectSpec>, config: SimConfig) -> Result<Self> {
        hand.validate()?;
        for o in &objects {
            o.validate()?;
        }
        if !(config.dt > 0.0) || !config.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", config.dt)));
        }
        let joint_inertia = hand.joint_inertias();
        let joint_offsets = hand.joint_offsets();
        let mass = objects.iter().map(|o| o.mass_properties()).collect();
        let palm = hand.palm_hull();
        Ok(Self {
            hand,
            objects,
            config,
            joint_inertia,
            joint_offsets,
            mass,
            palm,
        })
    }

    pub fn hand(&self) -> &HandSpec {
        &self.hand
    }

    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn joint_inertia(&self) -> &[f64] {
        &self.joint_inertia
    }

    /// Same hand and objects with a different configuration.
    pub fn with_config(&self, config: SimConfig) -> Result<Self> {
        Self::new(self.hand.clone(), self.objects.clone(), config)
    }

    /// World at rest with the hand in its free-motion pose for `airmass`.
    pub fn initial_world(&self, airmass: &AirMassVector, poses: &[PlanarPose]) -> Result<WorldState> {
        if poses.len() != self.objects.len() {
            return Err(Error::DimensionMismatch {
                expected: self.objects.len(),
                actual: poses.len(),
            });
        }
        let (rest, _) = rest_configuration(&self.hand, airmass)?;
        let mut world = WorldState {
            joint_velocities: vec![0.0; rest.len()],
            joint_angles: rest,
            object_poses: Vec::with_capacity(poses.len()),
            object_velocities: vec![Velocity::default(); poses.len()],
            current_airmass: airmass.clone(),
            time: 0.0,
            contacts: Vec::new(),
            status: SimStatus::Valid,
        };
        world.object_poses = poses.iter().map(|p| PlanarPose::new(p.x, p.y, p.theta)).collect();
        for i in 0..poses.len() {
            self.check_placement(&world, i)?;
        }
        Ok(world)
    }

    /// Replaces the commanded air mass; rest pose and stiffness follow on
    /// the next step.
    pub fn set_actuation(&self, world: &mut WorldState, a: &AirMassVector) -> Result<()> {
        a.check_len(self.hand.actuator_count)?;
        world.current_airmass = a.clone();
        Ok(())
    }

    /// Teleports an object and zeroes its velocity. Fails if the new pose
    /// overlaps the hand or another object by more than 0.1 mm.
    pub fn place_object(&self, world: &mut WorldState, index: usize, pose: PlanarPose) -> Result<()> {
        if index >= self.objects.len() {
            return Err(Error::InvalidArgument(format!("no object {index}")));
        }
        let mut candidate = world.clone();
        candidate.object_poses[index] = PlanarPose::new(pose.x, pose.y, pose.theta);
        candidate.object_velocities[index] = Velocity::default();
        self.check_placement(&candidate, index)?;
        *world = candidate;
        Ok(())
    }

    fn check_placement(&self, world: &WorldState, index: usize) -> Result<()> {
        let worst = self
            .detect(world)
            .into_iter()
            .filter(|c| c.bodies.0 == BodyId::Object { index } || c.bodies.1 == BodyId::Object { index })
            .filter(|c| -c.separation > PLACEMENT_TOLERANCE)
            .max_by(|a, b| b.separation.total_cmp(&a.separation));
        if let Some(c) = worst {
            let other = if c.bodies.0 == (BodyId::Object { index }) {
                c.bodies.1
            } else {
                c.bodies.0
            };
            return Err(Error::Penetration {
                object: index,
                body: other.to_string(),
                depth: -c.separation,
            });
        }
        Ok(())
    }

    /// World-frame joint origins and tips for every digit.
    pub fn digit_points(&self, world: &WorldState) -> Vec<Vec<Vec2>> {
        (0..self.hand.digits.len())
            .map(|d| {
                let off = self.joint_offsets[d];
                let n = self.hand.digits[d].joints.len();
                self.hand.digit_points(d, &world.joint_angles[off..off + n])
            })
            .collect()
    }

    fn link_hulls(&self, points: &[Vec<Vec2>]) -> Vec<(BodyId, Hull, f64, f64)> {
        let mut out = Vec::new();
        for (d, digit) in self.hand.digits.iter().enumerate() {
            for (l, link) in digit.links.iter().enumerate() {
                let hull = Hull::capsule(points[d][l], points[d][l + 1], 0.5 * link.width);
                out.push((
                    BodyId::Link { digit: d, link: l },
                    hull,
                    digit.friction_coefficient,
                    link.width.min(link.length),
                ));
            }
        }
        out
    }

    /// Narrow-phase contacts for the current configuration.
    pub fn detect(&self, world: &WorldState) -> Vec<DetectedContact> {
        let points = self.digit_points(world);
        self.detect_with(world, &points).into_iter().map(|(c, _, _)| c).collect()
    }

    /// Contacts with their combined friction and the smaller body dimension.
    fn detect_with(&self, world: &WorldState, points: &[Vec<Vec2>]) -> Vec<(DetectedContact, f64, f64)> {
        let spec = self.config.speculative_distance;
        let links = self.link_hulls(points);
        let link_boxes: Vec<_> = links.iter().map(|(_, h, _, _)| h.aabb()).collect();
        let palm_box = self.palm.aabb();
        let object_hulls: Vec<Hull> = self.objects.iter().zip(&world.object_poses).map(|(o, p)| o.hull(p)).collect();
        let mut out = Vec::new();
        let mut push = |a: BodyId, b: BodyId, m: crate::geometry::Manifold, mu: f64, dim: f64| {
            for p in m.points {
                out.push((
                    DetectedContact {
                        bodies: (a, b),
                        point: p.point,
                        normal: m.normal,
                        separation: p.separation,
                    },
                    mu,
                    dim,
                ));
            }
        };
        for (i, (obj, hull)) in self.objects.iter().zip(&object_hulls).enumerate() {
            let ob = hull.aabb();
            let me = BodyId::Object { index: i };
            let odim = self.mass[i].min_dimension;
            if ob.overlaps(&palm_box, spec) {
                if let Some(m) = collide(&self.palm, hull, spec) {
                    let mu = (self.hand.palm_friction * obj.surface_friction).sqrt();
                    push(BodyId::Palm, me, m, mu, odim);
                }
            }
            for ((id, lh, lmu, ldim), lb) in links.iter().zip(&link_boxes) {
                if !ob.overlaps(lb, spec) {
                    continue;
                }
                if let Some(m) = collide(lh, hull, spec) {
                    let mu = (lmu * obj.surface_friction).sqrt();
                    push(*id, me, m, mu, ldim.min(odim));
                }
            }
            for j in (i + 1)..self.objects.len() {
                let other = &object_hulls[j];
                if !ob.overlaps(&other.aabb(), spec) {
                    continue;
                }
                if let Some(m) = collide(hull, other, spec) {
                    let mu = (obj.surface_friction * self.objects[j].surface_friction).sqrt();
                    push(me, BodyId::Object { index: j }, m, mu, odim.min(self.mass[j].min_dimension));
                }
            }
        }
        out
    }

    fn object_dof(&self, index: usize) -> usize {
        self.hand.joint_count() + 3 * index
    }

    /// Appends the Jacobian of body `body` at `point` along `dir`, scaled by `sign`.
    fn add_jacobian(&self, row: &mut SparseRow, body: BodyId, point: Vec2, dir: Vec2, sign: f64, world: &WorldState, points: &[Vec<Vec2>]) {
        match body {
            BodyId::Palm => {}
            BodyId::Link { digit, link } => {
                let off = self.joint_offsets[digit];
                for j in 0..=link {
                    let r = point - points[digit][j];
                    row.push(off + j, sign * perp(r).dot(&dir));
                }
            }
            BodyId::Object { index } => {
                let base = self.object_dof(index);
                let r = point - world.object_poses[index].position();
                row.push(base, sign * dir.x);
                row.push(base + 1, sign * dir.y);
                row.push(base + 2, sign * cross(r, dir));
            }
        }
    }

    fn inverse_masses(&self) -> Vec<f64> {
        let mut inv: Vec<f64> = self.joint_inertia.iter().map(|i| 1.0 / i).collect();
        for mp in &self.mass {
            inv.push(1.0 / mp.mass);
            inv.push(1.0 / mp.mass);
            inv.push(1.0 / mp.inertia);
        }
        inv
    }

    /// Advances `world` by one fixed step. An invalid world is left untouched.
    pub fn step(&self, world: &mut WorldState) -> Result<()> {
        let dt = self.config.dt;
        if !world.is_valid() {
            return Ok(());
        }
        let nj = self.hand.joint_count();
        if world.joint_angles.len() != nj || world.object_poses.len() != self.objects.len() {
            return Err(Error::DimensionMismatch {
                expected: nj,
                actual: world.joint_angles.len(),
            });
        }
        let (rest, stiffness) = rest_configuration(&self.hand, &world.current_airmass)?;
        let inv_mass = self.inverse_masses();

        // generalized velocity: joints, then (vx, vy, ω) per object
        let mut v = Vec::with_capacity(inv_mass.len());
        for (j, joint) in self.hand.joints().enumerate() {
            let inertia = self.joint_inertia[j];
            let k = stiffness[j];
            let c = joint.damping;
            let q = world.joint_angles[j];
            let qd = world.joint_velocities[j];
            // implicit spring-damper update
            let num = qd + dt / inertia * k * (rest[j] - q);
            let den = 1.0 + dt * c / inertia + dt * dt * k / inertia;
            v.push(num / den);
        }
        let drag = 1.0 / (1.0 + self.config.ground_viscosity * dt);
        for vel in &world.object_velocities {
            v.push(vel.vx * drag);
            v.push(vel.vy * drag);
            v.push(vel.omega * drag);
        }

        let points = self.digit_points(world);
        let mut rows = self.build_contact_rows(world, &points, &inv_mass);
        let mut limit_rows = self.build_limit_rows(world);

        // ground friction budgets per object
        let g = self.config.gravity;
        let ground: Vec<(f64, f64)> = self
            .objects
            .iter()
            .zip(&self.mass)
            .map(|(o, mp)| {
                let f = o.ground_friction * mp.mass * g * dt;
                (f, f * mp.friction_radius)
            })
            .collect();
        let mut ground_linear = vec![Vec2::zeros(); self.objects.len()];
        let mut ground_angular = vec![0.0; self.objects.len()];

        for _ in 0..self.config.velocity_iterations {
            for (i, mp) in self.mass.iter().enumerate() {
                let base = self.object_dof(i);
                let (max_lin, max_ang) = ground[i];
                let lin = Vec2::new(v[base], v[base + 1]);
                let old = ground_linear[i];
                let mut acc = old - mp.mass * lin;
                let n = acc.norm();
                if n > max_lin {
                    acc *= max_lin / n;
                }
                ground_linear[i] = acc;
                let applied = acc - old;
                v[base] += applied.x / mp.mass;
                v[base + 1] += applied.y / mp.mass;

                let old = ground_angular[i];
                let acc = (old - mp.inertia * v[base + 2]).clamp(-max_ang, max_ang);
                ground_angular[i] = acc;
                v[base + 2] += (acc - old) / mp.inertia;
            }

            for lr in limit_rows.iter_mut() {
                let vel = lr.sign * v[lr.dof];
                let lambda = -(vel - lr.target) / (lr.sign * lr.sign * inv_mass[lr.dof]);
                let new = (lr.impulse + lambda).max(0.0);
                let applied = new - lr.impulse;
                lr.impulse = new;
                v[lr.dof] += inv_mass[lr.dof] * lr.sign * applied;
            }

            for c in rows.iter_mut() {
                // normal first so friction is clamped by the final normal impulse
                if c.normal_mass > 0.0 {
                    let vn = c.normal_row.dot(&v);
                    let target = if c.separation > 0.0 { -c.separation / dt } else { 0.0 };
                    let lambda = -(vn - target) * c.normal_mass;
                    let new = (c.normal_impulse + lambda).max(0.0);
                    let applied = new - c.normal_impulse;
                    c.normal_impulse = new;
                    c.normal_row.apply(&mut v, &inv_mass, applied);
                }
                if c.tangent_mass > 0.0 {
                    let vt = c.tangent_row.dot(&v);
                    let lambda = -vt * c.tangent_mass;
                    let max_f = c.friction * c.normal_impulse;
                    let new = (c.tangent_impulse + lambda).clamp(-max_f, max_f);
                    let applied = new - c.tangent_impulse;
                    c.tangent_impulse = new;
                    c.tangent_row.apply(&mut v, &inv_mass, applied);
                }
            }
        }

        // integrate: generalized displacement from the start configuration
        let mut disp: Vec<f64> = v.iter().map(|x| x * dt).collect();

        for _ in 0..self.config.position_iterations {
            for c in rows.iter() {
                if c.normal_mass <= 0.0 {
                    continue;
                }
                let sep = c.separation + c.normal_row.dot(&disp);
                let corr = (self.config.baumgarte * (sep + self.config.linear_slop)).clamp(-self.config.max_correction, 0.0);
                if corr < 0.0 {
                    let lambda = -corr * c.normal_mass;
                    c.normal_row.apply(&mut disp, &inv_mass, lambda);
                }
            }
        }

        // write back, enforcing hard joint limits
        for (j, joint) in self.hand.joints().enumerate() {
            let (lo, hi) = joint.angle_limits;
            let mut q = world.joint_angles[j] + disp[j];
            let mut qd = v[j];
            if q < lo {
                q = lo;
                qd = qd.max(0.0);
            } else if q > hi {
                q = hi;
                qd = qd.min(0.0);
            }
            world.joint_angles[j] = q;
            world.joint_velocities[j] = qd;
        }
        for i in 0..self.objects.len() {
            let base = self.object_dof(i);
            let p = world.object_poses[i];
            world.object_poses[i] = PlanarPose::new(p.x + disp[base], p.y + disp[base + 1], wrap_angle(p.theta + disp[base + 2]));
            world.object_velocities[i] = Velocity {
                vx: v[base],
                vy: v[base + 1],
                omega: v[base + 2],
            };
        }
        world.time += dt;

        let mut worst: Option<(f64, String)> = None;
        world.contacts = rows
            .iter()
            .map(|c| {
                let sep_after = c.separation + c.normal_row.dot(&disp);
                if -sep_after > 0.1 * c.min_dimension {
                    let depth = -sep_after;
                    if worst.as_ref().is_none_or(|(d, _)| depth > *d) {
                        worst = Some((depth, format!("{} / {}", c.bodies.0, c.bodies.1)));
                    }
                }
                ContactPoint {
                    position: [c.point.x, c.point.y],
                    normal: [c.normal.x, c.normal.y],
                    penetration_depth: (-c.separation).max(0.0),
                    bodies: c.bodies,
                    normal_impulse: c.normal_impulse,
                    tangent_impulse: c.tangent_impulse,
                    friction: c.friction,
                }
            })
            .collect();
        let finite = world
            .joint_angles
            .iter()
            .chain(world.joint_velocities.iter())
            .all(|x| x.is_finite())
            && world
                .object_poses
                .iter()
                .all(|p| p.x.is_finite() && p.y.is_finite() && p.theta.is_finite());
        if !finite {
            world.status = SimStatus::Invalid {
                reason: "non-finite state".into(),
            };
        } else if let Some((depth, pair)) = worst {
            world.status = SimStatus::Invalid {
                reason: format!("solver divergence: penetration {depth:.5} m between {pair}"),
            };
        }
        limit_rows.clear();
        Ok(())
    }

    fn build_contact_rows(&self, world: &WorldState, points: &[Vec<Vec2>], inv_mass: &[f64]) -> Vec<ContactRow> {
        self.detect_with(world, points)
            .into_iter()
            .map(|(c, friction, min_dimension)| {
                let tangent = perp(c.normal);
                let mut normal_row = SparseRow::new();
                let mut tangent_row = SparseRow::new();
                self.add_jacobian(&mut normal_row, c.bodies.0, c.point, c.normal, -1.0, world, points);
                self.add_jacobian(&mut normal_row, c.bodies.1, c.point, c.normal, 1.0, world, points);
                self.add_jacobian(&mut tangent_row, c.bodies.0, c.point, tangent, -1.0, world, points);
                self.add_jacobian(&mut tangent_row, c.bodies.1, c.point, tangent, 1.0, world, points);
                let kn = normal_row.effective_inverse_mass(inv_mass);
                let kt = tangent_row.effective_inverse_mass(inv_mass);
                ContactRow {
                    bodies: c.bodies,
                    point: c.point,
                    normal: c.normal,
                    separation: c.separation,
                    friction,
                    min_dimension,
                    normal_row,
                    tangent_row,
                    normal_mass: if kn > 0.0 { 1.0 / kn } else { 0.0 },
                    tangent_mass: if kt > 0.0 { 1.0 / kt } else { 0.0 },
                    normal_impulse: 0.0,
                    tangent_impulse: 0.0,
                }
            })
            .collect()
    }

    fn build_limit_rows(&self, world: &WorldState) -> Vec<LimitRow> {
        let dt = self.config.dt;
        let margin = 0.02;
        let mut rows = Vec::new();
        for (j, joint) in self.hand.joints().enumerate() {
            let q = world.joint_angles[j];
            let (lo, hi) = joint.angle_limits;
            if q - lo < margin {
                rows.push(LimitRow {
                    dof: j,
                    sign: 1.0,
                    target: -(q - lo).max(0.0) / dt,
                    impulse: 0.0,
                });
            }
            if hi - q < margin {
                rows.push(LimitRow {
                    dof: j,
                    sign: -1.0,
                    target: -(hi - q).max(0.0) / dt,
                    impulse: 0.0,
                });
            }
        }
        rows
    }

    pub fn kinetic_energy(&self, world: &WorldState) -> f64 {
        let hand: f64 = world
            .joint_velocities
            .iter()
            .zip(&self.joint_inertia)
            .map(|(qd, i)| 0.5 * i * qd * qd)
            .sum();
        let objects: f64 = world
            .object_velocities
            .iter()
            .zip(&self.mass)
            .map(|(v, mp)| 0.5 * mp.mass * (v.vx * v.vx + v.vy * v.vy) + 0.5 * mp.inertia * v.omega * v.omega)
            .sum();
        hand + objects
    }

    pub fn max_penetration(&self, world: &WorldState) -> f64 {
        self.detect(world).iter().map(|c| (-c.separation).max(0.0)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct LimitRow {
    dof: usize,
    sign: f64,
    target: f64,
    impulse: f64,
}

/// Functional form of [`Simulator::step`] for one-off use.
pub fn step(world: &WorldState, spec: &HandSpec, objects: &[ObjectSpec], dt: f64) -> Result<WorldState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let sim = Simulator::new(spec.clone(), objects.to_vec(), SimConfig::with_dt(dt))?;
    let mut next = world.clone();
    sim.step(&mut next)?;
    Ok(next)
}
