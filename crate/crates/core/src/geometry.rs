//! Planar poses, convex hulls with a rounding radius, and contact manifolds.
//!
//! Every collision shape in the world is a convex core (1, 2 or n vertices)
//! swept by a radius: discs are one vertex, finger links are capsules (two
//! vertices), palms and boxes are polygons with zero radius.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Below this separation the contact is treated as touching even if the
/// cores are slightly apart (vertex-vertex normals stay well defined).
pub const LINEAR_SLOP: f64 = 1.0e-4;

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Counter-clockwise perpendicular.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut t = (theta + PI).rem_euclid(two_pi) - PI;
    if t <= -PI {
        t += two_pi;
    }
    t
}

/// Pose of a rigid body in the palm plane. `theta` is kept in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a body-frame point into the world.
    pub fn transform(&self, local: Vec2) -> Vec2 {
        self.position() + rotate(local, self.theta)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

impl Default for PlanarPose {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// True if the CCW-or-CW vertex loop is strictly convex with ≥3 vertices.
pub fn is_convex(vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0;
    for i in 0..n {
        let a = Vec2::from(vertices[i]);
        let b = Vec2::from(vertices[(i + 1) % n]);
        let c = Vec2::from(vertices[(i + 2) % n]);
        let z = cross(b - a, c - b);
        if z.abs() < 1e-14 {
            return false;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    signed_area(vertices).abs() > 0.0
}

pub fn signed_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

/// Returns the vertices in counter-clockwise order.
pub fn ccw(vertices: &[[f64; 2]]) -> Vec<Vec2> {
    let mut v: Vec<Vec2> = vertices.iter().map(|p| Vec2::from(*p)).collect();
    if signed_area(vertices) < 0.0 {
        v.reverse();
    }
    v
}

/// Convex core plus rounding radius, in world coordinates.
#[derive(Debug, Clone)]
pub struct Hull {
    pub vertices: Vec<Vec2>,
    /// `normals[i]` is the outward normal of edge `vertices[i] -> vertices[i+1]`.
    pub normals: Vec<Vec2>,
    pub radius: f64,
}

impl Hull {
    pub fn disc(center: Vec2, radius: f64) -> Self {
        Self {
            vertices: vec![center],
            normals: Vec::new(),
            radius,
        }
    }

    pub fn capsule(a: Vec2, b: Vec2, radius: f64) -> Self {
        let e = (b - a).normalize();
        let n = Vec2::new(e.y, -e.x);
        Self {
            vertices: vec![a, b],
            normals: vec![n, -n],
            radius,
        }
    }

    /// `vertices` must be counter-clockwise and convex.
    pub fn polygon(vertices: Vec<Vec2>, radius: f64) -> Self {
        let n = vertices.len();
        let normals = (0..n)
            .map(|i| {
                let e = vertices[(i + 1) % n] - vertices[i];
                Vec2::new(e.y, -e.x).normalize()
            })
            .collect();
        Self { vertices, normals, radius }
    }

    pub fn aabb(&self) -> Aabb {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let r = Vec2::repeat(self.radius);
        Aabb { lo: lo - r, hi: hi + r }
    }

    fn len(&self) -> usize {
        self.vertices.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Aabb {
    pub fn overlaps(&self, other: &Aabb, margin: f64) -> bool {
        self.lo.x - margin <= other.hi.x
            && other.lo.x - margin <= self.hi.x
            && self.lo.y - margin <= other.hi.y
            && other.lo.y - margin <= self.hi.y
    }
}

/// One manifold point. `separation` is negative when penetrating.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldPoint {
    pub point: Vec2,
    pub separation: f64,
}

/// Contact manifold between A and B; `normal` points from A to B.
#[derive(Debug, Clone)]
pub struct Manifold {
    pub normal: Vec2,
    pub points: Vec<ManifoldPoint>,
}

impl Manifold {
    fn single(normal: Vec2, point: Vec2, separation: f64) -> Self {
        Self {
            normal,
            points: vec![ManifoldPoint { point, separation }],
        }
    }

    fn flipped(mut self) -> Self {
        self.normal = -self.normal;
        self
    }
}

/// Generates a manifold for any pair of hulls. Points with separation up to
/// `speculative` are kept.
pub fn collide(a: &Hull, b: &Hull, speculative: f64) -> Option<Manifold> {
    match (a.len(), b.len()) {
        (1, 1) => collide_discs(a, b, speculative),
        (_, 1) => collide_hull_disc(a, b, speculative),
        (1, _) => collide_hull_disc(b, a, speculative).map(Manifold::flipped),
        _ => collide_hulls(a, b, speculative),
    }
}

fn collide_discs(a: &Hull, b: &Hull, speculative: f64) -> Option<Manifold> {
    let ca = a.vertices[0];
    let cb = b.vertices[0];
    let d = cb - ca;
    let dist = d.norm();
    let sep = dist - a.radius - b.radius;
    if sep > speculative {
        return None;
    }
    let normal = if dist > f64::EPSILON { d / dist } else { Vec2::new(0.0, 1.0) };
    let pa = ca + a.radius * normal;
    let pb = cb - b.radius * normal;
    Some(Manifold::single(normal, 0.5 * (pa + pb), sep))
}

/// `hull` has ≥2 vertices, `disc` has one. Normal points from hull to disc.
fn collide_hull_disc(hull: &Hull, disc: &Hull, speculative: f64) -> Option<Manifold> {
    let c = disc.vertices[0];
    let total = hull.radius + disc.radius;
    let n = hull.len();
    let mut best = 0;
    let mut best_sep = f64::NEG_INFINITY;
    for i in 0..n {
        let s = hull.normals[i].dot(&(c - hull.vertices[i]));
        if s > best_sep {
            best_sep = s;
            best = i;
        }
    }
    if best_sep - total > speculative {
        return None;
    }
    let v1 = hull.vertices[best];
    let v2 = hull.vertices[(best + 1) % n];
    let u1 = (c - v1).dot(&(v2 - v1));
    let u2 = (c - v2).dot(&(v1 - v2));
    let (normal, surface, dist) = if u1 < 0.0 && best_sep > f64::EPSILON {
        let d = c - v1;
        let len = d.norm();
        (d / len, v1, len)
    } else if u2 < 0.0 && best_sep > f64::EPSILON {
        let d = c - v2;
        let len = d.norm();
        (d / len, v2, len)
    } else {
        let nrm = hull.normals[best];
        (nrm, c - best_sep * nrm, best_sep)
    };
    let sep = dist - total;
    if sep > speculative {
        return None;
    }
    let pa = surface + hull.radius * normal;
    let pb = c - disc.radius * normal;
    Some(Manifold::single(normal, 0.5 * (pa + pb), sep))
}

fn max_separation(h1: &Hull, h2: &Hull) -> (usize, f64) {
    let mut best = 0;
    let mut best_sep = f64::NEG_INFINITY;
    for i in 0..h1.len() {
        let n = h1.normals[i];
        let v = h1.vertices[i];
        let mut si = f64::INFINITY;
        for w in &h2.vertices {
            si = si.min(n.dot(&(w - v)));
        }
        if si > best_sep {
            best_sep = si;
            best = i;
        }
    }
    (best, best_sep)
}

struct SegmentDistance {
    f1: f64,
    f2: f64,
    p1: Vec2,
    p2: Vec2,
    dist_sq: f64,
}

fn segment_distance(p1: Vec2, q1: Vec2, p2: Vec2, q2: Vec2) -> SegmentDistance {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let dd1 = d1.dot(&d1);
    let dd2 = d2.dot(&d2);
    let rd1 = r.dot(&d1);
    let rd2 = r.dot(&d2);
    let eps = 1e-20;
    let (mut f1, mut f2);
    if dd1 < eps || dd2 < eps {
        if dd1 >= eps {
            f1 = (-rd1 / dd1).clamp(0.0, 1.0);
            f2 = 0.0;
        } else if dd2 >= eps {
            f1 = 0.0;
            f2 = (rd2 / dd2).clamp(0.0, 1.0);
        } else {
            f1 = 0.0;
            f2 = 0.0;
        }
    } else {
        let d12 = d1.dot(&d2);
        let denom = dd1 * dd2 - d12 * d12;
        f1 = 0.0;
        if denom != 0.0 {
            f1 = ((d12 * rd2 - rd1 * dd2) / denom).clamp(0.0, 1.0);
        }
        f2 = (d12 * f1 + rd2) / dd2;
        if f2 < 0.0 {
            f2 = 0.0;
            f1 = (-rd1 / dd1).clamp(0.0, 1.0);
        } else if f2 > 1.0 {
            f2 = 1.0;
            f1 = ((d12 - rd1) / dd1).clamp(0.0, 1.0);
        }
    }
    let c1 = p1 + f1 * d1;
    let c2 = p2 + f2 * d2;
    SegmentDistance {
        f1,
        f2,
        p1: c1,
        p2: c2,
        dist_sq: (c2 - c1).norm_squared(),
    }
}

/// Reference/incident edge clipping. Normal of the result points from
/// `poly1` to `poly2`.
fn clip_hulls(poly1: &Hull, poly2: &Hull, edge1: usize, edge2: usize, speculative: f64) -> Option<Manifold> {
    let n1 = poly1.len();
    let n2 = poly2.len();
    let v11 = poly1.vertices[edge1];
    let v12 = poly1.vertices[(edge1 + 1) % n1];
    let v21 = poly2.vertices[edge2];
    let v22 = poly2.vertices[(edge2 + 1) % n2];
    let normal = poly1.normals[edge1];
    let tangent = perp(normal);

    let lower1 = 0.0;
    let upper1 = (v12 - v11).dot(&tangent);
    // incident edge runs opposite to the reference edge
    let upper2 = (v21 - v11).dot(&tangent);
    let lower2 = (v22 - v11).dot(&tangent);
    let span = upper2 - lower2;

    let mut v_lower = if lower2 < lower1 && span > f64::EPSILON {
        v22 + ((lower1 - lower2) / span) * (v21 - v22)
    } else {
        v22
    };
    let mut v_upper = if upper2 > upper1 && span > f64::EPSILON {
        v22 + ((upper1 - lower2) / span) * (v21 - v22)
    } else {
        v21
    };

    let sep_lower = (v_lower - v11).dot(&normal);
    let sep_upper = (v_upper - v11).dot(&normal);
    let r1 = poly1.radius;
    let r2 = poly2.radius;
    v_lower += 0.5 * (r1 - r2 - sep_lower) * normal;
    v_upper += 0.5 * (r1 - r2 - sep_upper) * normal;
    let radius = r1 + r2;

    let mut points = Vec::with_capacity(2);
    for (p, s) in [(v_lower, sep_lower - radius), (v_upper, sep_upper - radius)] {
        if s <= speculative {
            points.push(ManifoldPoint { point: p, separation: s });
        }
    }
    if points.is_empty() {
        None
    } else {
        Some(Manifold { normal, points })
    }
}

/// Both hulls have ≥2 vertices.
fn collide_hulls(a: &Hull, b: &Hull, speculative: f64) -> Option<Manifold> {
    let radius = a.radius + b.radius;
    let (edge_a, sep_a) = max_separation(a, b);
    let (edge_b, sep_b) = max_separation(b, a);
    if sep_a > speculative + radius || sep_b > speculative + radius {
        return None;
    }
    let flip = sep_b > sep_a + 0.1 * LINEAR_SLOP;
    let (poly1, poly2, edge1, separation) = if flip { (b, a, edge_b, sep_b) } else { (a, b, edge_a, sep_a) };

    let n1 = poly1.normals[edge1];
    let mut edge2 = 0;
    let mut min_dot = f64::INFINITY;
    for (j, n) in poly2.normals.iter().enumerate() {
        let d = n1.dot(n);
        if d < min_dot {
            min_dot = d;
            edge2 = j;
        }
    }

    let result = if separation > 0.1 * LINEAR_SLOP {
        let v11 = poly1.vertices[edge1];
        let v12 = poly1.vertices[(edge1 + 1) % poly1.len()];
        let v21 = poly2.vertices[edge2];
        let v22 = poly2.vertices[(edge2 + 1) % poly2.len()];
        let sd = segment_distance(v11, v12, v21, v22);
        let at_vertex = (sd.f1 == 0.0 || sd.f1 == 1.0) && (sd.f2 == 0.0 || sd.f2 == 1.0);
        if at_vertex {
            let dist = sd.dist_sq.sqrt();
            if dist - radius > speculative || dist <= f64::EPSILON {
                if dist <= f64::EPSILON {
                    clip_hulls(poly1, poly2, edge1, edge2, speculative)
                } else {
                    None
                }
            } else {
                let normal = (sd.p2 - sd.p1) / dist;
                let pa = sd.p1 + poly1.radius * normal;
                let pb = sd.p2 - poly2.radius * normal;
                Some(Manifold::single(normal, 0.5 * (pa + pb), dist - radius))
            }
        } else {
            clip_hulls(poly1, poly2, edge1, edge2, speculative)
        }
    } else {
        clip_hulls(poly1, poly2, edge1, edge2, speculative)
    };

    if flip {
        result.map(Manifold::flipped)
    } else {
        result
    }
}

/// Area, centroid-relative polar moment per unit mass, and mean distance of
/// the area from its centroid (for uniform-pressure ground friction).
pub fn polygon_mass_properties(vertices: &[[f64; 2]]) -> (f64, Vec2, f64) {
    let v = ccw(vertices);
    let n = v.len();
    let mut area = 0.0;
    let mut centroid = Vec2::zeros();
    for i in 0..n {
        let p = v[i];
        let q = v[(i + 1) % n];
        let c = cross(p, q);
        area += 0.5 * c;
        centroid += (c / 6.0) * (p + q);
    }
    centroid /= area;
    // second moment about centroid, per unit area
    let mut j = 0.0;
    for i in 0..n {
        let p = v[i] - centroid;
        let q = v[(i + 1) % n] - centroid;
        let c = cross(p, q);
        j += c * (p.dot(&p) + p.dot(&q) + q.dot(&q)) / 12.0;
    }
    (area, centroid, j / area)
}

/// Mean |r| over a convex polygon measured from `center`, by midpoint
/// quadrature on a fixed grid.
pub fn polygon_mean_radius(vertices: &[[f64; 2]], center: Vec2) -> f64 {
    let v = ccw(vertices);
    let hull = Hull::polygon(v, 0.0);
    let bb = hull.aabb();
    const N: usize = 96;
    let dx = (bb.hi.x - bb.lo.x) / N as f64;
    let dy = (bb.hi.y - bb.lo.y) / N as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..N {
        for k in 0..N {
            let p = Vec2::new(bb.lo.x + (i as f64 + 0.5) * dx, bb.lo.y + (k as f64 + 0.5) * dy);
            let inside = (0..hull.vertices.len()).all(|e| hull.normals[e].dot(&(p - hull.vertices[e])) <= 0.0);
            if inside {
                sum += (p - center).norm();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
