//! Cube orientations as the 24-element rotation group, skill effects acting
//! on them, and breadth-first program synthesis over the resulting graph.
//!
//! World frame: z is the palm normal, x the finger axis. A state records which
//! labelled face points up (+z) and which points north (+y).

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix3i = [[i8; 3]; 3];

const IDENTITY: Matrix3i = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Face {
    F,
    A,
    B,
    C,
    D,
    E,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::F, Face::A, Face::B, Face::C, Face::D, Face::E];

    /// Outward normal of the face in the cube's body frame.
    fn normal(self) -> [i8; 3] {
        match self {
            Face::F => [0, 0, 1],
            Face::A => [0, 1, 0],
            Face::B => [1, 0, 0],
            Face::C => [0, -1, 0],
            Face::D => [-1, 0, 0],
            Face::E => [0, 0, -1],
        }
    }

    fn from_normal(n: [i8; 3]) -> Face {
        Face::ALL.into_iter().find(|f| f.normal() == n).expect("signed unit vector")
    }

    pub fn parse(c: char) -> Result<Face> {
        match c {
            'F' => Ok(Face::F),
            'A' => Ok(Face::A),
            'B' => Ok(Face::B),
            'C' => Ok(Face::C),
            'D' => Ok(Face::D),
            'E' => Ok(Face::E),
            other => Err(Error::InvalidArgument(format!("unknown face label `{other}`"))),
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Parses a face string such as `"FABCDE"`.
pub fn parse_faces(s: &str) -> Result<Vec<Face>> {
    s.chars().map(Face::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CubeState {
    pub face_up: Face,
    pub face_north: Face,
}

impl CubeState {
    pub fn new(face_up: Face, face_north: Face) -> Result<Self> {
        let (u, n) = (face_up.normal(), face_north.normal());
        if dot(u, n) != 0 {
            return Err(Error::InvalidArgument(format!("faces {face_up} and {face_north} are not adjacent")));
        }
        Ok(Self { face_up, face_north })
    }

    /// F up, A north.
    pub fn home() -> Self {
        Self {
            face_up: Face::F,
            face_north: Face::A,
        }
    }

    /// All 24 states, in label order.
    pub fn all() -> Vec<CubeState> {
        let mut v = Vec::with_capacity(24);
        for up in Face::ALL {
            for north in Face::ALL {
                if let Ok(s) = CubeState::new(up, north) {
                    v.push(s);
                }
            }
        }
        v
    }

    /// Body-to-world rotation of this orientation; row i is the body vector
    /// that lands on world axis i.
    pub fn matrix(&self) -> Matrix3i {
        let u = self.face_up.normal();
        let n = self.face_north.normal();
        let e = cross(n, u);
        // rows are the body vectors that map to world x, y, z
        [e, n, u]
    }

    fn from_matrix(m: &Matrix3i) -> CubeState {
        CubeState {
            face_up: Face::from_normal(m[2]),
            face_north: Face::from_normal(m[1]),
        }
    }
}

/// Two face letters, up then north: `"FA"` is [`CubeState::home`].
impl std::str::FromStr for CubeState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match parse_faces(s)?.as_slice() {
            [up, north] => CubeState::new(*up, *north),
            _ => Err(Error::InvalidArgument(format!("cube state `{s}` needs two face letters"))),
        }
    }
}

impl fmt::Display for CubeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.face_up, self.face_north)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A proper rotation of the cube, stored as a signed permutation matrix acting
/// on world vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubeRotation {
    m: Matrix3i,
}

impl CubeRotation {
    pub fn identity() -> Self {
        Self { m: IDENTITY }
    }

    /// Right-handed quarter turns about a world axis; negative counts turn clockwise.
    pub fn about(axis: Axis, quarter_turns: i32) -> Self {
        let q = quarter_turns.rem_euclid(4);
        let base = match axis {
            Axis::X => [[1, 0, 0], [0, 0, -1], [0, 1, 0]],
            Axis::Y => [[0, 0, 1], [0, 1, 0], [-1, 0, 0]],
            Axis::Z => [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
        };
        let mut m = IDENTITY;
        for _ in 0..q {
            m = mul(&base, &m);
        }
        Self { m }
    }

    pub fn from_matrix(m: Matrix3i) -> Result<Self> {
        let signed_perm = (0..3).all(|i| {
            (0..3).filter(|&j| m[i][j] != 0).count() == 1
                && (0..3).filter(|&j| m[j][i] != 0).count() == 1
                && m[i].iter().all(|v| (-1..=1).contains(v))
        });
        if !signed_perm || det(&m) != 1 {
            return Err(Error::validation(
                "symbolic_effect.matrix",
                "must be a signed permutation matrix with determinant +1",
            ));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> Matrix3i {
        self.m
    }

    pub fn is_identity(&self) -> bool {
        self.m == IDENTITY
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &CubeRotation) -> CubeRotation {
        CubeRotation { m: mul(&next.m, &self.m) }
    }

    pub fn inverse(&self) -> CubeRotation {
        let mut t = [[0; 3]; 3];
        for (i, row) in self.m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                t[j][i] = *v;
            }
        }
        CubeRotation { m: t }
    }

    /// Product of effects applied left to right.
    pub fn product<'a>(effects: impl IntoIterator<Item = &'a CubeRotation>) -> CubeRotation {
        effects.into_iter().fold(CubeRotation::identity(), |acc, r| acc.then(r))
    }

    /// Axis and quarter-turn count when this is a turn about a single world axis.
    pub fn as_axis_turn(&self) -> Option<(Axis, i32)> {
        if self.is_identity() {
            return Some((Axis::Z, 0));
        }
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for q in 1..4 {
                if CubeRotation::about(axis, q) == *self {
                    return Some((axis, q));
                }
            }
        }
        None
    }

    /// Rotation angle about the world z axis, if this is a z turn.
    pub fn planar_angle(&self) -> Option<f64> {
        match self.as_axis_turn() {
            Some((Axis::Z, q)) => {
                let q = if q == 3 { -1 } else { q };
                Some(q as f64 * std::f64::consts::FRAC_PI_2)
            }
            _ => None,
        }
    }
}

impl Default for CubeRotation {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RotationDoc {
    Turn { axis: Axis, quarter_turns: i32 },
    Matrix { matrix: Matrix3i },
}

impl Serialize for CubeRotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = match self.as_axis_turn() {
            Some((axis, quarter_turns)) => RotationDoc::Turn { axis, quarter_turns },
            None => RotationDoc::Matrix { matrix: self.m },
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CubeRotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RotationDoc::deserialize(d)? {
            RotationDoc::Turn { axis, quarter_turns } => Ok(CubeRotation::about(axis, quarter_turns)),
            RotationDoc::Matrix { matrix } => CubeRotation::from_matrix(matrix).map_err(serde::de::Error::custom),
        }
    }
}

pub fn apply_effect(state: CubeState, r: &CubeRotation) -> CubeState {
    CubeState::from_matrix(&mul(&r.m, &state.matrix()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: CubeState,
    pub skill: String,
    pub to: CubeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelGraph {
    pub nodes: Vec<CubeState>,
    pub edges: Vec<Edge>,
    /// Sorted by name.
    pub skills: Vec<(String, CubeRotation)>,
}

pub fn build_funnel_graph(skills: &[(String, CubeRotation)]) -> Result<FunnelGraph> {
    if skills.is_empty() {
        return Err(Error::InvalidArgument("skill list is empty".into()));
    }
    let mut sorted = skills.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::InvalidArgument(format!("duplicate skill name `{}`", w[0].0)));
        }
    }
    let nodes = CubeState::all();
    let mut edges = Vec::with_capacity(nodes.len() * sorted.len());
    for &s in &nodes {
        for (name, r) in &sorted {
            edges.push(Edge {
                from: s,
                skill: name.clone(),
                to: apply_effect(s, r),
            });
        }
    }
    Ok(FunnelGraph {
        nodes,
        edges,
        skills: sorted,
    })
}

impl FunnelGraph {
    fn index(&self, s: CubeState) -> usize {
        self.nodes.iter().position(|n| *n == s).expect("valid state")
    }

    pub fn effect(&self, name: &str) -> Option<&CubeRotation> {
        self.skills.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    /// Hop distance from every state to `goal`.
    pub fn distances_to(&self, goal: CubeState) -> Vec<Option<usize>> {
        let n = self.nodes.len();
        let s = self.skills.len();
        let mut dist = vec![None; n];
        let g = self.index(goal);
        dist[g] = Some(0);
        let mut queue = VecDeque::from([g]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            // predecessors of v: edges u --k--> v
            for (i, e) in self.edges.iter().enumerate() {
                if self.index(e.to) == v {
                    let u = i / s;
                    if dist[u].is_none() {
                        dist[u] = Some(d + 1);
                        queue.push_back(u);
                    }
                }
            }
        }
        dist
    }

    /// Breadth-first plan from `start` to `goal`.
    pub fn plan(&self, start: CubeState, goal: CubeState) -> Result<Vec<String>> {
        let dist = self.distances_to(goal);
        let s = self.skills.len();
        let mut cur = self.index(start);
        let Some(mut d) = dist[cur] else {
            return Err(Error::Unreachable(format!("{goal} from {start}")));
        };
        let mut plan = Vec::with_capacity(d);
        // skills are sorted, so the first shortest-path step found is the
        // lexicographically smallest
        while d > 0 {
            let (k, next) = (0..s)
                .map(|k| (k, self.index(self.edges[cur * s + k].to)))
                .find(|&(_, nx)| dist[nx] == Some(d - 1))
                .expect("distance field is consistent");
            plan.push(self.skills[k].0.clone());
            cur = next;
            d -= 1;
        }
        Ok(plan)
    }

    /// Replays a program, returning the visited states including `start`.
    pub fn replay(&self, start: CubeState, plan: &[String]) -> Result<Vec<CubeState>> {
        let mut states = vec![start];
        let mut cur = start;
        for name in plan {
            let r = self
                .effect(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown skill `{name}`")))?;
            cur = apply_effect(cur, r);
            states.push(cur);
        }
        Ok(states)
    }
}

pub fn plan_program(graph: &FunnelGraph, start: CubeState, goal: CubeState) -> Result<Vec<String>> {
    graph.plan(start, goal)
}

/// Plan that brings each face up in turn and finally returns the first face up.
///
/// Each leg plans to the closest state with the wanted face up, ties broken
/// by the leg's own lexicographic order.
pub fn plan_face_cycle(graph: &FunnelGraph, start: CubeState, faces: &[Face]) -> Result<Vec<String>> {
    if faces.is_empty() {
        return Err(Error::InvalidArgument("face list is empty".into()));
    }
    for (i, f) in faces.iter().enumerate() {
        if faces[..i].contains(f) {
            return Err(Error::InvalidArgument(format!("face {f} repeated")));
        }
    }
    let mut targets: Vec<Face> = faces.to_vec();
    if faces.len() > 1 {
        targets.push(faces[0]);
    }
    let mut plan = Vec::new();
    let mut cur = start;
    for f in targets {
        let mut best: Option<(Vec<String>, CubeState)> = None;
        for goal in graph.nodes.iter().filter(|s| s.face_up == f) {
            match graph.plan(cur, *goal) {
                Ok(p) => {
                    let better = match &best {
                        None => true,
                        Some((b, _)) => p.len() < b.len() || (p.len() == b.len() && p < *b),
                    };
                    if better {
                        best = Some((p, *goal));
                    }
                }
                Err(Error::Unreachable(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let (p, goal) = best.ok_or_else(|| Error::Unreachable(format!("face {f} up from {cur}")))?;
        plan.extend(p);
        cur = goal;
    }
    Ok(plan)
}

/// A program together with the states it passes through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub skills: Vec<String>,
    pub states: Vec<CubeState>,
}

impl Plan {
    pub fn new(graph: &FunnelGraph, start: CubeState, skills: Vec<String>) -> Result<Self> {
        let states = graph.replay(start, &skills)?;
        Ok(Self { skills, states })
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

fn dot(a: [i8; 3], b: [i8; 3]) -> i8 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [i8; 3], b: [i8; 3]) -> [i8; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn mul(a: &Matrix3i, b: &Matrix3i) -> Matrix3i {
    let mut c = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn det(m: &Matrix3i) -> i8 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}
