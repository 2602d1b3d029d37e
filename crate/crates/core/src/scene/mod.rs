//! Labeled workspace model shared by the robot and every operator: primitive
//! objects over a heightfield seafloor, versioned by a revision counter.
//!
//! A [`SceneGraph`] is an immutable snapshot. Mutators return a new graph
//! with `revision + 1`, so readers may hold on to older snapshots freely.

mod delta;
mod geometry;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Pose;

pub use delta::{apply_delta, encode_delta, SceneDelta, TerrainGrid, TerrainPatch, WireObject, WireShape};
pub use geometry::{HitTarget, RayHit, RAY_DIRECTION_TOLERANCE};

pub type ObjectId = u32;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid object {id}: {reason}")]
    InvalidObject { id: ObjectId, reason: String },
    #[error("invalid terrain: {0}")]
    InvalidTerrain(String),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("ray direction must be unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("point ({x}, {y}) is outside the terrain")]
    OutOfBounds { x: f64, y: f64 },
    #[error("delta expects revision {expected} but graph is at {actual}")]
    RevisionMismatch { expected: u64, actual: u64 },
    #[error("malformed delta: {0}")]
    MalformedDelta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { size: [f64; 3] },
    /// Axis along the object's local z, centered on the pose.
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    fn validate(&self) -> Result<(), SceneError> {
        let dims: Vec<f64> = match *self {
            Shape::Sphere { radius } => vec![radius],
            Shape::Box { size } => size.to_vec(),
            Shape::Cylinder { radius, height } => vec![radius, height],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(SceneError::InvalidShape(format!("{self:?} needs positive finite dimensions")))
        }
    }

    /// Half of the vertical extent for an upright pose.
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { size } => size[2] / 2.0,
            Shape::Cylinder { height, .. } => height / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub label: String,
    pub pose: Pose,
    pub shape: Shape,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl SceneObject {
    pub fn new(id: ObjectId, label: &str, pose: Pose, shape: Shape) -> Self {
        Self { id, label: label.to_string(), pose, shape, confidence: 1.0 }
    }

    fn validate(&self) -> Result<(), SceneError> {
        self.shape.validate()?;
        let bad = |reason: &str| Err(SceneError::InvalidObject { id: self.id, reason: reason.to_string() });
        if !(0.0..=1.0).contains(&self.confidence) {
            return bad("confidence must lie in [0, 1]");
        }
        if self.label.trim().is_empty() || self.label.len() > 255 {
            return bad("label must be 1..=255 bytes");
        }
        if self.pose.position.iter().any(|v| !v.is_finite()) {
            return bad("non-finite position");
        }
        Ok(())
    }

    pub fn position(&self) -> Vector3<f64> {
        self.pose.position
    }
}

pub fn fold_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeightfieldSpec {
    origin: [f64; 2],
    cell_size: f64,
    grid: Vec<Vec<f64>>,
}

/// Elevation samples on a regular grid. `grid[r][c]` sits at
/// `(origin.x + c * cell_size, origin.y + r * cell_size)`; elevations between
/// samples are bilinear. A dimension with a single sample spans one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HeightfieldSpec", into = "HeightfieldSpec")]
pub struct Heightfield {
    origin: [f64; 2],
    cell_size: f64,
    rows: usize,
    cols: usize,
    elevations: Vec<f64>,
}

impl TryFrom<HeightfieldSpec> for Heightfield {
    type Error = SceneError;
    fn try_from(spec: HeightfieldSpec) -> Result<Self, SceneError> {
        let rows = spec.grid.len();
        let cols = spec.grid.first().map_or(0, Vec::len);
        if spec.grid.iter().any(|r| r.len() != cols) {
            return Err(SceneError::InvalidTerrain("ragged grid".into()));
        }
        Heightfield::new(spec.origin, spec.cell_size, rows, cols, spec.grid.concat())
    }
}

impl From<Heightfield> for HeightfieldSpec {
    fn from(h: Heightfield) -> Self {
        HeightfieldSpec {
            origin: h.origin,
            cell_size: h.cell_size,
            grid: h.elevations.chunks(h.cols).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl Heightfield {
    pub fn new(origin: [f64; 2], cell_size: f64, rows: usize, cols: usize, elevations: Vec<f64>) -> Result<Self, SceneError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(SceneError::InvalidTerrain("cell_size must be positive".into()));
        }
        if rows == 0 || cols == 0 || elevations.len() != rows * cols {
            return Err(SceneError::InvalidTerrain("grid must be non-empty and rectangular".into()));
        }
        if rows > u16::MAX as usize || cols > u16::MAX as usize {
            return Err(SceneError::InvalidTerrain("grid too large".into()));
        }
        if elevations.iter().chain(origin.iter()).any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidTerrain("non-finite elevation".into()));
        }
        Ok(Self { origin, cell_size, rows, cols, elevations })
    }

    pub fn flat(origin: [f64; 2], cell_size: f64, rows: usize, cols: usize, z: f64) -> Self {
        Self::new(origin, cell_size, rows, cols, vec![z; rows * cols]).expect("flat terrain parameters are valid")
    }

    /// Planar terrain `z = z0 + gx * (x - origin.x) + gy * (y - origin.y)`.
    pub fn plane(origin: [f64; 2], cell_size: f64, rows: usize, cols: usize, z0: f64, gx: f64, gy: f64) -> Self {
        let elevations = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| z0 + gx * c as f64 * cell_size + gy * r as f64 * cell_size))
            .collect();
        Self::new(origin, cell_size, rows, cols, elevations).expect("plane parameters are valid")
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }
    pub fn sample(&self, row: usize, col: usize) -> f64 {
        self.elevations[row * self.cols + col]
    }

    fn span(n: usize) -> f64 {
        (n.max(2) - 1) as f64
    }

    /// `(x_min, x_max, y_min, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let [ox, oy] = self.origin;
        (ox, ox + Self::span(self.cols) * self.cell_size, oy, oy + Self::span(self.rows) * self.cell_size)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1, y0, y1) = self.bounds();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    pub fn elevation_range(&self) -> (f64, f64) {
        self.elevations.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)))
    }

    /// Cell corner indices and local coordinates for a point in bounds.
    fn locate(&self, x: f64, y: f64) -> (usize, usize, usize, usize, f64, f64) {
        let axis = |v: f64, o: f64, n: usize| {
            let f = ((v - o) / self.cell_size).clamp(0.0, Self::span(n));
            let i0 = (f.floor() as usize).min(n.saturating_sub(2));
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, f - i0 as f64)
        };
        let (c0, c1, u) = axis(x, self.origin[0], self.cols);
        let (r0, r1, v) = axis(y, self.origin[1], self.rows);
        (r0, r1, c0, c1, u, v)
    }

    fn height_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (r0, r1, c0, c1, u, v) = self.locate(x, y);
        let h00 = self.sample(r0, c0);
        let h10 = self.sample(r0, c1);
        let h01 = self.sample(r1, c0);
        let h11 = self.sample(r1, c1);
        let h = (1.0 - u) * (1.0 - v) * h00 + u * (1.0 - v) * h10 + (1.0 - u) * v * h01 + u * v * h11;
        let du = if c1 == c0 { 0.0 } else { (1.0 - v) * (h10 - h00) + v * (h11 - h01) };
        let dv = if r1 == r0 { 0.0 } else { (1.0 - u) * (h01 - h00) + u * (h11 - h10) };
        (h, du / self.cell_size, dv / self.cell_size)
    }

    /// The same surface moved rigidly by `d`.
    pub fn translated(&self, d: &Vector3<f64>) -> Heightfield {
        Heightfield {
            origin: [self.origin[0] + d.x, self.origin[1] + d.y],
            elevations: self.elevations.iter().map(|z| z + d.z).collect(),
            ..self.clone()
        }
    }

    pub fn height_at(&self, x: f64, y: f64) -> Result<f64, SceneError> {
        if !self.contains(x, y) {
            return Err(SceneError::OutOfBounds { x, y });
        }
        Ok(self.height_and_gradient(x, y).0)
    }

    pub fn surface_normal(&self, x: f64, y: f64) -> Result<Vector3<f64>, SceneError> {
        if !self.contains(x, y) {
            return Err(SceneError::OutOfBounds { x, y });
        }
        let (_, gx, gy) = self.height_and_gradient(x, y);
        Ok(Vector3::new(-gx, -gy, 1.0).normalize())
    }

    /// Signed vertical gap scaled by the local slope; exact for planar patches.
    /// `None` outside the grid.
    pub fn clearance(&self, p: &Vector3<f64>) -> Option<f64> {
        if !self.contains(p.x, p.y) {
            return None;
        }
        let (h, gx, gy) = self.height_and_gradient(p.x, p.y);
        Some((p.z - h) / (1.0 + gx * gx + gy * gy).sqrt())
    }

    fn set_sample(&mut self, row: usize, col: usize, z: f64) {
        self.elevations[row * self.cols + col] = z;
    }
}

pub fn surface_normal(terrain: &Heightfield, x: f64, y: f64) -> Result<Vector3<f64>, SceneError> {
    terrain.surface_normal(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    objects: BTreeMap<ObjectId, SceneObject>,
    terrain: Heightfield,
    revision: u64,
}

/// JSON layout of a scene fixture file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFixture {
    pub terrain: Heightfield,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

impl SceneFixture {
    /// Builds the graph by inserting objects in file order.
    pub fn build(&self) -> Result<SceneGraph, SceneError> {
        let mut seen = std::collections::BTreeSet::new();
        let mut graph = SceneGraph::new(self.terrain.clone());
        for obj in &self.objects {
            if !seen.insert(obj.id) {
                return Err(SceneError::InvalidObject { id: obj.id, reason: "duplicate id".into() });
            }
            graph = graph.upsert_object(obj.clone())?;
        }
        Ok(graph)
    }
}

impl SceneGraph {
    pub fn new(terrain: Heightfield) -> Self {
        Self { objects: BTreeMap::new(), terrain, revision: 0 }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn terrain(&self) -> &Heightfield {
        &self.terrain
    }

    pub fn objects(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.values()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.get(&id)
    }

    /// Objects whose case-folded label equals the case-folded query.
    /// Every object and the terrain moved rigidly by `d`; revision unchanged.
    pub fn translated(&self, d: &Vector3<f64>) -> SceneGraph {
        let mut out = self.clone();
        for o in out.objects.values_mut() {
            o.pose.position += d;
        }
        out.terrain = self.terrain.translated(d);
        out
    }

    pub fn find_by_label(&self, label: &str) -> Vec<&SceneObject> {
        let wanted = fold_label(label);
        self.objects.values().filter(|o| o.label == wanted).collect()
    }

    pub fn upsert_object(&self, mut object: SceneObject) -> Result<SceneGraph, SceneError> {
        object.label = fold_label(&object.label);
        object.validate()?;
        let mut next = self.clone();
        next.objects.insert(object.id, object);
        next.revision += 1;
        Ok(next)
    }

    pub fn remove_object(&self, id: ObjectId) -> Result<SceneGraph, SceneError> {
        if !self.objects.contains_key(&id) {
            return Err(SceneError::UnknownObject(id));
        }
        let mut next = self.clone();
        next.objects.remove(&id);
        next.revision += 1;
        Ok(next)
    }

    /// Overwrites a rectangular block of terrain samples.
    pub fn patch_terrain(&self, row0: usize, col0: usize, rows: usize, cols: usize, values: &[f64]) -> Result<SceneGraph, SceneError> {
        if rows == 0 || cols == 0 || row0 + rows > self.terrain.rows || col0 + cols > self.terrain.cols || values.len() != rows * cols {
            return Err(SceneError::InvalidTerrain("patch outside grid or wrong size".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidTerrain("non-finite elevation".into()));
        }
        let mut next = self.clone();
        for r in 0..rows {
            for c in 0..cols {
                next.terrain.set_sample(row0 + r, col0 + c, values[r * cols + c]);
            }
        }
        next.revision += 1;
        Ok(next)
    }

    pub fn raycast(&self, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Result<Option<RayHit>, SceneError> {
        geometry::raycast(self, origin, direction)
    }

    /// Signed distance from a point to the nearest object surface (negative inside).
    pub fn object_distance(&self, p: &Vector3<f64>) -> Option<(ObjectId, f64)> {
        self.objects
            .values()
            .map(|o| (o.id, geometry::signed_distance(o, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub(crate) fn objects_mut_unchecked(&mut self) -> &mut BTreeMap<ObjectId, SceneObject> {
        &mut self.objects
    }

    pub(crate) fn terrain_mut_unchecked(&mut self) -> &mut Heightfield {
        &mut self.terrain
    }

    pub(crate) fn set_revision(&mut self, revision: u64) {
        self.revision = revision;
    }
}

pub fn upsert_object(graph: &SceneGraph, object: SceneObject) -> Result<SceneGraph, SceneError> {
    graph.upsert_object(object)
}

pub fn raycast(graph: &SceneGraph, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Result<Option<RayHit>, SceneError> {
    graph.raycast(origin, direction)
}

pub use geometry::signed_distance;
