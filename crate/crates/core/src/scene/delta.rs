//! Quantized scene deltas and their binary layout.
//!
//! All integers are big-endian. Positions and elevations travel as signed
//! millimeters; orientations use smallest-three encoding with 12 bits per
//! component (2-bit index of the dropped component, then three 12-bit
//! fields, packed into the low 38 bits of a 5-byte field).
//!
//! ```text
//! u8   kind            0 = incremental, 1 = full snapshot
//! u64  base_revision
//! u64  new_revision
//! [full only] f64 origin_x, f64 origin_y, f64 cell_size, u16 rows, u16 cols,
//!             rows*cols x i32 elevation_mm (row-major)
//! u16  changed_count, then objects:
//!        u32 id, u8 label_len, label (utf-8), i32 x_mm, i32 y_mm, i32 z_mm,
//!        5 bytes orientation, u8 shape (0 sphere r | 1 box dx dy dz | 2 cylinder r h),
//!        f32 per dimension, u16 confidence (x 65535)
//! u16  removed_count, then u32 ids
//! u16  patch_count, then patches:
//!        u16 row0, u16 col0, u16 rows, u16 cols, rows*cols x i32 elevation_mm
//! ```

use std::collections::BTreeMap;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{Heightfield, ObjectId, SceneError, SceneGraph, SceneObject, Shape};
use crate::kinematics::Pose;
use crate::wire::{Reader, Truncated, Writer};

const QUAT_BITS: u32 = 12;
const QUAT_MAX: f64 = ((1 << QUAT_BITS) - 1) as f64;
const QUAT_RANGE: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn to_mm(v: f64) -> i32 {
    (v * 1000.0).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

fn from_mm(v: i32) -> f64 {
    v as f64 / 1000.0
}

/// Smallest-three packing of a unit quaternion into 38 bits.
pub fn pack_quaternion(q: &UnitQuaternion<f64>) -> u64 {
    let c = q.quaternion().coords; // [i, j, k, w]
    let comps = [c[3], c[0], c[1], c[2]];
    let (largest, _) = comps
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let sign = if comps[largest] < 0.0 { -1.0 } else { 1.0 };
    let mut packed = largest as u64;
    for (i, v) in comps.iter().enumerate() {
        if i == largest {
            continue;
        }
        let u = ((sign * v + QUAT_RANGE) / (2.0 * QUAT_RANGE) * QUAT_MAX).round().clamp(0.0, QUAT_MAX) as u64;
        packed = (packed << QUAT_BITS) | u;
    }
    packed
}

pub fn unpack_quaternion(packed: u64) -> UnitQuaternion<f64> {
    let largest = ((packed >> (3 * QUAT_BITS)) & 0b11) as usize;
    let mask = (1u64 << QUAT_BITS) - 1;
    let mut small = [0.0; 3];
    for (k, slot) in small.iter_mut().enumerate() {
        let shift = (2 - k) as u32 * QUAT_BITS;
        let u = ((packed >> shift) & mask) as f64;
        *slot = u / QUAT_MAX * 2.0 * QUAT_RANGE - QUAT_RANGE;
    }
    let rest: f64 = small.iter().map(|v| v * v).sum();
    let mut comps = [0.0; 4];
    let mut it = small.iter();
    for (i, slot) in comps.iter_mut().enumerate() {
        *slot = if i == largest { (1.0 - rest).max(0.0).sqrt() } else { *it.next().expect("three small components") };
    }
    UnitQuaternion::from_quaternion(Quaternion::new(comps[0], comps[1], comps[2], comps[3]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WireShape {
    Sphere(f32),
    Box([f32; 3]),
    Cylinder(f32, f32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObject {
    pub id: ObjectId,
    pub label: String,
    pub position_mm: [i32; 3],
    pub orientation: u64,
    pub shape: WireShape,
    pub confidence: u16,
}

impl WireObject {
    pub fn quantize(o: &SceneObject) -> Self {
        let p = o.pose.position;
        let shape = match o.shape {
            Shape::Sphere { radius } => WireShape::Sphere(radius as f32),
            Shape::Box { size } => WireShape::Box(size.map(|v| v as f32)),
            Shape::Cylinder { radius, height } => WireShape::Cylinder(radius as f32, height as f32),
        };
        Self {
            id: o.id,
            label: o.label.clone(),
            position_mm: [to_mm(p.x), to_mm(p.y), to_mm(p.z)],
            orientation: pack_quaternion(&o.pose.orientation),
            shape,
            confidence: (o.confidence.clamp(0.0, 1.0) * 65535.0).round() as u16,
        }
    }

    pub fn to_object(&self) -> SceneObject {
        let [x, y, z] = self.position_mm.map(from_mm);
        let shape = match self.shape {
            WireShape::Sphere(r) => Shape::Sphere { radius: r as f64 },
            WireShape::Box(s) => Shape::Box { size: s.map(f64::from) },
            WireShape::Cylinder(r, h) => Shape::Cylinder { radius: r as f64, height: h as f64 },
        };
        SceneObject {
            id: self.id,
            label: self.label.clone(),
            pose: Pose::new(Vector3::new(x, y, z), unpack_quaternion(self.orientation)),
            shape,
            confidence: self.confidence as f64 / 65535.0,
        }
    }

    fn write(&self, w: &mut Writer) {
        let label = self.label.as_bytes();
        w.u32(self.id).u8(label.len().min(255) as u8).bytes(&label[..label.len().min(255)]);
        for v in self.position_mm {
            w.i32(v);
        }
        w.bytes(&self.orientation.to_be_bytes()[3..]);
        match self.shape {
            WireShape::Sphere(r) => w.u8(0).f32(r),
            WireShape::Box(s) => w.u8(1).f32(s[0]).f32(s[1]).f32(s[2]),
            WireShape::Cylinder(r, h) => w.u8(2).f32(r).f32(h),
        };
        w.u16(self.confidence);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, SceneError> {
        let id = r.u32()?;
        let n = r.u8()? as usize;
        let label = std::str::from_utf8(r.take(n)?)
            .map_err(|_| SceneError::MalformedDelta("label is not utf-8".into()))?
            .to_string();
        let position_mm = [r.i32()?, r.i32()?, r.i32()?];
        let mut q = [0u8; 8];
        q[3..].copy_from_slice(r.take(5)?);
        let orientation = u64::from_be_bytes(q);
        if orientation >> (3 * QUAT_BITS + 2) != 0 {
            return Err(SceneError::MalformedDelta("orientation padding bits set".into()));
        }
        let shape = match r.u8()? {
            0 => WireShape::Sphere(r.f32()?),
            1 => WireShape::Box([r.f32()?, r.f32()?, r.f32()?]),
            2 => WireShape::Cylinder(r.f32()?, r.f32()?),
            k => return Err(SceneError::MalformedDelta(format!("unknown shape kind {k}"))),
        };
        Ok(Self { id, label, position_mm, orientation, shape, confidence: r.u16()? })
    }
}

impl From<Truncated> for SceneError {
    fn from(t: Truncated) -> Self {
        SceneError::MalformedDelta(t.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub rows: u16,
    pub cols: u16,
    pub elevations_mm: Vec<i32>,
}

impl TerrainGrid {
    fn quantize(h: &Heightfield) -> Self {
        Self {
            origin: h.origin(),
            cell_size: h.cell_size(),
            rows: h.rows() as u16,
            cols: h.cols() as u16,
            elevations_mm: h.elevations().iter().map(|&z| to_mm(z)).collect(),
        }
    }

    fn same_layout(&self, other: &TerrainGrid) -> bool {
        self.origin == other.origin && self.cell_size == other.cell_size && self.rows == other.rows && self.cols == other.cols
    }

    fn to_heightfield(&self) -> Result<Heightfield, SceneError> {
        Heightfield::new(
            self.origin,
            self.cell_size,
            self.rows as usize,
            self.cols as usize,
            self.elevations_mm.iter().map(|&v| from_mm(v)).collect(),
        )
        .map_err(|e| SceneError::MalformedDelta(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainPatch {
    pub row0: u16,
    pub col0: u16,
    pub rows: u16,
    pub cols: u16,
    pub elevations_mm: Vec<i32>,
}

/// Changes between two scene revisions. A delta carrying `terrain` is a full
/// snapshot: the receiver drops its objects and terrain before applying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDelta {
    pub base_revision: u64,
    pub new_revision: u64,
    pub terrain: Option<TerrainGrid>,
    pub changed: Vec<WireObject>,
    pub removed: Vec<ObjectId>,
    pub terrain_patches: Vec<TerrainPatch>,
}

impl SceneDelta {
    /// Full snapshot of `graph`, applicable to a graph at the same revision or
    /// through [`SceneGraph::from_snapshot`].
    pub fn snapshot(graph: &SceneGraph) -> Self {
        Self {
            base_revision: graph.revision(),
            new_revision: graph.revision(),
            terrain: Some(TerrainGrid::quantize(graph.terrain())),
            changed: graph.objects().map(WireObject::quantize).collect(),
            removed: Vec::new(),
            terrain_patches: Vec::new(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.terrain.is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.terrain.is_none() && self.changed.is_empty() && self.removed.is_empty() && self.terrain_patches.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(64);
        w.u8(self.terrain.is_some() as u8).u64(self.base_revision).u64(self.new_revision);
        if let Some(t) = &self.terrain {
            w.f64(t.origin[0]).f64(t.origin[1]).f64(t.cell_size).u16(t.rows).u16(t.cols);
            for &z in &t.elevations_mm {
                w.i32(z);
            }
        }
        w.u16(self.changed.len() as u16);
        for o in &self.changed {
            o.write(&mut w);
        }
        w.u16(self.removed.len() as u16);
        for &id in &self.removed {
            w.u32(id);
        }
        w.u16(self.terrain_patches.len() as u16);
        for p in &self.terrain_patches {
            w.u16(p.row0).u16(p.col0).u16(p.rows).u16(p.cols);
            for &z in &p.elevations_mm {
                w.i32(z);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SceneError> {
        let mut r = Reader::new(bytes);
        let kind = r.u8()?;
        if kind > 1 {
            return Err(SceneError::MalformedDelta(format!("unknown delta kind {kind}")));
        }
        let base_revision = r.u64()?;
        let new_revision = r.u64()?;
        let terrain = if kind == 1 {
            let origin = [r.f64()?, r.f64()?];
            let cell_size = r.f64()?;
            let (rows, cols) = (r.u16()?, r.u16()?);
            let n = rows as usize * cols as usize;
            if r.remaining() < n * 4 {
                return Err(SceneError::MalformedDelta("terrain grid truncated".into()));
            }
            let elevations_mm = (0..n).map(|_| r.i32()).collect::<Result<_, _>>()?;
            Some(TerrainGrid { origin, cell_size, rows, cols, elevations_mm })
        } else {
            None
        };
        let n = r.u16()?;
        let changed = (0..n).map(|_| WireObject::read(&mut r)).collect::<Result<_, _>>()?;
        let n = r.u16()?;
        let removed = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let n = r.u16()?;
        let mut terrain_patches = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let (row0, col0, rows, cols) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
            let cells = rows as usize * cols as usize;
            if r.remaining() < cells * 4 {
                return Err(SceneError::MalformedDelta("terrain patch truncated".into()));
            }
            let elevations_mm = (0..cells).map(|_| r.i32()).collect::<Result<_, _>>()?;
            terrain_patches.push(TerrainPatch { row0, col0, rows, cols, elevations_mm });
        }
        if r.remaining() != 0 {
            return Err(SceneError::MalformedDelta(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { base_revision, new_revision, terrain, changed, removed, terrain_patches })
    }
}

/// Computes the delta taking `from` to `to` in quantized wire space. Falls
/// back to a full snapshot whenever that encodes no larger.
pub fn encode_delta(from: &SceneGraph, to: &SceneGraph) -> Result<SceneDelta, SceneError> {
    if from.revision() > to.revision() {
        return Err(SceneError::RevisionMismatch { expected: from.revision(), actual: to.revision() });
    }
    let full = || SceneDelta { base_revision: from.revision(), ..SceneDelta::snapshot(to) };
    let old_terrain = TerrainGrid::quantize(from.terrain());
    let new_terrain = TerrainGrid::quantize(to.terrain());
    if !old_terrain.same_layout(&new_terrain) {
        return Ok(full());
    }
    let old: BTreeMap<ObjectId, WireObject> = from.objects().map(|o| (o.id, WireObject::quantize(o))).collect();
    let changed: Vec<WireObject> = to
        .objects()
        .map(WireObject::quantize)
        .filter(|w| old.get(&w.id) != Some(w))
        .collect();
    let removed: Vec<ObjectId> = old.keys().copied().filter(|id| to.object(*id).is_none()).collect();

    let cols = new_terrain.cols as usize;
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (i, (a, b)) in old_terrain.elevations_mm.iter().zip(&new_terrain.elevations_mm).enumerate() {
        if a != b {
            let (r, c) = (i / cols, i % cols);
            bbox = Some(match bbox {
                None => (r, r, c, c),
                Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
            });
        }
    }
    let terrain_patches = bbox
        .map(|(r0, r1, c0, c1)| {
            let elevations_mm = (r0..=r1)
                .flat_map(|r| (c0..=c1).map(move |c| (r, c)))
                .map(|(r, c)| new_terrain.elevations_mm[r * cols + c])
                .collect();
            vec![TerrainPatch { row0: r0 as u16, col0: c0 as u16, rows: (r1 - r0 + 1) as u16, cols: (c1 - c0 + 1) as u16, elevations_mm }]
        })
        .unwrap_or_default();

    let delta = SceneDelta {
        base_revision: from.revision(),
        new_revision: to.revision(),
        terrain: None,
        changed,
        removed,
        terrain_patches,
    };
    let snapshot = full();
    if delta.encode().len() > snapshot.encode().len() {
        Ok(snapshot)
    } else {
        Ok(delta)
    }
}

pub fn apply_delta(graph: &SceneGraph, delta: &SceneDelta) -> Result<SceneGraph, SceneError> {
    if delta.base_revision != graph.revision() {
        return Err(SceneError::RevisionMismatch { expected: delta.base_revision, actual: graph.revision() });
    }
    apply_unchecked(graph.clone(), delta)
}

fn apply_unchecked(mut next: SceneGraph, delta: &SceneDelta) -> Result<SceneGraph, SceneError> {
    if delta.new_revision < delta.base_revision {
        return Err(SceneError::MalformedDelta("new revision precedes base revision".into()));
    }
    if let Some(t) = &delta.terrain {
        *next.terrain_mut_unchecked() = t.to_heightfield()?;
        next.objects_mut_unchecked().clear();
    }
    for id in &delta.removed {
        if next.objects_mut_unchecked().remove(id).is_none() {
            return Err(SceneError::MalformedDelta(format!("removal of unknown object {id}")));
        }
    }
    for w in &delta.changed {
        let obj = w.to_object();
        obj.validate().map_err(|e| SceneError::MalformedDelta(e.to_string()))?;
        next.objects_mut_unchecked().insert(obj.id, obj);
    }
    let terrain = next.terrain_mut_unchecked();
    for p in &delta.terrain_patches {
        let (r0, c0, rows, cols) = (p.row0 as usize, p.col0 as usize, p.rows as usize, p.cols as usize);
        if r0 + rows > terrain.rows() || c0 + cols > terrain.cols() || p.elevations_mm.len() != rows * cols {
            return Err(SceneError::MalformedDelta("terrain patch outside grid".into()));
        }
        for r in 0..rows {
            for c in 0..cols {
                terrain.set_sample(r0 + r, c0 + c, from_mm(p.elevations_mm[r * cols + c]));
            }
        }
    }
    next.set_revision(delta.new_revision);
    Ok(next)
}

impl SceneGraph {
    /// Rebuilds a graph from a full snapshot regardless of local state.
    pub fn from_snapshot(delta: &SceneDelta) -> Result<SceneGraph, SceneError> {
        let Some(t) = &delta.terrain else {
            return Err(SceneError::MalformedDelta("not a full snapshot".into()));
        };
        apply_unchecked(SceneGraph::new(t.to_heightfield()?), delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> SceneGraph {
        let g = SceneGraph::new(Heightfield::flat([-2.0, -2.0], 0.25, 17, 17, -0.5));
        let a = SceneObject::new(1, "marker 3", Pose::from_position(0.4, 0.1, -0.45), Shape::Cylinder { radius: 0.05, height: 0.1 });
        let b = SceneObject::new(2, "push core", Pose::from_position(-0.3, 0.6, -0.4), Shape::Box { size: [0.1, 0.1, 0.2] });
        g.upsert_object(a).unwrap().upsert_object(b).unwrap()
    }

    #[test]
    fn identical_graphs_give_empty_delta() {
        let g = graph();
        let d = encode_delta(&g, &g).unwrap();
        assert!(d.is_empty());
        assert_eq!(apply_delta(&g, &d).unwrap(), g);
    }

    #[test]
    fn one_moved_object_is_listed_alone() {
        let from = graph();
        let mut moved = from.object(2).unwrap().clone();
        moved.pose.position.x += 0.05;
        let to = from.upsert_object(moved).unwrap();
        let d = encode_delta(&from, &to).unwrap();
        assert_eq!(d.changed.iter().map(|w| w.id).collect::<Vec<_>>(), vec![2]);
        assert!(d.removed.is_empty() && d.terrain_patches.is_empty() && !d.is_full());
        let decoded = SceneDelta::decode(&d.encode()).unwrap();
        assert_eq!(decoded, d);
        let applied = apply_delta(&from, &decoded).unwrap();
        assert_eq!(applied.revision(), to.revision());
        assert!((applied.object(2).unwrap().position() - to.object(2).unwrap().position()).norm() < 1e-3);
    }

    #[test]
    fn wrong_base_revision_is_rejected() {
        let from = graph();
        let to = from.remove_object(1).unwrap();
        let d = encode_delta(&from, &to).unwrap();
        assert_eq!(
            apply_delta(&to, &d).unwrap_err(),
            SceneError::RevisionMismatch { expected: from.revision(), actual: to.revision() }
        );
    }

    #[test]
    fn quaternion_packing_error_is_small() {
        for (r, p, y) in [(0.0, 0.0, 0.0), (0.3, -1.2, 2.8), (3.1, 0.01, -0.7), (-2.0, 1.5, 0.2)] {
            let q = UnitQuaternion::from_euler_angles(r, p, y);
            let back = unpack_quaternion(pack_quaternion(&q));
            assert!(q.angle_to(&back) < 1.5e-3, "angle error {}", q.angle_to(&back));
            assert!(pack_quaternion(&q) < 1 << 38);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let g = graph().patch_terrain(3, 4, 2, 2, &[-0.4, -0.41, -0.42, -0.43]).unwrap();
        let snap = SceneDelta::snapshot(&g);
        let rebuilt = SceneGraph::from_snapshot(&SceneDelta::decode(&snap.encode()).unwrap()).unwrap();
        assert_eq!(rebuilt.revision(), g.revision());
        assert_eq!(rebuilt.len(), 2);
        assert!((rebuilt.terrain().sample(4, 5) + 0.43).abs() < 1e-9);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(SceneDelta::decode(&[]).is_err());
        assert!(SceneDelta::decode(&[7; 40]).is_err());
        let mut bytes = SceneDelta::snapshot(&graph()).encode();
        bytes.push(0);
        assert!(SceneDelta::decode(&bytes).is_err());
    }
}
