use nalgebra::{Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Heightfield, ObjectId, SceneError, SceneGraph, SceneObject, Shape};

pub const RAY_DIRECTION_TOLERANCE: f64 = 1e-6;

const MAX_TERRAIN_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum HitTarget {
    Object(ObjectId),
    Terrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub point: Vector3<f64>,
    pub target: HitTarget,
    pub distance: f64,
}

/// Smallest non-negative root of `a t^2 + 2 b t + c = 0` (ray-quadric form).
fn first_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a == 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = ((-b - s) / a, (-b + s) / a);
    if t1 < 0.0 {
        None
    } else {
        Some(t0.max(0.0))
    }
}

fn ray_shape(shape: &Shape, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    match *shape {
        Shape::Sphere { radius } => first_root(d.dot(d), o.dot(d), o.dot(o) - radius * radius),
        Shape::Box { size } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for k in 0..3 {
                let half = size[k] / 2.0;
                if d[k].abs() < 1e-15 {
                    if o[k].abs() > half {
                        return None;
                    }
                    continue;
                }
                let (a, b) = ((-half - o[k]) / d[k], (half - o[k]) / d[k]);
                t_near = t_near.max(a.min(b));
                t_far = t_far.min(a.max(b));
            }
            (t_near <= t_far && t_far >= 0.0).then(|| t_near.max(0.0))
        }
        Shape::Cylinder { radius, height } => {
            let half = height / 2.0;
            let mut best: Option<f64> = None;
            let mut consider = |t: f64| {
                if t >= 0.0 && best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            };
            let inside_radial = o.x * o.x + o.y * o.y <= radius * radius;
            if inside_radial && o.z.abs() <= half {
                return Some(0.0);
            }
            // side
            let a = d.x * d.x + d.y * d.y;
            if a > 0.0 {
                let b = o.x * d.x + o.y * d.y;
                let c = o.x * o.x + o.y * o.y - radius * radius;
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    for t in [(-b - s) / a, (-b + s) / a] {
                        if (o.z + t * d.z).abs() <= half {
                            consider(t);
                        }
                    }
                }
            }
            // caps
            if d.z.abs() > 0.0 {
                for zc in [-half, half] {
                    let t = (zc - o.z) / d.z;
                    let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                    if x * x + y * y <= radius * radius {
                        consider(t);
                    }
                }
            }
            best
        }
    }
}

/// Ray parameter of the first intersection with `object`, if any.
pub(crate) fn ray_object(object: &SceneObject, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Option<f64> {
    let inv = object.pose.to_isometry().inverse();
    let o = (inv * Point3::from(*origin)).coords;
    let d = inv.rotation * direction;
    ray_shape(&object.shape, &o, &d)
}

/// Interval of `t` for which `lo <= o + t d <= hi`, intersected with `[t0, t1]`.
fn clip_axis(o: f64, d: f64, lo: f64, hi: f64, t0: f64, t1: f64) -> Option<(f64, f64)> {
    if d.abs() < 1e-15 {
        return (o >= lo && o <= hi).then_some((t0, t1));
    }
    let (a, b) = ((lo - o) / d, (hi - o) / d);
    let (a, b) = (a.min(b), a.max(b));
    let (s, e) = (t0.max(a), t1.min(b));
    (s <= e).then_some((s, e))
}

pub(crate) fn ray_terrain(terrain: &Heightfield, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let (x0, x1, y0, y1) = terrain.bounds();
    let (zmin, zmax) = terrain.elevation_range();
    let slack = 1e-9;
    let (t0, t1) = clip_axis(o.x, d.x, x0, x1, 0.0, f64::INFINITY)?;
    let (t0, t1) = clip_axis(o.y, d.y, y0, y1, t0, t1)?;
    let (t0, t1) = clip_axis(o.z, d.z, zmin - slack, zmax + slack, t0, t1)?;
    if !t1.is_finite() {
        // horizontal ray inside the elevation slab; bound by the grid
        return None;
    }
    let gap = |t: f64| {
        let p = o + d * t;
        let (px, py) = (p.x.clamp(x0, x1), p.y.clamp(y0, y1));
        p.z - terrain.height_and_gradient(px, py).0
    };
    let g0 = gap(t0);
    if g0 <= 0.0 {
        return Some(t0);
    }
    let horizontal = Vector2::new(d.x, d.y).norm();
    let step = if horizontal > 1e-12 {
        (terrain.cell_size() / 8.0 / horizontal).max((t1 - t0) / MAX_TERRAIN_STEPS as f64)
    } else {
        t1 - t0
    };
    let mut lo = t0;
    while lo < t1 {
        let hi = (lo + step).min(t1);
        if gap(hi) <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if gap(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(b);
        }
        if hi == t1 {
            break;
        }
        lo = hi;
    }
    None
}

pub(crate) fn raycast(graph: &SceneGraph, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Result<Option<RayHit>, SceneError> {
    let norm = direction.norm();
    if !((norm - 1.0).abs() <= RAY_DIRECTION_TOLERANCE) || origin.iter().any(|v| !v.is_finite()) {
        return Err(SceneError::NonUnitDirection(norm));
    }
    let mut best: Option<(f64, HitTarget)> = ray_terrain(graph.terrain(), origin, direction).map(|t| (t, HitTarget::Terrain));
    for obj in graph.objects() {
        if let Some(t) = ray_object(obj, origin, direction) {
            // objects win exact ties so a tool lying on the seafloor is selectable
            if best.map_or(true, |(bt, _)| t <= bt) {
                best = Some((t, HitTarget::Object(obj.id)));
            }
        }
    }
    Ok(best.map(|(t, target)| RayHit { point: origin + direction * t, target, distance: t }))
}

/// Signed distance from `p` to the object's surface (negative inside).
pub fn signed_distance(object: &SceneObject, p: &Vector3<f64>) -> f64 {
    let local = (object.pose.to_isometry().inverse() * Point3::from(*p)).coords;
    match object.shape {
        Shape::Sphere { radius } => local.norm() - radius,
        Shape::Box { size } => {
            let q = local.abs() - Vector3::from(size) / 2.0;
            let outside = q.map(|v| v.max(0.0)).norm();
            outside + q.max().min(0.0)
        }
        Shape::Cylinder { radius, height } => {
            let dr = Vector2::new(local.x, local.y).norm() - radius;
            let dz = local.z.abs() - height / 2.0;
            let outside = Vector2::new(dr.max(0.0), dz.max(0.0)).norm();
            outside + dr.max(dz).min(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use nalgebra::UnitQuaternion;

    fn graph_with(objects: Vec<SceneObject>) -> SceneGraph {
        let mut g = SceneGraph::new(Heightfield::flat([-5.0, -5.0], 0.5, 21, 21, 0.0));
        for o in objects {
            g = g.upsert_object(o).unwrap();
        }
        g
    }

    #[test]
    fn straight_down_hits_flat_terrain() {
        let g = graph_with(vec![]);
        let hit = g.raycast(&Vector3::new(0.0, 0.0, 10.0), &-Vector3::z()).unwrap().unwrap();
        assert_eq!(hit.target, HitTarget::Terrain);
        assert!((hit.point - Vector3::zeros()).norm() < 1e-9);
        assert!((hit.distance - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ray_away_misses() {
        let g = graph_with(vec![SceneObject::new(1, "s", Pose::from_position(0.0, 0.0, 0.0), Shape::Sphere { radius: 1.0 })]);
        assert!(g.raycast(&Vector3::new(0.0, 0.0, 10.0), &Vector3::z()).unwrap().is_none());
        assert!(g.raycast(&Vector3::new(0.0, 0.0, 10.0), &Vector3::x()).unwrap().is_none());
    }

    #[test]
    fn ray_hits_sphere_top() {
        let g = graph_with(vec![SceneObject::new(4, "s", Pose::from_position(0.0, 0.0, 0.0), Shape::Sphere { radius: 1.0 })]);
        let hit = g.raycast(&Vector3::new(0.0, 0.0, 5.0), &-Vector3::z()).unwrap().unwrap();
        assert_eq!(hit.target, HitTarget::Object(4));
        assert!((hit.point - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!((hit.distance - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let g = graph_with(vec![]);
        assert!(matches!(
            g.raycast(&Vector3::zeros(), &Vector3::new(0.0, 0.0, -2.0)),
            Err(SceneError::NonUnitDirection(_))
        ));
    }

    #[test]
    fn rotated_box_and_cylinder() {
        let rot = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_4);
        let boxed = SceneObject::new(1, "b", Pose::new(Vector3::new(2.0, 0.0, 0.5), rot), Shape::Box { size: [1.0, 1.0, 1.0] });
        let cyl = SceneObject::new(2, "c", Pose::from_position(-2.0, 0.0, 0.5), Shape::Cylinder { radius: 0.3, height: 1.0 });
        let g = graph_with(vec![boxed, cyl]);
        // the 45 degree box exposes a corner toward -x at distance sqrt(2)/2
        let hit = g.raycast(&Vector3::new(0.0, 0.0, 0.5), &Vector3::x()).unwrap().unwrap();
        assert_eq!(hit.target, HitTarget::Object(1));
        assert!((hit.distance - (2.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-12);
        let hit = g.raycast(&Vector3::new(0.0, 0.0, 0.5), &-Vector3::x()).unwrap().unwrap();
        assert_eq!(hit.target, HitTarget::Object(2));
        assert!((hit.distance - 1.7).abs() < 1e-12);
        let hit = g.raycast(&Vector3::new(-2.0, 0.1, 3.0), &-Vector3::z()).unwrap().unwrap();
        assert!((hit.point.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oblique_ray_on_sloped_terrain() {
        let mut g = SceneGraph::new(Heightfield::plane([0.0, 0.0], 0.1, 41, 41, 0.0, 0.5, 0.0));
        g = g.upsert_object(SceneObject::new(1, "far", Pose::from_position(100.0, 0.0, 0.0), Shape::Sphere { radius: 0.1 })).unwrap();
        let d = Vector3::new(1.0, 0.0, -1.0).normalize();
        let hit = g.raycast(&Vector3::new(0.0, 1.0, 2.0), &d).unwrap().unwrap();
        // z = 2 - s, z = 0.5 s  ->  s = 4/3
        assert!((hit.point.x - 4.0 / 3.0).abs() < 1e-9);
        assert!((hit.point.z - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn signed_distances() {
        let b = SceneObject::new(1, "b", Pose::from_position(0.0, 0.0, 0.0), Shape::Box { size: [2.0, 2.0, 2.0] });
        assert!((signed_distance(&b, &Vector3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!((signed_distance(&b, &Vector3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
        assert!((signed_distance(&b, &Vector3::zeros()) + 1.0).abs() < 1e-12);
        let c = SceneObject::new(2, "c", Pose::from_position(0.0, 0.0, 0.0), Shape::Cylinder { radius: 1.0, height: 2.0 });
        assert!((signed_distance(&c, &Vector3::new(0.0, 0.0, 3.0)) - 2.0).abs() < 1e-12);
        assert!((signed_distance(&c, &Vector3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((signed_distance(&c, &Vector3::new(2.0, 0.0, 2.0)) - 2f64.sqrt()).abs() < 1e-12);
    }
}
