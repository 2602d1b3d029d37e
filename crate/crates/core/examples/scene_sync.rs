//! Encodes scene deltas between revisions and rebuilds a remote replica
//! from a snapshot plus deltas.

use remanip::kinematics::Pose;
use remanip::scene::{apply_delta, encode_delta, SceneDelta, SceneGraph, SceneObject, Shape};
use remanip::sim::Worksite;

fn main() {
    let ship = Worksite::shipped().scene().unwrap();
    let snapshot = SceneDelta::snapshot(&ship);
    let bytes = snapshot.encode();
    println!("snapshot at revision {}: {} bytes", ship.revision(), bytes.len());
    let mut replica = SceneGraph::from_snapshot(&SceneDelta::decode(&bytes).unwrap()).unwrap();

    let moved = ship.upsert_object(SceneObject::new(2, "marker 1", Pose::from_position(1.12, 0.08, -0.43), Shape::Sphere { radius: 0.025 })).unwrap();
    let removed = moved.remove_object(1).unwrap();
    for (from, to) in [(&ship, &moved), (&moved, &removed)] {
        let delta = encode_delta(from, to).unwrap();
        let wire = delta.encode();
        replica = apply_delta(&replica, &SceneDelta::decode(&wire).unwrap()).unwrap();
        println!("delta to revision {}: {} bytes", to.revision(), wire.len());
    }
    println!("replica revision {} matches ship {}", replica.revision(), removed.revision());
}
