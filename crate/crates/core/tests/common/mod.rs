#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remanip::kinematics::{forward_kinematics, JointVector, KinematicChain, Pose};
use remanip::planner::CollisionWorld;
use remanip::scene::{Heightfield, SceneGraph, SceneObject, Shape};

pub const READY: [f64; 6] = [0.0, 0.6, 1.4, 0.0, 1.1, 0.0];

pub struct Scenario {
    pub scene: SceneGraph,
    pub start: JointVector,
    pub goal_config: JointVector,
    pub target: Pose,
}

pub fn random_config(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> JointVector {
    JointVector(chain.links().iter().map(|l| rng.random_range(l.limits[0]..=l.limits[1])).collect())
}

/// Seeded obstacle scene whose start and goal configurations are both
/// collision-free, so the goal is verified feasible at the IK level.
pub fn random_scenario(chain: &KinematicChain, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = JointVector(READY.to_vec());
    let base = SceneGraph::new(Heightfield::flat([-3.0, -3.0], 0.25, 25, 25, -0.6));
    loop {
        let goal_config = random_config(chain, &mut rng);
        let bare = CollisionWorld::new(&base);
        if !bare.is_free(chain, &goal_config, false) {
            continue;
        }
        let mut scene = base.clone();
        let mut placed = 0;
        let mut tries = 0;
        while placed < 3 && tries < 200 {
            tries += 1;
            let r = rng.random_range(0.4..1.4);
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let z = rng.random_range(-0.5..0.7);
            let dim = rng.random_range(0.08..0.25);
            let shape = match rng.random_range(0..3) {
                0 => Shape::Sphere { radius: dim },
                1 => Shape::Box { size: [dim * 1.5, dim, dim * 2.0] },
                _ => Shape::Cylinder { radius: dim * 0.7, height: dim * 2.0 },
            };
            let pose = Pose::new(Vector3::new(r * a.cos(), r * a.sin(), z), UnitQuaternion::from_euler_angles(0.0, 0.0, a));
            let candidate = scene.upsert_object(SceneObject::new(placed, "rock", pose, shape)).unwrap();
            let world = CollisionWorld::new(&candidate);
            if world.is_free(chain, &start, false) && world.is_free(chain, &goal_config, false) {
                scene = candidate;
                placed += 1;
            }
        }
        let target = forward_kinematics(chain, &goal_config).unwrap();
        return Scenario { scene, start, goal_config, target };
    }
}

pub mod stress {
    use remanip::link::{max_window_bits, Channel, Duplex, Inbound, LinkProfile, SenderEvent};

    pub struct StressOutcome {
        pub received: Vec<u32>,
        pub confirmed: usize,
        pub timeouts: usize,
        pub finished_at: f64,
        pub max_window_bits: [u64; 2],
        pub budget_bps: f64,
        pub retransmissions: u64,
    }

    /// Shore endpoint `a` sends `n` numbered commands at 10 Hz while the
    /// vehicle endpoint `b` streams 10 Hz telemetry and periodic bulk data.
    pub fn command_stress(profile: &LinkProfile, n: u32, horizon_s: f64) -> StressOutcome {
        let mut link = Duplex::new(profile).unwrap();
        let dt = 0.01;
        let mut received = Vec::new();
        let mut confirmed = 0;
        let mut timeouts = 0;
        let mut sent = 0;
        let mut tick = 0u64;
        let mut t = 0.0;
        while t <= horizon_s {
            t = tick as f64 * dt;
            if tick % 10 == 0 && sent < n {
                let mut payload = sent.to_be_bytes().to_vec();
                payload.resize(48, 0xEE);
                link.a.send_command(&payload).unwrap();
                sent += 1;
            }
            if tick % 10 == 5 {
                link.b.publish_telemetry(1, &[0x11; 180]).unwrap();
            }
            if tick % 500 == 250 {
                link.b.send_bulk(&vec![0x22; 3000]).unwrap();
            }
            let (_, at_b) = link.step(t);
            for m in at_b {
                if let Inbound::Command(p) = m {
                    received.push(u32::from_be_bytes(p[..4].try_into().unwrap()));
                }
            }
            for (channel, e) in link.a.drain_events() {
                match (channel, e) {
                    (Channel::CmdReliable, SenderEvent::Delivered { .. }) => confirmed += 1,
                    (Channel::CmdReliable, SenderEvent::DeliveryTimeout { .. }) => timeouts += 1,
                    _ => {}
                }
            }
            link.b.drain_events();
            if sent == n && confirmed + timeouts == n as usize {
                break;
            }
            tick += 1;
        }
        StressOutcome {
            received,
            confirmed,
            timeouts,
            finished_at: t,
            max_window_bits: [max_window_bits(link.a.emissions(), 1.0), max_window_bits(link.b.emissions(), 1.0)],
            budget_bps: link.a.budget_bps(),
            retransmissions: link.a.retransmissions(),
        }
    }
}

pub mod mission {
    use nalgebra::Vector3;
    use remanip::command::{Goal, Provenance, Target, TargetSource, TaskGoal};
    use remanip::executive::{Executive, ExecutiveConfig, Phase, TICK_S};
    use remanip::kinematics::KinematicChain;
    use remanip::scene::SceneGraph;
    use remanip::sim::{VehicleSim, Worksite};

    /// Surface points inside and outside the mat polygon of the shipped worksite.
    pub const MAT_XY: [f64; 2] = [0.95, 0.32];
    pub const AMBIENT_XY: [f64; 2] = [0.95, -0.30];

    pub struct Rig {
        pub worksite: Worksite,
        pub scene: SceneGraph,
        pub sim: VehicleSim,
        pub exec: Executive,
    }

    pub fn rig(seed: u64) -> Rig {
        let worksite = Worksite::shipped();
        let chain = KinematicChain::reference_arm();
        let scene = worksite.scene().unwrap();
        let sim = VehicleSim::for_worksite(chain.clone(), &worksite);
        let cfg = ExecutiveConfig { home: Some(worksite.home.clone()), seed, ..ExecutiveConfig::default() };
        Rig { worksite, scene, sim, exec: Executive::new(chain, cfg) }
    }

    pub fn task(goal: Goal) -> TaskGoal {
        TaskGoal {
            goal,
            provenance: Provenance {
                operator_id: "op1".into(),
                utterance: String::new(),
                utterance_time: 0.0,
                gesture_id: None,
                source: TargetSource::Utterance,
            },
        }
    }

    pub fn xrf_at(xy: [f64; 2], integration_s: f64) -> TaskGoal {
        task(Goal::XrfMeasure { target: Target::Point(Vector3::new(xy[0], xy[1], 0.0)), integration_s })
    }

    pub fn core_at(xy: [f64; 2]) -> TaskGoal {
        task(Goal::PushCore { target: Target::Point(Vector3::new(xy[0], xy[1], 0.0)) })
    }

    /// A sim whose tool rests 0.5 mm below the surface at `xy`, tool down.
    pub fn contact_sim(xy: [f64; 2]) -> VehicleSim {
        use remanip::kinematics::{solve_ik, IkOptions, JointVector, Pose};
        let worksite = Worksite::shipped();
        let chain = KinematicChain::reference_arm();
        let z = worksite.terrain.height_at(xy[0], xy[1]).unwrap();
        let target = Pose::tool_down(Vector3::new(xy[0], xy[1], z - 5e-4));
        let opts = IkOptions { tol_pos: 1e-7, tol_rot: 1e-6, ..IkOptions::default() };
        let q = solve_ik(&chain, &target, &JointVector(super::READY.to_vec()), &opts).unwrap().joints;
        let sim = VehicleSim::for_worksite(chain, &worksite);
        let mut sim = VehicleSim::new(sim.chain().clone(), worksite.terrain.clone(), q).with_site(sim.site().unwrap().clone());
        sim.step(0.05);
        assert!(sim.contact().in_contact);
        sim
    }

    impl Rig {
        /// Token, propose, preview and confirm as operator `op1`.
        pub fn start(&mut self, goal: TaskGoal) {
            let now = self.sim.clock();
            if !self.exec.state().token.is_holder("op1", now) {
                self.exec.acquire_token("op1", now).unwrap();
            }
            self.exec.propose("op1", now, goal).unwrap();
            let id = self.exec.build_preview(now, &self.scene, &self.sim).unwrap().id;
            self.exec.confirm("op1", now, id, &self.scene, &mut self.sim).unwrap();
        }

        /// Ticks until a terminal phase; returns it and the largest hold deviation seen.
        pub fn run_to_end(&mut self, max_s: f64) -> (Phase, f64) {
            let mut worst: f64 = 0.0;
            let limit = (max_s / TICK_S) as usize;
            for _ in 0..limit {
                if let Some(s) = self.exec.tick(TICK_S, &mut self.sim) {
                    worst = worst.max(s.deviation);
                }
                if matches!(self.exec.phase(), Phase::Done | Phase::Aborted) {
                    break;
                }
            }
            (self.exec.phase(), worst)
        }
    }
}

pub mod xrf_oracle {
    use std::collections::BTreeMap;

    use remanip::sim::xrf::{XrfInstrument, XrfSourceParams, CHANNELS};

    /// Expected counts per channel, evaluated from the model definition with
    /// Simpson integration of each Gaussian peak over the channel.
    pub fn oracle_expected(inst: &XrfInstrument, conc: &BTreeMap<String, f64>, p: &XrfSourceParams, live: f64) -> Vec<f64> {
        let width = 0.020;
        let sigma = 0.080;
        let v = p.tube_voltage_kv;
        (0..CHANNELS)
            .map(|c| {
                let center = (c as f64 + 0.5) * width;
                let mut lambda = inst.background_scale * p.tube_current_ua * live * (v / 50.0) * (1.0 - center / v).max(0.0);
                for line in &inst.lines {
                    let excitation = if v > line.energy_kev { 1.0 - line.energy_kev / v } else { 0.0 };
                    let area = line.sensitivity * conc.get(&line.element).copied().unwrap_or(0.0) * p.tube_current_ua * live * excitation;
                    if area == 0.0 {
                        continue;
                    }
                    let pdf = |e: f64| (-(e - line.energy_kev).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                    let n = 64;
                    let h = width / n as f64;
                    let a = c as f64 * width;
                    let mut s = pdf(a) + pdf(a + width);
                    for k in 1..n {
                        s += pdf(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
                    }
                    lambda += area * s * h / 3.0;
                }
                lambda
            })
            .collect()
    }

    pub fn fe_window(c: usize) -> bool {
        let e = (c as f64 + 0.5) * 0.020;
        (6.16..6.64).contains(&e)
    }
}
