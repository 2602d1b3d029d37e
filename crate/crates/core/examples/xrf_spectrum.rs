//! Simulated XRF acquisitions on the microbial mat and on ambient
//! sediment, comparing counts in the Fe K-alpha window.

use remanip::sim::xrf::{channel_kev, XrfSourceParams};
use remanip::sim::{VehicleSim, Worksite};
use remanip::kinematics::{solve_ik, IkOptions, KinematicChain, Pose};
use nalgebra::Vector3;

fn sim_touching(xy: [f64; 2]) -> VehicleSim {
    let ws = Worksite::shipped();
    let arm = KinematicChain::reference_arm();
    let z = ws.terrain.height_at(xy[0], xy[1]).unwrap();
    let target = Pose::tool_down(Vector3::new(xy[0], xy[1], z - 5e-4));
    let q = solve_ik(&arm, &target, &ws.home, &IkOptions { tol_pos: 1e-7, tol_rot: 1e-6, ..IkOptions::default() }).unwrap().joints;
    let mut sim = VehicleSim::for_worksite(arm, &ws);
    sim.set_target(q).unwrap();
    while !sim.contact().in_contact {
        sim.step(0.05);
    }
    sim
}

fn main() {
    let p = XrfSourceParams::default();
    for (name, xy) in [("mat", [0.95, 0.32]), ("ambient", [0.95, -0.30])] {
        let sim = sim_touching(xy);
        let mut acq = sim.begin_acquisition(p, 1).unwrap();
        acq.advance(p.integration_s);
        let s = acq.finish();
        let peak = s.counts.iter().enumerate().filter(|(c, _)| channel_kev(*c) > 5.0).max_by_key(|(_, k)| **k).unwrap();
        println!("{name:<8} region {:<14} total {:>7} Fe window {:>6}  brightest line {:.2} keV", acq.region, s.total(), s.window(6.16, 6.64), channel_kev(peak.0));
    }
}
