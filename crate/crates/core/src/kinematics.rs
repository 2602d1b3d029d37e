//! Serial-chain manipulator geometry: forward kinematics, geometric Jacobian
//! and a damped-least-squares inverse kinematics solver with joint limits.
//!
//! Every function here is pure over its inputs, so a [`KinematicChain`] can be
//! shared between planner threads without locking.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on quaternion norms read from fixtures.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

const DAMPING_FLOOR: f64 = 1e-3;
const DAMPING_MAX: f64 = 0.1;
const SINGULAR_REGION: f64 = 0.05;
const MAX_STEP_RAD: f64 = 0.5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has {got} values but the chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("joint vector contains a non-finite value")]
    NonFinite,
    #[error("target unreachable after {} iterations (position error {:.4} m, orientation error {:.4} rad)", best.iterations, best.position_error, best.orientation_error)]
    Unreachable { best: IkSolution },
}

/// A rigid transform as it appears in fixture files: translation in meters and
/// a `[w, x, y, z]` quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub translation: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
}

fn identity_rotation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { translation: [0.0; 3], rotation: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self { translation: [x, y, z], rotation: [1.0, 0.0, 0.0, 0.0] }
    }

    fn quaternion_norm(&self) -> f64 {
        self.rotation.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Converts to an isometry, renormalizing the quaternion.
    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [w, x, y, z] = self.rotation;
        let rotation = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        let [tx, ty, tz] = self.translation;
        Isometry3::from_parts(Translation3::new(tx, ty, tz), rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointType {
    Revolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub joint_axis: [f64; 3],
    pub joint_origin: RigidTransform,
    pub joint_type: JointType,
    pub limits: [f64; 2],
    pub max_rate: f64,
}

/// A collision sphere rigidly attached to one link frame.
///
/// `frame` indexes the frame after joint `frame` (see [`KinematicChain::frames`]).
/// Tool proxies are allowed to touch terrain during guarded contact moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProxy {
    pub frame: usize,
    pub offset: [f64; 3],
    pub radius: f64,
    #[serde(default)]
    pub tool: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainSpec {
    #[serde(default)]
    name: String,
    links: Vec<Link>,
    end_effector_offset: RigidTransform,
    #[serde(default)]
    proxies: Vec<LinkProxy>,
}

/// Validated serial chain of revolute joints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ChainSpec", into = "ChainSpec")]
pub struct KinematicChain {
    name: String,
    links: Vec<Link>,
    end_effector_offset: RigidTransform,
    proxies: Vec<LinkProxy>,
    origins: Vec<Isometry3<f64>>,
    axes: Vec<Unit<Vector3<f64>>>,
    tool: Isometry3<f64>,
}

impl TryFrom<ChainSpec> for KinematicChain {
    type Error = KinematicsError;

    fn try_from(spec: ChainSpec) -> Result<Self, Self::Error> {
        KinematicChain::with_proxies(spec.name, spec.links, spec.end_effector_offset, spec.proxies)
    }
}

impl From<KinematicChain> for ChainSpec {
    fn from(chain: KinematicChain) -> Self {
        ChainSpec {
            name: chain.name,
            links: chain.links,
            end_effector_offset: chain.end_effector_offset,
            proxies: chain.proxies,
        }
    }
}

fn check_transform(what: &str, t: &RigidTransform) -> Result<(), KinematicsError> {
    if t.translation.iter().chain(t.rotation.iter()).any(|v| !v.is_finite()) {
        return Err(KinematicsError::InvalidChain(format!("{what}: non-finite transform")));
    }
    if (t.quaternion_norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(KinematicsError::InvalidChain(format!(
            "{what}: quaternion norm {} is not unit",
            t.quaternion_norm()
        )));
    }
    Ok(())
}

impl KinematicChain {
    pub fn new(name: impl Into<String>, links: Vec<Link>, end_effector_offset: RigidTransform) -> Result<Self, KinematicsError> {
        Self::with_proxies(name, links, end_effector_offset, Vec::new())
    }

    pub fn with_proxies(
        name: impl Into<String>,
        links: Vec<Link>,
        end_effector_offset: RigidTransform,
        proxies: Vec<LinkProxy>,
    ) -> Result<Self, KinematicsError> {
        if links.is_empty() {
            return Err(KinematicsError::InvalidChain("chain needs at least one link".into()));
        }
        let mut origins = Vec::with_capacity(links.len());
        let mut axes = Vec::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            check_transform(&format!("link {i} origin"), &link.joint_origin)?;
            let [min, max] = link.limits;
            if !(min < max) {
                return Err(KinematicsError::InvalidChain(format!("link {i}: limits must satisfy min < max")));
            }
            if !(link.max_rate > 0.0) || !link.max_rate.is_finite() {
                return Err(KinematicsError::InvalidChain(format!("link {i}: max_rate must be positive")));
            }
            let axis = Vector3::from(link.joint_axis);
            if !(axis.norm() > 0.0) || !axis.norm().is_finite() {
                return Err(KinematicsError::InvalidChain(format!("link {i}: degenerate joint axis")));
            }
            origins.push(link.joint_origin.to_isometry());
            axes.push(Unit::new_normalize(axis));
        }
        check_transform("end effector offset", &end_effector_offset)?;
        for (i, proxy) in proxies.iter().enumerate() {
            if proxy.frame >= links.len() {
                return Err(KinematicsError::InvalidChain(format!("proxy {i}: frame {} out of range", proxy.frame)));
            }
            if !(proxy.radius > 0.0) {
                return Err(KinematicsError::InvalidChain(format!("proxy {i}: radius must be positive")));
            }
        }
        Ok(Self {
            name: name.into(),
            tool: end_effector_offset.to_isometry(),
            links,
            end_effector_offset,
            proxies,
            origins,
            axes,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The 6-DOF reference arm shipped in `fixtures/arm6.json`.
    pub fn reference_arm() -> Self {
        Self::from_json(include_str!("../fixtures/arm6.json")).expect("bundled arm fixture is valid")
    }

    /// Two-link planar arm with unit link lengths (`fixtures/planar2r.json`).
    pub fn planar_2r() -> Self {
        Self::from_json(include_str!("../fixtures/planar2r.json")).expect("bundled planar fixture is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn proxies(&self) -> &[LinkProxy] {
        &self.proxies
    }

    pub fn max_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.links.iter().map(|l| l.max_rate)
    }

    fn check(&self, q: &JointVector) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch { expected: self.dof(), got: q.len() });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        Ok(())
    }

    /// World transform of each frame after its joint rotation, followed by the
    /// end-effector frame (`dof() + 1` entries).
    pub fn frames(&self, q: &JointVector) -> Result<Vec<Isometry3<f64>>, KinematicsError> {
        self.check(q)?;
        let mut out = Vec::with_capacity(self.dof() + 1);
        let mut t = Isometry3::identity();
        for ((origin, axis), &angle) in self.origins.iter().zip(&self.axes).zip(q.iter()) {
            t = t * origin * UnitQuaternion::from_axis_angle(axis, angle);
            out.push(t);
        }
        out.push(t * self.tool);
        Ok(out)
    }

    /// Independent limits projection; see [`clamp_to_limits`].
    pub fn clamp(&self, q: &JointVector) -> JointVector {
        JointVector(
            q.iter()
                .zip(&self.links)
                .map(|(v, l)| v.clamp(l.limits[0], l.limits[1]))
                .collect(),
        )
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.len() == self.dof() && q.iter().zip(&self.links).all(|(v, l)| *v >= l.limits[0] && *v <= l.limits[1])
    }

    /// World-space centers and radii of the collision proxies at `q`.
    pub fn proxy_spheres(&self, q: &JointVector) -> Result<Vec<(Vector3<f64>, f64)>, KinematicsError> {
        let frames = self.frames(q)?;
        Ok(self
            .proxies
            .iter()
            .map(|p| {
                let c = frames[p.frame] * nalgebra::Point3::from(Vector3::from(p.offset));
                (c.coords, p.radius)
            })
            .collect())
    }
}

/// Joint angles in radians, one per chain link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &JointVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn lerp(&self, other: &JointVector, s: f64) -> JointVector {
        JointVector(self.0.iter().zip(&other.0).map(|(a, b)| a + (b - a) * s).collect())
    }
}

impl Deref for JointVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl fmt::Display for JointVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.4}")?;
        }
        write!(f, "]")
    }
}

/// End-effector (or object) pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "RigidTransform", try_from = "RigidTransform")]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn from_position(x: f64, y: f64, z: f64) -> Self {
        Self { position: Vector3::new(x, y, z), orientation: UnitQuaternion::identity() }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Tool axis pointing straight down, with the tool x axis facing away from
    /// the base z axis so a forward-reaching arm needs no wrist roll.
    pub fn tool_down(position: Vector3<f64>) -> Self {
        let azimuth = position.y.atan2(position.x);
        let orientation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), azimuth)
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI);
        Self { position, orientation }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self { position: iso.translation.vector, orientation: iso.rotation }
    }

    /// Angle of the relative rotation between the two orientations.
    pub fn orientation_error(&self, other: &Pose) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }
}

impl From<Pose> for RigidTransform {
    fn from(p: Pose) -> Self {
        let q = p.orientation.quaternion();
        RigidTransform {
            translation: [p.position.x, p.position.y, p.position.z],
            rotation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl TryFrom<RigidTransform> for Pose {
    type Error = KinematicsError;
    fn try_from(t: RigidTransform) -> Result<Self, Self::Error> {
        check_transform("pose", &t)?;
        Ok(Pose::from_isometry(&t.to_isometry()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkSolution {
    pub joints: JointVector,
    pub position_error: f64,
    pub orientation_error: f64,
    pub iterations: usize,
}

/// Solver tolerances; the defaults are 1 mm, 5 mrad and 200 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_iter: usize,
    /// Ignore the target orientation (useful for chains with fewer than six joints).
    pub position_only: bool,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self { tol_pos: 1e-3, tol_rot: 5e-3, max_iter: 200, position_only: false }
    }
}

impl IkOptions {
    pub fn position_only() -> Self {
        Self { position_only: true, ..Self::default() }
    }
}

pub fn forward_kinematics(chain: &KinematicChain, q: &JointVector) -> Result<Pose, KinematicsError> {
    let frames = chain.frames(q)?;
    Ok(Pose::from_isometry(frames.last().expect("frames are never empty")))
}

/// Geometric Jacobian (6 × N): rows 0..3 map joint rates to end-effector linear
/// velocity, rows 3..6 to angular velocity, both in the world frame.
pub fn jacobian(chain: &KinematicChain, q: &JointVector) -> Result<DMatrix<f64>, KinematicsError> {
    chain.check(q)?;
    let n = chain.dof();
    let mut joint_frames = Vec::with_capacity(n);
    let mut t = Isometry3::identity();
    for ((origin, axis), &angle) in chain.origins.iter().zip(&chain.axes).zip(q.iter()) {
        let before = t * origin;
        joint_frames.push((before.translation.vector, before.rotation * axis.into_inner()));
        t = before * UnitQuaternion::from_axis_angle(axis, angle);
    }
    let end = (t * chain.tool).translation.vector;
    let mut j = DMatrix::zeros(6, n);
    for (col, (p, z)) in joint_frames.iter().enumerate() {
        let lin = z.cross(&(end - p));
        for r in 0..3 {
            j[(r, col)] = lin[r];
            j[(r + 3, col)] = z[r];
        }
    }
    Ok(j)
}

pub fn clamp_to_limits(chain: &KinematicChain, q: &JointVector) -> JointVector {
    chain.clamp(q)
}

fn pose_error(target: &Pose, current: &Pose, position_only: bool) -> DVector<f64> {
    let dp = target.position - current.position;
    if position_only {
        return DVector::from_column_slice(dp.as_slice());
    }
    let dw = (target.orientation * current.orientation.inverse()).scaled_axis();
    DVector::from_column_slice(&[dp.x, dp.y, dp.z, dw.x, dw.y, dw.z])
}

fn adaptive_damping(j: &DMatrix<f64>) -> f64 {
    let sigma_min = j
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let lambda = if sigma_min < SINGULAR_REGION {
        let r = sigma_min / SINGULAR_REGION;
        DAMPING_MAX * (1.0 - r * r).max(0.0).sqrt()
    } else {
        0.0
    };
    lambda.max(DAMPING_FLOOR)
}

/// Damped-least-squares IK with joint-limit clamping after every step.
///
/// The damping factor grows as the Jacobian's smallest singular value drops
/// below 0.05, with a floor of 1e-3. Iteration 0 evaluates the clamped seed,
/// so a seed that already satisfies the target returns with `iterations == 0`.
pub fn solve_ik(
    chain: &KinematicChain,
    target: &Pose,
    seed: &JointVector,
    opts: &IkOptions,
) -> Result<IkSolution, KinematicsError> {
    chain.check(seed)?;
    if !(opts.tol_pos > 0.0) || !(opts.tol_rot > 0.0) {
        return Err(KinematicsError::InvalidChain("tolerances must be positive".into()));
    }
    let mut q = chain.clamp(seed);
    let mut best: Option<IkSolution> = None;
    for iter in 0..=opts.max_iter {
        let pose = forward_kinematics(chain, &q)?;
        let position_error = (target.position - pose.position).norm();
        let orientation_error = if opts.position_only { 0.0 } else { pose.orientation_error(target) };
        let candidate = IkSolution { joints: q.clone(), position_error, orientation_error, iterations: iter };
        if position_error <= opts.tol_pos && orientation_error <= opts.tol_rot {
            return Ok(candidate);
        }
        let score = position_error + orientation_error;
        if best.as_ref().map_or(true, |b| score < b.position_error + b.orientation_error) {
            best = Some(candidate);
        }
        if iter == opts.max_iter {
            break;
        }
        let full = jacobian(chain, &q)?;
        let j = if opts.position_only { full.rows(0, 3).into_owned() } else { full };
        let e = pose_error(target, &pose, opts.position_only);
        let lambda = adaptive_damping(&j);
        let jt = j.transpose();
        let mut jjt = &j * &jt;
        for d in 0..jjt.nrows() {
            jjt[(d, d)] += lambda * lambda;
        }
        let Some(y) = jjt.cholesky().map(|c| c.solve(&e)) else {
            break;
        };
        let mut dq = jt * y;
        let step = dq.amax();
        if step > MAX_STEP_RAD {
            dq *= MAX_STEP_RAD / step;
        }
        let next = JointVector(q.iter().zip(dq.iter()).map(|(a, d)| a + d).collect());
        q = chain.clamp(&next);
    }
    Err(KinematicsError::Unreachable { best: best.expect("at least one iterate") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn jv(v: &[f64]) -> JointVector {
        JointVector(v.to_vec())
    }

    #[test]
    fn planar_fk_straight_and_elbow() {
        let chain = KinematicChain::planar_2r();
        let p = forward_kinematics(&chain, &jv(&[0.0, 0.0])).unwrap();
        assert!((p.position - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        let p = forward_kinematics(&chain, &jv(&[0.0, FRAC_PI_2])).unwrap();
        assert!((p.position - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fk_rejects_wrong_length() {
        let chain = KinematicChain::planar_2r();
        assert_eq!(
            forward_kinematics(&chain, &jv(&[0.0])).unwrap_err(),
            KinematicsError::DimensionMismatch { expected: 2, got: 1 }
        );
        assert!(jacobian(&chain, &jv(&[0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn renormalized_quaternion_gives_same_pose() {
        let mut links = KinematicChain::reference_arm().links().to_vec();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        links[2].joint_origin.rotation = [s, 0.0, 0.0, s];
        let a = KinematicChain::new("a", links.clone(), RigidTransform::identity()).unwrap();
        // perturb below the fixture tolerance; to_isometry renormalizes
        links[2].joint_origin.rotation = [s * (1.0 + 4e-10), 0.0, 0.0, s * (1.0 + 4e-10)];
        let b = KinematicChain::new("b", links, RigidTransform::identity()).unwrap();
        let q = jv(&[0.3, -0.2, 0.5, 0.1, 0.7, -0.4]);
        let pa = forward_kinematics(&a, &q).unwrap();
        let pb = forward_kinematics(&b, &q).unwrap();
        assert!((pa.position - pb.position).norm() < 1e-9);
        assert!(pa.orientation_error(&pb) < 1e-9);
    }

    #[test]
    fn chain_validation() {
        let arm = KinematicChain::reference_arm();
        assert!(KinematicChain::new("empty", vec![], RigidTransform::identity()).is_err());
        let mut links = arm.links().to_vec();
        links[0].limits = [1.0, 1.0];
        assert!(KinematicChain::new("bad", links, RigidTransform::identity()).is_err());
        let mut links = arm.links().to_vec();
        links[0].max_rate = 0.0;
        assert!(KinematicChain::new("bad", links, RigidTransform::identity()).is_err());
        let mut links = arm.links().to_vec();
        links[1].joint_origin.rotation = [1.0, 0.1, 0.0, 0.0];
        assert!(KinematicChain::new("bad", links, RigidTransform::identity()).is_err());
    }

    #[test]
    fn zero_rate_gives_zero_twist() {
        let chain = KinematicChain::reference_arm();
        let j = jacobian(&chain, &jv(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        let twist = &j * DVector::zeros(6);
        assert_eq!(twist.norm(), 0.0);
    }

    #[test]
    fn planar_jacobian_matches_closed_form() {
        // linear rows of a 2R arm: [-l1 s1 - l2 s12, -l2 s12; l1 c1 + l2 c12, l2 c12]
        let chain = KinematicChain::planar_2r();
        for (a, b) in [(0.0, 0.0), (0.3, 1.1), (-1.2, 0.4)] {
            let j = jacobian(&chain, &jv(&[a, b])).unwrap();
            let (s1, c1, s12, c12) = (f64::sin(a), f64::cos(a), f64::sin(a + b), f64::cos(a + b));
            let expected = [[-s1 - s12, -s12], [c1 + c12, c12], [0.0, 0.0]];
            for r in 0..3 {
                for c in 0..2 {
                    assert!((j[(r, c)] - expected[r][c]).abs() < 1e-12, "row {r} col {c}");
                }
            }
            for c in 0..2 {
                assert_eq!(j[(5, c)], 1.0);
            }
        }
    }

    #[test]
    fn ik_fixed_point_returns_seed() {
        let chain = KinematicChain::reference_arm();
        let q0 = jv(&[0.2, 0.4, 0.8, -0.3, 0.9, 0.1]);
        let target = forward_kinematics(&chain, &q0).unwrap();
        let sol = solve_ik(&chain, &target, &q0, &IkOptions::default()).unwrap();
        assert!(sol.iterations <= 1);
        assert!(sol.joints.max_abs_diff(&q0) < 1e-9);
    }

    #[test]
    fn ik_planar_takes_seed_side_elbow() {
        let chain = KinematicChain::planar_2r();
        let target = Pose::from_position(1.0, 1.0, 0.0);
        let opts = IkOptions { tol_pos: 1e-5, ..IkOptions::position_only() };
        let sol = solve_ik(&chain, &target, &jv(&[0.2, 1.2]), &opts).unwrap();
        // closed-form 2R branches for (1,1) with unit links: (0, pi/2) and (pi/2, -pi/2)
        assert!(sol.joints.max_abs_diff(&jv(&[0.0, FRAC_PI_2])) < 1e-4);
        assert!(sol.position_error <= 1e-4);
        let sol = solve_ik(&chain, &target, &jv(&[1.4, -1.2]), &opts).unwrap();
        assert!(sol.joints.max_abs_diff(&jv(&[FRAC_PI_2, -FRAC_PI_2])) < 1e-4);
    }

    #[test]
    fn ik_out_of_reach_is_unreachable() {
        let chain = KinematicChain::planar_2r();
        let target = Pose::from_position(3.0, 0.0, 0.0);
        match solve_ik(&chain, &target, &jv(&[0.1, 0.1]), &IkOptions::position_only()) {
            Err(KinematicsError::Unreachable { best }) => {
                assert!(best.position_error >= 1.0 - 1e-6);
                assert!(chain.within_limits(&best.joints));
            }
            other => panic!("expected Unreachable, got {other:?}"),
        }
    }

    #[test]
    fn clamp_behaviour() {
        let chain = KinematicChain::planar_2r();
        let inside = jv(&[0.5, -0.5]);
        assert_eq!(clamp_to_limits(&chain, &inside), inside);
        let max = chain.links()[0].limits[1];
        let clamped = clamp_to_limits(&chain, &jv(&[max + 0.1, 0.0]));
        assert_eq!(clamped[0], max);
        assert_eq!(clamp_to_limits(&chain, &clamped), clamped);
    }

    #[test]
    fn chain_json_round_trip() {
        let chain = KinematicChain::reference_arm();
        let text = serde_json::to_string(&chain).unwrap();
        let back = KinematicChain::from_json(&text).unwrap();
        assert_eq!(back.links(), chain.links());
        assert_eq!(back.proxies(), chain.proxies());
    }
}
