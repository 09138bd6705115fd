//! Deterministic 2D sagittal biped: a pelvis body with two torque-actuated
//! legs (hip, knee, ankle each). Ground contact is a penalty spring with
//! damping and a Coulomb-style friction clamp. Per-step reward is forward
//! pelvis progress minus a control-effort cost.
//!
//! Joint order everywhere: r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle.
//! Angle convention: 0 rad = segment hanging straight down (foot segment:
//! pointing forward along +x); positive angles swing the segment forward.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, Write};

pub const NUM_JOINTS: usize = 6;
pub const R_HIP: usize = 0;
pub const R_KNEE: usize = 1;
pub const R_ANKLE: usize = 2;
pub const L_HIP: usize = 3;
pub const L_KNEE: usize = 4;
pub const L_ANKLE: usize = 5;

// Hard safety clamps so the integrator can never produce Inf/NaN, even if
// an episode is stepped far past `done`. Never reached in normal episodes.
const MAX_LIN_VEL: f64 = 1e3;
const MAX_ANG_VEL: f64 = 1e3;

/// Segment masses in kilograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Masses {
    pub pelvis: f64,
    pub thigh: f64,
    pub shank: f64,
    pub foot: f64,
}

/// Environment parameters. `Default` gives the desk-scale runner used by
/// every preset; individual fields can be overridden before `validate`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Physics timestep in seconds.
    pub dt: f64,
    pub thigh_len: f64,
    pub shank_len: f64,
    pub foot_len: f64,
    pub masses: Masses,
    /// Per-joint [lo, hi] angle limits in radians (same order as joints).
    pub joint_limits: [[f64; 2]; NUM_JOINTS],
    /// Per-joint torque at action = +/-1, in newton-meters.
    pub torque_scale: [f64; NUM_JOINTS],
    /// Viscous joint damping, N*m*s/rad.
    pub joint_damping: f64,
    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub friction_coeff: f64,
    /// Restoring torque keeping the torso near upright, N*m/rad.
    pub pelvis_upright_stiffness: f64,
    /// Rotational damping on the pelvis, N*m*s/rad.
    pub pelvis_rot_damping: f64,
    /// Episode ends when pelvis drops below this height, meters.
    pub fall_height_threshold: f64,
    /// Episode ends after this many physics steps.
    pub max_steps: u64,
    /// Weight of the per-step control effort penalty.
    pub effort_cost_coeff: f64,
    pub gravity: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let thigh_len = 0.45;
        let shank_len = 0.45;
        let hip = [-1.0, 1.2];
        let knee = [-2.4, 0.0];
        let ankle = [-0.8, 0.8];
        Self {
            dt: 0.01,
            thigh_len,
            shank_len,
            foot_len: 0.2,
            masses: Masses {
                pelvis: 30.0,
                thigh: 1.2,
                shank: 0.8,
                foot: 0.3,
            },
            joint_limits: [hip, knee, ankle, hip, knee, ankle],
            torque_scale: [80.0, 40.0, 15.0, 80.0, 40.0, 15.0],
            joint_damping: 0.5,
            ground_stiffness: 2.0e4,
            ground_damping: 300.0,
            friction_coeff: 1.0,
            pelvis_upright_stiffness: 30.0,
            pelvis_rot_damping: 5.0,
            fall_height_threshold: 0.6 * (thigh_len + shank_len),
            max_steps: 1000,
            effort_cost_coeff: 0.01,
            gravity: 9.81,
        }
    }
}

impl EnvConfig {
    /// Pelvis height with both legs straight and feet on the ground.
    pub fn standing_height(&self) -> f64 {
        self.thigh_len + self.shank_len
    }

    /// Total leg reach from pelvis to ankle keypoint.
    pub fn leg_length(&self) -> f64 {
        self.thigh_len + self.shank_len
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.pelvis + 2.0 * (self.masses.thigh + self.masses.shank + self.masses.foot)
    }

    /// Pelvis rotational inertia: point masses at a fixed 0.22 m radius
    /// of gyration.
    pub fn pelvis_inertia(&self) -> f64 {
        self.total_mass() * 0.22 * 0.22
    }

    /// Effective inertia about each joint, segments lumped as point
    /// masses at their distal ends with the chain extended.
    pub fn joint_inertia(&self) -> [f64; NUM_JOINTS] {
        let m = &self.masses;
        let hip = m.thigh * self.thigh_len * self.thigh_len
            + (m.shank + m.foot) * (self.thigh_len + self.shank_len).powi(2);
        let knee = (m.shank + m.foot) * self.shank_len * self.shank_len;
        let ankle = m.foot * self.foot_len * self.foot_len;
        [hip, knee, ankle, hip, knee, ankle]
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if !(self.dt > 0.0) {
            return err(format!("dt must be > 0, got {}", self.dt));
        }
        for (name, v) in [
            ("thigh_len", self.thigh_len),
            ("shank_len", self.shank_len),
            ("foot_len", self.foot_len),
            ("pelvis mass", self.masses.pelvis),
            ("thigh mass", self.masses.thigh),
            ("shank mass", self.masses.shank),
            ("foot mass", self.masses.foot),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return err(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.max_steps == 0 {
            return err("max_steps must be > 0".into());
        }
        for j in 0..NUM_JOINTS {
            if self.joint_limits[j][0] >= self.joint_limits[j][1] {
                return err(format!("joint {j} limits inverted"));
            }
            if !(self.torque_scale[j] > 0.0) {
                return err(format!("torque_scale[{j}] must be > 0"));
            }
        }
        for (name, v) in [
            ("joint_damping", self.joint_damping),
            ("ground_stiffness", self.ground_stiffness),
            ("ground_damping", self.ground_damping),
            ("friction_coeff", self.friction_coeff),
            ("pelvis_upright_stiffness", self.pelvis_upright_stiffness),
            ("pelvis_rot_damping", self.pelvis_rot_damping),
            ("effort_cost_coeff", self.effort_cost_coeff),
            ("gravity", self.gravity),
        ] {
            if v < 0.0 || !v.is_finite() {
                return err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Full physical state of the biped.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub pelvis_pos: [f64; 2],
    pub pelvis_rot: f64,
    pub pelvis_vel: [f64; 2],
    pub pelvis_angvel: f64,
    pub joint_angle: [f64; NUM_JOINTS],
    pub joint_angvel: [f64; NUM_JOINTS],
    pub step_index: u64,
    /// Seedable stream carried with the state; `step` never draws from it.
    pub rng: ChaCha8Rng,
}

impl SimState {
    pub fn all_finite(&self) -> bool {
        self.pelvis_pos.iter().all(|v| v.is_finite())
            && self.pelvis_rot.is_finite()
            && self.pelvis_vel.iter().all(|v| v.is_finite())
            && self.pelvis_angvel.is_finite()
            && self.joint_angle.iter().all(|v| v.is_finite())
            && self.joint_angvel.iter().all(|v| v.is_finite())
    }
}

/// Normalized joint torques; each component is clamped to [-1, 1] before
/// being scaled to newton-meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub torque: [f64; NUM_JOINTS],
}

impl Action {
    pub fn zero() -> Self {
        Self {
            torque: [0.0; NUM_JOINTS],
        }
    }

    pub fn clamped(&self) -> Self {
        Self {
            torque: self.torque.map(|t| t.clamp(-1.0, 1.0)),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.torque.iter().all(|v| v.is_finite())
    }
}

/// World-frame 2D positions of the tracked body parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointSet {
    pub pelvis: [f64; 2],
    pub r_knee: [f64; 2],
    pub l_knee: [f64; 2],
    pub r_foot: [f64; 2],
    pub l_foot: [f64; 2],
}

impl KeypointSet {
    /// Keypoints in pelvis-centered coordinates (pelvis entry omitted),
    /// order: r_knee, l_knee, r_foot, l_foot.
    pub fn pelvis_relative(&self) -> [[f64; 2]; 4] {
        let rel = |p: [f64; 2]| [p[0] - self.pelvis[0], p[1] - self.pelvis[1]];
        [
            rel(self.r_knee),
            rel(self.l_knee),
            rel(self.r_foot),
            rel(self.l_foot),
        ]
    }
}

/// Upright rest pose at the origin with seeded joint perturbations
/// (uniform in +/-0.01 rad). Identical seeds give bit-identical states.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<SimState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut joint_angle = [0.0; NUM_JOINTS];
    for (j, angle) in joint_angle.iter_mut().enumerate() {
        let perturbed: f64 = rng.gen_range(-0.01..0.01);
        *angle = perturbed.clamp(config.joint_limits[j][0], config.joint_limits[j][1]);
    }
    Ok(SimState {
        pelvis_pos: [0.0, config.standing_height()],
        pelvis_rot: 0.0,
        pelvis_vel: [0.0, 0.0],
        pelvis_angvel: 0.0,
        joint_angle,
        joint_angvel: [0.0; NUM_JOINTS],
        step_index: 0,
        rng,
    })
}

// One leg's chain points and point velocities, used for FK and contact.
struct LegPoints {
    knee: [f64; 2],
    ankle: [f64; 2],
    toe: [f64; 2],
    v_knee: [f64; 2],
    v_ankle: [f64; 2],
    v_toe: [f64; 2],
}

fn leg_points(state: &SimState, config: &EnvConfig, hip_joint: usize) -> LegPoints {
    let [px, py] = state.pelvis_pos;
    let [vx, vy] = state.pelvis_vel;
    let (th, tk, ta) = (
        state.joint_angle[hip_joint],
        state.joint_angle[hip_joint + 1],
        state.joint_angle[hip_joint + 2],
    );
    let (wh, wk, wa) = (
        state.joint_angvel[hip_joint],
        state.joint_angvel[hip_joint + 1],
        state.joint_angvel[hip_joint + 2],
    );
    let wp = state.pelvis_angvel;

    // absolute segment angles
    let a1 = state.pelvis_rot + th;
    let a2 = a1 + tk;
    let a3 = a2 + ta;

    // dir(a) = (sin a, -cos a): hangs straight down at a = 0
    let knee = [
        px + config.thigh_len * a1.sin(),
        py - config.thigh_len * a1.cos(),
    ];
    let ankle = [
        knee[0] + config.shank_len * a2.sin(),
        knee[1] - config.shank_len * a2.cos(),
    ];
    // foot segment points forward (+x) at zero angle
    let toe = [
        ankle[0] + config.foot_len * a3.cos(),
        ankle[1] + config.foot_len * a3.sin(),
    ];

    // chain rule: d/dt dir(a) = (cos a, sin a) * da/dt
    let w1 = wp + wh;
    let w2 = w1 + wk;
    let w3 = w2 + wa;
    let v_knee = [
        vx + config.thigh_len * a1.cos() * w1,
        vy + config.thigh_len * a1.sin() * w1,
    ];
    let v_ankle = [
        v_knee[0] + config.shank_len * a2.cos() * w2,
        v_knee[1] + config.shank_len * a2.sin() * w2,
    ];
    let v_toe = [
        v_ankle[0] - config.foot_len * a3.sin() * w3,
        v_ankle[1] + config.foot_len * a3.cos() * w3,
    ];

    LegPoints {
        knee,
        ankle,
        toe,
        v_knee,
        v_ankle,
        v_toe,
    }
}

// Penalty contact: normal spring-damper (push only) plus tangential
// viscous force clamped to the friction cone.
fn contact_force(pos: [f64; 2], vel: [f64; 2], config: &EnvConfig) -> [f64; 2] {
    if pos[1] >= 0.0 {
        return [0.0, 0.0];
    }
    let normal = (-config.ground_stiffness * pos[1] - config.ground_damping * vel[1]).max(0.0);
    let cap = config.friction_coeff * normal;
    let tangent = (-config.ground_damping * vel[0]).clamp(-cap, cap);
    [tangent, normal]
}

/// Advance one physics step with a semi-implicit Euler update.
/// Deterministic: no randomness is drawn inside `step`.
pub fn step(state: &SimState, action: &Action, config: &EnvConfig) -> Result<(SimState, f64, bool)> {
    if !state.all_finite() {
        return Err(Error::Integration(format!(
            "non-finite state at step {}: pelvis_pos={:?}",
            state.step_index, state.pelvis_pos
        )));
    }
    if !action.all_finite() {
        return Err(Error::Integration("non-finite action component".into()));
    }

    let dt = config.dt;
    let act = action.clamped();
    let inertia = config.joint_inertia();

    // forces from the current configuration (before any update)
    let mut force = [0.0, -config.gravity * config.total_mass()];
    let mut torque =
        -config.pelvis_upright_stiffness * state.pelvis_rot
            - config.pelvis_rot_damping * state.pelvis_angvel;
    for hip_joint in [R_HIP, L_HIP] {
        let leg = leg_points(state, config, hip_joint);
        for (p, v) in [
            (leg.knee, leg.v_knee),
            (leg.ankle, leg.v_ankle),
            (leg.toe, leg.v_toe),
        ] {
            let f = contact_force(p, v, config);
            force[0] += f[0];
            force[1] += f[1];
            let rx = p[0] - state.pelvis_pos[0];
            let ry = p[1] - state.pelvis_pos[1];
            torque += rx * f[1] - ry * f[0];
        }
    }

    let mut next = state.clone();

    // joint update: velocities first, then angles, then limit clamp
    for j in 0..NUM_JOINTS {
        let tau = act.torque[j] * config.torque_scale[j]
            - config.joint_damping * state.joint_angvel[j];
        let mut w = state.joint_angvel[j] + dt * tau / inertia[j];
        w = w.clamp(-MAX_ANG_VEL, MAX_ANG_VEL);
        let mut angle = state.joint_angle[j] + dt * w;
        let [lo, hi] = config.joint_limits[j];
        if angle < lo {
            angle = lo;
            w = 0.0;
        } else if angle > hi {
            angle = hi;
            w = 0.0;
        }
        next.joint_angle[j] = angle;
        next.joint_angvel[j] = w;
    }

    // pelvis body
    let inv_m = 1.0 / config.total_mass();
    next.pelvis_vel[0] = (state.pelvis_vel[0] + dt * force[0] * inv_m).clamp(-MAX_LIN_VEL, MAX_LIN_VEL);
    next.pelvis_vel[1] = (state.pelvis_vel[1] + dt * force[1] * inv_m).clamp(-MAX_LIN_VEL, MAX_LIN_VEL);
    next.pelvis_angvel =
        (state.pelvis_angvel + dt * torque / config.pelvis_inertia()).clamp(-MAX_ANG_VEL, MAX_ANG_VEL);
    next.pelvis_pos[0] = state.pelvis_pos[0] + dt * next.pelvis_vel[0];
    next.pelvis_pos[1] = state.pelvis_pos[1] + dt * next.pelvis_vel[1];
    next.pelvis_rot = state.pelvis_rot + dt * next.pelvis_angvel;
    next.step_index = state.step_index + 1;

    let progress = next.pelvis_pos[0] - state.pelvis_pos[0];
    let effort: f64 = act.torque.iter().map(|t| t * t).sum::<f64>() * config.effort_cost_coeff * dt;
    let reward = progress - effort;

    let done = next.pelvis_pos[1] < config.fall_height_threshold
        || next.step_index >= config.max_steps;
    debug_assert!(next.all_finite());
    Ok((next, reward, done))
}

/// Forward kinematics for the tracked body parts. The pelvis entry equals
/// `pelvis_pos` exactly.
pub fn keypoints(state: &SimState, config: &EnvConfig) -> KeypointSet {
    let right = leg_points(state, config, R_HIP);
    let left = leg_points(state, config, L_HIP);
    KeypointSet {
        pelvis: state.pelvis_pos,
        r_knee: right.knee,
        l_knee: left.knee,
        r_foot: right.ankle,
        l_foot: left.ankle,
    }
}

/// Reflect through the sagittal symmetry: swap the left and right joint
/// triples in angles, angular velocities, and torques. Pelvis fields are
/// unchanged.
pub fn mirror(state: &SimState, action: &Action) -> (SimState, Action) {
    let mut m = state.clone();
    for j in 0..3 {
        m.joint_angle.swap(j, j + 3);
        m.joint_angvel.swap(j, j + 3);
    }
    let mut t = action.torque;
    for j in 0..3 {
        t.swap(j, j + 3);
    }
    (m, Action { torque: t })
}

/// Owning convenience wrapper used by the training loop.
#[derive(Debug, Clone)]
pub struct Env {
    pub config: EnvConfig,
    pub state: SimState,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        let state = reset(&config, seed)?;
        Ok(Self { config, state })
    }

    pub fn reset(&mut self, seed: u64) -> Result<&SimState> {
        self.state = reset(&self.config, seed)?;
        Ok(&self.state)
    }

    pub fn step(&mut self, action: &Action) -> Result<(f64, bool)> {
        let (next, reward, done) = step(&self.state, action, &self.config)?;
        self.state = next;
        Ok((reward, done))
    }

    pub fn keypoints(&self) -> KeypointSet {
        keypoints(&self.state, &self.config)
    }
}

/// One trajectory-log row; one row per physics step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step_index: u64,
    pub pelvis_x: f64,
    pub pelvis_y: f64,
    pub pelvis_rot: f64,
    pub joint_angle: [f64; NUM_JOINTS],
    pub torque: [f64; NUM_JOINTS],
    pub reward: f64,
    pub done: bool,
}

/// Decimal with 9 significant digits, as the trajectory log requires.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000e0".to_string();
    }
    format!("{:.8e}", v)
}

pub const TRAJECTORY_HEADER: &str = "step_index,pelvis_x,pelvis_y,pelvis_rot,\
r_hip,r_knee,r_ankle,l_hip,l_knee,l_ankle,\
tq_r_hip,tq_r_knee,tq_r_ankle,tq_l_hip,tq_l_knee,tq_l_ankle,reward,done";

pub fn write_trajectory<W: Write>(out: &mut W, rows: &[TrajectoryRow]) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        let mut fields = vec![r.step_index.to_string()];
        fields.push(fmt_sig9(r.pelvis_x));
        fields.push(fmt_sig9(r.pelvis_y));
        fields.push(fmt_sig9(r.pelvis_rot));
        fields.extend(r.joint_angle.iter().map(|v| fmt_sig9(*v)));
        fields.extend(r.torque.iter().map(|v| fmt_sig9(*v)));
        fields.push(fmt_sig9(r.reward));
        fields.push(if r.done { "1" } else { "0" }.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty trajectory file".into()))??;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::Schema(format!("unexpected trajectory header: {header}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 18 {
            return Err(Error::Data(format!(
                "trajectory row {}: expected 18 fields, got {}",
                i + 2,
                parts.len()
            )));
        }
        let f = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("trajectory row {}: {e}", i + 2)))
        };
        let mut joint_angle = [0.0; NUM_JOINTS];
        let mut torque = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            joint_angle[j] = f(parts[4 + j])?;
            torque[j] = f(parts[10 + j])?;
        }
        rows.push(TrajectoryRow {
            step_index: parts[0]
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("trajectory row {}: {e}", i + 2)))?,
            pelvis_x: f(parts[1])?,
            pelvis_y: f(parts[2])?,
            pelvis_rot: f(parts[3])?,
            joint_angle,
            torque,
            reward: f(parts[16])?,
            done: parts[17].trim() == "1",
        });
    }
    Ok(rows)
}
