//! Agent observations: pelvis-centered keypoint coordinates with
//! finite-difference velocities and accelerations over the control-step
//! history, plus left/right mirroring for data augmentation.
//!
//! All feature math runs in f64 and is stored as f32, matching the
//! training-storage precision policy.

use crate::error::{Error, Result};
use crate::sim::{KeypointSet, SimState, NUM_JOINTS};

/// base block: pelvis_rot, pelvis_angvel, pelvis_vel x/y, 6 joint angles,
/// 6 joint angular velocities
pub const BASE_LEN: usize = 4 + 2 * NUM_JOINTS;
/// 4 keypoints x 2 coordinates
pub const KEYPOINT_LEN: usize = 8;
pub const FEATURE_LEN: usize = BASE_LEN + 3 * KEYPOINT_LEN;

const REL_OFFSET: usize = BASE_LEN;
const VEL_OFFSET: usize = BASE_LEN + KEYPOINT_LEN;
const ACC_OFFSET: usize = BASE_LEN + 2 * KEYPOINT_LEN;

/// Fixed-length agent observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub values: [f32; FEATURE_LEN],
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Swap the left/right joint triples and the left/right keypoint pairs
    /// in every block. Pelvis entries are untouched.
    pub fn mirrored(&self) -> FeatureVector {
        let mut v = self.values;
        // joint angles at [4..10], angular velocities at [10..16]
        for base in [4, 10] {
            for j in 0..3 {
                v.swap(base + j, base + 3 + j);
            }
        }
        // keypoint blocks: r_knee, l_knee, r_foot, l_foot as (x, y) pairs
        for block in [REL_OFFSET, VEL_OFFSET, ACC_OFFSET] {
            v.swap(block, block + 2); // knee x
            v.swap(block + 1, block + 3); // knee y
            v.swap(block + 4, block + 6); // foot x
            v.swap(block + 5, block + 7); // foot y
        }
        FeatureVector { values: v }
    }
}

/// One stored experience record. `shaping_reward` is zero when shaping is
/// disabled; evaluation always reports `env_reward` sums only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: FeatureVector,
    pub action: [f32; NUM_JOINTS],
    pub env_reward: f32,
    pub shaping_reward: f32,
    pub next_obs: FeatureVector,
    pub done: bool,
}

/// Swap left and right in observations and action; rewards and the done
/// flag are invariant under the sagittal symmetry.
pub fn mirror_transition(t: &Transition) -> Transition {
    let mut action = t.action;
    for j in 0..3 {
        action.swap(j, j + 3);
    }
    Transition {
        obs: t.obs.mirrored(),
        action,
        env_reward: t.env_reward,
        shaping_reward: t.shaping_reward,
        next_obs: t.next_obs.mirrored(),
        done: t.done,
    }
}

/// Mirror a keypoint set (swap knees and feet); used when mirroring
/// whole histories.
pub fn mirror_keypoints(kp: &KeypointSet) -> KeypointSet {
    KeypointSet {
        pelvis: kp.pelvis,
        r_knee: kp.l_knee,
        l_knee: kp.r_knee,
        r_foot: kp.l_foot,
        l_foot: kp.r_foot,
    }
}

/// Build the observation from the keypoint history and the current state.
///
/// `window` holds the keypoint sets of the most recent control steps in
/// chronological order, the current one last. Histories shorter than three
/// frames are bootstrapped by repeating the oldest frame. Velocities are
/// backward differences of the pelvis-relative coordinates over
/// `dt_control`; accelerations are second backward differences.
pub fn build_observation(
    window: &[KeypointSet],
    state: &SimState,
    dt_control: f64,
) -> Result<FeatureVector> {
    if !(dt_control > 0.0) {
        return Err(Error::Config(format!(
            "dt_control must be > 0, got {dt_control}"
        )));
    }
    if window.is_empty() {
        return Err(Error::Contract("observation window is empty".into()));
    }
    let n = window.len();
    let cur = &window[n - 1];
    let prev = if n >= 2 { &window[n - 2] } else { &window[0] };
    let prev2 = if n >= 3 { &window[n - 3] } else { &window[0] };

    let rel_cur = cur.pelvis_relative();
    let rel_prev = prev.pelvis_relative();
    let rel_prev2 = prev2.pelvis_relative();

    let mut values = [0.0f32; FEATURE_LEN];
    values[0] = state.pelvis_rot as f32;
    values[1] = state.pelvis_angvel as f32;
    values[2] = state.pelvis_vel[0] as f32;
    values[3] = state.pelvis_vel[1] as f32;
    for j in 0..NUM_JOINTS {
        values[4 + j] = state.joint_angle[j] as f32;
        values[4 + NUM_JOINTS + j] = state.joint_angvel[j] as f32;
    }
    for p in 0..4 {
        for c in 0..2 {
            let k = 2 * p + c;
            let x0 = rel_prev2[p][c];
            let x1 = rel_prev[p][c];
            let x2 = rel_cur[p][c];
            values[REL_OFFSET + k] = x2 as f32;
            values[VEL_OFFSET + k] = ((x2 - x1) / dt_control) as f32;
            values[ACC_OFFSET + k] = ((x2 - 2.0 * x1 + x0) / (dt_control * dt_control)) as f32;
        }
    }
    Ok(FeatureVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{self, EnvConfig};

    fn kp(rel: [[f64; 2]; 4], pelvis: [f64; 2]) -> KeypointSet {
        KeypointSet {
            pelvis,
            r_knee: [pelvis[0] + rel[0][0], pelvis[1] + rel[0][1]],
            l_knee: [pelvis[0] + rel[1][0], pelvis[1] + rel[1][1]],
            r_foot: [pelvis[0] + rel[2][0], pelvis[1] + rel[2][1]],
            l_foot: [pelvis[0] + rel[3][0], pelvis[1] + rel[3][1]],
        }
    }

    fn some_state() -> SimState {
        sim::reset(&EnvConfig::default(), 17).unwrap()
    }

    #[test]
    fn length_is_forty() {
        assert_eq!(FEATURE_LEN, 40);
        let frame = kp([[0.1, -0.4]; 4], [0.0, 0.9]);
        let obs = build_observation(&[frame, frame, frame], &some_state(), 0.03).unwrap();
        assert_eq!(obs.values.len(), 40);
    }

    #[test]
    fn constant_frames_zero_vel_and_acc() {
        let frame = kp([[0.2, -0.5], [-0.2, -0.5], [0.3, -0.9], [-0.3, -0.9]], [1.0, 0.9]);
        let obs = build_observation(&[frame, frame, frame], &some_state(), 0.03).unwrap();
        for k in 0..KEYPOINT_LEN {
            assert_eq!(obs.values[VEL_OFFSET + k], 0.0);
            assert_eq!(obs.values[ACC_OFFSET + k], 0.0);
        }
    }

    #[test]
    fn linear_motion_exact_velocity_zero_acceleration() {
        let frames = [
            kp([[0.0, -0.5]; 4], [0.0, 0.9]),
            kp([[0.1, -0.5]; 4], [0.0, 0.9]),
            kp([[0.2, -0.5]; 4], [0.0, 0.9]),
        ];
        let obs = build_observation(&frames, &some_state(), 0.03).unwrap();
        let vel = obs.values[VEL_OFFSET];
        assert!((vel as f64 - 0.1 / 0.03).abs() < 1e-5, "vel {vel}");
        assert_eq!(obs.values[ACC_OFFSET], 0.0);
    }

    #[test]
    fn quadratic_signal_recovers_acceleration() {
        // x(t) = t^2 sampled at t = 0, 0.03, 0.06; exact second derivative 2
        let x = |t: f64| t * t;
        let frames = [
            kp([[x(0.0), -0.5]; 4], [0.0, 0.9]),
            kp([[x(0.03), -0.5]; 4], [0.0, 0.9]),
            kp([[x(0.06), -0.5]; 4], [0.0, 0.9]),
        ];
        let obs = build_observation(&frames, &some_state(), 0.03).unwrap();
        let acc = obs.values[ACC_OFFSET] as f64;
        assert!((acc - 2.0).abs() < 1e-6, "acc {acc}");
    }

    #[test]
    fn bootstrap_repeats_first_frame() {
        let f0 = kp([[0.1, -0.4]; 4], [0.0, 0.9]);
        let single = build_observation(&[f0], &some_state(), 0.03).unwrap();
        let triple = build_observation(&[f0, f0, f0], &some_state(), 0.03).unwrap();
        assert_eq!(single, triple);

        let f1 = kp([[0.2, -0.4]; 4], [0.0, 0.9]);
        let double = build_observation(&[f0, f1], &some_state(), 0.03).unwrap();
        let padded = build_observation(&[f0, f0, f1], &some_state(), 0.03).unwrap();
        assert_eq!(double, padded);
    }

    #[test]
    fn non_positive_dt_control_is_config_error() {
        let f = kp([[0.1, -0.4]; 4], [0.0, 0.9]);
        assert!(matches!(
            build_observation(&[f, f, f], &some_state(), 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pelvis_motion_cancels_in_relative_features() {
        // same pose, pelvis translating: relative coordinates constant
        let rel = [[0.1, -0.5], [-0.1, -0.5], [0.25, -0.85], [-0.25, -0.85]];
        let frames = [
            kp(rel, [0.0, 0.9]),
            kp(rel, [0.5, 0.9]),
            kp(rel, [1.0, 0.9]),
        ];
        let obs = build_observation(&frames, &some_state(), 0.03).unwrap();
        // cancellation is exact up to float rounding in (pelvis + rel) - pelvis
        for k in 0..KEYPOINT_LEN {
            assert!(obs.values[VEL_OFFSET + k].abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn mirror_transition_is_an_involution() {
        let cfg = EnvConfig::default();
        let state = sim::reset(&cfg, 23).unwrap();
        let frames = [
            sim::keypoints(&state, &cfg),
            sim::keypoints(&state, &cfg),
            sim::keypoints(&state, &cfg),
        ];
        let obs = build_observation(&frames, &state, 0.03).unwrap();
        let t = Transition {
            obs,
            action: [0.1, 0.2, 0.3, -0.4, -0.5, -0.6],
            env_reward: 0.25,
            shaping_reward: -0.5,
            next_obs: obs,
            done: false,
        };
        let mm = mirror_transition(&mirror_transition(&t));
        assert_eq!(mm, t);
    }

    #[test]
    fn symmetric_obs_is_mirror_fixed_point() {
        let rel = [[0.1, -0.5], [0.1, -0.5], [0.2, -0.85], [0.2, -0.85]];
        let mut state = some_state();
        state.joint_angle = [0.3, -0.6, 0.1, 0.3, -0.6, 0.1];
        state.joint_angvel = [1.0, 0.5, -0.5, 1.0, 0.5, -0.5];
        let f = kp(rel, [0.0, 0.9]);
        let obs = build_observation(&[f, f, f], &state, 0.03).unwrap();
        let t = Transition {
            obs,
            action: [0.5, 0.4, 0.3, 0.2, 0.1, 0.0],
            env_reward: 1.0,
            shaping_reward: 0.0,
            next_obs: obs,
            done: true,
        };
        let m = mirror_transition(&t);
        assert_eq!(m.obs, t.obs);
        assert_eq!(m.action, [0.2, 0.1, 0.0, 0.5, 0.4, 0.3]);
        assert_eq!(m.done, t.done);
    }

    #[test]
    fn mirroring_commutes_with_featurization() {
        use rand::{Rng, SeedableRng};
        let cfg = EnvConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut state = sim::reset(&cfg, rng.gen()).unwrap();
            for j in 0..NUM_JOINTS {
                state.joint_angle[j] = rng.gen_range(cfg.joint_limits[j][0]..cfg.joint_limits[j][1]);
                state.joint_angvel[j] = rng.gen_range(-5.0..5.0);
            }
            let mut history = Vec::new();
            let mut s = state.clone();
            for _ in 0..3 {
                history.push(sim::keypoints(&s, &cfg));
                let (n, _, _) = sim::step(
                    &s,
                    &crate::sim::Action {
                        torque: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                    },
                    &cfg,
                )
                .unwrap();
                s = n;
            }

            let obs = build_observation(&history, &s, 0.03).unwrap();
            let mirrored_history: Vec<KeypointSet> =
                history.iter().map(mirror_keypoints).collect();
            let (ms, _) = sim::mirror(&s, &crate::sim::Action::zero());
            let obs_of_mirror = build_observation(&mirrored_history, &ms, 0.03).unwrap();
            for k in 0..FEATURE_LEN {
                let a = obs.mirrored().values[k];
                let b = obs_of_mirror.values[k];
                assert!(
                    (a - b).abs() < 1e-9,
                    "feature {k}: {a} vs {b}"
                );
            }
        }
    }
}
