//! Potential functions over body-part distances and the potential-based
//! shaping reward F(s,s') = gamma * phi(s') - phi(s).
//!
//! Potentials are evaluated in pelvis-relative coordinates on both sides,
//! so shaping is invariant to where the runner is along the track.

use crate::demo::DemoFrame;
use crate::error::{Error, Result};
use crate::sim::KeypointSet;

/// Inverse-distance flavor used for each body part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// 1 / (dx + dy)
    Pf1,
    /// 1 / sqrt(dx^2 + dy^2)
    Pf2,
    /// 1 / (dx^2 + dy^2)
    Pf3,
}

impl PotentialKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pf1" => Ok(Self::Pf1),
            "pf2" => Ok(Self::Pf2),
            "pf3" => Ok(Self::Pf3),
            other => Err(Error::Config(format!(
                "unknown potential kind `{other}`, expected PF1|PF2|PF3"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pf1 => "PF1",
            Self::Pf2 => "PF2",
            Self::Pf3 => "PF3",
        }
    }
}

/// Configuration for the keypoint-matching potential.
#[derive(Debug, Clone)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    /// Denominator clamp; all three inverses are singular at zero distance.
    pub epsilon: f64,
    /// Weights for r_knee, l_knee, r_foot, l_foot in that order.
    pub part_weights: [f64; 4],
    /// Must equal the agent's discount factor.
    pub gamma: f64,
    /// Optional absolute pelvis-height term: when set, adds
    /// `part_potential(0, |pelvis_y - target|)` to the sum. Off by default;
    /// the four tracked parts are already pelvis-relative so a pelvis term
    /// would otherwise be a constant.
    pub pelvis_height_target: Option<f64>,
}

impl PotentialConfig {
    pub fn new(kind: PotentialKind, gamma: f64) -> Self {
        Self {
            kind,
            epsilon: 1e-3,
            part_weights: [1.0; 4],
            gamma,
            pelvis_height_target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "potential epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "potential gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.part_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("part weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Potential of a single body part at absolute coordinate differences
/// (dx, dy). The denominator is clamped at `epsilon` so the value stays
/// finite when the part sits exactly on its target.
pub fn part_potential(dx: f64, dy: f64, kind: PotentialKind, epsilon: f64) -> Result<f64> {
    if dx < 0.0 || dy < 0.0 || !dx.is_finite() || !dy.is_finite() {
        return Err(Error::Contract(format!(
            "part_potential expects non-negative finite distances, got dx={dx}, dy={dy}"
        )));
    }
    let denom = match kind {
        PotentialKind::Pf1 => dx + dy,
        PotentialKind::Pf2 => (dx * dx + dy * dy).sqrt(),
        PotentialKind::Pf3 => dx * dx + dy * dy,
    };
    Ok(1.0 / denom.max(epsilon))
}

/// Weighted sum of part potentials between the agent's keypoints and a
/// demonstration frame. Agent keypoints are brought into the demo's
/// pelvis-relative frame here by subtracting the pelvis entry.
pub fn state_potential(
    agent: &KeypointSet,
    target: &DemoFrame,
    cfg: &PotentialConfig,
) -> Result<f64> {
    let rel = |p: [f64; 2]| [p[0] - agent.pelvis[0], p[1] - agent.pelvis[1]];
    let agent_parts = [
        rel(agent.r_knee),
        rel(agent.l_knee),
        rel(agent.r_foot),
        rel(agent.l_foot),
    ];
    let target_parts = [target.r_knee, target.l_knee, target.r_foot, target.l_foot];

    let mut phi = 0.0;
    for i in 0..4 {
        let dx = (agent_parts[i][0] - target_parts[i][0]).abs();
        let dy = (agent_parts[i][1] - target_parts[i][1]).abs();
        phi += cfg.part_weights[i] * part_potential(dx, dy, cfg.kind, cfg.epsilon)?;
    }
    if let Some(h) = cfg.pelvis_height_target {
        phi += part_potential(0.0, (agent.pelvis[1] - h).abs(), cfg.kind, cfg.epsilon)?;
    }
    Ok(phi)
}

/// F(s,s') = gamma * phi(s') - phi(s).
pub fn shaping_reward(phi_s: f64, phi_s_next: f64, gamma: f64) -> f64 {
    gamma * phi_s_next - phi_s
}
