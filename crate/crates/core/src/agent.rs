//! DDPG training loop: seeded exploration, action repeat, replay with
//! mirrored augmentation, critic/target regression, deterministic
//! policy-gradient actor updates, and optional potential-based shaping
//! added to the stored reward.
//!
//! One transition is recorded per control step: the observation at
//! decision time, the state after `action_repeat` physics steps, and the
//! environment reward summed over those steps. Potentials are evaluated
//! at control states, with the demo frame indexed by the episode's
//! control step.

use crate::demo::{phase_lookup, DemoTrack};
use crate::error::{Error, Result};
use crate::featurize::{
    build_observation, mirror_transition, FeatureVector, Transition, FEATURE_LEN,
};
use crate::neural::{Mlp, OutputActivation};
use crate::shaping::{shaping_reward, state_potential, PotentialConfig};
use crate::sim::{Action, Env, EnvConfig, KeypointSet, TrajectoryRow, NUM_JOINTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Training hyperparameters. The tabular rig keeps the experiments'
/// single learning rate literally; here it maps onto the standard DDPG
/// per-network Adam rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub actor_lr: f32,
    pub critic_lr: f32,
    pub gamma: f64,
    pub tau: f32,
    pub batch_size: usize,
    /// Exploration noise start, floor, and decay horizon in control steps.
    pub noise_sigma: f64,
    pub noise_sigma_final: f64,
    pub noise_decay_steps: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.9,
            tau: 0.005,
            batch_size: 64,
            noise_sigma: 0.2,
            noise_sigma_final: 0.05,
            noise_decay_steps: 50_000,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be > 0".into()));
        }
        if self.noise_sigma < 0.0 || self.noise_sigma_final < 0.0 {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Shaping inputs: a normalized demo track plus the potential settings.
#[derive(Debug, Clone)]
pub struct ShapingSetup {
    pub potential: PotentialConfig,
    pub track: DemoTrack,
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Hidden layer widths; input/output widths are fixed by the task.
    pub hidden: Vec<usize>,
    pub hyper: TrainHyper,
    pub action_repeat: usize,
    pub mirror_augment: bool,
    pub replay_capacity: usize,
    /// Uniform-random control steps taken before the actor drives
    /// exploration.
    pub warmup_random_steps: u64,
    pub shaping: Option<ShapingSetup>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128; 5],
            hyper: TrainHyper::default(),
            action_repeat: 3,
            mirror_augment: true,
            replay_capacity: 1_000_000,
            warmup_random_steps: 1_000,
            shaping: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.action_repeat < 1 {
            return Err(Error::Config("action_repeat must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|w| *w == 0) {
            return Err(Error::Config(format!("bad hidden topology {:?}", self.hidden)));
        }
        if self.replay_capacity < self.hyper.batch_size {
            return Err(Error::Config("replay capacity below batch size".into()));
        }
        if let Some(shaping) = &self.shaping {
            shaping.potential.validate()?;
            if shaping.potential.gamma != self.hyper.gamma {
                return Err(Error::Config(format!(
                    "shaping gamma {} must equal the agent's gamma {}",
                    shaping.potential.gamma, self.hyper.gamma
                )));
            }
            if shaping.track.is_empty() {
                return Err(Error::Config("shaping demo track is empty".into()));
            }
        }
        Ok(())
    }

    pub fn actor_topology(&self) -> Vec<usize> {
        let mut t = vec![FEATURE_LEN];
        t.extend_from_slice(&self.hidden);
        t.push(NUM_JOINTS);
        t
    }

    pub fn critic_topology(&self) -> Vec<usize> {
        let mut t = vec![FEATURE_LEN + NUM_JOINTS];
        t.extend_from_slice(&self.hidden);
        t.push(1);
        t
    }
}

/// Ring-buffer replay storage with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            data: Vec::new(),
            capacity,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform with replacement; deterministic given seed and call order.
    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.rng.gen_range(0..self.data.len())).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// The four networks plus exploration state and instrumentation counters.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: AgentConfig,
    actor: Mlp<f32>,
    critic: Mlp<f32>,
    target_actor: Mlp<f32>,
    target_critic: Mlp<f32>,
    noise_rng: ChaCha8Rng,
    /// control decisions taken while exploring (drives noise decay)
    pub explore_steps: u64,
    actor_eval_count: u64,
    batch_contributions: u64,
}

impl DdpgAgent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::new(&config.actor_topology(), OutputActivation::Tanh, seed ^ 0xA0)?;
        let critic = Mlp::new(&config.critic_topology(), OutputActivation::Identity, seed ^ 0xC0)?;
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        Ok(Self {
            config,
            actor,
            critic,
            target_actor,
            target_critic,
            noise_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x4E),
            explore_steps: 0,
            actor_eval_count: 0,
            batch_contributions: 0,
        })
    }

    /// Rebuild an agent around a saved actor (critic freshly initialized);
    /// enough to run the policy.
    pub fn from_actor(config: AgentConfig, actor: Mlp<f32>, seed: u64) -> Result<Self> {
        let mut agent = Self::new(config, seed)?;
        if actor.topology() != agent.actor.topology() {
            return Err(Error::Checkpoint(format!(
                "actor topology {:?} does not match configured {:?}",
                actor.topology(),
                agent.actor.topology()
            )));
        }
        agent.target_actor = actor.clone();
        agent.actor = actor;
        Ok(agent)
    }

    pub fn actor(&self) -> &Mlp<f32> {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp<f32> {
        &self.critic
    }

    pub fn actor_eval_count(&self) -> u64 {
        self.actor_eval_count
    }

    pub fn batch_contributions(&self) -> u64 {
        self.batch_contributions
    }

    pub fn current_sigma(&self) -> f64 {
        let h = &self.config.hyper;
        if h.noise_decay_steps == 0 {
            return h.noise_sigma_final;
        }
        let frac = (self.explore_steps as f64 / h.noise_decay_steps as f64).min(1.0);
        h.noise_sigma + (h.noise_sigma_final - h.noise_sigma) * frac
    }

    /// Deterministic tanh-bounded policy; with `explore`, adds seeded
    /// Gaussian noise at the current sigma and clamps to [-1, 1].
    pub fn act(&mut self, obs: &FeatureVector, explore: bool) -> Result<Action> {
        let out = self.actor.forward(&obs.values)?;
        self.actor_eval_count += 1;
        let mut torque = [0.0f64; NUM_JOINTS];
        for (t, o) in torque.iter_mut().zip(out.iter()) {
            *t = *o as f64;
        }
        if explore {
            let sigma = self.current_sigma();
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("sigma validated");
                for t in torque.iter_mut() {
                    *t = (*t + normal.sample(&mut self.noise_rng)).clamp(-1.0, 1.0);
                }
            }
            self.explore_steps += 1;
        }
        Ok(Action { torque })
    }

    fn random_action(&mut self) -> Action {
        Action {
            torque: std::array::from_fn(|_| self.noise_rng.gen_range(-1.0..1.0)),
        }
    }

    /// One critic + actor + target update from a sampled batch. Returns
    /// `None` (no-op) while the buffer holds fewer than `batch_size`
    /// transitions.
    pub fn train_batch(&mut self, buffer: &mut ReplayBuffer) -> Result<Option<TrainStats>> {
        let bsz = self.config.hyper.batch_size;
        if buffer.len() < bsz {
            return Ok(None);
        }
        let idx = buffer.sample_indices(bsz);
        let mut batch: Vec<Transition> = idx.iter().map(|i| *buffer.get(*i)).collect();
        if self.config.mirror_augment {
            for i in 0..bsz {
                batch.push(mirror_transition(&batch[i]));
            }
        }
        let stats = self.train_on_transitions(&batch)?;
        Ok(Some(stats))
    }

    /// Core update on an explicit transition list (used by `train_batch`
    /// and by tests that need a frozen batch).
    pub fn train_on_transitions(&mut self, batch: &[Transition]) -> Result<TrainStats> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Contract("empty training batch".into()));
        }
        self.batch_contributions += b as u64;
        let gamma = self.config.hyper.gamma as f32;
        let obs_dim = FEATURE_LEN;
        let act_dim = NUM_JOINTS;
        let in_dim = obs_dim + act_dim;

        let mut obs = Vec::with_capacity(b * obs_dim);
        let mut next_obs = Vec::with_capacity(b * obs_dim);
        let mut critic_in = Vec::with_capacity(b * in_dim);
        for t in batch {
            obs.extend_from_slice(&t.obs.values);
            next_obs.extend_from_slice(&t.next_obs.values);
            critic_in.extend_from_slice(&t.obs.values);
            critic_in.extend_from_slice(&t.action);
        }

        // y = (r_env + F) + gamma * Q_target(s', mu_target(s')) * (1 - done)
        let next_actions = self.target_actor.forward_batch(&next_obs, b)?;
        let mut target_in = Vec::with_capacity(b * in_dim);
        for i in 0..b {
            target_in.extend_from_slice(&next_obs[i * obs_dim..(i + 1) * obs_dim]);
            target_in.extend_from_slice(&next_actions[i * act_dim..(i + 1) * act_dim]);
        }
        let next_q = self.target_critic.forward_batch(&target_in, b)?;
        let mut y = vec![0.0f32; b];
        for i in 0..b {
            let r = batch[i].env_reward + batch[i].shaping_reward;
            y[i] = if batch[i].done { r } else { r + gamma * next_q[i] };
        }

        // critic regression toward y
        let q = self.critic.forward_batch(&critic_in, b)?;
        let inv_b = 1.0f32 / b as f32;
        let mut upstream = vec![0.0f32; b];
        let mut loss = 0.0f64;
        for i in 0..b {
            let e = q[i] - y[i];
            loss += (e as f64) * (e as f64);
            upstream[i] = 2.0 * e * inv_b;
        }
        loss /= b as f64;
        let (critic_grads, _) = self.critic.backward_batch(&critic_in, &upstream, b)?;
        self.critic.adam_step(&critic_grads, self.config.hyper.critic_lr)?;

        // actor ascends dQ/da through the critic
        let actions = self.actor.forward_batch(&obs, b)?;
        let mut q_in = Vec::with_capacity(b * in_dim);
        for i in 0..b {
            q_in.extend_from_slice(&obs[i * obs_dim..(i + 1) * obs_dim]);
            q_in.extend_from_slice(&actions[i * act_dim..(i + 1) * act_dim]);
        }
        let q_of_mu = self.critic.forward_batch(&q_in, b)?;
        let actor_objective = q_of_mu.iter().map(|v| *v as f64).sum::<f64>() / b as f64;
        let ones: Vec<f32> = vec![inv_b; b];
        let (_, dq_din) = self.critic.backward_batch(&q_in, &ones, b)?;
        let mut actor_upstream = vec![0.0f32; b * act_dim];
        for i in 0..b {
            for j in 0..act_dim {
                // minimize -Q: descend along the negated action gradient
                actor_upstream[i * act_dim + j] = -dq_din[i * in_dim + obs_dim + j];
            }
        }
        let (actor_grads, _) = self.actor.backward_batch(&obs, &actor_upstream, b)?;
        self.actor.adam_step(&actor_grads, self.config.hyper.actor_lr)?;

        let tau = self.config.hyper.tau;
        self.target_actor.soft_update_from(&self.actor, tau)?;
        self.target_critic.soft_update_from(&self.critic, tau)?;

        Ok(TrainStats {
            critic_loss: loss,
            actor_objective,
        })
    }
}

/// Per-episode bookkeeping: keypoint history for the featurizer, the
/// control-step counter that indexes the demo phase, and return tallies.
#[derive(Debug, Clone)]
pub struct Episode {
    history: Vec<KeypointSet>,
    pub control_step: u64,
    pub obs: FeatureVector,
    pub done: bool,
    pub env_return: f64,
    pub start_x: f64,
    dt_control: f64,
}

impl Episode {
    pub fn begin(env: &Env, action_repeat: usize) -> Result<Self> {
        let dt_control = env.config.dt * action_repeat as f64;
        let kp = env.keypoints();
        let history = vec![kp];
        let obs = build_observation(&history, &env.state, dt_control)?;
        Ok(Self {
            history,
            control_step: 0,
            obs,
            done: false,
            env_return: 0.0,
            start_x: env.state.pelvis_pos[0],
            dt_control,
        })
    }

    pub fn distance(&self, env: &Env) -> f64 {
        env.state.pelvis_pos[0] - self.start_x
    }

    pub fn current_keypoints(&self) -> &KeypointSet {
        self.history.last().unwrap()
    }

    fn push_frame(&mut self, kp: KeypointSet) {
        if self.history.len() == 3 {
            self.history.remove(0);
        }
        self.history.push(kp);
    }
}

/// Everything produced by one control step.
#[derive(Debug, Clone)]
pub struct ControlStepRecord {
    pub transition: Transition,
    /// Physics steps taken (== action_repeat unless the episode ended
    /// mid-repeat).
    pub phys_steps: usize,
    /// One trajectory row per physics step when requested.
    pub phys: Vec<TrajectoryRow>,
    /// 64-bit potentials at the control states bracketing this step, when
    /// shaping is enabled.
    pub phi: Option<(f64, f64)>,
    /// 64-bit shaping reward (the stored f32 is this, narrowed).
    pub shaping_f: f64,
}

fn potential_at(kp: &KeypointSet, shaping: &ShapingSetup, control_step: u64) -> Result<f64> {
    let frame = phase_lookup(&shaping.track, control_step);
    state_potential(kp, frame, &shaping.potential)
}

/// One control decision: a single actor evaluation, the chosen action
/// applied for `action_repeat` physics steps, one summed transition.
pub fn rollout_step(
    agent: &mut DdpgAgent,
    episode: &mut Episode,
    env: &mut Env,
    explore: bool,
    warmup: bool,
    collect_phys: bool,
) -> Result<ControlStepRecord> {
    if episode.done {
        return Err(Error::Contract("rollout_step on a finished episode".into()));
    }
    let action = if warmup {
        agent.random_action()
    } else {
        agent.act(&episode.obs, explore)?
    };

    let phi_s = match &agent.config.shaping {
        Some(sh) => Some(potential_at(
            episode.current_keypoints(),
            sh,
            episode.control_step,
        )?),
        None => None,
    };

    let clamped = action.clamped();
    let mut env_sum = 0.0f64;
    let mut done = false;
    let mut phys = Vec::new();
    let mut phys_steps = 0usize;
    for _ in 0..agent.config.action_repeat {
        let (r, d) = env.step(&clamped)?;
        env_sum += r;
        phys_steps += 1;
        if collect_phys {
            phys.push(TrajectoryRow {
                step_index: env.state.step_index - 1,
                pelvis_x: env.state.pelvis_pos[0],
                pelvis_y: env.state.pelvis_pos[1],
                pelvis_rot: env.state.pelvis_rot,
                joint_angle: env.state.joint_angle,
                torque: clamped.torque,
                reward: r,
                done: d,
            });
        }
        if d {
            done = true;
            break;
        }
    }

    let kp_next = env.keypoints();
    episode.push_frame(kp_next);
    let next_obs = build_observation(&episode.history, &env.state, episode.dt_control)?;

    let (phi, shaping_f) = match (&agent.config.shaping, phi_s) {
        (Some(sh), Some(p_s)) => {
            let p_next = potential_at(&kp_next, sh, episode.control_step + 1)?;
            let f = shaping_reward(p_s, p_next, agent.config.hyper.gamma);
            (Some((p_s, p_next)), f)
        }
        _ => (None, 0.0),
    };

    let mut action_f32 = [0.0f32; NUM_JOINTS];
    for (a, t) in action_f32.iter_mut().zip(clamped.torque.iter()) {
        *a = *t as f32;
    }
    let transition = Transition {
        obs: episode.obs,
        action: action_f32,
        env_reward: env_sum as f32,
        shaping_reward: shaping_f as f32,
        next_obs,
        done,
    };

    episode.obs = next_obs;
    episode.control_step += 1;
    episode.done = done;
    episode.env_return += env_sum;

    Ok(ControlStepRecord {
        transition,
        phys_steps,
        phys,
        phi,
        shaping_f,
    })
}

/// Learning-curve sample. `sim_time_s` is simulated physics time, the
/// deterministic stand-in for a wall clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub run_seed: u64,
    pub sim_time_s: f64,
    pub env_steps: u64,
    pub eval_mean_distance: f64,
    pub eval_mean_env_return: f64,
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    /// Budget in control steps.
    pub budget: u64,
    /// Control steps between evaluation points.
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            budget: 300_000,
            eval_interval: 5_000,
            eval_episodes: 3,
        }
    }
}

pub struct TrainingResult {
    pub curve: Vec<CurvePoint>,
    pub agent: DdpgAgent,
    pub env_steps: u64,
}

pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Noise-free evaluation episodes; reports mean distance covered and
/// mean unshaped return. Shaping never contributes here.
pub fn evaluate(agent: &mut DdpgAgent, env_config: &EnvConfig, seeds: &[u64]) -> Result<(f64, f64)> {
    let mut dist_sum = 0.0;
    let mut ret_sum = 0.0;
    for seed in seeds {
        let mut env = Env::new(env_config.clone(), *seed)?;
        let mut ep = Episode::begin(&env, agent.config.action_repeat)?;
        while !ep.done {
            rollout_step(agent, &mut ep, &mut env, false, false, false)?;
        }
        dist_sum += ep.distance(&env);
        ret_sum += ep.env_return;
    }
    let n = seeds.len() as f64;
    Ok((dist_sum / n, ret_sum / n))
}

/// Full seeded training run producing the learning curve.
pub fn run_training(
    env_config: &EnvConfig,
    agent_config: &AgentConfig,
    seed: u64,
    params: &TrainParams,
) -> Result<TrainingResult> {
    env_config.validate()?;
    let mut agent = DdpgAgent::new(agent_config.clone(), seed)?;
    let mut buffer = ReplayBuffer::new(agent_config.replay_capacity, mix_seed(seed, 0xB0FF));
    let mut reset_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5EED));

    let mut env = Env::new(env_config.clone(), reset_rng.gen())?;
    let mut episode = Episode::begin(&env, agent_config.action_repeat)?;
    let mut env_steps = 0u64;
    let mut curve = Vec::new();
    let mut eval_index = 0u64;

    for control_step in 0..params.budget {
        if control_step % params.eval_interval == 0 {
            let eval_seeds: Vec<u64> = (0..params.eval_episodes)
                .map(|k| mix_seed(seed, 0xE7A1 + eval_index * 131 + k as u64))
                .collect();
            let (dist, ret) = evaluate(&mut agent, env_config, &eval_seeds)?;
            curve.push(CurvePoint {
                run_seed: seed,
                sim_time_s: env_steps as f64 * env_config.dt,
                env_steps,
                eval_mean_distance: dist,
                eval_mean_env_return: ret,
            });
            eval_index += 1;
        }

        let warmup = control_step < agent_config.warmup_random_steps;
        let record = rollout_step(&mut agent, &mut episode, &mut env, true, warmup, false)?;
        env_steps += record.phys_steps as u64;
        buffer.push(record.transition);
        if !warmup {
            agent.train_batch(&mut buffer)?;
        }
        if episode.done {
            env.reset(reset_rng.gen())?;
            episode = Episode::begin(&env, agent_config.action_repeat)?;
        }
    }

    // final evaluation at the budget boundary
    let eval_seeds: Vec<u64> = (0..params.eval_episodes)
        .map(|k| mix_seed(seed, 0xE7A1 + eval_index * 131 + k as u64))
        .collect();
    let (dist, ret) = evaluate(&mut agent, env_config, &eval_seeds)?;
    curve.push(CurvePoint {
        run_seed: seed,
        sim_time_s: env_steps as f64 * env_config.dt,
        env_steps,
        eval_mean_distance: dist,
        eval_mean_env_return: ret,
    });

    Ok(TrainingResult {
        curve,
        agent,
        env_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::load_demo_from_reader;
    use crate::shaping::PotentialKind;

    fn tiny_config() -> AgentConfig {
        AgentConfig {
            hidden: vec![16, 16],
            hyper: TrainHyper {
                batch_size: 4,
                ..TrainHyper::default()
            },
            action_repeat: 3,
            mirror_augment: true,
            replay_capacity: 1_000,
            warmup_random_steps: 0,
            shaping: None,
        }
    }

    fn demo_track() -> DemoTrack {
        let mut text = String::from("frame,part,x,y\n");
        for f in 0..8 {
            let ph = f as f64 * std::f64::consts::FRAC_PI_4;
            text.push_str(&format!("{f},r_knee,{:.4},-0.45\n", 0.2 * ph.sin()));
            text.push_str(&format!("{f},l_knee,{:.4},-0.45\n", -0.2 * ph.sin()));
            text.push_str(&format!("{f},r_foot,{:.4},-0.88\n", 0.3 * ph.sin()));
            text.push_str(&format!("{f},l_foot,{:.4},-0.88\n", -0.3 * ph.sin()));
        }
        load_demo_from_reader(std::io::Cursor::new(text)).unwrap()
    }

    #[test]
    fn act_is_deterministic_without_exploration() {
        let mut agent = DdpgAgent::new(tiny_config(), 7).unwrap();
        let env = Env::new(EnvConfig::default(), 1).unwrap();
        let ep = Episode::begin(&env, 3).unwrap();
        let a1 = agent.act(&ep.obs, false).unwrap();
        let a2 = agent.act(&ep.obs, false).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn zero_sigma_exploration_equals_greedy() {
        let mut cfg = tiny_config();
        cfg.hyper.noise_sigma = 0.0;
        cfg.hyper.noise_sigma_final = 0.0;
        let mut agent = DdpgAgent::new(cfg, 7).unwrap();
        let env = Env::new(EnvConfig::default(), 1).unwrap();
        let ep = Episode::begin(&env, 3).unwrap();
        let greedy = agent.act(&ep.obs, false).unwrap();
        let explore = agent.act(&ep.obs, true).unwrap();
        assert_eq!(greedy, explore);
    }

    #[test]
    fn exploring_actions_stay_clamped() {
        let mut cfg = tiny_config();
        cfg.hyper.noise_sigma = 10.0;
        cfg.hyper.noise_sigma_final = 10.0;
        let mut agent = DdpgAgent::new(cfg, 3).unwrap();
        let env = Env::new(EnvConfig::default(), 1).unwrap();
        let ep = Episode::begin(&env, 3).unwrap();
        for _ in 0..10_000 {
            let a = agent.act(&ep.obs, true).unwrap();
            assert!(a.torque.iter().all(|t| (-1.0..=1.0).contains(t)));
        }
    }

    #[test]
    fn one_actor_call_per_three_env_steps() {
        let cfg = tiny_config();
        let mut agent = DdpgAgent::new(cfg, 11).unwrap();
        let mut env = Env::new(EnvConfig::default(), 2).unwrap();
        let mut ep = Episode::begin(&env, 3).unwrap();
        let start_steps = env.state.step_index;
        for _ in 0..10 {
            rollout_step(&mut agent, &mut ep, &mut env, true, false, false).unwrap();
            assert!(!ep.done);
        }
        assert_eq!(agent.actor_eval_count(), 10);
        assert_eq!(env.state.step_index - start_steps, 30);
    }

    #[test]
    fn action_repeat_one_matches_plain_stepping() {
        let mut cfg = tiny_config();
        cfg.action_repeat = 1;
        let mut agent = DdpgAgent::new(cfg, 5).unwrap();
        let mut env = Env::new(EnvConfig::default(), 9).unwrap();
        let mut ep = Episode::begin(&env, 1).unwrap();
        let rec = rollout_step(&mut agent, &mut ep, &mut env, false, false, true).unwrap();
        assert_eq!(rec.phys_steps, 1);
        assert_eq!(rec.phys.len(), 1);
        assert!((rec.transition.env_reward as f64 - rec.phys[0].reward).abs() < 1e-6);
    }

    #[test]
    fn shaping_rewards_telescope_over_episode() {
        let mut cfg = tiny_config();
        let gamma = cfg.hyper.gamma;
        cfg.shaping = Some(ShapingSetup {
            potential: PotentialConfig::new(PotentialKind::Pf3, gamma),
            track: demo_track(),
        });
        let mut agent = DdpgAgent::new(cfg, 21).unwrap();
        let mut env = Env::new(EnvConfig::default(), 31).unwrap();
        let mut ep = Episode::begin(&env, 3).unwrap();
        let mut fs: Vec<f64> = Vec::new();
        let mut phi0 = None;
        let mut phi_last = 0.0;
        while !ep.done && ep.control_step < 200 {
            let rec = rollout_step(&mut agent, &mut ep, &mut env, true, true, false).unwrap();
            let (p_s, p_next) = rec.phi.unwrap();
            if phi0.is_none() {
                phi0 = Some(p_s);
            }
            phi_last = p_next;
            fs.push(rec.shaping_f);
        }
        let t = fs.len() as f64;
        let lhs: f64 = fs
            .iter()
            .enumerate()
            .map(|(k, f)| gamma.powi(k as i32) * f)
            .sum();
        let rhs = gamma.powi(fs.len() as i32) * phi_last - phi0.unwrap();
        assert!(
            (lhs - rhs).abs() < 1e-9 * t.max(1.0),
            "telescoping violated: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn mismatched_shaping_gamma_rejected() {
        let mut cfg = tiny_config();
        cfg.hyper.gamma = 0.9;
        cfg.shaping = Some(ShapingSetup {
            potential: PotentialConfig::new(PotentialKind::Pf2, 0.95),
            track: demo_track(),
        });
        assert!(matches!(DdpgAgent::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn train_batch_is_noop_below_batch_size() {
        let mut agent = DdpgAgent::new(tiny_config(), 13).unwrap();
        let mut buffer = ReplayBuffer::new(100, 1);
        assert!(agent.train_batch(&mut buffer).unwrap().is_none());
        assert_eq!(agent.batch_contributions(), 0);
    }

    #[test]
    fn mirror_augment_doubles_batch_contributions() {
        let mut agent = DdpgAgent::new(tiny_config(), 13).unwrap();
        let mut buffer = ReplayBuffer::new(100, 1);
        let mut env = Env::new(EnvConfig::default(), 3).unwrap();
        let mut ep = Episode::begin(&env, 3).unwrap();
        for _ in 0..8 {
            let rec = rollout_step(&mut agent, &mut ep, &mut env, true, true, false).unwrap();
            buffer.push(rec.transition);
            if ep.done {
                env.reset(4).unwrap();
                ep = Episode::begin(&env, 3).unwrap();
            }
        }
        agent.train_batch(&mut buffer).unwrap().unwrap();
        assert_eq!(agent.batch_contributions(), 8); // batch_size 4, doubled

        let mut plain_cfg = tiny_config();
        plain_cfg.mirror_augment = false;
        let mut plain = DdpgAgent::new(plain_cfg, 13).unwrap();
        plain.train_batch(&mut buffer).unwrap().unwrap();
        assert_eq!(plain.batch_contributions(), 4);
    }

    // Hand-computed targets: freeze a 2-transition batch, read the target
    // nets' outputs through the public forward path, and reproduce y.
    #[test]
    fn targets_match_hand_computation() {
        let mut agent = DdpgAgent::new(tiny_config(), 17).unwrap();
        let mut env = Env::new(EnvConfig::default(), 23).unwrap();
        let mut ep = Episode::begin(&env, 3).unwrap();
        let r1 = rollout_step(&mut agent, &mut ep, &mut env, true, true, false).unwrap();
        let r2 = rollout_step(&mut agent, &mut ep, &mut env, true, true, false).unwrap();
        let mut done_t = r2.transition;
        done_t.done = true;

        let batch = vec![r1.transition, done_t];
        let gamma = agent.config.hyper.gamma as f32;

        // expected targets via the target networks before training mutates them
        let mut expected = Vec::new();
        for t in &batch {
            let mu = agent.target_actor.forward(&t.next_obs.values).unwrap();
            let mut qin: Vec<f32> = t.next_obs.values.to_vec();
            qin.extend_from_slice(&mu);
            let qn = agent.target_critic.forward(&qin).unwrap()[0];
            let r = t.env_reward + t.shaping_reward;
            expected.push(if t.done { r } else { r + gamma * qn });
        }
        // done transition: y must be exactly r (+F), no bootstrap
        assert_eq!(expected[1], batch[1].env_reward + batch[1].shaping_reward);

        // reproduce the loss the update reports from those targets
        let mut qin_all = Vec::new();
        for t in &batch {
            qin_all.extend_from_slice(&t.obs.values);
            qin_all.extend_from_slice(&t.action);
        }
        let q = agent.critic.forward_batch(&qin_all, 2).unwrap();
        let expect_loss: f64 = q
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / 2.0;

        let stats = agent.train_on_transitions(&batch).unwrap();
        assert!(
            (stats.critic_loss - expect_loss).abs() < 1e-9 * expect_loss.abs().max(1.0),
            "loss {} vs {}",
            stats.critic_loss,
            expect_loss
        );
    }

    #[test]
    fn critic_overfits_frozen_batch() {
        let mut cfg = tiny_config();
        cfg.hyper.critic_lr = 1e-2;
        let mut agent = DdpgAgent::new(cfg, 29).unwrap();
        let mut env = Env::new(EnvConfig::default(), 37).unwrap();
        let mut ep = Episode::begin(&env, 3).unwrap();
        let mut batch = Vec::new();
        for _ in 0..3 {
            let rec = rollout_step(&mut agent, &mut ep, &mut env, true, true, false).unwrap();
            batch.push(rec.transition);
        }
        let mut losses = Vec::new();
        for _ in 0..500 {
            let stats = agent.train_on_transitions(&batch).unwrap();
            losses.push(stats.critic_loss);
        }
        // after an initial transient the loss trend is monotone down
        for k in 50..losses.len() {
            assert!(
                losses[k] <= losses[k - 1] * 1.05 + 1e-12,
                "loss rose at step {k}: {} -> {}",
                losses[k - 1],
                losses[k]
            );
        }
        assert!(losses[499] < losses[50]);
    }

    #[test]
    fn replay_buffer_wraps_at_capacity() {
        let mut agent = DdpgAgent::new(tiny_config(), 1).unwrap();
        let mut env = Env::new(EnvConfig::default(), 2).unwrap();
        let mut ep = Episode::begin(&env, 3).unwrap();
        let rec = rollout_step(&mut agent, &mut ep, &mut env, true, true, false).unwrap();
        let mut buffer = ReplayBuffer::new(5, 0);
        for _ in 0..12 {
            buffer.push(rec.transition);
        }
        assert_eq!(buffer.len(), 5);
    }
}
