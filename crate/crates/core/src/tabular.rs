//! Small-scale ground-truth rig: a deterministic gridworld, literal
//! tabular Q-learning with and without potential-based shaping, and a
//! value-iteration oracle. Everything here is 64-bit; the module exists
//! to verify identities exactly, not to train fast.
//!
//! Terminal convention: episodes end on arrival at the goal. The goal
//! payout enters the backup as the bootstrap value of the goal state, so
//! a one-step world has V*(start) = step_reward + gamma * goal_reward.
//! The goal row of every Q-table is pinned to `goal_reward` to make the
//! literal `max Q(s',a')` arithmetic produce that bootstrap; reported
//! state values treat the goal itself as worth 0 (no continuation).
//! Potentials are always taken as 0 at the goal, the episodic shaping
//! requirement.

use crate::error::{Error, Result};
use crate::shaping::shaping_reward;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// Actions in fixed tie-break order; greedy choices scan this order and
/// keep the first maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
}

pub const ACTIONS: [GridAction; 4] = [
    GridAction::Up,
    GridAction::Down,
    GridAction::Left,
    GridAction::Right,
];

impl GridAction {
    pub fn index(&self) -> usize {
        match self {
            GridAction::Up => 0,
            GridAction::Down => 1,
            GridAction::Left => 2,
            GridAction::Right => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GridAction::Up => "up",
            GridAction::Down => "down",
            GridAction::Left => "left",
            GridAction::Right => "right",
        }
    }

    fn delta(&self) -> (i64, i64) {
        match self {
            GridAction::Up => (0, -1),
            GridAction::Down => (0, 1),
            GridAction::Left => (-1, 0),
            GridAction::Right => (1, 0),
        }
    }
}

/// Deterministic gridworld; walls absorb (moving off-grid stays put).
#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub step_reward: f64,
    pub goal_reward: f64,
}

impl Default for Gridworld {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            start: (0, 0),
            goal: (4, 4),
            step_reward: -1.0,
            goal_reward: 10.0,
        }
    }
}

impl Gridworld {
    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state_index(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.width + cell.0
    }

    pub fn cell_of(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    pub fn goal_state(&self) -> usize {
        self.state_index(self.goal)
    }

    pub fn next_state(&self, state: usize, action: GridAction) -> usize {
        let (x, y) = self.cell_of(state);
        let (dx, dy) = action.delta();
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            state
        } else {
            self.state_index((nx as usize, ny as usize))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("gridworld dimensions must be positive".into()));
        }
        for (name, cell) in [("start", self.start), ("goal", self.goal)] {
            if cell.0 >= self.width || cell.1 >= self.height {
                return Err(Error::Config(format!("{name} cell {cell:?} out of bounds")));
            }
        }
        if self.start == self.goal {
            return Err(Error::Config("start equals goal".into()));
        }
        Ok(())
    }
}

/// Q-table initialization mode.
#[derive(Debug, Clone)]
pub enum QInit {
    Zeros,
    /// Q0(s, a) = potential[s] for non-goal states (Wiewiora init).
    Potential(Vec<f64>),
}

/// Q[state][action] in 64-bit, goal row pinned to the goal payout.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub q: Vec<[f64; 4]>,
    pub goal_state: usize,
}

impl QTable {
    pub fn new(world: &Gridworld, init: QInit) -> Result<Self> {
        world.validate()?;
        let goal = world.goal_state();
        let mut q = vec![[0.0f64; 4]; world.num_states()];
        if let QInit::Potential(phi) = &init {
            if phi.len() != world.num_states() {
                return Err(Error::Shape(format!(
                    "potential has {} entries for {} states",
                    phi.len(),
                    world.num_states()
                )));
            }
            for (s, row) in q.iter_mut().enumerate() {
                if s != goal {
                    *row = [phi[s]; 4];
                }
            }
        }
        q[goal] = [world.goal_reward; 4];
        Ok(Self { q, goal_state: goal })
    }

    pub fn max_value(&self, state: usize) -> f64 {
        let row = &self.q[state];
        let mut best = row[0];
        for v in &row[1..] {
            if *v > best {
                best = *v;
            }
        }
        best
    }

    /// Greedy action under the fixed tie-break: values within `TIE_TOL`
    /// of the row maximum count as tied and the first tied action in
    /// up/down/left/right order wins. Genuine action gaps in these worlds
    /// are orders of magnitude above the tolerance; the snap only absorbs
    /// float residue on exactly-tied optimal actions.
    pub fn greedy_action(&self, state: usize) -> GridAction {
        greedy_with_tiebreak(&self.q[state])
    }

    pub fn greedy_policy(&self) -> Vec<GridAction> {
        (0..self.q.len()).map(|s| self.greedy_action(s)).collect()
    }
}

/// Numerical tie tolerance for greedy extraction.
pub const TIE_TOL: f64 = 1e-9;

fn greedy_with_tiebreak(row: &[f64; 4]) -> GridAction {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (i, v) in row.iter().enumerate() {
        if max - *v <= TIE_TOL {
            return ACTIONS[i];
        }
    }
    ACTIONS[0]
}

/// One shaped Q-learning update:
/// `Q(s,a) += alpha * (r + F + gamma * max Q(s',a') - Q(s,a))`.
/// The unshaped rule is the `F = 0` case of the same arithmetic.
pub fn q_update(
    table: &mut QTable,
    state: usize,
    action: GridAction,
    reward: f64,
    next_state: usize,
    alpha: f64,
    gamma: f64,
    shaping: f64,
) {
    let a = action.index();
    let target = reward + shaping + gamma * table.max_value(next_state);
    let q = &mut table.q[state][a];
    *q += alpha * (target - *q);
}

/// Optimal values and greedy policy from value iteration.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub policy: Vec<GridAction>,
    pub sweeps: usize,
}

pub fn value_iteration(world: &Gridworld, gamma: f64, tol: f64) -> Result<ValueSolution> {
    world.validate()?;
    let n = world.num_states();
    let goal = world.goal_state();
    let mut values = vec![0.0f64; n];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta = 0.0f64;
        for s in 0..n {
            if s == goal {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in ACTIONS {
                let ns = world.next_state(s, a);
                let boot = if ns == goal { world.goal_reward } else { values[ns] };
                let v = world.step_reward + gamma * boot;
                if v > best {
                    best = v;
                }
            }
            delta = delta.max((best - values[s]).abs());
            values[s] = best;
        }
        if delta < tol || sweeps > 100_000 {
            break;
        }
    }

    let mut policy = Vec::with_capacity(n);
    for s in 0..n {
        if s == goal {
            policy.push(ACTIONS[0]);
            continue;
        }
        let mut row = [0.0f64; 4];
        for (ai, a) in ACTIONS.iter().enumerate() {
            let ns = world.next_state(s, *a);
            let boot = if ns == goal { world.goal_reward } else { values[ns] };
            row[ai] = world.step_reward + gamma * boot;
        }
        policy.push(greedy_with_tiebreak(&row));
    }
    Ok(ValueSolution {
        values,
        policy,
        sweeps,
    })
}

/// Tabular learning parameters. Defaults are the rates used throughout
/// the experiments (alpha 0.08, gamma 0.9).
#[derive(Debug, Clone)]
pub struct TabularHyper {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_final: f64,
    pub max_episode_steps: usize,
}

impl Default for TabularHyper {
    fn default() -> Self {
        Self {
            alpha: 0.08,
            gamma: 0.9,
            epsilon_final: 0.01,
            max_episode_steps: 500,
        }
    }
}

fn epsilon_schedule(episode: u64, total_episodes: u64, final_eps: f64) -> f64 {
    // linear decay reaching the floor halfway through training
    let half = (total_episodes / 2).max(1) as f64;
    (1.0 - episode as f64 / half).max(final_eps)
}

fn epsilon_greedy(table: &QTable, state: usize, epsilon: f64, rng: &mut ChaCha8Rng) -> GridAction {
    if rng.gen_range(0.0..1.0) < epsilon {
        ACTIONS[rng.gen_range(0..4)]
    } else {
        table.greedy_action(state)
    }
}

/// Train one Q-learner. `potential` of None means unshaped; the goal
/// entry of a supplied potential is ignored (terminal potential is 0).
/// Calls `on_episode_end` after each episode with the 1-based count.
fn train_learner<F: FnMut(&QTable, u64)>(
    world: &Gridworld,
    potential: Option<&[f64]>,
    episodes: u64,
    seed: u64,
    hyper: &TabularHyper,
    init: QInit,
    mut on_episode_end: F,
) -> Result<QTable> {
    let mut table = QTable::new(world, init)?;
    let goal = world.goal_state();
    let phi = |s: usize| -> f64 {
        match potential {
            Some(p) if s != goal => p[s],
            _ => 0.0,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in 0..episodes {
        let eps = epsilon_schedule(ep, episodes, hyper.epsilon_final);
        let mut s = world.state_index(world.start);
        for _ in 0..hyper.max_episode_steps {
            let a = epsilon_greedy(&table, s, eps, &mut rng);
            let ns = world.next_state(s, a);
            let shaping = match potential {
                Some(_) => shaping_reward(phi(s), phi(ns), hyper.gamma),
                None => 0.0,
            };
            q_update(&mut table, s, a, world.step_reward, ns, hyper.alpha, hyper.gamma, shaping);
            s = ns;
            if s == goal {
                break;
            }
        }
        on_episode_end(&table, ep + 1);
    }
    Ok(table)
}

/// Per-state outcome of an invariance run.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub world: Gridworld,
    pub oracle_policy: Vec<GridAction>,
    pub shaped_policy: Vec<GridAction>,
    pub unshaped_policy: Vec<GridAction>,
    /// true where the learner's greedy action equals the oracle's
    pub shaped_agreement: Vec<bool>,
    pub unshaped_agreement: Vec<bool>,
    /// episode count at the first checkpoint with 100% agreement
    pub shaped_first_full_agreement: Option<u64>,
    pub unshaped_first_full_agreement: Option<u64>,
}

impl InvarianceReport {
    pub fn shaped_matches_oracle(&self) -> bool {
        self.shaped_agreement.iter().all(|b| *b)
    }

    pub fn unshaped_matches_oracle(&self) -> bool {
        self.unshaped_agreement.iter().all(|b| *b)
    }

    /// Plain-text agreement table, one row per grid row.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("state,per-cell agreement (S=shaped ok, U=unshaped ok)\n");
        for y in 0..self.world.height {
            let mut line = String::new();
            for x in 0..self.world.width {
                let s = self.world.state_index((x, y));
                let tag = match (self.shaped_agreement[s], self.unshaped_agreement[s]) {
                    (true, true) => "SU",
                    (true, false) => "S-",
                    (false, true) => "-U",
                    (false, false) => "--",
                };
                line.push_str(&format!("{tag} "));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        let pct = |v: &[bool]| {
            100.0 * v.iter().filter(|b| **b).count() as f64 / v.len() as f64
        };
        out.push_str(&format!(
            "shaped agreement: {:.1}%  unshaped agreement: {:.1}%\n",
            pct(&self.shaped_agreement),
            pct(&self.unshaped_agreement)
        ));
        out
    }

    /// Machine-readable rows: state, oracle_action, shaped_action,
    /// unshaped_action.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "state,oracle_action,shaped_action,unshaped_action")?;
        for s in 0..self.oracle_policy.len() {
            writeln!(
                out,
                "{s},{},{},{}",
                self.oracle_policy[s].name(),
                self.shaped_policy[s].name(),
                self.unshaped_policy[s].name()
            )?;
        }
        Ok(())
    }
}

/// Train a shaped and an unshaped learner on identical seeds and compare
/// both greedy policies against the value-iteration oracle.
pub fn run_invariance_experiment(
    world: &Gridworld,
    potential: &[f64],
    episodes: u64,
    seed: u64,
) -> Result<InvarianceReport> {
    run_invariance_experiment_with(world, potential, episodes, seed, &TabularHyper::default())
}

pub fn run_invariance_experiment_with(
    world: &Gridworld,
    potential: &[f64],
    episodes: u64,
    seed: u64,
    hyper: &TabularHyper,
) -> Result<InvarianceReport> {
    if potential.len() != world.num_states() {
        return Err(Error::Shape(format!(
            "potential has {} entries for {} states",
            potential.len(),
            world.num_states()
        )));
    }
    let oracle = value_iteration(world, hyper.gamma, 1e-10)?;

    // checkpoint greedy-policy agreement periodically to record when each
    // learner first fully matches the oracle
    let check_interval = (episodes / 200).max(1);
    let run = |shaped: bool| -> Result<(QTable, Option<u64>)> {
        let mut first_full: Option<u64> = None;
        let table = train_learner(
            world,
            if shaped { Some(potential) } else { None },
            episodes,
            seed,
            hyper,
            QInit::Zeros,
            |table, episode| {
                if first_full.is_none() && episode % check_interval == 0 {
                    if table.greedy_policy() == oracle.policy {
                        first_full = Some(episode);
                    }
                }
            },
        )?;
        Ok((table, first_full))
    };

    let (shaped_table, shaped_first) = run(true)?;
    let (unshaped_table, unshaped_first) = run(false)?;

    let shaped_policy = shaped_table.greedy_policy();
    let unshaped_policy = unshaped_table.greedy_policy();
    let shaped_agreement: Vec<bool> = shaped_policy
        .iter()
        .zip(oracle.policy.iter())
        .map(|(a, b)| a == b)
        .collect();
    let unshaped_agreement: Vec<bool> = unshaped_policy
        .iter()
        .zip(oracle.policy.iter())
        .map(|(a, b)| a == b)
        .collect();

    Ok(InvarianceReport {
        world: world.clone(),
        oracle_policy: oracle.policy,
        shaped_policy,
        unshaped_policy,
        shaped_agreement,
        unshaped_agreement,
        shaped_first_full_agreement: shaped_first,
        unshaped_first_full_agreement: unshaped_first,
    })
}

/// Result of the paired Wiewiora run: the largest deviation from
/// `Q_shaped(s,a) = Q_init(s,a) - phi(s)` observed after any update.
#[derive(Debug, Clone)]
pub struct WiewioraReport {
    pub updates: u64,
    pub max_identity_deviation: f64,
}

/// Drive a shaped zero-initialized learner and an unshaped
/// potential-initialized learner with the same experience stream and
/// track the identity after every update.
pub fn wiewiora_paired_run(
    world: &Gridworld,
    potential: &[f64],
    min_updates: u64,
    seed: u64,
    hyper: &TabularHyper,
) -> Result<WiewioraReport> {
    if potential.len() != world.num_states() {
        return Err(Error::Shape("potential length mismatch".into()));
    }
    let goal = world.goal_state();
    let phi = |s: usize| if s == goal { 0.0 } else { potential[s] };

    let mut shaped = QTable::new(world, QInit::Zeros)?;
    let mut init_phi = potential.to_vec();
    init_phi[goal] = 0.0;
    let mut initialized = QTable::new(world, QInit::Potential(init_phi))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut updates = 0u64;
    let mut max_dev = 0.0f64;
    let mut episode = 0u64;
    // a long-enough horizon for the ceiling on episodes
    let total_for_schedule = (min_updates / 8).max(1);

    while updates < min_updates {
        let eps = epsilon_schedule(episode, total_for_schedule, hyper.epsilon_final);
        episode += 1;
        let mut s = world.state_index(world.start);
        for _ in 0..hyper.max_episode_steps {
            // both learners would pick the same action: their Q rows differ
            // by the state-constant phi(s), which argmax ignores
            let a = epsilon_greedy(&shaped, s, eps, &mut rng);
            let ns = world.next_state(s, a);
            let f = shaping_reward(phi(s), phi(ns), hyper.gamma);
            q_update(&mut shaped, s, a, world.step_reward, ns, hyper.alpha, hyper.gamma, f);
            q_update(
                &mut initialized,
                s,
                a,
                world.step_reward,
                ns,
                hyper.alpha,
                hyper.gamma,
                0.0,
            );
            updates += 1;
            let dev =
                (shaped.q[s][a.index()] - (initialized.q[s][a.index()] - phi(s))).abs();
            if dev > max_dev {
                max_dev = dev;
            }
            s = ns;
            if s == goal {
                break;
            }
        }
    }

    Ok(WiewioraReport {
        updates,
        max_identity_deviation: max_dev,
    })
}
