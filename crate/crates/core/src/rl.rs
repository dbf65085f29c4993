//! Episodic control of the maze walker by toggling walls.
//!
//! At `t = k·Δt_act` for `k = 0..K` the agent either does nothing or toggles
//! one grid-adjacent link; the Lindblad model is rebuilt for the new
//! topology and integrated over the next interval. After the `K`-th interval
//! the walker evolves freely until `t_final`. The reward of a step is the
//! sink population gained during it, so an episode's rewards sum to its
//! final escape probability.
//!
//! The agent is tabular Q-learning over `(step, current edge set)` keys with
//! linearly decaying ε-greedy exploration.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, DensityMatrix, C64};
use crate::maze::MazeGraph;
use crate::qsw::{build_model, initial_state, step_count, LindbladModel, QswParams, Rk4};

pub const DEFAULT_ACTION_PERIOD: f64 = 1.0;
pub const DEFAULT_MAX_ACTIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    NoOp,
    ToggleLink(usize, usize),
}

impl Action {
    /// Orders the endpoints so `(j, i)` and `(i, j)` name the same action.
    pub fn toggle(i: usize, j: usize) -> Action {
        Action::ToggleLink(i.min(j), i.max(j))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::NoOp => write!(f, "noop"),
            Action::ToggleLink(i, j) => write!(f, "toggle({i},{j})"),
        }
    }
}

/// Current links as bits over the environment's grid-adjacent pair list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeSet(Vec<u64>);

impl EdgeSet {
    fn from_maze(maze: &MazeGraph, pairs: &[(usize, usize)]) -> Self {
        let mut words = vec![0u64; pairs.len().div_ceil(64).max(1)];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if maze.has_link(i, j) {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        EdgeSet(words)
    }

    pub fn contains(&self, pair_index: usize) -> bool {
        self.0
            .get(pair_index / 64)
            .is_some_and(|w| w >> (pair_index % 64) & 1 == 1)
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().rev().map(|w| format!("{w:016x}")).collect()
    }
}

/// Q-table key: the decision step and the topology at that step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey {
    pub step: usize,
    pub edges: EdgeSet,
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.step, self.edges.to_hex())
    }
}

impl std::str::FromStr for StateKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed state key {s:?}"));
        let (step, hex) = s.split_once(':').ok_or_else(bad)?;
        let step = step.parse().map_err(|_| bad())?;
        if hex.is_empty() || hex.len() % 16 != 0 {
            return Err(bad());
        }
        let words = (0..hex.len() / 16)
            .rev()
            .map(|k| u64::from_str_radix(&hex[k * 16..(k + 1) * 16], 16).map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        Ok(StateKey { step, edges: EdgeSet(words) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step_index: usize,
    /// Diagonal of ρ over the maze cells followed by the sink.
    pub populations: Vec<f64>,
    pub adjacency_bits: EdgeSet,
}

impl Observation {
    pub fn key(&self) -> StateKey {
        StateKey { step: self.step_index, edges: self.adjacency_bits.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub final_p_sink: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvConfig {
    pub params: QswParams,
    pub action_period: f64,
    pub max_actions: usize,
}

impl EnvConfig {
    pub fn new(params: QswParams, action_period: f64, max_actions: usize) -> Result<Self> {
        if !(action_period.is_finite() && action_period > 0.0) {
            return Err(Error::invalid(format!("action period must be positive, got {action_period}")));
        }
        if max_actions as f64 * action_period > params.t_final * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "{max_actions} actions every {action_period} exceed the horizon {}",
                params.t_final
            )));
        }
        if action_period < params.dt {
            return Err(Error::invalid("action period must not be shorter than dt"));
        }
        Ok(EnvConfig { params, action_period, max_actions })
    }

    /// Length of the free evolution after the last action interval.
    pub fn tail_duration(&self) -> f64 {
        (self.params.t_final - self.max_actions as f64 * self.action_period).max(0.0)
    }
}

#[derive(Debug, Clone)]
struct Snapshot {
    maze: MazeGraph,
    state: Vec<C64>,
    sink: f64,
}

/// The maze environment. Holds the episode in progress.
///
/// Optionally memoizes the state reached after each action prefix; the
/// dynamics are deterministic, so a cache hit is bit-identical to
/// recomputation.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    base_maze: MazeGraph,
    config: EnvConfig,
    pairs: Vec<(usize, usize)>,
    action_space: Vec<Action>,
    // episode state
    maze: MazeGraph,
    model: LindbladModel,
    state: Vec<C64>,
    sink: f64,
    step_index: usize,
    history: Vec<Action>,
    rk4: Rk4,
    cache: HashMap<Vec<Action>, Snapshot>,
    cache_capacity: usize,
    seed: u64,
}

impl MazeEnv {
    pub fn new(base_maze: MazeGraph, config: EnvConfig) -> Self {
        let pairs = base_maze.grid_adjacent_pairs();
        let mut action_space = vec![Action::NoOp];
        action_space.extend(pairs.iter().map(|&(i, j)| Action::ToggleLink(i, j)));
        let model = build_model(&base_maze, config.params);
        let state = initial_state(&model).into_matrix().as_slice().to_vec();
        let dim = model.dim();
        MazeEnv {
            maze: base_maze.clone(),
            base_maze,
            config,
            pairs,
            action_space,
            model,
            state,
            sink: 0.0,
            step_index: 0,
            history: Vec::new(),
            rk4: Rk4::new(dim),
            cache: HashMap::new(),
            cache_capacity: 0,
            seed: 0,
        }
    }

    /// Enables prefix memoization with at most `capacity` stored states.
    /// The cache is cleared whenever it fills up.
    pub fn with_cache(mut self, capacity: usize) -> Self {
        self.cache_capacity = capacity;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn base_maze(&self) -> &MazeGraph {
        &self.base_maze
    }

    pub fn current_maze(&self) -> &MazeGraph {
        &self.maze
    }

    pub fn action_space(&self) -> &[Action] {
        &self.action_space
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.config.max_actions
    }

    pub fn last_seed(&self) -> u64 {
        self.seed
    }

    pub fn current_state(&self) -> DensityMatrix {
        let d = self.model.dim();
        DensityMatrix::from_propagated(
            ComplexMatrix::from_vec(d, d, self.state.clone()).expect("state stays finite"),
        )
    }

    pub fn sink_population(&self) -> f64 {
        self.sink
    }

    /// Restarts the episode with the walker at the entrance of the base maze.
    /// The dynamics are deterministic; `seed` is only recorded.
    pub fn reset(&mut self, seed: u64) -> Observation {
        self.seed = seed;
        self.maze = self.base_maze.clone();
        self.model = build_model(&self.maze, self.config.params);
        self.state = initial_state(&self.model).into_matrix().as_slice().to_vec();
        self.sink = 0.0;
        self.step_index = 0;
        self.history.clear();
        self.observe()
    }

    pub fn observe(&self) -> Observation {
        let d = self.model.dim();
        Observation {
            step_index: self.step_index,
            populations: (0..d).map(|k| self.state[k * d + k].re).collect(),
            adjacency_bits: EdgeSet::from_maze(&self.maze, &self.pairs),
        }
    }

    pub fn state_key(&self) -> StateKey {
        StateKey {
            step: self.step_index,
            edges: EdgeSet::from_maze(&self.maze, &self.pairs),
        }
    }

    pub fn is_legal(&self, action: Action) -> bool {
        match action {
            Action::NoOp => true,
            Action::ToggleLink(i, j) => i != j && self.maze.are_grid_adjacent(i, j),
        }
    }

    /// Applies `action`, integrates one action period (plus the free tail on
    /// the last step) and returns the sink gain as reward. Illegal actions
    /// and steps after the episode ended leave the environment unchanged.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::IllegalAction("episode is already done".into()));
        }
        let action = match action {
            Action::ToggleLink(i, j) => Action::toggle(i, j),
            a => a,
        };
        if !self.is_legal(action) {
            return Err(Error::IllegalAction(format!("{action} is not a grid-adjacent toggle")));
        }

        let before = self.sink;
        let mut prefix = self.history.clone();
        prefix.push(action);
        let last = prefix.len() == self.config.max_actions;

        let snapshot = match self.cache.get(&prefix) {
            Some(hit) => hit.clone(),
            None => {
                let snap = self.advance(action, last)?;
                if self.cache_capacity > 0 {
                    if self.cache.len() >= self.cache_capacity {
                        self.cache.clear();
                    }
                    self.cache.insert(prefix.clone(), snap.clone());
                }
                snap
            }
        };

        if snapshot.maze != self.maze {
            self.model = build_model(&snapshot.maze, self.config.params);
        }
        self.maze = snapshot.maze;
        self.state = snapshot.state;
        self.sink = snapshot.sink;
        self.history = prefix;
        self.step_index += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: self.sink - before,
            done: last,
        })
    }

    fn advance(&mut self, action: Action, last: bool) -> Result<Snapshot> {
        let maze = match action {
            Action::NoOp => self.maze.clone(),
            Action::ToggleLink(i, j) => self.maze.toggle_link(i, j)?,
        };
        let model = build_model(&maze, self.config.params);
        let mut state = self.state.clone();
        let dt = self.config.params.dt;
        let mut durations = vec![self.config.action_period];
        if last && self.config.tail_duration() > 1e-12 {
            durations.push(self.config.tail_duration());
        }
        for duration in durations {
            let steps = step_count(duration, dt);
            let h = duration / steps as f64;
            self.rk4.integrate(&model, &mut state, h, steps, |_, _| {})?;
        }
        let d = model.dim();
        let s = model.sink();
        Ok(Snapshot { sink: state[s * d + s].re, maze, state })
    }

    /// Runs a whole episode from `reset(seed)`, asking `choose` for each
    /// action.
    pub fn run_episode(
        &mut self,
        seed: u64,
        mut choose: impl FnMut(&Observation) -> Action,
    ) -> Result<EpisodeRecord> {
        let mut obs = self.reset(seed);
        let mut actions = Vec::with_capacity(self.config.max_actions);
        let mut rewards = Vec::with_capacity(self.config.max_actions);
        while !self.is_done() {
            let action = choose(&obs);
            let out = self.step(action)?;
            actions.push(action);
            rewards.push(out.reward);
            obs = out.observation;
        }
        if self.config.max_actions == 0 {
            // no decisions: the whole horizon is free evolution
            let snap = self.advance_free()?;
            rewards.push(snap);
        }
        Ok(EpisodeRecord { actions, rewards, final_p_sink: self.sink })
    }

    fn advance_free(&mut self) -> Result<f64> {
        let steps = step_count(self.config.params.t_final, self.config.params.dt);
        let h = self.config.params.t_final / steps as f64;
        let mut state = self.state.clone();
        self.rk4.integrate(&self.model, &mut state, h, steps, |_, _| {})?;
        let d = self.model.dim();
        let s = self.model.sink();
        let gain = state[s * d + s].re - self.sink;
        self.sink = state[s * d + s].re;
        self.state = state;
        Ok(gain)
    }
}

/// Greedy action table. States not in the table map to `NoOp`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Policy {
    table: BTreeMap<StateKey, Action>,
}

impl Policy {
    pub fn noop() -> Self {
        Policy::default()
    }

    pub fn from_table(table: BTreeMap<StateKey, Action>) -> Self {
        Policy { table }
    }

    pub fn action(&self, key: &StateKey) -> Action {
        self.table.get(key).copied().unwrap_or(Action::NoOp)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &Action)> {
        self.table.iter()
    }

    /// `{"config": .., "policy": {"<step>:<edge-bits hex>": action, ..}}`.
    pub fn to_json(&self, config: &serde_json::Value) -> String {
        let policy: BTreeMap<String, Action> =
            self.table.iter().map(|(k, &a)| (k.to_string(), a)).collect();
        let doc = serde_json::json!({ "config": config, "policy": policy });
        let mut text = serde_json::to_string_pretty(&doc).expect("policy serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            policy: BTreeMap<String, Action>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let table = doc
            .policy
            .into_iter()
            .map(|(k, a)| Ok((k.parse()?, a)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Policy { table })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which ε decays linearly.
    pub decay_fraction: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            learning_rate: 0.1,
            discount: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl AgentConfig {
    pub fn greedy() -> Self {
        AgentConfig { epsilon_start: 0.0, epsilon_end: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !(unit(self.learning_rate) && unit(self.discount) && unit(self.epsilon_start) && unit(self.epsilon_end))
        {
            return Err(Error::invalid("learning rate, discount and epsilons must lie in [0, 1]"));
        }
        if !(self.decay_fraction.is_finite() && self.decay_fraction > 0.0 && self.decay_fraction <= 1.0) {
            return Err(Error::invalid("decay fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        let span = self.decay_fraction * episodes as f64;
        let frac = if span > 0.0 { (episode as f64 / span).min(1.0) } else { 1.0 };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    /// Total reward (= final escape probability) of each training episode.
    pub rewards: Vec<f64>,
    /// Trailing mean over the last `window` episodes.
    pub running_average: Vec<f64>,
    pub window: usize,
}

impl LearningCurve {
    pub fn from_rewards(rewards: Vec<f64>, window: usize) -> Self {
        let window = window.min(rewards.len()).max(1);
        let mut running_average = Vec::with_capacity(rewards.len());
        let mut acc = 0.0;
        for (e, &r) in rewards.iter().enumerate() {
            acc += r;
            if e >= window {
                acc -= rewards[e - window];
            }
            running_average.push(acc / (e + 1).min(window) as f64);
        }
        LearningCurve { rewards, running_average, window }
    }

    /// CSV `episode,reward,running_avg_100` preceded by `# ` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            writeln!(out, "# {c}").unwrap();
        }
        out.push_str("episode,reward,running_avg_100\n");
        for (e, (r, a)) in self.rewards.iter().zip(&self.running_average).enumerate() {
            writeln!(out, "{e},{r:?},{a:?}").unwrap();
        }
        out
    }
}

/// Tabular Q-values over the environment's action space.
#[derive(Debug, Clone)]
pub struct QTable {
    values: HashMap<StateKey, Vec<f64>>,
    n_actions: usize,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        QTable { values: HashMap::new(), n_actions }
    }

    pub fn get(&self, key: &StateKey) -> Option<&[f64]> {
        self.values.get(key).map(Vec::as_slice)
    }

    /// Index of the best action: `NoOp` (index 0) wins ties, then the
    /// lowest index, which is the lexicographically smallest toggle.
    pub fn greedy_index(&self, key: &StateKey) -> usize {
        match self.values.get(key) {
            None => 0,
            Some(q) => {
                let mut best = 0;
                for (k, &v) in q.iter().enumerate().skip(1) {
                    if v > q[best] {
                        best = k;
                    }
                }
                best
            }
        }
    }

    pub fn max_value(&self, key: &StateKey) -> f64 {
        self.values
            .get(key)
            .map_or(0.0, |q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn entry(&mut self, key: StateKey) -> &mut Vec<f64> {
        let n = self.n_actions;
        self.values.entry(key).or_insert_with(|| vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn greedy_policy(&self, action_space: &[Action]) -> Policy {
        let table = self
            .values
            .keys()
            .map(|k| (k.clone(), action_space[self.greedy_index(k)]))
            .filter(|(_, a)| *a != Action::NoOp)
            .collect();
        Policy { table }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: Policy,
    pub curve: LearningCurve,
    pub q_table: QTable,
}

pub const RUNNING_AVERAGE_WINDOW: usize = 100;

/// Q-learning with ε-greedy exploration; deterministic given `seed`.
pub fn train(env: &mut MazeEnv, agent: &AgentConfig, episodes: usize, seed: u64) -> Result<TrainingOutcome> {
    if episodes == 0 {
        return Err(Error::invalid("need at least one training episode"));
    }
    agent.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let action_space = env.action_space().to_vec();
    let mut q = QTable::new(action_space.len());
    let mut rewards = Vec::with_capacity(episodes);

    for episode in 0..episodes {
        let epsilon = agent.epsilon(episode, episodes);
        env.reset(seed);
        let mut key = env.state_key();
        let mut total = 0.0;
        while !env.is_done() {
            let index = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                rng.random_range(0..action_space.len())
            } else {
                q.greedy_index(&key)
            };
            let out = env.step(action_space[index])?;
            total += out.reward;
            let next = out.observation.key();
            let target = if out.done {
                out.reward
            } else {
                out.reward + agent.discount * q.max_value(&next)
            };
            let slot = &mut q.entry(key)[index];
            *slot += agent.learning_rate * (target - *slot);
            key = next;
        }
        rewards.push(total);
    }

    Ok(TrainingOutcome {
        policy: q.greedy_policy(&action_space),
        curve: LearningCurve::from_rewards(rewards, RUNNING_AVERAGE_WINDOW),
        q_table: q,
    })
}

/// Greedy rollout of `policy`.
pub fn rollout(env: &mut MazeEnv, policy: &Policy) -> Result<EpisodeRecord> {
    env.run_episode(0, |obs| policy.action(&obs.key()))
}

/// Mean final escape probability over `n_runs` greedy rollouts.
pub fn evaluate(env: &mut MazeEnv, policy: &Policy, n_runs: usize) -> Result<f64> {
    if n_runs == 0 {
        return Err(Error::invalid("need at least one evaluation run"));
    }
    let mut acc = 0.0;
    for _ in 0..n_runs {
        acc += rollout(env, policy)?.final_p_sink;
    }
    Ok(acc / n_runs as f64)
}
