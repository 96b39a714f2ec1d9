//! Sequential swap-action environment for slice-by-slice placement.
//!
//! An episode walks the timeslices in order. In each slice the agent swaps
//! pairs of qubits until every interacting pair shares a core, then issues
//! [`Action::Advance`] to commit the assignment. Each slice has a budget of
//! actions; running out of it truncates the episode.
//!
//! Observation layout, for `Q` qubits and `k` cores:
//!
//! | segment | length |
//! |---|---|
//! | upper-triangular lookahead weights of the current slice | `Q(Q-1)/2` |
//! | one-hot current assignment | `Q·k` |
//! | one-hot assignment committed for the previous slice | `Q·k` |
//! | validity bit | `1` |
//!
//! Current-slice interactions add a cap `1 + Σ decay^d` to their lookahead
//! entry, which exceeds any achievable lookahead sum.
//!
//! Actions index the unordered pairs `(a, b)`, `a ≤ b`, in row-major order,
//! followed by a single `Advance` action.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{parse_circuit, CircuitError, Gate, GenSpec, QubitId, Timeslice};
use crate::interaction::{is_valid, lookahead_graph, InteractionGraph};
use crate::partition::{
    average_over_transitions, initial_assignment, nonlocal_moves, Assignment, CoreConfig,
    InitStrategy, PartitionError,
};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action out of range: {action} (have {num_actions} actions)")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("qubit pair ({a}, {b}) out of range for {num_qubits} qubits")]
    PairOutOfRange {
        a: usize,
        b: usize,
        num_qubits: usize,
    },
    #[error("action {0} is masked")]
    MaskedAction(usize),
    #[error("episode finished; call reset")]
    EpisodeFinished,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Every action is allowed.
    #[default]
    None,
    /// Self-swaps, same-core swaps and advancing from an invalid state are removed.
    Soft,
    /// Soft, further restricted to moving a misplaced qubit into its
    /// partner's core. Only `Advance` remains once the slice is valid.
    Hard,
}

impl std::str::FromStr for MaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(MaskMode::None),
            "soft" => Ok(MaskMode::Soft),
            "hard" => Ok(MaskMode::Hard),
            other => Err(format!("unknown mask mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub valid_bonus: f64,
    /// Penalty per qubit moved when a slice is committed.
    pub move_penalty: f64,
    pub step_penalty: f64,
    pub fail_penalty: f64,
    /// Scale of the final reward, `-final_scale · avg_moves`.
    pub final_scale: f64,
    /// Add the final reward to the last commit reward instead of replacing it.
    pub final_additive: bool,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            valid_bonus: 1.0,
            move_penalty: 0.1,
            step_penalty: 0.01,
            fail_penalty: 10.0,
            final_scale: 1.0,
            final_additive: true,
        }
    }
}

impl RewardParams {
    /// Reward an agent would collect replaying `moves_per_slice` with
    /// `swaps_per_slice` swaps in each slice and no wasted actions.
    pub fn score(&self, moves_per_slice: &[usize], swaps_per_slice: &[usize]) -> f64 {
        let mut total = 0.0;
        for (&m, &s) in moves_per_slice.iter().zip(swaps_per_slice) {
            total += -self.step_penalty * s as f64;
            total += self.valid_bonus - self.move_penalty * m as f64;
        }
        let avg = average_over_transitions(moves_per_slice.iter().sum(), moves_per_slice.len());
        if self.final_additive {
            total - self.final_scale * avg
        } else {
            let last = moves_per_slice
                .last()
                .map_or(0.0, |&m| self.valid_bonus - self.move_penalty * m as f64);
            total - last - self.final_scale * avg
        }
    }
}

/// Where an environment gets its timeslices from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitSource {
    /// Explicit slices; each inner list holds disjoint pairs.
    Slices {
        num_qubits: usize,
        slices: Vec<Vec<(QubitId, QubitId)>>,
    },
    /// Gate list, sliced ASAP.
    Gates {
        num_qubits: usize,
        gates: Vec<(QubitId, QubitId)>,
    },
    /// Gate-list text.
    Text(String),
    Generate(GenSpec),
}

impl CircuitSource {
    pub fn resolve(&self) -> Result<(usize, Vec<Timeslice>), EnvError> {
        match self {
            CircuitSource::Slices { num_qubits, slices } => {
                let slices: Vec<Timeslice> = slices
                    .iter()
                    .enumerate()
                    .map(|(i, pairs)| {
                        Timeslice::new(i, pairs.iter().map(|&p| Gate::from(p)).collect())
                    })
                    .collect();
                for s in &slices {
                    for g in &s.pairs {
                        if g.a >= *num_qubits || g.b >= *num_qubits || g.a == g.b {
                            return Err(EnvError::InvalidConfig(format!(
                                "slice {} has bad pair ({}, {})",
                                s.index, g.a, g.b
                            )));
                        }
                    }
                    if !s.is_disjoint() {
                        return Err(EnvError::InvalidConfig(format!(
                            "slice {} reuses a qubit",
                            s.index
                        )));
                    }
                }
                Ok((*num_qubits, slices))
            }
            CircuitSource::Gates { num_qubits, gates } => {
                let c = crate::Circuit::new(
                    *num_qubits,
                    gates.iter().map(|&g| Gate::from(g)).collect(),
                    "",
                )?;
                Ok((c.num_qubits, c.timeslices()))
            }
            CircuitSource::Text(text) => {
                let c = parse_circuit(text)?;
                Ok((c.num_qubits, c.timeslices()))
            }
            CircuitSource::Generate(spec) => {
                let c = spec.generate()?;
                Ok((c.num_qubits, c.timeslices()))
            }
        }
    }
}

fn default_decay() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub circuit: CircuitSource,
    pub num_cores: usize,
    #[serde(default)]
    pub mask_mode: MaskMode,
    /// Actions allowed per slice; defaults to the qubit count.
    #[serde(default)]
    pub budget_per_slice: Option<usize>,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default)]
    pub seed: u64,
}

impl EnvConfig {
    pub fn new(circuit: CircuitSource, num_cores: usize) -> Self {
        EnvConfig {
            circuit,
            num_cores,
            mask_mode: MaskMode::None,
            budget_per_slice: None,
            decay: default_decay(),
            horizon: None,
            reward: RewardParams::default(),
            init: InitStrategy::RoundRobin,
            seed: 0,
        }
    }

    pub fn with_mask(mut self, mode: MaskMode) -> Self {
        self.mask_mode = mode;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget_per_slice = Some(budget);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Swap(QubitId, QubitId),
    Advance,
}

pub fn num_actions(num_qubits: usize) -> usize {
    num_qubits * (num_qubits + 1) / 2 + 1
}

/// Index of the swap `(a, b)`; the operands may come in either order.
pub fn action_index(num_qubits: usize, a: QubitId, b: QubitId) -> Result<usize, EnvError> {
    let (lo, hi) = (a.min(b), a.max(b));
    if hi >= num_qubits {
        return Err(EnvError::PairOutOfRange { a, b, num_qubits });
    }
    Ok(row_start(num_qubits, lo) + (hi - lo))
}

pub fn advance_index(num_qubits: usize) -> usize {
    num_actions(num_qubits) - 1
}

pub fn decode_action(num_qubits: usize, index: usize) -> Result<Action, EnvError> {
    let advance = advance_index(num_qubits);
    if index > advance {
        return Err(EnvError::ActionOutOfRange {
            action: index,
            num_actions: advance + 1,
        });
    }
    if index == advance {
        return Ok(Action::Advance);
    }
    let mut lo = 0;
    while row_start(num_qubits, lo + 1) <= index {
        lo += 1;
    }
    Ok(Action::Swap(lo, lo + index - row_start(num_qubits, lo)))
}

fn row_start(n: usize, a: usize) -> usize {
    a * n - a * a.saturating_sub(1) / 2
}

pub fn observation_len(num_qubits: usize, num_cores: usize) -> usize {
    num_qubits * num_qubits.saturating_sub(1) / 2 + 2 * num_qubits * num_cores + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionMask(Vec<bool>);

impl ActionMask {
    pub fn all(len: usize, allowed: bool) -> Self {
        ActionMask(vec![allowed; len])
    }

    pub fn from_vec(bits: Vec<bool>) -> Self {
        ActionMask(bits)
    }

    pub fn allowed(&self, action: usize) -> bool {
        self.0.get(action).copied().unwrap_or(false)
    }

    pub fn allowed_actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// True when every action allowed here is also allowed in `other`.
    pub fn is_subset_of(&self, other: &ActionMask) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    fn set(&mut self, action: usize, allowed: bool) {
        self.0[action] = allowed;
    }
}

/// Mask of `mode` for an agent placing `slice` with `current` in hand.
pub fn compute_mask(slice: &Timeslice, current: &Assignment, mode: MaskMode) -> ActionMask {
    let n = current.len();
    let advance = advance_index(n);
    let mut mask = ActionMask::all(num_actions(n), mode == MaskMode::None);
    if mode == MaskMode::None {
        return mask;
    }
    let valid = is_valid(slice, current);
    mask.set(advance, valid);
    match mode {
        MaskMode::None => unreachable!(),
        MaskMode::Soft => {
            for a in 0..n {
                for b in a + 1..n {
                    if current.core(a) != current.core(b) {
                        mask.set(row_start(n, a) + (b - a), true);
                    }
                }
            }
        }
        MaskMode::Hard => {
            if valid {
                return mask;
            }
            for g in &slice.pairs {
                for (mover, partner) in [(g.a, g.b), (g.b, g.a)] {
                    let target = current.core(partner);
                    if current.core(mover) == target {
                        continue;
                    }
                    for other in current.qubits_in(target) {
                        let (lo, hi) = (mover.min(other), mover.max(other));
                        mask.set(row_start(n, lo) + (hi - lo), true);
                    }
                }
            }
        }
    }
    mask
}

/// Mutable episode state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Index of the slice being placed; equals the slice count once terminated.
    pub t: usize,
    pub current: Assignment,
    /// Assignment committed for slice `t - 1` (the seed placement at `t = 0`).
    pub previous: Assignment,
    pub actions_used: usize,
    pub episode_length: usize,
    pub terminated: bool,
    pub truncated: bool,
    /// Moves charged when each slice was committed; the first is always 0.
    pub moves: Vec<usize>,
    pub committed: Vec<Assignment>,
    pub total_reward: f64,
}

impl EnvState {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }

    pub fn total_moves(&self) -> usize {
        self.moves.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Slice the action applied to.
    pub slice: usize,
    /// Moves charged by this action; non-zero only for a commit.
    pub moves_committed: usize,
    pub committed: bool,
    pub actions_used: usize,
    pub episode_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<F> {
    pub observation: Vec<F>,
    pub reward: F,
    pub terminated: bool,
    pub truncated: bool,
    pub mask: ActionMask,
    pub info: StepInfo,
}

/// A [`StepResult`] without the observation and mask, for drivers that do
/// not need them.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<F> {
    pub reward: F,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rewards<F> {
    valid_bonus: F,
    move_penalty: F,
    step_penalty: F,
    fail_penalty: F,
    final_scale: F,
    final_additive: bool,
}

pub struct Environment<F> {
    config: EnvConfig,
    cores: CoreConfig,
    budget: usize,
    rewards: Rewards<F>,
    slices: Vec<Timeslice>,
    partners: Vec<Vec<Option<QubitId>>>,
    graphs: Vec<InteractionGraph<F>>,
    lookahead: Vec<Vec<F>>,
    state: EnvState,
}

impl<F: Scalar> Environment<F> {
    /// Builds the environment and resets it.
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        let (num_qubits, slices) = config.circuit.resolve()?;
        if slices.is_empty() {
            return Err(EnvError::InvalidConfig("circuit has no timeslices".into()));
        }
        let cores = CoreConfig::new(num_qubits, config.num_cores)?;
        if let Some(s) = slices.iter().find(|s| s.pairs.len() > cores.max_pairs()) {
            return Err(PartitionError::InfeasibleSlice {
                slice: s.index,
                pairs: s.pairs.len(),
                num_cores: cores.num_cores,
                capacity: cores.capacity,
                max: cores.max_pairs(),
            }
            .into());
        }
        let budget = config.budget_per_slice.unwrap_or(num_qubits);
        if budget == 0 {
            return Err(EnvError::InvalidConfig(
                "budget_per_slice must be >= 1".into(),
            ));
        }
        let r = &config.reward;
        if r.move_penalty < 0.0 || r.final_scale < 0.0 {
            return Err(EnvError::InvalidConfig(
                "move_penalty and final_scale must be non-negative".into(),
            ));
        }
        let decay = F::of(config.decay);
        let graphs = (0..slices.len())
            .map(|t| lookahead_graph(&slices, num_qubits, t, decay, config.horizon))
            .collect::<Result<Vec<_>, _>>()
            .map_err(PartitionError::from)?;
        let depth = config
            .horizon
            .map_or(slices.len() - 1, |h| h.min(slices.len() - 1));
        let mut cap = F::one();
        let mut factor = F::one();
        for _ in 0..depth {
            factor = factor * decay;
            cap = cap + factor;
        }
        let lookahead = graphs.iter().map(|g| g.upper_triangle(cap)).collect();
        let rewards = Rewards {
            valid_bonus: F::of(r.valid_bonus),
            move_penalty: F::of(r.move_penalty),
            step_penalty: F::of(r.step_penalty),
            fail_penalty: F::of(r.fail_penalty),
            final_scale: F::of(r.final_scale),
            final_additive: r.final_additive,
        };
        let start = initial_assignment(num_qubits, &cores, config.init, config.seed)?;
        let state = Self::fresh_state(start);
        let partners = slices.iter().map(|s| s.partners(num_qubits)).collect();
        Ok(Environment {
            config,
            cores,
            budget,
            rewards,
            slices,
            partners,
            graphs,
            lookahead,
            state,
        })
    }

    fn fresh_state(start: Assignment) -> EnvState {
        EnvState {
            t: 0,
            current: start.clone(),
            previous: start,
            actions_used: 0,
            episode_length: 0,
            terminated: false,
            truncated: false,
            moves: Vec::new(),
            committed: Vec::new(),
            total_reward: 0.0,
        }
    }

    /// Starts a new episode from the seed placement.
    pub fn reset(&mut self) -> (Vec<F>, ActionMask) {
        let start = initial_assignment(
            self.num_qubits(),
            &self.cores,
            self.config.init,
            self.config.seed,
        )
        .expect("validated at construction");
        self.state = Self::fresh_state(start);
        (self.observation(), self.mask())
    }

    /// Replaces the seed and resets.
    pub fn reset_with_seed(&mut self, seed: u64) -> (Vec<F>, ActionMask) {
        self.config.seed = seed;
        self.reset()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn cores(&self) -> &CoreConfig {
        &self.cores
    }

    pub fn slices(&self) -> &[Timeslice] {
        &self.slices
    }

    pub fn num_qubits(&self) -> usize {
        self.cores.num_qubits()
    }

    pub fn num_actions(&self) -> usize {
        num_actions(self.num_qubits())
    }

    pub fn observation_len(&self) -> usize {
        observation_len(self.num_qubits(), self.cores.num_cores)
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Slice being placed, or the last slice once the episode terminated.
    pub fn slice(&self) -> &Timeslice {
        &self.slices[self.slice_index()]
    }

    pub fn graph(&self) -> &InteractionGraph<F> {
        &self.graphs[self.slice_index()]
    }

    fn slice_index(&self) -> usize {
        self.state.t.min(self.slices.len() - 1)
    }

    pub fn is_valid(&self) -> bool {
        is_valid(self.slice(), &self.state.current)
    }

    pub fn observation(&self) -> Vec<F> {
        let n = self.num_qubits();
        let k = self.cores.num_cores;
        let mut obs = Vec::with_capacity(self.observation_len());
        obs.extend_from_slice(&self.lookahead[self.slice_index()]);
        for assignment in [&self.state.current, &self.state.previous] {
            let base = obs.len();
            obs.resize(base + n * k, F::zero());
            for q in 0..n {
                obs[base + q * k + assignment.core(q)] = F::one();
            }
        }
        obs.push(if self.is_valid() { F::one() } else { F::zero() });
        obs
    }

    /// Mask under the configured mode; all-false once the episode is over.
    pub fn mask(&self) -> ActionMask {
        self.mask_for(self.config.mask_mode)
    }

    pub fn mask_for(&self, mode: MaskMode) -> ActionMask {
        if self.state.done() {
            return ActionMask::all(self.num_actions(), false);
        }
        compute_mask(self.slice(), &self.state.current, mode)
    }

    pub fn step_action(&mut self, action: Action) -> Result<StepResult<F>, EnvError> {
        let index = match action {
            Action::Swap(a, b) => action_index(self.num_qubits(), a, b)?,
            Action::Advance => advance_index(self.num_qubits()),
        };
        self.step(index)
    }

    /// Whether the configured mask admits `action`; agrees with [`Self::mask`]
    /// without building it.
    fn admits(&self, action: Action) -> bool {
        let cur = &self.state.current;
        match (self.config.mask_mode, action) {
            (MaskMode::None, _) => true,
            (_, Action::Advance) => self.is_valid(),
            (MaskMode::Soft, Action::Swap(a, b)) => cur.core(a) != cur.core(b),
            (MaskMode::Hard, Action::Swap(a, b)) => {
                let partners = &self.partners[self.slice_index()];
                let moves_in = |mover: QubitId, other: QubitId| {
                    partners[mover].is_some_and(|p| {
                        cur.core(p) != cur.core(mover) && cur.core(other) == cur.core(p)
                    })
                };
                !self.is_valid() && cur.core(a) != cur.core(b) && (moves_in(a, b) || moves_in(b, a))
            }
        }
    }

    /// Applies one action. Errors leave the state untouched.
    pub fn step(&mut self, action: usize) -> Result<StepResult<F>, EnvError> {
        let t = self.transition(action)?;
        Ok(StepResult {
            observation: self.observation(),
            reward: t.reward,
            terminated: t.terminated,
            truncated: t.truncated,
            mask: self.mask(),
            info: t.info,
        })
    }

    /// [`Self::step`] without encoding the next observation and mask.
    pub fn transition(&mut self, action: usize) -> Result<Transition<F>, EnvError> {
        if self.state.done() {
            return Err(EnvError::EpisodeFinished);
        }
        let decoded = decode_action(self.num_qubits(), action)?;
        if !self.admits(decoded) {
            return Err(EnvError::MaskedAction(action));
        }
        let r = self.rewards;
        let slice = self.state.t;
        let mut reward;
        let mut moves_committed = 0;
        let mut committed = false;
        self.state.episode_length += 1;
        match decoded {
            Action::Swap(a, b) => {
                self.state.current.swap(a, b);
                self.state.actions_used += 1;
                reward = -r.step_penalty;
            }
            Action::Advance if self.is_valid() => {
                // the first placement is free
                let m = if slice == 0 {
                    0
                } else {
                    nonlocal_moves(&self.state.previous, &self.state.current)?
                };
                reward = r.valid_bonus - r.move_penalty * F::of(m as f64);
                moves_committed = m;
                committed = true;
                self.state.moves.push(m);
                self.state.committed.push(self.state.current.clone());
                self.state.previous = self.state.current.clone();
                self.state.t += 1;
                self.state.actions_used = 0;
                if self.state.t == self.slices.len() {
                    self.state.terminated = true;
                    let avg = average_over_transitions(self.state.total_moves(), self.slices.len());
                    let fin = -r.final_scale * F::of(avg);
                    reward = if r.final_additive { reward + fin } else { fin };
                }
            }
            Action::Advance => {
                self.state.actions_used += 1;
                reward = -r.step_penalty;
            }
        }
        if !self.state.terminated && self.state.actions_used >= self.budget {
            self.state.truncated = true;
            reward = reward - r.fail_penalty;
        }
        self.state.total_reward += reward.to_f64_lossy();
        Ok(Transition {
            reward,
            terminated: self.state.terminated,
            truncated: self.state.truncated,
            info: StepInfo {
                slice,
                moves_committed,
                committed,
                actions_used: self.state.actions_used,
                episode_length: self.state.episode_length,
            },
        })
    }
}
