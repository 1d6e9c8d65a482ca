use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dueling::{dueling_backward, dueling_q, select_action, DuelingQNet};
use super::replay::{ReplayBuffer, Transition};
use super::{compute_reward, AgentError, RewardSign, STATE_DIM};
use crate::control::{Cadence, Controller, ControllerDecision, ControllerError, LearningStats, Observation};
use crate::neural::{huber, huber_grad, read_net, write_net, AdamConfig, AdamState, Mode};
use crate::rng::{self, Stream, StreamTag};
use crate::sim::{Phase, PHASE_COUNT};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    /// Choose the phase to serve next every decision period.
    PhaseSelection,
    /// Lengthen or shorten one phase's green at the end of every cycle.
    TimeExtension,
}

impl ActionSpace {
    pub fn size(self) -> usize {
        match self {
            ActionSpace::PhaseSelection => PHASE_COUNT,
            ActionSpace::TimeExtension => 2 * PHASE_COUNT + 1,
        }
    }

    fn tag(self) -> u8 {
        match self {
            ActionSpace::PhaseSelection => 0,
            ActionSpace::TimeExtension => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ActionSpace::PhaseSelection),
            1 => Some(ActionSpace::TimeExtension),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub action_space: ActionSpace,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Defaults to 1e-4 for phase selection and 1e-3 for time extension.
    pub learning_rate: Option<f64>,
    /// Defaults to 0.005 for phase selection and 0.01 for time extension.
    pub tau: Option<f64>,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_steps: u64,
    pub huber_delta: f64,
    pub reward_sign: RewardSign,
    /// Multiplier applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
    /// Seconds between phase-selection decisions.
    pub decision_period: f64,
    /// Green adjustment per time-extension action, seconds.
    pub green_step: f64,
    pub min_green: f64,
    pub max_green: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            action_space: ActionSpace::PhaseSelection,
            hidden: vec![64, 64],
            dropout: 0.2,
            learning_rate: None,
            tau: None,
            gamma: 0.95,
            batch_size: 32,
            replay_capacity: 10_000,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_steps: 1000,
            huber_delta: 1.0,
            reward_sign: RewardSign::QueueDecrease,
            reward_scale: 0.01,
            decision_period: 10.0,
            green_step: 5.0,
            min_green: 10.0,
            max_green: 60.0,
        }
    }
}

impl AgentConfig {
    pub fn for_space(action_space: ActionSpace) -> Self {
        AgentConfig { action_space, ..Self::default() }
    }

    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.action_space {
            ActionSpace::PhaseSelection => 1e-4,
            ActionSpace::TimeExtension => 1e-3,
        })
    }

    pub fn effective_tau(&self) -> f64 {
        self.tau.unwrap_or(match self.action_space {
            ActionSpace::PhaseSelection => 0.005,
            ActionSpace::TimeExtension => 0.01,
        })
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |what: &str| Err(AgentError::Config(what.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        let tau = self.effective_tau();
        if !(tau > 0.0 && tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.effective_learning_rate() >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !eps_ok(self.epsilon_start) || !eps_ok(self.epsilon_end) {
            return bad("epsilon bounds must lie in [0, 1]");
        }
        if !(self.decision_period > 0.0) || !(self.green_step > 0.0) || !(self.min_green <= self.max_green) {
            return bad("timing parameters out of range");
        }
        Ok(())
    }

    /// Linear annealing from `epsilon_start` to `epsilon_end` over
    /// `epsilon_steps` decisions, constant afterwards.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if step >= self.epsilon_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Previous decision awaiting its reward.
#[derive(Clone, Debug)]
struct Pending {
    state: [f64; STATE_DIM],
    action: usize,
    phase_max: [f64; PHASE_COUNT],
}

/// Outcome of one [`DqnAgent::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainOutcome {
    Trained {
        loss: f64,
    },
    /// Replay buffer smaller than one batch.
    Skipped,
}

/// Dueling double-network Q-learning controller.
#[derive(Clone, Debug)]
pub struct DqnAgent<S: Scalar> {
    config: AgentConfig,
    net: DuelingQNet<S>,
    adam: AdamState<S>,
    replay: ReplayBuffer<Transition<S>>,
    decision_steps: u64,
    act_rng: Stream,
    train_rng: Stream,
    learning: bool,
    exploring: bool,
    base_greens: [f64; PHASE_COUNT],
    greens: [f64; PHASE_COUNT],
    pending: Option<Pending>,
    stats: LearningStats,
    actions: Vec<usize>,
    record_actions: bool,
}

const AGENT_MAGIC: &[u8; 4] = b"SBAG";
pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

impl<S: Scalar> DqnAgent<S> {
    /// Fresh agent; weights come from `seed`'s init stream, and action
    /// selection and training draw from two further independent streams.
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let mut init = rng::stream(seed, StreamTag::AgentInit, 0);
        let net = DuelingQNet::new(STATE_DIM, &config.hidden, config.action_space.size(), config.dropout, &mut init)?;
        let adam = AdamState::new(
            AdamConfig { learning_rate: config.effective_learning_rate(), ..AdamConfig::default() },
            net.online.param_count(),
        );
        let greens = [config.min_green.max(20.0).min(config.max_green); PHASE_COUNT];
        Ok(DqnAgent {
            replay: ReplayBuffer::new(config.replay_capacity),
            net,
            adam,
            decision_steps: 0,
            act_rng: rng::stream(seed, StreamTag::AgentAct, 0),
            train_rng: rng::stream(seed, StreamTag::AgentTrain, 0),
            learning: true,
            exploring: true,
            base_greens: greens,
            greens,
            pending: None,
            stats: LearningStats::default(),
            actions: Vec::new(),
            record_actions: false,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn net(&self) -> &DuelingQNet<S> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DuelingQNet<S> {
        &mut self.net
    }

    pub fn replay(&self) -> &ReplayBuffer<Transition<S>> {
        &self.replay
    }

    pub fn decision_steps(&self) -> u64 {
        self.decision_steps
    }

    pub fn train_steps(&self) -> u64 {
        self.adam.step_count
    }

    pub fn epsilon(&self) -> f64 {
        if self.exploring {
            self.config.epsilon_at(self.decision_steps)
        } else {
            0.0
        }
    }

    /// Starting greens for time extension (reset at every episode start).
    pub fn set_initial_greens(&mut self, greens: [f64; PHASE_COUNT]) {
        self.base_greens = greens;
        self.greens = greens;
    }

    pub fn initial_greens(&self) -> [f64; PHASE_COUNT] {
        self.base_greens
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    pub fn set_exploring(&mut self, on: bool) {
        self.exploring = on;
    }

    /// Greedy, non-learning, dropout-free evaluation.
    pub fn freeze(&mut self) {
        self.learning = false;
        self.exploring = false;
        self.net.online.set_mode(Mode::Eval);
    }

    pub fn record_actions(&mut self, on: bool) {
        self.record_actions = on;
    }

    pub fn take_actions(&mut self) -> Vec<usize> {
        std::mem::take(&mut self.actions)
    }

    /// Prepares for training on a new scenario: empties the replay buffer
    /// and restarts the random streams from `seed`.
    pub fn begin_transfer(&mut self, seed: u64) {
        self.replay.clear();
        self.pending = None;
        self.act_rng = rng::stream(seed, StreamTag::AgentAct, 0);
        self.train_rng = rng::stream(seed, StreamTag::AgentTrain, 0);
    }

    pub fn q_values(&self, state: &[f64; STATE_DIM]) -> Result<Vec<S>, AgentError> {
        Ok(self.net.q_values(&state.map(S::of))?)
    }

    pub fn remember(&mut self, t: Transition<S>) {
        self.replay.push(t);
    }

    /// `r + γ · max_a' Q_target(s', a')`, or just `r` for terminal transitions.
    pub fn td_targets(&self, batch: &[Transition<S>]) -> Result<Vec<S>, AgentError> {
        let gamma = S::of(self.config.gamma);
        batch
            .iter()
            .map(|tr| {
                if tr.terminal || gamma == S::zero() {
                    return Ok(tr.reward);
                }
                let next = self.net.target_q_values(&tr.next_state)?;
                Ok(tr.reward + gamma * next.iter().copied().fold(S::neg_infinity(), S::max))
            })
            .collect()
    }

    /// One Huber-loss Adam update on a uniformly sampled batch, followed by
    /// a soft target update.
    pub fn train_step(&mut self) -> Result<TrainOutcome, AgentError> {
        let batch_size = self.config.batch_size;
        if self.replay.len() < batch_size {
            return Ok(TrainOutcome::Skipped);
        }
        let delta = S::of(self.config.huber_delta);
        let inv_batch = S::of(1.0 / batch_size as f64);
        let mut grads = vec![S::zero(); self.net.online.param_count()];
        let mut loss = S::zero();
        let batch: Vec<Transition<S>> =
            self.replay.sample(batch_size, &mut self.train_rng).into_iter().cloned().collect();
        let targets = self.td_targets(&batch)?;
        for (tr, &target) in batch.iter().zip(&targets) {
            let (raw, cache) = self.net.online.forward(&tr.state, &mut self.train_rng)?;
            let q = dueling_q(&raw);
            let td = q[tr.action] - target;
            loss += huber(td, delta) * inv_batch;
            let mut q_grad = vec![S::zero(); q.len()];
            q_grad[tr.action] = huber_grad(td, delta) * inv_batch;
            self.net.online.backward(&cache, &dueling_backward(&q_grad), &mut grads)?;
        }
        self.adam.step(self.net.online.params_mut(), &grads)?;
        self.net.soft_update_target(S::of(self.config.effective_tau()))?;
        Ok(TrainOutcome::Trained { loss: loss.as_f64() })
    }

    fn learn_from(
        &mut self,
        next_state: &[f64; STATE_DIM],
        phase_max: &[f64; PHASE_COUNT],
        terminal: bool,
    ) -> Result<(), AgentError> {
        let Some(prev) = self.pending.take() else { return Ok(()) };
        let reward = compute_reward(&prev.phase_max, phase_max, self.config.reward_sign);
        self.stats.total_reward += reward;
        match &mut self.stats.potential {
            Some((_, last)) => *last = phase_max.iter().map(|s| s * s).sum(),
            None => {
                let sq = |s: &[f64; PHASE_COUNT]| s.iter().map(|x| x * x).sum::<f64>();
                self.stats.potential = Some((sq(&prev.phase_max), sq(phase_max)));
            }
        }
        let scaled = reward * self.config.reward_scale;
        self.replay.push(Transition::new(&prev.state, prev.action, scaled, next_state, terminal));
        if self.learning {
            if let TrainOutcome::Trained { loss } = self.train_step()? {
                self.stats.train_steps += 1;
                self.stats.losses.push(loss);
            }
        }
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<ControllerDecision, AgentError> {
        let state = obs.state.normalized;
        self.learn_from(&state, &obs.true_phase_max, false)?;
        let q = self.q_values(&state)?;
        let epsilon = self.epsilon();
        let action = select_action(&q, epsilon, &mut self.act_rng)?;
        self.decision_steps += 1;
        if self.record_actions {
            self.actions.push(action);
        }
        self.pending = Some(Pending { state, action, phase_max: obs.true_phase_max });
        Ok(self.decision_for(action, obs))
    }

    /// Signal decision encoded by `action`.
    pub fn decision_for(&mut self, action: usize, obs: &Observation) -> ControllerDecision {
        match self.config.action_space {
            ActionSpace::PhaseSelection => {
                let p = Phase(action as u8);
                if obs.signal.is_green(p) {
                    ControllerDecision::Hold
                } else {
                    ControllerDecision::SwitchTo(p)
                }
            }
            ActionSpace::TimeExtension => {
                self.greens = apply_extension(&self.config, self.greens, action);
                ControllerDecision::SetCycleTimings(self.greens)
            }
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), AgentError> {
        let mut bytes = Vec::new();
        self.write_checkpoint(&mut bytes)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Serializes networks, optimizer state and counters. Replay contents
    /// and random streams are not stored.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), AgentError> {
        w.write_all(AGENT_MAGIC)?;
        w.write_all(&AGENT_CHECKPOINT_VERSION.to_le_bytes())?;
        let config = toml::to_string(&self.config).map_err(|e| AgentError::Config(e.to_string()))?;
        w.write_all(&(config.len() as u64).to_le_bytes())?;
        w.write_all(config.as_bytes())?;
        w.write_all(&[self.config.action_space.tag()])?;
        for v in [self.config.gamma.to_bits(), self.decision_steps, self.replay.cursor() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for g in self.base_greens {
            w.write_all(&g.to_le_bytes())?;
        }
        write_net(&self.net.online, &mut w)?;
        write_net(&self.net.target, &mut w)?;
        let a = &self.adam;
        for v in [a.config.learning_rate, a.config.beta1, a.config.beta2, a.config.epsilon] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&a.step_count.to_le_bytes())?;
        for v in a.m.iter().chain(&a.v) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    /// Restores an agent; the random streams restart from `seed` and the
    /// replay buffer starts empty.
    pub fn load_checkpoint(path: &Path, seed: u64) -> Result<Self, AgentError> {
        let bytes = std::fs::read(path)?;
        Self::read_checkpoint(bytes.as_slice(), seed)
    }

    pub fn read_checkpoint<R: Read>(mut r: R, seed: u64) -> Result<Self, AgentError> {
        fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], AgentError> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf).map_err(|_| AgentError::Checkpoint("truncated agent checkpoint".into()))?;
            Ok(buf)
        }
        let f64_of = |b: [u8; 8]| f64::from_le_bytes(b);
        if &get::<4, _>(&mut r)? != AGENT_MAGIC {
            return Err(AgentError::Checkpoint("not an agent checkpoint".into()));
        }
        let version = u32::from_le_bytes(get(&mut r)?);
        if version != AGENT_CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!(
                "agent checkpoint version {version}, expected {AGENT_CHECKPOINT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(get(&mut r)?);
        if len > 1 << 20 {
            return Err(AgentError::Checkpoint("implausible config length".into()));
        }
        let mut text = vec![0u8; len as usize];
        r.read_exact(&mut text).map_err(|_| AgentError::Checkpoint("truncated agent checkpoint".into()))?;
        let text = String::from_utf8(text).map_err(|_| AgentError::Checkpoint("config is not UTF-8".into()))?;
        let config: AgentConfig = toml::from_str(&text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let space = ActionSpace::from_tag(get::<1, _>(&mut r)?[0])
            .ok_or_else(|| AgentError::Checkpoint("unknown action space".into()))?;
        if space != config.action_space {
            return Err(AgentError::Checkpoint("action space disagrees with stored config".into()));
        }
        let _gamma = f64_of(get(&mut r)?);
        let decision_steps = u64::from_le_bytes(get(&mut r)?);
        let _cursor = u64::from_le_bytes(get(&mut r)?);
        let mut base_greens = [0.0; PHASE_COUNT];
        for g in &mut base_greens {
            *g = f64_of(get(&mut r)?);
        }
        let online = read_net::<S, _>(&mut r)?;
        let target = read_net::<S, _>(&mut r)?;
        if online.dims() != target.dims() || online.output_dim() != space.size() + 1 {
            return Err(AgentError::Checkpoint("network shapes inconsistent with action space".into()));
        }
        let adam_config = AdamConfig {
            learning_rate: f64_of(get(&mut r)?),
            beta1: f64_of(get(&mut r)?),
            beta2: f64_of(get(&mut r)?),
            epsilon: f64_of(get(&mut r)?),
        };
        let mut adam = AdamState::new(adam_config, online.param_count());
        adam.step_count = u64::from_le_bytes(get(&mut r)?);
        for v in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            *v = S::of(f64_of(get(&mut r)?));
        }
        let mut agent = DqnAgent::new(config, seed)?;
        agent.net = DuelingQNet { online, target };
        agent.adam = adam;
        agent.decision_steps = decision_steps;
        agent.set_initial_greens(base_greens);
        agent.begin_transfer(seed);
        Ok(agent)
    }
}

/// New greens after a time-extension action: 0 keeps the plan, `1..=P`
/// lengthen phase `a − 1`, `P+1..=2P` shorten phase `a − P − 1`.
pub fn apply_extension(config: &AgentConfig, mut greens: [f64; PHASE_COUNT], action: usize) -> [f64; PHASE_COUNT] {
    match action {
        0 => {}
        a if a <= PHASE_COUNT => greens[a - 1] += config.green_step,
        a => greens[a - PHASE_COUNT - 1] -= config.green_step,
    }
    greens.map(|g| g.clamp(config.min_green, config.max_green))
}

impl<S: Scalar> Controller for DqnAgent<S> {
    fn name(&self) -> String {
        match self.config.action_space {
            ActionSpace::PhaseSelection => "rl_phase_selection".into(),
            ActionSpace::TimeExtension => "rl_time_extension".into(),
        }
    }

    fn cadence(&self) -> Cadence {
        match self.config.action_space {
            ActionSpace::PhaseSelection => Cadence::Every(self.config.decision_period),
            ActionSpace::TimeExtension => Cadence::CycleEnd,
        }
    }

    fn begin_episode(&mut self, _episode: usize) {
        self.pending = None;
        self.greens = self.base_greens;
    }

    fn decide(&mut self, _t: f64, obs: &Observation) -> Result<ControllerDecision, ControllerError> {
        self.act(obs).map_err(|e| ControllerError::Failed(e.to_string()))
    }

    fn end_episode(&mut self, _t: f64, obs: &Observation) -> Result<(), ControllerError> {
        self.learn_from(&obs.state.normalized, &obs.true_phase_max, true)
            .map_err(|e| ControllerError::Failed(e.to_string()))
    }

    fn take_stats(&mut self) -> LearningStats {
        let mut stats = std::mem::take(&mut self.stats);
        if !stats.losses.is_empty() {
            stats.mean_loss = Some(stats.losses.iter().sum::<f64>() / stats.losses.len() as f64);
        }
        stats
    }
}
