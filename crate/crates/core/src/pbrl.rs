//! The training loop: warmup, pilot alignment, query rounds, reward
//! learning, tabular Q-learning on the learned reward, and refinement rounds.
//!
//! A [`Run`] owns all mutable state. Other threads talk to it through a
//! [`Command`] channel that is drained at round boundaries, and read it
//! through a [`SharedSnapshot`] the loop republishes at the same points.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{Receiver, TryRecvError};
use std::sync::{Arc, RwLock};

use log::{info, warn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::EvalProgram;
use crate::envs::{EnvError, EnvSpec, Policy, Transition};
use crate::gateway::{build_prompts, Gateway, GatewayError, PromptBundle, TranscriptLog};
use crate::model::{
    ActionRec, ConfigError, LabelSource, ModelError, Preference, PreferenceQuery, ReplayBuffer, RunConfig,
    Segment, State, TeacherKind,
};
use crate::reward::{disagreement_select, train_ensemble, RewardEnsemble, RewardError, TrainConfig};
use crate::teachers::{align_filter, crowd_label, scripted_label, StochasticLabelConfig, Teacher, TeacherError};

pub const CURVE_HEADER: &str = "env_steps,success_rate,mean_true_return,queries_used,functions_version";
/// Replay sweeps over stored transitions after the Q-table is reset.
pub const RESET_REPLAY_SWEEPS: usize = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("teacher failed: {0}")]
    Teacher(#[from] TeacherError),
    #[error("llm gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("reward model: {0}")]
    Reward(#[from] RewardError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("refinement rejected: {0}")]
    Refinement(String),
}

/// Dense `state_count × action_count` action-value table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    pub values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl QTable {
    pub fn new(env: &EnvSpec, alpha: f64, gamma: f64, epsilon: f64) -> Self {
        let states = env.state_count();
        let actions = env.action_count;
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
            alpha,
            gamma,
            epsilon,
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties are broken uniformly with `rng`.
    pub fn greedy(&self, s: usize, rng: &mut dyn RngCore) -> usize {
        let row = self.row(s);
        let best = self.max(s);
        let ties: Vec<usize> = (0..row.len()).filter(|&a| row[a] == best).collect();
        ties[rng.gen_range(0..ties.len())]
    }

    pub fn epsilon_greedy(&self, s: usize, rng: &mut dyn RngCore) -> usize {
        if rng.gen::<f64>() < self.epsilon {
            rng.gen_range(0..self.actions)
        } else {
            self.greedy(s, rng)
        }
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// One-step Q-learning backup; terminal transitions do not bootstrap.
pub fn q_update(table: &mut QTable, tr: &Transition, reward: f64) {
    let s = tr.state.discrete_index;
    let a = tr.action.action_id;
    let bootstrap = if tr.done { 0.0 } else { table.gamma * table.max(tr.next_state.discrete_index) };
    let i = s * table.actions + a;
    table.values[i] += table.alpha * (reward + bootstrap - table.values[i]);
}

/// Greedy policy over a Q-table, for rendering and evaluation.
pub struct GreedyPolicy<'a>(pub &'a QTable);

impl Policy for GreedyPolicy<'_> {
    fn act(&self, state: &State, rng: &mut dyn RngCore) -> ActionRec {
        ActionRec::new(self.0.greedy(state.discrete_index, rng))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Pilot,
    Training,
    Refining,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_steps: u64,
    pub success_rate: f64,
    pub mean_true_return: f64,
    pub queries_used: usize,
    pub functions_version: u64,
}

impl CurvePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.env_steps, self.success_rate, self.mean_true_return, self.queries_used, self.functions_version
        )
    }
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&p.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub phase: Phase,
    pub env_steps: u64,
    pub queries_used: usize,
    pub queries_skipped: usize,
    pub functions_version: u64,
    pub reward_updates: u64,
    pub curve: Vec<CurvePoint>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl Default for RunState {
    fn default() -> Self {
        Self {
            phase: Phase::Warmup,
            env_steps: 0,
            queries_used: 0,
            queries_skipped: 0,
            functions_version: 0,
            reward_updates: 0,
            curve: Vec::new(),
            warnings: Vec::new(),
            error: None,
        }
    }
}

/// Messages accepted by a running loop.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Label { query_id: u64, value: Preference },
    Refine { ticket: u64, feedback: String },
    Pause,
    Resume,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TicketStatus {
    Queued,
    Running,
    Succeeded { functions_version: u64 },
    Failed { message: String },
}

/// A human-targeted query waiting for an answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub query_id: u64,
    pub seg0: Segment,
    pub seg1: Segment,
    /// Env step at which the query was issued.
    pub created_at: u64,
}

/// Read-only view republished by the loop.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub state: RunState,
    pub pending: Vec<PendingQuery>,
    pub tickets: BTreeMap<u64, TicketStatus>,
    /// Recent and queried segments, by id.
    pub segments: BTreeMap<u64, Segment>,
    pub command_log: Vec<String>,
}

pub type SharedSnapshot = Arc<RwLock<RunSnapshot>>;

/// Optional wiring for a run.
#[derive(Default)]
pub struct RunOptions {
    pub run_dir: Option<PathBuf>,
    pub commands: Option<Receiver<Command>>,
    pub snapshot: Option<SharedSnapshot>,
    /// Overrides the gateway derived from the config.
    pub gateway: Option<Gateway>,
}

/// Serialized form of a program pool: each program is preceded by a
/// `#@ agent <i> version <v>` marker line.
pub fn pool_text(pool: &[EvalProgram]) -> String {
    let mut out = String::new();
    for p in pool {
        out.push_str(&format!("#@ agent {} version {}\n", p.agent_index, p.version));
        out.push_str(p.source.trim_end());
        out.push('\n');
    }
    out
}

pub fn parse_pool(text: &str, env: &EnvSpec) -> Result<Vec<EvalProgram>, String> {
    let mut out = Vec::new();
    let mut header: Option<(usize, u32)> = None;
    let mut body = String::new();
    let mut flush = |header: Option<(usize, u32)>, body: &mut String| -> Result<(), String> {
        if let Some((agent, version)) = header {
            let p = EvalProgram::parse_for(env, body).map_err(|d| format!("agent {agent}: {d}"))?;
            out.push(p.with_agent(agent, version));
        }
        body.clear();
        Ok(())
    };
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("#@ agent ") {
            flush(header, &mut body)?;
            let mut it = rest.split_whitespace();
            let agent = it.next().and_then(|s| s.parse().ok());
            let version = match (it.next(), it.next()) {
                (Some("version"), Some(v)) => v.parse().ok(),
                _ => None,
            };
            header = Some(agent.zip(version).ok_or_else(|| format!("bad marker line {line:?}"))?);
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    flush(header, &mut body)?;
    Ok(out)
}

/// One training run.
pub struct Run {
    cfg: RunConfig,
    env: EnvSpec,
    rng: ChaCha8Rng,
    state: RunState,
    q: QTable,
    ensemble: RewardEnsemble,
    buffer: ReplayBuffer,
    teacher: Teacher,
    gateway: Option<Gateway>,
    bundle: PromptBundle,
    pilot: Vec<PreferenceQuery>,

    transitions: Vec<Transition>,
    /// Interned `(features, action)` key of each stored transition.
    transition_keys: Vec<usize>,
    key_index: HashMap<(Vec<u64>, usize), usize>,
    key_samples: Vec<(State, ActionRec)>,
    /// Learned reward per key, already shifted.
    reward_table: Vec<f64>,
    reward_shift: f64,
    trained_clock: u64,

    current: State,
    episode_steps: usize,
    partial: Vec<(State, ActionRec)>,
    recent: VecDeque<Segment>,
    next_segment_id: u64,
    next_query_id: u64,

    pending: Vec<PendingQuery>,
    queried_segments: BTreeMap<u64, Segment>,
    tickets: BTreeMap<u64, TicketStatus>,
    command_log: Vec<String>,
    commands: Option<Receiver<Command>>,
    snapshot: Option<SharedSnapshot>,
    run_dir: Option<PathBuf>,
    paused: bool,
    stop_requested: bool,
}

fn feature_key(state: &State, action: ActionRec) -> (Vec<u64>, usize) {
    (state.features.iter().map(|f| f.to_bits()).collect(), action.action_id)
}

impl Run {
    pub fn new(cfg: &RunConfig, mut opts: RunOptions) -> Result<Self, RunError> {
        cfg.validate()?;
        let env = EnvSpec::by_name(&cfg.env_name).ok_or_else(|| EnvError::UnknownEnv(cfg.env_name.clone()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ensemble = RewardEnsemble::new(&env, cfg.ensemble_size, &mut rng)?;
        let q = QTable::new(&env, cfg.q_alpha, cfg.q_gamma, cfg.q_epsilon);
        if let Some(dir) = &opts.run_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
            fs::write(dir.join("curve.csv"), curve_csv(&[]))?;
        }
        let gateway = if cfg.teacher_kind.is_crowd() {
            let mut g = opts
                .gateway
                .take()
                .unwrap_or_else(|| Gateway::from_endpoints(&cfg.llm_endpoints, cfg.seed));
            if let (Some(dir), false) = (&opts.run_dir, g.is_stub()) {
                g = g.with_transcript(TranscriptLog::open(dir.join("transcripts.jsonl"))?);
            }
            Some(g)
        } else {
            None
        };
        let teacher = match cfg.teacher_kind {
            TeacherKind::Oracle => Teacher::Oracle,
            TeacherKind::Scripted => Teacher::Scripted(StochasticLabelConfig {
                equal_threshold: cfg.equal_threshold,
                skip_threshold: cfg.skip_threshold,
                mistake_rate: cfg.mistake_rate,
            }),
            TeacherKind::Human => Teacher::Human,
            // Built after the pilot phase.
            TeacherKind::CrowdDst | TeacherKind::CrowdMajority => Teacher::Crowd {
                pool: Arc::new(Vec::new()),
                phi: cfg.phi,
                mode: cfg.fusion_mode,
            },
        };
        let current = env.reset(cfg.seed);
        let run = Self {
            bundle: build_prompts(&env, cfg.user_expectations.as_deref()),
            cfg: cfg.clone(),
            rng,
            state: RunState::default(),
            q,
            ensemble,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            teacher,
            gateway,
            pilot: Vec::new(),
            transitions: Vec::new(),
            transition_keys: Vec::new(),
            key_index: HashMap::new(),
            key_samples: Vec::new(),
            reward_table: Vec::new(),
            reward_shift: 0.0,
            trained_clock: 0,
            current,
            episode_steps: 0,
            partial: Vec::new(),
            recent: VecDeque::new(),
            next_segment_id: 0,
            next_query_id: 0,
            pending: Vec::new(),
            queried_segments: BTreeMap::new(),
            tickets: BTreeMap::new(),
            command_log: Vec::new(),
            commands: opts.commands.take(),
            snapshot: opts.snapshot.take(),
            run_dir: opts.run_dir.take(),
            paused: false,
            stop_requested: false,
            env,
        };
        run.publish();
        Ok(run)
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn teacher(&self) -> &Teacher {
        &self.teacher
    }

    pub fn ensemble(&self) -> &RewardEnsemble {
        &self.ensemble
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn pending(&self) -> &[PendingQuery] {
        &self.pending
    }

    pub fn command_log(&self) -> &[String] {
        &self.command_log
    }

    pub fn curve_csv(&self) -> String {
        curve_csv(&self.state.curve)
    }

    /// Runs to completion: warmup, pilot, training until the step limit.
    pub fn run_to_end(&mut self) -> Result<RunState, RunError> {
        let result = self.advance_to(self.cfg.total_env_steps);
        self.finish(result)
    }

    fn finish(&mut self, result: Result<(), RunError>) -> Result<RunState, RunError> {
        if let Err(e) = &result {
            self.state.error = Some(e.to_string());
            warn!("run aborted: {e}");
        }
        self.state.phase = Phase::Done;
        // Late commands are answered so no ticket stays queued forever.
        self.drain_commands();
        let persisted = self.persist(true);
        self.publish();
        result?;
        persisted?;
        Ok(self.state.clone())
    }

    /// Steps the environment until `target` env steps (or a stop command).
    pub fn advance_to(&mut self, target: u64) -> Result<(), RunError> {
        let target = target.min(self.cfg.total_env_steps);
        if self.state.phase == Phase::Warmup && self.state.env_steps >= self.cfg.warmup_steps {
            self.end_warmup()?;
        }
        while self.state.env_steps < target && !self.stop_requested {
            self.env_step()?;
            let steps = self.state.env_steps;
            if self.state.phase == Phase::Warmup && steps >= self.cfg.warmup_steps {
                self.end_warmup()?;
            }
            if steps % self.cfg.curve_interval == 0 {
                self.sample_curve()?;
            }
            let boundary = steps % self.cfg.query_interval == 0;
            if self.state.phase == Phase::Training
                && steps >= self.cfg.warmup_steps
                && (steps - self.cfg.warmup_steps) % self.cfg.query_interval == 0
                && steps < self.cfg.total_env_steps
            {
                self.query_round()?;
            }
            if boundary || steps == target {
                self.drain_commands();
                while self.paused && !self.stop_requested {
                    self.wait_command();
                }
                self.publish();
            }
        }
        Ok(())
    }

    fn key_of(&mut self, state: &State, action: ActionRec) -> usize {
        let key = feature_key(state, action);
        if let Some(&k) = self.key_index.get(&key) {
            return k;
        }
        let k = self.key_samples.len();
        self.key_index.insert(key, k);
        self.key_samples.push((state.clone(), action));
        let r = self.ensemble.learned_reward(state, action) - self.reward_shift;
        self.reward_table.push(r);
        k
    }

    fn env_step(&mut self) -> Result<(), RunError> {
        let s = self.current.discrete_index;
        let action = if self.state.phase == Phase::Warmup {
            ActionRec::new(self.rng.gen_range(0..self.env.action_count))
        } else {
            ActionRec::new(self.q.epsilon_greedy(s, &mut self.rng))
        };
        let tr = self.env.step(&self.current, action)?;
        let key = self.key_of(&tr.state, action);
        if self.state.phase != Phase::Warmup {
            q_update(&mut self.q, &tr, self.reward_table[key]);
        }
        self.partial.push((tr.state.clone(), action));
        if self.partial.len() == self.cfg.segment_length {
            self.close_segment();
        }
        self.episode_steps += 1;
        self.current = if tr.done || self.episode_steps >= self.env.max_episode_steps {
            self.episode_steps = 0;
            self.env.reset(self.cfg.seed)
        } else {
            tr.next_state.clone()
        };
        self.transitions.push(tr);
        self.transition_keys.push(key);
        self.state.env_steps += 1;
        Ok(())
    }

    fn close_segment(&mut self) {
        let seg = Segment {
            steps: std::mem::take(&mut self.partial),
            env_id: self.env.name.clone(),
            segment_id: self.next_segment_id,
            policy_version: self.state.reward_updates,
        };
        self.next_segment_id += 1;
        self.recent.push_back(seg);
        while self.recent.len() > self.cfg.recent_segments.max(2) {
            self.recent.pop_front();
        }
    }

    fn random_pairs(&mut self, count: usize) -> Vec<(Segment, Segment)> {
        let n = self.recent.len();
        if n < 2 {
            return Vec::new();
        }
        (0..count)
            .map(|_| {
                let i = self.rng.gen_range(0..n);
                let mut j = self.rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (self.recent[i].clone(), self.recent[j].clone())
            })
            .collect()
    }

    /// Pilot labelling and crowd construction, then the training phase.
    fn end_warmup(&mut self) -> Result<(), RunError> {
        self.state.phase = Phase::Pilot;
        if self.cfg.teacher_kind.is_crowd() {
            self.build_crowd()?;
        }
        self.state.phase = Phase::Training;
        self.publish();
        info!("warmup finished after {} steps", self.state.env_steps);
        Ok(())
    }

    fn build_crowd(&mut self) -> Result<(), RunError> {
        let gateway = self.gateway.take().ok_or(TeacherError::EmptyPool)?;
        let result = self.build_crowd_with(&gateway);
        self.gateway = Some(gateway);
        result
    }

    fn build_crowd_with(&mut self, gateway: &Gateway) -> Result<(), RunError> {
        let n = self.cfg.crowd_size;
        let sampled = gateway.sample_functions(n, &self.bundle, &self.env, 0)?.programs;
        let pool = if self.cfg.pilot_count == 0 {
            sampled
        } else {
            let pairs = self.random_pairs(self.cfg.pilot_count);
            let expert = StochasticLabelConfig::default();
            let mut pilot = Vec::with_capacity(pairs.len());
            for (k, (a, b)) in pairs.into_iter().enumerate() {
                let mut q = PreferenceQuery::pending(k as u64, a, b)?;
                q.label = scripted_label(&q.seg0, &q.seg1, &expert, &mut self.rng)?;
                q.label_source = Some(LabelSource::Oracle);
                pilot.push(q);
            }
            self.pilot = pilot;
            let (bundle, env) = (&self.bundle, &self.env);
            let outcome = align_filter(sampled, &self.pilot, self.cfg.align_threshold, |round| {
                gateway
                    .sample_functions(n, bundle, env, round as u64)
                    .map(|r| r.programs)
                    .map_err(|e| TeacherError::Resample(e.to_string()))
            })?;
            if let Some(w) = outcome.warning {
                self.state.warnings.push(w);
            }
            info!(
                "alignment kept {} of {} programs after {} resample rounds",
                outcome.kept.len(),
                n,
                outcome.resample_rounds
            );
            outcome.kept
        };
        self.write_pool(&pool)?;
        self.teacher = Teacher::Crowd {
            pool: Arc::new(pool),
            phi: self.cfg.phi,
            mode: self.cfg.fusion_mode,
        };
        Ok(())
    }

    fn write_pool(&self, pool: &[EvalProgram]) -> Result<(), RunError> {
        if let Some(dir) = &self.run_dir {
            let name = format!("pool_v{}.evl", self.state.functions_version);
            fs::write(dir.join(name), pool_text(pool))?;
        }
        Ok(())
    }

    fn query_round(&mut self) -> Result<(), RunError> {
        let remaining = self.cfg.query_budget.saturating_sub(self.state.queries_used);
        if remaining > 0 {
            let candidates = self.random_pairs(self.cfg.candidate_pairs);
            let k = self.cfg.queries_per_round.min(remaining);
            let chosen = disagreement_select(&self.ensemble, &candidates, k, &mut self.rng);
            for idx in chosen {
                let (a, b) = candidates[idx].clone();
                self.issue_query(a, b)?;
            }
        }
        // Retrain only when some label changed since the last round.
        if self.buffer.labeled_count() > 0 && self.buffer.clock() != self.trained_clock {
            self.retrain(false)?;
        }
        Ok(())
    }

    fn issue_query(&mut self, seg0: Segment, seg1: Segment) -> Result<(), RunError> {
        let id = self.next_query_id;
        self.next_query_id += 1;
        let query = PreferenceQuery::pending(id, seg0, seg1)?;
        if matches!(self.teacher, Teacher::Human) {
            // Counted when issued: the budget caps questions put to the human.
            self.state.queries_used += 1;
            self.queried_segments.insert(query.seg0.segment_id, query.seg0.clone());
            self.queried_segments.insert(query.seg1.segment_id, query.seg1.clone());
            self.pending.push(PendingQuery {
                query_id: id,
                seg0: query.seg0.clone(),
                seg1: query.seg1.clone(),
                created_at: self.state.env_steps,
            });
            self.buffer.append(query)?;
            return Ok(());
        }
        match self.teacher.label(&query.seg0, &query.seg1, &mut self.rng)? {
            Some(label) => {
                self.state.queries_used += 1;
                self.buffer.append(query)?;
                self.buffer.answer(id, label, self.teacher.source())?;
            }
            None => self.state.queries_skipped += 1,
        }
        Ok(())
    }

    /// Trains the ensemble (from scratch when `fresh`), recomputes the
    /// learned reward of every stored transition and replays them.
    fn retrain(&mut self, fresh: bool) -> Result<(), RunError> {
        let cfg = TrainConfig {
            epochs: self.cfg.reward_epochs,
            lr: self.cfg.reward_lr,
            momentum: self.cfg.reward_momentum,
            batch: self.cfg.reward_batch,
        };
        let base = if fresh {
            RewardEnsemble::new(&self.env, self.cfg.ensemble_size, &mut self.rng)?
        } else {
            self.ensemble.clone()
        };
        let (trained, _) = train_ensemble(&base, &self.buffer, &cfg, &mut self.rng)?;
        self.ensemble = trained;
        self.state.reward_updates += 1;
        self.trained_clock = self.buffer.clock();
        self.relabel_transitions();
        let sweeps = if fresh {
            self.q.reset();
            RESET_REPLAY_SWEEPS
        } else {
            1
        };
        for _ in 0..sweeps {
            self.replay();
        }
        self.persist(false)?;
        Ok(())
    }

    /// Learned reward for every distinct `(features, action)`, shifted so the
    /// best observed pair scores 0.
    fn relabel_transitions(&mut self) {
        let raw: Vec<f64> = self
            .key_samples
            .iter()
            .map(|(s, a)| self.ensemble.learned_reward(s, *a))
            .collect();
        self.reward_shift = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !self.reward_shift.is_finite() {
            self.reward_shift = 0.0;
        }
        self.reward_table = raw.into_iter().map(|r| r - self.reward_shift).collect();
    }

    /// One sweep over stored transitions, newest first.
    fn replay(&mut self) {
        for i in (0..self.transitions.len()).rev() {
            let r = self.reward_table[self.transition_keys[i]];
            q_update(&mut self.q, &self.transitions[i], r);
        }
    }

    fn sample_curve(&mut self) -> Result<(), RunError> {
        let steps = self.state.env_steps;
        let mut eval_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ steps.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (mut successes, mut total) = (0usize, 0.0);
        for _ in 0..self.cfg.eval_episodes {
            let mut s = self.env.reset(self.cfg.seed);
            for _ in 0..self.env.max_episode_steps {
                let a = ActionRec::new(self.q.greedy(s.discrete_index, &mut eval_rng));
                let tr = self.env.step(&s, a)?;
                total += tr.true_reward;
                if tr.done {
                    successes += 1;
                    break;
                }
                s = tr.next_state;
            }
        }
        let n = self.cfg.eval_episodes.max(1) as f64;
        let point = CurvePoint {
            env_steps: steps,
            success_rate: successes as f64 / n,
            mean_true_return: total / n,
            queries_used: self.state.queries_used,
            functions_version: self.state.functions_version,
        };
        self.state.curve.push(point);
        if let Some(dir) = &self.run_dir {
            let mut f = OpenOptions::new().append(true).open(dir.join("curve.csv"))?;
            writeln!(f, "{}", point.csv_row())?;
        }
        Ok(())
    }

    /// Applies a human answer to a pending query.
    pub fn answer(&mut self, query_id: u64, value: Preference) -> Result<(), RunError> {
        let pos = self
            .pending
            .iter()
            .position(|p| p.query_id == query_id)
            .ok_or_else(|| match self.buffer.get(query_id) {
                Some(q) if q.is_labeled() => ModelError::AlreadyLabeled(query_id),
                _ => ModelError::UnknownQuery(query_id),
            })?;
        self.buffer.answer(query_id, value, LabelSource::Human)?;
        self.pending.remove(pos);
        Ok(())
    }

    /// Swaps in a new crowd pool, relabels the buffer with it, retrains the
    /// ensemble from scratch and rebuilds the Q-table from stored transitions.
    pub fn apply_refinement(&mut self, new_pool: Vec<EvalProgram>) -> Result<u64, RunError> {
        if self.state.phase == Phase::Done {
            return Err(RunError::Refinement("run is done".into()));
        }
        let (phi, mode) = match &self.teacher {
            Teacher::Crowd { phi, mode, .. } => (*phi, *mode),
            _ => return Err(RunError::Refinement("teacher has no function pool".into())),
        };
        if new_pool.is_empty() {
            return Err(RunError::Refinement("new pool is empty".into()));
        }
        let previous_phase = self.state.phase;
        self.state.phase = Phase::Refining;
        let source = self.teacher.source();
        let relabeled = self
            .buffer
            .relabel(source, |a, b| crowd_label(a, b, &new_pool, phi, mode));
        if let Err(e) = relabeled {
            self.state.phase = previous_phase;
            return Err(RunError::Refinement(e.to_string()));
        }
        self.teacher = Teacher::Crowd {
            pool: Arc::new(new_pool),
            phi,
            mode,
        };
        self.state.functions_version += 1;
        if let Some(pool) = self.teacher.pool().cloned() {
            self.write_pool(&pool)?;
        }
        if self.buffer.labeled_count() > 0 {
            self.retrain(true)?;
        }
        self.state.phase = previous_phase;
        Ok(self.state.functions_version)
    }

    /// Full refinement round: ask every agent to revise its program under
    /// `feedback`, then [`Run::apply_refinement`].
    pub fn refine(&mut self, feedback: &str) -> Result<u64, RunError> {
        if self.state.phase != Phase::Training {
            return Err(RunError::Refinement(format!("run is in phase {:?}", self.state.phase)));
        }
        let pool = self
            .teacher
            .pool()
            .cloned()
            .ok_or_else(|| RunError::Refinement("teacher has no function pool".into()))?;
        let gateway = self
            .gateway
            .as_ref()
            .ok_or_else(|| RunError::Refinement("no llm gateway".into()))?;
        let revised = gateway.refine_functions(&pool, feedback, &self.bundle, &self.env)?;
        self.apply_refinement(revised.programs)
    }

    fn log_command(&mut self, line: String) {
        if let Some(dir) = &self.run_dir {
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(dir.join("commands.log")) {
                let _ = writeln!(f, "{line}");
            }
        }
        self.command_log.push(line);
    }

    fn handle(&mut self, cmd: Command) {
        let steps = self.state.env_steps;
        match cmd {
            Command::Label { query_id, value } => {
                let outcome = self.answer(query_id, value);
                let result = match &outcome {
                    Ok(()) => "ok".to_string(),
                    Err(e) => format!("error: {e}"),
                };
                self.log_command(format!("{steps} label query={query_id} value={value} {result}"));
            }
            Command::Refine { ticket, feedback } => {
                self.tickets.insert(ticket, TicketStatus::Running);
                self.publish();
                let status = match self.refine(&feedback) {
                    Ok(v) => TicketStatus::Succeeded { functions_version: v },
                    Err(e) => TicketStatus::Failed { message: e.to_string() },
                };
                let result = match &status {
                    TicketStatus::Succeeded { functions_version } => format!("ok version={functions_version}"),
                    TicketStatus::Failed { message } => format!("error: {message}"),
                    _ => String::new(),
                };
                self.tickets.insert(ticket, status);
                self.log_command(format!("{steps} refine ticket={ticket} feedback={feedback:?} {result}"));
            }
            Command::Pause => {
                self.paused = true;
                self.log_command(format!("{steps} pause"));
            }
            Command::Resume => {
                self.paused = false;
                self.log_command(format!("{steps} resume"));
            }
            Command::Stop => {
                self.stop_requested = true;
                self.log_command(format!("{steps} stop"));
            }
        }
    }

    fn drain_commands(&mut self) {
        loop {
            let next = match &self.commands {
                Some(rx) => rx.try_recv(),
                None => return,
            };
            match next {
                Ok(cmd) => self.handle(cmd),
                Err(TryRecvError::Empty) => return,
                Err(TryRecvError::Disconnected) => {
                    self.commands = None;
                    return;
                }
            }
        }
    }

    fn wait_command(&mut self) {
        self.publish();
        let next = match &self.commands {
            Some(rx) => rx.recv().ok(),
            None => None,
        };
        match next {
            Some(cmd) => self.handle(cmd),
            // Nobody can resume us any more.
            None => {
                self.commands = None;
                self.paused = false;
            }
        }
    }

    fn publish(&self) {
        let Some(shared) = &self.snapshot else { return };
        let mut segments: BTreeMap<u64, Segment> = self.queried_segments.clone();
        for s in &self.recent {
            segments.insert(s.segment_id, s.clone());
        }
        let snap = RunSnapshot {
            state: self.state.clone(),
            pending: self.pending.clone(),
            tickets: self.tickets.clone(),
            segments,
            command_log: self.command_log.clone(),
        };
        if let Ok(mut guard) = shared.write() {
            *guard = snap;
        }
    }

    fn persist(&self, finished: bool) -> Result<(), RunError> {
        let Some(dir) = &self.run_dir else { return Ok(()) };
        fs::write(dir.join("buffer.json"), serde_json::to_string(&self.buffer)?)?;
        fs::write(dir.join("ensemble.json"), serde_json::to_string(&self.ensemble.to_checkpoint())?)?;
        if finished {
            fs::write(dir.join("state.json"), serde_json::to_string_pretty(&self.state)?)?;
        }
        Ok(())
    }
}

/// Final state plus the learning-curve CSV.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: RunState,
    pub curve_csv: String,
}

pub fn run_experiment(cfg: &RunConfig, opts: RunOptions) -> Result<RunOutcome, RunError> {
    let mut run = Run::new(cfg, opts)?;
    let state = run.run_to_end()?;
    Ok(RunOutcome {
        curve_csv: curve_csv(&state.curve),
        state,
    })
}

/// Reads a finished run back from its directory.
pub fn load_run_dir(dir: &Path) -> Result<(RunConfig, RunState), RunError> {
    let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    let state: RunState = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
    Ok((cfg, state))
}
