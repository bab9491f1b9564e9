//! Shared domain types: segments, preference queries, the replay buffer and
//! the run configuration.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::EndpointDescriptor;

/// One observation of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub env_id: String,
    /// Values ordered as in the environment's feature schema.
    pub features: Vec<f64>,
    pub discrete_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionRec {
    pub action_id: usize,
}

impl ActionRec {
    pub fn new(action_id: usize) -> Self {
        Self { action_id }
    }
}

/// A fixed-length run of `(state, action)` pairs; the unit a teacher compares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub steps: Vec<(State, ActionRec)>,
    pub env_id: String,
    pub segment_id: u64,
    pub policy_version: u64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.steps.iter().map(|(s, _)| s)
    }

    /// Checks the length and single-environment invariants.
    pub fn validate(&self, length: usize) -> Result<(), ModelError> {
        if self.steps.len() != length {
            return Err(ModelError::SegmentLength {
                expected: length,
                actual: self.steps.len(),
            });
        }
        if let Some((s, _)) = self.steps.iter().find(|(s, _)| s.env_id != self.env_id) {
            return Err(ModelError::MixedEnv {
                expected: self.env_id.clone(),
                actual: s.env_id.clone(),
            });
        }
        Ok(())
    }
}

/// A preference label. `First` prefers `seg0` (0), `Second` prefers `seg1` (1).
///
/// Encoded in JSON as the bare number 0, 0.5 or 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Preference {
    First,
    Equal,
    Second,
}

impl Preference {
    pub fn value(self) -> f64 {
        match self {
            Preference::First => 0.0,
            Preference::Equal => 0.5,
            Preference::Second => 1.0,
        }
    }

    pub fn from_value(value: f64) -> Result<Self, ModelError> {
        if value == 0.0 {
            Ok(Preference::First)
        } else if value == 0.5 {
            Ok(Preference::Equal)
        } else if value == 1.0 {
            Ok(Preference::Second)
        } else {
            Err(ModelError::InvalidPreference(value))
        }
    }

    /// The label for the same pair with the segments swapped.
    pub fn flip(self) -> Self {
        match self {
            Preference::First => Preference::Second,
            Preference::Equal => Preference::Equal,
            Preference::Second => Preference::First,
        }
    }
}

impl TryFrom<f64> for Preference {
    type Error = ModelError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Preference::from_value(value)
    }
}

impl From<Preference> for f64 {
    fn from(p: Preference) -> f64 {
        p.value()
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Scripted,
    Crowd,
    Majority,
    Human,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceQuery {
    pub query_id: u64,
    pub seg0: Segment,
    pub seg1: Segment,
    pub label: Option<Preference>,
    pub label_source: Option<LabelSource>,
    /// Logical timestamp of the last labelling.
    pub labeled_at: Option<u64>,
}

impl PreferenceQuery {
    pub fn pending(query_id: u64, seg0: Segment, seg1: Segment) -> Result<Self, ModelError> {
        if seg0.env_id != seg1.env_id {
            return Err(ModelError::MixedEnv {
                expected: seg0.env_id,
                actual: seg1.env_id,
            });
        }
        Ok(Self {
            query_id,
            seg0,
            seg1,
            label: None,
            label_source: None,
            labeled_at: None,
        })
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate query id {0}")]
    DuplicateQuery(u64),
    #[error("unknown query id {0}")]
    UnknownQuery(u64),
    #[error("query {0} is already labeled")]
    AlreadyLabeled(u64),
    #[error("preference must be 0, 0.5 or 1, got {0}")]
    InvalidPreference(f64),
    #[error("segment has {actual} steps, expected {expected}")]
    SegmentLength { expected: usize, actual: usize },
    #[error("environment mismatch: expected {expected}, found {actual}")]
    MixedEnv { expected: String, actual: String },
    #[error("relabel aborted at query {query_id}: {message}")]
    RelabelFailed { query_id: u64, message: String },
}

pub const DEFAULT_BUFFER_CAPACITY: usize = 10_000;

/// Append-only store of preference queries with oldest-first eviction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    queries: VecDeque<PreferenceQuery>,
    capacity: usize,
    clock: u64,
    #[serde(skip)]
    ids: HashSet<u64>,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_BUFFER_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            queries: VecDeque::new(),
            capacity: capacity.max(1),
            clock: 0,
            ids: HashSet::new(),
        }
    }

    /// Restores the id index after deserialization.
    pub fn reindex(&mut self) {
        self.ids = self.queries.iter().map(|q| q.query_id).collect();
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn iter(&self) -> impl Iterator<Item = &PreferenceQuery> {
        self.queries.iter()
    }

    pub fn labeled(&self) -> impl Iterator<Item = &PreferenceQuery> {
        self.queries.iter().filter(|q| q.is_labeled())
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled().count()
    }

    pub fn get(&self, query_id: u64) -> Option<&PreferenceQuery> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Appends `query`, evicting the oldest entry when over capacity.
    pub fn append(&mut self, mut query: PreferenceQuery) -> Result<(), ModelError> {
        if self.ids.contains(&query.query_id) {
            return Err(ModelError::DuplicateQuery(query.query_id));
        }
        if query.label.is_some() && query.labeled_at.is_none() {
            query.labeled_at = Some(self.tick());
        }
        self.ids.insert(query.query_id);
        self.queries.push_back(query);
        while self.queries.len() > self.capacity {
            if let Some(old) = self.queries.pop_front() {
                self.ids.remove(&old.query_id);
            }
        }
        Ok(())
    }

    /// Answers a pending query. Labeled queries cannot be changed this way.
    pub fn answer(
        &mut self,
        query_id: u64,
        label: Preference,
        source: LabelSource,
    ) -> Result<(), ModelError> {
        let stamp = self.clock + 1;
        let query = self
            .queries
            .iter_mut()
            .find(|q| q.query_id == query_id)
            .ok_or(ModelError::UnknownQuery(query_id))?;
        if query.label.is_some() {
            return Err(ModelError::AlreadyLabeled(query_id));
        }
        query.label = Some(label);
        query.label_source = Some(source);
        query.labeled_at = Some(stamp);
        self.clock = stamp;
        Ok(())
    }

    /// Replaces every stored label with `labeler`'s output. Pending queries
    /// are left alone. On any labeler failure the buffer is unchanged.
    pub fn relabel<E, F>(&mut self, source: LabelSource, mut labeler: F) -> Result<usize, ModelError>
    where
        E: fmt::Display,
        F: FnMut(&Segment, &Segment) -> Result<Preference, E>,
    {
        let mut fresh = Vec::with_capacity(self.queries.len());
        for (idx, q) in self.queries.iter().enumerate() {
            if q.is_labeled() {
                let label = labeler(&q.seg0, &q.seg1).map_err(|e| ModelError::RelabelFailed {
                    query_id: q.query_id,
                    message: e.to_string(),
                })?;
                fresh.push((idx, label));
            }
        }
        let stamp = self.tick();
        for &(idx, label) in &fresh {
            let q = &mut self.queries[idx];
            q.label = Some(label);
            q.label_source = Some(source);
            q.labeled_at = Some(stamp);
        }
        Ok(fresh.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Dst,
    Majority,
    /// Only the first program in the pool labels.
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Oracle,
    Scripted,
    CrowdDst,
    CrowdMajority,
    Human,
}

impl TeacherKind {
    pub fn is_crowd(self) -> bool {
        matches!(self, TeacherKind::CrowdDst | TeacherKind::CrowdMajority)
    }
}

/// A single field-level configuration problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid configuration: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<FieldError>);

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env_name: String,
    pub segment_length: usize,
    pub query_budget: usize,
    pub crowd_size: usize,
    pub phi: f64,
    pub align_threshold: f64,
    /// Number of expert-labelled pilot pairs; 0 disables the alignment filter.
    pub pilot_count: usize,
    pub ensemble_size: usize,
    pub fusion_mode: FusionMode,
    pub teacher_kind: TeacherKind,
    pub seed: u64,
    /// Empty means the deterministic in-process stub crowd.
    pub llm_endpoints: Vec<EndpointDescriptor>,
    pub user_expectations: Option<String>,

    pub equal_threshold: f64,
    pub skip_threshold: f64,
    pub mistake_rate: f64,

    pub total_env_steps: u64,
    pub warmup_steps: u64,
    pub query_interval: u64,
    pub queries_per_round: usize,
    pub candidate_pairs: usize,
    pub recent_segments: usize,
    pub curve_interval: u64,
    pub eval_episodes: usize,

    pub reward_epochs: usize,
    pub reward_lr: f64,
    pub reward_momentum: f64,
    pub reward_batch: usize,

    pub q_alpha: f64,
    pub q_gamma: f64,
    pub q_epsilon: f64,

    pub buffer_capacity: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env_name: "grid_walker".into(),
            segment_length: 10,
            query_budget: 200,
            crowd_size: 10,
            phi: 0.3,
            align_threshold: 0.5,
            pilot_count: 15,
            ensemble_size: 3,
            fusion_mode: FusionMode::Dst,
            teacher_kind: TeacherKind::Oracle,
            seed: 0,
            llm_endpoints: Vec::new(),
            user_expectations: None,
            equal_threshold: 0.0,
            skip_threshold: 0.0,
            mistake_rate: 0.0,
            total_env_steps: 50_000,
            warmup_steps: 2_000,
            query_interval: 1_000,
            queries_per_round: 10,
            candidate_pairs: 50,
            recent_segments: 200,
            curve_interval: 500,
            eval_episodes: 20,
            reward_epochs: 50,
            reward_lr: 1e-3,
            reward_momentum: 0.9,
            reward_batch: 32,
            q_alpha: 0.5,
            q_gamma: 0.95,
            q_epsilon: 0.1,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.into(),
                message,
            })
        };
        if crate::envs::EnvSpec::by_name(&self.env_name).is_none() {
            bad("env_name", format!("unknown environment {:?}", self.env_name));
        }
        if self.segment_length < 2 {
            bad("segment_length", "must be at least 2".into());
        }
        if let Some(spec) = crate::envs::EnvSpec::by_name(&self.env_name) {
            if self.segment_length > spec.max_episode_steps {
                bad(
                    "segment_length",
                    format!("must not exceed max_episode_steps ({})", spec.max_episode_steps),
                );
            }
        }
        if self.crowd_size < 1 {
            bad("crowd_size", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.phi) {
            bad("phi", format!("must lie in [0, 1], got {}", self.phi));
        }
        if !(-1.0..=1.0).contains(&self.align_threshold) {
            bad(
                "align_threshold",
                format!("must lie in [-1, 1], got {}", self.align_threshold),
            );
        }
        if self.ensemble_size < 1 {
            bad("ensemble_size", "must be at least 1".into());
        }
        if !(self.equal_threshold >= 0.0) {
            bad("equal_threshold", "must be non-negative".into());
        }
        if !(self.skip_threshold >= 0.0) {
            bad("skip_threshold", "must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.mistake_rate) {
            bad("mistake_rate", "must lie in [0, 1]".into());
        }
        match (self.teacher_kind, self.fusion_mode) {
            (TeacherKind::CrowdDst, FusionMode::Majority) => bad(
                "fusion_mode",
                "crowd_dst teacher needs fusion_mode dst or single".into(),
            ),
            (TeacherKind::CrowdMajority, m) if m != FusionMode::Majority => bad(
                "fusion_mode",
                "crowd_majority teacher needs fusion_mode majority".into(),
            ),
            _ => {}
        }
        // Pilot pairs are drawn from warmup segments.
        if self.teacher_kind.is_crowd()
            && self.pilot_count > 0
            && self.warmup_steps < 2 * self.segment_length as u64
        {
            bad(
                "warmup_steps",
                "a crowd teacher with pilot pairs needs at least two warmup segments".into(),
            );
        }
        if self.query_interval == 0 {
            bad("query_interval", "must be positive".into());
        }
        if self.curve_interval == 0 {
            bad("curve_interval", "must be positive".into());
        }
        if self.reward_batch == 0 {
            bad("reward_batch", "must be positive".into());
        }
        if !(self.reward_lr > 0.0) {
            bad("reward_lr", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.q_alpha) {
            bad("q_alpha", "must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.q_gamma) {
            bad("q_gamma", "must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.q_epsilon) {
            bad("q_epsilon", "must lie in [0, 1]".into());
        }
        if self.buffer_capacity == 0 {
            bad("buffer_capacity", "must be positive".into());
        }
        for (i, ep) in self.llm_endpoints.iter().enumerate() {
            if !(ep.temperature >= 0.0) {
                bad(
                    &format!("llm_endpoints[{i}].temperature"),
                    "must be non-negative".into(),
                );
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errs))
        }
    }
}
