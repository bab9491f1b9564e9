//! Crowd sampling of evaluation programs from chat-completion endpoints.
//!
//! Each agent gets a conversation: the prompt bundle, then the model's reply.
//! A reply that does not contain a parsable program is answered with the
//! diagnostic and the model tries again, up to the endpoint's `max_retries`.
//! Agents that exhaust their retries are restarted with a fresh conversation
//! while the crowd's total attempt budget lasts.
//!
//! With no endpoints configured the gateway runs on [`StubBank`], a
//! deterministic in-process stand-in that never touches the network.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::dsl::EvalProgram;
use crate::envs::EnvSpec;

pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_TIMEOUT_SECS: f64 = 60.0;
pub const API_KEY_PREFIX: &str = "PREFCLM_API_KEY_";

/// Number of HTTP completion requests sent by this process.
static HTTP_REQUESTS: AtomicUsize = AtomicUsize::new(0);

pub fn http_requests_sent() -> usize {
    HTTP_REQUESTS.load(Ordering::SeqCst)
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("feedback text is empty")]
    EmptyFeedback,
    #[error("pool is empty")]
    EmptyPool,
    #[error("need at least one agent")]
    NoAgents,
    #[error("endpoint {url} unreachable: {message}")]
    Unreachable { url: String, message: String },
    #[error("malformed completion from {url}: {message}")]
    BadResponse { url: String, message: String },
    #[error("could not obtain {wanted} valid programs within {attempts} attempts ({missing} missing)")]
    Unobtainable {
        wanted: usize,
        missing: usize,
        attempts: usize,
    },
    #[error("transcript: {0}")]
    Transcript(#[from] std::io::Error),
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

/// One chat-completion endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointDescriptor {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the API key. Empty means
    /// `PREFCLM_API_KEY_<MODEL_NAME>`.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

impl EndpointDescriptor {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: String::new(),
            temperature: DEFAULT_TEMPERATURE,
            max_retries: DEFAULT_MAX_RETRIES,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn key_var(&self) -> String {
        if !self.api_key_env.is_empty() {
            return self.api_key_env.clone();
        }
        let suffix: String = self
            .model_name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        format!("{API_KEY_PREFIX}{suffix}")
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(self.key_var()).ok().filter(|k| !k.is_empty())
    }

    /// Problems with the descriptor, as `(field, message)`.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.base_url.trim().is_empty() {
            out.push(("base_url", "must not be empty".to_string()));
        }
        if self.model_name.trim().is_empty() {
            out.push(("model_name", "must not be empty".to_string()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            out.push(("temperature", format!("must be finite and >= 0, got {}", self.temperature)));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            out.push(("timeout_secs", format!("must be positive, got {}", self.timeout_secs)));
        }
        out
    }
}

/// Everything that goes into one agent's request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub task_description: String,
    pub env_abstraction: String,
    pub user_expectations: Option<String>,
    pub prior_function_source: Option<String>,
    pub feedback_text: Option<String>,
    pub error_trace: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

const SYSTEM_TEXT: &str = "You write evaluation programs that score short trajectory segments of a \
reinforcement-learning agent. Higher scores mean better behaviour. Programs are written in a small \
expression language described below, not in Python. Reply with exactly one program inside one fenced \
code block.";

/// Compact language reference included in every prompt.
pub fn dsl_reference(schema: &[String]) -> String {
    format!(
        "A program is zero or more `let NAME = EXPR in` bindings followed by `return EXPR`.\n\
Values are scalars or per-step series over the segment. Arithmetic, comparisons (1 true, 0 false), \
`and`, `or`, `not` work elementwise and broadcast scalars over series. The returned value must be a scalar.\n\
Per-step series: {features}, action_id, t (step index), is_last.\n\
Scalars: <feature>_first, <feature>_last for every feature above, and numeric literals.\n\
Reducers (series -> scalar): mean, sum, min, max, std, var, first, last, count_if (number of non-zero steps), \
progress (relative decrease from first to last value), len().\n\
Elementwise: abs(x), exp(x), min(a, b), max(a, b), clamp(x, lo, hi), gauss(x, mu, sigma), sigmoid(x, k), \
delta(series) (step-to-step difference, 0 at the first step), over_steps(x).\n\
Division by (near) zero yields 0. Comments start with #.",
        features = schema.join(", ")
    )
}

/// Deterministic prompt bundle for initial sampling.
pub fn build_prompts(env: &EnvSpec, expectations: Option<&str>) -> PromptBundle {
    let task = env.task_description().trim().to_string();
    let abstraction = env.abstraction().to_string();
    let mut user = String::new();
    user.push_str("## Task\n");
    user.push_str(&task);
    user.push_str("\n\n## Environment\n");
    user.push_str(&abstraction);
    if !abstraction.ends_with('\n') {
        user.push('\n');
    }
    let expectations = expectations.map(str::trim).filter(|e| !e.is_empty());
    if let Some(e) = expectations {
        user.push_str("\n## Expectations\n");
        user.push_str(e);
        user.push('\n');
    }
    user.push_str("\n## Evaluation language\n");
    user.push_str(&dsl_reference(&env.feature_schema));
    user.push_str(
        "\n\n## Requirements\n\
- Per-step evaluation: judge every state-action pair on its own merits.\n\
- Whole-segment evaluation: also judge the segment as a whole, such as overall progress and wasted steps.\n\
- Combine both into one scalar where a larger value means a better segment.\n\
- Answer with a single program, ending in `return <expr>`, inside one fenced code block.\n",
    );
    PromptBundle {
        system_text: SYSTEM_TEXT.to_string(),
        user_text: user,
        task_description: task,
        env_abstraction: abstraction,
        user_expectations: expectations.map(str::to_string),
        prior_function_source: None,
        feedback_text: None,
        error_trace: None,
    }
}

impl PromptBundle {
    /// Refinement request for one agent's current program.
    pub fn for_refinement(&self, prior_source: &str, feedback: &str) -> Self {
        let mut b = self.clone();
        b.user_text = format!(
            "{}\n## Current program\n```\n{}\n```\n\n## User feedback\n{}\n\n\
Revise the current program so that its scores reflect this feedback. Keep what still applies. \
Answer with the complete revised program in one fenced code block.\n",
            self.user_text,
            prior_source.trim_end(),
            feedback.trim()
        );
        b.prior_function_source = Some(prior_source.to_string());
        b.feedback_text = Some(feedback.to_string());
        b
    }

    /// Follow-up carrying a parse diagnostic.
    pub fn with_error(&self, trace: &str) -> Self {
        let mut b = self.clone();
        b.error_trace = Some(trace.to_string());
        b
    }

    pub fn error_text(&self) -> Option<String> {
        self.error_trace.as_ref().map(|trace| {
            format!(
                "Your program could not be used:\n{trace}\n\n\
Fix the problem and reply with the corrected complete program in one fenced code block."
            )
        })
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage::new("system", self.system_text.clone()),
            ChatMessage::new("user", self.user_text.clone()),
        ]
    }
}

/// Contents of the first fenced code block, without the language tag.
pub fn extract_fenced(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// A chat-completion transport.
pub trait ChatClient: Send + Sync {
    fn complete(&self, endpoint: &EndpointDescriptor, messages: &[ChatMessage]) -> Result<String, GatewayError>;
}

/// Chat-completions over HTTP.
#[derive(Clone, Debug, Default)]
pub struct HttpChatClient;

impl ChatClient for HttpChatClient {
    fn complete(&self, endpoint: &EndpointDescriptor, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build();
        let mut req = agent.post(&url).set("Content-Type", "application/json");
        if let Some(key) = endpoint.api_key() {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({
            "model": endpoint.model_name,
            "messages": messages,
            "temperature": endpoint.temperature,
        });
        HTTP_REQUESTS.fetch_add(1, Ordering::SeqCst);
        let resp = req.send_json(body).map_err(|e| GatewayError::Unreachable {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let value: serde_json::Value = resp.into_json().map_err(|e| GatewayError::BadResponse {
            url: url.clone(),
            message: e.to_string(),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadResponse {
                url,
                message: "missing choices[0].message.content".into(),
            })
    }
}

/// JSON-lines log of every exchange. API keys never reach it.
#[derive(Debug)]
pub struct TranscriptLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptLog {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn record(&self, endpoint: &EndpointDescriptor, agent: usize, messages: &[ChatMessage], reply: &Result<String, String>) {
        let key = endpoint.api_key();
        let redact = |s: &str| match &key {
            Some(k) => s.replace(k.as_str(), "[REDACTED]"),
            None => s.to_string(),
        };
        let entry = json!({
            "agent_index": agent,
            "base_url": endpoint.base_url,
            "model": endpoint.model_name,
            "api_key_env": endpoint.key_var(),
            "messages": messages.iter().map(|m| json!({"role": m.role, "content": redact(&m.content)})).collect::<Vec<_>>(),
            "response": reply.as_ref().ok().map(|r| redact(r)),
            "error": reply.as_ref().err().map(|e| redact(e)),
        });
        if let Ok(mut f) = self.file.lock() {
            // Logging is best-effort; a full disk must not abort sampling.
            let _ = writeln!(f, "{entry}");
        }
    }
}

/// Deterministic crowd of template programs.
///
/// Agent `i` draws its weights and criteria from a generator seeded with
/// `(seed, round, i)`, so the same inputs always give the same source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubBank {
    pub seed: u64,
}

/// Velocity penalty appended on "slow" feedback.
const STUB_VELOCITY_TERM: &str = "0.5 * mean(velocity)";
const STUB_SMOOTH_TERM: &str = "0.25 * count_if(delta(action_id) != 0)";
const STUB_IDLE_TERM: &str = "0.5 * count_if(velocity == 0)";

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl StubBank {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Fresh program for `agent_index` in sampling round `round`.
    pub fn program(&self, agent_index: usize, round: u64) -> String {
        let mix = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(round.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            .wrapping_add(agent_index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        let progress_w = round2(rng.gen_range(0.5..1.5));
        let goal_w = round2(rng.gen_range(8.0..20.0));
        let near_w = round2(rng.gen_range(0.0..0.3));
        let idle_w = round2(rng.gen_range(0.0..0.5));
        let reset_jump = rng.gen_range(2..=4);
        let mut src = format!(
            "# stub agent {agent_index}\n\
let d = delta(dist_goal) in\n\
let moved_closer = sum(-d * (d < {reset_jump})) in\n\
let arrivals = count_if(d > {reset_jump}) in\n\
return {progress_w} * moved_closer + {goal_w} * arrivals"
        );
        if rng.gen_bool(0.6) {
            src.push_str(&format!(" - {near_w} * mean(dist_goal)"));
        }
        if rng.gen_bool(0.5) {
            src.push_str(&format!(" - {idle_w} * count_if(velocity == 0)"));
        }
        src.push('\n');
        src
    }

    /// Revision of `prior` under `feedback`. Keywords select extra terms;
    /// feedback without a known keyword leaves the source unchanged.
    pub fn refine(&self, prior: &str, feedback: &str) -> String {
        let lower = feedback.to_lowercase();
        let mut terms = Vec::new();
        if lower.contains("slow") {
            terms.push(STUB_VELOCITY_TERM);
        }
        if lower.contains("smooth") {
            terms.push(STUB_SMOOTH_TERM);
        }
        if lower.contains("idle") || lower.contains("wait") {
            terms.push(STUB_IDLE_TERM);
        }
        let mut out = prior.trim_end().to_string();
        for t in terms {
            out.push_str(" - ");
            out.push_str(t);
        }
        out.push('\n');
        out
    }
}

/// Where programs come from.
#[derive(Clone)]
pub enum Backend {
    Stub(StubBank),
    Remote {
        endpoints: Vec<EndpointDescriptor>,
        client: Arc<dyn ChatClient>,
    },
}

/// Result of a sampling call.
#[derive(Clone, Debug)]
pub struct SampleReport {
    pub programs: Vec<EvalProgram>,
    /// Completions that failed to parse and were answered with a diagnostic.
    pub retries: usize,
    /// Total completion requests.
    pub attempts: usize,
    /// Agents restarted with a fresh conversation.
    pub resamples: usize,
}

pub struct Gateway {
    backend: Backend,
    transcript: Option<TranscriptLog>,
}

enum AgentTask<'a> {
    Sample,
    Refine(&'a EvalProgram),
}

struct AgentOutcome {
    program: Option<EvalProgram>,
    attempts: usize,
    retries: usize,
}

impl Gateway {
    pub fn stub(seed: u64) -> Self {
        Self {
            backend: Backend::Stub(StubBank::new(seed)),
            transcript: None,
        }
    }

    pub fn remote(endpoints: Vec<EndpointDescriptor>, client: Arc<dyn ChatClient>) -> Self {
        Self {
            backend: Backend::Remote { endpoints, client },
            transcript: None,
        }
    }

    /// HTTP endpoints when any are configured, the stub bank otherwise.
    pub fn from_endpoints(endpoints: &[EndpointDescriptor], seed: u64) -> Self {
        if endpoints.is_empty() {
            Self::stub(seed)
        } else {
            Self::remote(endpoints.to_vec(), Arc::new(HttpChatClient))
        }
    }

    pub fn with_transcript(mut self, log: TranscriptLog) -> Self {
        self.transcript = Some(log);
        self
    }

    pub fn is_stub(&self) -> bool {
        matches!(self.backend, Backend::Stub(_))
    }

    /// Endpoint serving agent `i`: round-robin over the list.
    fn endpoint_for(endpoints: &[EndpointDescriptor], agent: usize) -> &EndpointDescriptor {
        &endpoints[agent % endpoints.len()]
    }

    /// One conversation: the request plus up to `max_retries` corrections.
    fn converse(
        &self,
        client: &dyn ChatClient,
        endpoint: &EndpointDescriptor,
        agent: usize,
        bundle: &PromptBundle,
        env: &EnvSpec,
        max_attempts: usize,
    ) -> Result<AgentOutcome, GatewayError> {
        let mut messages = bundle.messages();
        let mut attempts = 0;
        while attempts < max_attempts {
            attempts += 1;
            let reply = client.complete(endpoint, &messages);
            if let Some(log) = &self.transcript {
                log.record(endpoint, agent, &messages, &reply.as_ref().map(String::clone).map_err(|e| e.to_string()));
            }
            let reply = reply?;
            let parsed = match extract_fenced(&reply) {
                Some(src) => EvalProgram::parse_for(env, src).map_err(|d| d.to_string()),
                None => Err("the reply contained no fenced code block".to_string()),
            };
            match parsed {
                Ok(p) => {
                    return Ok(AgentOutcome {
                        program: Some(p),
                        attempts,
                        retries: attempts - 1,
                    })
                }
                Err(trace) => {
                    let follow = bundle.with_error(&trace);
                    messages.push(ChatMessage::new("assistant", reply));
                    messages.push(ChatMessage::new("user", follow.error_text().unwrap_or_default()));
                }
            }
        }
        Ok(AgentOutcome {
            program: None,
            attempts,
            retries: attempts.saturating_sub(1),
        })
    }

    fn run_agents(
        &self,
        endpoints: &[EndpointDescriptor],
        client: &dyn ChatClient,
        bundles: &[PromptBundle],
        tasks: &[AgentTask<'_>],
        fresh_bundle: &PromptBundle,
        env: &EnvSpec,
    ) -> Result<SampleReport, GatewayError> {
        let n = tasks.len();
        let budget: usize = (0..n)
            .map(|i| 1 + Self::endpoint_for(endpoints, i).max_retries as usize)
            .sum();
        // First pass: every agent's conversation, concurrently.
        let first: Vec<Result<AgentOutcome, GatewayError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n)
                .map(|i| {
                    let ep = Self::endpoint_for(endpoints, i);
                    let bundle = &bundles[i];
                    scope.spawn(move || {
                        self.converse(client, ep, i, bundle, env, 1 + ep.max_retries as usize)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent thread panicked"))
                .collect()
        });
        let mut programs: Vec<Option<EvalProgram>> = Vec::with_capacity(n);
        let (mut attempts, mut retries, mut resamples) = (0, 0, 0);
        for (i, r) in first.into_iter().enumerate() {
            let out = r?;
            attempts += out.attempts;
            retries += out.retries;
            programs.push(out.program.map(|p| match tasks[i] {
                AgentTask::Sample => p.with_agent(i, 0),
                AgentTask::Refine(prior) => p.with_agent(prior.agent_index, prior.version + 1),
            }));
        }
        // Second pass: restart failed agents from scratch while budget remains.
        for i in 0..n {
            while programs[i].is_none() && attempts < budget {
                let ep = Self::endpoint_for(endpoints, i);
                let cap = (1 + ep.max_retries as usize).min(budget - attempts);
                resamples += 1;
                let out = self.converse(client, ep, i, fresh_bundle, env, cap)?;
                attempts += out.attempts;
                retries += out.retries;
                let agent = match tasks[i] {
                    AgentTask::Sample => i,
                    AgentTask::Refine(prior) => prior.agent_index,
                };
                // A restarted member is a fresh program, so its version resets.
                programs[i] = out.program.map(|p| p.with_agent(agent, 0));
            }
        }
        let missing = programs.iter().filter(|p| p.is_none()).count();
        if missing > 0 {
            return Err(GatewayError::Unobtainable {
                wanted: n,
                missing,
                attempts,
            });
        }
        Ok(SampleReport {
            programs: programs.into_iter().flatten().collect(),
            retries,
            attempts,
            resamples,
        })
    }

    /// `n` validated programs. `round` distinguishes repeated sampling calls
    /// (it only matters for the stub bank).
    pub fn sample_functions(
        &self,
        n: usize,
        bundle: &PromptBundle,
        env: &EnvSpec,
        round: u64,
    ) -> Result<SampleReport, GatewayError> {
        if n == 0 {
            return Err(GatewayError::NoAgents);
        }
        match &self.backend {
            Backend::Stub(bank) => {
                let programs = (0..n)
                    .map(|i| {
                        EvalProgram::parse_for(env, &bank.program(i, round))
                            .map(|p| p.with_agent(i, 0))
                            .map_err(|d| GatewayError::BadResponse {
                                url: "stub".into(),
                                message: d.to_string(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SampleReport {
                    programs,
                    retries: 0,
                    attempts: n,
                    resamples: 0,
                })
            }
            Backend::Remote { endpoints, client } => {
                if endpoints.is_empty() {
                    return Err(GatewayError::NoAgents);
                }
                let tasks: Vec<AgentTask> = (0..n).map(|_| AgentTask::Sample).collect();
                let bundles = vec![bundle.clone(); n];
                self.run_agents(endpoints, client.as_ref(), &bundles, &tasks, bundle, env)
            }
        }
    }

    /// Asks every agent to revise its program under `feedback`. Pool order
    /// and size are preserved; successful revisions bump `version`, and an
    /// agent that cannot produce a revision is resampled with version 0.
    pub fn refine_functions(
        &self,
        pool: &[EvalProgram],
        feedback: &str,
        bundle: &PromptBundle,
        env: &EnvSpec,
    ) -> Result<SampleReport, GatewayError> {
        if feedback.trim().is_empty() {
            return Err(GatewayError::EmptyFeedback);
        }
        if pool.is_empty() {
            return Err(GatewayError::EmptyPool);
        }
        match &self.backend {
            Backend::Stub(bank) => {
                let programs = pool
                    .iter()
                    .map(|p| {
                        EvalProgram::parse_for(env, &bank.refine(&p.source, feedback))
                            .map(|q| q.with_agent(p.agent_index, p.version + 1))
                            .map_err(|d| GatewayError::BadResponse {
                                url: "stub".into(),
                                message: d.to_string(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SampleReport {
                    attempts: programs.len(),
                    programs,
                    retries: 0,
                    resamples: 0,
                })
            }
            Backend::Remote { endpoints, client } => {
                if endpoints.is_empty() {
                    return Err(GatewayError::NoAgents);
                }
                let tasks: Vec<AgentTask> = pool.iter().map(AgentTask::Refine).collect();
                let bundles: Vec<PromptBundle> =
                    pool.iter().map(|p| bundle.for_refinement(&p.source, feedback)).collect();
                self.run_agents(endpoints, client.as_ref(), &bundles, &tasks, bundle, env)
            }
        }
    }
}
