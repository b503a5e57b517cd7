//! Uniform interface for evaluating the likelihood of an observed action
//! given a goal and a belief, with two backends: the exact symbolic planner
//! and a remote completion endpoint scored by token log-probabilities.
//!
//! The remote protocol is deliberately minimal: `POST /v1/logprobs` with
//! `{"prompt": str, "continuation": str}` returns
//! `{"token_logprobs": [float]}`. Any completion server can satisfy it; a
//! local stub wrapping the symbolic policy ships in [`StubServer`] so the
//! HTTP path can be exercised end to end.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Action, EntityId, Location, ObjectClass, PlannerConfig, Predicate};
use crate::planner::{PlannerError, PolicyEngine, StateAbstraction, SMOOTHING_FLOOR};
use crate::world::WorldLayout;

/// Environment variable overriding the remote endpoint URL.
pub const ORACLE_URL_ENV: &str = "TOM_ORACLE_URL";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("action {} is not applicable in the queried state", .0.surface_form())]
    ActionInapplicable(Action),
    #[error("remote backend requires an endpoint url")]
    MissingEndpoint,
    #[error("endpoint unreachable after {attempts} attempts: {detail}")]
    EndpointUnreachable { attempts: u32, detail: String },
    #[error("malformed logprob response: {0}")]
    MalformedLogprobResponse(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

/// Which backend evaluates likelihoods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleBackend {
    Symbolic,
    Remote,
}

/// Backend selection plus transport knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleConfig {
    pub backend: OracleBackend,
    pub endpoint_url: Option<String>,
    pub timeout_ms: u64,
    pub retry_count: u32,
    pub smoothing_floor: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            backend: OracleBackend::Symbolic,
            endpoint_url: None,
            timeout_ms: 30_000,
            retry_count: 2,
            smoothing_floor: SMOOTHING_FLOOR,
        }
    }
}

impl OracleConfig {
    /// Endpoint URL with the `TOM_ORACLE_URL` override applied.
    pub fn resolved_endpoint(&self) -> Option<String> {
        std::env::var(ORACLE_URL_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| self.endpoint_url.clone())
    }
}

/// One likelihood request: the summarized state, the belief as an ordered
/// location list, the goal, and the action to score.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyQuery {
    pub state_summary: BTreeSet<Predicate>,
    pub belief_locations: Vec<Location>,
    pub goal: ObjectClass,
    pub action: Action,
}

impl PolicyQuery {
    /// Belief locations in canonical order, deduplicated. Likelihoods are
    /// invariant under reordering of the input list.
    pub fn canonical_locations(&self) -> Vec<Location> {
        let set: BTreeSet<Location> = self.belief_locations.iter().cloned().collect();
        set.into_iter().collect()
    }
}

/// A scored likelihood: the renormalized probability used for inference and
/// the backend's raw (pre-normalization) value kept for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Likelihood {
    pub probability: f64,
    pub raw: f64,
}

/// Evaluator of action likelihoods under a goal/belief hypothesis.
pub trait ActionOracle: Send + Sync {
    fn action_likelihood(&self, query: &PolicyQuery) -> Result<Likelihood, OracleError>;

    /// Short identifier for reports.
    fn id(&self) -> String;
}

// ---------------------------------------------------------------------------
// Prompt codec
// ---------------------------------------------------------------------------

/// Renders the exact four-line prompt for a query. Byte-stable: predicates
/// and belief locations appear in canonical order.
pub fn render_prompt(query: &PolicyQuery) -> String {
    let state = if query.state_summary.is_empty() {
        "none".to_owned()
    } else {
        query
            .state_summary
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let locations = query.canonical_locations();
    let belief = if locations.is_empty() {
        "none".to_owned()
    } else {
        locations
            .iter()
            .map(|l| match l {
                Location::InContainer(e) | Location::OnSurface(e) => e.to_string(),
                Location::InRoom(r) => r.to_string(),
                Location::HeldByAgent => "held".to_owned(),
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "goal: {}\nstate: {}\nbelief (possible locations the person suspects the {} could be): {}\naction: ",
        query.goal, state, query.goal, belief
    )
}

/// Inverts [`render_prompt`] given the layout (needed to resolve bare entity
/// ids back into container/surface locations).
pub fn parse_prompt(
    layout: &WorldLayout,
    prompt: &str,
    continuation: &str,
) -> Result<PolicyQuery, OracleError> {
    let mut goal: Option<ObjectClass> = None;
    let mut state_summary = BTreeSet::new();
    let mut belief_locations = Vec::new();
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix("goal: ") {
            goal = Some(ObjectClass::new(rest.trim()));
        } else if let Some(rest) = line.strip_prefix("state: ") {
            if rest.trim() != "none" {
                for chunk in split_predicate_list(rest) {
                    let pred: Predicate = chunk
                        .parse()
                        .map_err(|_| OracleError::InvalidQuery(format!("bad predicate {chunk}")))?;
                    state_summary.insert(pred);
                }
            }
        } else if let Some(rest) = line.strip_prefix("belief (") {
            let list = rest
                .split_once("): ")
                .map(|(_, l)| l)
                .ok_or_else(|| OracleError::InvalidQuery("malformed belief line".into()))?;
            if list.trim() != "none" {
                for id in list.split(", ") {
                    let id = EntityId::new(id.trim());
                    let loc = if layout.container(&id).is_some() {
                        Location::InContainer(id)
                    } else if layout.surface(&id).is_some() {
                        Location::OnSurface(id)
                    } else {
                        return Err(OracleError::InvalidQuery(format!(
                            "unknown belief location {id}"
                        )));
                    };
                    belief_locations.push(loc);
                }
            }
        }
    }
    let goal = goal.ok_or_else(|| OracleError::InvalidQuery("missing goal line".into()))?;
    let action = parse_action_surface(continuation.trim())
        .ok_or_else(|| OracleError::InvalidQuery(format!("bad action {continuation}")))?;
    Ok(PolicyQuery {
        state_summary,
        belief_locations,
        goal,
        action,
    })
}

/// Splits `In(a, b), IsOpen(c)` on top-level commas only.
fn split_predicate_list(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                if chars.peek() == Some(&' ') {
                    chars.next();
                }
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

/// Parses the paper-style action surface form (`walktowards kitchen`,
/// `open fridge`, `about to open oven`, `grab apple_1`, `idle`).
pub fn parse_action_surface(s: &str) -> Option<Action> {
    if s == "idle" {
        return Some(Action::Idle);
    }
    if let Some(rest) = s.strip_prefix("about to open ") {
        return Some(Action::AboutToOpen(EntityId::new(rest)));
    }
    if let Some(rest) = s.strip_prefix("walktowards ") {
        return Some(if crate::domain::ROOM_KINDS.contains(&rest) {
            Action::walk_room(rest)
        } else {
            Action::walk_entity(rest)
        });
    }
    if let Some(rest) = s.strip_prefix("open ") {
        return Some(Action::Open(EntityId::new(rest)));
    }
    if let Some(rest) = s.strip_prefix("close ") {
        return Some(Action::Close(EntityId::new(rest)));
    }
    if let Some(rest) = s.strip_prefix("grab ") {
        return rest.parse().ok().map(Action::Grab);
    }
    None
}

// ---------------------------------------------------------------------------
// Symbolic backend
// ---------------------------------------------------------------------------

/// Exact backend: delegates to the planner with a belief reconstructed as
/// uniform over the query's locations.
pub struct SymbolicOracle {
    engine: PolicyEngine,
    floor: f64,
}

impl SymbolicOracle {
    pub fn new(layout: &WorldLayout, planner_cfg: PlannerConfig) -> Self {
        Self::with_floor(layout, planner_cfg, SMOOTHING_FLOOR)
    }

    pub fn with_floor(layout: &WorldLayout, planner_cfg: PlannerConfig, floor: f64) -> Self {
        Self {
            engine: PolicyEngine::new(layout, planner_cfg),
            floor,
        }
    }

    pub fn engine(&self) -> &PolicyEngine {
        &self.engine
    }
}

impl ActionOracle for SymbolicOracle {
    fn action_likelihood(&self, query: &PolicyQuery) -> Result<Likelihood, OracleError> {
        let locations = query.canonical_locations();
        if locations.is_empty() {
            return Err(OracleError::InvalidQuery(
                "belief locations must be nonempty".into(),
            ));
        }
        let abs = StateAbstraction::from_predicates(self.engine.layout(), &query.state_summary)?;
        let dist = self
            .engine
            .action_distribution(&abs, &locations, None, &query.goal)?;
        let p = dist
            .probability(&query.action)
            .ok_or_else(|| OracleError::ActionInapplicable(query.action.clone()))?;
        Ok(Likelihood {
            probability: p.max(self.floor),
            raw: p,
        })
    }

    fn id(&self) -> String {
        "symbolic".to_owned()
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct LogprobRequest<'a> {
    prompt: &'a str,
    continuation: &'a str,
}

#[derive(Deserialize)]
struct LogprobResponse {
    token_logprobs: Vec<f64>,
}

/// Remote backend: renders the prompt, requests token log-probabilities for
/// every applicable action string, and renormalizes across them.
pub struct RemoteOracle {
    endpoint: String,
    cfg: OracleConfig,
    engine: PolicyEngine,
    client: reqwest::blocking::Client,
}

impl RemoteOracle {
    pub fn new(layout: &WorldLayout, cfg: OracleConfig) -> Result<Self, OracleError> {
        let endpoint = cfg.resolved_endpoint().ok_or(OracleError::MissingEndpoint)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| OracleError::EndpointUnreachable {
                attempts: 0,
                detail: e.to_string(),
            })?;
        Ok(Self {
            endpoint,
            // Used only to enumerate applicable actions; planner constants
            // are irrelevant for that.
            engine: PolicyEngine::new(layout, PlannerConfig::default()),
            cfg,
            client,
        })
    }

    fn logprob_sum(&self, prompt: &str, continuation: &str) -> Result<f64, OracleError> {
        let url = format!("{}/v1/logprobs", self.endpoint.trim_end_matches('/'));
        let attempts = self.cfg.retry_count + 1;
        let mut last_err = String::new();
        for _ in 0..attempts {
            let sent = self
                .client
                .post(&url)
                .json(&LogprobRequest { prompt, continuation })
                .send();
            match sent {
                Ok(resp) => match resp.json::<LogprobResponse>() {
                    Ok(body) => {
                        if body.token_logprobs.is_empty() {
                            last_err = "bad body: empty token_logprobs".to_owned();
                            continue;
                        }
                        return Ok(body.token_logprobs.iter().sum());
                    }
                    Err(e) => {
                        last_err = format!("bad body: {e}");
                        continue;
                    }
                },
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            }
        }
        if last_err.starts_with("bad body") {
            Err(OracleError::MalformedLogprobResponse(last_err))
        } else {
            Err(OracleError::EndpointUnreachable {
                attempts,
                detail: last_err,
            })
        }
    }
}

impl ActionOracle for RemoteOracle {
    fn action_likelihood(&self, query: &PolicyQuery) -> Result<Likelihood, OracleError> {
        let locations = query.canonical_locations();
        if locations.is_empty() {
            return Err(OracleError::InvalidQuery(
                "belief locations must be nonempty".into(),
            ));
        }
        let abs = StateAbstraction::from_predicates(self.engine.layout(), &query.state_summary)?;
        let applicable = self.engine.applicable_actions(&abs)?;
        let canonical_action = match &query.action {
            Action::AboutToOpen(c) => Action::Open(c.clone()),
            other => other.clone(),
        };
        if !applicable.contains(&canonical_action) {
            return Err(OracleError::ActionInapplicable(query.action.clone()));
        }
        let prompt = render_prompt(&PolicyQuery {
            belief_locations: locations,
            ..query.clone()
        });
        let mut weights = Vec::with_capacity(applicable.len());
        let mut queried_raw = 0.0;
        for action in &applicable {
            let logprob = self.logprob_sum(&prompt, &action.surface_form())?;
            let weight = logprob.exp();
            if action == &canonical_action {
                queried_raw = weight;
            }
            weights.push(weight);
        }
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(OracleError::MalformedLogprobResponse(format!(
                "weights sum to {total}"
            )));
        }
        Ok(Likelihood {
            probability: (queried_raw / total).max(self.cfg.smoothing_floor),
            raw: queried_raw,
        })
    }

    fn id(&self) -> String {
        format!("remote({})", self.endpoint)
    }
}

// ---------------------------------------------------------------------------
// Local stub server
// ---------------------------------------------------------------------------

/// A minimal HTTP server exposing the symbolic policy behind the
/// `/v1/logprobs` schema, for contract tests and offline smoke runs.
pub struct StubServer {
    addr: String,
    shutdown: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    /// Spawns the server on an ephemeral localhost port.
    pub fn spawn(layout: WorldLayout, planner_cfg: PlannerConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = format!("http://{}", listener.local_addr()?);
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            let oracle = SymbolicOracle::new(&layout, planner_cfg);
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let _ = handle_connection(stream, &layout, &oracle);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(Self {
            addr,
            shutdown,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> &str {
        &self.addr
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

#[derive(Deserialize)]
struct StubRequest {
    prompt: String,
    continuation: String,
}

fn handle_connection(
    mut stream: TcpStream,
    layout: &WorldLayout,
    oracle: &SymbolicOracle,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let response_body = match serde_json::from_slice::<StubRequest>(&body) {
        Ok(req) => match parse_prompt(layout, &req.prompt, &req.continuation)
            .and_then(|q| oracle.action_likelihood(&q))
        {
            Ok(lik) => serde_json::json!({ "token_logprobs": [lik.probability.ln()] }),
            // Inapplicable or unparsable continuations score as negligible.
            Err(_) => serde_json::json!({ "token_logprobs": [f64::MIN_POSITIVE.ln()] }),
        },
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    let payload = response_body.to_string();
    let response = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        payload.len(),
        payload
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()?;
    Ok(())
}
