//! Mock chat backends for tests and offline runs.
//!
//! * [`FixtureBackend`] replays canned text verbatim, optionally per role.
//! * [`ScriptedBackend`] pops a scripted sequence of results, for retry and
//!   failure-path tests.
//! * [`CorrelatedAgentBackend`] simulates an Observer/Debater/Judge chain
//!   whose three per-dimension estimates share a configurable pairwise
//!   correlation; the judge averages them. Used to measure the deliberation
//!   variance-reduction bound.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::Rng;

use super::backend::{BackendError, BackendResponse, ChatBackend, TokenUsage};
use super::{AgentRole, VlmRequest};

/// Default synthetic token usage, matching the representative per-call
/// footprint used for cost projections.
pub fn default_mock_usage() -> TokenUsage {
    TokenUsage {
        input: 778,
        output: 278,
    }
}

/// Returns canned responses verbatim, optionally keyed by agent role.
pub struct FixtureBackend {
    by_role: BTreeMap<&'static str, String>,
    default: Option<String>,
    usage: TokenUsage,
    calls: AtomicU64,
}

fn role_name(role: AgentRole) -> &'static str {
    match role {
        AgentRole::Observer => "observer",
        AgentRole::Debater => "debater",
        AgentRole::Judge => "judge",
        AgentRole::Single => "single",
        AgentRole::Miner => "miner",
    }
}

impl FixtureBackend {
    /// Same response for every request.
    pub fn constant(text: &str) -> Self {
        Self {
            by_role: BTreeMap::new(),
            default: Some(text.to_string()),
            usage: default_mock_usage(),
            calls: AtomicU64::new(0),
        }
    }

    /// Role-keyed fixture map; build with [`FixtureBackend::with`].
    pub fn by_role() -> Self {
        Self {
            by_role: BTreeMap::new(),
            default: None,
            usage: default_mock_usage(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn with(mut self, role: AgentRole, text: &str) -> Self {
        self.by_role.insert(role_name(role), text.to_string());
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatBackend for FixtureBackend {
    fn complete(&self, request: &VlmRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = self
            .by_role
            .get(role_name(request.role_tag))
            .or(self.default.as_ref())
            .ok_or_else(|| {
                BackendError::Content(format!(
                    "no fixture for role {:?}",
                    request.role_tag
                ))
            })?;
        Ok(BackendResponse {
            text: text.clone(),
            usage: self.usage,
            truncated: false,
        })
    }

    fn name(&self) -> &'static str {
        "mock-fixture"
    }
}

/// Pops one scripted result per call; repeats the final transport error if
/// the script runs dry after `always_transport`.
pub struct ScriptedBackend {
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    exhausted: Option<BackendError>,
    usage: TokenUsage,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(script: Vec<Result<String, BackendError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            exhausted: None,
            usage: default_mock_usage(),
            calls: AtomicU64::new(0),
        }
    }

    /// Fails every call with the same transport error.
    pub fn always_transport(message: &str) -> Self {
        Self {
            script: Mutex::new(VecDeque::new()),
            exhausted: Some(BackendError::Transport(message.to_string())),
            usage: default_mock_usage(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _request: &VlmRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let next = self.script.lock().expect("script lock").pop_front();
        match next {
            Some(Ok(text)) => Ok(BackendResponse {
                text,
                usage: self.usage,
                truncated: false,
            }),
            Some(Err(error)) => Err(error),
            None => match &self.exhausted {
                Some(error) => Err(error.clone()),
                None => Err(BackendError::Content("script exhausted".to_string())),
            },
        }
    }

    fn name(&self) -> &'static str {
        "mock-scripted"
    }
}

/// Pulls the dimension names out of a rendered scoring prompt. The
/// templates list one dimension per line as `- Name: description (...)`
/// under a `Dimensions:` heading.
pub fn dimension_names_from_prompt(prompt: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut in_block = false;
    for line in prompt.lines() {
        if line.trim_end() == "Dimensions:" {
            in_block = true;
            continue;
        }
        if in_block {
            if let Some(rest) = line.strip_prefix("- ") {
                if let Some(colon) = rest.find(':') {
                    names.push(rest[..colon].to_string());
                    continue;
                }
            }
            break;
        }
    }
    names
}

/// Image ids carried by a request's `image://` references.
pub fn image_ids_from_request(request: &VlmRequest) -> Vec<String> {
    request
        .images
        .iter()
        .filter_map(|image| image.synthetic_id().map(str::to_string))
        .collect()
}

/// Simulates a deliberation chain with correlated per-agent noise.
///
/// For pair (a, b), dimension j, and role r, the agent's latent estimate is
/// `base + sigma_s * (sqrt(rho) * z_common + sqrt(1 - rho) * z_role)`, with
/// all z's derived deterministically from the image ids. The judge averages
/// the three role estimates, so the aggregate variance is
/// `sigma_s^2 * (1 + 2 rho) / 3` by construction of the correlation model.
pub struct CorrelatedAgentBackend {
    pub base: f64,
    pub sigma_s: f64,
    pub rho: f64,
    pub seed: u64,
    calls: AtomicU64,
}

impl CorrelatedAgentBackend {
    pub fn new(base: f64, sigma_s: f64, rho: f64, seed: u64) -> Self {
        Self {
            base,
            sigma_s,
            rho,
            seed,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn standard_normal(&self, label: &str, context: &[u64]) -> f64 {
        let mut rng = crate::seed::derive_rng(self.seed, label, context);
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Latent estimate of `role` for image `id` on dimension `dim_index`.
    fn estimate(&self, id: &str, dim_index: usize, role: AgentRole) -> f64 {
        let id_hash = crate::seed::derive_seed(self.seed, id, &[]);
        let z_common = self.standard_normal("agent.common", &[id_hash, dim_index as u64]);
        let role_index = match role {
            AgentRole::Observer => 0u64,
            AgentRole::Debater => 1,
            AgentRole::Judge => 2,
            _ => 3,
        };
        let z_role =
            self.standard_normal("agent.role", &[id_hash, dim_index as u64, role_index]);
        let noise = self.rho.sqrt() * z_common + (1.0 - self.rho).sqrt() * z_role;
        (self.base + self.sigma_s * noise).clamp(1.0, 10.0)
    }

    fn judge_score(&self, id: &str, dim_index: usize) -> f64 {
        let sum: f64 = [AgentRole::Observer, AgentRole::Debater, AgentRole::Judge]
            .iter()
            .map(|&role| self.estimate(id, dim_index, role))
            .sum();
        sum / 3.0
    }
}

impl ChatBackend for CorrelatedAgentBackend {
    fn complete(&self, request: &VlmRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let dims = dimension_names_from_prompt(&request.prompt);
        let ids = image_ids_from_request(request);
        let text = match request.role_tag {
            AgentRole::Observer => {
                let body: Vec<String> = dims
                    .iter()
                    .map(|d| format!("\"{d}\":{{\"image_a\":\"seen\",\"image_b\":\"seen\"}}"))
                    .collect();
                format!("{{\"observations\":{{{}}}}}", body.join(","))
            }
            AgentRole::Debater => {
                let body: Vec<String> = dims
                    .iter()
                    .map(|d| {
                        format!(
                            "\"{d}\":{{\"argument_for_a\":\"a\",\"argument_for_b\":\"b\",\
                             \"uncertainties\":\"u\"}}"
                        )
                    })
                    .collect();
                format!("{{\"debates\":{{{}}}}}", body.join(","))
            }
            AgentRole::Judge => {
                if ids.len() != 2 {
                    return Err(BackendError::Content(
                        "correlated-agent judge expects two images".to_string(),
                    ));
                }
                let score_map = |id: &str| -> String {
                    let entries: Vec<String> = dims
                        .iter()
                        .enumerate()
                        .map(|(j, d)| format!("\"{d}\":{:.9}", self.judge_score(id, j)))
                        .collect();
                    format!("{{{}}}", entries.join(","))
                };
                format!(
                    "{{\"image_a_scores\":{},\"image_b_scores\":{},\"winner\":\"equal\"}}",
                    score_map(&ids[0]),
                    score_map(&ids[1])
                )
            }
            other => {
                return Err(BackendError::Content(format!(
                    "correlated-agent backend has no behavior for role {other:?}"
                )))
            }
        };
        Ok(BackendResponse {
            text,
            usage: default_mock_usage(),
            truncated: false,
        })
    }

    fn name(&self) -> &'static str {
        "mock-correlated-agents"
    }
}
