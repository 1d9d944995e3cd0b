//! VLM client with retry, cost accounting, and a usage counter.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, ChatBackend, TokenUsage};
use super::{ScoringError, VlmRequest};

/// Capped exponential backoff policy for transient transport failures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    fn delay_for_attempt(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(16);
        Duration::from_millis((self.base_delay_ms.saturating_mul(factor)).min(self.max_delay_ms))
    }
}

/// Per-token pricing used by the cost counter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostRates {
    pub input_per_million_usd: f64,
    pub output_per_million_usd: f64,
}

impl Default for CostRates {
    fn default() -> Self {
        Self {
            input_per_million_usd: 2.50,
            output_per_million_usd: 10.00,
        }
    }
}

/// Running usage totals across all calls made through one client.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSnapshot {
    pub calls: u64,
    pub attempts: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
}

#[derive(Default)]
struct Counter {
    calls: AtomicU64,
    attempts: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
}

/// Shareable client wrapping a [`ChatBackend`] with retries and accounting.
pub struct VlmClient {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    rates: CostRates,
    counter: Counter,
}

impl VlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, retry: RetryPolicy, rates: CostRates) -> Self {
        Self {
            backend,
            retry,
            rates,
            counter: Counter::default(),
        }
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    /// Issues one completion, retrying transient transport failures with
    /// capped exponential backoff. Credential and content failures are
    /// returned immediately.
    pub fn complete(&self, request: &VlmRequest) -> Result<String, ScoringError> {
        let mut last_transport = String::new();
        for attempt in 0..self.retry.max_attempts.max(1) {
            self.counter.attempts.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(request) {
                Ok(response) => {
                    self.record(response.usage);
                    if response.truncated {
                        return Err(ScoringError::Content(
                            "response truncated by output-length limit".to_string(),
                        ));
                    }
                    return Ok(response.text);
                }
                Err(BackendError::Transport(message)) => {
                    last_transport = message;
                    if attempt + 1 < self.retry.max_attempts {
                        let delay = self.retry.delay_for_attempt(attempt);
                        if !delay.is_zero() {
                            std::thread::sleep(delay);
                        }
                    }
                }
                Err(BackendError::Credential(message)) => {
                    return Err(ScoringError::Credential(message))
                }
                Err(BackendError::Content(message)) => {
                    return Err(ScoringError::Content(message))
                }
            }
        }
        Err(ScoringError::Transport {
            attempts: self.retry.max_attempts,
            message: last_transport,
        })
    }

    fn record(&self, usage: TokenUsage) {
        self.counter.calls.fetch_add(1, Ordering::Relaxed);
        self.counter
            .input_tokens
            .fetch_add(usage.input, Ordering::Relaxed);
        self.counter
            .output_tokens
            .fetch_add(usage.output, Ordering::Relaxed);
    }

    pub fn cost_snapshot(&self) -> CostSnapshot {
        let input_tokens = self.counter.input_tokens.load(Ordering::Relaxed);
        let output_tokens = self.counter.output_tokens.load(Ordering::Relaxed);
        CostSnapshot {
            calls: self.counter.calls.load(Ordering::Relaxed),
            attempts: self.counter.attempts.load(Ordering::Relaxed),
            input_tokens,
            output_tokens,
            cost_usd: input_tokens as f64 * self.rates.input_per_million_usd / 1e6
                + output_tokens as f64 * self.rates.output_per_million_usd / 1e6,
        }
    }
}
